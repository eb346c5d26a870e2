//! debug: task-1 accuracy by question direction for QA- and AQ-trained models.
use asklearn::eval::{predict, test_corpora};
use asklearn::kb::{generate_kb, KbGenConfig, Split, TaskId};
use asklearn::memnet::{episode_text, MemConfig, Model, Tokenizer};
use asklearn::simulator::{generate_dataset, Corpus, DatasetSpec, Regime, StudentScript};
use asklearn::train_offline::{train_rbi, TrainConfig};

fn acc_by_dir(model: &Model, corpus: &Corpus, tok: &Tokenizer) -> (f64, f64, usize, usize) {
    let (mut ch, mut nh, mut ct, mut nt) = (0usize, 0usize, 0usize, 0usize);
    for ep in &corpus.episodes {
        let Some(text) = episode_text(ep, tok) else { continue };
        let meta = ep.meta.as_ref().unwrap();
        let head_to_tail = meta.answers.iter().all(|a| !a.starts_with("The_"));
        let ok = predict(model, &text).is_some_and(|p| meta.answers.contains(&p));
        if head_to_tail {
            nh += 1;
            ch += ok as usize;
        } else {
            nt += 1;
            ct += ok as usize;
        }
    }
    (ch as f64 / nh.max(1) as f64, ct as f64 / nt.max(1) as f64, nh, nt)
}

fn main() {
    let kb = generate_kb(&KbGenConfig::default()).unwrap();
    let tok = Tokenizer::new(&kb);
    let task = TaskId::new(1).unwrap();
    let (test_qa, test_aq) = test_corpora(task, &kb, 500, 99).unwrap();
    for regime in [Regime::Qa, Regime::Aq] {
        let spec = |split, n| DatasetSpec {
            task,
            regime,
            split,
            n_episodes: n,
            seed: 7,
            script: StudentScript::default(),
        };
        let train = generate_dataset(&spec(Split::Train, 2000), &kb).unwrap();
        let dev = generate_dataset(&spec(Split::Dev, 500), &kb).unwrap();
        let cfg = TrainConfig {
            mem: MemConfig { context_window: 1, ..Default::default() },
            epochs: 20,
            seed: 1,
            ..Default::default()
        };
        let run = train_rbi(&train, &dev, &kb, &cfg).unwrap();
        for (name, corpus) in [("dev", &dev), ("TestQA", &test_qa), ("TestAQ", &test_aq)] {
            let (h, t, nh, nt) = acc_by_dir(&run.model, corpus, &tok);
            println!(
                "Train{} {name}: head_to_tail {h:.3} (n={nh})  tail_to_head {t:.3} (n={nt})",
                regime.name()
            );
        }
    }
}
