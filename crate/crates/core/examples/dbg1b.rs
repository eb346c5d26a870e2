//! debug: isolate the dev-vs-test gap for task-1 AQ model.
use asklearn::eval::{predict, test_corpora};
use asklearn::kb::{generate_kb, KbGenConfig, Split, TaskId};
use asklearn::memnet::{episode_text, MemConfig, Model, Tokenizer};
use asklearn::simulator::{generate_dataset, Corpus, DatasetSpec, Regime, StudentScript};
use asklearn::train_offline::{train_rbi, TrainConfig};

fn acc(model: &Model, corpus: &Corpus, tok: &Tokenizer) -> f64 {
    let mut hits = 0usize;
    let mut n = 0usize;
    for ep in &corpus.episodes {
        let Some(text) = episode_text(ep, tok) else { continue };
        let meta = ep.meta.as_ref().unwrap();
        n += 1;
        hits += predict(model, &text).is_some_and(|p| meta.answers.contains(&p)) as usize;
    }
    hits as f64 / n.max(1) as f64
}

fn main() {
    let kb = generate_kb(&KbGenConfig::default()).unwrap();
    let tok = Tokenizer::new(&kb);
    let task = TaskId::new(1).unwrap();
    let spec = |split, n, seed, script| DatasetSpec {
        task,
        regime: Regime::Aq,
        split,
        n_episodes: n,
        seed,
        script,
    };
    let train =
        generate_dataset(&spec(Split::Train, 2000, 7, StudentScript::default()), &kb).unwrap();
    let dev =
        generate_dataset(&spec(Split::Dev, 500, 7, StudentScript::default()), &kb).unwrap();
    let cfg = TrainConfig {
        mem: MemConfig { context_window: 1, ..Default::default() },
        epochs: 20,
        seed: 1,
        ..Default::default()
    };
    let run = train_rbi(&train, &dev, &kb, &cfg).unwrap();
    let (_, test_aq) = test_corpora(task, &kb, 500, 99).unwrap();
    // Note: generate_dataset forces the perfect script on the test split.
    let dev_like_test =
        generate_dataset(&spec(Split::Dev, 500, 99, StudentScript::perfect()), &kb).unwrap();
    let train_like_test =
        generate_dataset(&spec(Split::Train, 500, 99, StudentScript::perfect()), &kb).unwrap();
    println!("dev (dev scheme, script 0.5):      {:.3}", acc(&run.model, &dev, &tok));
    println!("dev (dev scheme, perfect script):  {:.3}", acc(&run.model, &dev_like_test, &tok));
    println!("train scheme, perfect script:      {:.3}", acc(&run.model, &train_like_test, &tok));
    println!("test (test scheme, perfect):       {:.3}", acc(&run.model, &test_aq, &tok));
}
