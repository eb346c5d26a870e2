//! debug: TestModelAQ sanity for tasks 2 and 4.
use asklearn::eval::{eval_matrix, test_corpora};
use asklearn::kb::{generate_kb, KbGenConfig, Split, TaskId};
use asklearn::memnet::MemConfig;
use asklearn::simulator::{generate_dataset, DatasetSpec, Regime, StudentScript};
use asklearn::train_offline::{train_question_asker, train_rbi, TrainConfig};
use indexmap::IndexMap;

fn main() {
    let kb = generate_kb(&KbGenConfig::default()).unwrap();
    for t in [2u8, 4] {
        let task = TaskId::new(t).unwrap();
        let (test_qa, test_aq) = test_corpora(task, &kb, 500, 99).unwrap();
        let cfg = TrainConfig {
            mem: MemConfig { context_window: 1, ..Default::default() },
            epochs: 20,
            seed: 1,
            ..Default::default()
        };
        let mut models = IndexMap::new();
        let mut asker = None;
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
            let run = train_rbi(&train, &dev, &kb, &cfg).unwrap();
            models.insert(regime, run.model);
            if regime == Regime::Aq {
                let a = train_question_asker(&train, &dev, &kb, &cfg).unwrap();
                println!("task {t} asker dev {:.3}", a.dev_accuracy);
                asker = Some(a.model);
            }
        }
        let report =
            eval_matrix(task, &kb, &models, &test_qa, &test_aq, asker.as_ref(), "rbi", 99)
                .unwrap();
        println!("{}", report.render());
    }
}
