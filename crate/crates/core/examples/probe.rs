//! Scratch experiment: desk-scale matrices for a few tasks.

use asklearn::eval::{accuracy, test_corpora};
use asklearn::kb::{generate_kb, KbGenConfig, Split, TaskId};
use asklearn::memnet::{MemConfig, Tokenizer};
use asklearn::simulator::{generate_dataset, DatasetSpec, Regime, StudentScript};
use asklearn::train_offline::{train_rbi, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let task: u8 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(5);
    let window: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let n_train: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let epochs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(20);

    let kb = generate_kb(&KbGenConfig::default()).unwrap();
    let tok = Tokenizer::new(&kb);
    let task_id = TaskId::new(task).unwrap();
    let (test_qa, test_aq) = test_corpora(task_id, &kb, 500, 99).unwrap();

    for regime in [Regime::Qa, Regime::Aq] {
        let spec = |split, n| DatasetSpec {
            task: task_id,
            regime,
            split,
            n_episodes: n,
            seed: 7,
            script: StudentScript::default(),
        };
        let t0 = std::time::Instant::now();
        let train = generate_dataset(&spec(Split::Train, n_train), &kb).unwrap();
        let dev = generate_dataset(&spec(Split::Dev, 500), &kb).unwrap();
        let cfg = TrainConfig {
            mem: MemConfig { context_window: window, ..Default::default() },
            epochs,
            seed: 1,
            ..Default::default()
        };
        let run = train_rbi(&train, &dev, &kb, &cfg).unwrap();
        let qa = accuracy(&run.model, &test_qa, &tok).unwrap();
        let aq = accuracy(&run.model, &test_aq, &tok).unwrap();
        println!(
            "task {} w={} Train{}: dev {:.3} TestQA {:.3} TestAQ {:.3}  ({:.1?})",
            task,
            window,
            regime.name(),
            run.dev_accuracy,
            qa,
            aq,
            t0.elapsed()
        );
    }
}
