//! debug: FP-vs-vanilla comparison (task 5 TrainAQ).
use asklearn::eval::{accuracy, test_corpora};
use asklearn::kb::{generate_kb, KbGenConfig, Split, TaskId};
use asklearn::memnet::{MemConfig, Tokenizer};
use asklearn::simulator::{generate_dataset, DatasetSpec, Regime, StudentScript};
use asklearn::train_offline::{train_rbi, train_rbi_fp, TrainConfig};

fn main() {
    let kb = generate_kb(&KbGenConfig::default()).unwrap();
    let tok = Tokenizer::new(&kb);
    let task = TaskId::new(5).unwrap();
    let (_, test_aq) = test_corpora(task, &kb, 500, 99).unwrap();
    let spec = |split, n| DatasetSpec {
        task,
        regime: Regime::Aq,
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
    let vanilla = train_rbi(&train, &dev, &kb, &cfg).unwrap();
    let fp = train_rbi_fp(&train, &dev, &kb, &cfg).unwrap();
    println!("vanilla TestAQ {:.3}", accuracy(&vanilla.model, &test_aq, &tok).unwrap());
    println!("fp      TestAQ {:.3}", accuracy(&fp.model, &test_aq, &tok).unwrap());
}
