//! debug: untrained-model accuracy on task test corpora (structural floor).
use asklearn::eval::{accuracy, test_corpora};
use asklearn::kb::{generate_kb, KbGenConfig, TaskId};
use asklearn::memnet::{build_vocab, MemConfig, Model, ModelKind, Tokenizer};

fn main() {
    let kb = generate_kb(&KbGenConfig::default()).unwrap();
    let tok = Tokenizer::new(&kb);
    let vocab = build_vocab(&kb, &tok);
    for w in [0usize, 1] {
        let model = Model::new(
            ModelKind::Answer,
            MemConfig { context_window: w, ..Default::default() },
            vocab.clone(),
            1,
        );
        for t in [1u8, 5, 6, 9] {
            let (qa, aq) = test_corpora(TaskId::new(t).unwrap(), &kb, 400, 99).unwrap();
            println!(
                "untrained w={w} task {t}: TestQA {:.3} TestAQ {:.3}",
                accuracy(&model, &qa, &tok).unwrap(),
                accuracy(&model, &aq, &tok).unwrap()
            );
        }
    }
}
