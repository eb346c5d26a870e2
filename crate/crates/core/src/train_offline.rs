//! Offline supervised trainers: reward-based imitation (only episodes whose
//! final answer earned reward 1 carry gradient), the joint answer + feedback
//! prediction objective, and the question-asking classifier behind the
//! TestModelAQ setting. All runs are deterministic in (corpus, config, seed).

use crate::kb::{KnowledgeBase, TaskId};
use crate::memnet::{
    build_vocab, encode_response_pool, episode_text, response_index, Enc, EpisodeInput,
    MemConfig, Model, ModelKind, Tokenizer,
};
use crate::numerics::{fnv1a, NumericsError, RngStream};
use crate::simulator::{Corpus, Regime};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("corpus has no reward-1 episodes; nothing to imitate")]
    NoRewardedEpisodes,
    #[error("episode {0} has no teacher feedback line after the answer")]
    MissingFeedback(usize),
    #[error("task {0} has no question choice; the question form is fixed")]
    NoQuestionChoice(u8),
    #[error("corpus has no relevantly-asked episodes to supervise the asker")]
    NoAskerExamples,
    #[error("empty run list")]
    EmptyRuns,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub mem: MemConfig,
    pub lr: f64,
    pub clip: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Weight of the feedback-prediction loss; 0 reduces to pure imitation.
    pub lambda_fp: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mem: MemConfig::default(),
            lr: 0.05,
            clip: 40.0,
            batch: 32,
            epochs: 20,
            lambda_fp: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Human name of the model family this config trains.
    pub fn kind_name(&self, fp: bool) -> String {
        let base = if self.mem.context_window == 0 { "vanilla" } else { "cont" };
        if fp {
            format!("{base}+fp")
        } else {
            base.to_string()
        }
    }
}

/// One completed training run.
#[derive(Debug)]
pub struct TrainRun {
    pub task: Option<TaskId>,
    pub regime: Option<Regime>,
    pub model_kind: String,
    pub seed: u64,
    pub dev_accuracy: f64,
    /// Mean cross-entropy of gold answers on the dev set after each epoch.
    pub dev_losses: Vec<f64>,
    pub model: Model,
}

impl TrainRun {
    /// One run-ledger CSV row.
    pub fn ledger_row(&self, checkpoint_path: &str) -> String {
        format!(
            "{},{},{},{},{:.4},{}",
            self.task.map(|t| t.0.to_string()).unwrap_or_else(|| "-".into()),
            self.regime.map(|r| r.name().to_string()).unwrap_or_else(|| "-".into()),
            self.model_kind,
            self.seed,
            self.dev_accuracy,
            checkpoint_path
        )
    }
}

pub const LEDGER_HEADER: &str = "task,regime,model_kind,seed,dev_accuracy,checkpoint";

/// A pre-encoded episode.
struct Sample {
    input: EpisodeInput,
    /// Candidate index of the rewarded gold answer (reward-1 episodes only).
    gold: Option<usize>,
    /// Candidate indices of every answer-set member (dev scoring).
    gold_set: Vec<usize>,
    /// Candidate index of the answer the student actually gave.
    asked: Option<usize>,
    /// Response-pool index of the teacher's feedback.
    resp: Option<usize>,
}

fn encode_corpus(model: &Model, corpus: &Corpus, tok: &Tokenizer) -> Vec<Sample> {
    let mut out = Vec::with_capacity(corpus.episodes.len());
    for ep in &corpus.episodes {
        let Some(text) = episode_text(ep, tok) else { continue };
        let input = model.encode_episode(&text.memory_lines, &text.query);
        let asked = text.student_answer.as_deref().and_then(|a| input.candidate_index(a));
        let gold = if text.reward == Some(1) { asked } else { None };
        let gold_set = ep
            .answer_set()
            .iter()
            .filter_map(|a| input.candidate_index(a))
            .collect();
        let resp = text.feedback.as_deref().and_then(response_index);
        out.push(Sample { input, gold, gold_set, asked, resp });
    }
    out
}

fn dev_accuracy(model: &Model, dev: &[Sample]) -> f64 {
    if dev.is_empty() {
        return 0.0;
    }
    let hits = dev
        .iter()
        .filter(|s| {
            let trace = model.forward(&s.input);
            crate::eval::argmax(&trace.cand_probs).is_some_and(|i| s.gold_set.contains(&i))
        })
        .count();
    hits as f64 / dev.len() as f64
}

fn dev_loss(model: &Model, dev: &[Sample]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in dev {
        if let Some(g) = s.gold {
            let trace = model.forward(&s.input);
            total += -trace.cand_probs[g].max(1e-300).ln();
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        total / n as f64
    }
}

/// Shared epoch loop: iterate `active` sample indices in shuffled minibatches,
/// apply answer CE (reward-1) and optionally the feedback loss, select the
/// best epoch by dev accuracy (ties keep the earlier epoch).
fn fit(
    model: &mut Model,
    samples: &[Sample],
    active: &[usize],
    fp: Option<(&[Enc], f64)>,
    dev: &[Sample],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>), TrainError> {
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_params = model.params.clone();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = active.to_vec();
        let mut rng = RngStream::new(cfg.seed, fnv1a(b"epoch-order") ^ epoch as u64);
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &samples[i];
                let trace = model.forward(&s.input);
                let mut dz: Vec<f64> = Vec::new();
                if let Some(g) = s.gold {
                    dz = trace.cand_probs.clone();
                    dz[g] -= 1.0;
                    dz.iter_mut().for_each(|v| *v *= scale);
                }
                let mut d_un: Option<Vec<f64>> = None;
                if let (Some((responses, lambda)), Some(asked), Some(resp)) =
                    (fp, s.asked, s.resp)
                {
                    if !s.input.candidates.is_empty() {
                        let fp_trace = model.forward_fp(&s.input, &trace, asked, responses);
                        let (_, g) = model.backward_fp(
                            &s.input,
                            &trace,
                            &fp_trace,
                            asked,
                            responses,
                            resp,
                            lambda * scale,
                        );
                        d_un = Some(g);
                    }
                }
                if !dz.is_empty() || d_un.is_some() {
                    model.backward(&s.input, &trace, &dz, d_un.as_deref());
                }
            }
            model.params.sgd_step(cfg.lr, cfg.clip)?;
        }
        let acc = dev_accuracy(model, dev);
        losses.push(dev_loss(model, dev));
        if acc > best_acc {
            best_acc = acc;
            best_params = model.params.clone();
        }
    }
    model.params = best_params;
    Ok((best_acc.max(0.0), losses))
}

fn corpus_meta(corpus: &Corpus) -> (Option<TaskId>, Option<Regime>) {
    match &corpus.header {
        Some(h) => (h.task, h.regime),
        None => (None, None),
    }
}

/// Reward-based imitation: maximize gold-answer likelihood on reward-1
/// episodes; reward-0 episodes contribute exactly zero gradient (they are
/// excluded from the update set entirely).
pub fn train_rbi(
    train: &Corpus,
    dev: &Corpus,
    kb: &KnowledgeBase,
    cfg: &TrainConfig,
) -> Result<TrainRun, TrainError> {
    let tok = Tokenizer::new(kb);
    let vocab = build_vocab(kb, &tok);
    let mut model = Model::new(ModelKind::Answer, cfg.mem, vocab, cfg.seed);
    let samples = encode_corpus(&model, train, &tok);
    let active: Vec<usize> =
        (0..samples.len()).filter(|&i| samples[i].gold.is_some()).collect();
    if train.episodes.iter().all(|e| e.reward() != Some(1)) {
        return Err(TrainError::NoRewardedEpisodes);
    }
    // `active` may still be empty when every rewarded answer names a token
    // absent from its memories (task 6 QA hides the answer entity): there is
    // nothing to imitate and the model legitimately stays at initialization.
    let dev_samples = encode_corpus(&model, dev, &tok);
    let (dev_acc, dev_losses) = fit(&mut model, &samples, &active, None, &dev_samples, cfg)?;
    let (task, regime) = corpus_meta(train);
    Ok(TrainRun {
        task,
        regime,
        model_kind: cfg.kind_name(false),
        seed: cfg.seed,
        dev_accuracy: dev_acc,
        dev_losses,
        model,
    })
}

/// Joint training: answer CE on reward-1 episodes plus `lambda_fp` times the
/// feedback-prediction CE on all episodes. `lambda_fp = 0` follows the exact
/// parameter trajectory of `train_rbi`.
pub fn train_rbi_fp(
    train: &Corpus,
    dev: &Corpus,
    kb: &KnowledgeBase,
    cfg: &TrainConfig,
) -> Result<TrainRun, TrainError> {
    let tok = Tokenizer::new(kb);
    let vocab = build_vocab(kb, &tok);
    let mut model = Model::new(ModelKind::AnswerFp, cfg.mem, vocab, cfg.seed);
    let samples = encode_corpus(&model, train, &tok);
    for (i, s) in samples.iter().enumerate() {
        if s.resp.is_none() {
            return Err(TrainError::MissingFeedback(i));
        }
    }
    let rewarded: Vec<usize> =
        (0..samples.len()).filter(|&i| samples[i].gold.is_some()).collect();
    if train.episodes.iter().all(|e| e.reward() != Some(1)) {
        return Err(TrainError::NoRewardedEpisodes);
    }
    let dev_samples = encode_corpus(&model, dev, &tok);
    let (dev_acc, dev_losses) = if cfg.lambda_fp == 0.0 {
        // Exact RBI reduction: same update set, no feedback term.
        fit(&mut model, &samples, &rewarded, None, &dev_samples, cfg)?
    } else {
        let responses = encode_response_pool(&model, &tok);
        let active: Vec<usize> = (0..samples.len()).collect();
        fit(
            &mut model,
            &samples,
            &active,
            Some((&responses, cfg.lambda_fp)),
            &dev_samples,
            cfg,
        )?
    };
    let (task, regime) = corpus_meta(train);
    Ok(TrainRun {
        task,
        regime,
        model_kind: cfg.kind_name(true),
        seed: cfg.seed,
        dev_accuracy: dev_acc,
        dev_losses,
        model,
    })
}

/// Index of the line where the student asks its clarification question.
fn ask_line(ep: &crate::simulator::Episode) -> Option<usize> {
    ep.lines.iter().position(|l| {
        l.reward.is_none()
            && l.student_text.as_deref().is_some_and(|s| s.trim_end().ends_with('?'))
    })
}

/// Build asker samples: state = lines before the ask, query = the teacher's
/// question, gold = the question the scripted student asked when it asked
/// relevantly, distractors sampled from other episodes' asked questions.
fn asker_samples(
    model: &Model,
    corpus: &Corpus,
    tok: &Tokenizer,
    seed: u64,
) -> Vec<Sample> {
    let mut asked_questions: Vec<String> = Vec::new();
    let mut positives: Vec<(usize, String)> = Vec::new();
    for (i, ep) in corpus.episodes.iter().enumerate() {
        let Some(ask) = ask_line(ep) else { continue };
        let q = ep.lines[ask].student_text.clone().expect("ask line has student text");
        asked_questions.push(q.clone());
        if ep.meta.as_ref().and_then(|m| m.asked_relevant) == Some(true) {
            positives.push((i, q));
        }
    }
    let mut rng = RngStream::new(seed, fnv1a(b"asker-negatives"));
    let mut out = Vec::with_capacity(positives.len());
    for (i, gold_q) in positives {
        let ep = &corpus.episodes[i];
        let ask = ask_line(ep).expect("positive episode has ask line");
        let memory_lines: Vec<Vec<String>> = ep.lines[..ask]
            .iter()
            .map(|l| {
                let mut t = tok.tokenize(&l.teacher_text);
                if let Some(s) = &l.student_text {
                    t.extend(tok.tokenize(s));
                }
                t
            })
            .collect();
        let query = tok.tokenize(&ep.lines[ask].teacher_text);
        let mut options = vec![gold_q.clone()];
        let mut guard = 0usize;
        while options.len() < 4 && guard < 200 {
            guard += 1;
            let cand = &asked_questions[rng.below(asked_questions.len())];
            if !options.contains(cand) {
                options.push(cand.clone());
            }
        }
        rng.shuffle(&mut options);
        let gold = options.iter().position(|o| *o == gold_q).expect("gold retained");
        let mut input = model.encode_episode(&memory_lines, &query);
        input.cand_encs =
            options.iter().map(|o| model.encode_utterance(&tok.tokenize(o))).collect();
        input.candidates = options;
        out.push(Sample {
            input,
            gold: Some(gold),
            gold_set: vec![gold],
            asked: None,
            resp: None,
        });
    }
    out
}

/// Train the question-choice classifier used by TestModelAQ (tasks 2 and 4).
pub fn train_question_asker(
    train: &Corpus,
    dev: &Corpus,
    kb: &KnowledgeBase,
    cfg: &TrainConfig,
) -> Result<TrainRun, TrainError> {
    let (task, regime) = corpus_meta(train);
    if let Some(t) = task {
        if !t.has_question_choice() {
            return Err(TrainError::NoQuestionChoice(t.0));
        }
    }
    let tok = Tokenizer::new(kb);
    let vocab = build_vocab(kb, &tok);
    let mut model = Model::new(ModelKind::Answer, cfg.mem, vocab, cfg.seed);
    let samples = asker_samples(&model, train, &tok, cfg.seed);
    if samples.is_empty() {
        return Err(TrainError::NoAskerExamples);
    }
    let dev_samples = asker_samples(&model, dev, &tok, cfg.seed ^ 1);
    let active: Vec<usize> = (0..samples.len()).collect();
    let (dev_acc, dev_losses) = fit(&mut model, &samples, &active, None, &dev_samples, cfg)?;
    Ok(TrainRun {
        task,
        regime,
        model_kind: "asker".to_string(),
        seed: cfg.seed,
        dev_accuracy: dev_acc,
        dev_losses,
        model,
    })
}

/// Pick the run with maximal dev accuracy; ties break toward the lowest seed.
pub fn select_best(runs: Vec<TrainRun>) -> Result<TrainRun, TrainError> {
    let mut best: Option<TrainRun> = None;
    for run in runs {
        let better = match &best {
            None => true,
            Some(b) => {
                run.dev_accuracy > b.dev_accuracy
                    || (run.dev_accuracy == b.dev_accuracy && run.seed < b.seed)
            }
        };
        if better {
            best = Some(run);
        }
    }
    best.ok_or(TrainError::EmptyRuns)
}

/// Format a full run ledger.
pub fn ledger(rows: &[(TrainRun, String)]) -> String {
    let mut out = String::from(LEDGER_HEADER);
    out.push('\n');
    for (run, path) in rows {
        let _ = writeln!(out, "{}", run.ledger_row(path));
    }
    out
}
