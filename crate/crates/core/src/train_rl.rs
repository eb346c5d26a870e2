//! Online reinforcement learning: the binary ask/no-ask policy, the two
//! branch-specific answer policies, reward accounting with an ask cost,
//! REINFORCE with a learned baseline, and the two-stage training schedule
//! over the good/medium/poor student scenarios.

use crate::kb::{question_templates, KnowledgeBase, QuestionTemplate, Split, TaskId};
use crate::memnet::{
    build_vocab, EpisodeInput, MemConfig, Model, ModelKind, Tokenizer,
};
use crate::numerics::{fnv1a, softmax, NumericsError, RngStream};
use crate::simulator::{
    build_aq_lines, DialogueLine, EpisodeDraw, SimError, StudentScript,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("ask cost {0} outside [0, 2]")]
    BadCost(f64),
    #[error("unknown scenario `{0}`")]
    BadScenario(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// The four-cell reward table: a correct final answer earns +1, an incorrect
/// one −1, and asking a question costs `cost_aq` either way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTable {
    pub cost_aq: f64,
}

impl RewardTable {
    pub fn new(cost_aq: f64) -> Result<RewardTable, RlError> {
        if !(0.0..=2.0).contains(&cost_aq) {
            return Err(RlError::BadCost(cost_aq));
        }
        Ok(RewardTable { cost_aq })
    }

    pub fn reward(&self, asked: bool, correct: bool) -> f64 {
        let base = if correct { 1.0 } else { -1.0 };
        base - if asked { self.cost_aq } else { 0.0 }
    }
}

/// How flawed the student's situation is: a good student gets the clean
/// question and the full KB, a poor student always suffers the task's flaw,
/// a medium student suffers it on half the episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Good,
    Medium,
    Poor,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Good => "good",
            ScenarioKind::Medium => "medium",
            ScenarioKind::Poor => "poor",
        }
    }

    pub fn parse(s: &str) -> Result<ScenarioKind, RlError> {
        match s {
            "good" => Ok(ScenarioKind::Good),
            "medium" => Ok(ScenarioKind::Medium),
            "poor" => Ok(ScenarioKind::Poor),
            _ => Err(RlError::BadScenario(s.to_string())),
        }
    }

    fn flawed(self, rng: &mut RngStream) -> bool {
        match self {
            ScenarioKind::Good => false,
            ScenarioKind::Poor => true,
            ScenarioKind::Medium => rng.coin(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RLScenario {
    pub kind: ScenarioKind,
    pub task: TaskId,
}

/// The learner: a binary question policy, one answer policy per branch
/// (asking changes what the memories contain, so the branches are separate
/// models), and a scalar reward baseline.
#[derive(Debug, Clone)]
pub struct PolicyPair {
    pub question: Model,
    pub answer_aq: Model,
    pub answer_qa: Model,
    pub baseline: Model,
}

impl PolicyPair {
    pub fn new(kb: &KnowledgeBase, mem: MemConfig, seed: u64) -> PolicyPair {
        let tok = Tokenizer::new(kb);
        let vocab = build_vocab(kb, &tok);
        PolicyPair {
            question: Model::new(ModelKind::Question, mem, vocab.clone(), seed),
            answer_aq: Model::new(ModelKind::Answer, mem, vocab.clone(), seed ^ 1),
            answer_qa: Model::new(ModelKind::Answer, mem, vocab.clone(), seed ^ 2),
            baseline: Model::new(ModelKind::Baseline, mem, vocab, seed ^ 3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RLConfig {
    pub mem: MemConfig,
    pub lr: f64,
    pub clip: f64,
    /// Episodes per gradient application.
    pub batch: usize,
    /// Total epochs; the first half trains only the answer policies with a
    /// forced alternating ask bit, the second half trains both policies.
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    /// Independent restarts; the best dev-reward model wins.
    pub repeats: usize,
    pub dev_episodes: usize,
    /// Rollouts at the start of each restart during which only the baseline
    /// learns. An untrained baseline reads ~0 while early rewards sit near
    /// −1, so every sampled answer would get advantage ≈ −1 and the policy
    /// would collapse onto the common tokens before the baseline catches up;
    /// centering the advantage first avoids that.
    pub baseline_warmup: usize,
    pub seed: u64,
}

impl Default for RLConfig {
    fn default() -> Self {
        RLConfig {
            mem: MemConfig { context_window: 1, ..Default::default() },
            lr: 0.05,
            clip: 40.0,
            batch: 16,
            epochs: 16,
            episodes_per_epoch: 2000,
            repeats: 5,
            dev_episodes: 500,
            baseline_warmup: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Draw actions from the policy distributions (training).
    Sample,
    /// Argmax actions (evaluation).
    Greedy,
}

/// One completed rollout with everything the updates need.
#[derive(Debug)]
pub struct Trajectory {
    pub asked: bool,
    /// Candidate index of the answer taken in `answer_input`.
    pub a2: Option<usize>,
    pub answer: Option<String>,
    pub correct: bool,
    pub reward: f64,
    /// The pre-decision state (view + history + query): what the question
    /// policy and the baseline see.
    pub decision_input: EpisodeInput,
    /// The state the taken answer branch saw.
    pub answer_input: EpisodeInput,
}

fn tokenize_lines(lines: &[DialogueLine], tok: &Tokenizer) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|l| {
            let mut t = tok.tokenize(&l.teacher_text);
            if let Some(s) = &l.student_text {
                t.extend(tok.tokenize(s));
            }
            t
        })
        .collect()
}

fn sample_index(probs: &[f64], rng: &mut RngStream) -> usize {
    let mut u = rng.uniform();
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Play one episode. `force_ask` overrides the question policy (stage-1
/// pretraining and the forced-branch diagnostics); otherwise a1 comes from
/// the policy, sampled or greedy per `mode`. The clarification question the
/// student asks is the task's scripted one, always relevant: the learned
/// decision is whether to ask, not what.
pub fn run_rl_episode(
    policies: &PolicyPair,
    scenario: RLScenario,
    table: &RewardTable,
    kb: &KnowledgeBase,
    tok: &Tokenizer,
    templates: &[QuestionTemplate],
    split: Split,
    mode: Mode,
    force_ask: Option<bool>,
    rng: &mut RngStream,
) -> Result<Trajectory, RlError> {
    let flawed = scenario.kind.flawed(rng);
    let draw = EpisodeDraw::sample(scenario.task, kb, templates, split, flawed, rng)?;

    let mut pre_lines: Vec<Vec<String>> = Vec::new();
    for f in &draw.view {
        pre_lines.push(tok.tokenize(&kb.fact_text(f)));
    }
    pre_lines.extend(tokenize_lines(&draw.history, tok));
    let query = tok.tokenize(&draw.question_text);
    let decision_input = policies.question.encode_episode(&pre_lines, &query);

    let asked = match force_ask {
        Some(a) => a,
        None => {
            let trace = policies.question.forward(&decision_input);
            let scores = policies.question.question_scores(&trace);
            let probs = softmax(&scores)?;
            let pick = match mode {
                Mode::Sample => sample_index(&probs, rng),
                Mode::Greedy => usize::from(probs[1] > probs[0]),
            };
            pick == 0
        }
    };

    let (answer_model, answer_input) = if asked {
        let aq = build_aq_lines(&draw, kb, templates, &StudentScript::perfect(), rng)?;
        let lines = tokenize_lines(&aq.lines, tok);
        (&policies.answer_aq, policies.answer_aq.encode_episode(&lines, &query))
    } else {
        // The teacher's question is a dialogue line either way: the ask
        // branch carries it inside the clarification exchange, so the no-ask
        // branch gets it as a memory line too. Leaving it out would hand the
        // ask branch a question-retrieval advantage that has nothing to do
        // with the teacher's reply.
        let mut lines = pre_lines.clone();
        lines.push(query.clone());
        (&policies.answer_qa, policies.answer_qa.encode_episode(&lines, &query))
    };

    let (a2, answer) = if answer_input.candidates.is_empty() {
        (None, None)
    } else {
        let trace = answer_model.forward(&answer_input);
        let pick = match mode {
            Mode::Sample => sample_index(&trace.cand_probs, rng),
            Mode::Greedy => crate::eval::argmax(&trace.cand_probs).expect("non-empty"),
        };
        (Some(pick), Some(answer_input.candidates[pick].clone()))
    };
    let answer_set: Vec<String> =
        draw.answers.iter().map(|a| kb.entity(*a).token()).collect();
    let correct = answer.as_deref().is_some_and(|a| answer_set.iter().any(|g| g == a));
    let reward = table.reward(asked, correct);
    Ok(Trajectory { asked, a2, answer, correct, reward, decision_input, answer_input })
}

/// Accumulate the REINFORCE gradients of one trajectory: each taken action's
/// log-probability is scaled by its advantage, with the baseline treated as
/// a constant. Only the answer branch actually taken is touched; the question
/// policy joins in only when `update_question` is set. The two actions use
/// different baselines: the question policy subtracts the learned state value
/// `question_baseline`, while the answer policy subtracts `answer_baseline`,
/// the mean reward conditional on the ask decision. A baseline may condition
/// on anything except the action it corrects for, and conditioning on the ask
/// bit matters here: with an ask cost, the ask branch's rewards all sit below
/// the state value, so a shared baseline hands every sampled answer in that
/// branch a negative advantage and the branch collapses before it can learn.
/// Gradients are accumulated, not applied: the caller steps per batch.
pub fn reinforce_update(
    traj: &Trajectory,
    policies: &mut PolicyPair,
    question_baseline: f64,
    answer_baseline: f64,
    update_question: bool,
    scale: f64,
) -> Result<(), RlError> {
    if let Some(a2) = traj.a2 {
        let adv = traj.reward - answer_baseline;
        let model =
            if traj.asked { &mut policies.answer_aq } else { &mut policies.answer_qa };
        let trace = model.forward(&traj.answer_input);
        let mut dz = trace.cand_probs.clone();
        dz[a2] -= 1.0;
        // Guard the log against an exactly-zero probability action.
        let _logp = trace.cand_probs[a2].max(1e-8).ln();
        dz.iter_mut().for_each(|v| *v *= adv * scale);
        model.backward(&traj.answer_input, &trace, &dz, None);
    }
    if update_question {
        let adv = traj.reward - question_baseline;
        let trace = policies.question.forward(&traj.decision_input);
        let probs = softmax(&policies.question.question_scores(&trace))?;
        let taken = if traj.asked { 0 } else { 1 };
        let mut dz = [probs[0], probs[1]];
        dz[taken] -= 1.0;
        dz.iter_mut().for_each(|v| *v *= adv * scale);
        policies.question.backward_question(&traj.decision_input, &trace, dz);
    }
    Ok(())
}

/// Running mean reward per ask branch: the answer policies' baselines.
/// An exponential average tracks the current policy rather than the whole
/// history; the first observation initializes the mean directly.
#[derive(Debug, Clone, Copy)]
pub struct BranchMeans {
    m: [f64; 2],
    seen: [bool; 2],
    alpha: f64,
}

impl BranchMeans {
    pub fn new(alpha: f64) -> BranchMeans {
        BranchMeans { m: [0.0; 2], seen: [false; 2], alpha }
    }

    pub fn value(&self, asked: bool) -> f64 {
        self.m[usize::from(asked)]
    }

    pub fn observe(&mut self, asked: bool, reward: f64) {
        let i = usize::from(asked);
        if self.seen[i] {
            self.m[i] += self.alpha * (reward - self.m[i]);
        } else {
            self.m[i] = reward;
            self.seen[i] = true;
        }
    }
}

/// One squared-error step of the reward baseline toward the observed reward.
/// Touches only the baseline model's parameters, and of those only the linear
/// head (`val_w`, `val_b`): backpropagating the per-episode squared error into
/// the embedding matrices at full step size makes the regression oscillate
/// instead of settling at the mean reward, and an unstable baseline feeds bad
/// advantages to the policy update. With the features frozen the head is a
/// plain linear regression and converges. Returns the pre-update value (the
/// `b` the policy update should use) and the loss.
pub fn baseline_update(
    traj: &Trajectory,
    baseline: &mut Model,
    lr: f64,
    clip: f64,
) -> Result<(f64, f64), RlError> {
    let trace = baseline.forward(&traj.decision_input);
    let value = baseline.baseline_value(&trace);
    let loss = baseline.baseline_loss(&traj.decision_input, &trace, traj.reward, true);
    let frozen: Vec<String> = baseline
        .params
        .names()
        .filter(|n| *n != "val_w" && *n != "val_b")
        .map(str::to_owned)
        .collect();
    for name in &frozen {
        baseline.params.grad_mut(name).data.iter_mut().for_each(|v| *v = 0.0);
    }
    baseline.params.sgd_step(lr, clip)?;
    Ok((value, loss))
}

/// Greedy evaluation of a policy pair.
#[derive(Debug, Clone, Copy)]
pub struct RlEval {
    pub ask_rate: f64,
    pub accuracy: f64,
    pub mean_reward: f64,
}

pub fn evaluate_rl(
    policies: &PolicyPair,
    scenario: RLScenario,
    table: &RewardTable,
    kb: &KnowledgeBase,
    split: Split,
    n: usize,
    seed: u64,
) -> Result<RlEval, RlError> {
    let templates = question_templates();
    let tok = Tokenizer::new(kb);
    let (mut asks, mut hits, mut total) = (0usize, 0usize, 0.0f64);
    for i in 0..n {
        let mut rng = RngStream::new(seed, fnv1a(b"rl-eval") ^ i as u64);
        let traj = run_rl_episode(
            policies,
            scenario,
            table,
            kb,
            &tok,
            &templates,
            split,
            Mode::Greedy,
            None,
            &mut rng,
        )?;
        asks += traj.asked as usize;
        hits += traj.correct as usize;
        total += traj.reward;
    }
    let nf = n.max(1) as f64;
    Ok(RlEval { ask_rate: asks as f64 / nf, accuracy: hits as f64 / nf, mean_reward: total / nf })
}

#[derive(Debug)]
pub struct RlRun {
    pub policies: PolicyPair,
    pub dev: RlEval,
    pub seed: u64,
}

/// The full schedule: for each of `repeats` restarts, run `epochs` epochs of
/// `episodes_per_epoch` rollouts. During the first half the ask bit is forced
/// to alternate and only the answer policies (and the baseline) learn; during
/// the second half both policies learn by REINFORCE and the epoch with the
/// best greedy dev reward is kept. The best restart by dev reward wins.
pub fn train_rl(
    scenario: RLScenario,
    cost_aq: f64,
    kb: &KnowledgeBase,
    cfg: &RLConfig,
) -> Result<RlRun, RlError> {
    let table = RewardTable::new(cost_aq)?;
    let templates = question_templates();
    let tok = Tokenizer::new(kb);
    let mut best: Option<RlRun> = None;
    for repeat in 0..cfg.repeats.max(1) {
        let seed = cfg.seed.wrapping_add(repeat as u64);
        let mut policies = PolicyPair::new(kb, cfg.mem, seed);
        let mut best_epoch: Option<(f64, PolicyPair)> = None;
        let stage1_epochs = cfg.epochs / 2;
        let mut rollouts = 0usize;
        let mut branch_means = BranchMeans::new(0.02);
        for epoch in 0..cfg.epochs {
            let stage1 = epoch < stage1_epochs;
            let mut pending = 0usize;
            for i in 0..cfg.episodes_per_epoch {
                let mut rng = RngStream::new(
                    seed,
                    fnv1a(b"rl-rollout") ^ ((epoch as u64) << 32 | i as u64),
                );
                let force = stage1.then_some(i % 2 == 0);
                let traj = run_rl_episode(
                    &policies,
                    scenario,
                    &table,
                    kb,
                    &tok,
                    &templates,
                    Split::Train,
                    Mode::Sample,
                    force,
                    &mut rng,
                )?;
                let (b, _) = baseline_update(&traj, &mut policies.baseline, cfg.lr, cfg.clip)?;
                let ab = {
                    let prior = branch_means.value(traj.asked);
                    branch_means.observe(traj.asked, traj.reward);
                    prior
                };
                rollouts += 1;
                if rollouts <= cfg.baseline_warmup {
                    continue;
                }
                reinforce_update(&traj, &mut policies, b, ab, !stage1, 1.0 / cfg.batch as f64)?;
                pending += 1;
                if pending == cfg.batch {
                    policies.question.params.sgd_step(cfg.lr, cfg.clip)?;
                    policies.answer_aq.params.sgd_step(cfg.lr, cfg.clip)?;
                    policies.answer_qa.params.sgd_step(cfg.lr, cfg.clip)?;
                    pending = 0;
                }
            }
            if pending > 0 {
                policies.question.params.sgd_step(cfg.lr, cfg.clip)?;
                policies.answer_aq.params.sgd_step(cfg.lr, cfg.clip)?;
                policies.answer_qa.params.sgd_step(cfg.lr, cfg.clip)?;
            }
            if !stage1 {
                let dev = evaluate_rl(
                    &policies,
                    scenario,
                    &table,
                    kb,
                    Split::Dev,
                    cfg.dev_episodes,
                    seed ^ fnv1a(b"rl-dev"),
                )?;
                if best_epoch.as_ref().is_none_or(|(r, _)| dev.mean_reward > *r) {
                    best_epoch = Some((dev.mean_reward, policies.clone()));
                }
            }
        }
        let (reward, chosen) = best_epoch.expect("at least one stage-2 epoch");
        let dev = evaluate_rl(
            &chosen,
            scenario,
            &table,
            kb,
            Split::Dev,
            cfg.dev_episodes,
            seed ^ fnv1a(b"rl-dev"),
        )?;
        debug_assert!((dev.mean_reward - reward).abs() < 1e-12);
        if best.as_ref().is_none_or(|b| dev.mean_reward > b.dev.mean_reward) {
            best = Some(RlRun { policies: chosen, dev, seed });
        }
    }
    Ok(best.expect("repeats >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{generate_kb, KbGenConfig};
    use crate::memnet::Vocabulary;
    use crate::numerics::Matrix;

    #[test]
    fn reward_table_matches_all_cells_over_grid() {
        for step in 0..=8 {
            let cost = step as f64 * 0.25;
            let t = RewardTable::new(cost).unwrap();
            assert_eq!(t.reward(true, true), 1.0 - cost);
            assert_eq!(t.reward(true, false), -1.0 - cost);
            assert_eq!(t.reward(false, true), 1.0);
            assert_eq!(t.reward(false, false), -1.0);
        }
        assert!(RewardTable::new(-0.1).is_err());
        assert!(RewardTable::new(2.1).is_err());
    }

    #[test]
    fn zero_cost_collapses_ask_columns() {
        let t = RewardTable::new(0.0).unwrap();
        assert_eq!(t.reward(true, true), t.reward(false, true));
        assert_eq!(t.reward(true, false), t.reward(false, false));
    }

    fn tiny_vocab() -> Vocabulary {
        let mut v = Vocabulary::new();
        for w in ["a", "b", "q"] {
            v.add(w);
        }
        v
    }

    fn toy_trajectory(policies: &PolicyPair, asked: bool, reward: f64) -> Trajectory {
        let toks = |words: &[&str]| -> Vec<String> {
            words.iter().map(|w| w.to_string()).collect()
        };
        let lines = vec![toks(&["a", "b"])];
        let input = policies.question.encode_episode(&lines, &toks(&["q"]));
        Trajectory {
            asked,
            a2: Some(0),
            answer: Some("a".to_string()),
            correct: reward > 0.0,
            reward,
            decision_input: input.clone(),
            answer_input: input,
        }
    }

    #[test]
    fn advantage_zero_means_zero_gradient() {
        let mem = MemConfig { dim: 4, ..Default::default() };
        let mut policies = PolicyPair {
            question: Model::new(ModelKind::Question, mem, tiny_vocab(), 1),
            answer_aq: Model::new(ModelKind::Answer, mem, tiny_vocab(), 2),
            answer_qa: Model::new(ModelKind::Answer, mem, tiny_vocab(), 3),
            baseline: Model::new(ModelKind::Baseline, mem, tiny_vocab(), 4),
        };
        let before = (
            policies.question.save(),
            policies.answer_aq.save(),
            policies.answer_qa.save(),
        );
        let traj = toy_trajectory(&policies, true, 0.7);
        reinforce_update(&traj, &mut policies, 0.7, 0.7, true, 1.0).unwrap();
        policies.question.params.sgd_step(0.1, 40.0).unwrap();
        policies.answer_aq.params.sgd_step(0.1, 40.0).unwrap();
        policies.answer_qa.params.sgd_step(0.1, 40.0).unwrap();
        assert_eq!(before.0, policies.question.save());
        assert_eq!(before.1, policies.answer_aq.save());
        assert_eq!(before.2, policies.answer_qa.save());
    }

    #[test]
    fn baseline_update_never_touches_policies_and_converges() {
        let mem = MemConfig { dim: 4, ..Default::default() };
        let mut policies = PolicyPair {
            question: Model::new(ModelKind::Question, mem, tiny_vocab(), 1),
            answer_aq: Model::new(ModelKind::Answer, mem, tiny_vocab(), 2),
            answer_qa: Model::new(ModelKind::Answer, mem, tiny_vocab(), 3),
            baseline: Model::new(ModelKind::Baseline, mem, tiny_vocab(), 4),
        };
        let before = (
            policies.question.save(),
            policies.answer_aq.save(),
            policies.answer_qa.save(),
        );
        let traj = toy_trajectory(&policies, false, 0.5);
        let mut value = 0.0;
        for _ in 0..200 {
            let (v, _) = baseline_update(&traj, &mut policies.baseline, 0.05, 40.0).unwrap();
            value = v;
        }
        assert!((value - 0.5).abs() < 0.05, "baseline off: {value}");
        assert_eq!(before.0, policies.question.save());
        assert_eq!(before.1, policies.answer_aq.save());
        assert_eq!(before.2, policies.answer_qa.save());
    }

    #[test]
    fn policy_update_never_touches_baseline() {
        let mem = MemConfig { dim: 4, ..Default::default() };
        let mut policies = PolicyPair {
            question: Model::new(ModelKind::Question, mem, tiny_vocab(), 1),
            answer_aq: Model::new(ModelKind::Answer, mem, tiny_vocab(), 2),
            answer_qa: Model::new(ModelKind::Answer, mem, tiny_vocab(), 3),
            baseline: Model::new(ModelKind::Baseline, mem, tiny_vocab(), 4),
        };
        let before = policies.baseline.save();
        let traj = toy_trajectory(&policies, true, 1.0);
        reinforce_update(&traj, &mut policies, 0.0, 0.0, true, 1.0).unwrap();
        policies.question.params.sgd_step(0.1, 40.0).unwrap();
        policies.answer_aq.params.sgd_step(0.1, 40.0).unwrap();
        policies.answer_qa.params.sgd_step(0.1, 40.0).unwrap();
        assert_eq!(before, policies.baseline.save());
    }

    #[test]
    fn two_action_bandit_learns_to_ask() {
        // Rewards {+1 ask, −1 no-ask}: the question policy alone must push
        // its ask probability above 0.95 within 500 updates.
        let mem = MemConfig { dim: 4, ..Default::default() };
        let mut policies = PolicyPair {
            question: Model::new(ModelKind::Question, mem, tiny_vocab(), 7),
            answer_aq: Model::new(ModelKind::Answer, mem, tiny_vocab(), 2),
            answer_qa: Model::new(ModelKind::Answer, mem, tiny_vocab(), 3),
            baseline: Model::new(ModelKind::Baseline, mem, tiny_vocab(), 4),
        };
        let mut rng = RngStream::new(11, 0);
        for _ in 0..500 {
            let probe = toy_trajectory(&policies, true, 0.0);
            let trace = policies.question.forward(&probe.decision_input);
            let probs = softmax(&policies.question.question_scores(&trace)).unwrap();
            let asked = rng.coin(probs[0]);
            let reward = if asked { 1.0 } else { -1.0 };
            let mut traj = toy_trajectory(&policies, asked, reward);
            traj.a2 = None; // isolate the question policy
            reinforce_update(&traj, &mut policies, 0.0, 0.0, true, 1.0).unwrap();
            policies.question.params.sgd_step(0.1, 40.0).unwrap();
        }
        let probe = toy_trajectory(&policies, true, 0.0);
        let trace = policies.question.forward(&probe.decision_input);
        let probs = softmax(&policies.question.question_scores(&trace)).unwrap();
        assert!(probs[0] > 0.95, "ask probability {:.3}", probs[0]);
    }

    #[test]
    fn forced_no_ask_on_hidden_task_cannot_answer() {
        // Task 5 poor student, forced no-ask: the view hides every fact about
        // the question entity and the answer occurs nowhere else, so even a
        // perfect policy stays below 5%.
        let kb = generate_kb(&KbGenConfig::default()).unwrap();
        let templates = question_templates();
        let tok = Tokenizer::new(&kb);
        let policies = PolicyPair::new(&kb, MemConfig::default(), 1);
        let table = RewardTable::new(0.0).unwrap();
        let scenario =
            RLScenario { kind: ScenarioKind::Poor, task: TaskId::new(5).unwrap() };
        let mut hits = 0;
        for i in 0..200u64 {
            let mut rng = RngStream::new(33, i);
            let traj = run_rl_episode(
                &policies,
                scenario,
                &table,
                &kb,
                &tok,
                &templates,
                Split::Test,
                Mode::Greedy,
                Some(false),
                &mut rng,
            )
            .unwrap();
            hits += traj.correct as usize;
        }
        assert!(hits as f64 / 200.0 < 0.05);
    }

    #[test]
    fn forced_branches_share_the_pre_question_state() {
        let kb = generate_kb(&KbGenConfig::default()).unwrap();
        let templates = question_templates();
        let tok = Tokenizer::new(&kb);
        let policies = PolicyPair::new(&kb, MemConfig::default(), 1);
        let table = RewardTable::new(0.5).unwrap();
        let scenario =
            RLScenario { kind: ScenarioKind::Poor, task: TaskId::new(6).unwrap() };
        let run = |ask: bool| {
            let mut rng = RngStream::new(9, 42);
            run_rl_episode(
                &policies,
                scenario,
                &table,
                &kb,
                &tok,
                &templates,
                Split::Train,
                Mode::Greedy,
                Some(ask),
                &mut rng,
            )
            .unwrap()
        };
        let with_ask = run(true);
        let without = run(false);
        // Identical decision state; the ask branch only appends lines.
        assert_eq!(with_ask.decision_input.candidates, without.decision_input.candidates);
        assert!(with_ask.answer_input.memories.len() > without.answer_input.memories.len());
    }

    #[test]
    fn question_policy_gradient_check() {
        // Finite differences through the REINFORCE loss of the question head.
        let mem = MemConfig { dim: 4, ..Default::default() };
        let mut policies = PolicyPair {
            question: Model::new(ModelKind::Question, mem, tiny_vocab(), 5),
            answer_aq: Model::new(ModelKind::Answer, mem, tiny_vocab(), 2),
            answer_qa: Model::new(ModelKind::Answer, mem, tiny_vocab(), 3),
            baseline: Model::new(ModelKind::Baseline, mem, tiny_vocab(), 4),
        };
        let traj = toy_trajectory(&policies, true, 1.0);
        let adv = 0.6;
        let loss_of = |m: &Model| -> f64 {
            let trace = m.forward(&traj.decision_input);
            let probs = softmax(&m.question_scores(&trace)).unwrap();
            -adv * probs[0].max(1e-8).ln()
        };
        let trace = policies.question.forward(&traj.decision_input);
        let probs = softmax(&policies.question.question_scores(&trace)).unwrap();
        let mut dz = [probs[0] - 1.0, probs[1]];
        dz.iter_mut().for_each(|v| *v *= adv);
        policies.question.backward_question(&traj.decision_input, &trace, dz);
        let mut max_rel: f64 = 0.0;
        let names: Vec<String> =
            policies.question.params.names().map(|s| s.to_string()).collect();
        for name in names {
            let n = policies.question.params.get(&name).data.len();
            for idx in (0..n).step_by(3) {
                let eps = 1e-5;
                let orig = policies.question.params.get(&name).data[idx];
                policies.question.params.get_mut(&name).data[idx] = orig + eps;
                let lp = loss_of(&policies.question);
                policies.question.params.get_mut(&name).data[idx] = orig - eps;
                let lm = loss_of(&policies.question);
                policies.question.params.get_mut(&name).data[idx] = orig;
                let num = (lp - lm) / (2.0 * eps);
                let ana = policies.question.params.grad(&name).data[idx];
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-3, "max relative error {max_rel}");
        let _ = Matrix::zeros(1, 1);
    }
}
