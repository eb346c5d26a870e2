//! Dialogue episode generation for tasks 1-9 under the QA/AQ/Mix regimes,
//! plus the corpus file format (numbered, tab-separated lines) and its
//! parser/writer. Episode generation is pure in (seed, index): episode i of a
//! dataset is independent of generation order and worker count.

use crate::kb::{
    hide_facts, question_templates, sample_question, CorruptionScheme, Direction,
    EntityId, KBFact, KnowledgeBase, QuestionTemplate, Split, TaskId,
};
use crate::numerics::RngStream;
use indexmap::IndexSet;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("knowledge base too small: {0}")]
    KbTooSmall(String),
    #[error("could not build a valid episode after {0} retries")]
    RetriesExhausted(usize),
    #[error("corpus line {0}: {1}")]
    BadCorpusLine(usize, String),
    #[error("corpus line {0}: reward `{1}` not in {{0,1}}")]
    BadReward(usize, String),
    #[error("corpus line {0}: expected line number {1}")]
    BadNumbering(usize, usize),
    #[error("dangling episode metadata at end of corpus")]
    DanglingEpisode,
    #[error(transparent)]
    Kb(#[from] crate::kb::KbError),
}

/// How many times an episode draw is retried before giving up.
pub const MAX_RETRIES: usize = 20;

pub const POSITIVE_FEEDBACK: [&str; 6] = [
    "That's correct.",
    "Yes, that's right.",
    "Yes, exactly.",
    "Correct !",
    "Well done.",
    "Right on.",
];

pub const NEGATIVE_FEEDBACK: [&str; 6] = [
    "Sorry, that's not right.",
    "No, that's incorrect.",
    "Wrong.",
    "That's wrong.",
    "No, sorry.",
    "Not quite.",
];

/// Uniformly sample one of the six positive or six negative templates.
pub fn feedback_line(positive: bool, rng: &mut RngStream) -> String {
    let pool = if positive { &POSITIVE_FEEDBACK } else { &NEGATIVE_FEEDBACK };
    pool[rng.below(pool.len())].to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Qa,
    Aq,
    Mix,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Qa => "QA",
            Regime::Aq => "AQ",
            Regime::Mix => "Mix",
        }
    }

    pub fn parse(s: &str) -> Option<Regime> {
        match s {
            "QA" => Some(Regime::Qa),
            "AQ" => Some(Regime::Aq),
            "Mix" => Some(Regime::Mix),
            _ => None,
        }
    }
}

/// One line of dialogue. KB lines carry only teacher text; exchange lines
/// pair a teacher utterance with the student's; the single final-answer line
/// additionally carries the 0/1 reward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueLine {
    pub teacher_text: String,
    pub student_text: Option<String>,
    pub reward: Option<u8>,
    pub is_kb: bool,
}

impl DialogueLine {
    pub fn kb(text: String) -> Self {
        DialogueLine { teacher_text: text, student_text: None, reward: None, is_kb: true }
    }

    pub fn teacher(text: String) -> Self {
        DialogueLine { teacher_text: text, student_text: None, reward: None, is_kb: false }
    }

    pub fn exchange(teacher: String, student: String) -> Self {
        DialogueLine {
            teacher_text: teacher,
            student_text: Some(student),
            reward: None,
            is_kb: false,
        }
    }

    pub fn answer(teacher: String, student: String, reward: u8) -> Self {
        DialogueLine {
            teacher_text: teacher,
            student_text: Some(student),
            reward: Some(reward),
            is_kb: false,
        }
    }
}

/// Per-episode ground truth recorded next to the dialogue. Present on
/// simulator output; externally collected dialogues may omit it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeMeta {
    /// Token form of the entity the question is about.
    pub question_entity: String,
    pub relation: String,
    /// Token forms of all correct answers.
    pub answers: Vec<String>,
    pub asked: bool,
    /// For tasks with a question choice (2, 4): was the asked question
    /// relevant.
    pub asked_relevant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub task: Option<TaskId>,
    pub lines: Vec<DialogueLine>,
    pub meta: Option<EpisodeMeta>,
}

impl Episode {
    pub fn asked(&self) -> bool {
        if let Some(meta) = &self.meta {
            return meta.asked;
        }
        // Without metadata: any non-final student utterance ending in `?`
        // counts as a clarification question.
        self.lines
            .iter()
            .filter(|l| l.reward.is_none())
            .any(|l| l.student_text.as_deref().is_some_and(|s| s.trim_end().ends_with('?')))
    }

    pub fn regime(&self) -> Regime {
        if self.asked() {
            Regime::Aq
        } else {
            Regime::Qa
        }
    }

    pub fn reward(&self) -> Option<u8> {
        self.lines.iter().find_map(|l| l.reward)
    }

    /// Index of the line carrying the reward (the final answer exchange).
    pub fn answer_line(&self) -> Option<usize> {
        self.lines.iter().position(|l| l.reward.is_some())
    }

    /// Correct answers in token form. Falls back to the rewarded student
    /// answer when no metadata is present.
    pub fn answer_set(&self) -> Vec<String> {
        if let Some(meta) = &self.meta {
            return meta.answers.clone();
        }
        match self.answer_line() {
            Some(i) if self.lines[i].reward == Some(1) => {
                vec![self.lines[i].student_text.clone().unwrap_or_default()]
            }
            _ => Vec::new(),
        }
    }
}

/// Fixed student policy probabilities used during corpus generation.
#[derive(Debug, Clone, Copy)]
pub struct StudentScript {
    pub p_correct_answer: f64,
    pub p_relevant_question: f64,
}

impl Default for StudentScript {
    fn default() -> Self {
        StudentScript { p_correct_answer: 0.5, p_relevant_question: 0.5 }
    }
}

impl StudentScript {
    /// The evaluation-time policy: always correct, always relevant.
    pub fn perfect() -> Self {
        StudentScript { p_correct_answer: 1.0, p_relevant_question: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub task: TaskId,
    pub regime: Regime,
    pub split: Split,
    pub n_episodes: usize,
    pub seed: u64,
    pub script: StudentScript,
}

impl DatasetSpec {
    /// Script actually applied: test splits use the perfect policy.
    pub fn effective_script(&self) -> StudentScript {
        if self.split == Split::Test {
            StudentScript::perfect()
        } else {
            self.script
        }
    }
}

/// Five unrelated teacher-question / student-answer exchanges, disjoint from
/// the episode's question entity and answers. With `partition` set the history
/// questions stay inside that sub-population, so held-out-partition corpora
/// never leak unseen entities into the padding.
pub fn history_pad(
    kb: &KnowledgeBase,
    templates: &[QuestionTemplate],
    exclude: &[EntityId],
    partition: Option<Split>,
    rng: &mut RngStream,
) -> Result<Vec<DialogueLine>, SimError> {
    let mut out = Vec::with_capacity(5);
    let mut attempts = 0usize;
    while out.len() < 5 {
        attempts += 1;
        if attempts > 50 * 5 {
            return Err(SimError::KbTooSmall(
                "cannot find 5 history pairs disjoint from the question".into(),
            ));
        }
        let template_idx = rng.below(templates.len());
        let template = &templates[template_idx];
        let facts = kb.facts_with_relation(&template.relation);
        if facts.is_empty() {
            continue;
        }
        let fact = facts[rng.below(facts.len())];
        let q_entity = match template.direction {
            Direction::HeadToTail => fact.head,
            Direction::TailToHead => fact.tails[rng.below(fact.tails.len())],
        };
        if exclude.contains(&q_entity) {
            continue;
        }
        if let Some(p) = partition {
            if crate::kb::entity_partition(kb.entity(q_entity)) != Some(p) {
                continue;
            }
        }
        let answers = kb.answers(q_entity, &template.relation, template.direction);
        let allowed: Vec<EntityId> =
            answers.into_iter().filter(|a| !exclude.contains(a)).collect();
        if allowed.is_empty() {
            continue;
        }
        let paraphrase = rng.below(template.surfaces.len());
        let question = template.render(kb.entity(q_entity), paraphrase)?;
        let answer = kb.entity(allowed[rng.below(allowed.len())]).token();
        out.push(DialogueLine::exchange(question, answer));
    }
    Ok(out)
}

/// Everything needed to complete a dialogue after the student's (possible)
/// clarification question; shared between offline generation and RL rollouts.
#[derive(Debug, Clone)]
pub struct EpisodeDraw {
    pub task: TaskId,
    pub template_idx: usize,
    pub paraphrase_idx: usize,
    pub q_entity: EntityId,
    pub answers: Vec<EntityId>,
    /// Question as the teacher asks it (corrupted for tasks 1-2).
    pub question_text: String,
    /// Visible KB view after task-specific hiding.
    pub view: Vec<KBFact>,
    pub history: Vec<DialogueLine>,
}

impl EpisodeDraw {
    /// Sample a question, apply hiding and corruption, build the history.
    /// `flawed` disables the task flaw (corruption / hiding) when false,
    /// which the RL good-student scenario uses.
    pub fn sample(
        task: TaskId,
        kb: &KnowledgeBase,
        templates: &[QuestionTemplate],
        split: Split,
        flawed: bool,
        rng: &mut RngStream,
    ) -> Result<EpisodeDraw, SimError> {
        // Knowledge-acquisition tasks hold out whole entity sub-populations:
        // their dev/test questions concern entities never seen in training.
        // The other tasks draw questions from the full KB in every split.
        let partition = task.hides_facts().then_some(split);
        // Head-to-tail only for those tasks: see `sample_question`.
        let direction = task.hides_facts().then_some(Direction::HeadToTail);
        let q = sample_question(kb, templates, partition, direction, rng, 50 * MAX_RETRIES)?;
        let template = &templates[q.template_idx];
        let paraphrase_idx = rng.below(template.surfaces.len());
        let clean = template.render(kb.entity(q.q_entity), paraphrase_idx)?;
        let question_text = if flawed && task.corrupts_question() {
            CorruptionScheme::new(split).corrupt_question(&clean, template)
        } else {
            clean
        };
        let base_view = kb.relevant_facts(q.q_entity, &q.answers)?;
        let view = if flawed {
            hide_facts(&base_view, task, q.q_entity, &template.relation, &q.answers)
        } else {
            base_view
        };
        let mut exclude = vec![q.q_entity];
        exclude.extend(q.answers.iter().copied());
        // History mimics earlier training experience, so it always draws from
        // the train partition when the task holds out sub-populations.
        let hist_partition = task.hides_facts().then_some(Split::Train);
        let history = history_pad(kb, templates, &exclude, hist_partition, rng)?;
        Ok(EpisodeDraw {
            task,
            template_idx: q.template_idx,
            paraphrase_idx,
            q_entity: q.q_entity,
            answers: q.answers,
            question_text,
            view,
            history,
        })
    }

    /// The clean paraphrase the teacher uses when clarifying (a different
    /// surface than the one asked).
    pub fn other_paraphrase(
        &self,
        kb: &KnowledgeBase,
        templates: &[QuestionTemplate],
    ) -> String {
        let template = &templates[self.template_idx];
        let idx = (self.paraphrase_idx + 1) % template.surfaces.len();
        template.render(kb.entity(self.q_entity), idx).expect("index in range")
    }

    /// A KB fact linking the question entity to an answer (the gold fact for
    /// tasks 3 and 4), taken from the unhidden KB.
    pub fn gold_fact<'k>(
        &self,
        kb: &'k KnowledgeBase,
        templates: &[QuestionTemplate],
    ) -> Option<&'k KBFact> {
        let relation = &templates[self.template_idx].relation;
        kb.facts_mentioning(self.q_entity).into_iter().find(|f| {
            f.relation == *relation
                && self.answers.iter().any(|a| f.head == *a || f.tails.contains(a))
        })
    }

    /// Sample the student's final answer: a correct member with probability
    /// `p_correct`, otherwise a wrong entity visible in the episode.
    /// `revealed` pins the correct choice to the answer the teacher revealed.
    pub fn sample_answer(
        &self,
        kb: &KnowledgeBase,
        p_correct: f64,
        revealed: Option<EntityId>,
        rng: &mut RngStream,
    ) -> (EntityId, bool) {
        if rng.coin(p_correct) {
            let id = revealed.unwrap_or_else(|| self.answers[rng.below(self.answers.len())]);
            return (id, true);
        }
        let mut pool: IndexSet<EntityId> = IndexSet::new();
        for f in &self.view {
            pool.insert(f.head);
            pool.extend(f.tails.iter().copied());
        }
        for line in &self.history {
            if let Some(ans) = &line.student_text {
                if let Some(id) = kb.lookup(&ans.replace('_', " ")) {
                    pool.insert(id);
                }
                if let Some(id) = kb.lookup(ans) {
                    pool.insert(id);
                }
            }
        }
        let wrong: Vec<EntityId> =
            pool.into_iter().filter(|e| !self.answers.contains(e)).collect();
        if wrong.is_empty() {
            // Tiny views can leave no distractor; fall back to the whole KB.
            let all: Vec<EntityId> = kb
                .entities()
                .iter()
                .map(|e| e.id)
                .filter(|e| !self.answers.contains(e))
                .collect();
            (all[rng.below(all.len())], false)
        } else {
            (wrong[rng.below(wrong.len())], false)
        }
    }
}

/// The relevant and an irrelevant clarification question for the tasks with
/// a question choice (2 and 4). The relevant form paraphrases this episode's
/// question (task 2) or cites its gold fact (task 4); the irrelevant form
/// swaps in a different sampled entity or fact.
pub fn question_choices(
    draw: &EpisodeDraw,
    kb: &KnowledgeBase,
    templates: &[QuestionTemplate],
    rng: &mut RngStream,
) -> Result<(String, String), SimError> {
    match draw.task.0 {
        2 => {
            let template = &templates[draw.template_idx];
            let relevant = draw.other_paraphrase(kb, templates);
            let mut other = draw.q_entity;
            for _ in 0..MAX_RETRIES * 10 {
                let facts = kb.facts_with_relation(&template.relation);
                let f = facts[rng.below(facts.len())];
                let cand = match template.direction {
                    Direction::HeadToTail => f.head,
                    Direction::TailToHead => f.tails[rng.below(f.tails.len())],
                };
                if cand != draw.q_entity {
                    other = cand;
                    break;
                }
            }
            if other == draw.q_entity {
                return Err(SimError::RetriesExhausted(MAX_RETRIES * 10));
            }
            let idx = (draw.paraphrase_idx + 1) % template.surfaces.len();
            let irrelevant = template.render(kb.entity(other), idx)?;
            Ok((
                format!("Do you mean {} ?", relevant.trim_end_matches(" ?")),
                format!("Do you mean {} ?", irrelevant.trim_end_matches(" ?")),
            ))
        }
        4 => {
            let gold = draw
                .gold_fact(kb, templates)
                .ok_or_else(|| SimError::KbTooSmall("no gold fact to verify".into()))?;
            let others: Vec<&KBFact> = draw.view.iter().filter(|f| *f != gold).collect();
            if others.is_empty() {
                return Err(SimError::KbTooSmall("no irrelevant fact to verify".into()));
            }
            let wrong = others[rng.below(others.len())];
            Ok((
                format!("Does it have something to do with {} ?", kb.fact_text(gold)),
                format!("Does it have something to do with {} ?", kb.fact_text(wrong)),
            ))
        }
        t => Err(SimError::KbTooSmall(format!("task {t} has no question choice"))),
    }
}

/// The student's fixed clarification question for a task, and whether the
/// chosen form was relevant (verification tasks sample an irrelevant form).
struct AskedQuestion {
    student_text: String,
    /// Teacher reply lines that follow the student question.
    teacher_replies: Vec<String>,
    relevant: Option<bool>,
}

fn build_asked_question(
    draw: &EpisodeDraw,
    kb: &KnowledgeBase,
    templates: &[QuestionTemplate],
    script: &StudentScript,
    rng: &mut RngStream,
) -> Result<AskedQuestion, SimError> {
    let task = draw.task;
    match task.0 {
        1 => Ok(AskedQuestion {
            student_text: "What do you mean ?".to_string(),
            teacher_replies: vec![format!(
                "I mean {}",
                draw.other_paraphrase(kb, templates).trim_end_matches(" ?").to_string() + "."
            )],
            relevant: None,
        }),
        2 | 4 => {
            let relevant = rng.coin(script.p_relevant_question);
            let (rel_q, irr_q) = question_choices(draw, kb, templates, rng)?;
            let feedback = feedback_line(relevant, rng);
            Ok(AskedQuestion {
                student_text: if relevant { rel_q } else { irr_q },
                teacher_replies: vec![feedback],
                relevant: Some(relevant),
            })
        }
        3 => {
            let fact = draw
                .gold_fact(kb, templates)
                .ok_or_else(|| SimError::KbTooSmall("no gold fact for hint".into()))?;
            Ok(AskedQuestion {
                student_text: "Can you give me a hint ?".to_string(),
                teacher_replies: vec![format!(
                    "It is related to the kb fact that {}",
                    kb.fact_text(fact)
                )],
                relevant: None,
            })
        }
        _ => Ok(AskedQuestion {
            student_text: "I don't know. What's the answer?".to_string(),
            teacher_replies: Vec::new(), // answer reveal is added by the caller
            relevant: None,
        }),
    }
}

/// The pre-answer dialogue of an AQ episode, in the task's line order:
/// tasks 1-4 place KB view, history, the clarification exchange and the
/// teacher's reply; tasks 5-9 place KB view, the "I don't know" exchange,
/// the answer reveal, then history. Shared between corpus generation and RL
/// rollouts.
pub struct AqLines {
    pub lines: Vec<DialogueLine>,
    pub asked_relevant: Option<bool>,
    /// The entity revealed by "The answer is ..." (tasks 5-9 only).
    pub revealed: Option<EntityId>,
}

pub fn build_aq_lines(
    draw: &EpisodeDraw,
    kb: &KnowledgeBase,
    templates: &[QuestionTemplate],
    script: &StudentScript,
    rng: &mut RngStream,
) -> Result<AqLines, SimError> {
    let mut lines: Vec<DialogueLine> = Vec::new();
    for fact in &draw.view {
        lines.push(DialogueLine::kb(kb.fact_text(fact)));
    }
    let mut revealed = None;
    let asked = build_asked_question(draw, kb, templates, script, rng)?;
    if draw.task.0 <= 4 {
        lines.extend(draw.history.iter().cloned());
        lines.push(DialogueLine::exchange(
            draw.question_text.clone(),
            asked.student_text,
        ));
        for reply in asked.teacher_replies {
            lines.push(DialogueLine::teacher(reply));
        }
    } else {
        lines.push(DialogueLine::exchange(
            draw.question_text.clone(),
            asked.student_text,
        ));
        let reveal = draw.answers[rng.below(draw.answers.len())];
        revealed = Some(reveal);
        lines.push(DialogueLine::teacher(format!(
            "The answer is {}.",
            kb.entity(reveal).token()
        )));
        lines.extend(draw.history.iter().cloned());
    }
    Ok(AqLines { lines, asked_relevant: asked.relevant, revealed })
}

/// Generate one complete episode. `regime` must already be resolved to QA or
/// AQ (Mix is resolved per episode by the caller).
pub fn generate_episode(
    task: TaskId,
    regime: Regime,
    kb: &KnowledgeBase,
    templates: &[QuestionTemplate],
    script: &StudentScript,
    split: Split,
    rng: &mut RngStream,
) -> Result<Episode, SimError> {
    assert_ne!(regime, Regime::Mix, "resolve Mix before generate_episode");
    let mut last_err = None;
    for _ in 0..MAX_RETRIES {
        match try_generate(task, regime, kb, templates, script, split, rng) {
            Ok(ep) => return Ok(ep),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(SimError::RetriesExhausted(MAX_RETRIES)))
}

fn try_generate(
    task: TaskId,
    regime: Regime,
    kb: &KnowledgeBase,
    templates: &[QuestionTemplate],
    script: &StudentScript,
    split: Split,
    rng: &mut RngStream,
) -> Result<Episode, SimError> {
    let draw = EpisodeDraw::sample(task, kb, templates, split, true, rng)?;
    let template = &templates[draw.template_idx];
    let (mut lines, asked_relevant, revealed) = if regime == Regime::Qa {
        let mut lines: Vec<DialogueLine> =
            draw.view.iter().map(|f| DialogueLine::kb(kb.fact_text(f))).collect();
        lines.extend(draw.history.iter().cloned());
        (lines, None, None)
    } else {
        let aq = build_aq_lines(&draw, kb, templates, script, rng)?;
        (aq.lines, aq.asked_relevant, aq.revealed)
    };

    let (answer_id, correct) =
        draw.sample_answer(kb, script.p_correct_answer, revealed, rng);
    lines.push(DialogueLine::answer(
        draw.question_text.clone(),
        kb.entity(answer_id).token(),
        correct as u8,
    ));
    lines.push(DialogueLine::teacher(feedback_line(correct, rng)));

    let meta = EpisodeMeta {
        question_entity: kb.entity(draw.q_entity).token(),
        relation: template.relation.0.clone(),
        answers: draw.answers.iter().map(|a| kb.entity(*a).token()).collect(),
        asked: regime == Regime::Aq,
        asked_relevant,
    };
    Ok(Episode { task: Some(task), lines, meta: Some(meta) })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusHeader {
    pub task: Option<TaskId>,
    pub regime: Option<Regime>,
    pub split: Option<Split>,
    pub seed: Option<u64>,
    pub n_episodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub header: Option<CorpusHeader>,
    pub episodes: Vec<Episode>,
}

/// Generate a full dataset. Episode i is a pure function of (seed, i).
pub fn generate_dataset(spec: &DatasetSpec, kb: &KnowledgeBase) -> Result<Corpus, SimError> {
    let templates = question_templates();
    let script = spec.effective_script();
    let mut episodes = Vec::with_capacity(spec.n_episodes);
    for i in 0..spec.n_episodes {
        let mut rng = RngStream::new(spec.seed, i as u64);
        let regime = match spec.regime {
            Regime::Mix => {
                if rng.coin(0.5) {
                    Regime::Aq
                } else {
                    Regime::Qa
                }
            }
            r => r,
        };
        episodes.push(generate_episode(
            spec.task, regime, kb, &templates, &script, spec.split, &mut rng,
        )?);
    }
    Ok(Corpus {
        header: Some(CorpusHeader {
            task: Some(spec.task),
            regime: Some(spec.regime),
            split: Some(spec.split),
            seed: Some(spec.seed),
            n_episodes: Some(spec.n_episodes),
        }),
        episodes,
    })
}

/// Serialize a corpus. `parse_corpus(write_corpus(c))` reproduces `c`, and
/// re-serializing reproduces the bytes.
pub fn write_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    if let Some(h) = &corpus.header {
        out.push_str("# corpus");
        if let Some(t) = h.task {
            let _ = write!(out, " task={}", t.0);
        }
        if let Some(r) = h.regime {
            let _ = write!(out, " regime={}", r.name());
        }
        if let Some(s) = h.split {
            let _ = write!(out, " split={}", s.name());
        }
        if let Some(seed) = h.seed {
            let _ = write!(out, " seed={seed}");
        }
        if let Some(n) = h.n_episodes {
            let _ = write!(out, " n={n}");
        }
        out.push('\n');
    }
    for ep in &corpus.episodes {
        if let Some(meta) = &ep.meta {
            let _ = write!(
                out,
                "# episode q={} rel={} answers={}",
                meta.question_entity,
                meta.relation,
                meta.answers.join("|")
            );
            let _ = write!(out, " asked={}", meta.asked as u8);
            if let Some(rel) = meta.asked_relevant {
                let _ = write!(out, " relevant={}", rel as u8);
            }
            out.push('\n');
        }
        for (i, line) in ep.lines.iter().enumerate() {
            let _ = write!(out, "{} ", i + 1);
            if line.is_kb {
                out.push_str("kb: ");
            }
            out.push_str(&line.teacher_text);
            if let Some(s) = &line.student_text {
                out.push('\t');
                out.push_str(s);
            }
            if let Some(r) = line.reward {
                let _ = write!(out, "\t{r}");
            }
            out.push('\n');
        }
    }
    out
}

fn parse_header(line: &str) -> CorpusHeader {
    let mut h = CorpusHeader { task: None, regime: None, split: None, seed: None, n_episodes: None };
    for kv in line.split_whitespace() {
        if let Some((k, v)) = kv.split_once('=') {
            match k {
                "task" => h.task = v.parse().ok().and_then(TaskId::new),
                "regime" => h.regime = Regime::parse(v),
                "split" => h.split = Split::parse(v),
                "seed" => h.seed = v.parse().ok(),
                "n" => h.n_episodes = v.parse().ok(),
                _ => {}
            }
        }
    }
    h
}

fn parse_episode_meta(lineno: usize, line: &str) -> Result<EpisodeMeta, SimError> {
    let mut q = None;
    let mut rel = None;
    let mut answers = Vec::new();
    let mut asked = false;
    let mut asked_relevant = None;
    for kv in line.split_whitespace() {
        if let Some((k, v)) = kv.split_once('=') {
            match k {
                "q" => q = Some(v.to_string()),
                "rel" => rel = Some(v.to_string()),
                "answers" => answers = v.split('|').map(String::from).collect(),
                "asked" => asked = v == "1",
                "relevant" => asked_relevant = Some(v == "1"),
                _ => {}
            }
        }
    }
    match (q, rel) {
        (Some(question_entity), Some(relation)) => {
            Ok(EpisodeMeta { question_entity, relation, answers, asked, asked_relevant })
        }
        _ => Err(SimError::BadCorpusLine(lineno, "episode metadata missing q= or rel=".into())),
    }
}

/// Parse the corpus format. Numbering restarts at 1 on each new episode;
/// `# corpus` and `# episode` metadata lines are optional so that externally
/// collected dialogues in the bare numbered format also parse.
pub fn parse_corpus(source: &str) -> Result<Corpus, SimError> {
    let mut header = None;
    let mut episodes: Vec<Episode> = Vec::new();
    let mut current: Option<Episode> = None;
    let mut pending_meta: Option<EpisodeMeta> = None;
    let mut header_task: Option<TaskId> = None;

    for (i, raw) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# corpus") {
            let h = parse_header(rest);
            header_task = h.task;
            header = Some(h);
            continue;
        }
        if let Some(rest) = line.strip_prefix("# episode") {
            if let Some(ep) = current.take() {
                episodes.push(ep);
            }
            if pending_meta.is_some() {
                return Err(SimError::BadCorpusLine(lineno, "metadata without episode".into()));
            }
            pending_meta = Some(parse_episode_meta(lineno, rest)?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (num_str, rest) = line
            .split_once(' ')
            .ok_or_else(|| SimError::BadCorpusLine(lineno, line.to_string()))?;
        let num: usize = num_str
            .parse()
            .map_err(|_| SimError::BadCorpusLine(lineno, format!("bad line number `{num_str}`")))?;
        if num == 1 {
            if let Some(ep) = current.take() {
                episodes.push(ep);
            }
            current = Some(Episode {
                task: header_task,
                lines: Vec::new(),
                meta: pending_meta.take(),
            });
        }
        let ep = current
            .as_mut()
            .ok_or_else(|| SimError::BadNumbering(lineno, 1))?;
        if num != ep.lines.len() + 1 {
            return Err(SimError::BadNumbering(lineno, ep.lines.len() + 1));
        }
        let (is_kb, rest) = match rest.strip_prefix("kb: ") {
            Some(r) => (true, r),
            None => (false, rest),
        };
        let parts: Vec<&str> = rest.split('\t').collect();
        let dl = match parts.len() {
            1 => DialogueLine {
                teacher_text: parts[0].to_string(),
                student_text: None,
                reward: None,
                is_kb,
            },
            2 => DialogueLine {
                teacher_text: parts[0].to_string(),
                student_text: Some(parts[1].to_string()),
                reward: None,
                is_kb,
            },
            3 => {
                let reward = match parts[2] {
                    "0" => 0,
                    "1" => 1,
                    other => return Err(SimError::BadReward(lineno, other.to_string())),
                };
                DialogueLine {
                    teacher_text: parts[0].to_string(),
                    student_text: Some(parts[1].to_string()),
                    reward: Some(reward),
                    is_kb,
                }
            }
            _ => return Err(SimError::BadCorpusLine(lineno, line.to_string())),
        };
        ep.lines.push(dl);
    }
    if let Some(ep) = current.take() {
        episodes.push(ep);
    }
    if pending_meta.is_some() {
        return Err(SimError::DanglingEpisode);
    }
    Ok(Corpus { header, episodes })
}
