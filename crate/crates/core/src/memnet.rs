//! End-to-end memory network over bag-of-words utterances: a shared embedding
//! matrix, N hops of softmax attention over the episode's memories, and one of
//! several heads on the final controller state (answer ranking, teacher
//! feedback prediction, ask/answer policy, value baseline). All gradients are
//! hand-derived; `numerics::grad_check` keeps them honest.

use crate::kb::KnowledgeBase;
use crate::numerics::{fnv1a, softmax, Matrix, NumericsError, ParamStore, RngStream};
use crate::simulator::Episode;
use indexmap::IndexMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model file: {0}")]
    BadModel(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Splits text into tokens. Multi-word entity surfaces from the KB collapse
/// into single underscore-joined tokens; trailing punctuation becomes its own
/// token so `Forrest_Gump.` and `Forrest_Gump` are the same word.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    /// (surface, token) pairs, longest surface first so that titles that are
    /// prefixes of longer titles never clobber them.
    replacements: Vec<(String, String)>,
}

const TRAILING_PUNCT: [char; 4] = ['.', ',', '?', '!'];

impl Tokenizer {
    pub fn new(kb: &KnowledgeBase) -> Self {
        let mut replacements: Vec<(String, String)> = kb
            .entities()
            .iter()
            .filter(|e| e.surface.contains(' '))
            .map(|e| (e.surface.clone(), e.token()))
            .collect();
        replacements.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        Tokenizer { replacements }
    }

    /// A tokenizer with no entity lexicon: plain whitespace + punctuation.
    pub fn bare() -> Self {
        Tokenizer { replacements: Vec::new() }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut s = text.to_string();
        for (from, to) in &self.replacements {
            if s.contains(from.as_str()) {
                s = s.replace(from.as_str(), to);
            }
        }
        let mut out = Vec::new();
        for word in s.split_whitespace() {
            let trimmed = word.trim_end_matches(TRAILING_PUNCT);
            if trimmed.is_empty() {
                out.push(word.to_string());
                continue;
            }
            out.push(trimmed.to_string());
            for c in word[trimmed.len()..].chars() {
                out.push(c.to_string());
            }
        }
        out
    }
}

/// Frozen token-to-index map. Tokens unseen at build time never enter the
/// vocabulary; they are embedded with fixed hash-seeded vectors instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: IndexMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary { index: IndexMap::new() }
    }

    pub fn add(&mut self, token: &str) -> usize {
        if let Some(i) = self.index.get(token) {
            return *i;
        }
        let i = self.index.len();
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn add_all<'a>(&mut self, tokens: impl IntoIterator<Item = &'a str>) {
        for t in tokens {
            self.add(t);
        }
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        self.index.get_index(i).expect("index in range").0
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemConfig {
    pub dim: usize,
    pub hops: usize,
    /// Context half-window for word encoding. 0 is the plain bag-of-words
    /// model; w > 0 averages each word with its w neighbours on either side.
    pub context_window: usize,
    pub init_std: f64,
}

impl Default for MemConfig {
    fn default() -> Self {
        MemConfig { dim: 32, hops: 3, context_window: 0, init_std: 0.1 }
    }
}

/// Which head sits on top of the memory network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Answer ranking over in-memory candidates.
    Answer,
    /// Answer ranking plus the feedback-prediction head (adds `beta`).
    AnswerFp,
    /// Two-action ask/answer policy (adds `W_act`).
    Question,
    /// Scalar value estimate (adds `val_w`, `val_b`).
    Baseline,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Answer => "answer",
            ModelKind::AnswerFp => "answer_fp",
            ModelKind::Question => "question",
            ModelKind::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "answer" => Some(ModelKind::Answer),
            "answer_fp" => Some(ModelKind::AnswerFp),
            "question" => Some(ModelKind::Question),
            "baseline" => Some(ModelKind::Baseline),
            _ => None,
        }
    }
}

/// Sparse utterance encoding: a linear combination of embedding columns plus
/// a constant part from out-of-vocabulary words. The vector it denotes is
/// `sum(coeff * A[:, col]) + konst`, which makes the backward pass a plain
/// scatter of coefficients into the embedding gradient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Enc {
    pub coeffs: Vec<(usize, f64)>,
    pub konst: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub kind: ModelKind,
    pub config: MemConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

/// Memories, query and answer candidates of one episode, pre-encoded.
#[derive(Debug, Clone)]
pub struct EpisodeInput {
    pub memories: Vec<Enc>,
    pub query: Enc,
    /// Distinct non-punctuation tokens of the memories, first-seen order.
    pub candidates: Vec<String>,
    pub cand_encs: Vec<Enc>,
}

impl EpisodeInput {
    pub fn candidate_index(&self, token: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c == token)
    }
}

/// Forward pass record, everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct Trace {
    pub mvecs: Vec<Vec<f64>>,
    /// Controller states u_0 .. u_N.
    pub u: Vec<Vec<f64>>,
    /// Attention distribution per hop (empty when there are no memories).
    pub ps: Vec<Vec<f64>>,
    pub cand_vecs: Vec<Vec<f64>>,
    pub cand_scores: Vec<f64>,
    pub cand_probs: Vec<f64>,
}

/// Feedback-prediction forward record.
#[derive(Debug, Clone)]
pub struct FpTrace {
    pub pool_probs: Vec<f64>,
    pub u1: Vec<f64>,
    pub resp_vecs: Vec<Vec<f64>>,
    pub resp_probs: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

impl Model {
    pub fn new(kind: ModelKind, config: MemConfig, vocab: Vocabulary, seed: u64) -> Model {
        let mut params = ParamStore::new();
        let d = config.dim;
        let init = |name: &str, rows: usize, cols: usize| {
            let mut rng = RngStream::new(seed, fnv1a(name.as_bytes()));
            Matrix::randn(rows, cols, config.init_std, &mut rng)
        };
        let a = init("A", d, vocab.len().max(1));
        params.insert("A", a);
        // Separate output embedding for scoring candidates. Sharing A here
        // would let any token be "copied" out of memory by the inner product
        // of a vector with itself, even for tokens never seen in training;
        // with a distinct matrix that channel only exists where training has
        // aligned the two embeddings of a token.
        let b = init("B", d, vocab.len().max(1));
        params.insert("B", b);
        match kind {
            ModelKind::Answer => {}
            ModelKind::AnswerFp => params.insert("beta", init("beta", d, 1)),
            ModelKind::Question => params.insert("W_act", init("W_act", d, 2)),
            ModelKind::Baseline => {
                params.insert("val_w", init("val_w", d, 1));
                params.insert("val_b", Matrix::zeros(1, 1));
            }
        }
        Model { kind, config, vocab, params }
    }

    /// Fixed embedding for an out-of-vocabulary token: seeded by the token's
    /// own hash, matched to the trainable init scale, never updated. The
    /// input ("A") and output ("B") roles draw independent vectors, mirroring
    /// the independent initialization of the trainable matrices.
    pub fn unseen_embedding(&self, token: &str) -> Vec<f64> {
        self.unseen_embedding_in(token, "A")
    }

    fn unseen_embedding_in(&self, token: &str, mat: &'static str) -> Vec<f64> {
        let mut rng = RngStream::new(
            fnv1a(token.as_bytes()),
            fnv1a(b"oov-embedding") ^ fnv1a(mat.as_bytes()),
        );
        (0..self.config.dim).map(|_| rng.normal() * self.config.init_std).collect()
    }

    /// Encode one utterance. Each word position contributes the mean of the
    /// embeddings in its context window (just itself when the window is 0).
    pub fn encode_utterance(&self, tokens: &[String]) -> Enc {
        let w = self.config.context_window;
        let mut coeffs: IndexMap<usize, f64> = IndexMap::new();
        let mut konst: Option<Vec<f64>> = None;
        for j in 0..tokens.len() {
            let lo = j.saturating_sub(w);
            let hi = (j + w).min(tokens.len().saturating_sub(1));
            let cnt = (hi - lo + 1) as f64;
            for t in &tokens[lo..=hi] {
                self.accumulate(&mut coeffs, &mut konst, t, 1.0 / cnt, "A");
            }
        }
        Enc { coeffs: coeffs.into_iter().collect(), konst }
    }

    fn accumulate(
        &self,
        coeffs: &mut IndexMap<usize, f64>,
        konst: &mut Option<Vec<f64>>,
        token: &str,
        weight: f64,
        mat: &'static str,
    ) {
        match self.vocab.get(token) {
            Some(col) => *coeffs.entry(col).or_insert(0.0) += weight,
            None => {
                let k = konst.get_or_insert_with(|| vec![0.0; self.config.dim]);
                axpy(k, weight, &self.unseen_embedding_in(token, mat));
            }
        }
    }

    /// Candidate representation: its bare embedding column for window 0,
    /// otherwise the mean context-windowed encoding over all its occurrences
    /// in the memories.
    fn encode_candidate(&self, token: &str, memory_lines: &[Vec<String>]) -> Enc {
        let w = self.config.context_window;
        if w == 0 {
            return match self.vocab.get(token) {
                Some(col) => Enc { coeffs: vec![(col, 1.0)], konst: None },
                None => Enc {
                    coeffs: Vec::new(),
                    konst: Some(self.unseen_embedding_in(token, "B")),
                },
            };
        }
        let mut coeffs: IndexMap<usize, f64> = IndexMap::new();
        let mut konst: Option<Vec<f64>> = None;
        let mut occurrences = 0usize;
        for line in memory_lines {
            for (j, t) in line.iter().enumerate() {
                if t != token {
                    continue;
                }
                occurrences += 1;
                let lo = j.saturating_sub(w);
                let hi = (j + w).min(line.len() - 1);
                let cnt = (hi - lo + 1) as f64;
                for ctx in &line[lo..=hi] {
                    self.accumulate(&mut coeffs, &mut konst, ctx, 1.0 / cnt, "B");
                }
            }
        }
        let scale = 1.0 / occurrences.max(1) as f64;
        for (_, v) in coeffs.iter_mut() {
            *v *= scale;
        }
        if let Some(k) = &mut konst {
            k.iter_mut().for_each(|v| *v *= scale);
        }
        Enc { coeffs: coeffs.into_iter().collect(), konst }
    }

    /// Build the full episode input from tokenized memory lines and a query.
    pub fn encode_episode(&self, memory_lines: &[Vec<String>], query: &[String]) -> EpisodeInput {
        let memories = memory_lines.iter().map(|l| self.encode_utterance(l)).collect();
        let query = self.encode_utterance(query);
        let mut candidates: Vec<String> = Vec::new();
        for line in memory_lines {
            for t in line {
                if t.len() == 1 && t.chars().all(|c| TRAILING_PUNCT.contains(&c)) {
                    continue;
                }
                if !candidates.iter().any(|c| c == t) {
                    candidates.push(t.clone());
                }
            }
        }
        let cand_encs =
            candidates.iter().map(|c| self.encode_candidate(c, memory_lines)).collect();
        EpisodeInput { memories, query, candidates, cand_encs }
    }

    /// Materialize the vector an encoding denotes under the input embedding.
    pub fn vec_of(&self, enc: &Enc) -> Vec<f64> {
        self.vec_of_in(enc, "A")
    }

    /// Materialize the vector an encoding denotes under the output embedding
    /// (candidate side).
    pub fn vec_of_out(&self, enc: &Enc) -> Vec<f64> {
        self.vec_of_in(enc, "B")
    }

    fn vec_of_in(&self, enc: &Enc, mat: &'static str) -> Vec<f64> {
        let a = self.params.get(mat);
        let mut v = enc.konst.clone().unwrap_or_else(|| vec![0.0; self.config.dim]);
        for (col, wgt) in &enc.coeffs {
            for r in 0..a.rows {
                v[r] += wgt * a.get(r, *col);
            }
        }
        v
    }

    fn add_enc_grad(&mut self, enc: &Enc, scale: f64, d: &[f64]) {
        self.add_enc_grad_in(enc, scale, d, "A");
    }

    fn add_enc_grad_out(&mut self, enc: &Enc, scale: f64, d: &[f64]) {
        self.add_enc_grad_in(enc, scale, d, "B");
    }

    fn add_enc_grad_in(&mut self, enc: &Enc, scale: f64, d: &[f64], mat: &'static str) {
        let g = self.params.grad_mut(mat);
        for (col, wgt) in &enc.coeffs {
            for r in 0..g.rows {
                *g.get_mut(r, *col) += wgt * scale * d[r];
            }
        }
    }

    pub fn forward(&self, input: &EpisodeInput) -> Trace {
        let mvecs: Vec<Vec<f64>> = input.memories.iter().map(|m| self.vec_of(m)).collect();
        let mut u = vec![self.vec_of(&input.query)];
        let mut ps = Vec::with_capacity(self.config.hops);
        for _ in 0..self.config.hops {
            let prev = u.last().expect("u_0 present").clone();
            if mvecs.is_empty() {
                ps.push(Vec::new());
                u.push(prev);
                continue;
            }
            let scores: Vec<f64> = mvecs.iter().map(|m| dot(&prev, m)).collect();
            let p = softmax(&scores).expect("non-empty memories");
            let mut next = prev;
            for (pi, m) in p.iter().zip(&mvecs) {
                axpy(&mut next, *pi, m);
            }
            ps.push(p);
            u.push(next);
        }
        let u_n = u.last().expect("u_N present");
        let cand_vecs: Vec<Vec<f64>> =
            input.cand_encs.iter().map(|c| self.vec_of_out(c)).collect();
        let cand_scores: Vec<f64> = cand_vecs.iter().map(|y| dot(u_n, y)).collect();
        let cand_probs = if cand_scores.is_empty() {
            Vec::new()
        } else {
            softmax(&cand_scores).expect("non-empty candidates")
        };
        Trace { mvecs, u, ps, cand_vecs, cand_scores, cand_probs }
    }

    /// Backpropagate: `d_scores` is dLoss/d(candidate score); `d_u_extra` is
    /// any additional gradient arriving at u_N from other heads.
    pub fn backward(
        &mut self,
        input: &EpisodeInput,
        trace: &Trace,
        d_scores: &[f64],
        d_u_extra: Option<&[f64]>,
    ) {
        let d = self.config.dim;
        let u_n = trace.u.last().expect("u_N present").clone();
        let mut du = vec![0.0; d];
        if let Some(extra) = d_u_extra {
            axpy(&mut du, 1.0, extra);
        }
        for (c, dz) in d_scores.iter().enumerate() {
            if *dz == 0.0 {
                continue;
            }
            axpy(&mut du, *dz, &trace.cand_vecs[c]);
            self.add_enc_grad_out(&input.cand_encs[c].clone(), *dz, &u_n);
        }

        let m = trace.mvecs.len();
        let mut dmem = vec![vec![0.0; d]; m];
        for k in (0..self.config.hops).rev() {
            if m == 0 {
                continue;
            }
            let p = &trace.ps[k];
            let u_prev = &trace.u[k];
            // u_{k+1} = u_k + sum_i p_i m_i; du flows through both terms.
            let d_o = du.clone();
            let dp: Vec<f64> = trace.mvecs.iter().map(|mv| dot(&d_o, mv)).collect();
            let s_dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for i in 0..m {
                axpy(&mut dmem[i], p[i], &d_o);
                let ds = p[i] * (dp[i] - s_dot);
                axpy(&mut du, ds, &trace.mvecs[i]);
                axpy(&mut dmem[i], ds, u_prev);
            }
        }
        for (enc, dm) in input.memories.clone().iter().zip(&dmem) {
            self.add_enc_grad(enc, 1.0, dm);
        }
        self.add_enc_grad(&input.query.clone(), 1.0, &du);
    }

    /// Cross-entropy on the answer head. Returns `scale * nll` and, when
    /// `accumulate` is set, adds the matching gradients.
    pub fn answer_loss(
        &mut self,
        input: &EpisodeInput,
        trace: &Trace,
        gold: usize,
        scale: f64,
        accumulate: bool,
    ) -> f64 {
        let p = trace.cand_probs[gold].max(1e-300);
        let loss = -p.ln() * scale;
        if accumulate {
            let mut dz = trace.cand_probs.clone();
            dz[gold] -= 1.0;
            dz.iter_mut().for_each(|v| *v *= scale);
            self.backward(input, trace, &dz, None);
        }
        loss
    }

    /// Feedback-prediction forward pass. The pool of considered actions is
    /// the episode's answer candidates; `asked` is the answer actually given.
    /// With a single candidate the pool distribution is the point mass, so
    /// the mixed state is exactly `y_asked + beta + u_N`.
    pub fn forward_fp(
        &self,
        _input: &EpisodeInput,
        trace: &Trace,
        asked: usize,
        responses: &[Enc],
    ) -> FpTrace {
        assert_eq!(self.kind, ModelKind::AnswerFp, "fp head requires AnswerFp model");
        let u_n = trace.u.last().expect("u_N present");
        let pool_probs = if trace.cand_scores.len() == 1 {
            vec![1.0]
        } else {
            softmax(&trace.cand_scores).expect("non-empty pool")
        };
        let beta = self.params.get("beta").col(0);
        let mut o = vec![0.0; self.config.dim];
        for (a, pa) in pool_probs.iter().enumerate() {
            axpy(&mut o, *pa, &trace.cand_vecs[a]);
        }
        axpy(&mut o, pool_probs[asked], &beta);
        let mut u1 = o;
        axpy(&mut u1, 1.0, u_n);
        let resp_vecs: Vec<Vec<f64>> = responses.iter().map(|r| self.vec_of(r)).collect();
        let resp_scores: Vec<f64> = resp_vecs.iter().map(|r| dot(&u1, r)).collect();
        let resp_probs = softmax(&resp_scores).expect("non-empty responses");
        FpTrace { pool_probs, u1, resp_vecs, resp_probs }
    }

    /// Cross-entropy on the predicted teacher response. Returns the loss and
    /// the gradient arriving at u_N, to be combined with the answer head's in
    /// a single `backward` call.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_fp(
        &mut self,
        input: &EpisodeInput,
        trace: &Trace,
        fp: &FpTrace,
        asked: usize,
        responses: &[Enc],
        gold_resp: usize,
        scale: f64,
    ) -> (f64, Vec<f64>) {
        let d = self.config.dim;
        let u_n = trace.u.last().expect("u_N present").clone();
        let loss = -fp.resp_probs[gold_resp].max(1e-300).ln() * scale;

        let mut d_u1 = vec![0.0; d];
        for (r, enc) in responses.iter().enumerate() {
            let dz = scale * (fp.resp_probs[r] - (r == gold_resp) as usize as f64);
            if dz == 0.0 {
                continue;
            }
            axpy(&mut d_u1, dz, &fp.resp_vecs[r]);
            self.add_enc_grad(&enc.clone(), dz, &fp.u1);
        }

        // u1 = o + u_N.
        let d_o = d_u1.clone();
        let mut d_un = d_u1;

        let beta = self.params.get("beta").col(0);
        let pool = fp.pool_probs.len();
        let mut dp = vec![0.0; pool];
        for a in 0..pool {
            dp[a] = dot(&d_o, &trace.cand_vecs[a]);
            if a == asked {
                dp[a] += dot(&d_o, &beta);
            }
            self.add_enc_grad_out(&input.cand_encs[a].clone(), fp.pool_probs[a], &d_o);
        }
        {
            let gbeta = self.params.grad_mut("beta");
            for r in 0..d {
                *gbeta.get_mut(r, 0) += fp.pool_probs[asked] * d_o[r];
            }
        }
        if pool > 1 {
            let s_dot: f64 = fp.pool_probs.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for a in 0..pool {
                let ds = fp.pool_probs[a] * (dp[a] - s_dot);
                axpy(&mut d_un, ds, &trace.cand_vecs[a]);
                self.add_enc_grad_out(&input.cand_encs[a].clone(), ds, &u_n);
            }
        }
        (loss, d_un)
    }

    /// Ask/answer action scores from u_N: index 0 = ask, 1 = answer directly.
    pub fn question_scores(&self, trace: &Trace) -> [f64; 2] {
        assert_eq!(self.kind, ModelKind::Question, "question head required");
        let w = self.params.get("W_act");
        let u_n = trace.u.last().expect("u_N present");
        [
            (0..w.rows).map(|r| u_n[r] * w.get(r, 0)).sum(),
            (0..w.rows).map(|r| u_n[r] * w.get(r, 1)).sum(),
        ]
    }

    pub fn backward_question(&mut self, input: &EpisodeInput, trace: &Trace, d_scores: [f64; 2]) {
        let d = self.config.dim;
        let u_n = trace.u.last().expect("u_N present").clone();
        let mut d_un = vec![0.0; d];
        {
            let w = self.params.get("W_act").clone();
            let g = self.params.grad_mut("W_act");
            for j in 0..2 {
                for r in 0..d {
                    *g.get_mut(r, j) += d_scores[j] * u_n[r];
                    d_un[r] += d_scores[j] * w.get(r, j);
                }
            }
        }
        self.backward(input, trace, &[], Some(&d_un));
    }

    /// Scalar value estimate from u_N.
    pub fn baseline_value(&self, trace: &Trace) -> f64 {
        assert_eq!(self.kind, ModelKind::Baseline, "baseline head required");
        let w = self.params.get("val_w");
        let u_n = trace.u.last().expect("u_N present");
        let b = self.params.get("val_b").get(0, 0);
        (0..w.rows).map(|r| u_n[r] * w.get(r, 0)).sum::<f64>() + b
    }

    /// Squared-error loss `(value - target)^2`, gradients into the baseline's
    /// own parameters only.
    pub fn baseline_loss(
        &mut self,
        input: &EpisodeInput,
        trace: &Trace,
        target: f64,
        accumulate: bool,
    ) -> f64 {
        let v = self.baseline_value(trace);
        let loss = (v - target) * (v - target);
        if accumulate {
            let dv = 2.0 * (v - target);
            let d = self.config.dim;
            let u_n = trace.u.last().expect("u_N present").clone();
            let mut d_un = vec![0.0; d];
            {
                let w = self.params.get("val_w").clone();
                let g = self.params.grad_mut("val_w");
                for r in 0..d {
                    *g.get_mut(r, 0) += dv * u_n[r];
                    d_un[r] = dv * w.get(r, 0);
                }
            }
            *self.params.grad_mut("val_b").get_mut(0, 0) += dv;
            self.backward(input, trace, &[], Some(&d_un));
        }
        loss
    }

    /// Serialize model kind, config, vocabulary and weights to text.
    pub fn save(&self) -> String {
        let mut out = String::new();
        out.push_str("asklearn-model v1\n");
        let _ = writeln!(out, "kind {}", self.kind.name());
        let _ = writeln!(out, "dim {}", self.config.dim);
        let _ = writeln!(out, "hops {}", self.config.hops);
        let _ = writeln!(out, "context_window {}", self.config.context_window);
        let _ = writeln!(out, "init_std {:?}", self.config.init_std);
        let _ = writeln!(out, "vocab {}", self.vocab.len());
        for i in 0..self.vocab.len() {
            out.push_str(self.vocab.token(i));
            out.push('\n');
        }
        out.push_str(&self.params.to_checkpoint());
        out
    }

    pub fn load(text: &str) -> Result<Model, ModelError> {
        let mut lines = text.lines();
        let magic = lines.next().ok_or_else(|| ModelError::BadModel("empty file".into()))?;
        if magic != "asklearn-model v1" {
            return Err(ModelError::BadModel(format!("bad magic `{magic}`")));
        }
        let mut field = |name: &str| -> Result<String, ModelError> {
            let line = lines
                .next()
                .ok_or_else(|| ModelError::BadModel(format!("missing `{name}`")))?;
            line.strip_prefix(&format!("{name} "))
                .map(String::from)
                .ok_or_else(|| ModelError::BadModel(format!("expected `{name}`, got `{line}`")))
        };
        let kind = ModelKind::parse(&field("kind")?)
            .ok_or_else(|| ModelError::BadModel("unknown kind".into()))?;
        let dim: usize =
            field("dim")?.parse().map_err(|_| ModelError::BadModel("bad dim".into()))?;
        let hops: usize =
            field("hops")?.parse().map_err(|_| ModelError::BadModel("bad hops".into()))?;
        let context_window: usize = field("context_window")?
            .parse()
            .map_err(|_| ModelError::BadModel("bad context_window".into()))?;
        let init_std: f64 = field("init_std")?
            .parse()
            .map_err(|_| ModelError::BadModel("bad init_std".into()))?;
        let vocab_len: usize =
            field("vocab")?.parse().map_err(|_| ModelError::BadModel("bad vocab".into()))?;
        let mut vocab = Vocabulary::new();
        for _ in 0..vocab_len {
            let tok = lines
                .next()
                .ok_or_else(|| ModelError::BadModel("truncated vocabulary".into()))?;
            vocab.add(tok);
        }
        let rest: Vec<&str> = lines.collect();
        let params = ParamStore::from_checkpoint(&(rest.join("\n") + "\n"))?;
        Ok(Model {
            kind,
            config: MemConfig { dim, hops, context_window, init_std },
            vocab,
            params,
        })
    }
}

/// Tokenized view of one episode from the answering student's perspective:
/// everything before the final answer line is memory, the final question is
/// the query.
#[derive(Debug, Clone)]
pub struct EpisodeText {
    pub memory_lines: Vec<Vec<String>>,
    pub query: Vec<String>,
    /// The answer the student gave on the rewarded line.
    pub student_answer: Option<String>,
    /// Raw teacher feedback text following the answer line.
    pub feedback: Option<String>,
    pub reward: Option<u8>,
}

/// Extract the model-facing text of an episode. `None` when the episode has
/// no reward-carrying answer line.
pub fn episode_text(ep: &Episode, tok: &Tokenizer) -> Option<EpisodeText> {
    let answer_idx = ep.answer_line()?;
    let mut memory_lines = Vec::new();
    for line in &ep.lines[..answer_idx] {
        let mut toks = tok.tokenize(&line.teacher_text);
        if let Some(s) = &line.student_text {
            toks.extend(tok.tokenize(s));
        }
        memory_lines.push(toks);
    }
    let answer_line = &ep.lines[answer_idx];
    Some(EpisodeText {
        memory_lines,
        query: tok.tokenize(&answer_line.teacher_text),
        student_answer: answer_line.student_text.clone(),
        feedback: ep.lines.get(answer_idx + 1).map(|l| l.teacher_text.clone()),
        reward: answer_line.reward,
    })
}

/// Fixed dialogue phrases that are not KB content or template text.
const FIXED_PHRASES: [&str; 8] = [
    "What do you mean ?",
    "I mean",
    "Do you mean",
    "Can you give me a hint ?",
    "It is related to the kb fact that",
    "Does it have something to do with",
    "I don't know. What's the answer?",
    "The answer is",
];

/// The shared vocabulary, derived from the KB alone so every model trained on
/// the same KB agrees on token indices: entity tokens, relation names,
/// template words, fixed phrases, feedback lines, and the train-split
/// misspellings. Dev/test misspellings deliberately stay out-of-vocabulary.
pub fn build_vocab(kb: &KnowledgeBase, tok: &Tokenizer) -> Vocabulary {
    let mut v = Vocabulary::new();
    for e in kb.entities() {
        v.add(&e.token());
    }
    for r in &kb.relations {
        v.add(&r.0);
    }
    for t in crate::kb::question_templates() {
        for s in &t.surfaces {
            for w in tok.tokenize(&s.replace("{}", " ")) {
                v.add(&w);
            }
        }
    }
    // Corrupted keywords are deliberately left out: the misspellings stand in
    // for words the student does not know, so they stay out-of-vocabulary in
    // every split. Giving the train-split corruptions trained embeddings
    // would let the model read the relation straight out of the typo.
    for phrase in FIXED_PHRASES.iter().chain(response_pool().iter()) {
        for w in tok.tokenize(phrase) {
            v.add(&w);
        }
    }
    v
}

/// The closed set of teacher responses the feedback-prediction head ranks.
pub fn response_pool() -> Vec<&'static str> {
    let mut out = Vec::with_capacity(12);
    out.extend(crate::simulator::POSITIVE_FEEDBACK);
    out.extend(crate::simulator::NEGATIVE_FEEDBACK);
    out
}

/// Index of a teacher response in the pool, by exact text match.
pub fn response_index(text: &str) -> Option<usize> {
    response_pool().iter().position(|r| *r == text)
}

/// Pre-encode the response pool under a model's vocabulary.
pub fn encode_response_pool(model: &Model, tok: &Tokenizer) -> Vec<Enc> {
    response_pool()
        .iter()
        .map(|r| model.encode_utterance(&tok.tokenize(r)))
        .collect()
}
