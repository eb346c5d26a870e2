//! Dense linear algebra primitives, softmax, SGD with gradient clipping,
//! seeded RNG streams and a finite-difference gradient checker.
//!
//! Everything is f64 and deliberately simple: models in this crate are small
//! enough that hand-rolled loops beat any framework overhead, and exact
//! reproducibility matters more than speed.

use indexmap::IndexMap;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("softmax over empty input")]
    EmptyInput,
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("loss function is not deterministic: {0} vs {1}")]
    NonDeterministicLoss(f64, f64),
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Gaussian init with the given std, drawn from `rng`.
    pub fn randn(rows: usize, cols: usize, std: f64, rng: &mut RngStream) -> Self {
        let data = (0..rows * cols).map(|_| rng.normal() * std).collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// Column `c` copied into a Vec (used for embedding lookups).
    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Named parameter matrices with parallel gradient accumulators.
#[derive(Debug, Clone)]
pub struct ParamStore {
    params: IndexMap<String, Matrix>,
    grads: IndexMap<String, Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { params: IndexMap::new(), grads: IndexMap::new() }
    }

    pub fn insert(&mut self, name: &str, m: Matrix) {
        self.grads.insert(name.to_string(), Matrix::zeros(m.rows, m.cols));
        self.params.insert(name.to_string(), m);
    }

    pub fn get(&self, name: &str) -> &Matrix {
        self.params.get(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Matrix {
        self.params.get_mut(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn grad(&self, name: &str) -> &Matrix {
        self.grads.get(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut Matrix {
        self.grads.get_mut(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// One SGD step: each gradient is rescaled so its L2 norm is at most
    /// `clip`, then `p -= lr * g`, then gradients are zeroed.
    pub fn sgd_step(&mut self, lr: f64, clip: f64) -> Result<(), NumericsError> {
        for (name, g) in self.grads.iter_mut() {
            if g.data.iter().any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFiniteGradient(name.clone()));
            }
            let norm = g.l2_norm();
            let scale = if norm > clip { clip / norm } else { 1.0 };
            let p = self.params.get_mut(name).expect("param/grad maps in sync");
            for (pv, gv) in p.data.iter_mut().zip(g.data.iter()) {
                *pv -= lr * scale * gv;
            }
            g.data.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.params.values().map(|m| m.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Serialize to the text checkpoint format: a header naming every matrix
    /// and its shape, then one block of whitespace-separated rows per matrix.
    /// f64 values use the shortest round-trip decimal form.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        out.push_str("asklearn-checkpoint v1\n");
        let _ = writeln!(out, "matrices {}", self.params.len());
        for (name, m) in &self.params {
            let _ = writeln!(out, "{} {} {}", name, m.rows, m.cols);
        }
        for m in self.params.values() {
            for r in 0..m.rows {
                let row: Vec<String> =
                    (0..m.cols).map(|c| format!("{:?}", m.get(r, c))).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, NumericsError> {
        let mut lines = text.lines();
        let magic = lines.next().ok_or_else(|| NumericsError::BadCheckpoint("empty".into()))?;
        if magic != "asklearn-checkpoint v1" {
            return Err(NumericsError::BadCheckpoint(format!("bad magic `{magic}`")));
        }
        let count_line =
            lines.next().ok_or_else(|| NumericsError::BadCheckpoint("missing count".into()))?;
        let n: usize = count_line
            .strip_prefix("matrices ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| NumericsError::BadCheckpoint(format!("bad count `{count_line}`")))?;
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let line =
                lines.next().ok_or_else(|| NumericsError::BadCheckpoint("missing shape".into()))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(NumericsError::BadCheckpoint(format!("bad shape line `{line}`")));
            }
            let rows: usize = parts[1]
                .parse()
                .map_err(|_| NumericsError::BadCheckpoint(format!("bad rows in `{line}`")))?;
            let cols: usize = parts[2]
                .parse()
                .map_err(|_| NumericsError::BadCheckpoint(format!("bad cols in `{line}`")))?;
            shapes.push((parts[0].to_string(), rows, cols));
        }
        let mut store = ParamStore::new();
        for (name, rows, cols) in shapes {
            let mut m = Matrix::zeros(rows, cols);
            for r in 0..rows {
                let line = lines
                    .next()
                    .ok_or_else(|| NumericsError::BadCheckpoint(format!("truncated `{name}`")))?;
                let vals: Vec<&str> = line.split_whitespace().collect();
                if vals.len() != cols {
                    return Err(NumericsError::BadCheckpoint(format!(
                        "row width {} != {cols} in `{name}`",
                        vals.len()
                    )));
                }
                for (c, v) in vals.iter().enumerate() {
                    *m.get_mut(r, c) = v.parse().map_err(|_| {
                        NumericsError::BadCheckpoint(format!("bad value `{v}` in `{name}`"))
                    })?;
                }
            }
            store.insert(&name, m);
        }
        Ok(store)
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if scores.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Deterministic RNG stream: identical (seed, stream id, draw index) always
/// yields the identical value, independent of every other stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.rng.gen_range(0..n)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1: f64 = self.uniform().max(1e-300);
        let u2: f64 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// FNV-1a, used wherever a stable content hash is needed (split assignment,
/// unseen-word vectors). std's hasher is randomized and unusable here.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Compare analytic gradients against central finite differences on a sample
/// of coordinates. `loss_fn` must populate gradients in `params` and return
/// the loss; it is also called in evaluate-only mode (flag false) for the
/// perturbed evaluations.
///
/// Returns the maximum relative error `|a - n| / max(|a|, |n|, 1e-8)` over the
/// sampled coordinates.
pub fn grad_check<F>(
    mut loss_fn: F,
    params: &mut ParamStore,
    epsilon: f64,
    max_coords: usize,
    rng: &mut RngStream,
) -> Result<f64, NumericsError>
where
    F: FnMut(&mut ParamStore, bool) -> f64,
{
    params.zero_grads();
    let l0 = loss_fn(params, true);
    let l0_check = {
        let mut probe = params.clone();
        loss_fn(&mut probe, false)
    };
    if (l0 - l0_check).abs() > 1e-12 {
        return Err(NumericsError::NonDeterministicLoss(l0, l0_check));
    }

    // Flat index space over all parameters, sampled without replacement.
    let names: Vec<String> = params.names().map(String::from).collect();
    let mut coords: Vec<(String, usize)> = Vec::new();
    for name in &names {
        let len = params.get(name).data.len();
        for i in 0..len {
            coords.push((name.clone(), i));
        }
    }
    rng.shuffle(&mut coords);
    coords.truncate(max_coords.max(1));

    let mut max_rel = 0.0f64;
    for (name, i) in coords {
        let analytic = params.grad(&name).data[i];
        let orig = params.get(&name).data[i];

        params.get_mut(&name).data[i] = orig + epsilon;
        let lp = loss_fn(params, false);
        params.get_mut(&name).data[i] = orig - epsilon;
        let lm = loss_fn(params, false);
        params.get_mut(&name).data[i] = orig;

        let numeric = (lp - lm) / (2.0 * epsilon);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetry() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_closed_form() {
        let p = softmax(&[0.0, 3.0f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let big = softmax(&[1000.0, 1001.0]).unwrap();
        let small = softmax(&[0.0, 1.0]).unwrap();
        assert!(big.iter().all(|v| v.is_finite()));
        for (a, b) in big.iter().zip(small.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let sum: f64 = big.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_empty_errors() {
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut store = ParamStore::new();
        store.insert("w", Matrix { rows: 1, cols: 3, data: vec![1.0, 2.0, 3.0] });
        store.grad_mut("w").data.copy_from_slice(&[5.0, 5.0, 5.0]);
        store.sgd_step(0.0, 40.0).unwrap();
        assert_eq!(store.get("w").data, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sgd_clips_to_half() {
        // Gradient norm 2*clip: effective step must use g/2.
        let clip = 5.0;
        let g = vec![2.0 * clip, 0.0];
        let mut store = ParamStore::new();
        store.insert("w", Matrix { rows: 1, cols: 2, data: vec![0.0, 0.0] });
        store.grad_mut("w").data.copy_from_slice(&g);
        store.sgd_step(1.0, clip).unwrap();
        assert!((store.get("w").data[0] - (-clip)).abs() < 1e-12);
    }

    #[test]
    fn sgd_rejects_nan_gradient() {
        let mut store = ParamStore::new();
        store.insert("w", Matrix { rows: 1, cols: 1, data: vec![0.0] });
        store.grad_mut("w").data[0] = f64::NAN;
        let err = store.sgd_step(0.1, 40.0).unwrap_err();
        assert!(err.to_string().contains("`w`"));
    }

    #[test]
    fn sgd_converges_on_quadratic_bowl() {
        // f(p) = |p - c|^2, 100 steps of lr 0.1 reach within 1e-3.
        let c = [3.0, -1.5, 0.25];
        let mut store = ParamStore::new();
        store.insert("p", Matrix { rows: 1, cols: 3, data: vec![0.0; 3] });
        for _ in 0..100 {
            let p = store.get("p").data.clone();
            for (i, (pv, cv)) in p.iter().zip(c.iter()).enumerate() {
                store.grad_mut("p").data[i] = 2.0 * (pv - cv);
            }
            store.sgd_step(0.1, 40.0).unwrap();
        }
        let dist: f64 = store
            .get("p")
            .data
            .iter()
            .zip(c.iter())
            .map(|(p, c)| (p - c) * (p - c))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 1e-3, "dist {dist}");
    }

    #[test]
    fn grad_check_exact_quadratic() {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(1, 0);
        store.insert("p", Matrix::randn(2, 3, 1.0, &mut rng));
        let err = grad_check(
            |ps, accumulate| {
                let loss: f64 = ps.get("p").data.iter().map(|v| v * v).sum();
                if accumulate {
                    let p = ps.get("p").data.clone();
                    for (i, v) in p.iter().enumerate() {
                        ps.grad_mut("p").data[i] = 2.0 * v;
                    }
                }
                loss
            },
            &mut store,
            1e-5,
            200,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn rng_stream_reproducible_and_independent() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 0);
        let mut c = RngStream::new(42, 1);
        let va: Vec<u64> = (0..5).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..5).map(|_| b.next_u64()).collect();
        let vc: Vec<u64> = (0..5).map(|_| c.next_u64()).collect();
        assert_eq!(va, vb);
        assert_ne!(va, vc);
    }

    #[test]
    fn checkpoint_roundtrip_exact() {
        let mut rng = RngStream::new(7, 3);
        let mut store = ParamStore::new();
        store.insert("A", Matrix::randn(4, 6, 0.1, &mut rng));
        store.insert("beta", Matrix::randn(4, 1, 0.1, &mut rng));
        let text = store.to_checkpoint();
        let back = ParamStore::from_checkpoint(&text).unwrap();
        assert_eq!(store.get("A"), back.get("A"));
        assert_eq!(store.get("beta"), back.get("beta"));
        assert_eq!(text, back.to_checkpoint());
    }
}
