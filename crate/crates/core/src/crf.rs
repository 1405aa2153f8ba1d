//! Linear-chain CRF over `K` tags with synthetic START and STOP states.
//!
//! The transition matrix is `(K+2)×(K+2)`; index `K` is START and `K+1` is
//! STOP. Transitions into START and out of STOP are always `-inf`.

use std::sync::Arc;

use crate::corpus::Tag;
use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;

/// `T×K` per-position tag scores.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionScores {
    len: usize,
    k: usize,
    data: Vec<f64>,
}

impl EmissionScores {
    pub fn new(len: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != len * k {
            return Err(Error::Length {
                what: "emission scores",
                got: data.len(),
                expected: len * k,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("emission scores"));
        }
        Ok(EmissionScores { len, k, data })
    }

    pub fn zeros(len: usize, k: usize) -> Self {
        EmissionScores {
            len,
            k,
            data: vec![0.0; len * k],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_tags(&self) -> usize {
        self.k
    }

    pub fn get(&self, t: usize, tag: usize) -> f64 {
        self.data[t * self.k + tag]
    }

    pub fn set(&mut self, t: usize, tag: usize, v: f64) {
        self.data[t * self.k + tag] = v;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.k..(t + 1) * self.k]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    k: usize,
    data: Vec<f64>,
    allowed: Option<Arc<Vec<bool>>>,
}

impl TransitionMatrix {
    pub fn zeros(k: usize) -> Self {
        TransitionMatrix {
            k,
            data: vec![0.0; (k + 2) * (k + 2)],
            allowed: None,
        }
    }

    pub fn from_values(k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != (k + 2) * (k + 2) {
            return Err(Error::Length {
                what: "transition matrix",
                got: data.len(),
                expected: (k + 2) * (k + 2),
            });
        }
        Ok(TransitionMatrix { k, data, allowed: None })
    }

    /// Restricts transitions to those marked `true` in a `(K+2)²` mask.
    pub fn with_allowed(mut self, allowed: Arc<Vec<bool>>) -> Result<Self> {
        if allowed.len() != self.data.len() {
            return Err(Error::Length {
                what: "transition mask",
                got: allowed.len(),
                expected: self.data.len(),
            });
        }
        self.allowed = Some(allowed);
        Ok(self)
    }

    pub fn num_tags(&self) -> usize {
        self.k
    }

    pub fn start(&self) -> usize {
        self.k
    }

    pub fn stop(&self) -> usize {
        self.k + 1
    }

    pub fn set(&mut self, from: usize, to: usize, v: f64) {
        let n = self.k + 2;
        self.data[from * n + to] = v;
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Effective score, `-inf` where masked.
    pub fn get(&self, from: usize, to: usize) -> f64 {
        let n = self.k + 2;
        if to == self.start() || from == self.stop() {
            return f64::NEG_INFINITY;
        }
        if let Some(a) = &self.allowed {
            if !a[from * n + to] {
                return f64::NEG_INFINITY;
            }
        }
        self.data[from * n + to]
    }
}

/// Transition mask forbidding BIO-illegal moves over the 9-tag inventory:
/// `I-x` may only follow `B-x` or `I-x`.
pub fn bio_transition_mask() -> Arc<Vec<bool>> {
    let k = Tag::COUNT;
    let n = k + 2;
    let mut mask = vec![true; n * n];
    for to in Tag::ALL {
        if let Tag::I(ty) = to {
            for from in 0..n {
                let ok = match Tag::from_index(from) {
                    Some(Tag::B(t)) | Some(Tag::I(t)) => t == ty,
                    _ => false,
                };
                mask[from * n + to.index()] = ok;
            }
        }
    }
    Arc::new(mask)
}

fn check(e: &EmissionScores, a: &TransitionMatrix) -> Result<()> {
    if e.k != a.k {
        return Err(Error::Length {
            what: "tag count of emissions",
            got: e.k,
            expected: a.k,
        });
    }
    if e.len == 0 {
        return Err(Error::Empty("emission sequence"));
    }
    Ok(())
}

/// Score of one tag path: transitions from START, between tags and into STOP,
/// plus emissions.
pub fn sequence_score(e: &EmissionScores, a: &TransitionMatrix, tags: &[usize]) -> Result<f64> {
    if tags.len() != e.len {
        return Err(Error::Length {
            what: "tag sequence",
            got: tags.len(),
            expected: e.len,
        });
    }
    if let Some(&bad) = tags.iter().find(|&&t| t >= e.k) {
        return Err(Error::Invalid(format!("tag index {bad} out of range for {} tags", e.k)));
    }
    let mut prev = a.start();
    let mut score = 0.0;
    for (t, &tag) in tags.iter().enumerate() {
        score += a.get(prev, tag) + e.get(t, tag);
        prev = tag;
    }
    if !tags.is_empty() {
        score += a.get(prev, a.stop());
    }
    Ok(score)
}

/// Forward log-potentials `alpha[t][j]`: log-sum of all prefixes ending in `j` at `t`.
fn forward(e: &EmissionScores, a: &TransitionMatrix) -> Vec<f64> {
    let (n, k) = (e.len, e.k);
    let mut alpha = vec![0.0; n * k];
    for j in 0..k {
        alpha[j] = a.get(a.start(), j) + e.get(0, j);
    }
    let mut buf = vec![0.0; k];
    for t in 1..n {
        for j in 0..k {
            for i in 0..k {
                buf[i] = alpha[(t - 1) * k + i] + a.get(i, j);
            }
            alpha[t * k + j] = log_sum_exp(&buf) + e.get(t, j);
        }
    }
    alpha
}

/// Backward log-potentials `beta[t][i]`: log-sum of all suffixes after `i` at `t`.
fn backward(e: &EmissionScores, a: &TransitionMatrix) -> Vec<f64> {
    let (n, k) = (e.len, e.k);
    let mut beta = vec![0.0; n * k];
    for i in 0..k {
        beta[(n - 1) * k + i] = a.get(i, a.stop());
    }
    let mut buf = vec![0.0; k];
    for t in (0..n - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = a.get(i, j) + e.get(t + 1, j) + beta[(t + 1) * k + j];
            }
            beta[t * k + i] = log_sum_exp(&buf);
        }
    }
    beta
}

/// `log Σ_paths exp(score)`, by the forward algorithm in log space.
pub fn log_partition(e: &EmissionScores, a: &TransitionMatrix) -> Result<f64> {
    check(e, a)?;
    let alpha = forward(e, a);
    let k = e.k;
    let last: Vec<f64> = (0..k).map(|j| alpha[(e.len - 1) * k + j] + a.get(j, a.stop())).collect();
    Ok(log_sum_exp(&last))
}

/// Posterior tag probabilities per position, `T×K` row-major.
pub fn marginals(e: &EmissionScores, a: &TransitionMatrix) -> Result<Vec<f64>> {
    check(e, a)?;
    let alpha = forward(e, a);
    let beta = backward(e, a);
    let k = e.k;
    let log_z = log_sum_exp(&(0..k).map(|j| alpha[j] + beta[j]).collect::<Vec<_>>());
    Ok(alpha.iter().zip(&beta).map(|(x, y)| (x + y - log_z).exp()).collect())
}

pub fn crf_nll(e: &EmissionScores, a: &TransitionMatrix, gold: &[usize]) -> Result<f64> {
    let score = sequence_score(e, a, gold)?;
    Ok((log_partition(e, a)? - score).max(0.0))
}

/// NLL with its gradients with respect to the emissions (`T×K`) and the raw
/// transition matrix (`(K+2)²`). Masked entries get zero gradient.
pub fn nll_with_gradients(e: &EmissionScores, a: &TransitionMatrix, gold: &[usize]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check(e, a)?;
    let gold_score = sequence_score(e, a, gold)?;
    let (n, k) = (e.len, e.k);
    let w = k + 2;
    let alpha = forward(e, a);
    let beta = backward(e, a);
    let log_z = log_sum_exp(&(0..k).map(|j| alpha[j] + beta[j]).collect::<Vec<_>>());

    let mut grad_e = vec![0.0; n * k];
    let mut grad_a = vec![0.0; w * w];
    for t in 0..n {
        for j in 0..k {
            let p = (alpha[t * k + j] + beta[t * k + j] - log_z).exp();
            grad_e[t * k + j] = p;
        }
    }
    for j in 0..k {
        grad_a[a.start() * w + j] += (alpha[j] + beta[j] - log_z).exp();
        let last = (n - 1) * k + j;
        grad_a[j * w + a.stop()] += (alpha[last] + beta[last] - log_z).exp();
    }
    for t in 1..n {
        for i in 0..k {
            let ai = alpha[(t - 1) * k + i];
            if ai == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..k {
                let tr = a.get(i, j);
                if tr == f64::NEG_INFINITY {
                    continue;
                }
                grad_a[i * w + j] += (ai + tr + e.get(t, j) + beta[t * k + j] - log_z).exp();
            }
        }
    }
    let mut prev = a.start();
    for (t, &g) in gold.iter().enumerate() {
        grad_e[t * k + g] -= 1.0;
        grad_a[prev * w + g] -= 1.0;
        prev = g;
    }
    grad_a[prev * w + a.stop()] -= 1.0;

    Ok(((log_z - gold_score).max(0.0), grad_e, grad_a))
}

/// Highest-scoring path and its score. Ties go to the lowest tag index.
pub fn viterbi_decode(e: &EmissionScores, a: &TransitionMatrix) -> Result<(Vec<usize>, f64)> {
    check(e, a)?;
    let (n, k) = (e.len, e.k);
    let mut delta = vec![f64::NEG_INFINITY; n * k];
    let mut back = vec![0usize; n * k];
    for j in 0..k {
        delta[j] = a.get(a.start(), j) + e.get(0, j);
    }
    for t in 1..n {
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..k {
                let s = delta[(t - 1) * k + i] + a.get(i, j);
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            delta[t * k + j] = best + e.get(t, j);
            back[t * k + j] = arg;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for j in 0..k {
        let s = delta[(n - 1) * k + j] + a.get(j, a.stop());
        if s > best {
            best = s;
            last = j;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t * k + path[t]];
    }
    Ok((path, best))
}

/// Exhaustive enumeration, for testing against the dynamic programs.
#[derive(Clone, Debug)]
pub struct BruteForce {
    pub log_partition: f64,
    pub best: Vec<usize>,
    pub best_score: f64,
    pub scores: Vec<(Vec<usize>, f64)>,
}

pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Scores every one of the `K^T` paths (in lexicographic order).
pub fn brute_force_oracle(e: &EmissionScores, a: &TransitionMatrix) -> Result<BruteForce> {
    check(e, a)?;
    let (n, k) = (e.len, e.k);
    let total = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(total));
    }
    let mut scores = Vec::with_capacity(total as usize);
    let mut path = vec![0usize; n];
    loop {
        let s = sequence_score(e, a, &path)?;
        scores.push((path.clone(), s));
        // odometer increment, last position fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX {
            break;
        }
    }
    let all: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let mut best_i = 0;
    for (i, s) in all.iter().enumerate() {
        if *s > all[best_i] {
            best_i = i;
        }
    }
    Ok(BruteForce {
        log_partition: log_sum_exp(&all),
        best: scores[best_i].0.clone(),
        best_score: all[best_i],
        scores,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::ResourceType;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (EmissionScores, TransitionMatrix) {
        let e = EmissionScores::new(n, k, (0..n * k).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let a = TransitionMatrix::from_values(k, (0..(k + 2) * (k + 2)).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .unwrap();
        (e, a)
    }

    #[test]
    fn marginals_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let (n, k) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
            let (e, a) = random_instance(&mut rng, n, k);
            let got = marginals(&e, &a).unwrap();
            let oracle = brute_force_oracle(&e, &a).unwrap();
            let mut want = vec![0.0; n * k];
            for (path, score) in &oracle.scores {
                let p = (score - oracle.log_partition).exp();
                for (t, &j) in path.iter().enumerate() {
                    want[t * k + j] += p;
                }
            }
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10);
            }
        }
    }

    /// Direct loop over positions, independent of `sequence_score`.
    fn hand_sum(e: &EmissionScores, a: &TransitionMatrix, tags: &[usize]) -> f64 {
        let k = a.num_tags();
        let w = k + 2;
        let raw = a.raw();
        let mut s = raw[k * w + tags[0]] + e.row(0)[tags[0]];
        for t in 1..tags.len() {
            s += raw[tags[t - 1] * w + tags[t]] + e.row(t)[tags[t]];
        }
        s + raw[tags[tags.len() - 1] * w + k + 1]
    }

    #[test]
    fn zero_scores() {
        let e = EmissionScores::zeros(4, 3);
        let a = TransitionMatrix::zeros(3);
        assert_eq!(sequence_score(&e, &a, &[0, 2, 1, 1]).unwrap(), 0.0);
        let (path, score) = viterbi_decode(&e, &a).unwrap();
        assert_eq!(path, [0, 0, 0, 0]);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn single_step() {
        let e = EmissionScores::new(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let a = TransitionMatrix::zeros(3);
        assert_eq!(sequence_score(&e, &a, &[0]).unwrap(), 1.0);
        let e = EmissionScores::new(1, 3, vec![0.0, 5.0, 0.0]).unwrap();
        assert_eq!(viterbi_decode(&e, &a).unwrap(), (vec![1], 5.0));
        let z = EmissionScores::zeros(1, 4);
        assert!((log_partition(&z, &TransitionMatrix::zeros(4)).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_summation_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (e, a) = random_instance(&mut rng, 3, 3);
        for tags in [[0, 1, 2], [2, 2, 0], [1, 0, 1]] {
            assert!((sequence_score(&e, &a, &tags).unwrap() - hand_sum(&e, &a, &tags)).abs() < 1e-12);
        }
        assert!(sequence_score(&e, &a, &[0, 1]).is_err());
    }

    #[test]
    fn shift_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (e, a) = random_instance(&mut rng, 5, 4);
        let shifted = EmissionScores::new(5, 4, e.data().iter().map(|v| v + 0.7).collect()).unwrap();
        let diff = log_partition(&shifted, &a).unwrap() - log_partition(&e, &a).unwrap();
        assert!((diff - 5.0 * 0.7).abs() < 1e-9);
    }

    #[test]
    fn single_tag_nll_is_zero() {
        let e = EmissionScores::new(3, 1, vec![0.3, -1.0, 2.0]).unwrap();
        let a = TransitionMatrix::from_values(1, vec![0.5; 9]).unwrap();
        assert!(crf_nll(&e, &a, &[0, 0, 0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(1..=5);
            let k = rng.gen_range(1..=5);
            let (e, a) = random_instance(&mut rng, n, k);
            let bf = brute_force_oracle(&e, &a).unwrap();
            assert_eq!(bf.scores.len(), k.pow(n as u32));
            assert!((log_partition(&e, &a).unwrap() - bf.log_partition).abs() < 1e-8);
            let (path, score) = viterbi_decode(&e, &a).unwrap();
            assert_eq!(path, bf.best);
            assert!((score - bf.best_score).abs() < 1e-9);
            assert!((sequence_score(&e, &a, &path).unwrap() - score).abs() < 1e-9);
            let total: f64 = bf.scores.iter().map(|(_, s)| (s - bf.log_partition).exp()).sum();
            assert!((total - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn nll_matches_brute_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (e, a) = random_instance(&mut rng, 2, 2);
        let bf = brute_force_oracle(&e, &a).unwrap();
        for (path, s) in &bf.scores {
            let p = (s - bf.log_partition).exp();
            assert!((crf_nll(&e, &a, path).unwrap() + p.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_enumeration_order_and_limit() {
        let e = EmissionScores::zeros(3, 2);
        let a = TransitionMatrix::zeros(2);
        let bf = brute_force_oracle(&e, &a).unwrap();
        let paths: Vec<Vec<usize>> = bf.scores.iter().map(|(p, _)| p.clone()).collect();
        assert_eq!(paths.len(), 8);
        assert_eq!(paths[0], [0, 0, 0]);
        assert_eq!(paths[1], [0, 0, 1]);
        assert_eq!(paths[7], [1, 1, 1]);
        assert_eq!(brute_force_oracle(&EmissionScores::zeros(1, 3), &TransitionMatrix::zeros(3)).unwrap().scores.len(), 3);
        let big = EmissionScores::zeros(7, 9);
        assert!(matches!(brute_force_oracle(&big, &TransitionMatrix::zeros(9)), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (e, a) = random_instance(&mut rng, 4, 3);
        let gold = [2, 0, 1, 1];
        let (_, ge, ga) = nll_with_gradients(&e, &a, &gold).unwrap();
        let h = 1e-5;
        for i in 0..e.data().len() {
            let mut d = e.data().to_vec();
            d[i] += h;
            let up = crf_nll(&EmissionScores::new(4, 3, d.clone()).unwrap(), &a, &gold).unwrap();
            d[i] -= 2.0 * h;
            let down = crf_nll(&EmissionScores::new(4, 3, d).unwrap(), &a, &gold).unwrap();
            assert!(((up - down) / (2.0 * h) - ge[i]).abs() < 1e-7);
        }
        for i in 0..a.raw().len() {
            let mut d = a.raw().to_vec();
            d[i] += h;
            let up = crf_nll(&e, &TransitionMatrix::from_values(3, d.clone()).unwrap(), &gold).unwrap();
            d[i] -= 2.0 * h;
            let down = crf_nll(&e, &TransitionMatrix::from_values(3, d).unwrap(), &gold).unwrap();
            assert!(((up - down) / (2.0 * h) - ga[i]).abs() < 1e-7, "coordinate {i}");
        }
    }

    #[test]
    fn bio_mask_forbids_orphan_inside() {
        let mask = bio_transition_mask();
        let mut a = TransitionMatrix::zeros(Tag::COUNT).with_allowed(mask).unwrap();
        let vi = Tag::I(ResourceType::Videos).index();
        let vb = Tag::B(ResourceType::Videos).index();
        assert_eq!(a.get(a.start(), vi), f64::NEG_INFINITY);
        assert_eq!(a.get(0, vi), f64::NEG_INFINITY);
        assert_eq!(a.get(vb, vi), 0.0);
        // strongly prefer I-Videos everywhere; masked decode must still be legal
        let mut e = EmissionScores::zeros(3, Tag::COUNT);
        for t in 0..3 {
            e.set(t, vi, 10.0);
        }
        a.set(0, 0, 0.0);
        let (path, _) = viterbi_decode(&e, &a).unwrap();
        assert_eq!(path, [vb, vi, vi]);
    }
}
