//! Contrastive training objectives evaluated in `f64` with analytic gradients.
//!
//! Nothing here updates parameters; the losses exist so their values and
//! gradients can be checked against closed forms and finite differences.

mod dense;
pub mod gradcheck;
mod late;

use crate::error::{Error, Result};
use crate::vector::{DenseEmbedding, MultiVectorEmbedding};

pub use dense::{bi_encoder_loss, bi_negative_ce_loss, matryoshka_wrap};
pub use late::late_interaction_loss;

pub const DEFAULT_TAU: f64 = 0.02;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_MATRYOSHKA_DIMS: [usize; 3] = [768, 1536, 2560];

/// One dense vector.
pub type Vector = Vec<f64>;
/// One token matrix, `n_tokens x dim`.
pub type TokenMatrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda: f64,
    pub matryoshka_dims: Vec<usize>,
    pub matryoshka_weights: Vec<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        let n = DEFAULT_MATRYOSHKA_DIMS.len();
        Self {
            tau: DEFAULT_TAU,
            lambda: DEFAULT_LAMBDA,
            matryoshka_dims: DEFAULT_MATRYOSHKA_DIMS.to_vec(),
            matryoshka_weights: vec![1.0 / n as f64; n],
        }
    }
}

impl LossConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self { tau, ..Self::default() }
    }

    /// Equal weights over `dims`.
    pub fn with_dims(mut self, dims: &[usize]) -> Self {
        self.matryoshka_dims = dims.to_vec();
        self.matryoshka_weights = vec![1.0 / dims.len() as f64; dims.len()];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.matryoshka_dims.is_empty() || self.matryoshka_dims.len() != self.matryoshka_weights.len() {
            return Err(Error::InvalidConfig(
                "matryoshka dims and weights must be non-empty and of equal length".into(),
            ));
        }
        if self.matryoshka_dims[0] == 0 || self.matryoshka_dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "matryoshka dims must be positive and strictly ascending".into(),
            ));
        }
        if self.matryoshka_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidConfig("matryoshka weights must be positive".into()));
        }
        let sum: f64 = self.matryoshka_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "matryoshka weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Queries, their positives and `K` hard negatives per query.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch<T> {
    pub queries: Vec<T>,
    pub positives: Vec<T>,
    pub hard_negatives: Vec<Vec<T>>,
}

impl<T> LossBatch<T> {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Negatives per query; errors when rows disagree.
    pub fn negatives_per_query(&self) -> Result<usize> {
        if self.hard_negatives.is_empty() {
            return Ok(0);
        }
        if self.hard_negatives.len() != self.queries.len() {
            return Err(Error::DegenerateBatch(
                "hard_negatives must have one row per query".into(),
            ));
        }
        let k = self.hard_negatives[0].len();
        if self.hard_negatives.iter().any(|row| row.len() != k) {
            return Err(Error::DegenerateBatch("every query needs the same K".into()));
        }
        Ok(k)
    }

    fn check_pairs(&self) -> Result<usize> {
        let b = self.queries.len();
        if b == 0 {
            return Err(Error::DegenerateBatch("batch size B must be >= 1".into()));
        }
        if self.positives.len() != b {
            return Err(Error::DegenerateBatch(format!(
                "{b} queries but {} positives",
                self.positives.len()
            )));
        }
        Ok(b)
    }
}

impl LossBatch<Vector> {
    pub fn from_dense(
        queries: &[DenseEmbedding],
        positives: &[DenseEmbedding],
        hard_negatives: &[Vec<DenseEmbedding>],
    ) -> Self {
        let conv = |e: &DenseEmbedding| e.values().iter().map(|&x| x as f64).collect::<Vector>();
        Self {
            queries: queries.iter().map(conv).collect(),
            positives: positives.iter().map(conv).collect(),
            hard_negatives: hard_negatives
                .iter()
                .map(|row| row.iter().map(conv).collect())
                .collect(),
        }
    }

    fn dim(&self) -> Result<usize> {
        let dim = self.queries.first().map(Vec::len).unwrap_or(0);
        let all = self
            .queries
            .iter()
            .chain(&self.positives)
            .chain(self.hard_negatives.iter().flatten());
        for v in all {
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
        }
        if dim == 0 {
            return Err(Error::DegenerateBatch("embeddings must have dim >= 1".into()));
        }
        Ok(dim)
    }
}

impl LossBatch<TokenMatrix> {
    pub fn from_multivector(queries: &[MultiVectorEmbedding], positives: &[MultiVectorEmbedding]) -> Self {
        let conv = |m: &MultiVectorEmbedding| {
            m.rows()
                .map(|r| r.iter().map(|&x| x as f64).collect())
                .collect::<TokenMatrix>()
        };
        Self {
            queries: queries.iter().map(conv).collect(),
            positives: positives.iter().map(conv).collect(),
            hard_negatives: Vec::new(),
        }
    }
}

impl<T: Clone + ZeroLike> LossBatch<T> {
    fn zeros_like(&self) -> Self {
        Self {
            queries: self.queries.iter().map(ZeroLike::zero_like).collect(),
            positives: self.positives.iter().map(ZeroLike::zero_like).collect(),
            hard_negatives: self
                .hard_negatives
                .iter()
                .map(|row| row.iter().map(ZeroLike::zero_like).collect())
                .collect(),
        }
    }
}

pub trait ZeroLike {
    fn zero_like(&self) -> Self;
}

impl ZeroLike for Vector {
    fn zero_like(&self) -> Self {
        vec![0.0; self.len()]
    }
}

impl ZeroLike for TokenMatrix {
    fn zero_like(&self) -> Self {
        self.iter().map(|r| vec![0.0; r.len()]).collect()
    }
}

/// Loss value plus gradients shaped like the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub value: f64,
    pub grads: LossBatch<T>,
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// InfoNCE over a `B x B` score matrix whose diagonal holds the positives.
/// Returns the loss and `dL/ds`.
pub fn info_nce_from_scores(scores: &[Vec<f64>], tau: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let b = scores.len();
    if b == 0 {
        return Err(Error::DegenerateBatch("batch size B must be >= 1".into()));
    }
    if scores.iter().any(|row| row.len() != b) {
        return Err(Error::DegenerateBatch("score matrix must be B x B".into()));
    }
    let mut value = 0.0;
    let mut grad = vec![vec![0.0; b]; b];
    for (i, row) in scores.iter().enumerate() {
        let logits: Vec<f64> = row.iter().map(|s| s / tau).collect();
        let lse = log_sum_exp(&logits);
        value += lse - logits[i];
        for j in 0..b {
            let p = (logits[j] - lse).exp();
            grad[i][j] = (p - if i == j { 1.0 } else { 0.0 }) / (b as f64 * tau);
        }
    }
    Ok((value / b as f64, grad))
}

/// Mean softplus of `(s_neg - s_pos) / tau` over all `B x K` pairs. Returns
/// the loss, `dL/ds_pos` and `dL/ds_neg`.
pub fn pairwise_from_scores(pos: &[f64], neg: &[Vec<f64>], tau: f64) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let b = pos.len();
    if b == 0 || neg.len() != b {
        return Err(Error::DegenerateBatch("pairwise term needs B >= 1 rows".into()));
    }
    let k = neg[0].len();
    if k == 0 {
        return Err(Error::MissingNegatives);
    }
    if neg.iter().any(|r| r.len() != k) {
        return Err(Error::DegenerateBatch("every query needs the same K".into()));
    }
    let scale = 1.0 / (b * k) as f64;
    let mut value = 0.0;
    let mut dpos = vec![0.0; b];
    let mut dneg = vec![vec![0.0; k]; b];
    for i in 0..b {
        for kk in 0..k {
            let x = (neg[i][kk] - pos[i]) / tau;
            value += softplus(x);
            let g = sigmoid(x) * scale / tau;
            dneg[i][kk] = g;
            dpos[i] -= g;
        }
    }
    Ok((value * scale, dpos, dneg))
}

/// Cosine similarity and its gradients with respect to both arguments.
pub(crate) fn cosine_with_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vector, Vector)> {
    let na2: f64 = a.iter().map(|x| x * x).sum();
    let nb2: f64 = b.iter().map(|x| x * x).sum();
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let inv = 1.0 / (na2.sqrt() * nb2.sqrt());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let c = dot * inv;
    let da = a.iter().zip(b).map(|(x, y)| y * inv - c * x / na2).collect();
    let db = a.iter().zip(b).map(|(x, y)| x * inv - c * y / nb2).collect();
    Ok((c, da, db))
}

pub(crate) fn axpy(acc: &mut [f64], scale: f64, v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let c = LossConfig::default();
        c.validate().unwrap();
        assert_eq!(c.tau, 0.02);
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.matryoshka_dims, [768, 1536, 2560]);
    }

    #[test]
    fn config_invariants() {
        assert!(LossConfig::with_tau(0.0).validate().is_err());
        let c = LossConfig {
            matryoshka_dims: vec![768, 768, 2560],
            ..LossConfig::default()
        };
        assert!(c.validate().is_err());
        let c = LossConfig {
            matryoshka_weights: vec![0.5, 0.3, 0.3],
            ..LossConfig::default()
        };
        assert!(c.validate().is_err());
        let c = LossConfig {
            lambda: 1.5,
            ..LossConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn info_nce_two_by_two() {
        let (v, _) = info_nce_from_scores(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        assert!((v - 0.313262).abs() < 1e-6);
        assert!((v - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn info_nce_uniform_is_ln_b() {
        let s = vec![vec![0.3; 4]; 4];
        let (v, g) = info_nce_from_scores(&s, 0.02).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-12);
        let row_sum: f64 = g[0].iter().sum();
        assert!(row_sum.abs() < 1e-12);
    }

    #[test]
    fn info_nce_single_item_is_zero() {
        let (v, g) = info_nce_from_scores(&[vec![0.7]], 0.02).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g[0][0], 0.0);
    }

    #[test]
    fn stable_at_small_tau() {
        let (v, _) = info_nce_from_scores(&[vec![1.0, -1.0], vec![-1.0, 1.0]], 0.001).unwrap();
        assert!(v.is_finite());
        let (v, _) = info_nce_from_scores(&[vec![-1.0, 1.0], vec![1.0, -1.0]], 0.001).unwrap();
        assert!((v - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn pairwise_examples() {
        let (v, _, _) = pairwise_from_scores(&[0.9], &[vec![0.1]], 1.0).unwrap();
        assert!((v - 0.371101).abs() < 1e-6);
        let (v, _, _) = pairwise_from_scores(&[0.4, 0.2], &[vec![0.4], vec![0.2]], 1.0).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            pairwise_from_scores(&[0.4], &[vec![]], 1.0),
            Err(Error::MissingNegatives)
        ));
    }

    #[test]
    fn softplus_is_strictly_increasing() {
        let xs = [-60.0, -5.0, -1e-3, 0.0, 1e-3, 5.0, 60.0];
        for w in xs.windows(2) {
            assert!(softplus(w[1]) > softplus(w[0]));
        }
        assert_eq!(softplus(0.0), 2f64.ln());
    }

    #[test]
    fn cosine_grad_matches_difference() {
        let a = vec![0.3, -1.2, 0.5];
        let b = vec![1.0, 0.4, -0.2];
        let (_, da, _) = cosine_with_grad(&a, &b).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut ap = a.clone();
            ap[i] += h;
            let mut am = a.clone();
            am[i] -= h;
            let fd = (cosine_with_grad(&ap, &b).unwrap().0 - cosine_with_grad(&am, &b).unwrap().0) / (2.0 * h);
            assert!((fd - da[i]).abs() < 1e-8);
        }
    }
}
