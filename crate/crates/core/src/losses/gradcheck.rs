//! Central finite-difference checks for the analytic loss gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    bi_encoder_loss, bi_negative_ce_loss, late_interaction_loss, matryoshka_wrap, LossBatch, LossConfig, LossOutput,
    TokenMatrix, Vector,
};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const MAX_REL_ERROR: f64 = 1e-4;
/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-3;

/// Flattening of every coordinate in a batch, in a fixed order.
pub trait Flatten: Sized {
    fn flat(&self) -> Vec<f64>;
    fn rebuild(&self, flat: &[f64]) -> Self;
}

fn push_vec(out: &mut Vec<f64>, v: &[f64]) {
    out.extend_from_slice(v);
}

impl Flatten for LossBatch<Vector> {
    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for v in self
            .queries
            .iter()
            .chain(&self.positives)
            .chain(self.hard_negatives.iter().flatten())
        {
            push_vec(&mut out, v);
        }
        out
    }

    fn rebuild(&self, flat: &[f64]) -> Self {
        let mut it = flat.iter().copied();
        let mut take = |v: &Vector| -> Vector { v.iter().map(|_| it.next().unwrap_or(0.0)).collect() };
        let queries = self.queries.iter().map(&mut take).collect();
        let positives = self.positives.iter().map(&mut take).collect();
        let hard_negatives = self
            .hard_negatives
            .iter()
            .map(|row| row.iter().map(&mut take).collect())
            .collect();
        Self {
            queries,
            positives,
            hard_negatives,
        }
    }
}

impl Flatten for LossBatch<TokenMatrix> {
    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for m in self
            .queries
            .iter()
            .chain(&self.positives)
            .chain(self.hard_negatives.iter().flatten())
        {
            for v in m {
                push_vec(&mut out, v);
            }
        }
        out
    }

    fn rebuild(&self, flat: &[f64]) -> Self {
        let mut it = flat.iter().copied();
        let mut take = |m: &TokenMatrix| -> TokenMatrix {
            m.iter()
                .map(|v| v.iter().map(|_| it.next().unwrap_or(0.0)).collect())
                .collect()
        };
        let queries = self.queries.iter().map(&mut take).collect();
        let positives = self.positives.iter().map(&mut take).collect();
        let hard_negatives = self
            .hard_negatives
            .iter()
            .map(|row| row.iter().map(&mut take).collect())
            .collect();
        Self {
            queries,
            positives,
            hard_negatives,
        }
    }
}

/// Largest relative error between the analytic gradient and central
/// differences, `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn max_relative_error<B, F>(batch: &B, loss: F) -> Result<f64>
where
    B: Flatten,
    F: Fn(&B) -> Result<LossOutput<B::Grad>>,
    B: HasGrad,
{
    let analytic = B::grad_flat(&loss(batch)?);
    let x = batch.flat();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += FD_STEP;
        let mut xm = x.clone();
        xm[i] -= FD_STEP;
        let fp = loss(&batch.rebuild(&xp))?.value;
        let fm = loss(&batch.rebuild(&xm))?.value;
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Links a batch type to the gradient container its losses return.
pub trait HasGrad {
    type Grad;
    fn grad_flat(out: &LossOutput<Self::Grad>) -> Vec<f64>;
}

impl HasGrad for LossBatch<Vector> {
    type Grad = Vector;
    fn grad_flat(out: &LossOutput<Vector>) -> Vec<f64> {
        out.grads.flat()
    }
}

impl HasGrad for LossBatch<TokenMatrix> {
    type Grad = TokenMatrix;
    fn grad_flat(out: &LossOutput<TokenMatrix>) -> Vec<f64> {
        out.grads.flat()
    }
}

fn gaussian_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    loop {
        // Box-Muller keeps direction uniform on the sphere.
        let v: Vector = (0..dim)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-300);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random unit-norm dense batch.
pub fn random_dense_batch(rng: &mut impl Rng, b: usize, k: usize, dim: usize) -> LossBatch<Vector> {
    LossBatch {
        queries: (0..b).map(|_| gaussian_unit(rng, dim)).collect(),
        positives: (0..b).map(|_| gaussian_unit(rng, dim)).collect(),
        hard_negatives: if k == 0 {
            Vec::new()
        } else {
            (0..b)
                .map(|_| (0..k).map(|_| gaussian_unit(rng, dim)).collect())
                .collect()
        },
    }
}

/// Random row-normalized multi-vector batch with 1..=max_tokens tokens each.
pub fn random_multivector_batch(rng: &mut impl Rng, b: usize, max_tokens: usize, dim: usize) -> LossBatch<TokenMatrix> {
    let mat = |rng: &mut _| -> TokenMatrix {
        let n = Rng::random_range(rng, 1..=max_tokens);
        (0..n).map(|_| gaussian_unit(rng, dim)).collect()
    };
    LossBatch {
        queries: (0..b).map(|_| mat(rng)).collect(),
        positives: (0..b).map(|_| mat(rng)).collect(),
        hard_negatives: Vec::new(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LossCheckRow {
    pub loss: &'static str,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossCheckReport {
    pub trials: usize,
    pub tau: f64,
    pub step: f64,
    pub threshold: f64,
    pub per_loss: Vec<LossCheckRow>,
    pub max_rel_error: f64,
}

impl LossCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.threshold
    }
}

/// Runs every loss on `trials` random small batches (dim ≤ 16, B ≤ 4,
/// K ≤ 2) and records the worst gradient error per loss.
pub fn run_loss_check(trials: usize, seed: u64, tau: f64) -> Result<LossCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<LossCheckRow> = [
        "bi_encoder",
        "bi_negative_ce",
        "matryoshka_bi_encoder",
        "matryoshka_bi_negative_ce",
        "late_interaction",
        "late_interaction_normalized",
    ]
    .into_iter()
    .map(|loss| LossCheckRow {
        loss,
        max_rel_error: 0.0,
    })
    .collect();
    for _ in 0..trials {
        let b = rng.random_range(1..=4);
        let k = rng.random_range(1..=2);
        let dim = rng.random_range(12..=16);
        let batch = random_dense_batch(&mut rng, b, k, dim);
        let mut cfg = LossConfig::with_tau(tau);
        cfg.lambda = rng.random_range(0.0..=1.0);
        let errs = [
            max_relative_error(&batch, |x| bi_encoder_loss(x, &cfg))?,
            max_relative_error(&batch, |x| bi_negative_ce_loss(x, &cfg))?,
        ];
        let mcfg = cfg.clone().with_dims(&[4, 8, dim]);
        let merrs = [
            max_relative_error(&batch, |x| matryoshka_wrap(bi_encoder_loss, x, &mcfg))?,
            max_relative_error(&batch, |x| matryoshka_wrap(bi_negative_ce_loss, x, &mcfg))?,
        ];
        let mv = random_multivector_batch(&mut rng, b, 4, dim);
        let lerrs = [
            max_relative_error(&mv, |x| late_interaction_loss(x, &cfg, false))?,
            max_relative_error(&mv, |x| late_interaction_loss(x, &cfg, true))?,
        ];
        for (row, e) in rows.iter_mut().zip(errs.into_iter().chain(merrs).chain(lerrs)) {
            row.max_rel_error = row.max_rel_error.max(e);
        }
    }
    let max_rel_error = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(LossCheckReport {
        trials,
        tau,
        step: FD_STEP,
        threshold: MAX_REL_ERROR,
        per_loss: rows,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_dense_batch(&mut rng, 3, 2, 5);
        assert_eq!(b.rebuild(&b.flat()), b);
        let m = random_multivector_batch(&mut rng, 2, 3, 4);
        assert_eq!(m.rebuild(&m.flat()), m);
    }

    #[test]
    fn small_check_passes() {
        let r = run_loss_check(3, 7, 0.02).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
