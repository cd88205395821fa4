use super::{
    axpy, cosine_with_grad, info_nce_from_scores, pairwise_from_scores, LossBatch, LossConfig, LossOutput, Vector,
};
use crate::error::{Error, Result};

/// In-batch InfoNCE: `-(1/B) Σ_i log softmax_j(s_ij / τ)[i]` with
/// `s_ij = cos(q_i, d_j)`. Hard negatives are ignored.
pub fn bi_encoder_loss(batch: &LossBatch<Vector>, config: &LossConfig) -> Result<LossOutput<Vector>> {
    config.validate()?;
    let b = batch.check_pairs()?;
    batch.dim()?;
    let mut grads = batch.zeros_like();
    let (value, _) = in_batch_term(batch, config.tau, 1.0, &mut grads, b)?;
    Ok(LossOutput { value, grads })
}

/// Computes the InfoNCE term, adds `weight * dL` into `grads` and returns
/// the value together with the diagonal (positive) scores.
fn in_batch_term(
    batch: &LossBatch<Vector>,
    tau: f64,
    weight: f64,
    grads: &mut LossBatch<Vector>,
    b: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut scores = vec![vec![0.0; b]; b];
    let mut partials = Vec::with_capacity(b * b);
    for i in 0..b {
        for j in 0..b {
            let (s, dq, dd) = cosine_with_grad(&batch.queries[i], &batch.positives[j])?;
            scores[i][j] = s;
            partials.push((dq, dd));
        }
    }
    let (value, ds) = info_nce_from_scores(&scores, tau)?;
    if weight != 0.0 {
        for i in 0..b {
            for j in 0..b {
                let (dq, dd) = &partials[i * b + j];
                let g = weight * ds[i][j];
                axpy(&mut grads.queries[i], g, dq);
                axpy(&mut grads.positives[j], g, dd);
            }
        }
    }
    let diag = (0..b).map(|i| scores[i][i]).collect();
    Ok((value, diag))
}

/// `(1 − λ)·pairwise + λ·InfoNCE`, where the pairwise term is the mean
/// softplus of `(s(q_i, d_i^{−,k}) − s(q_i, d_i^+)) / τ`. Hard negatives only
/// enter the pairwise term.
pub fn bi_negative_ce_loss(batch: &LossBatch<Vector>, config: &LossConfig) -> Result<LossOutput<Vector>> {
    config.validate()?;
    let b = batch.check_pairs()?;
    batch.dim()?;
    let k = batch.negatives_per_query()?;
    if k == 0 {
        return Err(Error::MissingNegatives);
    }
    let lambda = config.lambda;
    let mut grads = batch.zeros_like();
    let (nce, pos) = in_batch_term(batch, config.tau, lambda, &mut grads, b)?;

    let mut neg = vec![vec![0.0; k]; b];
    let mut neg_partials = Vec::with_capacity(b * k);
    for i in 0..b {
        for kk in 0..k {
            let (s, dq, dn) = cosine_with_grad(&batch.queries[i], &batch.hard_negatives[i][kk])?;
            neg[i][kk] = s;
            neg_partials.push((dq, dn));
        }
    }
    let (pairwise, dpos, dneg) = pairwise_from_scores(&pos, &neg, config.tau)?;
    let w = 1.0 - lambda;
    if w != 0.0 {
        for i in 0..b {
            let (_, dq, dd) = cosine_with_grad(&batch.queries[i], &batch.positives[i])?;
            axpy(&mut grads.queries[i], w * dpos[i], &dq);
            axpy(&mut grads.positives[i], w * dpos[i], &dd);
            for kk in 0..k {
                let (dq, dn) = &neg_partials[i * k + kk];
                axpy(&mut grads.queries[i], w * dneg[i][kk], dq);
                axpy(&mut grads.hard_negatives[i][kk], w * dneg[i][kk], dn);
            }
        }
    }
    Ok(LossOutput {
        value: w * pairwise + lambda * nce,
        grads,
    })
}

fn truncate_batch(batch: &LossBatch<Vector>, d: usize) -> Result<LossBatch<Vector>> {
    let cut = |v: &Vector| -> Result<Vector> {
        let p = v[..d].to_vec();
        if p.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroVector);
        }
        Ok(p)
    };
    Ok(LossBatch {
        queries: batch.queries.iter().map(cut).collect::<Result<_>>()?,
        positives: batch.positives.iter().map(cut).collect::<Result<_>>()?,
        hard_negatives: batch
            .hard_negatives
            .iter()
            .map(|row| row.iter().map(cut).collect::<Result<_>>())
            .collect::<Result<_>>()?,
    })
}

fn add_prefix(acc: &mut LossBatch<Vector>, part: &LossBatch<Vector>, w: f64) {
    let pairs = acc
        .queries
        .iter_mut()
        .zip(&part.queries)
        .chain(acc.positives.iter_mut().zip(&part.positives))
        .chain(
            acc.hard_negatives
                .iter_mut()
                .flatten()
                .zip(part.hard_negatives.iter().flatten()),
        );
    for (full, prefix) in pairs {
        axpy(&mut full[..prefix.len()], w, prefix);
    }
}

/// `Σ_d w_d · base(prefix_d(batch))`. Base losses use cosine similarity, so
/// scoring a raw prefix equals scoring its L2-normalized form; gradients of
/// every granularity accumulate onto the full-length vectors.
pub fn matryoshka_wrap<F>(base: F, batch: &LossBatch<Vector>, config: &LossConfig) -> Result<LossOutput<Vector>>
where
    F: Fn(&LossBatch<Vector>, &LossConfig) -> Result<LossOutput<Vector>>,
{
    config.validate()?;
    batch.check_pairs()?;
    let dim = batch.dim()?;
    let mut grads = batch.zeros_like();
    let mut value = 0.0;
    for (&d, &w) in config.matryoshka_dims.iter().zip(&config.matryoshka_weights) {
        if d > dim {
            return Err(Error::DimError {
                requested: d,
                available: dim,
            });
        }
        let out = base(&truncate_batch(batch, d)?, config)?;
        value += w * out.value;
        add_prefix(&mut grads, &out.grads, w);
    }
    Ok(LossOutput { value, grads })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vector {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    fn toy(k: usize) -> LossBatch<Vector> {
        LossBatch {
            queries: vec![unit(&[1.0, 0.2, 0.0, 0.1]), unit(&[0.0, 1.0, 0.3, -0.2])],
            positives: vec![unit(&[0.9, 0.1, 0.1, 0.0]), unit(&[0.1, 0.8, 0.2, 0.0])],
            hard_negatives: (0..2)
                .map(|i| (0..k).map(|kk| unit(&[0.5, 0.5, i as f64, 1.0 + kk as f64])).collect())
                .collect(),
        }
    }

    #[test]
    fn single_pair_is_zero() {
        let b = LossBatch {
            queries: vec![unit(&[1.0, 2.0])],
            positives: vec![unit(&[2.0, 1.0])],
            hard_negatives: vec![],
        };
        let out = bi_encoder_loss(&b, &LossConfig::default()).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grads.queries[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn empty_batch_is_degenerate() {
        let b: LossBatch<Vector> = LossBatch {
            queries: vec![],
            positives: vec![],
            hard_negatives: vec![],
        };
        assert!(matches!(
            bi_encoder_loss(&b, &LossConfig::default()),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn two_by_two_identity_scores() {
        let b = LossBatch {
            queries: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            positives: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            hard_negatives: vec![],
        };
        let out = bi_encoder_loss(&b, &LossConfig::with_tau(1.0)).unwrap();
        assert!((out.value - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn lambda_one_equals_bi_encoder() {
        let batch = toy(2);
        let cfg = LossConfig {
            lambda: 1.0,
            ..LossConfig::default()
        };
        let a = bi_negative_ce_loss(&batch, &cfg).unwrap();
        let b = bi_encoder_loss(&batch, &cfg).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        assert_eq!(a.grads.queries, b.grads.queries);
        assert!(a.grads.hard_negatives.iter().flatten().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn lambda_zero_equal_scores_is_ln2() {
        let q = unit(&[1.0, 0.5, 0.0]);
        let p = unit(&[0.5, 1.0, 0.0]);
        let batch = LossBatch {
            queries: vec![q],
            positives: vec![p.clone()],
            hard_negatives: vec![vec![p.clone(), p]],
        };
        let mut cfg = LossConfig::with_tau(1.0);
        cfg.lambda = 0.0;
        let out = bi_negative_ce_loss(&batch, &cfg).unwrap();
        assert!((out.value - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn missing_negatives() {
        assert!(matches!(
            bi_negative_ce_loss(&toy(0), &LossConfig::default()),
            Err(Error::MissingNegatives)
        ));
    }

    #[test]
    fn lambda_midpoint_is_average() {
        let batch = toy(2);
        let at = |l: f64| {
            let c = LossConfig {
                lambda: l,
                ..LossConfig::default()
            };
            bi_negative_ce_loss(&batch, &c).unwrap().value
        };
        assert!((at(0.5) - 0.5 * (at(0.0) + at(1.0))).abs() < 1e-12);
        let (lo, hi) = (at(0.0).min(at(1.0)), at(0.0).max(at(1.0)));
        for l in [0.1, 0.3, 0.7, 0.9] {
            assert!(at(l) >= lo - 1e-12 && at(l) <= hi + 1e-12);
        }
    }

    #[test]
    fn matryoshka_full_dim_only_equals_base() {
        let batch = toy(1);
        let cfg = LossConfig::default().with_dims(&[4]);
        let w = matryoshka_wrap(bi_encoder_loss, &batch, &cfg).unwrap();
        let b = bi_encoder_loss(&batch, &cfg).unwrap();
        assert_eq!(w.value, b.value);
        assert_eq!(w.grads, b.grads);
    }

    #[test]
    fn matryoshka_prefix_supported_batch() {
        // Mass only on the first two coordinates: every granularity sees the same cosines.
        let pad = |v: &[f64]| {
            let mut x = unit(v);
            x.extend([0.0; 4]);
            x
        };
        let batch = LossBatch {
            queries: vec![pad(&[1.0, 0.3]), pad(&[0.2, 1.0])],
            positives: vec![pad(&[0.8, 0.4]), pad(&[0.1, 0.9])],
            hard_negatives: vec![],
        };
        let cfg = LossConfig::default().with_dims(&[2, 4, 6]);
        let w = matryoshka_wrap(bi_encoder_loss, &batch, &cfg).unwrap();
        let b = bi_encoder_loss(&batch, &cfg).unwrap();
        assert!((w.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn matryoshka_errors() {
        let batch = toy(1);
        let cfg = LossConfig::default().with_dims(&[2, 8]);
        assert!(matches!(
            matryoshka_wrap(bi_encoder_loss, &batch, &cfg),
            Err(Error::DimError {
                requested: 8,
                available: 4
            })
        ));
        let mut zero_prefix = toy(1);
        zero_prefix.queries[0] = vec![0.0, 0.0, 1.0, 0.0];
        let cfg = LossConfig::default().with_dims(&[2, 4]);
        assert!(matches!(
            matryoshka_wrap(bi_encoder_loss, &zero_prefix, &cfg),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn increasing_negative_similarity_increases_loss() {
        let cfg = LossConfig {
            lambda: 0.3,
            ..LossConfig::default()
        };
        let base = toy(1);
        let before = bi_negative_ce_loss(&base, &cfg).unwrap().value;
        let mut closer = base.clone();
        // Move the first negative towards its query.
        closer.hard_negatives[0][0] = base.queries[0]
            .iter()
            .zip(&base.hard_negatives[0][0])
            .map(|(q, n)| 0.5 * q + 0.5 * n)
            .collect();
        let after = bi_negative_ce_loss(&closer, &cfg).unwrap().value;
        assert!(after > before);
    }
}
