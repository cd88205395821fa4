use super::{axpy, cosine_with_grad, info_nce_from_scores, LossBatch, LossConfig, LossOutput, TokenMatrix, Vector};
use crate::error::{Error, Result};

/// Per query token: the best doc token (lowest index on ties), its cosine and
/// the cosine gradients with respect to both tokens.
struct Match {
    doc_token: usize,
    dq: Vector,
    dd: Vector,
}

fn maxsim_with_grad(q: &TokenMatrix, d: &TokenMatrix) -> Result<(f64, Vec<Match>)> {
    let mut total = 0.0;
    let mut matches = Vec::with_capacity(q.len());
    for qt in q {
        let mut best: Option<(f64, usize, Vector, Vector)> = None;
        for (j, dt) in d.iter().enumerate() {
            let (c, dq, dd) = cosine_with_grad(qt, dt)?;
            if best.as_ref().is_none_or(|b| c > b.0) {
                best = Some((c, j, dq, dd));
            }
        }
        let (c, doc_token, dq, dd) = best.ok_or_else(|| Error::DegenerateBatch("document with zero tokens".into()))?;
        total += c;
        matches.push(Match { doc_token, dq, dd });
    }
    Ok((total, matches))
}

fn check_shapes(batch: &LossBatch<TokenMatrix>) -> Result<()> {
    let dim = batch.queries.first().and_then(|m| m.first()).map(Vec::len).unwrap_or(0);
    for m in batch.queries.iter().chain(&batch.positives) {
        if m.is_empty() {
            return Err(Error::DegenerateBatch("multi-vector with zero tokens".into()));
        }
        for row in m {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
        }
    }
    Ok(())
}

/// In-batch InfoNCE over MaxSim scores, optionally divided by query length.
/// Hard negatives are not used.
pub fn late_interaction_loss(
    batch: &LossBatch<TokenMatrix>,
    config: &LossConfig,
    normalized: bool,
) -> Result<LossOutput<TokenMatrix>> {
    config.validate()?;
    let b = batch.check_pairs()?;
    check_shapes(batch)?;

    let mut scores = vec![vec![0.0; b]; b];
    let mut matches = Vec::with_capacity(b * b);
    for i in 0..b {
        let scale = if normalized {
            1.0 / batch.queries[i].len() as f64
        } else {
            1.0
        };
        for j in 0..b {
            let (s, m) = maxsim_with_grad(&batch.queries[i], &batch.positives[j])?;
            scores[i][j] = s * scale;
            matches.push((scale, m));
        }
    }
    let (value, ds) = info_nce_from_scores(&scores, config.tau)?;

    let mut grads = batch.zeros_like();
    for i in 0..b {
        for j in 0..b {
            let (scale, m) = &matches[i * b + j];
            let g = ds[i][j] * scale;
            if g == 0.0 {
                continue;
            }
            for (t, mt) in m.iter().enumerate() {
                axpy(&mut grads.queries[i][t], g, &mt.dq);
                axpy(&mut grads.positives[j][mt.doc_token], g, &mt.dd);
            }
        }
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

    #[test]
    fn single_pair_is_zero() {
        let b = LossBatch {
            queries: vec![vec![unit(&[1.0, 0.0]), unit(&[0.3, 1.0])]],
            positives: vec![vec![unit(&[1.0, 1.0])]],
            hard_negatives: vec![],
        };
        assert_eq!(
            late_interaction_loss(&b, &LossConfig::default(), false).unwrap().value,
            0.0
        );
    }

    #[test]
    fn identical_docs_give_ln_b() {
        let doc = vec![unit(&[1.0, 0.2, 0.0]), unit(&[0.0, 1.0, 1.0])];
        let b = LossBatch {
            queries: vec![
                vec![unit(&[1.0, 0.0, 0.0])],
                vec![unit(&[0.0, 1.0, 0.0]), unit(&[0.0, 0.0, 1.0])],
                vec![unit(&[1.0, 1.0, 1.0])],
            ],
            positives: vec![doc.clone(), doc.clone(), doc],
            hard_negatives: vec![],
        };
        for norm in [false, true] {
            let v = late_interaction_loss(&b, &LossConfig::default(), norm).unwrap().value;
            assert!((v - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn tie_gradient_goes_to_first_row() {
        let d = vec![unit(&[1.0, 1.0]), unit(&[1.0, 1.0])];
        let b = LossBatch {
            queries: vec![vec![unit(&[1.0, 0.0])], vec![unit(&[0.0, 1.0])]],
            positives: vec![d.clone(), vec![unit(&[0.0, 1.0])]],
            hard_negatives: vec![],
        };
        let out = late_interaction_loss(&b, &LossConfig::with_tau(1.0), false).unwrap();
        assert!(out.grads.positives[0][0].iter().any(|&g| g != 0.0));
        assert!(out.grads.positives[0][1].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rejects_empty_and_ragged() {
        let empty: LossBatch<TokenMatrix> = LossBatch {
            queries: vec![],
            positives: vec![],
            hard_negatives: vec![],
        };
        assert!(matches!(
            late_interaction_loss(&empty, &LossConfig::default(), false),
            Err(Error::DegenerateBatch(_))
        ));
        let no_tokens = LossBatch {
            queries: vec![vec![vec![1.0, 0.0]]],
            positives: vec![vec![]],
            hard_negatives: vec![],
        };
        assert!(late_interaction_loss(&no_tokens, &LossConfig::default(), false).is_err());
    }
}
