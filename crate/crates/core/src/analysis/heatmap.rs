use serde::Serialize;

use crate::error::{Error, Result};
use crate::scoring::token_similarities;
use crate::vector::MultiVectorEmbedding;

/// Cosine from one query token to every document token, laid out on the
/// patch grid row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapGrid {
    pub query_token: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub token_max: f64,
    pub token_argmax: (usize, usize),
}

impl HeatmapGrid {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// One grid per query token; ties resolve to the lowest flat position.
pub fn maxsim_heatmap(
    q: &MultiVectorEmbedding,
    d: &MultiVectorEmbedding,
    rows: usize,
    cols: usize,
) -> Result<Vec<HeatmapGrid>> {
    if rows.checked_mul(cols) != Some(d.n_tokens()) {
        return Err(Error::GridMismatch {
            rows,
            cols,
            tokens: d.n_tokens(),
        });
    }
    let sims = token_similarities(q, d)?;
    Ok(sims
        .chunks_exact(d.n_tokens())
        .enumerate()
        .map(|(t, row)| {
            let (mut arg, mut best) = (0, row[0]);
            for (j, &s) in row.iter().enumerate().skip(1) {
                if s > best {
                    arg = j;
                    best = s;
                }
            }
            HeatmapGrid {
                query_token: t,
                rows,
                cols,
                values: row.to_vec(),
                token_max: best,
                token_argmax: (arg / cols, arg % cols),
            }
        })
        .collect())
}

/// Square-ish grid for `n` tokens: the largest divisor not above `sqrt(n)`.
pub fn infer_grid(n: usize) -> (usize, usize) {
    let mut r = (n as f64).sqrt() as usize;
    while r > 1 && !n.is_multiple_of(r) {
        r -= 1;
    }
    let r = r.max(1);
    (r, n / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::maxsim;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mv(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> MultiVectorEmbedding {
        let data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        MultiVectorEmbedding::from_flat(data, n, dim)
            .unwrap()
            .normalize_rows()
            .unwrap()
    }

    #[test]
    fn sixteen_by_sixteen() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_mv(&mut rng, 256, 8);
        let q = random_mv(&mut rng, 3, 8);
        let g = maxsim_heatmap(&q, &d, 16, 16).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(infer_grid(256), (16, 16));
        assert!(matches!(
            maxsim_heatmap(&q, &d, 16, 15),
            Err(Error::GridMismatch { tokens: 256, .. })
        ));
    }

    #[test]
    fn identical_token_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_mv(&mut rng, 12, 6);
        let q = MultiVectorEmbedding::from_rows(vec![d.row(7).to_vec()]).unwrap();
        let g = maxsim_heatmap(&q, &d, 3, 4).unwrap();
        assert_eq!(g[0].token_argmax, (1, 3));
        assert!((g[0].token_max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sum_of_maxima_is_maxsim() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = random_mv(&mut rng, 20, 10);
            let q = random_mv(&mut rng, 5, 10);
            let g = maxsim_heatmap(&q, &d, 4, 5).unwrap();
            let s: f64 = g.iter().map(|x| x.token_max).sum();
            assert!((s - maxsim(&q, &d).unwrap()).abs() < 1e-6);
            for x in &g {
                let m = x.values.iter().copied().fold(f64::MIN, f64::max);
                assert!((m - x.token_max).abs() < 1e-6);
            }
        }
    }
}
