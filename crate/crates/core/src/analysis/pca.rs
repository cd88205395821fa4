use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this dimension the top components come from power iteration
/// instead of a full eigendecomposition.
pub const EXACT_DIM_LIMIT: usize = 512;
pub const POWER_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Query,
    Document,
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "query" | "q" => Ok(Self::Query),
            "document" | "doc" | "d" => Ok(Self::Document),
            other => Err(Error::InvalidData(format!("unknown role `{other}`"))),
        }
    }
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Query => "query",
            Self::Document => "document",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointLabel {
    pub id: String,
    pub language: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<PointLabel>,
    pub explained_variance_ratio: [f64; 2],
    /// Unit principal directions, each with its first nonzero loading positive.
    pub components: [Vec<f64>; 2],
}

fn fix_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn top2_exact(x: &DMatrix<f64>, n: usize) -> ([Vec<f64>; 2], [f64; 2]) {
    let cov = (x.transpose() * x) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let pick = |i: usize| eig.eigenvectors.column(order[i]).iter().copied().collect::<Vec<f64>>();
    (
        [pick(0), pick(1)],
        [eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0)],
    )
}

fn orthonormalize(vs: &mut [Vec<f64>]) {
    for i in 0..vs.len() {
        for j in 0..i {
            let p: f64 = vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum();
            let vj = vs[j].clone();
            vs[i].iter_mut().zip(&vj).for_each(|(a, b)| *a -= p * b);
        }
        let n = vs[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 0.0 {
            vs[i].iter_mut().for_each(|a| *a /= n);
        }
    }
}

/// Block power iteration on the covariance, applied as `Xᵀ(Xv)`.
fn top2_power(x: &DMatrix<f64>, n: usize, seed: u64) -> ([Vec<f64>; 2], [f64; 2]) {
    let d = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vs: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    orthonormalize(&mut vs);
    let cov_apply = |v: &[f64]| -> Vec<f64> {
        let xv = x * nalgebra::DVector::from_column_slice(v);
        let out = x.transpose() * xv;
        out.iter().map(|a| a / (n - 1) as f64).collect()
    };
    for _ in 0..POWER_ITERATIONS {
        vs = vs.iter().map(|v| cov_apply(v)).collect();
        orthonormalize(&mut vs);
    }
    let lam: Vec<f64> = vs
        .iter()
        .map(|v| cov_apply(v).iter().zip(v).map(|(a, b)| a * b).sum::<f64>().max(0.0))
        .collect();
    let (mut a, mut b) = (vs[0].clone(), vs[1].clone());
    let (mut la, mut lb) = (lam[0], lam[1]);
    if lb > la {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut la, &mut lb);
    }
    ([a, b], [la, lb])
}

/// Projects mean-centered `rows` onto their top two principal directions.
pub fn pca_project(rows: &[Vec<f32>], labels: Vec<PointLabel>, seed: u64) -> Result<Projection2D> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::InvalidData(format!("PCA needs at least 3 points, got {n}")));
    }
    if labels.len() != n {
        return Err(Error::InvalidData(format!("{n} points but {} labels", labels.len())));
    }
    let d = rows[0].len();
    if d < 2 {
        return Err(Error::InvalidData("PCA needs dimension >= 2".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimMismatch {
            expected: d,
            actual: r.len(),
        });
    }
    let mut mean = vec![0.0f64; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, &v)| *m += v as f64);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] as f64 - mean[j]);
    let total: f64 = x.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    let scale = mean.iter().map(|m| m * m).sum::<f64>().max(1.0);
    if total <= 1e-24 * scale {
        return Err(Error::DegenerateData("all points are identical".into()));
    }
    let (mut comps, lam) = if d <= EXACT_DIM_LIMIT {
        top2_exact(&x, n)
    } else {
        top2_power(&x, n, seed)
    };
    comps.iter_mut().for_each(|c| fix_sign(c));
    let points = (0..n)
        .map(|i| {
            let row = x.row(i);
            let p = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [p(&comps[0]), p(&comps[1])]
        })
        .collect();
    Ok(Projection2D {
        points,
        labels,
        explained_variance_ratio: [(lam[0] / total).clamp(0.0, 1.0), (lam[1] / total).clamp(0.0, 1.0)],
        components: comps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<PointLabel> {
        (0..n)
            .map(|i| PointLabel {
                id: format!("p{i}"),
                language: "en".into(),
                role: Role::Document,
            })
            .collect()
    }

    fn gaussian(n: usize, d: usize, scales: &[f64], seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| (rng.sample::<f64, _>(StandardNormal) * scales[j % scales.len()]) as f32)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn planar_points_keep_distances() {
        let rows: Vec<Vec<f32>> = [(0.0, 0.0), (3.0, 1.0), (-1.0, 2.0), (2.0, -2.0), (0.5, 0.25)]
            .iter()
            .map(|&(a, b): &(f32, f32)| vec![a + b, a - b, 0.0, 2.0 * b, 1.0])
            .collect();
        let p = pca_project(&rows, labels(5), 1).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let orig: f64 = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let proj =
                    ((p.points[i][0] - p.points[j][0]).powi(2) + (p.points[i][1] - p.points[j][1]).powi(2)).sqrt();
                assert!((orig - proj).abs() <= 1e-6 * orig.max(1.0));
            }
        }
        assert!((p.explained_variance_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn isotropic_ratios() {
        let rows = gaussian(1000, 16, &[1.0], 42);
        let p = pca_project(&rows, labels(1000), 42).unwrap();
        for r in p.explained_variance_ratio {
            assert!((r - 1.0 / 16.0).abs() <= 0.02, "{r}");
        }
        assert!(p.explained_variance_ratio[0] >= p.explained_variance_ratio[1]);
    }

    #[test]
    fn duplicates_are_degenerate() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 4];
        assert!(matches!(
            pca_project(&rows, labels(4), 0),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn sign_convention() {
        let rows = gaussian(50, 4, &[3.0, 1.0, 0.5, 0.1], 9);
        let p = pca_project(&rows, labels(50), 0).unwrap();
        for c in &p.components {
            assert!(c.iter().find(|x| x.abs() > 1e-12).unwrap() > &0.0);
        }
    }

    #[test]
    fn power_iteration_matches_exact_axes() {
        // d above the exact limit, variance concentrated on two known axes.
        let d = EXACT_DIM_LIMIT + 8;
        let mut rows = gaussian(200, d, &[0.05], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for r in rows.iter_mut() {
            r[7] += (rng.sample::<f64, _>(StandardNormal) * 5.0) as f32;
            r[100] += (rng.sample::<f64, _>(StandardNormal) * 2.0) as f32;
        }
        let p = pca_project(&rows, labels(200), 42).unwrap();
        assert!(p.components[0][7].abs() > 0.99);
        assert!(p.components[1][100].abs() > 0.99);
    }
}
