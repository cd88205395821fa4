//! Linear and spherical interpolation of named tensor maps.

mod container;

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use container::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, MAGIC};

pub const DEFAULT_PARALLEL_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidData(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn norm(&self) -> f64 {
        crate::vector::l2_norm(&self.data)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointTensors {
    pub tensors: BTreeMap<String, Tensor>,
}

impl FromIterator<(String, Tensor)> for CheckpointTensors {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self {
            tensors: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMethod {
    Linear,
    Slerp,
}

/// SLERP output magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Magnitude {
    #[default]
    Interpolate,
    KeepA,
}

impl FromStr for MergeMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "slerp" => Ok(Self::Slerp),
            _ => Err(Error::InvalidConfig(format!("unknown merge method `{s}`"))),
        }
    }
}

impl FromStr for Magnitude {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interpolate" => Ok(Self::Interpolate),
            "keep-a" => Ok(Self::KeepA),
            _ => Err(Error::InvalidConfig(format!("unknown magnitude mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub method: MergeMethod,
    pub alpha: f64,
    pub parallel_threshold: f64,
    pub magnitude: Magnitude,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            method: MergeMethod::Slerp,
            alpha: 0.5,
            parallel_threshold: DEFAULT_PARALLEL_THRESHOLD,
            magnitude: Magnitude::Interpolate,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

fn check_schema(a: &CheckpointTensors, b: &CheckpointTensors) -> Result<()> {
    let mut diffs = Vec::new();
    for (name, ta) in &a.tensors {
        match b.tensors.get(name) {
            None => diffs.push(format!("{name}: only in A")),
            Some(tb) if tb.shape != ta.shape => diffs.push(format!("{name}: shape {:?} vs {:?}", ta.shape, tb.shape)),
            _ => {}
        }
    }
    for name in b.tensors.keys().filter(|n| !a.tensors.contains_key(*n)) {
        diffs.push(format!("{name}: only in B"));
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::SchemaMismatch(diffs))
    }
}

fn per_tensor<F>(a: &CheckpointTensors, b: &CheckpointTensors, f: F) -> Result<CheckpointTensors>
where
    F: Fn(&str, &Tensor, &Tensor) -> Result<Vec<f32>> + Sync,
{
    check_schema(a, b)?;
    let pairs: Vec<(&String, &Tensor, &Tensor)> = a.tensors.iter().map(|(n, ta)| (n, ta, &b.tensors[n])).collect();
    let merged: Vec<(String, Tensor)> = pairs
        .into_par_iter()
        .map(|(n, ta, tb)| {
            Ok((
                n.clone(),
                Tensor {
                    shape: ta.shape.clone(),
                    data: f(n, ta, tb)?,
                },
            ))
        })
        .collect::<Result<_>>()?;
    Ok(merged.into_iter().collect())
}

/// `w·x + (1−w)·y` in f64, rounded once to f32.
fn lerp(x: &[f32], y: &[f32], w: f64) -> Vec<f32> {
    if w == 1.0 {
        return x.to_vec();
    }
    if w == 0.0 {
        return y.to_vec();
    }
    x.iter()
        .zip(y)
        .map(|(&x, &y)| (w * x as f64 + (1.0 - w) * y as f64) as f32)
        .collect()
}

/// `alpha·a + (1−alpha)·b` per tensor.
pub fn merge_linear(a: &CheckpointTensors, b: &CheckpointTensors, alpha: f64) -> Result<CheckpointTensors> {
    check_alpha(alpha)?;
    per_tensor(a, b, |_, ta, tb| Ok(lerp(&ta.data, &tb.data, alpha)))
}

fn slerp_tensor(
    name: &str,
    a: &[f32],
    b: &[f32],
    alpha: f64,
    threshold: f64,
    magnitude: Magnitude,
) -> Result<Vec<f32>> {
    let na = crate::vector::l2_norm(a);
    let nb = crate::vector::l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroTensor(name.to_string()));
    }
    let cos = (crate::vector::dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    let omega = cos.acos();
    let sin = omega.sin();
    if sin < threshold {
        // alpha = 0 is parent A here, so the linear weight on A is 1 − alpha.
        return Ok(lerp(a, b, 1.0 - alpha));
    }
    let mag = match magnitude {
        Magnitude::Interpolate => (1.0 - alpha) * na + alpha * nb,
        Magnitude::KeepA => na,
    };
    let wa = ((1.0 - alpha) * omega).sin() / sin * mag / na;
    let wb = (alpha * omega).sin() / sin * mag / nb;
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| (wa * x as f64 + wb * y as f64) as f32)
        .collect())
}

/// Spherical interpolation per flattened tensor; `alpha = 0` gives `a`.
/// Near-(anti)parallel tensors fall back to linear interpolation.
pub fn merge_slerp(
    a: &CheckpointTensors,
    b: &CheckpointTensors,
    alpha: f64,
    parallel_threshold: f64,
    magnitude: Magnitude,
) -> Result<CheckpointTensors> {
    check_alpha(alpha)?;
    if !(parallel_threshold > 0.0) {
        return Err(Error::InvalidConfig("parallel threshold must be > 0".into()));
    }
    per_tensor(a, b, |n, ta, tb| {
        slerp_tensor(n, &ta.data, &tb.data, alpha, parallel_threshold, magnitude)
    })
}

pub fn merge(a: &CheckpointTensors, b: &CheckpointTensors, config: &MergeConfig) -> Result<CheckpointTensors> {
    match config.method {
        MergeMethod::Linear => merge_linear(a, b, config.alpha),
        MergeMethod::Slerp => merge_slerp(a, b, config.alpha, config.parallel_threshold, config.magnitude),
    }
}
