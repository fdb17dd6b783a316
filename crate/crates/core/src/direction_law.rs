//! Zero-mean direction laws on the unit sphere and their covariance.

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::rng::standard_normal;
use rand::Rng;
use serde::{Deserialize, Serialize};

const UNIT_TOL: f64 = 1e-12;

/// Distribution of the direction increments: either uniform on S^{d−1} or a
/// finite family of unit-vector atoms with weights. The mean must vanish.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DirectionLaw {
    UniformSphere {
        dim: usize,
    },
    DiscreteAtoms {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

impl DirectionLaw {
    pub fn uniform(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(DirectionLaw::UniformSphere { dim })
    }

    /// Atoms must be unit vectors, weights a probability vector, and the
    /// weighted mean must be the zero vector (all to 1e-12).
    pub fn discrete(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::LengthMismatch(format!(
                "{} atoms vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::invalid("atoms must have dimension >= 1"));
        }
        let mut wsum = 0.0;
        let mut mean = vec![0.0; dim];
        for (p, &w) in points.iter().zip(&weights) {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if w < 0.0 {
                return Err(Error::invalid("weights must be non-negative"));
            }
            if (norm(p) - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(format!("atom {p:?} is not a unit vector")));
            }
            wsum += w;
            for i in 0..dim {
                mean[i] += w * p[i];
            }
        }
        if (wsum - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("weights sum to {wsum}, not 1")));
        }
        if mean.iter().any(|m| m.abs() > UNIT_TOL) {
            return Err(Error::invalid(format!(
                "direction law must have zero mean, got {mean:?}"
            )));
        }
        Ok(DirectionLaw::DiscreteAtoms { points, weights })
    }

    pub fn dim(&self) -> usize {
        match self {
            DirectionLaw::UniformSphere { dim } => *dim,
            DirectionLaw::DiscreteAtoms { points, .. } => points[0].len(),
        }
    }

    /// Re-check the construction invariants; needed for laws that arrived
    /// through deserialization rather than the validating constructors.
    pub fn validate(&self) -> Result<()> {
        match self {
            DirectionLaw::UniformSphere { dim } => {
                Self::uniform(*dim)?;
                Ok(())
            }
            DirectionLaw::DiscreteAtoms { points, weights } => {
                Self::discrete(points.clone(), weights.clone())?;
                Ok(())
            }
        }
    }
}

/// One draw from the law; always a unit vector.
pub fn sample_direction<R: Rng>(law: &DirectionLaw, rng: &mut R) -> Vec<f64> {
    match law {
        DirectionLaw::UniformSphere { dim } => {
            // Normalized Gaussian vector: uniform in every dimension.
            loop {
                let v: Vec<f64> = (0..*dim).map(|_| standard_normal(rng)).collect();
                let n = norm(&v);
                if n > 1e-12 {
                    return v.iter().map(|x| x / n).collect();
                }
            }
        }
        DirectionLaw::DiscreteAtoms { points, weights } => {
            let mut u: f64 = rng.random();
            for (p, &w) in points.iter().zip(weights) {
                if u < w {
                    return p.clone();
                }
                u -= w;
            }
            points.last().unwrap().clone()
        }
    }
}

/// Exact covariance matrix `K = E ε εᵀ` of the law.
pub fn covariance_of(law: &DirectionLaw) -> Matrix {
    match law {
        DirectionLaw::UniformSphere { dim } => Matrix::scaled_identity(*dim, 1.0 / *dim as f64),
        DirectionLaw::DiscreteAtoms { points, weights } => {
            let d = points[0].len();
            let mut k = Matrix::zeros(d);
            for (p, &w) in points.iter().zip(weights) {
                for i in 0..d {
                    for j in 0..d {
                        k[(i, j)] += w * p[i] * p[j];
                    }
                }
            }
            k
        }
    }
}

/// ±e1 atoms with equal weight, handy in tests and configs.
pub fn plus_minus_axis(dim: usize, axis: usize) -> Result<DirectionLaw> {
    let mut p = vec![0.0; dim];
    p[axis] = 1.0;
    let mut q = vec![0.0; dim];
    q[axis] = -1.0;
    DirectionLaw::discrete(vec![p, q], vec![0.5, 0.5])
}
