//! Discrete measures, the synthetic mixture generator, and the exact
//! transportation-distance oracle.
//!
//! Every learner in this crate returns a [`DiscreteMeasure`] and every accuracy
//! claim is checked with [`transport_distance`] or [`transport_distance_1d`].

mod mixture;
mod simplex;
mod snapshot;
mod transport;

pub use mixture::{sample_constituent, MixtureKind, MixtureSpec, Spike};
pub use simplex::{clamp_renormalize, l1_distance_to_simplex, l1_project_to_simplex};
pub use snapshot::{generate_batch, sample_k_snapshot, SnapshotBatch};
pub use transport::{
    dual_certificate_check, transport_distance, transport_distance_1d, transport_plan,
    GroundMetric, PiecewiseLinear1d, TransportPlan, MAX_TRANSPORT_CELLS,
};

use crate::error::{validation, Error, Result};
use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Tolerance used when comparing total masses.
pub const MASS_TOL: f64 = 1e-9;

/// Grid used to decide that two support points coincide.
const CANONICAL_GRID: f64 = 1e12;

/// A finite weighted point set in a common ambient dimension.
///
/// Construction merges points that agree after rounding every coordinate to a
/// 1e-12 grid; the first occurrence keeps its coordinates. Weights need not sum
/// to one, so restricted (sub-probability) measures are representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureFile", into = "MeasureFile")]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureFile> for DiscreteMeasure {
    type Error = Error;

    fn try_from(f: MeasureFile) -> Result<Self> {
        let m = DiscreteMeasure::new(f.points, f.weights)?;
        if !m.points.is_empty() && m.dim != f.dim {
            return validation(format!("declared dim {} but points have dim {}", f.dim, m.dim));
        }
        Ok(DiscreteMeasure { dim: f.dim, ..m })
    }
}

impl From<DiscreteMeasure> for MeasureFile {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureFile {
            dim: m.dim,
            points: m.points,
            weights: m.weights,
        }
    }
}

fn canonical_key(p: &[f64]) -> Vec<u64> {
    p.iter()
        .map(|&x| {
            let r = (x * CANONICAL_GRID).round();
            // fold -0.0 onto 0.0
            if r == 0.0 { 0u64 } else { r.to_bits() }
        })
        .collect()
}

/// Check that every coordinate is finite.
pub fn validate_point(p: &[f64]) -> Result<()> {
    if let Some(x) = p.iter().find(|x| !x.is_finite()) {
        return validation(format!("non-finite coordinate {x}"));
    }
    Ok(())
}

/// Check membership in the probability simplex within `tol`.
pub fn validate_probability_vector(p: &[f64], tol: f64) -> Result<()> {
    validate_point(p)?;
    if p.is_empty() {
        return validation("empty probability vector");
    }
    if let Some(x) = p.iter().find(|&&x| x < -tol) {
        return validation(format!("negative probability {x}"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol {
        return validation(format!("probabilities sum to {s}, not 1"));
    }
    Ok(())
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return validation(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            ));
        }
        let dim = points.first().map_or(0, Vec::len);
        let mut merged: IndexMap<Vec<u64>, (Vec<f64>, f64)> = IndexMap::with_capacity(points.len());
        for (p, w) in points.into_iter().zip(weights) {
            if p.len() != dim {
                return validation(format!("mixed point dimensions {} and {}", dim, p.len()));
            }
            validate_point(&p)?;
            if !w.is_finite() || w < 0.0 {
                return validation(format!("invalid weight {w}"));
            }
            merged
                .entry(canonical_key(&p))
                .and_modify(|e| e.1 += w)
                .or_insert((p, w));
        }
        let (points, weights) = merged.into_values().unzip();
        Ok(Self { dim, points, weights })
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    /// Equal weights `1/len` on the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        let weights = vec![w; points.len()];
        Self::new(points, weights)
    }

    /// A measure on the real line.
    pub fn on_line(xs: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), weights.to_vec())
    }

    /// The empty measure in dimension `dim`.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// Coordinates of a one-dimensional measure.
    pub fn line_coords(&self) -> Result<Vec<f64>> {
        if self.dim != 1 && !self.is_empty() {
            return validation(format!("expected a 1-D measure, got dim {}", self.dim));
        }
        Ok(self.points.iter().map(|p| p[0]).collect())
    }

    /// Drop atoms with weight at most `threshold`.
    pub fn prune(&self, threshold: f64) -> Self {
        let (points, weights) = self
            .iter()
            .filter(|(_, w)| *w > threshold)
            .map(|(p, w)| (p.to_vec(), w))
            .unzip();
        Self {
            dim: self.dim,
            points,
            weights,
        }
    }

    /// Rescale weights to total mass one.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.total_mass();
        if m <= 0.0 {
            return validation("cannot normalize a zero-mass measure");
        }
        Ok(Self {
            dim: self.dim,
            points: self.points.clone(),
            weights: self.weights.iter().map(|w| w / m).collect(),
        })
    }

    /// Image measure under `map`: every atom is moved, weights are kept, and
    /// atoms landing on the same point merge.
    pub fn push_forward<F>(&self, map: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let points = self.points.iter().map(|p| map(p)).collect();
        let out = Self::new(points, self.weights.clone())?;
        Ok(out)
    }

    /// Image measure under the linear map `x -> t x`.
    pub fn push_forward_linear(&self, t: &DMatrix<f64>) -> Result<Self> {
        if t.ncols() != self.dim {
            return validation(format!(
                "map expects dimension {} but measure has dimension {}",
                t.ncols(),
                self.dim
            ));
        }
        let out_dim = t.nrows();
        let mut out = self.push_forward(|p| {
            (0..out_dim)
                .map(|r| p.iter().enumerate().map(|(c, x)| t[(r, c)] * x).sum())
                .collect()
        })?;
        out.dim = out_dim;
        Ok(out)
    }

    /// Mean point (for probability measures, the first moment).
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.iter() {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += w * x;
            }
        }
        m
    }
}

/// Image measure under a linear map. Free-function form of
/// [`DiscreteMeasure::push_forward_linear`].
pub fn push_forward(m: &DiscreteMeasure, t: &DMatrix<f64>) -> Result<DiscreteMeasure> {
    m.push_forward_linear(t)
}
