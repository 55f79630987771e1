//! Learner for arbitrary mixtures supported on a low-dimensional subspace.
//!
//! Each snapshot is mapped to the average of the rows of `B` indexed by its
//! letters; the empirical measure of these averages, embedded back through
//! `B`, estimates the projection of the mixture onto `span(B)`.

use crate::error::{contract, Result, StageExt};
use crate::measures::{DiscreteMeasure, SnapshotBatch};
use crate::rng::RngStream;
use crate::subspace::{apply_isotropy, final_adjust_report, invert_isotropy, reduce, AdjustReport, Basis, Reduction, ReductionParams};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Basis coordinates of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedSample {
    pub mu_hat: Vec<f64>,
    pub source: usize,
}

/// `μ̃(s) = (1/K) Σ_i b′_{ℓ_i}`, with `b′_ℓ` the `ℓ`-th row of `B`.
pub fn project_snapshot(letters: &[u32], basis: &Basis) -> Result<Vec<f64>> {
    if letters.is_empty() {
        return contract("snapshot has no letters");
    }
    let h = basis.h();
    let mut mu = vec![0.0; h];
    for &l in letters {
        let l = l as usize;
        if l >= basis.n {
            return contract(format!("letter {l} outside alphabet of size {}", basis.n));
        }
        for (j, m) in mu.iter_mut().enumerate() {
            *m += basis.b[(l, j)];
        }
    }
    let k = letters.len() as f64;
    mu.iter_mut().for_each(|m| *m /= k);
    Ok(mu)
}

/// Project every snapshot of a batch.
pub fn project_batch(batch: &SnapshotBatch, basis: &Basis) -> Result<Vec<ProjectedSample>> {
    if batch.n() != basis.n {
        return contract(format!("batch alphabet {} but basis dimension {}", batch.n(), basis.n));
    }
    (0..batch.len())
        .into_par_iter()
        .map(|i| Ok(ProjectedSample { mu_hat: project_snapshot(batch.letters(i), basis)?, source: i }))
        .collect()
}

/// Empirical measure with one atom of weight `1/N` at `B μ̃(s)` per snapshot.
pub fn learn_kdim(batch: &SnapshotBatch, basis: &Basis) -> Result<DiscreteMeasure> {
    if batch.is_empty() || batch.k() == 0 {
        return contract("learner needs a nonempty batch with K >= 1");
    }
    let samples = project_batch(batch, basis)?;
    let points: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| basis.embed(&DVector::from_column_slice(&s.mu_hat)))
        .collect();
    let weights = vec![1.0 / points.len() as f64; points.len()];
    DiscreteMeasure::new(points, weights)
}

/// Output of the full subspace pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdimOutput {
    pub measure: DiscreteMeasure,
    pub reduction: Reduction,
    pub dropped_k: usize,
    pub adjust: AdjustReport,
}

/// Reduction, per-snapshot projection, final adjustment and inversion of the
/// letter splitting.
pub fn learn_kdim_pipeline(
    batch1: &SnapshotBatch,
    batch2: &SnapshotBatch,
    batch_k: &SnapshotBatch,
    params: &ReductionParams,
    known_a: Option<&DMatrix<f64>>,
    rng: &RngStream,
) -> Result<KdimOutput> {
    let reduction = reduce(batch1, batch2, params, known_a, &rng.split(1))?;
    let iso = apply_isotropy(batch_k, &reduction.map, &mut rng.split(2)).stage("isotropy")?;
    if iso.batch.is_empty() {
        return contract("every K-snapshot contained an eliminated letter").stage("learn");
    }
    let learned = learn_kdim(&iso.batch, &reduction.basis).stage("learn")?;
    let (adjusted, adjust) = final_adjust_report(&learned, &reduction.basis, params.epsilon).stage("adjust")?;
    let measure = invert_isotropy(&adjusted, &reduction.map).stage("invert")?;
    Ok(KdimOutput { measure, reduction, dropped_k: iso.dropped, adjust })
}
