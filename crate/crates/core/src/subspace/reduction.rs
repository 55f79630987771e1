use super::basis::{build_basis_from_span, Basis};
use super::isotropy::{apply_isotropy, build_isotropy_map, estimate_r, IsotropyMap};
use super::matrix::{estimate_a, spectral_truncate, Truncation};
use crate::error::{contract, Result, StageExt};
use crate::measures::SnapshotBatch;
use crate::rng::RngStream;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Parameters of the isotropy, truncation and basis stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionParams {
    pub k: usize,
    pub epsilon: f64,
    pub sigma: f64,
    /// Half-width multiplier of the hypercube `[−C/n′, C/n′]^{n′}`.
    pub c: f64,
    pub poissonize: bool,
}

/// Everything the reduction produced, in the split alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub map: IsotropyMap,
    /// 2-snapshots discarded for containing an eliminated letter.
    pub dropped: usize,
    pub a_tilde: DMatrix<f64>,
    pub truncation: Truncation,
    pub basis: Basis,
}

/// `S A Sᵀ`, where `S` spreads letter `i` evenly over its copies.
pub fn split_matrix(a: &DMatrix<f64>, map: &IsotropyMap) -> Result<DMatrix<f64>> {
    if a.nrows() != map.n || a.ncols() != map.n {
        return contract("matrix does not match the map's alphabet");
    }
    let src: Vec<usize> = (0..map.n_prime).map(|c| map.letter_of(c)).collect();
    Ok(DMatrix::from_fn(map.n_prime, map.n_prime, |x, y| {
        let (i, j) = (src[x], src[y]);
        a[(i, j)] / (map.copies[i] * map.copies[j]) as f64
    }))
}

/// Isotropy, second-moment matrix, truncation and basis.
///
/// With `known_a` (in the original alphabet) the 2-snapshot batch is ignored
/// and the exact matrix, split to the new alphabet, is truncated instead.
pub fn reduce(
    batch1: &SnapshotBatch,
    batch2: &SnapshotBatch,
    params: &ReductionParams,
    known_a: Option<&DMatrix<f64>>,
    rng: &RngStream,
) -> Result<Reduction> {
    let r = estimate_r(batch1).stage("isotropy")?;
    let map = build_isotropy_map(&r, params.sigma).stage("isotropy")?;
    let (a_tilde, dropped) = match known_a {
        Some(a) => (split_matrix(a, &map).stage("estimate-a")?, 0),
        None => {
            let iso = apply_isotropy(batch2, &map, &mut rng.split(1)).stage("isotropy")?;
            (estimate_a(&iso.batch, params.poissonize, &mut rng.split(2)).stage("estimate-a")?, iso.dropped)
        }
    };
    let truncation = spectral_truncate(&a_tilde, params.k, params.epsilon, map.n_prime).stage("truncate")?;
    let basis = build_basis_from_span(
        &truncation.vectors,
        params.c,
        params.epsilon,
        params.k,
        truncation.eigenvalues.clone(),
    )
    .stage("basis")?;
    Ok(Reduction { map, dropped, a_tilde, truncation, basis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{generate_batch, MixtureSpec};
    use crate::subspace::exact_a;

    #[test]
    fn split_matrix_matches_split_points() {
        let spec = MixtureSpec::kspike(vec![(vec![0.6, 0.3, 0.1], 0.5), (vec![0.1, 0.2, 0.7], 0.5)]).unwrap();
        let map = IsotropyMap::from_copies(vec![3, 1, 2], 0.1, vec![0.35, 0.25, 0.4]).unwrap();
        let a = split_matrix(&exact_a(&spec).unwrap(), &map).unwrap();
        let mut want = DMatrix::zeros(6, 6);
        for s in &spec.spikes {
            let q = nalgebra::DVector::from_vec(map.split_point(&s.point));
            want += &q * q.transpose() * s.weight;
        }
        assert!((a - want).abs().max() < 1e-15);
    }

    #[test]
    fn known_and_estimated_paths_agree_on_rank() {
        let spec = MixtureSpec::kspike(vec![
            (vec![0.4, 0.4, 0.1, 0.1, 0.0, 0.0], 0.5),
            (vec![0.0, 0.0, 0.1, 0.1, 0.4, 0.4], 0.5),
        ])
        .unwrap();
        let mut g = RngStream::new(1);
        let b1 = generate_batch(&spec, 20_000, 1, &mut g).unwrap();
        let b2 = generate_batch(&spec, 200_000, 2, &mut g).unwrap();
        let params = ReductionParams { k: 2, epsilon: 0.3, sigma: 0.05, c: 20.0, poissonize: false };
        let known = reduce(&b1, &b2, &params, Some(&exact_a(&spec).unwrap()), &RngStream::new(2)).unwrap();
        let est = reduce(&b1, &b2, &params, None, &RngStream::new(2)).unwrap();
        assert_eq!(known.truncation.kept, 2);
        assert_eq!(est.truncation.kept, 2);
        assert_eq!(known.basis.n, known.map.n_prime);
    }
}
