use crate::error::{contract, Error, Result};
use crate::measures::{MixtureKind, MixtureSpec, SnapshotBatch};
use crate::rng::RngStream;
use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Empirical second-moment matrix from 2-snapshots.
///
/// A snapshot with letters `i ≠ j` adds `1/(2N)` to both `(i, j)` and `(j, i)`;
/// a repeated letter adds `1/N` to `(i, i)`. With `poissonize`, only the first
/// `min(M, N)` snapshots are used, where `M ~ Poisson(N − 4√N)`.
pub fn estimate_a(batch: &SnapshotBatch, poissonize: bool, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    if batch.k() != 2 {
        return contract(format!("second-moment estimate needs 2-snapshots, got K = {}", batch.k()));
    }
    if batch.is_empty() {
        return contract("empty 2-snapshot batch");
    }
    let mut used = batch.len();
    if poissonize {
        let n = used as f64;
        let mean = n - 4.0 * n.sqrt();
        if mean > 0.0 {
            let m = Poisson::new(mean).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng);
            used = (m as usize).clamp(1, used);
        }
    }
    let n = batch.n();
    let mut counts = vec![0u64; n * n];
    for s in batch.iter_letters().take(used) {
        let (i, j) = (s[0] as usize, s[1] as usize);
        counts[i.min(j) * n + i.max(j)] += 1;
    }
    let total = used as f64;
    let a = DMatrix::from_fn(n, n, |i, j| {
        let c = counts[i.min(j) * n + i.max(j)] as f64;
        if i == j { c / total } else { c / (2.0 * total) }
    });
    Ok(a)
}

/// `A = ∫ x xᵀ dϑ` in closed form.
pub fn exact_a(spec: &MixtureSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.n;
    let outer = |u: &[f64], v: &[f64]| DMatrix::from_fn(n, n, |i, j| u[i] * v[j]);
    match spec.kind {
        MixtureKind::KspikeSimplex | MixtureKind::KspikeUnitInterval => {
            let m = spec.simplex_measure().expect("discrete kind");
            let mut a = DMatrix::zeros(n, n);
            for (p, w) in m.iter() {
                a += outer(p, p) * w;
            }
            Ok(a)
        }
        MixtureKind::ContinuousSegment => {
            let (u, v) = (&spec.vertices[0], &spec.vertices[1]);
            Ok((outer(u, u) + outer(v, v)) / 3.0 + (outer(u, v) + outer(v, u)) / 6.0)
        }
        MixtureKind::ContinuousSubspace => {
            let m = spec.vertices.len();
            let alpha = spec.dirichlet_alpha.clone().unwrap_or_else(|| vec![1.0; m]);
            let a0: f64 = alpha.iter().sum();
            let mut a = DMatrix::zeros(n, n);
            for x in 0..m {
                for y in 0..m {
                    let delta = if x == y { alpha[x] } else { 0.0 };
                    let e = (alpha[x] * alpha[y] + delta) / (a0 * (a0 + 1.0));
                    a += outer(&spec.vertices[x], &spec.vertices[y]) * e;
                }
            }
            Ok(a)
        }
    }
}

/// Rank-reduced second-moment matrix and the spectrum it was cut from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// `Σ λ_i v_i v_iᵀ` over the kept eigenpairs.
    pub a_prime: DMatrix<f64>,
    /// Orthonormal eigenvectors of the kept eigenpairs, as columns.
    pub vectors: DMatrix<f64>,
    /// Full spectrum in decreasing order.
    pub eigenvalues: Vec<f64>,
    pub gamma: f64,
    /// Eigenvalues at least `gamma`.
    pub k_prime: usize,
    pub kept: usize,
    /// False when no gap qualified and `min(k', k)` pairs were kept.
    pub gap_found: bool,
}

/// Sorted eigen-decomposition of a symmetric matrix, largest eigenvalue first.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Keep the leading eigenpairs of `Ã` above a spectral gap.
///
/// With `γ = ε²/(k n)` and `k'` eigenvalues at least `γ`, the cut is the
/// largest `j ≤ min(k', k) + 1` with `λ_{j−1} − λ_j ≥ γ/k` (1-based), and the
/// first `j − 1` eigenpairs are kept. Without such a gap, `min(k', k)` are kept.
pub fn spectral_truncate(a: &DMatrix<f64>, k: usize, epsilon: f64, n: usize) -> Result<Truncation> {
    if a.nrows() != a.ncols() {
        return contract("matrix must be square");
    }
    if k == 0 || n == 0 || !(epsilon > 0.0) {
        return contract("k, n and epsilon must be positive");
    }
    let asym = (a - a.transpose()).abs().max();
    if asym > 1e-9 * (1.0 + a.abs().max()) {
        return contract(format!("matrix is not symmetric (max asymmetry {asym:.3e})"));
    }
    let (values, vecs) = sorted_eigen(a);
    let gamma = epsilon * epsilon / (k as f64 * n as f64);
    let k_prime = values.iter().filter(|&&l| l >= gamma).count();
    if k_prime == 0 {
        return Err(Error::Degenerate(format!(
            "no eigenvalue reaches gamma = {gamma:.3e} (largest {:.3e})",
            values.first().copied().unwrap_or(0.0)
        )));
    }
    let lam = |j: usize| values.get(j - 1).copied().unwrap_or(0.0);
    let top = k_prime.min(k) + 1;
    let cut = (2..=top).rev().find(|&j| lam(j - 1) - lam(j) >= gamma / k as f64);
    let (kept, gap_found) = match cut {
        Some(j) => (j - 1, true),
        None => (k_prime.min(k), false),
    };
    let vectors = vecs.columns(0, kept).into_owned();
    let mut a_prime = DMatrix::zeros(a.nrows(), a.nrows());
    for c in 0..kept {
        let v = vectors.column(c);
        a_prime += &v * v.transpose() * values[c].max(0.0);
    }
    Ok(Truncation { a_prime, vectors, eigenvalues: values, gamma, k_prime, kept, gap_found })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::generate_batch;

    fn e(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn point_mass_at_vertex() {
        let spec = MixtureSpec::kspike(vec![(e(3, 0), 1.0)]).unwrap();
        let mut rng = RngStream::new(0);
        let b = generate_batch(&spec, 1000, 2, &mut rng).unwrap();
        let a = estimate_a(&b, false, &mut rng).unwrap();
        let mut e11 = DMatrix::zeros(3, 3);
        e11[(0, 0)] = 1.0;
        assert_eq!(a, e11);
        assert_eq!(exact_a(&spec).unwrap(), e11);
    }

    #[test]
    fn estimate_is_symmetric_with_unit_sum() {
        let spec = MixtureSpec::kspike(vec![(vec![0.2, 0.3, 0.5], 0.5), (vec![0.6, 0.4, 0.0], 0.5)]).unwrap();
        let mut rng = RngStream::new(9);
        let b = generate_batch(&spec, 5000, 2, &mut rng).unwrap();
        for pois in [false, true] {
            let a = estimate_a(&b, pois, &mut rng).unwrap();
            assert_eq!(&a - a.transpose(), DMatrix::zeros(3, 3));
            assert!((a.sum() - 1.0).abs() < 1e-12);
        }
        let k1 = generate_batch(&spec, 10, 1, &mut rng).unwrap();
        assert!(estimate_a(&k1, false, &mut rng).is_err());
    }

    #[test]
    fn exact_a_examples() {
        let spec = MixtureSpec::kspike(vec![(e(4, 0), 0.5), (e(4, 1), 0.5)]).unwrap();
        let a = exact_a(&spec).unwrap();
        let mut want = DMatrix::zeros(4, 4);
        want[(0, 0)] = 0.5;
        want[(1, 1)] = 0.5;
        assert_eq!(a, want);

        let spec = MixtureSpec::kspike(vec![(vec![0.2, 0.8], 0.3), (vec![0.5, 0.5], 0.7)]).unwrap();
        let tr = 0.3 * (0.04 + 0.64) + 0.7 * 0.5;
        assert!((exact_a(&spec).unwrap().trace() - tr).abs() < 1e-15);
    }

    #[test]
    fn continuous_closed_forms_match_sampling() {
        let seg = MixtureSpec::segment(vec![0.7, 0.3, 0.0], vec![0.0, 0.2, 0.8]).unwrap();
        let sub = MixtureSpec {
            kind: MixtureKind::ContinuousSubspace,
            n: 3,
            k: 3,
            spikes: vec![],
            vertices: vec![e(3, 0), e(3, 1), vec![0.0, 0.5, 0.5]],
            dirichlet_alpha: Some(vec![0.5, 1.0, 2.0]),
        };
        for spec in [seg, sub] {
            let exact = exact_a(&spec).unwrap();
            let m = spec.discretize(200_000, &mut RngStream::new(3)).unwrap();
            let mut mc = DMatrix::zeros(3, 3);
            for (p, w) in m.iter() {
                mc += DMatrix::from_fn(3, 3, |i, j| p[i] * p[j]) * w;
            }
            assert!((exact - mc).abs().max() < 3e-3);
        }
    }

    #[test]
    fn estimate_is_unbiased() {
        let spec = MixtureSpec::kspike(vec![(vec![0.1, 0.3, 0.6], 0.4), (vec![0.5, 0.5, 0.0], 0.6)]).unwrap();
        let exact = exact_a(&spec).unwrap();
        let reps = 100;
        let mut sum = DMatrix::zeros(3, 3);
        let mut sq = DMatrix::zeros(3, 3);
        for seed in 0..reps {
            let mut rng = RngStream::new(seed);
            let b = generate_batch(&spec, 2000, 2, &mut rng).unwrap();
            let a = estimate_a(&b, false, &mut rng).unwrap();
            sq += a.component_mul(&a);
            sum += a;
        }
        let mean = &sum / reps as f64;
        for i in 0..3 {
            for j in 0..3 {
                let var = sq[(i, j)] / reps as f64 - mean[(i, j)].powi(2);
                let se = (var.max(0.0) / reps as f64).sqrt();
                assert!((mean[(i, j)] - exact[(i, j)]).abs() <= 3.0 * se + 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn estimate_converges() {
        let spec = MixtureSpec::kspike(vec![(vec![0.1, 0.2, 0.3, 0.4], 0.5), (vec![0.4, 0.4, 0.1, 0.1], 0.5)]).unwrap();
        let exact = exact_a(&spec).unwrap();
        let medians: Vec<f64> = [10_000, 100_000, 1_000_000]
            .iter()
            .map(|&n| {
                let mut errs: Vec<f64> = (0..5)
                    .map(|seed| {
                        let mut rng = RngStream::new(100 + seed);
                        let b = generate_batch(&spec, n, 2, &mut rng).unwrap();
                        (estimate_a(&b, true, &mut rng).unwrap() - &exact).norm()
                    })
                    .collect();
                errs.sort_by(f64::total_cmp);
                errs[2]
            })
            .collect();
        assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    }

    #[test]
    fn truncation_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let t = spectral_truncate(&a, 1, 0.5, 2).unwrap();
        assert_eq!(t.kept, 1);
        assert!((&t.a_prime - &a).abs().max() < 1e-15);

        let (k, n, eps) = (2usize, 3usize, 0.3);
        let gamma = eps * eps / (k * n) as f64;
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            0.5,
            0.5 - gamma / (2.0 * k as f64),
            gamma / 2.0,
        ]));
        let t = spectral_truncate(&a, k, eps, n).unwrap();
        assert_eq!(t.k_prime, 2);
        assert!(t.gap_found);
        assert_eq!(t.kept, 2);

        let zero = DMatrix::zeros(3, 3);
        assert!(matches!(spectral_truncate(&zero, 2, 0.1, 3), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rank_matches_span_of_spikes() {
        let spikes = vec![
            (vec![0.5, 0.5, 0.0, 0.0, 0.0], 0.3),
            (vec![0.0, 0.2, 0.8, 0.0, 0.0], 0.3),
            (vec![0.1, 0.1, 0.1, 0.3, 0.4], 0.4),
        ];
        let a = exact_a(&MixtureSpec::kspike(spikes).unwrap()).unwrap();
        let t = spectral_truncate(&a, 3, 0.1, 5).unwrap();
        assert_eq!(t.kept, 3);
    }
}
