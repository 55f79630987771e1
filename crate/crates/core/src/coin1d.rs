//! Learners for mixtures of coins: frequency vectors, the piecewise-constant
//! reconstruction LP for arbitrary mixtures, and the moment LP for mixtures
//! with few spikes.

use crate::error::{contract, Error, Result};
use crate::measures::{DiscreteMeasure, SnapshotBatch};
use crate::polynomials::{bernstein, binomial, build_piecewise_bernstein, pascal_matrix, PiecewiseConstantBasis};
use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default multiplier `c_s` in the moment-LP slack `c_s · K · τ`.
pub const DEFAULT_SLACK_CONSTANT: f64 = 4.0;

/// Maximum number of times the reconstruction slack is doubled.
pub const MAX_DOUBLINGS: u32 = 6;

/// Support enumeration is used only up to these sizes.
pub const ENUMERATION_MAX_CELLS: usize = 32;
pub const ENUMERATION_MAX_SPIKES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FqKind {
    Exact,
    Empirical,
    Normalized,
    Moments,
}

/// A `(K+1)`-vector indexed by the number of heads, or its moment transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub k: usize,
    pub values: Vec<f64>,
    pub kind: FqKind,
}

impl FrequencyVector {
    pub fn new(values: Vec<f64>, kind: FqKind) -> Result<Self> {
        if values.is_empty() {
            return contract("frequency vector needs at least one entry");
        }
        if values.iter().any(|x| !x.is_finite()) {
            return contract("frequency vector has a non-finite entry");
        }
        Ok(Self { k: values.len() - 1, values, kind })
    }

    /// `nfq_i = fq_i / C(K, i)`.
    pub fn normalized(&self) -> Result<Self> {
        self.require_frequencies()?;
        let values = self.values.iter().enumerate().map(|(i, f)| f / binomial(self.k, i)).collect();
        Ok(Self { k: self.k, values, kind: FqKind::Normalized })
    }

    fn require_frequencies(&self) -> Result<()> {
        match self.kind {
            FqKind::Exact | FqKind::Empirical => Ok(()),
            other => contract(format!("expected a frequency vector, got {other:?}")),
        }
    }
}

fn unit_interval_coords(m: &DiscreteMeasure) -> Result<Vec<f64>> {
    let xs = m.line_coords().or_else(|_| contract("expected a measure on [0, 1]"))?;
    if let Some(x) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return contract(format!("support point {x} outside [0, 1]"));
    }
    Ok(xs)
}

/// `fq_i(ϑ) = ∫ B_{i,K} dϑ`.
pub fn exact_fq(m: &DiscreteMeasure, k: usize) -> Result<FrequencyVector> {
    let xs = unit_interval_coords(m)?;
    let values = (0..=k)
        .map(|i| xs.iter().zip(m.weights()).map(|(&x, w)| w * bernstein(i, k, x)).sum())
        .collect();
    FrequencyVector::new(values, FqKind::Exact)
}

/// Fraction of coins showing exactly `i` heads. Heads is letter 0 of a
/// two-letter batch.
pub fn empirical_fq(batch: &SnapshotBatch, k: usize) -> Result<FrequencyVector> {
    if batch.n() != 2 {
        return contract(format!("coin batches have n = 2, got {}", batch.n()));
    }
    if batch.k() != k {
        return contract(format!("batch has K = {}, requested {k}", batch.k()));
    }
    if batch.is_empty() {
        return contract("empty batch");
    }
    let mut counts = vec![0usize; k + 1];
    for s in batch.iter_letters() {
        counts[s.iter().filter(|&&l| l == 0).count()] += 1;
    }
    let n = batch.len() as f64;
    FrequencyVector::new(counts.into_iter().map(|c| c as f64 / n).collect(), FqKind::Empirical)
}

/// Moments `g = Pas · nfq`.
pub fn fq_to_moments(fq: &FrequencyVector) -> Result<FrequencyVector> {
    let nfq = fq.normalized()?;
    let g = pascal_matrix(fq.k) * nalgebra::DVector::from_vec(nfq.values);
    FrequencyVector::new(g.iter().copied().collect(), FqKind::Moments)
}

/// Raw moments `∫ xⁱ dϑ` for `i = 0..=K`.
pub fn exact_moments(m: &DiscreteMeasure, k: usize) -> Result<Vec<f64>> {
    let xs = unit_interval_coords(m)?;
    Ok((0..=k)
        .map(|i| xs.iter().zip(m.weights()).map(|(&x, w)| w * x.powi(i as i32)).sum())
        .collect())
}

/// A reconstructed mixture on `[0, 1]` with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction1d {
    pub measure: DiscreteMeasure,
    /// Slack bound the accepted LP was solved with.
    pub slack: f64,
    /// Largest constraint residual of the returned solution.
    pub residual: f64,
    /// Number of times the slack bound was doubled.
    pub doublings: u32,
    /// True when the support came from the merge fallback instead of enumeration.
    pub heuristic: bool,
}

/// Piecewise values below the first floor are dropped from the LP rows; when
/// the solver hits a singular basis the next, coarser floor is tried.
const COEFF_FLOORS: [f64; 4] = [1e-12, 1e-9, 1e-6, 1e-4];

fn lp_error(e: minilp::Error) -> Error {
    Error::Numerical(format!("LP solver: {e}"))
}

/// Run the solver, turning its internal panics (singular factorizations) into errors.
pub(crate) fn solve_lp(pb: &Problem) -> Result<Option<minilp::Solution>> {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| pb.solve())) {
        Ok(Ok(sol)) => Ok(Some(sol)),
        Ok(Err(minilp::Error::Infeasible)) => Ok(None),
        Ok(Err(e)) => Err(lp_error(e)),
        Err(_) => Err(Error::Numerical("LP solver failed to factorize its basis".into())),
    }
}

/// Solve `z ≥ 0, Σz = 1, |Σ_j b_ij z_j − f_i| ≤ s_i ≤ slack`, minimizing `Σ s_i`.
/// Returns `None` when infeasible.
fn piecewise_lp(basis: &PiecewiseConstantBasis, fq: &[f64], slack: f64) -> Result<Option<Vec<f64>>> {
    let mut last = None;
    for floor in COEFF_FLOORS {
        match piecewise_lp_floor(basis, fq, slack, floor) {
            Err(e @ Error::Numerical(_)) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one floor"))
}

fn piecewise_lp_floor(basis: &PiecewiseConstantBasis, fq: &[f64], slack: f64, floor: f64) -> Result<Option<Vec<f64>>> {
    let h = basis.pieces();
    let mut pb = Problem::new(OptimizationDirection::Minimize);
    let z: Vec<_> = (0..h).map(|_| pb.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let mut total = LinearExpr::empty();
    for &v in &z {
        total.add(v, 1.0);
    }
    pb.add_constraint(total, ComparisonOp::Eq, 1.0);
    for (i, &f) in fq.iter().enumerate() {
        let s = pb.add_var(1.0, (0.0, slack));
        let mut lo = LinearExpr::empty();
        let mut hi = LinearExpr::empty();
        for (j, &v) in z.iter().enumerate() {
            let b = basis.values[i][j];
            // far-tail coefficients only hurt the LU factorization
            if b > floor {
                lo.add(v, b);
                hi.add(v, b);
            }
        }
        lo.add(s, 1.0);
        hi.add(s, -1.0);
        pb.add_constraint(lo, ComparisonOp::Ge, f);
        pb.add_constraint(hi, ComparisonOp::Le, f);
    }
    Ok(solve_lp(&pb)?.map(|sol| z.iter().map(|&v| sol[v].max(0.0)).collect()))
}

/// Recover an arbitrary coin mixture from its (empirical) frequency vector.
///
/// The LP runs over the masses of the pieces of a shared piecewise-constant
/// Bernstein partition with accuracy `epsilon_prime`; each piece's mass is
/// placed at its midpoint. When the slack `epsilon_prime` is infeasible it is
/// doubled, at most [`MAX_DOUBLINGS`] times.
pub fn reconstruct_general(fq: &FrequencyVector, epsilon_prime: f64) -> Result<Reconstruction1d> {
    fq.require_frequencies()?;
    let basis = build_piecewise_bernstein(fq.k, epsilon_prime)?;
    reconstruct_with_basis(fq, &basis)
}

/// [`reconstruct_general`] with a prebuilt partition.
pub fn reconstruct_with_basis(fq: &FrequencyVector, basis: &PiecewiseConstantBasis) -> Result<Reconstruction1d> {
    reconstruct_with_slack(fq, basis, basis.epsilon_prime)
}

/// [`reconstruct_with_basis`] starting from an explicit slack bound. A zero
/// bound asks for exact feasibility; if that fails the schedule continues
/// from the partition accuracy.
pub fn reconstruct_with_slack(fq: &FrequencyVector, basis: &PiecewiseConstantBasis, slack: f64) -> Result<Reconstruction1d> {
    if basis.k != fq.k {
        return contract(format!("partition built for K = {}, frequencies have K = {}", basis.k, fq.k));
    }
    if !(slack >= 0.0) {
        return contract(format!("slack {slack} must be non-negative"));
    }
    let mut slack = slack;
    for doublings in 0..=MAX_DOUBLINGS {
        if let Some(z) = piecewise_lp(basis, &fq.values, slack)? {
            let residual = (0..=fq.k)
                .map(|i| {
                    let v: f64 = basis.values[i].iter().zip(&z).map(|(b, z)| b * z).sum();
                    (v - fq.values[i]).abs()
                })
                .fold(0.0, f64::max);
            let mass: f64 = z.iter().sum();
            let weights: Vec<f64> = z.iter().map(|x| x / mass).collect();
            let measure = DiscreteMeasure::on_line(&basis.midpoints(), &weights)?.prune(0.0);
            return Ok(Reconstruction1d { measure, slack, residual, doublings, heuristic: false });
        }
        slack = if slack == 0.0 { basis.epsilon_prime } else { slack * 2.0 };
    }
    Err(Error::Reconstruction {
        message: format!("piecewise LP infeasible after {MAX_DOUBLINGS} doublings"),
        residual: slack / 2.0,
    })
}

/// Grid `{0, τ, 2τ, …, 1}`; `1/τ` is rounded to the nearest integer.
pub fn moment_grid(tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return contract(format!("grid spacing {tau} must lie in (0, 1]"));
    }
    let cells = (1.0 / tau).round().max(1.0) as usize;
    Ok((0..=cells).map(|j| j as f64 / cells as f64).collect())
}

/// Min-max moment fit on a fixed support: minimize `r` subject to `x ≥ 0`,
/// `Σx = 1` and `|Σ_j x_j s_jⁱ − g_i| ≤ r` for `1 ≤ i ≤ K`.
fn moment_fit(support: &[f64], g: &[f64]) -> Result<Option<(Vec<f64>, f64)>> {
    let mut pb = Problem::new(OptimizationDirection::Minimize);
    let x: Vec<_> = support.iter().map(|_| pb.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let r = pb.add_var(1.0, (0.0, f64::INFINITY));
    let mut total = LinearExpr::empty();
    for &v in &x {
        total.add(v, 1.0);
    }
    pb.add_constraint(total, ComparisonOp::Eq, 1.0);
    for (i, &gi) in g.iter().enumerate().skip(1) {
        let mut lo = LinearExpr::empty();
        let mut hi = LinearExpr::empty();
        for (&v, &s) in x.iter().zip(support) {
            let p = s.powi(i as i32);
            lo.add(v, p);
            hi.add(v, p);
        }
        lo.add(r, 1.0);
        hi.add(r, -1.0);
        pb.add_constraint(lo, ComparisonOp::Ge, gi);
        pb.add_constraint(hi, ComparisonOp::Le, gi);
    }
    Ok(solve_lp(&pb)?.map(|sol| {
        let w: Vec<f64> = x.iter().map(|&v| sol[v].max(0.0)).collect();
        let s: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / s).collect();
        let res = moment_residual(support, &w, g);
        (w, res)
    }))
}

/// `max_{1≤i≤K} |Σ_j w_j s_jⁱ − g_i|`.
pub fn moment_residual(support: &[f64], weights: &[f64], g: &[f64]) -> f64 {
    (1..g.len())
        .map(|i| {
            let v: f64 = support.iter().zip(weights).map(|(s, w)| w * s.powi(i as i32)).sum();
            (v - g[i]).abs()
        })
        .fold(0.0, f64::max)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut p = k;
        while p > 0 && idx[p - 1] == n - k + p - 1 {
            p -= 1;
        }
        if p == 0 {
            return out;
        }
        idx[p - 1] += 1;
        for q in p..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Residuals closer than this count as ties.
const TIE_TOL: f64 = 1e-12;

/// Recover a mixture of at most `k` coins from `K = g.len() − 1` moments.
///
/// Candidate spikes lie on the grid of spacing `tau`. For small grids every
/// `k`-subset is tried and the smallest residual wins, ties going to the
/// lexicographically smallest support. Otherwise the LP runs over the whole
/// grid and spikes are merged greedily down to `k` (flagged `heuristic`).
/// Solutions with residual above `slack_constant · K · τ` are rejected.
pub fn reconstruct_kspike_1d(g: &FrequencyVector, k: usize, tau: f64, slack_constant: f64) -> Result<Reconstruction1d> {
    if g.kind != FqKind::Moments {
        return contract(format!("expected moments, got {:?}", g.kind));
    }
    if k == 0 {
        return contract("need at least one spike");
    }
    let grid = moment_grid(tau)?;
    let tau = 1.0 / (grid.len() - 1) as f64;
    let slack = slack_constant * g.k.max(1) as f64 * tau;
    let cells = grid.len() - 1;
    let (support, weights, residual, heuristic) = if cells <= ENUMERATION_MAX_CELLS && k <= ENUMERATION_MAX_SPIKES {
        let (s, w, r) = enumerate_supports(&grid, k.min(grid.len()), &g.values)?;
        (s, w, r, false)
    } else {
        let (s, w, r) = merge_fallback(&grid, k, &g.values)?;
        (s, w, r, true)
    };
    if residual > slack {
        return Err(Error::Reconstruction {
            message: format!("no support of size {k} fits the moments within slack {slack:.3e}"),
            residual,
        });
    }
    let measure = DiscreteMeasure::on_line(&support, &weights)?.prune(0.0);
    Ok(Reconstruction1d { measure, slack, residual, doublings: 0, heuristic })
}

type Fit = (Vec<f64>, Vec<f64>, f64);

fn enumerate_supports(grid: &[f64], k: usize, g: &[f64]) -> Result<Fit> {
    let candidates = combinations(grid.len(), k);
    let fits: Vec<Option<(usize, Vec<f64>, f64)>> = candidates
        .par_iter()
        .enumerate()
        .map(|(c, idx)| {
            let support: Vec<f64> = idx.iter().map(|&j| grid[j]).collect();
            moment_fit(&support, g).map(|o| o.map(|(w, r)| (c, w, r)))
        })
        .collect::<Result<_>>()?;
    // candidates are generated in lexicographic order, so the first minimum wins ties
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for f in fits.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| f.2 < b.2 - TIE_TOL) {
            best = Some(f);
        }
    }
    let (c, w, r) = best.ok_or_else(|| Error::Reconstruction {
        message: "every candidate support was infeasible".into(),
        residual: f64::INFINITY,
    })?;
    Ok((candidates[c].iter().map(|&j| grid[j]).collect(), w, r))
}

fn merge_fallback(grid: &[f64], k: usize, g: &[f64]) -> Result<Fit> {
    let (w, _) = moment_fit(grid, g)?.ok_or_else(|| Error::Reconstruction {
        message: "moment LP over the full grid is infeasible".into(),
        residual: f64::INFINITY,
    })?;
    let mut spikes: Vec<(f64, f64)> = grid
        .iter()
        .zip(&w)
        .filter(|(_, &x)| x > 1e-12)
        .map(|(&s, &x)| (s, x))
        .collect();
    let step = grid[1] - grid[0];
    while spikes.len() > k {
        // merge the closest adjacent pair into its weighted mean, snapped to the grid
        let j = (0..spikes.len() - 1)
            .min_by(|&a, &b| {
                let da = spikes[a + 1].0 - spikes[a].0;
                let db = spikes[b + 1].0 - spikes[b].0;
                da.total_cmp(&db)
            })
            .expect("at least two spikes");
        let (a, b) = (spikes[j], spikes[j + 1]);
        let m = a.1 + b.1;
        let pos = ((a.0 * a.1 + b.0 * b.1) / m / step).round() * step;
        spikes[j] = (pos.clamp(0.0, 1.0), m);
        spikes.remove(j + 1);
        spikes.dedup_by(|x, y| {
            if (x.0 - y.0).abs() < 1e-12 {
                y.1 += x.1;
                true
            } else {
                false
            }
        });
    }
    let support: Vec<f64> = spikes.iter().map(|s| s.0).collect();
    let start = match moment_fit(&support, g)? {
        Some((w, r)) => (support, w, r),
        None => {
            let w: Vec<f64> = spikes.iter().map(|s| s.1).collect();
            let r = moment_residual(&support, &w, g);
            (support, w, r)
        }
    };
    local_search(start, grid.len() - 1, g)
}

/// Coordinate descent over supports: move one spike at a time to the grid
/// point that lowers the residual most, until no single move helps.
fn local_search(mut best: Fit, cells: usize, g: &[f64]) -> Result<Fit> {
    const MAX_ROUNDS: usize = 100;
    let grid: Vec<f64> = (0..=cells).map(|c| c as f64 / cells as f64).collect();
    for _ in 0..MAX_ROUNDS {
        let mut improved = false;
        for j in 0..best.0.len() {
            let trials: Vec<Option<Fit>> = grid
                .par_iter()
                .map(|&pos| {
                    if best.0.iter().any(|&s| (s - pos).abs() < 1e-12) {
                        return Ok(None);
                    }
                    let mut support = best.0.clone();
                    support[j] = pos;
                    Ok(moment_fit(&support, g)?.map(|(w, r)| (support, w, r)))
                })
                .collect::<Result<_>>()?;
            for t in trials.into_iter().flatten() {
                if t.2 < best.2 - TIE_TOL {
                    best = t;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let mut order: Vec<usize> = (0..best.0.len()).collect();
    order.sort_by(|&a, &b| best.0[a].total_cmp(&best.0[b]));
    Ok((order.iter().map(|&i| best.0[i]).collect(), order.iter().map(|&i| best.1[i]).collect(), best.2))
}
