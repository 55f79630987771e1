//! Learner for mixtures with `k` spikes.
//!
//! In the reduced basis, a grid of directions `t` is chosen. For each
//! direction every letter `ℓ` of a snapshot is turned into a coin toss with
//! heads probability `φ(t_ℓ) = t_ℓ/(2‖Bt‖∞) + ½`, which yields coin snapshots of
//! the projected one-dimensional mixture. Each projection is learned with the
//! moment method, and a transportation LP over an `ε₂`-net of the ball in
//! `span(B)` finds a measure consistent with all projections at once.

use crate::coin1d::{empirical_fq, fq_to_moments, reconstruct_kspike_1d, solve_lp, Reconstruction1d, DEFAULT_SLACK_CONSTANT};
use crate::error::{contract, Error, Result, StageExt};
use crate::measures::{transport_distance_1d, DiscreteMeasure, SnapshotBatch};
use crate::rng::RngStream;
use crate::subspace::{apply_isotropy, final_adjust_report, invert_isotropy, reduce, AdjustReport, Basis, Reduction, ReductionParams};
use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default bound on the number of directions before subsampling.
pub const DEFAULT_DIRECTION_CAP: usize = 10_000;

/// Default bound on the number of net points.
pub const DEFAULT_NET_CAP: usize = 200_000;

/// Default multiplier `c` in the per-direction bound `c · ε₂`.
pub const DEFAULT_LP_SLACK_CONSTANT: f64 = 4.0;

/// Maximum number of times the per-direction bound is doubled.
pub const MAX_LP_DOUBLINGS: u32 = 6;

/// Slack allowed when re-auditing LP solutions with the transport oracle.
const AUDIT_TOL: f64 = 1e-6;

/// Directions in basis coordinates, `t_i ∈ (1/(hR))·{−R, …, R}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionGrid {
    pub h: usize,
    pub r: usize,
    pub directions: Vec<Vec<f64>>,
    /// Size of the full grid, `(2R+1)^h`.
    pub full_size: usize,
    /// True when `directions` is a seeded subsample of the full grid.
    pub subsampled: bool,
}

impl DirectionGrid {
    /// `B t` for every direction.
    pub fn lifted(&self, basis: &Basis) -> Result<Vec<Vec<f64>>> {
        if basis.h() != self.h {
            return contract(format!("grid has h = {}, basis {}", self.h, basis.h()));
        }
        Ok(self.directions.iter().map(|t| basis.embed(&DVector::from_column_slice(t))).collect())
    }
}

fn grid_point(index: usize, h: usize, r: usize) -> Vec<f64> {
    let side = 2 * r + 1;
    let scale = 1.0 / (h * r) as f64;
    let mut rem = index;
    (0..h)
        .map(|_| {
            let m = (rem % side) as f64 - r as f64;
            rem /= side;
            m * scale
        })
        .collect()
}

fn grid_size(h: usize, r: usize) -> Option<usize> {
    (2 * r + 1).checked_pow(u32::try_from(h).ok()?)
}

/// The full direction grid; more than `cap` directions is a resource error.
pub fn build_directions(h: usize, r: usize, cap: usize) -> Result<DirectionGrid> {
    if h == 0 || r == 0 {
        return contract("direction grid needs h >= 1 and R >= 1");
    }
    let full = grid_size(h, r).filter(|&s| s <= cap).ok_or_else(|| {
        Error::Resource(format!("(2R+1)^h directions exceed the cap {cap}; choose a smaller R"))
    })?;
    let directions = (0..full).map(|i| grid_point(i, h, r)).collect();
    Ok(DirectionGrid { h, r, directions, full_size: full, subsampled: false })
}

/// As [`build_directions`], but a grid larger than `cap` is replaced by a
/// seeded uniform subsample of `cap` of its points.
pub fn build_directions_sampled(h: usize, r: usize, cap: usize, rng: &mut RngStream) -> Result<DirectionGrid> {
    if h == 0 || r == 0 || cap == 0 {
        return contract("direction grid needs h, R and the cap to be positive");
    }
    match grid_size(h, r) {
        Some(full) if full <= cap => build_directions(h, r, cap),
        Some(full) => {
            let mut idx = sample(rng, full, cap).into_vec();
            idx.sort_unstable();
            let directions = idx.into_iter().map(|i| grid_point(i, h, r)).collect();
            Ok(DirectionGrid { h, r, directions, full_size: full, subsampled: true })
        }
        None => Err(Error::Resource("direction grid size overflows".into())),
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Convert one snapshot into a coin snapshot: letter `ℓ` shows heads (letter 0)
/// with probability `φ(t_ℓ)`.
pub fn project_snapshot_to_coin(letters: &[u32], t: &[f64], rng: &mut RngStream) -> Result<Vec<u32>> {
    let norm = sup_norm(t);
    if norm == 0.0 {
        return contract("zero direction has no coin reduction");
    }
    let mut out = Vec::with_capacity(letters.len());
    for &l in letters {
        let l = l as usize;
        if l >= t.len() {
            return contract(format!("letter {l} outside alphabet of size {}", t.len()));
        }
        let phi = (t[l] / (2.0 * norm) + 0.5).clamp(0.0, 1.0);
        out.push(if rng.random::<f64>() < phi { 0 } else { 1 });
    }
    out.sort_unstable();
    Ok(out)
}

/// Coin batch of the projection along the lifted direction `t`.
pub fn coin_batch(batch: &SnapshotBatch, t: &[f64], rng: &mut RngStream) -> Result<SnapshotBatch> {
    if batch.n() != t.len() {
        return contract(format!("batch alphabet {} but direction length {}", batch.n(), t.len()));
    }
    let mut out = SnapshotBatch::empty(2, batch.k(), batch.seed())?;
    for s in batch.iter_letters() {
        out.push_letters(&project_snapshot_to_coin(s, t, rng)?)?;
    }
    Ok(out)
}

/// Learned projection along one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionEstimate {
    /// Direction in basis coordinates.
    pub t: Vec<f64>,
    /// Estimate of the mixture of `⟨t, Bᵀp⟩`, supported in `[−‖Bt‖∞, ‖Bt‖∞]`.
    pub measure: DiscreteMeasure,
    pub reconstruction: Reconstruction1d,
}

/// Learn the projection of the mixture onto the lifted direction `t`.
pub fn learn_direction(
    batch: &SnapshotBatch,
    t: &[f64],
    k: usize,
    tau: f64,
    slack_constant: f64,
    rng: &mut RngStream,
) -> Result<(DiscreteMeasure, Reconstruction1d)> {
    let coins = coin_batch(batch, t, rng)?;
    let g = fq_to_moments(&empirical_fq(&coins, batch.k())?)?;
    let rec = reconstruct_kspike_1d(&g, k, tau, slack_constant)?;
    let width = 2.0 * sup_norm(t);
    let measure = rec.measure.normalized()?.push_forward(|x| vec![(x[0] - 0.5) * width])?;
    Ok((measure, rec))
}

/// Grid points covering a ball in basis coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetPoints {
    pub h: usize,
    pub radius: f64,
    pub epsilon_2: f64,
    pub spacing: f64,
    pub points: Vec<Vec<f64>>,
}

/// Axis-aligned grid of spacing `2ε₂/√h` restricted to the ball of radius
/// `radius + ε₂`; points outside `radius` are moved radially onto the sphere,
/// which keeps the covering radius at most `ε₂`.
pub fn build_net(h: usize, radius: f64, epsilon_2: f64, cap: usize) -> Result<NetPoints> {
    if h == 0 || !(radius > 0.0) || !(epsilon_2 > 0.0) {
        return contract("net needs h >= 1 and positive radius and epsilon_2");
    }
    let spacing = 2.0 * epsilon_2 / (h as f64).sqrt();
    let reach = radius + epsilon_2;
    let m = (reach / spacing).floor() as usize;
    let side = 2 * m + 1;
    let cube = side
        .checked_pow(h as u32)
        .filter(|&c| c <= cap.saturating_mul(64))
        .ok_or_else(|| Error::Resource(format!("net grid with {side}^{h} cells exceeds the cap {cap}")))?;
    let mut points = Vec::new();
    for idx in 0..cube {
        let mut rem = idx;
        let mut q: Vec<f64> = (0..h)
            .map(|_| {
                let c = (rem % side) as f64 - m as f64;
                rem /= side;
                c * spacing
            })
            .collect();
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > reach {
            continue;
        }
        if norm > radius {
            q.iter_mut().for_each(|x| *x *= radius / norm);
        }
        points.push(q);
        if points.len() > cap {
            return Err(Error::Resource(format!("net exceeds the cap of {cap} points")));
        }
    }
    Ok(NetPoints { h, radius, epsilon_2, spacing, points })
}

/// Solution of the joint transportation LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lp2Solution {
    /// Measure on net points, in basis coordinates.
    pub measure: DiscreteMeasure,
    /// Per-direction bound the accepted LP was solved with.
    pub slack: f64,
    pub doublings: u32,
    /// Per-direction transport cost recomputed with the 1-D oracle.
    pub audited_costs: Vec<f64>,
}

fn lp2_at(estimates: &[DirectionEstimate], net: &NetPoints, bound: f64) -> Result<Option<Vec<f64>>> {
    let mut pb = Problem::new(OptimizationDirection::Minimize);
    let y: Vec<_> = net.points.iter().map(|_| pb.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let mut total = LinearExpr::empty();
    for &v in &y {
        total.add(v, 1.0);
    }
    pb.add_constraint(total, ComparisonOp::Eq, 1.0);
    for est in estimates {
        let proj: Vec<f64> = net.points.iter().map(|q| q.iter().zip(&est.t).map(|(a, b)| a * b).sum()).collect();
        let mut cost = LinearExpr::empty();
        let mut col_sums: Vec<LinearExpr> = net.points.iter().map(|_| LinearExpr::empty()).collect();
        for (p, w) in est.measure.iter() {
            let mut row = LinearExpr::empty();
            for (qi, &pq) in proj.iter().enumerate() {
                let c = (p[0] - pq).abs();
                let x = pb.add_var(c, (0.0, f64::INFINITY));
                row.add(x, 1.0);
                col_sums[qi].add(x, 1.0);
                cost.add(x, c);
            }
            pb.add_constraint(row, ComparisonOp::Eq, w);
        }
        for (qi, mut col) in col_sums.into_iter().enumerate() {
            col.add(y[qi], -1.0);
            pb.add_constraint(col, ComparisonOp::Eq, 0.0);
        }
        pb.add_constraint(cost, ComparisonOp::Le, bound);
    }
    Ok(solve_lp(&pb)?.map(|sol| y.iter().map(|&v| sol[v].max(0.0)).collect()))
}

/// Find net masses `y` whose projection along every direction is within
/// `c · ε₂` of the learned projection in transportation distance, minimizing
/// the total cost. The bound is doubled on infeasibility.
pub fn lp2_reconstruct(
    estimates: &[DirectionEstimate],
    net: &NetPoints,
    epsilon_2: f64,
    slack_constant: f64,
) -> Result<Lp2Solution> {
    if net.points.is_empty() {
        return contract("empty net");
    }
    if estimates.iter().any(|e| e.t.len() != net.h || e.measure.dim() != 1) {
        return contract("directions and net disagree on dimension");
    }
    let mut bound = slack_constant * epsilon_2;
    for doublings in 0..=MAX_LP_DOUBLINGS {
        if let Some(y) = lp2_at(estimates, net, bound)? {
            let total: f64 = y.iter().sum();
            let weights: Vec<f64> = y.iter().map(|w| w / total).collect();
            let measure = DiscreteMeasure::new(net.points.clone(), weights)?.prune(1e-12).normalized()?;
            let audited_costs = estimates
                .iter()
                .map(|e| {
                    let proj = measure.push_forward(|q| vec![q.iter().zip(&e.t).map(|(a, b)| a * b).sum()])?;
                    transport_distance_1d(&proj, &e.measure)
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(bad) = audited_costs.iter().find(|&&c| c > bound + AUDIT_TOL) {
                return Err(Error::Numerical(format!(
                    "LP solution fails the transport audit: cost {bad:.3e} above bound {bound:.3e}"
                )));
            }
            return Ok(Lp2Solution { measure, slack: bound, doublings, audited_costs });
        }
        bound *= 2.0;
    }
    let residuals: Vec<String> = estimates
        .iter()
        .map(|e| {
            let best = net
                .points
                .iter()
                .map(|q| {
                    let d = DiscreteMeasure::on_line(&[q.iter().zip(&e.t).map(|(a, b)| a * b).sum()], &[1.0])?;
                    transport_distance_1d(&d, &e.measure)
                })
                .collect::<Result<Vec<f64>>>()
                .map(|v| v.into_iter().fold(f64::INFINITY, f64::min));
            best.map(|b| format!("{b:.3e}")).unwrap_or_else(|e| e.to_string())
        })
        .collect();
    Err(Error::Reconstruction {
        message: format!(
            "joint LP infeasible after {MAX_LP_DOUBLINGS} doublings; best single-point costs per direction: [{}]",
            residuals.join(", ")
        ),
        residual: bound / 2.0,
    })
}

/// Settings of the direction, coin and LP stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KspikeParams {
    /// Direction grid radius `R`.
    pub r: usize,
    /// Grid spacing of the one-dimensional moment method.
    pub tau: f64,
    pub epsilon_2: f64,
    pub coin_slack_constant: f64,
    pub lp_slack_constant: f64,
    pub direction_cap: usize,
    pub net_cap: usize,
}

impl Default for KspikeParams {
    fn default() -> Self {
        Self {
            r: 2,
            tau: 1.0 / 32.0,
            epsilon_2: 0.01,
            coin_slack_constant: DEFAULT_SLACK_CONSTANT,
            lp_slack_constant: DEFAULT_LP_SLACK_CONSTANT,
            direction_cap: DEFAULT_DIRECTION_CAP,
            net_cap: DEFAULT_NET_CAP,
        }
    }
}

/// Learn the projections along every nonzero direction of the grid, in
/// parallel. Direction `i` uses the stream `rng.split(i)`.
pub fn learn_directions(
    batch: &SnapshotBatch,
    basis: &Basis,
    grid: &DirectionGrid,
    k: usize,
    params: &KspikeParams,
    rng: &RngStream,
) -> Result<Vec<DirectionEstimate>> {
    let lifted = grid.lifted(basis)?;
    let jobs: Vec<usize> = (0..grid.directions.len()).filter(|&i| sup_norm(&lifted[i]) > 0.0).collect();
    jobs.par_iter()
        .map(|&i| {
            let mut r = rng.split(i as u64);
            let (measure, reconstruction) =
                learn_direction(batch, &lifted[i], k, params.tau, params.coin_slack_constant, &mut r)
                    .stage(&format!("direction {i}"))?;
            Ok(DirectionEstimate { t: grid.directions[i].clone(), measure, reconstruction })
        })
        .collect()
}

/// Output of the full k-spike pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KspikeOutput {
    pub measure: DiscreteMeasure,
    pub reduction: Reduction,
    pub dropped_k: usize,
    pub directions: usize,
    pub directions_subsampled: bool,
    pub heuristic_directions: usize,
    pub net_size: usize,
    pub lp: Lp2Solution,
    pub adjust: AdjustReport,
}

/// Radius of the ball that contains the projection of every simplex point:
/// the largest row norm of `B`, capped by `L`.
pub fn net_radius(basis: &Basis) -> f64 {
    let rows = basis.b.row_iter().map(|r| r.norm()).fold(0.0f64, f64::max);
    rows.min(basis.l)
}

/// Reduction, per-direction learning, joint LP, final adjustment and
/// inversion of the letter splitting.
pub fn learn_kspike(
    batch1: &SnapshotBatch,
    batch2: &SnapshotBatch,
    batch_k: &SnapshotBatch,
    reduction_params: &ReductionParams,
    params: &KspikeParams,
    known_a: Option<&DMatrix<f64>>,
    rng: &RngStream,
) -> Result<KspikeOutput> {
    let k = reduction_params.k;
    let reduction = reduce(batch1, batch2, reduction_params, known_a, &rng.split(1))?;
    let basis = &reduction.basis;
    let iso = apply_isotropy(batch_k, &reduction.map, &mut rng.split(2)).stage("isotropy")?;
    if iso.batch.is_empty() {
        return contract("every K-snapshot contained an eliminated letter").stage("directions");
    }
    let grid = build_directions_sampled(basis.h(), params.r, params.direction_cap, &mut rng.split(3)).stage("directions")?;
    let estimates = learn_directions(&iso.batch, basis, &grid, k, params, &rng.split(4))?;
    let net = build_net(basis.h(), net_radius(basis), params.epsilon_2, params.net_cap).stage("net")?;
    let lp = lp2_reconstruct(&estimates, &net, params.epsilon_2, params.lp_slack_constant).stage("lp2")?;
    let lifted = lp.measure.push_forward(|q| basis.embed(&DVector::from_column_slice(q))).stage("lp2")?;
    let (adjusted, adjust) = final_adjust_report(&lifted, basis, reduction_params.epsilon).stage("adjust")?;
    let measure = invert_isotropy(&adjusted, &reduction.map).stage("invert")?;
    Ok(KspikeOutput {
        measure,
        dropped_k: iso.dropped,
        directions: estimates.len(),
        directions_subsampled: grid.subsampled,
        heuristic_directions: estimates.iter().filter(|e| e.reconstruction.heuristic).count(),
        net_size: net.points.len(),
        lp,
        adjust,
        reduction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin1d::exact_fq;
    use crate::measures::{generate_batch, transport_distance, GroundMetric, MixtureSpec};

    #[test]
    fn one_dimensional_grid() {
        let g = build_directions(1, 2, 100).unwrap();
        let mut ts: Vec<f64> = g.directions.iter().map(|t| t[0]).collect();
        ts.sort_by(f64::total_cmp);
        assert_eq!(ts, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn two_dimensional_grid() {
        let g = build_directions(2, 1, 100).unwrap();
        assert_eq!(g.directions.len(), 9);
        let max = g.directions.iter().map(|t| (t[0] * t[0] + t[1] * t[1]).sqrt()).fold(0.0, f64::max);
        assert!((max - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(g.directions.iter().any(|t| t.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn grid_norms_at_most_one() {
        for h in 1..=4 {
            for r in 1..=4 {
                let g = build_directions(h, r, 100_000).unwrap();
                assert_eq!(g.directions.len(), (2 * r + 1).pow(h as u32));
                for t in &g.directions {
                    assert!(t.iter().map(|x| x * x).sum::<f64>() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn oversized_grid() {
        assert!(matches!(build_directions(5, 3, 1000), Err(Error::Resource(_))));
        let g = build_directions_sampled(5, 3, 1000, &mut RngStream::new(1)).unwrap();
        assert!(g.subsampled);
        assert_eq!(g.directions.len(), 1000);
        let again = build_directions_sampled(5, 3, 1000, &mut RngStream::new(1)).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn coin_endpoints() {
        let t = [0.5, -0.5, 0.1];
        let mut rng = RngStream::new(0);
        assert_eq!(project_snapshot_to_coin(&[0, 0, 0, 0], &t, &mut rng).unwrap(), vec![0; 4]);
        assert_eq!(project_snapshot_to_coin(&[1, 1, 1], &t, &mut rng).unwrap(), vec![1; 3]);
        assert!(project_snapshot_to_coin(&[0], &[0.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn coin_heads_rate() {
        let p = vec![0.2, 0.5, 0.3];
        let t = [0.3, -0.1, 0.05];
        let spec = MixtureSpec::kspike(vec![(p.clone(), 1.0)]).unwrap();
        let batch = generate_batch(&spec, 100_000, 1, &mut RngStream::new(3)).unwrap();
        let coins = coin_batch(&batch, &t, &mut RngStream::new(4)).unwrap();
        let heads = coins.iter_letters().filter(|s| s[0] == 0).count() as f64 / 1e5;
        let want: f64 = p.iter().zip(&t).map(|(pi, ti)| pi * (ti / 0.6 + 0.5)).sum();
        assert!((heads - want).abs() < 0.01);
    }

    #[test]
    fn coin_frequencies_match_pushforward() {
        let spikes = vec![(vec![0.6, 0.3, 0.1, 0.0], 0.4), (vec![0.1, 0.1, 0.3, 0.5], 0.6)];
        let t = [0.2, -0.4, 0.1, 0.3];
        let spec = MixtureSpec::kspike(spikes.clone()).unwrap();
        let k = 3;
        let batch = generate_batch(&spec, 100_000, k, &mut RngStream::new(5)).unwrap();
        let coins = coin_batch(&batch, &t, &mut RngStream::new(6)).unwrap();
        let emp = empirical_fq(&coins, k).unwrap();
        let heads: Vec<f64> =
            spikes.iter().map(|(p, _)| p.iter().zip(&t).map(|(a, b)| a * (b / 0.8 + 0.5)).sum()).collect();
        let truth = DiscreteMeasure::on_line(&heads, &[0.4, 0.6]).unwrap();
        let exact = exact_fq(&truth, k).unwrap();
        for (a, b) in emp.values.iter().zip(&exact.values) {
            assert!((a - b).abs() <= 0.01);
        }
    }

    #[test]
    fn direction_of_point_mass() {
        let p = vec![0.1, 0.4, 0.2, 0.3];
        let t = [0.3, -0.2, 0.5, 0.0];
        let spec = MixtureSpec::kspike(vec![(p.clone(), 1.0)]).unwrap();
        let batch = generate_batch(&spec, 200_000, 3, &mut RngStream::new(8)).unwrap();
        let tau = 1.0 / 32.0;
        let (m, _) = learn_direction(&batch, &t, 2, tau, DEFAULT_SLACK_CONSTANT, &mut RngStream::new(9)).unwrap();
        let v: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
        let target = DiscreteMeasure::on_line(&[v], &[1.0]).unwrap();
        let err = transport_distance_1d(&m, &target).unwrap();
        assert!(err <= 2.0 * tau * 2.0 * sup_norm(&t), "{err}");
    }

    #[test]
    fn constant_direction_is_degenerate() {
        let spec = MixtureSpec::kspike(vec![(vec![0.7, 0.2, 0.1], 0.5), (vec![0.1, 0.1, 0.8], 0.5)]).unwrap();
        let batch = generate_batch(&spec, 20_000, 3, &mut RngStream::new(1)).unwrap();
        let t = [0.25, 0.25, 0.25];
        let tau = 1.0 / 32.0;
        let (m, _) = learn_direction(&batch, &t, 2, tau, DEFAULT_SLACK_CONSTANT, &mut RngStream::new(2)).unwrap();
        let target = DiscreteMeasure::on_line(&[0.25], &[1.0]).unwrap();
        assert!(transport_distance_1d(&m, &target).unwrap() <= tau * 2.0 * 0.25);
    }

    #[test]
    fn mirrored_directions() {
        let spec = MixtureSpec::kspike(vec![(vec![0.7, 0.2, 0.1], 0.5), (vec![0.1, 0.1, 0.8], 0.5)]).unwrap();
        let batch = generate_batch(&spec, 200_000, 3, &mut RngStream::new(4)).unwrap();
        let t = [0.4, -0.1, -0.3];
        let neg: Vec<f64> = t.iter().map(|x| -x).collect();
        let tau = 1.0 / 32.0;
        let (a, _) = learn_direction(&batch, &t, 2, tau, DEFAULT_SLACK_CONSTANT, &mut RngStream::new(5)).unwrap();
        let (b, _) = learn_direction(&batch, &neg, 2, tau, DEFAULT_SLACK_CONSTANT, &mut RngStream::new(6)).unwrap();
        let mirrored = b.push_forward(|x| vec![-x[0]]).unwrap();
        assert!(transport_distance_1d(&a, &mirrored).unwrap() <= 2.0 * tau * 2.0 * 0.4);
    }

    #[test]
    fn one_dimensional_net() {
        let net = build_net(1, 0.1, 0.05, 100).unwrap();
        let mut xs: Vec<f64> = net.points.iter().map(|q| q[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs.len(), 3);
        assert!((xs[0] + 0.1).abs() < 1e-15 && xs[1] == 0.0 && (xs[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn net_covers_ball() {
        let mut rng = RngStream::new(3);
        for (h, radius, eps) in [(2usize, 1.0, 0.1), (3, 0.5, 0.1)] {
            let net = build_net(h, radius, eps, 200_000).unwrap();
            assert!(net.points.iter().all(|q| q.iter().map(|x| x * x).sum::<f64>().sqrt() <= radius + 1e-12));
            for _ in 0..1000 {
                let g: Vec<f64> = (0..h).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                let u: f64 = rng.random::<f64>().powf(1.0 / h as f64);
                let x: Vec<f64> = g.iter().map(|v| v / norm * radius * u).collect();
                let best = net
                    .points
                    .iter()
                    .map(|q| q.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min);
                assert!(best <= eps * 1.01);
            }
        }
        assert!(matches!(build_net(4, 10.0, 0.01, 1000), Err(Error::Resource(_))));
    }

    fn exact_estimate(truth: &DiscreteMeasure, t: &[f64]) -> DirectionEstimate {
        let measure = truth.push_forward(|q| vec![q.iter().zip(t).map(|(a, b)| a * b).sum()]).unwrap();
        let reconstruction = Reconstruction1d { measure: measure.clone(), slack: 0.0, residual: 0.0, doublings: 0, heuristic: false };
        DirectionEstimate { t: t.to_vec(), measure, reconstruction }
    }

    #[test]
    fn single_direction_point_mass() {
        let net = build_net(2, 0.2, 0.05, 1000).unwrap();
        let est = exact_estimate(&DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap(), &[1.0, 0.0]);
        let sol = lp2_reconstruct(&[est], &net, 0.05, 0.0).unwrap();
        for (q, _) in sol.measure.iter() {
            assert!(q[0].abs() < 1e-9);
        }
    }

    #[test]
    fn truth_on_net_is_feasible_without_slack() {
        let net = build_net(2, 0.3, 0.05, 1000).unwrap();
        let truth = DiscreteMeasure::new(vec![net.points[3].clone(), net.points[40].clone()], vec![0.3, 0.7]).unwrap();
        let grid = build_directions(2, 2, 100).unwrap();
        let ests: Vec<_> = grid
            .directions
            .iter()
            .filter(|t| t.iter().any(|&x| x != 0.0))
            .map(|t| exact_estimate(&truth, t))
            .collect();
        let sol = lp2_reconstruct(&ests, &net, 0.05, 0.0).unwrap();
        assert_eq!(sol.doublings, 0);
        assert!(sol.audited_costs.iter().all(|&c| c <= 1e-6));
    }

    #[test]
    fn two_spikes_from_exact_projections() {
        let eps2 = 0.02;
        let truth = DiscreteMeasure::new(vec![vec![0.113, -0.05], vec![-0.071, 0.094]], vec![0.5, 0.5]).unwrap();
        let net = build_net(2, 0.2, eps2, 10_000).unwrap();
        let grid = build_directions(2, 2, 100).unwrap();
        let ests: Vec<_> = grid
            .directions
            .iter()
            .filter(|t| t.iter().any(|&x| x != 0.0))
            .map(|t| exact_estimate(&truth, t))
            .collect();
        let sol = lp2_reconstruct(&ests, &net, eps2, DEFAULT_LP_SLACK_CONSTANT).unwrap();
        let err = transport_distance(&sol.measure, &truth, GroundMetric::L2).unwrap();
        assert!(err <= 5.0 * eps2 * 2f64.sqrt(), "{err}");
    }

    #[test]
    fn single_spike_end_to_end() {
        let p = vec![0.2, 0.15, 0.05, 0.1, 0.2, 0.1, 0.1, 0.1];
        let spec = MixtureSpec::kspike(vec![(p.clone(), 1.0)]).unwrap();
        let mut g = RngStream::new(11);
        let b1 = generate_batch(&spec, 100_000, 1, &mut g).unwrap();
        let b2 = generate_batch(&spec, 200_000, 2, &mut g).unwrap();
        let bk = generate_batch(&spec, 100_000, 1, &mut g).unwrap();
        let eps = 0.5;
        let rp = ReductionParams { k: 1, epsilon: eps, sigma: 0.1, c: 3.0 / eps, poissonize: false };
        let out = learn_kspike(&b1, &b2, &bk, &rp, &KspikeParams::default(), None, &RngStream::new(12)).unwrap();
        assert!((out.measure.total_mass() - 1.0).abs() < 1e-12);
        for q in out.measure.points() {
            assert!(q.iter().all(|&x| x >= -1e-8));
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
        let truth = spec.simplex_measure().unwrap();
        let err = transport_distance(&out.measure, &truth, GroundMetric::L1).unwrap();
        assert!(err <= 0.2, "{err}");
    }
}
