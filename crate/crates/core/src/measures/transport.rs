use super::{DiscreteMeasure, MASS_TOL};
use crate::error::{contract, validation, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Largest cost matrix (rows × columns of positive-mass atoms) the exact solver accepts.
pub const MAX_TRANSPORT_CELLS: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GroundMetric {
    #[default]
    L1,
    L2,
}

impl GroundMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            GroundMetric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            GroundMetric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }
}

/// An optimal coupling together with optimal dual potentials.
///
/// Indices refer to the support order of the input measures. Potentials satisfy
/// `row[i] + col[j] <= d(x_i, y_j)` with equality on every cell carrying flow.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    pub flows: Vec<(usize, usize, f64)>,
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
}

impl TransportPlan {
    /// `Σ a_i u_i + Σ b_j v_j` for the given marginals.
    pub fn dual_value(&self, p: &DiscreteMeasure, q: &DiscreteMeasure) -> f64 {
        let a: f64 = p.weights().iter().zip(&self.row_potentials).map(|(w, u)| w * u).sum();
        let b: f64 = q.weights().iter().zip(&self.col_potentials).map(|(w, v)| w * v).sum();
        a + b
    }
}

fn check_compatible(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<()> {
    if !p.is_empty() && !q.is_empty() && p.dim() != q.dim() {
        return contract(format!("dimension mismatch: {} vs {}", p.dim(), q.dim()));
    }
    let (mp, mq) = (p.total_mass(), q.total_mass());
    if (mp - mq).abs() > MASS_TOL * mp.max(mq).max(1.0) {
        return contract(format!("unequal total mass: {mp} vs {mq}"));
    }
    Ok(())
}

/// Exact transportation distance between two measures of equal mass.
pub fn transport_distance(p: &DiscreteMeasure, q: &DiscreteMeasure, metric: GroundMetric) -> Result<f64> {
    Ok(transport_plan(p, q, metric)?.cost)
}

/// Solve the transportation problem with the network simplex method.
pub fn transport_plan(p: &DiscreteMeasure, q: &DiscreteMeasure, metric: GroundMetric) -> Result<TransportPlan> {
    check_compatible(p, q)?;
    let rows: Vec<usize> = (0..p.len()).filter(|&i| p.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q.len()).filter(|&j| q.weights()[j] > 0.0).collect();
    let mut plan = TransportPlan {
        cost: 0.0,
        flows: Vec::new(),
        row_potentials: vec![0.0; p.len()],
        col_potentials: vec![0.0; q.len()],
    };
    if rows.is_empty() || cols.is_empty() {
        return Ok(plan);
    }
    if rows.len().saturating_mul(cols.len()) > MAX_TRANSPORT_CELLS {
        return Err(Error::Resource(format!(
            "transport problem with {}x{} atoms exceeds {MAX_TRANSPORT_CELLS} cells",
            rows.len(),
            cols.len()
        )));
    }
    let supply: Vec<f64> = rows.iter().map(|&i| p.weights()[i]).collect();
    let scale = supply.iter().sum::<f64>() / cols.iter().map(|&j| q.weights()[j]).sum::<f64>();
    let demand: Vec<f64> = cols.iter().map(|&j| q.weights()[j] * scale).collect();
    let cost: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
        .map(|(i, j)| metric.distance(&p.points()[i], &q.points()[j]))
        .collect();

    let sol = NetworkSimplex::new(&supply, &demand, cost).solve()?;

    let (m, n) = (rows.len(), cols.len());
    for e in &sol.edges {
        if e.flow > 0.0 {
            plan.flows.push((rows[e.row], cols[e.col], e.flow));
        }
    }
    plan.cost = sol
        .edges
        .iter()
        .map(|e| e.flow * sol.cost[e.row * n + e.col])
        .sum::<f64>()
        .max(0.0);
    let u = &sol.pot[..m];
    let v = &sol.pot[m..];
    for (r, &i) in rows.iter().enumerate() {
        plan.row_potentials[i] = u[r];
    }
    for (c, &j) in cols.iter().enumerate() {
        plan.col_potentials[j] = v[c];
    }
    // zero-mass atoms get the largest potential that keeps the dual feasible
    for i in (0..p.len()).filter(|&i| p.weights()[i] <= 0.0) {
        plan.row_potentials[i] = cols
            .iter()
            .zip(v)
            .map(|(&j, &vj)| metric.distance(&p.points()[i], &q.points()[j]) - vj)
            .fold(f64::INFINITY, f64::min);
    }
    for j in (0..q.len()).filter(|&j| q.weights()[j] <= 0.0) {
        plan.col_potentials[j] = (0..p.len())
            .map(|i| metric.distance(&p.points()[i], &q.points()[j]) - plan.row_potentials[i])
            .fold(f64::INFINITY, f64::min);
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    row: usize,
    col: usize,
    flow: f64,
}

/// Transportation simplex on a spanning-tree basis of the bipartite graph.
/// Nodes `0..m` are sources, `m..m+n` are sinks.
struct NetworkSimplex {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    pot: Vec<f64>,
    parent_edge: Vec<usize>,
    depth: Vec<usize>,
}

const NO_EDGE: usize = usize::MAX;

impl NetworkSimplex {
    fn new(supply: &[f64], demand: &[f64], cost: Vec<f64>) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let mut edges = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        // northwest corner: exactly m + n - 1 cells forming a staircase tree
        loop {
            let x = a[i].min(b[j]);
            a[i] -= x;
            b[j] -= x;
            edges.push(Edge { row: i, col: j, flow: x });
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && a[i] <= b[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut adj = vec![Vec::new(); m + n];
        for (k, e) in edges.iter().enumerate() {
            adj[e.row].push(k);
            adj[m + e.col].push(k);
        }
        Self {
            m,
            n,
            cost,
            edges,
            adj,
            pot: vec![0.0; m + n],
            parent_edge: vec![NO_EDGE; m + n],
            depth: vec![0; m + n],
        }
    }

    fn other(&self, k: usize, node: usize) -> usize {
        let e = self.edges[k];
        if node < self.m { self.m + e.col } else { e.row }
    }

    /// Recompute potentials, parents and depths by BFS from node 0.
    fn refresh_tree(&mut self) {
        let mut seen = vec![false; self.m + self.n];
        let mut queue = VecDeque::with_capacity(self.m + self.n);
        self.pot[0] = 0.0;
        self.parent_edge[0] = NO_EDGE;
        self.depth[0] = 0;
        seen[0] = true;
        queue.push_back(0);
        while let Some(x) = queue.pop_front() {
            for idx in 0..self.adj[x].len() {
                let k = self.adj[x][idx];
                let y = self.other(k, x);
                if seen[y] {
                    continue;
                }
                seen[y] = true;
                let e = self.edges[k];
                let c = self.cost[e.row * self.n + e.col];
                self.pot[y] = c - self.pot[x];
                self.parent_edge[y] = k;
                self.depth[y] = self.depth[x] + 1;
                queue.push_back(y);
            }
        }
    }

    fn parent(&self, x: usize) -> usize {
        self.other(self.parent_edge[x], x)
    }

    /// Most negative reduced cost within the next pricing block, scanning
    /// cyclically from `start`.
    fn price(&self, start: &mut usize, block: usize, tol: f64) -> Option<(usize, usize)> {
        let total = self.m * self.n;
        let mut scanned = 0;
        while scanned < total {
            let mut best = -tol;
            let mut arg = None;
            let end = (scanned + block).min(total);
            while scanned < end {
                let cell = (*start + scanned) % total;
                let (i, j) = (cell / self.n, cell % self.n);
                let r = self.cost[cell] - self.pot[i] - self.pot[self.m + j];
                if r < best {
                    best = r;
                    arg = Some((i, j));
                }
                scanned += 1;
            }
            if let Some(a) = arg {
                *start = (*start + scanned) % total;
                return Some(a);
            }
        }
        None
    }

    fn pivot(&mut self, i: usize, j: usize) {
        // Tree paths from sink j and source i to their common ancestor. On both
        // paths, edges at even positions lose flow.
        let (mut x, mut y) = (self.m + j, i);
        let mut from_sink = Vec::new();
        let mut from_source = Vec::new();
        while self.depth[x] > self.depth[y] {
            from_sink.push(self.parent_edge[x]);
            x = self.parent(x);
        }
        while self.depth[y] > self.depth[x] {
            from_source.push(self.parent_edge[y]);
            y = self.parent(y);
        }
        while x != y {
            from_sink.push(self.parent_edge[x]);
            x = self.parent(x);
            from_source.push(self.parent_edge[y]);
            y = self.parent(y);
        }
        let minus = from_sink.iter().step_by(2).chain(from_source.iter().step_by(2));
        let mut leave = NO_EDGE;
        let mut theta = f64::INFINITY;
        for &k in minus {
            if self.edges[k].flow < theta {
                theta = self.edges[k].flow;
                leave = k;
            }
        }
        for path in [&from_sink, &from_source] {
            for (pos, &k) in path.iter().enumerate() {
                let f = &mut self.edges[k].flow;
                if pos % 2 == 0 {
                    *f = (*f - theta).max(0.0);
                } else {
                    *f += theta;
                }
            }
        }
        let old = self.edges[leave];
        self.adj[old.row].retain(|&k| k != leave);
        self.adj[self.m + old.col].retain(|&k| k != leave);
        self.edges[leave] = Edge { row: i, col: j, flow: theta };
        self.adj[i].push(leave);
        self.adj[self.m + j].push(leave);
    }

    fn solve(mut self) -> Result<Self> {
        let cmax = self.cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let tol = 1e-12 * (1.0 + cmax);
        let total = self.m * self.n;
        let block = ((total as f64).sqrt() as usize).max(64).min(total);
        let cap = 1_000_000usize.max(50 * (self.m + self.n));
        let mut start = 0;
        self.refresh_tree();
        for _ in 0..cap {
            match self.price(&mut start, block, tol) {
                None => return Ok(self),
                Some((i, j)) => {
                    self.pivot(i, j);
                    self.refresh_tree();
                }
            }
        }
        Err(Error::Numerical(format!(
            "network simplex did not converge within {cap} pivots on a {}x{} problem",
            self.m, self.n
        )))
    }
}

/// Exact one-dimensional transportation distance `∫ |F_P − F_Q|`.
pub fn transport_distance_1d(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    check_compatible(p, q)?;
    let xs = p.line_coords()?;
    let ys = q.line_coords()?;
    let mut events: Vec<(f64, f64)> = xs
        .iter()
        .zip(p.weights())
        .map(|(&x, &w)| (x, w))
        .chain(ys.iter().zip(q.weights()).map(|(&y, &w)| (y, -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for w in events.windows(2) {
        diff += w[0].1;
        total += diff.abs() * (w[1].0 - w[0].0);
    }
    Ok(total)
}

/// A continuous piecewise-linear function on the line, constant outside its
/// breakpoint range.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear1d {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear1d {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return validation("piecewise-linear function needs matching nonempty knots");
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return validation("breakpoints must be strictly increasing");
        }
        Ok(Self { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.xs.partition_point(|&b| b <= x);
        if k == 0 {
            return self.ys[0];
        }
        if k == self.xs.len() {
            return self.ys[k - 1];
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let t = (x - x0) / (x1 - x0);
        self.ys[k - 1] + t * (self.ys[k] - self.ys[k - 1])
    }

    /// Largest absolute slope.
    pub fn lipschitz_constant(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }
}

/// Evaluate `∫ f d(P − Q)` after checking that `f` is 1-Lipschitz on every
/// pair of support points.
pub fn dual_certificate_check<F>(p: &DiscreteMeasure, q: &DiscreteMeasure, f: F, metric: GroundMetric) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_compatible(p, q)?;
    let pts: Vec<&[f64]> = p.points().iter().chain(q.points()).map(Vec::as_slice).collect();
    let vals: Vec<f64> = pts.iter().map(|x| f(x)).collect();
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let d = metric.distance(pts[a], pts[b]);
            let gap = (vals[a] - vals[b]).abs();
            if gap > d + 1e-12 * (1.0 + d) {
                return contract(format!(
                    "witness is not 1-Lipschitz: |f(x) - f(y)| = {gap} > d(x, y) = {d}"
                ));
            }
        }
    }
    let np = p.len();
    let ip: f64 = vals[..np].iter().zip(p.weights()).map(|(v, w)| v * w).sum();
    let iq: f64 = vals[np..].iter().zip(q.weights()).map(|(v, w)| v * w).sum();
    Ok(ip - iq)
}
