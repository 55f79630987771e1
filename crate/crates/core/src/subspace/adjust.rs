use super::basis::Basis;
use crate::error::{contract, Error, Result};
use crate::measures::{l1_distance_to_simplex, l1_project_to_simplex, DiscreteMeasure};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const MAX_CUTS: usize = 200;
const MAX_QP_STEPS: usize = 10_000;
const FEAS_TOL: f64 = 1e-10;
const SPAN_TOL: f64 = 1e-8;

/// Outcome of projecting one point onto `Q`.
#[derive(Debug, Clone, PartialEq)]
enum QpOutcome {
    Solved(DVector<f64>),
    Infeasible,
}

/// `min ½‖x − x0‖²` subject to `a_jᵀ x ≥ β_j`, by the dual active-set method
/// with identity Hessian.
fn nearest_feasible(x0: &DVector<f64>, a: &[DVector<f64>], beta: &[f64]) -> Result<QpOutcome> {
    let mut x = x0.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let slack = |x: &DVector<f64>, j: usize| a[j].dot(x) - beta[j];
    for _ in 0..MAX_QP_STEPS {
        let Some(p) = (0..a.len())
            .filter(|&j| slack(&x, j) < -FEAS_TOL * (1.0 + beta[j].abs()))
            .min_by(|&i, &j| slack(&x, i).total_cmp(&slack(&x, j)))
        else {
            return Ok(QpOutcome::Solved(x));
        };
        let mut up = 0.0;
        loop {
            let (z, r) = if active.is_empty() {
                (a[p].clone(), Vec::new())
            } else {
                let nmat = DMatrix::from_columns(&active.iter().map(|&j| a[j].clone()).collect::<Vec<_>>());
                let gram = nmat.tr_mul(&nmat);
                let rhs = nmat.tr_mul(&a[p]);
                let w = gram
                    .clone()
                    .cholesky()
                    .map(|c| c.solve(&rhs))
                    .or_else(|| gram.pseudo_inverse(1e-14).ok().map(|g| g * &rhs))
                    .ok_or_else(|| Error::Numerical("active constraint system is singular".into()))?;
                (&a[p] - &nmat * &w, w.as_slice().to_vec())
            };
            let (mut t1, mut drop) = (f64::INFINITY, usize::MAX);
            for (idx, &rj) in r.iter().enumerate() {
                if rj > 0.0 && u[idx] / rj < t1 {
                    t1 = u[idx] / rj;
                    drop = idx;
                }
            }
            let za = z.dot(&a[p]);
            let t2 = if z.norm() <= 1e-14 * (1.0 + a[p].norm()) || za <= 0.0 {
                f64::INFINITY
            } else {
                -slack(&x, p) / za
            };
            if t1.is_infinite() && t2.is_infinite() {
                return Ok(QpOutcome::Infeasible);
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                x += &z * t;
            }
            for (idx, rj) in r.iter().enumerate() {
                u[idx] -= t * rj;
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            active.remove(drop);
            u.remove(drop);
        }
    }
    Err(Error::Numerical(format!("projection did not converge in {MAX_QP_STEPS} steps")))
}

/// Diagnostics from [`final_adjust_report`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjustReport {
    /// Points for which `Q` was empty and only the simplex step ran.
    pub fallbacks: usize,
    pub max_q_move: f64,
    pub max_simplex_move: f64,
    pub cuts: usize,
}

/// Euclidean projection of `y0 ∈ span(B)` onto
/// `Q = {y ∈ span(B) : dist₁(y, Δₙ) ≤ ε}`.
///
/// Returns `None` when `Q` is empty. Since `dist₁(y, Δₙ) = max(‖y‖₁ − 1, 1 − Σy)`,
/// the constraint is handled by the half-space `Σy ≥ 1 − ε` and cutting planes
/// `sign(y)ᵀy ≤ 1 + ε` added at infeasible iterates.
pub fn project_to_q(y0: &[f64], basis: &Basis, epsilon: f64) -> Result<Option<Vec<f64>>> {
    Ok(project_counting(y0, basis, epsilon)?.map(|(y, _)| y))
}

fn project_counting(y0: &[f64], basis: &Basis, epsilon: f64) -> Result<Option<(Vec<f64>, usize)>> {
    if y0.len() != basis.n {
        return contract(format!("point has dimension {}, basis {}", y0.len(), basis.n));
    }
    if l1_distance_to_simplex(y0) <= epsilon {
        return Ok(Some((y0.to_vec(), 0)));
    }
    let c0 = basis.coords(y0);
    let ones = DVector::from_element(basis.n, 1.0);
    let mut a = vec![basis.b.tr_mul(&ones)];
    let mut beta = vec![1.0 - epsilon];
    for cuts in 0..=MAX_CUTS {
        let c = match nearest_feasible(&c0, &a, &beta)? {
            QpOutcome::Solved(c) => c,
            QpOutcome::Infeasible => return Ok(None),
        };
        let y = basis.embed(&c);
        let l1: f64 = y.iter().map(|v| v.abs()).sum();
        if l1 - 1.0 <= epsilon + FEAS_TOL {
            return Ok(Some((y, cuts)));
        }
        let sign = DVector::from_iterator(basis.n, y.iter().map(|v| v.signum() * (*v != 0.0) as u8 as f64));
        a.push(-basis.b.tr_mul(&sign));
        beta.push(-(1.0 + epsilon));
    }
    Err(Error::Numerical(format!("projection onto Q needed more than {MAX_CUTS} cuts")))
}

/// Move every atom of a measure on `span(B)` onto `Δₙ`: Euclidean projection
/// onto `Q`, then the nearest point of the simplex in `L₁`. Weights are kept.
pub fn final_adjust(measure: &DiscreteMeasure, basis: &Basis, epsilon: f64) -> Result<DiscreteMeasure> {
    Ok(final_adjust_report(measure, basis, epsilon)?.0)
}

pub fn final_adjust_report(
    measure: &DiscreteMeasure,
    basis: &Basis,
    epsilon: f64,
) -> Result<(DiscreteMeasure, AdjustReport)> {
    if measure.dim() != basis.n {
        return contract(format!("measure lives in dimension {}, basis {}", measure.dim(), basis.n));
    }
    let mut rep = AdjustReport::default();
    let mut points = Vec::with_capacity(measure.len());
    for p in measure.points() {
        let proj = basis.project(p);
        let off = p.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if off > SPAN_TOL * p.iter().map(|v| v.abs()).sum::<f64>().max(1.0) {
            return contract(format!("support point is {off:.3e} away from span(B)"));
        }
        let q = match project_counting(p, basis, epsilon)? {
            Some((q, cuts)) => {
                rep.cuts += cuts;
                q
            }
            None => {
                rep.fallbacks += 1;
                p.clone()
            }
        };
        rep.max_q_move = rep.max_q_move.max(dist2(p, &q));
        let s = l1_project_to_simplex(&q);
        rep.max_simplex_move = rep.max_simplex_move.max(dist2(&q, &s));
        points.push(s);
    }
    Ok((DiscreteMeasure::new(points, measure.weights().to_vec())?, rep))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
