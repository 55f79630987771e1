use crate::error::{contract, Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Relative optimality gap at which the enclosing-ellipsoid iteration stops.
pub const MVEE_TOL: f64 = 1e-7;

const MAX_ITERATIONS: usize = 500_000;

/// Minimum-volume enclosing ellipsoid of a centrally symmetric point set
/// `{±q_i}`, stored as `{z : zᵀ X⁻¹ z ≤ m*}` with `X = Σ u_i q_i q_iᵀ`.
///
/// By polarity, `{y : m* yᵀ X y ≤ 1}` is inscribed in `{y : |q_iᵀ y| ≤ 1 ∀i}`
/// and the latter is contained in `{y : yᵀ X y ≤ 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredEllipsoid {
    pub x: DMatrix<f64>,
    /// `max_i q_iᵀ X⁻¹ q_i`; approaches the dimension at the optimum.
    pub m_star: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
}

impl CenteredEllipsoid {
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// `yᵀ X y`, the polar gauge squared up to the factor `m*`.
    pub fn polar_form(&self, y: &[f64]) -> f64 {
        let y = DVector::from_column_slice(y);
        (y.transpose() * &self.x * &y)[(0, 0)]
    }
}

fn leverages(points: &DMatrix<f64>, u: &[f64]) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let r = points.ncols();
    let mut x = DMatrix::zeros(r, r);
    for (i, row) in points.row_iter().enumerate() {
        if u[i] > 0.0 {
            x += row.transpose() * row * u[i];
        }
    }
    let chol = Cholesky::new(x.clone())?;
    let m = points
        .row_iter()
        .map(|row| {
            let z = chol.solve(&row.transpose());
            row.dot(&z.transpose())
        })
        .collect();
    Some((x, m))
}

/// Khachiyan coordinate ascent with Wolfe away steps on the rows of `points`.
pub fn mvee_centered(points: &DMatrix<f64>, tol: f64) -> Result<CenteredEllipsoid> {
    let (m, r) = points.shape();
    if r == 0 || m == 0 {
        return contract("enclosing ellipsoid needs a nonempty point set of positive dimension");
    }
    let active: Vec<bool> = points.row_iter().map(|row| row.norm() > 0.0).collect();
    let count = active.iter().filter(|&&a| a).count();
    let mut u: Vec<f64> = active.iter().map(|&a| if a { 1.0 / count as f64 } else { 0.0 }).collect();
    let gram = points.tr_mul(points);
    let eig = gram.symmetric_eigenvalues();
    if eig.min() <= 1e-12 * eig.max() {
        return Err(Error::Degenerate("points do not span the ambient space".into()));
    }
    let d = r as f64;
    for it in 0..MAX_ITERATIONS {
        let (x, lev) = leverages(points, &u)
            .ok_or_else(|| Error::Degenerate("points do not span the ambient space".into()))?;
        let (jmax, &mmax) = lev
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        if mmax <= d * (1.0 + tol) {
            return Ok(CenteredEllipsoid { x, m_star: mmax, weights: u, iterations: it });
        }
        let (jmin, &mmin) = lev
            .iter()
            .enumerate()
            .filter(|(i, _)| u[*i] > 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("some weight is positive");
        let (j, tau) = if d - mmin > mmax - d && u[jmin] < 1.0 {
            let floor = -u[jmin] / (1.0 - u[jmin]);
            let tau = if mmin <= 1.0 { floor } else { ((mmin - d) / (d * (mmin - 1.0))).max(floor) };
            (jmin, tau)
        } else {
            (jmax, (mmax - d) / (d * (mmax - 1.0)))
        };
        for w in u.iter_mut() {
            *w *= 1.0 - tau;
        }
        u[j] += tau;
        if u[j] < 1e-300 {
            u[j] = 0.0;
        }
    }
    Err(Error::Numerical(format!("enclosing ellipsoid did not converge in {MAX_ITERATIONS} iterations")))
}
