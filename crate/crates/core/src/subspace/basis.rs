use super::ellipsoid::{mvee_centered, CenteredEllipsoid, MVEE_TOL};
use super::matrix::sorted_eigen;
use crate::error::{contract, Error, Result};
use crate::rng::RngStream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const PROPERTY_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-12;

/// One principal axis of the inscribed ellipsoid, as a unit vector in `ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisAxis {
    pub direction: Vec<f64>,
    /// Semi-axis length of the inscribed ellipsoid `E`.
    pub length: f64,
    /// Semi-axis length after scaling `E` to contain the polytope.
    pub scaled_length: f64,
}

/// Orthonormal basis of the reduced subspace together with its scale bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    pub n: usize,
    pub k: usize,
    pub c: f64,
    pub epsilon: f64,
    /// `n × h`, orthonormal columns.
    pub b: DMatrix<f64>,
    pub l: f64,
    /// Factor applied to `E`; at least `√k` and `√m*`.
    pub scale: f64,
    pub ellipsoid_axes: Vec<BasisAxis>,
    pub dropped: Vec<BasisAxis>,
    pub eigenvalues: Vec<f64>,
    /// Orthonormal basis of the span the polytope lives in.
    pub span: DMatrix<f64>,
    pub ellipsoid: Option<CenteredEllipsoid>,
}

impl Basis {
    /// A basis with explicit columns and bound, bypassing the ellipsoid.
    pub fn from_columns(b: DMatrix<f64>, l: f64, epsilon: f64) -> Result<Self> {
        let h = b.ncols();
        let gram = b.transpose() * &b;
        if (gram - DMatrix::identity(h, h)).abs().max() > 1e-9 {
            return contract("basis columns are not orthonormal");
        }
        Ok(Self {
            n: b.nrows(),
            k: h,
            c: f64::NAN,
            epsilon,
            span: b.clone(),
            b,
            l,
            scale: 1.0,
            ellipsoid_axes: Vec::new(),
            dropped: Vec::new(),
            eigenvalues: Vec::new(),
            ellipsoid: None,
        })
    }

    pub fn h(&self) -> usize {
        self.b.ncols()
    }

    /// `Bᵀ x`.
    pub fn coords(&self, x: &[f64]) -> DVector<f64> {
        self.b.tr_mul(&DVector::from_column_slice(x))
    }

    /// `B c`.
    pub fn embed(&self, c: &DVector<f64>) -> Vec<f64> {
        (&self.b * c).as_slice().to_vec()
    }

    /// Orthogonal projection onto `span(B)`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.embed(&self.coords(x))
    }
}

/// Orthonormal basis of the range of a PSD matrix, with its eigenvalues.
fn range_of(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (values, vectors) = sorted_eigen(a);
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let r = values.iter().filter(|&&l| l > RANK_TOL * top.max(f64::MIN_POSITIVE)).count();
    (vectors.columns(0, r).into_owned(), values)
}

/// Basis from the inscribed ellipsoid of `P = [−C/n, C/n]ⁿ ∩ span(A′)`.
pub fn build_basis(a_prime: &DMatrix<f64>, c: f64, epsilon: f64, n: usize, k: usize) -> Result<Basis> {
    if a_prime.nrows() != n || a_prime.ncols() != n {
        return contract(format!("matrix is {}x{}, expected {n}x{n}", a_prime.nrows(), a_prime.ncols()));
    }
    let (v, eigenvalues) = range_of(a_prime);
    if v.ncols() == 0 {
        return Err(Error::Degenerate("matrix has rank zero".into()));
    }
    build_basis_from_span(&v, c, epsilon, k, eigenvalues)
}

/// As [`build_basis`], given an orthonormal basis `V` of the span.
pub fn build_basis_from_span(v: &DMatrix<f64>, c: f64, epsilon: f64, k: usize, eigenvalues: Vec<f64>) -> Result<Basis> {
    let (n, r) = v.shape();
    if !(c > 0.0) || !(epsilon > 0.0) || k == 0 || r == 0 {
        return contract("C, epsilon, k and the span dimension must be positive");
    }
    let q = v * (n as f64 / c);
    let ell = mvee_centered(&q, MVEE_TOL)?;
    let scale = (k as f64).max(ell.m_star).sqrt();
    let (mu, w) = sorted_eigen(&ell.x);
    let threshold = epsilon / (n as f64).sqrt();
    let mut axes = Vec::new();
    let mut dropped = Vec::new();
    // Smallest eigenvalue of X gives the longest axis.
    for a in (0..r).rev() {
        let length = 1.0 / (ell.m_star * mu[a].max(f64::MIN_POSITIVE)).sqrt();
        let dir = v * w.column(a);
        let axis = BasisAxis { direction: dir.as_slice().to_vec(), length, scaled_length: scale * length };
        if axis.scaled_length >= threshold {
            axes.push(axis);
        } else {
            dropped.push(axis);
        }
    }
    if axes.is_empty() {
        return Err(Error::Degenerate(format!("every ellipsoid axis is shorter than {threshold:.3e}")));
    }
    let b = DMatrix::from_fn(n, axes.len(), |i, j| axes[j].direction[i]);
    Ok(Basis {
        n,
        k,
        c,
        epsilon,
        b,
        l: c * scale / (epsilon * (n as f64).sqrt()),
        scale,
        ellipsoid_axes: axes,
        dropped,
        eigenvalues,
        span: v.clone(),
        ellipsoid: Some(ell),
    })
}

/// Worst observed `value / bound` for each basis inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisReport {
    pub samples: usize,
    pub sup_norm_ratio: f64,
    pub l1_lower_ratio: f64,
    pub l1_upper_ratio: f64,
    pub projection_ratio: f64,
    pub residual_ratio: f64,
}

fn gaussian(dim: usize, rng: &mut RngStream) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

fn check(name: &str, value: f64, bound: f64, witness: &[f64], worst: &mut f64) -> Result<()> {
    if value > bound + PROPERTY_TOL {
        return Err(Error::PropertyViolation { property: name.into(), value, bound, witness: witness.to_vec() });
    }
    if bound > 0.0 {
        *worst = worst.max(value / bound);
    }
    Ok(())
}

/// Sample-check the four basis inequalities:
/// (i) unit `v ∈ span(B)` has `‖v‖∞ ≤ L`;
/// (ii) `v ∈ span(B)` with `‖v‖₁ = 1` has `1/√n ≤ ‖v‖₂ ≤ L`;
/// (iii) `‖x‖₁ = 1` gives `‖Π_B x‖₂ ≤ L`;
/// (iv) `w ∈ P` has `‖w − Π_B w‖₂ ≤ ε/√n`.
///
/// Vertices `e_i` and the maximizers `Π_B e_i / ‖Π_B e_i‖` are always included.
pub fn verify_basis(
    basis: &Basis,
    a_prime: &DMatrix<f64>,
    c: f64,
    epsilon: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<BasisReport> {
    let n = basis.n;
    let h = basis.h();
    let l = basis.l;
    let rn = (n as f64).sqrt();
    let mut rep = BasisReport {
        samples,
        sup_norm_ratio: 0.0,
        l1_lower_ratio: 0.0,
        l1_upper_ratio: 0.0,
        projection_ratio: 0.0,
        residual_ratio: 0.0,
    };

    let mut unit_vectors: Vec<Vec<f64>> = (0..n)
        .filter_map(|i| {
            let row = basis.b.row(i).transpose();
            let norm = row.norm();
            (norm > 0.0).then(|| basis.embed(&(row / norm)))
        })
        .collect();
    for _ in 0..samples {
        let g = gaussian(h, rng);
        unit_vectors.push(basis.embed(&(&g / g.norm())));
    }
    for v in &unit_vectors {
        let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        check("sup-norm", sup, l, v, &mut rep.sup_norm_ratio)?;
        let l1: f64 = v.iter().map(|x| x.abs()).sum();
        let w: Vec<f64> = v.iter().map(|x| x / l1).collect();
        let l2 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        check("l1-unit-lower", 1.0 / rn, l2, &w, &mut rep.l1_lower_ratio)?;
        check("l1-unit-upper", l2, l, &w, &mut rep.l1_upper_ratio)?;
    }

    let mut xs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    for _ in 0..samples {
        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                let m: f64 = rng.sample(rand_distr::Exp1);
                if rng.random::<bool>() { m } else { -m }
            })
            .collect();
        let s: f64 = x.iter().map(|v| v.abs()).sum();
        x.iter_mut().for_each(|v| *v /= s);
        xs.push(x);
    }
    for x in &xs {
        let p = basis.project(x);
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        check("projection-norm", norm, l, x, &mut rep.projection_ratio)?;
    }

    let (v, _) = range_of(a_prime);
    if v.nrows() != n {
        return contract("matrix and basis disagree on dimension");
    }
    if v.ncols() > 0 {
        let bound = epsilon / rn;
        let half_width = c / n as f64;
        for _ in 0..samples {
            let dir = &v * gaussian(v.ncols(), rng);
            let reach = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if reach == 0.0 {
                continue;
            }
            let t: f64 = rng.random();
            let w = dir * (t * half_width / reach);
            let w = w.as_slice();
            let p = basis.project(w);
            let res = w.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            check("polytope-residual", res, bound, w, &mut rep.residual_ratio)?;
        }
    }
    Ok(rep)
}
