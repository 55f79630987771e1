//! Bernstein and Chebyshev bases on `[0, 1]`, the Pascal matrix linking
//! normalized frequencies to moments, and piecewise-constant Bernstein
//! approximations used by the reconstruction LP.
//!
//! All Chebyshev work on `[0, 1]` uses the shifted polynomials
//! `T*_i(x) = T_i(2x − 1)`.

use crate::error::{contract, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Degrees up to this bound use exact integer binomials.
const EXACT_BINOMIAL_MAX: usize = 60;

fn binomial_u128(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for t in 1..=k as u128 {
        acc = acc * (n as u128 - k as u128 + t) / t;
    }
    acc
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if n <= EXACT_BINOMIAL_MAX {
        return (binomial_u128(n, k) as f64).ln();
    }
    let k = k.min(n - k);
    (1..=k).map(|t| ((n - k + t) as f64 / t as f64).ln()).sum()
}

/// `C(n, k)` as a float; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        0.0
    } else if n <= EXACT_BINOMIAL_MAX {
        binomial_u128(n, k) as f64
    } else {
        ln_binomial(n, k).exp()
    }
}

/// Unchecked Bernstein basis value; callers guarantee `i <= k`.
pub(crate) fn bernstein(i: usize, k: usize, x: f64) -> f64 {
    if k <= EXACT_BINOMIAL_MAX {
        return binomial(k, i) * x.powi(i as i32) * (1.0 - x).powi((k - i) as i32);
    }
    if x <= 0.0 {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    if x >= 1.0 {
        return if i == k { 1.0 } else { 0.0 };
    }
    (ln_binomial(k, i) + i as f64 * x.ln() + (k - i) as f64 * (-x).ln_1p()).exp()
}

/// `B_{i,K}(x) = C(K, i) xⁱ (1 − x)^{K−i}`.
pub fn bernstein_eval(i: usize, k: usize, x: f64) -> Result<f64> {
    if i > k {
        return contract(format!("Bernstein index {i} exceeds degree {k}"));
    }
    if !(0.0..=1.0).contains(&x) {
        return contract(format!("Bernstein argument {x} outside [0, 1]"));
    }
    Ok(bernstein(i, k, x))
}

/// `T_i(x)` by the three-term recurrence.
pub fn chebyshev_eval(i: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if i == 0 {
        return prev;
    }
    for _ in 1..i {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Shifted Chebyshev polynomial `T*_i(x) = T_i(2x − 1)`.
pub fn shifted_chebyshev_eval(i: usize, x: f64) -> f64 {
    chebyshev_eval(i, 2.0 * x - 1.0)
}

/// Piecewise-constant approximations of every `B_{i,K}` on a shared partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantBasis {
    pub k: usize,
    /// `0 = a₀ < a₁ < … < a_h = 1`.
    pub breakpoints: Vec<f64>,
    /// `values[i][j]` approximates `B_{i,K}` on piece `j`.
    pub values: Vec<Vec<f64>>,
    /// Requested sup-error bound.
    pub epsilon_prime: f64,
    /// Largest error certified by the construction, at most `epsilon_prime`.
    pub certified_error: f64,
}

impl PiecewiseConstantBasis {
    pub fn pieces(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Index of the piece containing `x`; the last piece is closed.
    pub fn piece_of(&self, x: f64) -> usize {
        let j = self.breakpoints.partition_point(|&a| a <= x);
        j.saturating_sub(1).min(self.pieces() - 1)
    }

    pub fn value(&self, i: usize, x: f64) -> f64 {
        self.values[i][self.piece_of(x)]
    }

    /// Max of `|B̄_{i,K} − B_{i,K}|` over `grid + 1` equispaced points and all `i`.
    pub fn audit(&self, grid: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for g in 0..=grid {
            let x = g as f64 / grid as f64;
            let j = self.piece_of(x);
            for i in 0..=self.k {
                worst = worst.max((self.values[i][j] - bernstein(i, self.k, x)).abs());
            }
        }
        worst
    }
}

/// Breakpoints splitting a monotone stretch `[a, b]` of `f` into pieces whose
/// value range is at most `2 eps`.
fn level_breaks(f: impl Fn(f64) -> f64, a: f64, b: f64, eps: f64, out: &mut Vec<f64>) {
    let fb = f(b);
    let mut left = a;
    loop {
        let fl = f(left);
        if (fb - fl).abs() <= 2.0 * eps {
            return;
        }
        let up = fb > fl;
        let step = 2.0 * eps * (1.0 - 1e-9);
        let target = if up { fl + step } else { fl - step };
        let within = |x: f64| if up { f(x) <= target } else { f(x) >= target };
        // largest x in [left, b] still within range of f(left)
        let (mut lo, mut hi) = (left, b);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if within(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo <= left {
            lo = hi;
        }
        out.push(lo);
        left = lo;
    }
}

/// Shared partition of `[0, 1]` on which every `B_{i,K}` is within
/// `epsilon_prime` of a constant.
///
/// Each basis function is split at its mode `i/K`; on each monotone side the
/// breakpoints are placed at equal steps of `2 ε′` in value. Piece values are
/// endpoint averages, so monotonicity certifies the error.
pub fn build_piecewise_bernstein(k: usize, epsilon_prime: f64) -> Result<PiecewiseConstantBasis> {
    if !(epsilon_prime > 0.0 && epsilon_prime < 1.0) {
        return contract(format!("epsilon_prime = {epsilon_prime} must lie in (0, 1)"));
    }
    let mut br = vec![0.0, 1.0];
    for i in 0..=k {
        let f = |x: f64| bernstein(i, k, x);
        let mode = if k == 0 { 0.0 } else { i as f64 / k as f64 };
        br.push(mode);
        level_breaks(f, 0.0, mode, epsilon_prime, &mut br);
        level_breaks(f, mode, 1.0, epsilon_prime, &mut br);
    }
    br.sort_by(f64::total_cmp);
    br.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    *br.last_mut().expect("nonempty") = 1.0;
    br[0] = 0.0;

    let mut certified: f64 = 0.0;
    let values = (0..=k)
        .map(|i| {
            br.windows(2)
                .map(|w| {
                    let (fa, fb) = (bernstein(i, k, w[0]), bernstein(i, k, w[1]));
                    certified = certified.max(0.5 * (fa - fb).abs());
                    0.5 * (fa + fb)
                })
                .collect()
        })
        .collect();
    Ok(PiecewiseConstantBasis {
        k,
        breakpoints: br,
        values,
        epsilon_prime,
        certified_error: certified,
    })
}

/// `Pas_{ij} = C(K − i, j − i)` for `j ≥ i`, zero below the diagonal.
/// Maps normalized frequencies to moments: `g = Pas · nfq`.
pub fn pascal_matrix(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k + 1, k + 1, |i, j| if j >= i { binomial(k - i, j - i) } else { 0.0 })
}

/// Maps shifted-Chebyshev coefficients to Bernstein coefficients of degree `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisChangeMatrix {
    pub k: usize,
    /// `c = M t`; column `i` holds the Bernstein coefficients of `T*_i`.
    pub m: DMatrix<f64>,
}

impl BasisChangeMatrix {
    pub fn apply(&self, t: &[f64]) -> Vec<f64> {
        (self.m.clone() * nalgebra::DVector::from_column_slice(t)).iter().copied().collect()
    }

    /// Largest column absolute sum.
    pub fn max_column_sum(&self) -> f64 {
        self.m
            .column_iter()
            .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Raise Bernstein coefficients from degree `d` to `d + 1`.
fn elevate(c: &[f64]) -> Vec<f64> {
    let d = c.len() - 1;
    let n = (d + 1) as f64;
    (0..=d + 1)
        .map(|j| {
            let a = if j > 0 { j as f64 / n * c[j - 1] } else { 0.0 };
            let b = if j <= d { (d + 1 - j) as f64 / n * c[j] } else { 0.0 };
            a + b
        })
        .collect()
}

/// Multiply a degree-`d` Bernstein form by `2x − 1 = x − (1 − x)`.
fn times_shift(c: &[f64]) -> Vec<f64> {
    let d = c.len() - 1;
    let n = (d + 1) as f64;
    (0..=d + 1)
        .map(|j| {
            let up = if j > 0 { j as f64 / n * c[j - 1] } else { 0.0 };
            let down = if j <= d { (d + 1 - j) as f64 / n * c[j] } else { 0.0 };
            up - down
        })
        .collect()
}

/// Largest degree accepted by [`chebyshev_to_bernstein`].
pub const MAX_BASIS_CHANGE_DEGREE: usize = 30;

/// Bernstein coefficients of `T*_0, …, T*_K`, from the Chebyshev recurrence
/// carried out in Bernstein form.
pub fn chebyshev_to_bernstein(k: usize) -> Result<BasisChangeMatrix> {
    if k > MAX_BASIS_CHANGE_DEGREE {
        return contract(format!("basis change limited to K <= {MAX_BASIS_CHANGE_DEGREE}, got {k}"));
    }
    // native-degree forms: T*_i has degree i
    let mut forms: Vec<Vec<f64>> = vec![vec![1.0]];
    if k >= 1 {
        forms.push(vec![-1.0, 1.0]);
    }
    for i in 2..=k {
        let a: Vec<f64> = times_shift(&forms[i - 1]).iter().map(|x| 2.0 * x).collect();
        let b = elevate(&elevate(&forms[i - 2]));
        forms.push(a.iter().zip(&b).map(|(x, y)| x - y).collect());
    }
    let mut m = DMatrix::zeros(k + 1, k + 1);
    for (i, mut f) in forms.into_iter().enumerate() {
        while f.len() < k + 1 {
            f = elevate(&f);
        }
        for (j, v) in f.into_iter().enumerate() {
            m[(j, i)] = v;
        }
    }
    Ok(BasisChangeMatrix { k, m })
}
