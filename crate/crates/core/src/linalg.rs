//! Dense linear-algebra helpers: principal matrix logarithm, matrix
//! exponential, Lyapunov solve and eigenvalue extraction.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogOptions {
    /// Eigenvalues with `|arg| > pi - branch_tol` are rejected.
    pub branch_tol: f64,
    /// Eigenvector condition number above which the Schur fallback is used.
    pub eigvec_cond_limit: f64,
}

impl Default for LogOptions {
    fn default() -> Self {
        Self { branch_tol: 1e-6, eigvec_cond_limit: 1e8 }
    }
}

/// Which algorithm [`matrix_log_with`] used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogMethod {
    Eigen,
    InverseScalingSquaring,
}

pub fn matrix_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

fn schur_eps() -> (f64, usize) {
    (1e-15, 10_000)
}

fn complex_schur(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let (eps, iters) = schur_eps();
    let s = Schur::try_new(m.clone(), eps, iters)
        .ok_or_else(|| Error::Numerical(format!("Schur iteration did not converge ({}x{})", m.nrows(), m.ncols())))?;
    let (q, mut t) = s.unpack();
    // Clear sub-diagonal round-off so T is exactly triangular.
    for j in 0..t.ncols() {
        for i in j + 1..t.nrows() {
            t[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok((q, t))
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let (eps, iters) = schur_eps();
    let s = Schur::try_new(m.clone(), eps, iters).ok_or_else(|| {
        Error::Numerical(format!(
            "eigensolver did not converge (2-norm condition {:.3e})",
            condition_number(m)
        ))
    })?;
    Ok(s.complex_eigenvalues().iter().copied().collect())
}

/// 2-norm condition number from the singular values; infinite if singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 { max / min } else { f64::INFINITY }
}

/// Principal logarithm of a real matrix with no eigenvalue on the closed
/// negative real axis.
pub fn matrix_log(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    matrix_log_with(m, &LogOptions::default()).map(|(l, _)| l)
}

pub fn matrix_log_with(m: &DMatrix<f64>, opts: &LogOptions) -> Result<(DMatrix<f64>, LogMethod)> {
    if !m.is_square() {
        return Err(Error::Domain(format!("matrix_log needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("matrix_log input has non-finite entries".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((m.clone(), LogMethod::Eigen));
    }
    let mc: CMatrix = m.map(|v| Complex64::new(v, 0.0));
    let (q, t) = complex_schur(&mc)?;
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for i in 0..n {
        let lam = t[(i, i)];
        if lam.norm() <= 1e-14 * scale {
            return Err(Error::Numerical(format!("matrix_log input is singular (eigenvalue {lam})")));
        }
        if lam.arg().abs() > std::f64::consts::PI - opts.branch_tol {
            return Err(Error::BranchAmbiguity { re: lam.re, im: lam.im });
        }
    }
    let (log_t, method) = match triangular_eigvecs(&t) {
        Some(v) if cond_c(&v) <= opts.eigvec_cond_limit => {
            let vinv = v.clone().try_inverse().ok_or_else(|| Error::Numerical("eigenvector matrix inversion failed".into()))?;
            let d = CMatrix::from_diagonal(&DVector::from_iterator(n, (0..n).map(|i| t[(i, i)].ln())));
            (&v * d * vinv, LogMethod::Eigen)
        }
        _ => (log_triangular_iss(&t)?, LogMethod::InverseScalingSquaring),
    };
    let l = &q * log_t * q.adjoint();
    Ok((l.map(|z| z.re), method))
}

fn cond_c(v: &CMatrix) -> f64 {
    let sv = v.clone().singular_values();
    let min = sv.min();
    if min > 0.0 { sv.max() / min } else { f64::INFINITY }
}

/// Unit-diagonal upper-triangular eigenvector matrix of upper-triangular `t`,
/// or `None` when two eigenvalues (nearly) coincide.
fn triangular_eigvecs(t: &CMatrix) -> Option<CMatrix> {
    let n = t.nrows();
    let mut v = CMatrix::identity(n, n);
    let scale = t.norm().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let lam = t[(k, k)];
        for i in (0..k).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                s += t[(i, j)] * v[(j, k)];
            }
            let den = lam - t[(i, i)];
            if den.norm() <= 1e-12 * scale {
                return None;
            }
            v[(i, k)] = s / den;
        }
    }
    // Normalise columns.
    for k in 0..n {
        let nrm = v.column(k).norm();
        v.column_mut(k).unscale_mut(nrm);
    }
    Some(v)
}

/// Principal square root of an upper-triangular matrix.
fn sqrt_triangular(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let mut r = CMatrix::zeros(n, n);
    for j in 0..n {
        r[(j, j)] = t[(j, j)].sqrt();
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = s / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

fn gauss_legendre_unit(m: usize) -> Vec<(f64, f64)> {
    // Nodes and weights on [0, 1] by Newton iteration on P_m.
    let mut out = Vec::with_capacity(m);
    for i in 1..=m {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// Inverse scaling and squaring on an upper-triangular matrix.
fn log_triangular_iss(t: &CMatrix) -> Result<CMatrix> {
    let n = t.nrows();
    let id = CMatrix::identity(n, n);
    let mut r = t.clone();
    let mut k = 0u32;
    while (&r - &id).norm() > 0.25 {
        if k >= 60 {
            return Err(Error::Numerical("matrix square-root iteration did not converge".into()));
        }
        r = sqrt_triangular(&r);
        k += 1;
    }
    let x = &r - &id;
    let mut acc = CMatrix::zeros(n, n);
    for (node, w) in gauss_legendre_unit(12) {
        let lhs = &id + &x * Complex64::new(node, 0.0);
        let sol = lhs
            .solve_upper_triangular(&x)
            .ok_or_else(|| Error::Numerical("singular Pade denominator".into()))?;
        acc += sol * Complex64::new(w, 0.0);
    }
    Ok(acc * Complex64::new(2f64.powi(k as i32), 0.0))
}

/// Solves `A C + C A^T + B B^T = 0` for a Hurwitz `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::Domain(format!(
            "lyapunov dimensions mismatch: A {}x{}, B {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let max_real = eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if !(max_real < 0.0) {
        return Err(Error::NotHurwitz { max_real });
    }
    let id = DMatrix::<f64>::identity(n, n);
    let k = id.kronecker(a) + a.kronecker(&id);
    let q = b * b.transpose();
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = k
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("lyapunov system is singular".into()))?;
    let c = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&c + c.transpose()) * 0.5)
}
