//! Dense real-matrix kernel.
//!
//! Everything above this module works with [`Matrix`] (a column-major
//! `nalgebra::DMatrix<f64>`) and [`Complex`] scalars. LU and Cholesky come
//! from nalgebra; the SVD, the general eigenvalue solver and the Riccati
//! iteration live in the submodules.

mod eigen;
mod riccati;
mod svd;

pub use eigen::{eigenvalues, hessenberg};
pub use riccati::{dare_fixed_point, dare_iterate, dare_iterate_scaled, DEFAULT_DARE_MAX_ITER, DEFAULT_DARE_TOL};
pub use svd::{svd, Svd};

use crate::error::{dim_err, Error, Result};
use nalgebra::DMatrix;

pub type Matrix = DMatrix<f64>;
pub type Complex = nalgebra::Complex<f64>;

/// Default strict-stability margin for Schur tests.
pub const DEFAULT_STABILITY_TOL: f64 = 1e-9;

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn ensure_square(m: &Matrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() })
    }
}

/// Kronecker product; block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec(m: &Matrix) -> Matrix {
    Matrix::from_column_slice(m.len(), 1, m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &Matrix, rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols {
        return Err(dim_err(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(Matrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Stack matrices vertically. All blocks must share a column count; blocks
/// with zero rows are allowed.
pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(dim_err("vstack: column counts differ"));
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(*b);
        r0 += b.nrows();
    }
    Ok(out)
}

/// Stack matrices horizontally.
pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    if blocks.iter().any(|b| b.nrows() != rows) {
        return Err(dim_err("hstack: row counts differ"));
    }
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(*b);
        c0 += b.ncols();
    }
    Ok(out)
}

fn svd_cutoff(f: &Svd, rows: usize, cols: usize) -> f64 {
    f.max_singular_value() * f64::EPSILON * rows.max(cols) as f64
}

/// Minimum-norm least-squares solution of `a x = b`.
///
/// Returns `x` together with the achieved residual `‖a x − b‖_F`. Rank
/// deficiency is handled through the pseudo-inverse, so among all
/// minimizers the one of least Frobenius norm is returned.
pub fn lstsq_min_norm(a: &Matrix, b: &Matrix) -> Result<(Matrix, f64)> {
    if a.nrows() != b.nrows() {
        return Err(dim_err(format!(
            "lstsq: a has {} rows, b has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok((Matrix::zeros(a.ncols(), b.ncols()), b.norm()));
    }
    let x = pinv(a) * b;
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// Moore-Penrose pseudo-inverse, singular values below
/// `σ_max · ε · max(rows, cols)` treated as zero.
pub fn pinv(a: &Matrix) -> Matrix {
    pinv_impl(a, None)
}

/// Pseudo-inverse with singular values below `rtol · σ_max` treated as zero.
pub fn pinv_rtol(a: &Matrix, rtol: f64) -> Matrix {
    pinv_impl(a, Some(rtol))
}

fn pinv_impl(a: &Matrix, rtol: Option<f64>) -> Matrix {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Matrix::zeros(a.ncols(), a.nrows());
    }
    let f = svd(a);
    let cutoff = match rtol {
        Some(r) => r * f.max_singular_value(),
        None => svd_cutoff(&f, a.nrows(), a.ncols()),
    };
    let mut out = Matrix::zeros(a.ncols(), a.nrows());
    for (j, &s) in f.s.iter().enumerate() {
        if s > cutoff {
            out += f.v.column(j) * f.u.column(j).transpose() * (1.0 / s);
        }
    }
    out
}

/// Singular values (unsorted) of `a`; empty for a degenerate shape.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    svd(a).s
}

/// Numerical rank with a cutoff relative to the largest singular value.
pub fn rank(a: &Matrix, rtol: f64) -> usize {
    let s = singular_values(a);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rtol * smax).count()
}

/// Orthonormal basis (as columns) of the left null space `{v : vᵀ a = 0}`.
pub fn left_null_space(a: &Matrix, rtol: f64) -> Matrix {
    null_space(&a.transpose(), rtol)
}

/// Orthonormal basis of the right null space `{x : a x = 0}`.
pub fn null_space(a: &Matrix, rtol: f64) -> Matrix {
    let cols = a.ncols();
    if a.nrows() == 0 || cols == 0 {
        return Matrix::identity(cols, cols);
    }
    // Pad with zero rows so the SVD yields a full square V.
    let padded = if a.nrows() < cols {
        let mut p = Matrix::zeros(cols, cols);
        p.view_mut((0, 0), a.shape()).copy_from(a);
        p
    } else {
        a.clone()
    };
    let f = svd(&padded);
    let smax = f.max_singular_value();
    let keep: Vec<usize> = (0..f.s.len())
        .filter(|&i| smax == 0.0 || f.s[i] <= rtol * smax)
        .collect();
    let mut basis = Matrix::zeros(cols, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &f.v.column(i));
    }
    basis
}

/// Determinant through partial-pivot LU.
pub fn det(a: &Matrix) -> Result<f64> {
    ensure_square(a)?;
    Ok(a.clone().lu().determinant())
}

pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Strict Schur stability with margin: `ρ(a) < 1 − tol`.
pub fn is_schur(a: &Matrix, tol: f64) -> Result<bool> {
    Ok(spectral_radius(a)? < 1.0 - tol)
}

/// Real `2n × 2n` representation of the complex matrix `re + i·im`:
/// `[[re, −im], [im, re]]`. Its spectrum is that of the complex matrix
/// together with the conjugate spectrum.
pub fn complex_embed(re: &Matrix, im: &Matrix) -> Result<Matrix> {
    ensure_square(re)?;
    if re.shape() != im.shape() {
        return Err(dim_err("complex_embed: real and imaginary parts differ in shape"));
    }
    let n = re.nrows();
    let mut out = Matrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(re);
    out.view_mut((0, n), (n, n)).copy_from(&(-im));
    out.view_mut((n, 0), (n, n)).copy_from(im);
    out.view_mut((n, n), (n, n)).copy_from(re);
    Ok(out)
}

/// Real embedding of `λ · a`.
pub fn complex_scale_embed(a: &Matrix, lambda: Complex) -> Result<Matrix> {
    complex_embed(&(a * lambda.re), &(a * lambda.im))
}

/// Symmetric part `(a + aᵀ)/2`.
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}
