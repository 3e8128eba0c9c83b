use super::{ensure_finite, ensure_square, Matrix};
use crate::error::{dim_err, Error, Result};

pub const DEFAULT_DARE_TOL: f64 = 1e-12;
pub const DEFAULT_DARE_MAX_ITER: usize = 10_000;

/// One step of the Riccati difference map
/// `P ↦ AᵀPA − AᵀPB(BᵀPB + R)⁻¹BᵀPA + Q`.
fn riccati_step(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Option<Matrix> {
    let pa = p * a;
    let bt_p = b.transpose() * p;
    let gram = &bt_p * b + r;
    let chol = gram.cholesky()?;
    let gain = chol.solve(&(&bt_p * a));
    let next = a.transpose() * &pa - (a.transpose() * p * b) * gain + q;
    // Keep the iterate exactly symmetric.
    Some((&next + next.transpose()) * 0.5)
}

/// Fixed-point iteration of the general discrete-time Riccati equation
/// started from `P₀ = Q`. Stops at the first iterate whose one-step residual
/// `‖f(P) − P‖_F` is at most `tol` and returns that iterate.
pub fn dare_iterate(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    tol: f64,
    max_iter: usize,
) -> Result<Matrix> {
    iterate(a, b, q, r, tol, max_iter, false)
}

/// As [`dare_iterate`], but stops once `‖f(P) − P‖_F ≤ rtol · max(1, ‖P‖_F)`.
/// Nearly uncontrollable pairs have large `P`, where an absolute step of
/// `1e-12` is below the float spacing and never reached.
pub fn dare_iterate_scaled(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    rtol: f64,
    max_iter: usize,
) -> Result<Matrix> {
    iterate(a, b, q, r, rtol, max_iter, true)
}

fn iterate(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, tol: f64, max_iter: usize, scaled: bool) -> Result<Matrix> {
    ensure_square(a)?;
    ensure_square(q)?;
    ensure_square(r)?;
    let n = a.nrows();
    if b.nrows() != n || q.nrows() != n || r.nrows() != b.ncols() {
        return Err(dim_err(format!(
            "dare: A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
            n,
            n,
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("dare tolerance must be positive".into()));
    }
    for (m, what) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R")] {
        ensure_finite(m, what)?;
    }
    if q.clone().cholesky().is_none() {
        return Err(Error::InvalidArgument("dare: Q must be symmetric positive definite".into()));
    }

    let not_converged = |iterations| Error::NotConverged { what: "Riccati iteration", iterations };
    let mut p = q.clone();
    for it in 0..max_iter {
        let next = riccati_step(a, b, q, r, &p).ok_or_else(|| not_converged(it))?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(not_converged(it));
        }
        let diff = (&next - &p).norm();
        if !diff.is_finite() {
            return Err(not_converged(it));
        }
        let bound = if scaled { tol * p.norm().max(1.0) } else { tol };
        if diff <= bound {
            return Ok(p);
        }
        p = next;
    }
    Err(not_converged(max_iter))
}

/// Solution of `P = SᵀPS − SᵀP(P + I)⁻¹PS + Q` by fixed-point iteration
/// from `P₀ = Q`.
pub fn dare_fixed_point(s: &Matrix, q: &Matrix, tol: f64, max_iter: usize) -> Result<Matrix> {
    ensure_square(s)?;
    let n = s.nrows();
    dare_iterate(s, &Matrix::identity(n, n), q, &Matrix::identity(n, n), tol, max_iter)
}
