//! One-sided Jacobi SVD.
//!
//! Column pairs of a working copy are rotated until mutually orthogonal;
//! the accumulated rotations form `V`, the final column norms are the
//! singular values. Slow compared to bidiagonal QR but the matrices here
//! are small, and it stays accurate on exactly rank-deficient inputs.

use super::Matrix;

const MAX_SWEEPS: usize = 100;

/// Thin SVD `a = u · diag(s) · vᵀ` with `k = min(rows, cols)` triplets.
/// Columns of `u` belonging to zero singular values are zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn max_singular_value(&self) -> f64 {
        self.s.iter().copied().fold(0.0, f64::max)
    }
}

pub fn svd(a: &Matrix) -> Svd {
    if a.nrows() < a.ncols() {
        let t = jacobi(a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    jacobi(a.clone())
}

/// Requires `rows ≥ cols`.
fn jacobi(mut w: Matrix) -> Svd {
    let n = w.ncols();
    let mut v = Matrix::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    for (j, &sj) in s.iter().enumerate() {
        if sj > 0.0 {
            w.column_mut(j).scale_mut(1.0 / sj);
        }
    }
    Svd { u: w, s, v }
}

fn rotate(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (mp, mq) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * mp - s * mq;
        m[(i, q)] = s * mp + c * mq;
    }
}
