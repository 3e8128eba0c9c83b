//! General real eigenvalue solver: balancing, Householder reduction to upper
//! Hessenberg form, then Francis double-shift QR iteration on the Hessenberg
//! matrix. Only eigenvalues are produced.

use super::{ensure_finite, ensure_square, Complex, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Eigenvalues of a square matrix, with multiplicity. Complex eigenvalues
/// come in adjacent conjugate pairs.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex>> {
    ensure_square(a)?;
    ensure_finite(a, "eigenvalue input")?;
    let n = a.nrows();
    match n {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![Complex::new(a[(0, 0)], 0.0)]),
        _ => {}
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg_in_place(&mut h);
    hqr(&mut h)
}

/// Upper Hessenberg matrix orthogonally similar to `a`.
pub fn hessenberg(a: &Matrix) -> Result<Matrix> {
    ensure_square(a)?;
    let mut h = a.clone();
    hessenberg_in_place(&mut h);
    Ok(h)
}

/// Diagonal similarity scaling by powers of two so row and column norms are
/// comparable. Exact in floating point.
fn balance(a: &mut Matrix) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut g = r / RADIX;
            let mut f = 1.0;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let ginv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= ginv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

fn hessenberg_in_place(h: &mut Matrix) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        // Householder vector annihilating h[k+2.., k].
        let alpha_sq: f64 = (k + 1..n).map(|i| h[(i, k)] * h[(i, k)]).sum();
        let tail: f64 = (k + 2..n).map(|i| h[(i, k)] * h[(i, k)]).sum();
        if tail == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let alpha = if x0 > 0.0 { -alpha_sq.sqrt() } else { alpha_sq.sqrt() };
        let mut v = vec![0.0; n];
        v[k + 1] = x0 - alpha;
        for i in k + 2..n {
            v[i] = h[(i, k)];
        }
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        let beta = 2.0 / vnorm_sq;

        // h <- (I - beta v vᵀ) h
        for j in 0..n {
            let dot: f64 = (k + 1..n).map(|i| v[i] * h[(i, j)]).sum();
            let f = beta * dot;
            for i in k + 1..n {
                h[(i, j)] -= f * v[i];
            }
        }
        // h <- h (I - beta v vᵀ)
        for i in 0..n {
            let dot: f64 = (k + 1..n).map(|j| h[(i, j)] * v[j]).sum();
            let f = beta * dot;
            for j in k + 1..n {
                h[(i, j)] -= f * v[j];
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix. Deflates one or
/// two eigenvalues at a time from the bottom of the active window.
#[allow(unused_assignments)]
fn hqr(a: &mut Matrix) -> Result<Vec<Complex>> {
    let n = a.nrows() as isize;
    // 1-based accessors keep the index arithmetic readable.
    macro_rules! h {
        ($i:expr, $j:expr) => {
            a[(($i - 1) as usize, ($j - 1) as usize)]
        };
    }

    let mut wr = vec![0.0; n as usize + 1];
    let mut wi = vec![0.0; n as usize + 1];

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i - 1).max(1)..=n {
            anorm += h!(i, j).abs();
        }
    }

    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = h!(l - 1, l - 1).abs() + h!(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if h!(l, l - 1).abs() + s == s {
                    h!(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = h!(nn, nn);
            if l == nn {
                wr[nn as usize] = x + t;
                wi[nn as usize] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = h!(nn - 1, nn - 1);
            let mut w = h!(nn, nn - 1) * h!(nn - 1, nn);
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[nn as usize - 1] = x + z;
                    wr[nn as usize] = x + z;
                    if z != 0.0 {
                        wr[nn as usize] = x - w / z;
                    }
                    wi[nn as usize - 1] = 0.0;
                    wi[nn as usize] = 0.0;
                } else {
                    wr[nn as usize - 1] = x + p;
                    wr[nn as usize] = x + p;
                    wi[nn as usize - 1] = -z;
                    wi[nn as usize] = z;
                }
                nn -= 2;
                break;
            }

            if its >= MAX_SWEEPS_PER_EIGENVALUE {
                return Err(Error::NotConverged {
                    what: "Hessenberg QR iteration",
                    iterations: its,
                });
            }
            if its > 0 && its % 10 == 0 {
                // Exceptional shift.
                t += x;
                for i in 1..=nn {
                    h!(i, i) -= x;
                }
                let s = h!(nn, nn - 1).abs() + h!(nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            // Find two consecutive small subdiagonal elements.
            let mut m = nn - 2;
            let mut z;
            loop {
                z = h!(m, m);
                r = x - z;
                let s0 = y - z;
                p = (r * s0 - w) / h!(m + 1, m) + h!(m, m + 1);
                q = h!(m + 1, m + 1) - z - r - s0;
                r = h!(m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = h!(m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (h!(m - 1, m - 1).abs() + z.abs() + h!(m + 1, m + 1).abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                h!(i, i - 2) = 0.0;
                if i != m + 2 {
                    h!(i, i - 3) = 0.0;
                }
            }

            // Double QR step on rows l..nn, columns m..nn.
            let mut k = m;
            while k < nn {
                if k != m {
                    p = h!(k, k - 1);
                    q = h!(k + 1, k - 1);
                    r = if k != nn - 1 { h!(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            h!(k, k - 1) = -h!(k, k - 1);
                        }
                    } else {
                        h!(k, k - 1) = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = h!(k, j) + q * h!(k + 1, j);
                        if k != nn - 1 {
                            p += r * h!(k + 2, j);
                            h!(k + 2, j) -= p * z;
                        }
                        h!(k + 1, j) -= p * y;
                        h!(k, j) -= p * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        p = x * h!(i, k) + y * h!(i, k + 1);
                        if k != nn - 1 {
                            p += z * h!(i, k + 2);
                            h!(i, k + 2) -= p * r;
                        }
                        h!(i, k + 1) -= p * q;
                        h!(i, k) -= p;
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }

    Ok((1..=n as usize).map(|i| Complex::new(wr[i], wi[i])).collect())
}
