//! Right-inverse search by alternating projections.
//!
//! Feasibility problem in `Θ ∈ R^{τ×n}`:
//!
//! ```text
//! P := X₋Θ symmetric,  W₋Θ = 0,  [[P, X₊Θ], [(X₊Θ)ᵀ, P]] ⪰ εI
//! ```
//!
//! The block matrix is a linear image of `Θ` restricted to the subspace
//! `{W₋Θ = 0, X₋Θ = (X₋Θ)ᵀ}`. Iterates alternate between the eigenvalue-
//! clipped cone `{Z ⪰ εI}` and that image. A feasible `Θ` yields the
//! normalized right inverse `ΘP⁻¹` with `X₊ΘP⁻¹` Schur stable.

use nalgebra::SymmetricEigen;

use crate::datamod::TrajectoryData;
use crate::error::{Error, Result};
use crate::matcore::{self, Matrix, RANK_RTOL};

use super::{certify_theta, Route};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub max_iter: usize,
    /// Eigenvalue floor `ε` of the projected block matrix.
    pub margin: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { max_iter: 5000, margin: 1e-6 }
    }
}

/// Linear constraints on `vec Θ` defining the search subspace.
fn subspace_constraints(data: &TrajectoryData) -> Matrix {
    let n = data.state_dim();
    let tau = data.tau();
    let lifted_x = matcore::kron(&Matrix::identity(n, n), &data.x_minus());
    let lifted_w = matcore::kron(&Matrix::identity(n, n), data.w_minus());
    let sym_rows = n * (n - 1) / 2;
    let mut out = Matrix::zeros(sym_rows + lifted_w.nrows(), tau * n);
    let mut row = 0;
    // vec(X₋Θ)[j*n + i] = (X₋Θ)[i, j]
    for i in 0..n {
        for j in i + 1..n {
            let diff = lifted_x.row(j * n + i) - lifted_x.row(i * n + j);
            out.set_row(row, &diff);
            row += 1;
        }
    }
    out.view_mut((sym_rows, 0), lifted_w.shape()).copy_from(&lifted_w);
    out
}

fn block_matrix(data: &TrajectoryData, theta: &Matrix) -> Matrix {
    let p = matcore::symmetrize(&(data.x_minus() * theta));
    let q = data.x_plus() * theta;
    let n = p.nrows();
    let mut z = Matrix::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(&p);
    z.view_mut((0, n), (n, n)).copy_from(&q);
    z.view_mut((n, 0), (n, n)).copy_from(&q.transpose());
    z.view_mut((n, n), (n, n)).copy_from(&p);
    z
}

fn project_onto_shifted_cone(z: &Matrix, margin: f64) -> Matrix {
    let eig = SymmetricEigen::new(matcore::symmetrize(z));
    let clipped = eig.eigenvalues.map(|v| v.max(margin));
    &eig.eigenvectors * Matrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// `Θ P⁻¹` when `P = X₋Θ` is positive definite.
fn normalize(data: &TrajectoryData, theta: &Matrix) -> Option<Matrix> {
    let p = matcore::symmetrize(&(data.x_minus() * theta));
    let chol = p.cholesky()?;
    // Θ P⁻¹ = (P⁻¹ Θᵀ)ᵀ since P is symmetric
    Some(chol.solve(&theta.transpose()).transpose())
}

/// Search for a right inverse `Θ` of `X₋` with `W₋Θ = 0` and `X₊Θ` Schur
/// stable (margin `stability_tol`). Failure is inconclusive.
pub fn sdp_feasibility(data: &TrajectoryData, opts: &SdpOptions, stability_tol: f64) -> Result<Matrix> {
    let n = data.state_dim();
    let tau = data.tau();
    if tau == 0 || matcore::rank(&data.x_minus(), RANK_RTOL) < n {
        return Err(Error::InvalidArgument("X₋ must have full row rank".into()));
    }
    let accept = |theta: &Matrix| -> Option<Matrix> {
        let normalized = normalize(data, theta)?;
        certify_theta(data, normalized.clone(), Route::Projection, stability_tol)
            .ok()
            .map(|_| normalized)
    };

    // Plain right inverse with W₋Θ = 0 as the starting point (P = I).
    let xw = matcore::vstack(&[&data.x_minus(), data.w_minus()])?;
    let target = matcore::vstack(&[&Matrix::identity(n, n), &Matrix::zeros(data.disturbance_dim(), n)])?;
    let (theta0, residual) = matcore::lstsq_min_norm(&xw, &target)?;
    if residual > super::RIGHT_INVERSE_TOL {
        // No right inverse annihilates W₋ at all.
        return Err(Error::NumericallyInfeasible { iterations: 0 });
    }
    if let Some(found) = accept(&theta0) {
        return Ok(found);
    }

    let basis = matcore::null_space(&subspace_constraints(data), RANK_RTOL);
    let dim = basis.ncols();
    let mut image = Matrix::zeros(4 * n * n, dim);
    for c in 0..dim {
        let theta = matcore::unvec(&basis.columns(c, 1).into_owned(), tau, n)?;
        image.set_column(c, &matcore::vec(&block_matrix(data, &theta)).column(0));
    }
    let image_pinv = matcore::pinv(&image);

    let mut coords = basis.transpose() * matcore::vec(&theta0);
    for _ in 0..opts.max_iter {
        let theta = matcore::unvec(&(&basis * &coords), tau, n)?;
        if let Some(found) = accept(&theta) {
            return Ok(found);
        }
        let z = project_onto_shifted_cone(&block_matrix(data, &theta), opts.margin);
        coords = &image_pinv * matcore::vec(&z);
    }
    Err(Error::NumericallyInfeasible { iterations: opts.max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamod::{generate_data, LinearSystem};
    use crate::matcore::DEFAULT_STABILITY_TOL;
    use nalgebra::dmatrix;

    /// Scalar plant `x⁺ = 2x + u₁ + u₂` excited with `u₁ = -1.5x` exactly,
    /// so `[X₋; U₋]` loses a row and many systems explain the data.
    fn partially_excited() -> TrajectoryData {
        let u2 = [0.7, -1.1, 0.4, 0.9, -0.3];
        let mut x = vec![1.0];
        let mut u = Matrix::zeros(2, u2.len());
        for (k, &v) in u2.iter().enumerate() {
            u[(0, k)] = -1.5 * x[k];
            u[(1, k)] = v;
            x.push(2.0 * x[k] + u[(0, k)] + v);
        }
        TrajectoryData::without_disturbance(u, Matrix::from_row_slice(1, x.len(), &x)).unwrap()
    }

    #[test]
    fn feasible_start_is_returned() {
        // Σ a singleton: full rank data, small closed loop
        let sys = LinearSystem::new(dmatrix![0.2, 0.1; 0.0, 0.3], dmatrix![1.0; 0.0], Matrix::zeros(2, 0)).unwrap();
        let d = generate_data(&sys, &[1.0, -1.0], &dmatrix![0.5, -0.3, 0.8, 0.1], &Matrix::zeros(0, 4)).unwrap();
        let theta = sdp_feasibility(&d, &SdpOptions::default(), DEFAULT_STABILITY_TOL).unwrap();
        assert!((d.x_minus() * &theta - Matrix::identity(2, 2)).norm() < 1e-9);
        assert!(matcore::is_schur(&(d.x_plus() * &theta), DEFAULT_STABILITY_TOL).unwrap());
    }

    #[test]
    fn rank_deficient_data() {
        let d = partially_excited();
        assert!(d.identify_unique().is_none());
        let theta = sdp_feasibility(&d, &SdpOptions::default(), DEFAULT_STABILITY_TOL).unwrap();
        let cl = d.x_plus() * &theta;
        assert!(matcore::spectral_radius(&cl).unwrap() < 1.0 - DEFAULT_STABILITY_TOL);
        assert!((d.x_minus() * &theta - Matrix::identity(1, 1)).norm() < 1e-9);
        // every consistent system shares the closed loop A + BK
        let k = d.u_minus() * &theta;
        for sys in d.sample_consistent_systems(20, 3.0, 7).unwrap() {
            let acl = &sys.a + &sys.b * &k;
            assert!((acl - &cl).norm() < 1e-8);
        }
    }

    #[test]
    fn unstabilizable_scalar_fails() {
        let sys = LinearSystem::new(dmatrix![2.0], dmatrix![0.0], Matrix::zeros(1, 0)).unwrap();
        let d = generate_data(&sys, &[1.0], &dmatrix![1.0, -1.0, 0.5], &Matrix::zeros(0, 3)).unwrap();
        let opts = SdpOptions { max_iter: 500, ..SdpOptions::default() };
        let err = sdp_feasibility(&d, &opts, DEFAULT_STABILITY_TOL).unwrap_err();
        assert!(matches!(err, Error::NumericallyInfeasible { .. }));
    }

    #[test]
    fn requires_full_row_rank() {
        let d = TrajectoryData::without_disturbance(dmatrix![1.0], dmatrix![1.0, 2.0; 0.0, 0.0]).unwrap();
        assert!(matches!(
            sdp_feasibility(&d, &SdpOptions::default(), DEFAULT_STABILITY_TOL),
            Err(Error::InvalidArgument(_))
        ));
    }
}
