//! Data informativity for stabilization and for output regulation.
//!
//! Stabilization: the data certify a gain `K` that stabilizes every
//! consistent system iff `X₋` has full row rank and some right inverse `Θ`
//! of `X₋` satisfies `W₋Θ = 0` with `X₊Θ` Schur stable; then `K = U₋Θ` and
//! `A + BK = X₊Θ` for every consistent `(A, B, E)`.
//!
//! Regulation: the data certify common regulator-equation solutions iff
//! there is `M` with `X₊M − X₋MS = 0`, `W₋M = 0` and `CX₋M + DU₋M = R`;
//! then `Π = X₋M` and `Γ = U₋M`.

mod sdp;

pub use sdp::{sdp_feasibility, SdpOptions};

use thiserror::Error;

use crate::datamod::{LinearSystem, TrajectoryData};
use crate::error::{dim_err, Error};
use crate::leaderspec::LeaderSpec;
use crate::matcore::{self, Matrix, DEFAULT_STABILITY_TOL, RANK_RTOL};
use crate::synthesis::design_state_feedback;

/// Residual tolerance on the invariants `X₋Θ = I` and `W₋Θ = 0`.
pub const RIGHT_INVERSE_TOL: f64 = 1e-9;
pub const DEFAULT_INFORMATIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Residual bound for linear-equation solvability decisions.
    pub informativity: f64,
    /// Strict Schur margin.
    pub stability: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { informativity: DEFAULT_INFORMATIVITY_TOL, stability: DEFAULT_STABILITY_TOL }
    }
}

/// Which route produced a stabilization certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Unique consistent system, Riccati feedback, then `Θ` from `U₋Θ = K`.
    Identified,
    /// Riccati feedback on the reduced pair over the right-inverse family.
    Reduced,
    /// Right-inverse search by alternating projections.
    Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationCertificate {
    pub theta: Matrix,
    pub k_gain: Matrix,
    pub closed_loop: Matrix,
    pub rho: f64,
    pub route: Route,
    /// `‖X₋Θ − I‖_F`.
    pub x_minus_residual: f64,
    /// `‖W₋Θ‖_F`.
    pub w_minus_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulationResiduals {
    /// `‖X₊M − X₋MS‖_F`
    pub sylvester: f64,
    /// `‖W₋M‖_F`
    pub disturbance: f64,
    /// `‖CX₋M + DU₋M − R‖_F`
    pub output: f64,
}

impl RegulationResiduals {
    pub fn total(&self) -> f64 {
        (self.sylvester.powi(2) + self.disturbance.powi(2) + self.output.powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulationCertificate {
    pub m_sol: Matrix,
    pub pi: Matrix,
    pub gamma: Matrix,
    pub residuals: RegulationResiduals,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NotInformative {
    #[error("X₋ rank {rank} < state dimension {required}")]
    Rank { rank: usize, required: usize },
    #[error("no stabilizing right inverse found: {detail}")]
    NoStabilizingRightInverse { detail: String },
    #[error("regulation equations unsolvable (residual {residual:.3e})")]
    RegulationInfeasible { residual: f64 },
}

impl NotInformative {
    pub fn code(&self) -> &'static str {
        match self {
            NotInformative::Rank { .. } => "rank",
            NotInformative::NoStabilizingRightInverse { .. } => "no-stabilizing-right-inverse",
            NotInformative::RegulationInfeasible { .. } => "regulation-infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InformativityError {
    #[error("not informative: {0}")]
    NotInformative(NotInformative),
    #[error(transparent)]
    Invalid(#[from] Error),
}

impl From<NotInformative> for InformativityError {
    fn from(n: NotInformative) -> Self {
        InformativityError::NotInformative(n)
    }
}

/// `[I_n; K; 0_{q×n}]`, the right-hand side of `[X₋; U₋; W₋] Θ = [I; K; 0]`.
fn right_inverse_target(data: &TrajectoryData, k: &Matrix) -> Matrix {
    let n = data.state_dim();
    matcore::vstack(&[
        &Matrix::identity(n, n),
        k,
        &Matrix::zeros(data.disturbance_dim(), n),
    ])
    .expect("blocks have n columns")
}

/// Build a certificate from a candidate `Θ`, enforcing every invariant.
pub(crate) fn certify_theta(
    data: &TrajectoryData,
    theta: Matrix,
    route: Route,
    stability_tol: f64,
) -> Result<StabilizationCertificate, InformativityError> {
    let n = data.state_dim();
    let x_minus_residual = (data.x_minus() * &theta - Matrix::identity(n, n)).norm();
    let w_minus_residual = (data.w_minus() * &theta).norm();
    let closed_loop = data.x_plus() * &theta;
    let rho = matcore::spectral_radius(&closed_loop)?;
    if x_minus_residual > RIGHT_INVERSE_TOL || w_minus_residual > RIGHT_INVERSE_TOL {
        return Err(NotInformative::NoStabilizingRightInverse {
            detail: format!(
                "right-inverse residuals ‖X₋Θ−I‖={x_minus_residual:.3e}, ‖W₋Θ‖={w_minus_residual:.3e}"
            ),
        }
        .into());
    }
    if rho >= 1.0 - stability_tol {
        return Err(NotInformative::NoStabilizingRightInverse {
            detail: format!("closed loop X₊Θ has spectral radius {rho:.6}"),
        }
        .into());
    }
    Ok(StabilizationCertificate {
        k_gain: data.u_minus() * &theta,
        theta,
        closed_loop,
        rho,
        route,
        x_minus_residual,
        w_minus_residual,
    })
}

/// Decide informativity for stabilization by state feedback and return a
/// right-inverse certificate.
pub fn check_stabilization(
    data: &TrajectoryData,
    tol: &Tolerances,
) -> Result<StabilizationCertificate, InformativityError> {
    if data.tau() == 0 {
        return Err(Error::InvalidArgument("stabilization check needs τ ≥ 1".into()).into());
    }
    let n = data.state_dim();
    let x_minus = data.x_minus();
    let rank = matcore::rank(&x_minus, RANK_RTOL);
    if rank < n {
        return Err(NotInformative::Rank { rank, required: n }.into());
    }

    if let Some(sys) = data.identify_unique() {
        let k = design_state_feedback(&sys.a, &sys.b).map_err(|e| {
            NotInformative::NoStabilizingRightInverse {
                detail: format!("identified system is not stabilizable ({e})"),
            }
        })?;
        let (theta, _) = matcore::lstsq_min_norm(&data.stacked(), &right_inverse_target(data, &k))?;
        return certify_theta(data, theta, Route::Identified, tol.stability);
    }

    if let Some(theta) = reduced_right_inverse(data)? {
        if let Ok(cert) = certify_theta(data, theta, Route::Reduced, tol.stability) {
            return Ok(cert);
        }
    }

    match sdp_feasibility(data, &SdpOptions::default(), tol.stability) {
        Ok(theta) => certify_theta(data, theta, Route::Projection, tol.stability),
        Err(Error::NumericallyInfeasible { iterations }) => {
            Err(NotInformative::NoStabilizingRightInverse {
                detail: format!("alternating projections inconclusive after {iterations} iterations"),
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Right inverses with `W₋Θ = 0` are `Θ₀ + N·Y` with `N` spanning the null
/// space of `[X₋; W₋]`. For every consistent system `X₊N = B·U₋N`, so
/// `X₊Θ = X₊Θ₀ + X₊N V⁺ (V Y)` with `V = U₋N`, and the search for a stable
/// `X₊Θ` is state feedback on `(X₊Θ₀, X₊N V⁺)`. Returns `None` when no right
/// inverse annihilates `W₋` or the reduced pair resists Riccati design.
pub fn reduced_right_inverse(data: &TrajectoryData) -> Result<Option<Matrix>, Error> {
    let n = data.state_dim();
    let xw = matcore::vstack(&[&data.x_minus(), data.w_minus()])?;
    let target = matcore::vstack(&[&Matrix::identity(n, n), &Matrix::zeros(data.disturbance_dim(), n)])?;
    let (theta0, residual) = matcore::lstsq_min_norm(&xw, &target)?;
    if residual > RIGHT_INVERSE_TOL {
        return Ok(None);
    }
    let null = matcore::null_space(&xw, RANK_RTOL);
    let v_pinv = matcore::pinv_rtol(&(data.u_minus() * &null), RANK_RTOL);
    let a_eff = data.x_plus() * &theta0;
    let b_eff = data.x_plus() * &null * &v_pinv;
    match design_state_feedback(&a_eff, &b_eff) {
        Ok(g) => Ok(Some(theta0 + null * v_pinv * g)),
        Err(Error::DesignFailed(_) | Error::NotConverged { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// True iff `k` equals `U₋Θ` for a right inverse `Θ` of `X₋` with `W₋Θ = 0`
/// and `X₊Θ` Schur stable, i.e. `k` stabilizes every consistent system.
pub fn verify_k(data: &TrajectoryData, k: &Matrix, tol: &Tolerances) -> Result<bool, Error> {
    if k.shape() != (data.input_dim(), data.state_dim()) {
        return Err(dim_err(format!(
            "gain is {:?}, expected {}x{}",
            k.shape(),
            data.input_dim(),
            data.state_dim()
        )));
    }
    if data.tau() == 0 {
        return Ok(false);
    }
    let (theta, residual) = matcore::lstsq_min_norm(&data.stacked(), &right_inverse_target(data, k))?;
    if residual > tol.informativity {
        return Ok(false);
    }
    matcore::is_schur(&(data.x_plus() * theta), tol.stability)
}

fn check_output_map(data: &TrajectoryData, c: &Matrix, d: &Matrix, leader: &LeaderSpec) -> Result<(), Error> {
    let p = leader.output_dim();
    if c.shape() != (p, data.state_dim()) || d.shape() != (p, data.input_dim()) {
        return Err(dim_err(format!(
            "output map C {:?}, D {:?} does not fit p={p}, n={}, m={}",
            c.shape(),
            d.shape(),
            data.state_dim(),
            data.input_dim()
        )));
    }
    Ok(())
}

/// Solve the data-based regulator equations for `M` (minimum-norm) and
/// return `(M, Π, Γ)` when they are solvable within `tol`.
pub fn check_regulation(
    data: &TrajectoryData,
    c: &Matrix,
    d: &Matrix,
    leader: &LeaderSpec,
    tol: &Tolerances,
) -> Result<RegulationCertificate, InformativityError> {
    check_output_map(data, c, d, leader)?;
    let tau = data.tau();
    if tau == 0 {
        return Err(Error::InvalidArgument("regulation check needs τ ≥ 1".into()).into());
    }
    let r = leader.state_dim();
    let ir = Matrix::identity(r, r);
    let (x_minus, x_plus) = data.partition()?;
    let out_map = c * &x_minus + d * data.u_minus();

    let sylvester = matcore::kron(&ir, &x_plus) - matcore::kron(&leader.s.transpose(), &x_minus);
    let disturbance = matcore::kron(&ir, data.w_minus());
    let output = matcore::kron(&ir, &out_map);
    let lhs = matcore::vstack(&[&sylvester, &disturbance, &output])?;
    let rhs = matcore::vstack(&[
        &Matrix::zeros(sylvester.nrows() + disturbance.nrows(), 1),
        &matcore::vec(&leader.r_out),
    ])?;
    let (vec_m, _) = matcore::lstsq_min_norm(&lhs, &rhs)?;
    let m_sol = matcore::unvec(&vec_m, tau, r)?;

    let residuals = regulation_residuals(data, c, d, leader, &m_sol)?;
    if residuals.total() > tol.informativity {
        return Err(NotInformative::RegulationInfeasible { residual: residuals.total() }.into());
    }
    Ok(RegulationCertificate {
        pi: &x_minus * &m_sol,
        gamma: data.u_minus() * &m_sol,
        m_sol,
        residuals,
    })
}

/// Residuals of the data-based regulator equations at a given `M`.
pub fn regulation_residuals(
    data: &TrajectoryData,
    c: &Matrix,
    d: &Matrix,
    leader: &LeaderSpec,
    m: &Matrix,
) -> Result<RegulationResiduals, Error> {
    check_output_map(data, c, d, leader)?;
    if m.shape() != (data.tau(), leader.state_dim()) {
        return Err(dim_err(format!(
            "M is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            data.tau(),
            leader.state_dim()
        )));
    }
    let (x_minus, x_plus) = data.partition()?;
    let out_map = c * &x_minus + d * data.u_minus();
    Ok(RegulationResiduals {
        sylvester: (&x_plus * m - &x_minus * m * &leader.s).norm(),
        disturbance: (data.w_minus() * m).norm(),
        output: (&out_map * m - &leader.r_out).norm(),
    })
}

/// Residuals `(‖AΠ + BΓ − ΠS‖_F, ‖CΠ + DΓ − R‖_F)` of the model-based
/// regulator equations.
pub fn regulator_residuals(
    sys: &LinearSystem,
    c: &Matrix,
    d: &Matrix,
    pi: &Matrix,
    gamma: &Matrix,
    leader: &LeaderSpec,
) -> Result<(f64, f64), Error> {
    let (n, m, r) = (sys.a.nrows(), sys.b.ncols(), leader.state_dim());
    if pi.shape() != (n, r)
        || gamma.shape() != (m, r)
        || c.shape() != (leader.output_dim(), n)
        || d.shape() != (leader.output_dim(), m)
    {
        return Err(dim_err("regulator equation operands have inconsistent shapes"));
    }
    let first = (&sys.a * pi + &sys.b * gamma - pi * &leader.s).norm();
    let second = (c * pi + d * gamma - &leader.r_out).norm();
    Ok((first, second))
}

/// Check a regulation certificate against explicit system models.
pub fn verify_regulation_on_models(
    cert: &RegulationCertificate,
    systems: &[LinearSystem],
    c: &Matrix,
    d: &Matrix,
    leader: &LeaderSpec,
    tol: f64,
) -> Result<bool, Error> {
    for sys in systems {
        let (first, second) = regulator_residuals(sys, c, d, &cert.pi, &cert.gamma, leader)?;
        if first > tol || second > tol {
            return Ok(false);
        }
    }
    Ok(true)
}
