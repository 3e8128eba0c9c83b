//! Protocol assembly: per-follower gains from data certificates and the
//! shared coupling gain `F` with `S − λ_i F` Schur for every coupling
//! eigenvalue `λ_i`.

use rayon::prelude::*;
use thiserror::Error;

use crate::error::{dim_err, Error, Result};
use crate::informativity::{
    self, InformativityError, NotInformative, RegulationCertificate, StabilizationCertificate, Tolerances,
};
use crate::leaderspec::{LeaderSpec, DEFAULT_ASSUMPTION_TOL};
use crate::matcore::{self, Complex, Matrix, DEFAULT_DARE_MAX_ITER, DEFAULT_DARE_TOL};
use crate::netgraph::{CommGraph, GraphFailure};
use crate::scenario::{FollowerSpec, Scenario};

/// Scalings of `F₀` tried by [`design_f`], in order.
pub const F_SCALE_GRID: [f64; 20] = [
    1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0,
];

/// Riccati state feedback `K = −(BᵀPB + I)⁻¹BᵀPA` with `Q = I`, `R = I`.
pub fn design_state_feedback(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    matcore::ensure_square(a)?;
    if b.nrows() != a.nrows() {
        return Err(dim_err(format!("B has {} rows, A is {}x{}", b.nrows(), a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    let m = b.ncols();
    let p = matcore::dare_iterate_scaled(
        a,
        b,
        &Matrix::identity(n, n),
        &Matrix::identity(m, m),
        DEFAULT_DARE_TOL,
        DEFAULT_DARE_MAX_ITER,
    )
    .map_err(|e| match e {
        Error::NotConverged { .. } => Error::DesignFailed(format!("{e}; the pair looks unstabilizable")),
        other => other,
    })?;
    let btp = b.transpose() * &p;
    let gram = &btp * b + Matrix::identity(m, m);
    let k = -gram
        .cholesky()
        .ok_or_else(|| Error::DesignFailed("BᵀPB + I is not positive definite".into()))?
        .solve(&(&btp * a));
    let rho = matcore::spectral_radius(&(a + b * &k))?;
    if rho >= 1.0 {
        return Err(Error::DesignFailed(format!("Riccati gain leaves spectral radius {rho:.6}")));
    }
    Ok(k)
}

/// Largest spectral radius of the real embeddings of `S − λF` over `lambdas`.
pub fn coupling_radius(s: &Matrix, f: &Matrix, lambdas: &[Complex]) -> Result<f64> {
    if f.shape() != s.shape() {
        return Err(dim_err(format!("F is {:?}, S is {:?}", f.shape(), s.shape())));
    }
    matcore::ensure_finite(f, "F")?;
    let s_embed = matcore::complex_embed(s, &Matrix::zeros(s.nrows(), s.ncols()))?;
    let mut worst: f64 = 0.0;
    for &lambda in lambdas {
        let m = &s_embed - matcore::complex_scale_embed(f, lambda)?;
        worst = worst.max(matcore::spectral_radius(&m)?);
    }
    Ok(worst)
}

/// How [`design_f_with`] picks among stabilizing grid scalings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleRule {
    /// First stabilizing scaling in grid order.
    #[default]
    FirstStable,
    /// Stabilizing scaling with the smallest worst-case radius (earliest on ties).
    FastestDecay,
}

/// `F = c·F₀` with `F₀ = (P + I)⁻¹PS`, `P` the Riccati fixed point for `S`;
/// returns `(F, c)`.
pub fn design_f(leader: &LeaderSpec, lambdas: &[Complex], stability_tol: f64) -> Result<(Matrix, f64)> {
    design_f_with(leader, lambdas, stability_tol, ScaleRule::FirstStable)
}

pub fn design_f_with(
    leader: &LeaderSpec,
    lambdas: &[Complex],
    stability_tol: f64,
    rule: ScaleRule,
) -> Result<(Matrix, f64)> {
    let r = leader.state_dim();
    let id = Matrix::identity(r, r);
    let p = matcore::dare_fixed_point(&leader.s, &id, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER)?;
    let f0 = (&p + &id)
        .cholesky()
        .ok_or_else(|| Error::DesignFailed("P + I is not positive definite".into()))?
        .solve(&(&p * &leader.s));
    let mut best: Option<(f64, f64)> = None;
    for &c in &F_SCALE_GRID {
        let radius = coupling_radius(&leader.s, &(&f0 * c), lambdas)?;
        if radius >= 1.0 - stability_tol {
            continue;
        }
        match rule {
            ScaleRule::FirstStable => return Ok((&f0 * c, c)),
            ScaleRule::FastestDecay => {
                if best.is_none_or(|(_, b)| radius < b) {
                    best = Some((c, radius));
                }
            }
        }
    }
    match best {
        Some((c, _)) => Ok((&f0 * c, c)),
        None => Err(Error::DesignFailed(
            "no grid scaling of the Riccati coupling gain stabilizes every S − λF".into(),
        )),
    }
}

/// Deployable gains of one follower.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerGains {
    pub k_gain: Matrix,
    pub pi: Matrix,
    pub gamma: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolGains {
    pub f: Matrix,
    pub per_follower: Vec<FollowerGains>,
    pub coupling_eigenvalues: Vec<Complex>,
    pub graph: CommGraph,
    pub leader: LeaderSpec,
}

impl ProtocolGains {
    /// Check shapes and `S − λ_i F` stability for the stored eigenvalues.
    pub fn validate(&self, stability_tol: f64) -> Result<()> {
        let r = self.leader.state_dim();
        if self.per_follower.len() != self.graph.n() {
            return Err(dim_err(format!(
                "{} follower gain sets for {} graph nodes",
                self.per_follower.len(),
                self.graph.n()
            )));
        }
        for (i, g) in self.per_follower.iter().enumerate() {
            let (m, n) = g.k_gain.shape();
            if g.pi.shape() != (n, r) || g.gamma.shape() != (m, r) {
                return Err(dim_err(format!("follower {}: K, Π, Γ shapes disagree", i + 1)));
            }
        }
        let radius = coupling_radius(&self.leader.s, &self.f, &self.coupling_eigenvalues)?;
        if radius >= 1.0 - stability_tol {
            return Err(Error::DesignFailed(format!(
                "S − λF has spectral radius {radius:.6} for some coupling eigenvalue"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerCertificate {
    pub stabilization: StabilizationCertificate,
    pub regulation: RegulationCertificate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub protocol: ProtocolGains,
    pub certificates: Vec<FollowerCertificate>,
    /// Grid scaling used for `F`; `None` for a user-supplied `F`.
    pub f_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub tols: Tolerances,
    pub seed: u64,
    /// Consistent systems sampled per follower to audit the certificates.
    pub audit_samples: usize,
    pub f_override: Option<Matrix>,
    pub scale_rule: ScaleRule,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            tols: Tolerances::default(),
            seed: 0,
            audit_samples: 20,
            f_override: None,
            scale_rule: ScaleRule::FastestDecay,
        }
    }
}

/// Structured reason for a negative or failed synthesis. Follower indices
/// are 0-based here and printed 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Diagnostic {
    #[error("leader: S must have simple eigenvalues on the unit circle (eigenvalue moduli {moduli:?})")]
    LeaderSpectrum { moduli: Vec<f64> },
    #[error("leader: (S, R) is not observable")]
    LeaderObservability,
    #[error("graph: {0}")]
    Graph(GraphFailure),
    #[error("stabilization: {} (follower {})", stabilization_text(.reason), .follower + 1)]
    Stabilization { follower: usize, reason: NotInformative },
    #[error("regulation: {reason} (follower {})", .follower + 1)]
    Regulation { follower: usize, reason: NotInformative },
    #[error("coupling gain: {0}")]
    CouplingGain(String),
    #[error("audit: {detail} (follower {})", .follower + 1)]
    Audit { follower: usize, detail: String },
    #[error("invalid input{}: {error}", follower_suffix(*.follower))]
    Invalid { follower: Option<usize>, error: Error },
}

fn stabilization_text(reason: &NotInformative) -> String {
    match reason {
        NotInformative::Rank { rank, required } => format!("X₋ rank {rank} < {required}"),
        other => other.to_string(),
    }
}

fn follower_suffix(follower: Option<usize>) -> String {
    follower.map(|i| format!(" (follower {})", i + 1)).unwrap_or_default()
}

impl Diagnostic {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Diagnostic::LeaderSpectrum { .. } => "leader-spectrum",
            Diagnostic::LeaderObservability => "leader-observability",
            Diagnostic::Graph(_) => "graph",
            Diagnostic::Stabilization { .. } => "stabilization",
            Diagnostic::Regulation { .. } => "regulation",
            Diagnostic::CouplingGain(_) => "coupling-gain",
            Diagnostic::Audit { .. } => "audit",
            Diagnostic::Invalid { .. } => "invalid",
        }
    }

    /// True for negative decisions, false for operational errors.
    pub fn is_negative(&self) -> bool {
        !matches!(self, Diagnostic::Invalid { .. })
    }

    fn invalid(follower: Option<usize>, error: Error) -> Self {
        Diagnostic::Invalid { follower, error }
    }
}

/// Leader and graph assumptions.
pub fn check_assumptions(scenario: &Scenario) -> std::result::Result<(), Diagnostic> {
    let leader = &scenario.leader;
    let report = leader
        .check_assumption_s(DEFAULT_ASSUMPTION_TOL)
        .map_err(|e| Diagnostic::invalid(None, e))?;
    if !report.holds() {
        return Err(Diagnostic::LeaderSpectrum {
            moduli: report.eigenvalues.iter().map(|z| z.norm()).collect(),
        });
    }
    if !leader.check_observability() {
        return Err(Diagnostic::LeaderObservability);
    }
    if let Some(failure) = scenario.graph.check_assumption().failure() {
        return Err(Diagnostic::Graph(failure));
    }
    Ok(())
}

/// Stabilization then regulation certificate for one follower.
pub fn certify_follower(
    index: usize,
    follower: &FollowerSpec,
    leader: &LeaderSpec,
    tols: &Tolerances,
) -> std::result::Result<FollowerCertificate, Diagnostic> {
    let lift = |e: InformativityError, regulation: bool| match e {
        InformativityError::Invalid(error) => Diagnostic::invalid(Some(index), error),
        InformativityError::NotInformative(reason) if regulation => {
            Diagnostic::Regulation { follower: index, reason }
        }
        InformativityError::NotInformative(reason) => Diagnostic::Stabilization { follower: index, reason },
    };
    let stabilization = informativity::check_stabilization(&follower.data, tols).map_err(|e| lift(e, false))?;
    let regulation = informativity::check_regulation(&follower.data, &follower.c, &follower.d, leader, tols)
        .map_err(|e| lift(e, true))?;
    Ok(FollowerCertificate { stabilization, regulation })
}

/// Certificates for every follower, computed in parallel; the result order
/// follows the follower order.
pub fn certify_all(
    scenario: &Scenario,
    tols: &Tolerances,
) -> Vec<std::result::Result<FollowerCertificate, Diagnostic>> {
    scenario
        .followers
        .par_iter()
        .enumerate()
        .map(|(i, f)| certify_follower(i, f, &scenario.leader, tols))
        .collect()
}

/// Re-verify one follower's certificates against the data and a sample of
/// consistent systems.
fn audit_follower(
    index: usize,
    follower: &FollowerSpec,
    cert: &FollowerCertificate,
    leader: &LeaderSpec,
    opts: &SynthesisOptions,
) -> std::result::Result<(), Diagnostic> {
    let invalid = |e| Diagnostic::invalid(Some(index), e);
    let k = &cert.stabilization.k_gain;
    if !informativity::verify_k(&follower.data, k, &opts.tols).map_err(invalid)? {
        return Err(Diagnostic::Audit { follower: index, detail: "K fails its data check".into() });
    }
    if opts.audit_samples == 0 {
        return Ok(());
    }
    let systems = follower
        .data
        .sample_consistent_systems(opts.audit_samples, 1.0, opts.seed.wrapping_add(index as u64))
        .map_err(invalid)?;
    let ok = informativity::verify_regulation_on_models(
        &cert.regulation,
        &systems,
        &follower.c,
        &follower.d,
        leader,
        opts.tols.informativity,
    )
    .map_err(invalid)?;
    if !ok {
        return Err(Diagnostic::Audit {
            follower: index,
            detail: "Π, Γ violate the regulator equations on a consistent system".into(),
        });
    }
    for sys in &systems {
        let gap = (&sys.a + &sys.b * k - &cert.stabilization.closed_loop).norm();
        if gap > opts.tols.informativity {
            return Err(Diagnostic::Audit {
                follower: index,
                detail: format!("A + BK differs from X₊Θ by {gap:.3e} on a consistent system"),
            });
        }
    }
    Ok(())
}

/// Full pipeline: assumptions, per-follower certificates, coupling gain,
/// audit. Never partially succeeds.
pub fn synthesize(scenario: &Scenario, opts: &SynthesisOptions) -> std::result::Result<Synthesis, Diagnostic> {
    check_assumptions(scenario)?;
    let certificates = certify_all(scenario, &opts.tols).into_iter().collect::<std::result::Result<Vec<_>, _>>()?;

    let lambdas = scenario
        .graph
        .coupling_eigenvalues()
        .map_err(|e| Diagnostic::invalid(None, e))?;
    let (f, f_scale) = match &opts.f_override {
        Some(f) => {
            let radius = coupling_radius(&scenario.leader.s, f, &lambdas).map_err(|e| Diagnostic::invalid(None, e))?;
            if radius >= 1.0 - opts.tols.stability {
                return Err(Diagnostic::CouplingGain(format!(
                    "supplied F leaves S − λF with spectral radius {radius:.6}"
                )));
            }
            (f.clone(), None)
        }
        None => {
            let (f, c) = design_f_with(&scenario.leader, &lambdas, opts.tols.stability, opts.scale_rule)
                .map_err(|e| match e {
                    Error::DesignFailed(msg) => Diagnostic::CouplingGain(msg),
                    other => Diagnostic::invalid(None, other),
                })?;
            (f, Some(c))
        }
    };

    scenario
        .followers
        .par_iter()
        .zip(certificates.par_iter())
        .enumerate()
        .map(|(i, (f, c))| audit_follower(i, f, c, &scenario.leader, opts))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<std::result::Result<Vec<()>, _>>()?;

    let per_follower = certificates
        .iter()
        .map(|c| FollowerGains {
            k_gain: c.stabilization.k_gain.clone(),
            pi: c.regulation.pi.clone(),
            gamma: c.regulation.gamma.clone(),
        })
        .collect();
    Ok(Synthesis {
        protocol: ProtocolGains {
            f,
            per_follower,
            coupling_eigenvalues: lambdas,
            graph: scenario.graph.clone(),
            leader: scenario.leader.clone(),
        },
        certificates,
        f_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::tests::ring_with_chords;
    use crate::scenario::example_scenario;
    use nalgebra::dmatrix;

    fn swap_leader() -> LeaderSpec {
        LeaderSpec::new(dmatrix![0.0, 1.0; 1.0, 0.0], dmatrix![1.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn state_feedback_examples() {
        let k = design_state_feedback(&dmatrix![0.5, 0.0; 0.0, 0.2], &Matrix::zeros(2, 1)).unwrap();
        assert_eq!(k, Matrix::zeros(1, 2));

        let a = dmatrix![0.0, 1.0; 1.0, 1.0];
        let b = dmatrix![1.0; 0.0];
        let k = design_state_feedback(&a, &b).unwrap();
        assert!(matcore::spectral_radius(&(&a + &b * &k)).unwrap() < 1.0);

        assert!(matches!(
            design_state_feedback(&dmatrix![2.0], &dmatrix![0.0]),
            Err(Error::DesignFailed(_))
        ));
        assert!(design_state_feedback(&dmatrix![2.0], &dmatrix![1.0; 0.0]).is_err());
    }

    #[test]
    fn scalar_feedback_matches_closed_form() {
        // scalar DARE p = a²p − a²p²/(p+1) + 1, k = −ap/(p+1)
        let (a, b) = (1.5_f64, 1.0_f64);
        let mut p = 1.0;
        for _ in 0..500 {
            p = a * a * p - (a * p * b).powi(2) / (b * b * p + 1.0) + 1.0;
        }
        let k = design_state_feedback(&dmatrix![a], &dmatrix![b]).unwrap();
        assert!((k[(0, 0)] + a * b * p / (b * b * p + 1.0)).abs() < 1e-10);
    }

    #[test]
    fn coupling_gain_examples() {
        let leader = swap_leader();
        let one = [Complex::new(1.0, 0.0)];
        let (f, c) = design_f(&leader, &one, 1e-9).unwrap();
        assert_eq!(c, 1.0);
        assert!(matcore::is_schur(&(&leader.s - &f), 1e-9).unwrap());

        let zero = [Complex::new(0.0, 0.0)];
        assert!(matches!(design_f(&leader, &zero, 1e-9), Err(Error::DesignFailed(_))));

        let lambdas = ring_with_chords().coupling_eigenvalues().unwrap();
        for rule in [ScaleRule::FirstStable, ScaleRule::FastestDecay] {
            let (f, _) = design_f_with(&leader, &lambdas, 1e-9, rule).unwrap();
            for &l in &lambdas {
                let m = matcore::complex_embed(&leader.s, &Matrix::zeros(2, 2)).unwrap()
                    - matcore::complex_scale_embed(&f, l).unwrap();
                assert!(matcore::is_schur(&m, 1e-9).unwrap());
            }
        }
    }

    #[test]
    fn fastest_rule_never_slower() {
        let leader = swap_leader();
        let lambdas = ring_with_chords().coupling_eigenvalues().unwrap();
        let (f1, _) = design_f_with(&leader, &lambdas, 1e-9, ScaleRule::FirstStable).unwrap();
        let (f2, _) = design_f_with(&leader, &lambdas, 1e-9, ScaleRule::FastestDecay).unwrap();
        let r1 = coupling_radius(&leader.s, &f1, &lambdas).unwrap();
        let r2 = coupling_radius(&leader.s, &f2, &lambdas).unwrap();
        assert!(r2 <= r1);
    }

    #[test]
    fn example_scenario_synthesizes() {
        let out = synthesize(&example_scenario(), &SynthesisOptions::default()).unwrap();
        assert_eq!(out.protocol.per_follower.len(), 9);
        out.protocol.validate(1e-9).unwrap();
        let scenario = example_scenario();
        for (spec, gains) in scenario.followers.iter().zip(&out.protocol.per_follower) {
            assert!(informativity::verify_k(&spec.data, &gains.k_gain, &Tolerances::default()).unwrap());
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let opts = SynthesisOptions { seed: 11, ..SynthesisOptions::default() };
        let a = synthesize(&example_scenario(), &opts).unwrap();
        let b = synthesize(&example_scenario(), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_follower_fails_rank() {
        let mut scenario = example_scenario();
        scenario.followers[0].data = scenario.followers[0].data.truncate(1).unwrap();
        let err = synthesize(&scenario, &SynthesisOptions::default()).unwrap_err();
        assert_eq!(err.code(), "stabilization");
        assert!(err.to_string().contains("stabilization: X₋ rank"), "{err}");
        assert!(err.to_string().contains("follower 1"));
    }

    #[test]
    fn detached_leader() {
        let mut scenario = example_scenario();
        scenario.graph = CommGraph::new(scenario.graph.weights().clone(), vec![0.0; 9]).unwrap();
        let err = synthesize(&scenario, &SynthesisOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "graph: leader not connected to a root");
    }

    #[test]
    fn bad_override_is_rejected() {
        let opts = SynthesisOptions { f_override: Some(Matrix::zeros(2, 2)), ..SynthesisOptions::default() };
        let err = synthesize(&example_scenario(), &opts).unwrap_err();
        assert_eq!(err.code(), "coupling-gain");
    }

    #[test]
    fn unobservable_leader() {
        let mut scenario = example_scenario();
        scenario.leader = LeaderSpec::new(Matrix::identity(2, 2) * -1.0, dmatrix![1.0, 0.0], vec![1.0, 1.0]).unwrap();
        // repeated eigenvalue −1 trips the spectrum check first
        assert_eq!(synthesize(&scenario, &SynthesisOptions::default()).unwrap_err().code(), "leader-spectrum");
        scenario.leader = LeaderSpec::new(dmatrix![1.0, 0.0; 0.0, -1.0], dmatrix![1.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(
            synthesize(&scenario, &SynthesisOptions::default()).unwrap_err(),
            Diagnostic::LeaderObservability
        );
    }

    #[test]
    fn regulation_diagnostic_names_follower() {
        let mut scenario = example_scenario();
        // output map that cannot reproduce R
        scenario.followers[4].c = dmatrix![0.0, 0.0];
        scenario.followers[4].d = dmatrix![0.0];
        let err = synthesize(&scenario, &SynthesisOptions::default()).unwrap_err();
        assert_eq!(err.code(), "regulation");
        assert!(err.to_string().ends_with("(follower 5)"));
    }
}
