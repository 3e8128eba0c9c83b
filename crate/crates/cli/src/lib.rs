//! Command implementations behind the `leadsync` binary.
//!
//! Every command writes a human-readable report to the supplied writer and
//! returns an exit code: [`EXIT_OK`], [`EXIT_NEGATIVE`] for a negative
//! decision, [`EXIT_ERROR`] for operational failures.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use leadsync::error::Error;
use leadsync::informativity::{self, Route, Tolerances};
use leadsync::matcore::{self, Matrix};
use leadsync::scenario::{self, read_csv_matrix, ProtocolFile, Scenario};
use leadsync::simloop::{self, DEFAULT_TAIL_FRACTION, DEFAULT_VERDICT_TOL};
use leadsync::synthesis::{self, Diagnostic, FollowerCertificate, Synthesis, SynthesisOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NEGATIVE: i32 = 2;

/// Horizon of the embedded demo simulation.
pub const DEMO_HORIZON: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Flags {
    pub tol_informativity: f64,
    pub tol_stability: f64,
    pub tol_verdict: f64,
    pub tail_fraction: f64,
    pub seed: u64,
    pub f_matrix: Option<PathBuf>,
}

impl Default for Flags {
    fn default() -> Self {
        let tols = Tolerances::default();
        Self {
            tol_informativity: tols.informativity,
            tol_stability: tols.stability,
            tol_verdict: DEFAULT_VERDICT_TOL,
            tail_fraction: DEFAULT_TAIL_FRACTION,
            seed: 1,
            f_matrix: None,
        }
    }
}

impl Flags {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances { informativity: self.tol_informativity, stability: self.tol_stability }
    }

    fn validate(&self) -> Result<(), String> {
        let positive = [
            ("--tol-informativity", self.tol_informativity),
            ("--tol-stability", self.tol_stability),
            ("--tol-verdict", self.tol_verdict),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be a positive number, got {v}"));
            }
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(format!("--tail-fraction must lie in (0, 1], got {}", self.tail_fraction));
        }
        Ok(())
    }
}

pub fn fmt_matrix(m: &Matrix) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| r.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", "))
        .collect();
    format!("[{}]", rows.join("; "))
}

fn route_name(route: Route) -> &'static str {
    match route {
        Route::Identified => "identified",
        Route::Reduced => "reduced",
        Route::Projection => "projection",
    }
}

/// `code` or `code/reason` for per-follower informativity failures.
pub fn diagnostic_tag(d: &Diagnostic) -> String {
    match d {
        Diagnostic::Stabilization { reason, .. } | Diagnostic::Regulation { reason, .. } => {
            format!("{}/{}", d.code(), reason.code())
        }
        _ => d.code().to_string(),
    }
}

fn diagnostic_exit(d: &Diagnostic, out: &mut dyn Write) -> io::Result<i32> {
    if d.is_negative() {
        writeln!(out, "NEGATIVE [{}] {d}", diagnostic_tag(d))?;
        Ok(EXIT_NEGATIVE)
    } else {
        writeln!(out, "error: {d}")?;
        Ok(EXIT_ERROR)
    }
}

fn load_scenario(path: &Path, out: &mut dyn Write) -> io::Result<Option<Scenario>> {
    match Scenario::load(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) => {
            writeln!(out, "error: {e}")?;
            Ok(None)
        }
    }
}

fn describe_certificate(i: usize, c: &FollowerCertificate, out: &mut dyn Write) -> io::Result<()> {
    let s = &c.stabilization;
    let r = &c.regulation;
    writeln!(
        out,
        "follower {}: informative  K = {}  rho(X+ Theta) = {:.4} ({} route, |X- Theta - I| = {:.1e}, |W- Theta| = {:.1e})  \
         Pi = {}  Gamma = {}  (regulation residual {:.1e}, |W- M| = {:.1e})",
        i + 1,
        fmt_matrix(&s.k_gain),
        s.rho,
        route_name(s.route),
        s.x_minus_residual,
        s.w_minus_residual,
        fmt_matrix(&r.pi),
        fmt_matrix(&r.gamma),
        r.residuals.total(),
        r.residuals.disturbance,
    )
}

/// Assumption checks and per-follower certificates.
fn check_report(scenario: &Scenario, flags: &Flags, out: &mut dyn Write) -> io::Result<i32> {
    let mut negative = false;
    match synthesis::check_assumptions(scenario) {
        Ok(()) => writeln!(out, "assumptions: leader spectrum, leader observability and graph ok")?,
        Err(d) if d.is_negative() => {
            negative = true;
            writeln!(out, "assumptions: NEGATIVE [{}] {d}", diagnostic_tag(&d))?;
        }
        Err(d) => return diagnostic_exit(&d, out),
    }
    let results = synthesis::certify_all(scenario, &flags.tolerances());
    let total = results.len();
    let mut informative = 0;
    for (i, result) in results.iter().enumerate() {
        match result {
            Ok(cert) => {
                informative += 1;
                describe_certificate(i, cert, out)?;
            }
            Err(d) if d.is_negative() => {
                negative = true;
                writeln!(out, "follower {}: NEGATIVE [{}] {d}", i + 1, diagnostic_tag(d))?;
            }
            Err(d) => return diagnostic_exit(d, out),
        }
    }
    writeln!(out, "{informative}/{total} followers informative")?;
    Ok(if negative { EXIT_NEGATIVE } else { EXIT_OK })
}

pub fn cmd_check(scenario_path: &Path, flags: &Flags, out: &mut dyn Write) -> io::Result<i32> {
    if let Err(msg) = flags.validate() {
        writeln!(out, "error: {msg}")?;
        return Ok(EXIT_ERROR);
    }
    let Some(scenario) = load_scenario(scenario_path, out)? else {
        return Ok(EXIT_ERROR);
    };
    check_report(&scenario, flags, out)
}

fn synthesis_options(flags: &Flags, out: &mut dyn Write) -> io::Result<Option<SynthesisOptions>> {
    let f_override = match &flags.f_matrix {
        Some(path) => match read_csv_matrix(path) {
            Ok(f) => Some(f),
            Err(e) => {
                writeln!(out, "error: --f-matrix: {e}")?;
                return Ok(None);
            }
        },
        None => None,
    };
    Ok(Some(SynthesisOptions {
        tols: flags.tolerances(),
        seed: flags.seed,
        f_override,
        ..SynthesisOptions::default()
    }))
}

fn describe_synthesis(s: &Synthesis, out: &mut dyn Write) -> io::Result<()> {
    match s.f_scale {
        Some(c) => writeln!(out, "F = {}  (grid scale {c})", fmt_matrix(&s.protocol.f))?,
        None => writeln!(out, "F = {}  (supplied)", fmt_matrix(&s.protocol.f))?,
    }
    let lambdas: Vec<String> = s
        .protocol
        .coupling_eigenvalues
        .iter()
        .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
        .collect();
    writeln!(out, "coupling eigenvalues: {}", lambdas.join(", "))?;
    let radius = synthesis::coupling_radius(&s.protocol.leader.s, &s.protocol.f, &s.protocol.coupling_eigenvalues)
        .unwrap_or(f64::NAN);
    writeln!(out, "max rho(S - lambda F) = {radius:.4}")?;
    for (i, g) in s.protocol.per_follower.iter().enumerate() {
        writeln!(
            out,
            "follower {}: K = {}  Pi = {}  Gamma = {}",
            i + 1,
            fmt_matrix(&g.k_gain),
            fmt_matrix(&g.pi),
            fmt_matrix(&g.gamma)
        )?;
    }
    Ok(())
}

pub fn cmd_synthesize(scenario_path: &Path, out_path: &Path, flags: &Flags, out: &mut dyn Write) -> io::Result<i32> {
    if let Err(msg) = flags.validate() {
        writeln!(out, "error: {msg}")?;
        return Ok(EXIT_ERROR);
    }
    let Some(scenario) = load_scenario(scenario_path, out)? else {
        return Ok(EXIT_ERROR);
    };
    let Some(opts) = synthesis_options(flags, out)? else {
        return Ok(EXIT_ERROR);
    };
    let synthesis = match synthesis::synthesize(&scenario, &opts) {
        Ok(s) => s,
        Err(d) => return diagnostic_exit(&d, out),
    };
    describe_synthesis(&synthesis, out)?;
    if let Err(e) = ProtocolFile::from_synthesis(&synthesis).save(out_path) {
        writeln!(out, "error: {e}")?;
        return Ok(EXIT_ERROR);
    }
    writeln!(out, "protocol written to {}", out_path.display())?;
    Ok(EXIT_OK)
}

/// Simulate with `w ≡ 0` from seeded random initial states and report the
/// tail errors. `trace_path` receives the CSV trace when given.
fn simulate_report(
    scenario: &Scenario,
    protocol: &synthesis::ProtocolGains,
    horizon: usize,
    trace_path: Option<&Path>,
    flags: &Flags,
    out: &mut dyn Write,
) -> io::Result<i32> {
    let Some(models) = scenario.true_models() else {
        writeln!(
            out,
            "error: simulation requires plant models; give every follower a `true_model` in the scenario"
        )?;
        return Ok(EXIT_ERROR);
    };
    let (x0s, v0s) = simloop::random_initial_states(&models, scenario.leader.state_dim(), flags.seed);
    let trace = match simloop::run_closed_loop(protocol, &models, &x0s, &v0s, horizon, None, true) {
        Ok(t) => t,
        Err(Error::Diverged { step }) => {
            writeln!(out, "verdict: false (states left the representable range at step {step})")?;
            return Ok(EXIT_NEGATIVE);
        }
        Err(e) => {
            writeln!(out, "error: {e}")?;
            return Ok(EXIT_ERROR);
        }
    };
    if let Some(path) = trace_path {
        if let Err(e) = simloop::write_trace_csv(&trace, path) {
            writeln!(out, "error: {e}")?;
            return Ok(EXIT_ERROR);
        }
        writeln!(out, "trace written to {}", path.display())?;
    }
    let report = match simloop::error_report(&trace, protocol, flags.tail_fraction) {
        Ok(r) => r,
        Err(e) => {
            writeln!(out, "error: {e}")?;
            return Ok(EXIT_ERROR);
        }
    };
    writeln!(out, "errors over steps {}..={} (sup norm):", report.tail_start, horizon)?;
    for i in 0..report.e_y.len() {
        writeln!(
            out,
            "  follower {}: |y - yr| = {:.3e}  |v - xr| = {:.3e}  |x - Pi v| = {:.3e}",
            i + 1,
            report.e_y[i],
            report.e_v[i],
            report.e_x[i]
        )?;
    }
    let ok = simloop::verdict(&report, flags.tol_verdict);
    writeln!(out, "max error {:.3e}, tolerance {:.1e}", report.max(), flags.tol_verdict)?;
    writeln!(out, "verdict: {ok}")?;
    Ok(if ok { EXIT_OK } else { EXIT_NEGATIVE })
}

pub fn cmd_simulate(
    scenario_path: &Path,
    protocol_path: &Path,
    horizon: usize,
    out_path: &Path,
    flags: &Flags,
    out: &mut dyn Write,
) -> io::Result<i32> {
    if let Err(msg) = flags.validate() {
        writeln!(out, "error: {msg}")?;
        return Ok(EXIT_ERROR);
    }
    let Some(scenario) = load_scenario(scenario_path, out)? else {
        return Ok(EXIT_ERROR);
    };
    let protocol = match ProtocolFile::load(protocol_path).map(|p| p.to_gains(&scenario)) {
        Ok(Ok(p)) => p,
        Ok(Err(e)) => {
            writeln!(out, "error: {}: {e}", protocol_path.display())?;
            return Ok(EXIT_ERROR);
        }
        Err(e) => {
            writeln!(out, "error: {e}")?;
            return Ok(EXIT_ERROR);
        }
    };
    simulate_report(&scenario, &protocol, horizon, Some(out_path), flags, out)
}

/// Reference gains and regulator solutions checked against their defining
/// equations. Returns whether every check passed.
fn verify_reference(scenario: &Scenario, flags: &Flags, out: &mut dyn Write) -> io::Result<bool> {
    let tols = flags.tolerances();
    let gains = scenario::reference_gains();
    let ms = scenario::reference_m();
    let mut ok = true;
    for (i, f) in scenario.followers.iter().enumerate() {
        let kind = i % 3;
        let k = &gains[kind];
        let accepted = informativity::verify_k(&f.data, k, &tols).unwrap_or(false);
        let rho = f
            .true_model
            .as_ref()
            .and_then(|m| matcore::spectral_radius(&(&m.a + &m.b * k)).ok())
            .unwrap_or(f64::NAN);
        let res = informativity::regulation_residuals(&f.data, &f.c, &f.d, &scenario.leader, &ms[kind]);
        let m_res = res.as_ref().map(|r| r.total()).unwrap_or(f64::INFINITY);
        let (x_minus, _) = f.data.partition().expect("validated data");
        let pi = &x_minus * &ms[kind];
        let gamma = f.data.u_minus() * &ms[kind];
        let reg = f
            .true_model
            .as_ref()
            .and_then(|m| informativity::regulator_residuals(&m.triple(), &f.c, &f.d, &pi, &gamma, &scenario.leader).ok())
            .map(|(a, b)| a.max(b))
            .unwrap_or(f64::INFINITY);
        let pass = accepted && m_res <= 1e-12 && reg <= 1e-12;
        ok &= pass;
        writeln!(
            out,
            "follower {}: reference K = {} {} (rho(A + BK) = {:.4}); reference M residual {:.1e}; \
             Pi = {} Gamma = {} regulator residual {:.1e}",
            i + 1,
            fmt_matrix(k),
            if accepted { "accepted" } else { "REJECTED" },
            rho,
            m_res,
            fmt_matrix(&pi),
            fmt_matrix(&gamma),
            reg
        )?;
    }
    Ok(ok)
}

/// Check, reference-value verification, synthesis and simulation on the
/// embedded nine-follower example.
pub fn cmd_demo_paper(flags: &Flags, out: &mut dyn Write) -> io::Result<i32> {
    if let Err(msg) = flags.validate() {
        writeln!(out, "error: {msg}")?;
        return Ok(EXIT_ERROR);
    }
    let scenario = scenario::example_scenario();
    let started = Instant::now();

    writeln!(out, "== informativity ==")?;
    let check = check_report(&scenario, flags, out)?;
    writeln!(out, "== reference gains and regulator solutions ==")?;
    let reference = verify_reference(&scenario, flags, out)?;
    writeln!(out, "== synthesis ==")?;
    let Some(opts) = synthesis_options(flags, out)? else {
        return Ok(EXIT_ERROR);
    };
    let synthesis = match synthesis::synthesize(&scenario, &opts) {
        Ok(s) => s,
        Err(d) => {
            diagnostic_exit(&d, out)?;
            return Ok(EXIT_ERROR);
        }
    };
    describe_synthesis(&synthesis, out)?;
    writeln!(out, "== simulation (horizon {DEMO_HORIZON}, seed {}) ==", flags.seed)?;
    let sim = simulate_report(&scenario, &synthesis.protocol, DEMO_HORIZON, None, flags, out)?;
    writeln!(out, "elapsed {:.2} s", started.elapsed().as_secs_f64())?;

    let all_ok = check == EXIT_OK && reference && sim == EXIT_OK;
    writeln!(out, "demo {}", if all_ok { "passed" } else { "FAILED" })?;
    Ok(if all_ok { EXIT_OK } else { EXIT_ERROR })
}

/// Write the embedded example as a scenario file.
pub fn cmd_export_example(out_path: &Path, out: &mut dyn Write) -> io::Result<i32> {
    match scenario::example_scenario().save(out_path) {
        Ok(()) => {
            writeln!(out, "scenario written to {}", out_path.display())?;
            Ok(EXIT_OK)
        }
        Err(e) => {
            writeln!(out, "error: {e}")?;
            Ok(EXIT_ERROR)
        }
    }
}
