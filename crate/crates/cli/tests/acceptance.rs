//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! appear in `cargo test` output.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use leadsync::datamod::{generate_data, LinearSystem, TrajectoryData, TrueSystem};
use leadsync::informativity::{self, Tolerances};
use leadsync::leaderspec::LeaderSpec;
use leadsync::matcore::{self, Complex, Matrix, DEFAULT_DARE_MAX_ITER, DEFAULT_DARE_TOL};
use leadsync::netgraph::CommGraph;
use leadsync::scenario::{reference_gains, reference_m, example_scenario, FollowerSpec, Scenario};
use leadsync::simloop;
use leadsync::synthesis::{self, SynthesisOptions};
use leadsync_cli::{cmd_check, cmd_synthesize, Flags, EXIT_NEGATIVE, EXIT_OK};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn m(rows: usize, cols: usize, vals: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, vals)
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn run_cmd(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<i32>) -> (i32, String) {
    let mut buf = Vec::new();
    let code = f(&mut buf).expect("in-memory writer");
    (code, String::from_utf8(buf).expect("utf-8 report"))
}

/// Largest root modulus of `λ² − tλ + d`.
fn quadratic_radius(t: f64, d: f64) -> f64 {
    let disc = t * t - 4.0 * d;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((t + s) / 2.0).abs().max(((t - s) / 2.0).abs())
    } else {
        // complex pair with product d
        d.abs().sqrt()
    }
}

fn criterion_1(dir: &Path) -> Outcome {
    let path = dir.join("example.json");
    example_scenario().save(&path).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let (code, report) = run_cmd(|out| cmd_check(&path, &Flags::default(), out));
    let elapsed = started.elapsed().as_secs_f64();
    ensure(code == EXIT_OK, format!("exit {code}\n{report}"))?;
    ensure(report.contains("9/9 followers informative"), "summary line missing")?;
    let lines = report.lines().filter(|l| l.starts_with("follower ") && l.contains(": informative")).count();
    ensure(lines == 9, format!("{lines} follower lines report both certificates"))?;
    ensure(elapsed < 5.0, format!("took {elapsed:.2} s"))?;
    Ok(format!("9/9 informative for stabilization and regulation in {elapsed:.3} s"))
}

fn criterion_2() -> Outcome {
    let s = example_scenario();
    let gains = reference_gains();
    let tols = Tolerances::default();
    for (i, f) in s.followers.iter().enumerate() {
        let ok = informativity::verify_k(&f.data, &gains[i % 3], &tols).map_err(|e| e.to_string())?;
        ensure(ok, format!("K of follower {} rejected", i + 1))?;
    }
    // closed loop induced by the data: X₊Θ with [X₋; U₋]Θ = [I; K]
    let data = &s.followers[0].data;
    let (xm, xp) = data.partition().map_err(|e| e.to_string())?;
    let z = matcore::vstack(&[&xm, data.u_minus()]).map_err(|e| e.to_string())?;
    let target = matcore::vstack(&[&Matrix::identity(2, 2), &gains[0]]).map_err(|e| e.to_string())?;
    let theta = z.lu().solve(&target).ok_or("Z singular")?;
    let cl = xp * theta;
    let rho = quadratic_radius(cl.trace(), cl[(0, 0)] * cl[(1, 1)] - cl[(0, 1)] * cl[(1, 0)]);
    ensure((rho - 0.6503).abs() <= 5e-3, format!("rho = {rho:.6}"))?;
    Ok(format!("reference K accepted on all 9 followers; follower 1 closed-loop radius {rho:.4}"))
}

fn criterion_3() -> Outcome {
    let s = example_scenario();
    let sr = &s.leader.s;
    let r_out = &s.leader.r_out;
    let mut worst: f64 = 0.0;
    for (kind, mm) in reference_m().iter().enumerate() {
        let f = &s.followers[kind];
        let (xm, xp) = f.data.partition().map_err(|e| e.to_string())?;
        worst = worst.max((&xp * mm - &xm * mm * sr).norm());
        worst = worst.max(((&f.c * &xm + &f.d * f.data.u_minus()) * mm - r_out).norm());
    }
    ensure(worst <= 1e-12, format!("reference M residual {worst:e}"))?;
    let derived = [
        (m(2, 2, &[-1.0, 1.0, 0.0, -1.0]), m(1, 2, &[1.0, 0.0])),
        (m(2, 2, &[1.0, 1.0, 0.0, 1.0]), m(1, 2, &[1.0, 0.0])),
    ];
    let mut reg: f64 = 0.0;
    for (kind, (pi, gamma)) in derived.iter().enumerate() {
        let model = s.followers[kind].true_model.as_ref().ok_or("missing model")?;
        reg = reg.max((&model.a * pi + &model.b * gamma - pi * sr).norm());
        reg = reg.max((&model.c * pi + &model.d * gamma - r_out).norm());
    }
    ensure(reg <= 1e-12, format!("regulator residual {reg:e}"))?;
    Ok(format!("M residual {worst:.1e}, regulator residual of Pi/Gamma {reg:.1e}"))
}

fn criterion_4() -> Outcome {
    let s = example_scenario();
    let syn = synthesis::synthesize(&s, &SynthesisOptions::default()).map_err(|d| d.to_string())?;
    let models = s.true_models().ok_or("missing models")?;
    let (x0s, v0s) = simloop::random_initial_states(&models, 2, 1);
    let trace = simloop::run_closed_loop(&syn.protocol, &models, &x0s, &v0s, 300, None, false)
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for y in &trace.outputs {
        for k in 225..=300 {
            worst = worst.max((y[(0, k)] - 1.0).abs());
        }
    }
    let report = simloop::error_report(&trace, &syn.protocol, 0.25).map_err(|e| e.to_string())?;
    ensure(worst <= 1e-3, format!("max |y - 1| over k >= 225 is {worst:e}"))?;
    ensure(simloop::verdict(&report, 1e-3), format!("verdict false, max error {:e}", report.max()))?;
    Ok(format!("max_i sup_(k>=225) |y_i - 1| = {worst:.2e}, all errors <= {:.2e}", report.max()))
}

/// Two states, two inputs, the first input fed back as `K₀x`: the stacked
/// data matrix keeps a one-dimensional left annihilator.
fn rank_deficient_instance(seed: u64) -> (LinearSystem, Matrix, Matrix, TrajectoryData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = uniform(&mut rng, 2, 2);
    let b = uniform(&mut rng, 2, 2);
    let k0 = uniform(&mut rng, 1, 2);
    let c = uniform(&mut rng, 1, 2);
    let d = uniform(&mut rng, 1, 2);
    let tau = 6;
    let mut x = Matrix::from_fn(2, 1, |_, _| rng.gen_range(-1.0..1.0));
    let mut xs = Matrix::zeros(2, tau + 1);
    let mut us = Matrix::zeros(2, tau);
    xs.set_column(0, &x.column(0));
    for k in 0..tau {
        let u = m(2, 1, &[(&k0 * &x)[0], rng.gen_range(-1.0..1.0)]);
        x = &a * &x + &b * &u;
        us.set_column(k, &u.column(0));
        xs.set_column(k + 1, &x.column(0));
    }
    let truth = LinearSystem::new(a, b, Matrix::zeros(2, 0)).expect("shapes");
    let data = TrajectoryData::without_disturbance(us, xs).expect("shapes");
    (truth, c, d, data)
}

fn criterion_5() -> Outcome {
    let leader = example_scenario().leader;
    let tols = Tolerances::default();
    let mut checked = 0;
    let (mut gap_max, mut reg_max): (f64, f64) = (0.0, 0.0);
    for seed in 0..6 {
        let (truth, c, d, data) = rank_deficient_instance(seed);
        let stacked = data.stacked();
        ensure(
            matcore::left_null_space(&stacked, matcore::RANK_RTOL).ncols() >= 1,
            format!("instance {seed} has no annihilator"),
        )?;
        let stab = informativity::check_stabilization(&data, &tols).map_err(|e| format!("instance {seed}: {e}"))?;
        let reg = informativity::check_regulation(&data, &c, &d, &leader, &tols)
            .map_err(|e| format!("instance {seed}: {e}"))?;
        let mut systems = data.sample_consistent_systems(100, 2.0, seed).map_err(|e| e.to_string())?;
        systems.push(truth);
        ensure(systems.len() > 100, "fewer than 100 samples")?;
        for sys in &systems {
            let res = data.consistency_residual(sys).map_err(|e| e.to_string())?;
            ensure(res <= 1e-10, format!("sample off the consistency set ({res:e})"))?;
            gap_max = gap_max.max((&sys.a + &sys.b * &stab.k_gain - &stab.closed_loop).norm());
            let r1 = (&sys.a * &reg.pi + &sys.b * &reg.gamma - &reg.pi * &leader.s).norm();
            let r2 = (&c * &reg.pi + &d * &reg.gamma - &leader.r_out).norm();
            reg_max = reg_max.max(r1).max(r2);
        }
        checked += systems.len();
    }
    ensure(gap_max <= 1e-8, format!("|A + BK - X+ Theta| reached {gap_max:e}"))?;
    ensure(reg_max <= 1e-8, format!("regulator residual reached {reg_max:e}"))?;
    Ok(format!(
        "{checked} consistent systems over 6 instances: |A+BK - X+Theta| <= {gap_max:.1e}, regulator residual <= {reg_max:.1e}"
    ))
}

fn expect_negative(scenario: &Scenario, dir: &Path, name: &str, tag: &str) -> Result<(), String> {
    let path = dir.join(format!("{name}.json"));
    scenario.save(&path).map_err(|e| e.to_string())?;
    let (code, report) = run_cmd(|out| cmd_check(&path, &Flags::default(), out));
    ensure(code == EXIT_NEGATIVE, format!("{name}: check exit {code}\n{report}"))?;
    ensure(report.contains(&format!("[{tag}]")), format!("{name}: no [{tag}] in\n{report}"))?;
    let out_path = dir.join(format!("{name}.protocol.json"));
    let (code, report) = run_cmd(|out| cmd_synthesize(&path, &out_path, &Flags::default(), out));
    ensure(code == EXIT_NEGATIVE, format!("{name}: synthesize exit {code}\n{report}"))?;
    let code_only = tag.split('/').next().unwrap_or(tag);
    ensure(report.contains(&format!("[{code_only}")), format!("{name}: synthesize report\n{report}"))?;
    Ok(())
}

fn criterion_6(dir: &Path) -> Outcome {
    let base = example_scenario();
    let with_follower = |spec: FollowerSpec| {
        let mut followers = base.followers.clone();
        followers[0] = spec;
        Scenario::new(base.leader.clone(), base.graph.clone(), followers).map_err(|e| e.to_string())
    };

    let f0 = &base.followers[0];
    let truncated = f0.data.truncate(1).map_err(|e| e.to_string())?;
    let spec = FollowerSpec::new(f0.c.clone(), f0.d.clone(), truncated, None).map_err(|e| e.to_string())?;
    expect_negative(&with_follower(spec)?, dir, "truncated", "stabilization/rank")?;

    let detached = CommGraph::new(base.graph.weights().clone(), vec![0.0; 9]).map_err(|e| e.to_string())?;
    let s = Scenario::new(base.leader.clone(), detached, base.followers.clone()).map_err(|e| e.to_string())?;
    expect_negative(&s, dir, "detached", "graph")?;

    // x⁺ = diag(2, 0.5)x + [0; 1]u: the unstable mode is unreachable
    let plant = LinearSystem::new(m(2, 2, &[2.0, 0.0, 0.0, 0.5]), m(2, 1, &[0.0, 1.0]), Matrix::zeros(2, 0))
        .map_err(|e| e.to_string())?;
    let data = generate_data(&plant, &[1.0, -1.0], &m(1, 5, &[1.0, -0.5, 0.3, 0.8, -1.2]), &Matrix::zeros(0, 5))
        .map_err(|e| e.to_string())?;
    let spec = FollowerSpec::new(m(1, 2, &[1.0, 1.0]), m(1, 1, &[1.0]), data, None).map_err(|e| e.to_string())?;
    expect_negative(&with_follower(spec)?, dir, "unstabilizable", "stabilization/no-stabilizing-right-inverse")?;

    // C = 0, D = 0: the output equation reads 0 = R
    let spec = FollowerSpec::new(Matrix::zeros(1, 2), Matrix::zeros(1, 1), f0.data.clone(), None)
        .map_err(|e| e.to_string())?;
    expect_negative(&with_follower(spec)?, dir, "blind-output", "regulation/regulation-infeasible")?;
    Ok("truncated -> rank, detached leader -> graph, unreachable mode -> stabilization, zero output map -> regulation; all exit 2".into())
}

/// Three followers with `E ≠ 0` and recorded disturbances, on a chain fed
/// by the leader at follower 1.
fn disturbance_scenario(seed: u64) -> Result<Scenario, String> {
    let leader = LeaderSpec::new(m(2, 2, &[0.0, 1.0, 1.0, 0.0]), m(1, 2, &[1.0, 0.0]), vec![1.0, 1.0])
        .map_err(|e| e.to_string())?;
    let graph = CommGraph::from_edges(3, &[(0, 1), (1, 2)], vec![1.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut followers = Vec::new();
    for _ in 0..3 {
        let a = uniform(&mut rng, 2, 2) * 1.5;
        let b = uniform(&mut rng, 2, 1);
        let e = uniform(&mut rng, 2, 1);
        let c = uniform(&mut rng, 1, 2);
        let d = uniform(&mut rng, 1, 1);
        let u = uniform(&mut rng, 1, 8);
        let w = uniform(&mut rng, 1, 8);
        let x0 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let sys = LinearSystem::new(a.clone(), b.clone(), e.clone()).map_err(|e| e.to_string())?;
        let data = generate_data(&sys, &x0, &u, &w).map_err(|e| e.to_string())?;
        let model = TrueSystem::new(a, b, e, c.clone(), d.clone()).map_err(|e| e.to_string())?;
        followers.push(FollowerSpec::new(c, d, data, Some(model)).map_err(|e| e.to_string())?);
    }
    Scenario::new(leader, graph, followers).map_err(|e| e.to_string())
}

fn criterion_7() -> Outcome {
    let s = disturbance_scenario(7)?;
    for (i, f) in s.followers.iter().enumerate() {
        let model = f.true_model.as_ref().ok_or("missing model")?;
        ensure(model.e.norm() > 0.0 && f.data.w_minus().norm() > 0.0, "disturbance channel is trivial")?;
        let rank = matcore::rank(&f.data.stacked(), matcore::RANK_RTOL);
        ensure(rank == 4, format!("follower {}: stacked data rank {rank} < 4", i + 1))?;
    }
    let syn = synthesis::synthesize(&s, &SynthesisOptions::default()).map_err(|d| d.to_string())?;
    let (mut wt, mut wm): (f64, f64) = (0.0, 0.0);
    for (f, c) in s.followers.iter().zip(&syn.certificates) {
        wt = wt.max((f.data.w_minus() * &c.stabilization.theta).norm());
        wm = wm.max((f.data.w_minus() * &c.regulation.m_sol).norm());
    }
    ensure(wt <= 1e-9 && wm <= 1e-9, format!("|W- Theta| = {wt:e}, |W- M| = {wm:e}"))?;
    let models = s.true_models().ok_or("missing models")?;
    let (x0s, v0s) = simloop::random_initial_states(&models, 2, 1);
    let trace = simloop::run_closed_loop(&syn.protocol, &models, &x0s, &v0s, 300, None, false)
        .map_err(|e| e.to_string())?;
    let report = simloop::error_report(&trace, &syn.protocol, 0.25).map_err(|e| e.to_string())?;
    ensure(simloop::verdict(&report, 1e-3), format!("verdict false, max error {:e}", report.max()))?;
    Ok(format!("|W- Theta| <= {wt:.1e}, |W- M| <= {wm:.1e}, w = 0 verdict true (max error {:.1e})", report.max()))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let a = uniform(&mut rng, 3, 4);
    let x = uniform(&mut rng, 4, 2);
    let b = uniform(&mut rng, 2, 5);
    let lhs = matcore::vec(&(&a * &x * &b));
    let rhs = matcore::kron(&b.transpose(), &a) * matcore::vec(&x);
    let kron_err = (lhs - rhs).norm();
    ensure(kron_err <= 1e-12, format!("vec/kron error {kron_err:e}"))?;

    let dare_residual = |s: &Matrix, q: &Matrix, p: &Matrix| {
        let n = s.nrows();
        let inv = (p + Matrix::identity(n, n)).try_inverse().expect("P + I invertible");
        (p - (s.transpose() * p * s - s.transpose() * p * inv * p * s + q)).norm()
    };
    let one = m(1, 1, &[1.0]);
    let p = matcore::dare_fixed_point(&one, &one, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER).map_err(|e| e.to_string())?;
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    ensure((p[(0, 0)] - golden).abs() <= 1e-12, format!("scalar P = {}", p[(0, 0)]))?;
    let mut dare_worst = dare_residual(&one, &one, &p);
    for s in [m(2, 2, &[0.0, 1.0, 1.0, 0.0]), m(2, 2, &[0.6, -0.8, 0.8, 0.6]), m(2, 2, &[0.5, 1.0, 0.0, 0.3])] {
        let q = Matrix::identity(2, 2);
        let p = matcore::dare_fixed_point(&s, &q, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER).map_err(|e| e.to_string())?;
        dare_worst = dare_worst.max(dare_residual(&s, &q, &p));
    }
    ensure(dare_worst <= 1e-12, format!("DARE residual {dare_worst:e}"))?;

    let mut det_worst: f64 = 0.0;
    for _ in 0..20 {
        let a = uniform(&mut rng, 5, 5);
        let prod = matcore::eigenvalues(&a)
            .map_err(|e| e.to_string())?
            .iter()
            .fold(Complex::new(1.0, 0.0), |acc, z| acc * z);
        let det = a.clone().lu().determinant();
        det_worst = det_worst.max((prod - Complex::new(det, 0.0)).norm());
    }
    ensure(det_worst <= 1e-8, format!("eigenvalue product vs determinant {det_worst:e}"))?;

    let mut embed_worst: f64 = 0.0;
    for _ in 0..20 {
        let a = uniform(&mut rng, 3, 3);
        let lambda = Complex::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let embedded = matcore::complex_scale_embed(&a, lambda).map_err(|e| e.to_string())?;
        let lhs = matcore::spectral_radius(&embedded).map_err(|e| e.to_string())?;
        let rhs = lambda.norm() * matcore::spectral_radius(&a).map_err(|e| e.to_string())?;
        embed_worst = embed_worst.max((lhs - rhs).abs());
    }
    ensure(embed_worst <= 1e-10, format!("embedding radius error {embed_worst:e}"))?;
    Ok(format!(
        "vec/kron {kron_err:.1e}, DARE {dare_worst:.1e}, det {det_worst:.1e}, embedding {embed_worst:.1e}"
    ))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<Criterion> = vec![
        ("informativity decision on the nine-follower example", Box::new(|| criterion_1(dir.path()))),
        ("reference feedback gains", Box::new(criterion_2)),
        ("reference regulator solutions", Box::new(criterion_3)),
        ("closed-loop synchronization", Box::new(criterion_4)),
        ("invariance over consistent systems", Box::new(criterion_5)),
        ("negative controls", Box::new(|| criterion_6(dir.path()))),
        ("disturbance data", Box::new(criterion_7)),
        ("numerics kernel", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("acceptance {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("acceptance {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
