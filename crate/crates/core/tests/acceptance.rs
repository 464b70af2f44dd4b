//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use vectorhost::coeffs::CoefficientSet;
use vectorhost::config::{Config, Scenario};
use vectorhost::diagnostics::{norm, NormKind};
use vectorhost::diffusion::{DiffusionOperator, ImplicitStep};
use vectorhost::dynamics::{run_with, SimState, StepReport};
use vectorhost::expr::{Bindings, EvalError, Expr};
use vectorhost::grid::{Grid, Rect, ScalarField, Support};
use vectorhost::oracle::{logistic_exact, ode_reduction, represent_i, v_tau_first_interval, OdeParams};
use vectorhost::steady::{logistic_step, solve_rho_star, u_star_lower_bound};
use vectorhost::Result;

const DEMO: &str = include_str!("../configs/demo.toml");

fn lab_toml(sigma2: &str) -> String {
    format!(
        r#"
mode = "lab"

[domain]
Lx = 1.0
Ly = 1.0
nx = 5
ny = 5

[subdomains]
star = [0.2, 0.8, 0.2, 0.8]
starstar = [0.0, 0.4, 0.0, 0.4]

[coefficients]
d1 = "0.1*(1 + x)"
d2 = "0.3 + 0.1*y"
beta = "2 + x"
m = "1"
sigma1 = "3"
sigma2 = "{sigma2}"

[age]
lambda = "1 + a"
tau = 0.2
a_max = 0.4

[initial]
u0 = "1 + x*y"
phi0 = "1 + 0.5*y"
z0 = "1 + a"
k = "1"

[time]
dt = 0.05
t_end = 1.0
"#
    )
}

fn homogeneous_toml(dt: f64, diffusion: f64) -> String {
    format!(
        r#"
mode = "lab"

[domain]
Lx = 1.0
Ly = 1.0
nx = 8
ny = 8

[subdomains]
star = [0.125, 0.875, 0.125, 0.875]
starstar = [0.375, 0.625, 0.375, 0.625]

[coefficients]
d1 = {diffusion}
d2 = {diffusion}
beta = 2
m = 1
sigma1 = 3
sigma2 = 2

[age]
lambda = "1 + a"
tau = 0.2
a_max = 2.0

[initial]
u0 = 1
phi0 = 0.5
z0 = "0.05*exp(-a)"
k = 1

[time]
dt = {dt}
t_end = 2.0
"#
    )
}

fn scenario(text: &str) -> Result<Scenario> {
    Scenario::from_config(&Config::from_toml(text)?)
}

fn demo(t_end: f64) -> Result<Scenario> {
    let mut config = Config::from_toml(DEMO)?;
    config.time.t_end = t_end;
    Scenario::from_config(&config)
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn gap(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a.values().iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let s = sup(b.values());
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b != 0.0 {
        (a - b).abs() / b.abs()
    } else {
        (a - b).abs()
    }
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

/// Worst `‖φ + ψ − ρ‖∞ / ‖ρ‖∞` seen by any scenario in the suite.
#[derive(Default)]
struct IdentityWatch {
    worst: f64,
    steps: usize,
}

impl IdentityWatch {
    fn see(&mut self, state: &SimState, report: &StepReport) {
        let scale = sup(state.rho.values()).max(f64::MIN_POSITIVE);
        self.worst = self.worst.max(report.identity_defect / scale);
        self.steps += 1;
    }
}

fn total(grid: &Grid, s: &SimState) -> f64 {
    grid.cell_area() * (s.u.values().iter().sum::<f64>() + s.v.values().iter().sum::<f64>())
}

fn criterion_1(watch: &mut IdentityWatch) -> Result<Outcome> {
    let sc = scenario(&lab_toml("2"))?;
    let model = sc.model()?;
    let seed = sc.seed()?;
    let mut state = sc.initial_state(&model)?;
    let mut states = vec![state.clone()];
    let mut births = Vec::new();
    for _ in 0..sc.steps {
        let r = model.step_in_place(&mut state)?;
        watch.see(&state, &r);
        births.push(state.i.cohort(0).clone());
        states.push(state.clone());
    }
    let mut worst: f64 = 0.0;
    for (n, s) in states.iter().enumerate() {
        for j in 0..model.cohorts() {
            let oracle = represent_i(model.cohort_step(), model.survival(), &seed, &births, n, j)?;
            worst = worst.max(gap(s.i.cohort(j), &oracle));
        }
    }
    outcome(
        worst <= 1e-12 && model.cohorts() == 8 && sc.steps == 20,
        format!("{} cohorts x {} steps, max relative gap {worst:.3e}", model.cohorts(), sc.steps + 1),
    )
}

fn v_tau_series(sc: &Scenario, steps: usize, watch: &mut IdentityWatch) -> Result<Vec<ScalarField>> {
    let model = sc.model()?;
    let mut state = sc.initial_state(&model)?;
    let mut out = vec![state.v_tau.clone()];
    for _ in 0..steps {
        let r = model.step_in_place(&mut state)?;
        watch.see(&state, &r);
        out.push(state.v_tau.clone());
    }
    Ok(out)
}

fn criterion_2(watch: &mut IdentityWatch) -> Result<Outcome> {
    let sc = scenario(&lab_toml("2"))?;
    let boosted = scenario(&lab_toml("20"))?;
    let model = sc.model()?;
    let seed = sc.seed()?;
    let window = sc.tau_face;
    let base = v_tau_series(&sc, window, watch)?;
    let other = v_tau_series(&boosted, window, watch)?;
    let mut oracle_gap: f64 = 0.0;
    let mut sigma_gap: f64 = 0.0;
    for n in 0..=window {
        let oracle = v_tau_first_interval(&seed, model.cohort_step(), model.survival(), window, n)?;
        oracle_gap = oracle_gap.max(gap(&base[n], &oracle));
        sigma_gap = sigma_gap.max(gap(&other[n], &base[n]));
    }
    outcome(
        window == 4 && oracle_gap <= 1e-12 && sigma_gap <= 1e-12,
        format!("tau = {window} steps; oracle gap {oracle_gap:.3e}; 10x sigma2 gap {sigma_gap:.3e}"),
    )
}

/// Criteria 3 and 4 share one run of the demo scenario to t = 50.
fn criteria_3_4(watch: &mut IdentityWatch) -> Result<(Outcome, Outcome)> {
    let sc = demo(50.0)?;
    let model = sc.model()?;
    let grid = &sc.grid;
    let coeffs = &sc.coeffs;
    let mut state = sc.initial_state(&model)?;

    let rho_bound = sup(state.rho.values()).max(coeffs.beta_norm() / coeffs.m_star) + 1e-8;
    let u_bound = sup(sc.init.u0.values()) + 1e-8;
    let a_max = model.cohorts() as f64 * sc.dt;
    let z0_sup = (0..=100_000)
        .map(|i| sc.init.z0.eval_finite(&Bindings::age(a_max * i as f64 / 100_000.0)))
        .collect::<std::result::Result<Vec<_>, EvalError>>()
        .map_err(|source| vectorhost::Error::Eval { context: "z0".into(), source })?
        .into_iter()
        .fold(0.0, f64::max);
    let v_bound = sup(sc.init.k.values()) * z0_sup + 1e-8;
    let w0 = total(grid, &state);
    let host_bound = state.u.zip_with(&state.v, |u, v| u + v)?.max() + 1e-8;

    let (mut worst_rho, mut worst_u, mut worst_v, mut min_vec) =
        (state.rho.max(), state.u.max(), state.v.max(), state.phi.min().min(state.psi.min()));
    let mut worst_u_rise: f64 = 0.0;
    let mut worst_w_rise: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut worst_ledger_margin = f64::NEG_INFINITY;
    let area = grid.cell_area();
    let mut v_integral = sc.dt * norm(&state.v, area, NormKind::L1);
    let mut w_prev = w0;
    for _ in 0..sc.steps {
        let r = model.step_in_place(&mut state)?;
        watch.see(&state, &r);
        worst_rho = worst_rho.max(state.rho.max());
        worst_u = worst_u.max(state.u.max());
        worst_v = worst_v.max(state.v.max());
        min_vec = min_vec.min(state.phi.min()).min(state.psi.min());
        worst_u_rise = worst_u_rise.max((r.u_total_after - r.u_total_before) / r.u_total_before);
        let w = total(grid, &state);
        worst_w_rise = worst_w_rise.max((w - w_prev) / w_prev);
        w_prev = w;
        worst_residual = worst_residual.max(r.relative_mass_residual());
        v_integral += sc.dt * norm(&state.v, area, NormKind::L1);
        worst_ledger_margin = worst_ledger_margin.max(coeffs.lambda_star * v_integral - (w0 + 1e-6));
    }

    let c3 = Outcome {
        passed: worst_rho <= rho_bound && worst_u <= u_bound && worst_v <= v_bound && min_vec >= -1e-12,
        detail: format!(
            "{} steps; max rho {worst_rho:.6} <= {rho_bound:.6}; max u {worst_u:.6} <= {u_bound:.6}; \
             max v {worst_v:.6} <= {v_bound:.6} (vs ||u0 + v0|| {host_bound:.6}); min phi, psi {min_vec:.3e}",
            sc.steps
        ),
    };
    let c4 = Outcome {
        passed: worst_u_rise <= 1e-10 && worst_w_rise <= 1e-10 && worst_ledger_margin <= 0.0 && worst_residual <= 1e-10,
        detail: format!(
            "largest relative rise of U {worst_u_rise:.3e}, of U + V {worst_w_rise:.3e}; \
             lambda* sum dt ||v||_1 - ||u0 + v0||_1 - 1e-6 peaks at {worst_ledger_margin:.3e}; \
             max mass residual {worst_residual:.3e}"
        ),
    };
    Ok((c3, c4))
}

fn criterion_5(watch: &mut IdentityWatch) -> Result<Outcome> {
    let sc = demo(200.0)?;
    let model = sc.model()?;
    let rho = solve_rho_star(&sc.coeffs, &sc.grid, sc.tolerances.steady_tol)?;
    let state = sc.initial_state(&model)?;
    let (series, _) = run_with(&model, state, &rho.rho, sc.t_end(), 1, |s, r| {
        if let Some(r) = r {
            watch.see(s, r);
        }
        Ok(())
    })?;
    let rows = series.rows();
    let first = rows[0];
    let last = rows[rows.len() - 1];
    let v_peak = rows.iter().map(|r| r.v_l1).fold(0.0, f64::max);
    let psi_peak = rows.iter().map(|r| r.psi_linf).fold(0.0, f64::max);
    let rho_sup = sup(rho.rho.values());
    let lower = u_star_lower_bound(&series, sc.coeffs.sigma2_norm());
    let checks = [
        last.v_l1 <= 1e-6 * v_peak,
        last.psi_linf <= 1e-6 * psi_peak,
        last.u_dev_l2 <= 1e-6 * first.u_bar,
        last.phi_minus_rho_star_linf <= 1e-4 * rho_sup,
        lower > 0.0 && last.u_bar >= lower - 1e-6,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "t = {}: ||v||_1 {:.3e} (peak {v_peak:.3e}); ||psi||_inf {:.3e} (peak {psi_peak:.3e}); \
             ||u - ubar||_2 {:.3e}; ||phi - rho*||_inf {:.3e}; ubar {:.6} >= bound {lower:.6}",
            last.t, last.v_l1, last.psi_linf, last.u_dev_l2, last.phi_minus_rho_star_linf, last.u_bar
        ),
    )
}

fn criterion_7() -> Result<Outcome> {
    let sc = demo(0.0)?;
    let grid = &sc.grid;
    let lambda = Expr::parse("1")?;
    let mut worst_const: f64 = 0.0;
    for (beta, m) in [(2.0, 1.0), (3.0, 0.5), (0.7, 2.0)] {
        let coeffs = CoefficientSet::constant(grid, 0.02, 0.05, beta, m, 1.0, 1.0, lambda.clone())?;
        let r = solve_rho_star(&coeffs, grid, 1e-10)?;
        let target = beta / m;
        worst_const = worst_const.max(r.rho.values().iter().fold(0.0f64, |w, x| w.max((x - target).abs())));
    }

    let coeffs = &sc.coeffs;
    let rho = solve_rho_star(coeffs, grid, sc.tolerances.steady_tol)?;
    let op = DiffusionOperator::assemble(grid, Support::Star, &coeffs.d1)?;
    let mut march = sc.init.phi0.clone();
    let dt = 0.05;
    for _ in 0..4000 {
        march = logistic_step(&op, coeffs, &march, dt)?;
    }
    let march_gap = sup(march.zip_with(&rho.rho, |a, b| a - b)?.values());
    let bound = coeffs.beta_norm() / coeffs.m_star;
    let in_bound = rho.rho.min() > 0.0 && rho.rho.max() <= bound;
    outcome(
        worst_const <= 1e-8 && march_gap <= 1e-6 && in_bound,
        format!(
            "constant cases off by {worst_const:.3e}; variable rho* vs t = 200 march {march_gap:.3e}; \
             range [{:.6}, {:.6}] within (0, {bound:.6}]",
            rho.rho.min(),
            rho.rho.max()
        ),
    )
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn criterion_8(watch: &mut IdentityWatch) -> Result<Outcome> {
    let dts = [0.1, 0.05, 0.025];
    let horizon = 2.0;
    let mut logistic_errors = Vec::new();
    let mut ode_errors = Vec::new();
    let mut worst_match: f64 = 0.0;

    // the full system against a fine-step scalar reduction at one seeded cell
    let reference = |dt: f64| -> Result<(OdeParams, usize)> {
        let sc = scenario(&homogeneous_toml(dt, 0.0))?;
        let model = sc.model()?;
        let seed = sc.seed()?;
        let cell = (0..sc.grid.cell_count()).find(|&c| sc.grid.in_starstar(c) && sc.grid.in_star(c)).unwrap();
        let local = sc.grid.local_index(Support::Star, cell).unwrap();
        let p = OdeParams {
            in_star: true,
            beta: sc.coeffs.beta.values()[local],
            m: sc.coeffs.m.values()[local],
            sigma1: sc.coeffs.sigma1.values()[local],
            sigma2: sc.coeffs.sigma2.values()[local],
            phi0: sc.init.phi0.values()[local],
            psi0: sc.init.psi0.values()[local],
            u0: sc.init.u0.values()[cell],
            cohorts0: seed.cohorts().iter().map(|k| k.values()[cell]).collect(),
            survival: model.survival().factors().to_vec(),
            tau_face: sc.tau_face,
        };
        Ok((p, sc.steps))
    };
    let (fine, fine_n) = reference(dts[2] / 8.0)?;
    let exact = ode_reduction(&fine, dts[2] / 8.0, fine_n)?[fine_n];

    for &dt in &dts {
        // diffusion on: rho stays homogeneous and follows the logistic curve
        let sc = scenario(&homogeneous_toml(dt, 0.1))?;
        let model = sc.model()?;
        let mut state = sc.initial_state(&model)?;
        for _ in 0..sc.steps {
            let r = model.step_in_place(&mut state)?;
            watch.see(&state, &r);
        }
        let target = logistic_exact(0.5, 2.0, 1.0, horizon);
        logistic_errors.push(state.rho.values().iter().fold(0.0f64, |m, x| m.max((x - target).abs())));

        // diffusion off: the grid run is the scalar reduction cell by cell
        let sc = scenario(&homogeneous_toml(dt, 0.0))?;
        let model = sc.model()?;
        let seed = sc.seed()?;
        let mut state = sc.initial_state(&model)?;
        let mut states = vec![state.clone()];
        for _ in 0..sc.steps {
            let r = model.step_in_place(&mut state)?;
            watch.see(&state, &r);
            states.push(state.clone());
        }
        for c in 0..sc.grid.cell_count() {
            let local = sc.grid.local_index(Support::Star, c);
            let at = |f: &ScalarField| local.map_or(0.0, |l| f.values()[l]);
            let p = OdeParams {
                in_star: local.is_some(),
                beta: at(&sc.coeffs.beta),
                m: at(&sc.coeffs.m),
                sigma1: at(&sc.coeffs.sigma1),
                sigma2: at(&sc.coeffs.sigma2),
                phi0: at(&sc.init.phi0),
                psi0: at(&sc.init.psi0),
                u0: sc.init.u0.values()[c],
                cohorts0: seed.cohorts().iter().map(|k| k.values()[c]).collect(),
                survival: model.survival().factors().to_vec(),
                tau_face: sc.tau_face,
            };
            let traj = ode_reduction(&p, dt, sc.steps)?;
            for (q, s) in traj.iter().zip(&states) {
                let mut gaps = vec![rel(s.u.values()[c], q.u), rel(s.v.values()[c], q.v)];
                if let Some(l) = local {
                    gaps.extend([rel(s.phi.values()[l], q.phi), rel(s.psi.values()[l], q.psi)]);
                }
                worst_match = gaps.into_iter().fold(worst_match, f64::max);
            }
        }

        let (p, n) = reference(dt)?;
        let end = ode_reduction(&p, dt, n)?[n];
        ode_errors.push(
            [rel(end.phi, exact.phi), rel(end.psi, exact.psi), rel(end.u, exact.u), rel(end.v, exact.v)]
                .into_iter()
                .fold(0.0, f64::max),
        );
    }
    let logistic_orders = orders(&logistic_errors);
    let ode_orders = orders(&ode_errors);

    // discrete eigenmode cos(pi x) cos(2 pi y) of the host diffusion
    let grid = Grid::build(1.0, 1.0, 32, 32, Rect::square(0.25, 0.75), Rect::square(0.125, 0.1875))?;
    let (d, dt) = (0.05, 0.05);
    let op = DiffusionOperator::assemble(&grid, Support::Omega, &grid.constant(Support::Omega, d))?;
    let step = ImplicitStep::new(&op, dt, None)?;
    let pi = std::f64::consts::PI;
    let h = grid.h();
    let mu = |k: f64| (2.0 - 2.0 * (k * pi * h).cos()) / (h * h);
    let w = grid.field_from_fn(Support::Omega, |x, y| (pi * x).cos() * (2.0 * pi * y).cos());
    let expected = w.scaled(1.0 / (1.0 + dt * d * (mu(1.0) + mu(2.0))));
    let cosine_gap = sup(step.solve(&w)?.zip_with(&expected, |a, b| a - b)?.values());

    let passed = logistic_orders.iter().chain(&ode_orders).all(|&o| o >= 0.9) && worst_match <= 1e-13 && cosine_gap <= 1e-10;
    outcome(
        passed,
        format!(
            "logistic orders {:.3?}; full-system orders {:.3?}; zero-diffusion grid vs reduction {worst_match:.3e}; \
             cosine mode gap {cosine_gap:.3e}",
            logistic_orders, ode_orders
        ),
    )
}

enum Expect {
    Value(f64),
    SyntaxAt(usize),
    DivisionByZero,
}

fn criterion_9() -> Result<Outcome> {
    use Expect::*;
    let (x, y, a) = (1.5f64, 0.25f64, 1.0f64);
    let table: [(&str, Expect); 30] = [
        ("1 + 2 * 3", Value(7.0)),
        ("(1 + 2) * 3", Value(9.0)),
        ("2 ^ 3 ^ 2", Value(512.0)),
        ("-2 ^ 2", Value(-4.0)),
        ("2 ^ -1", Value(0.5)),
        ("8 / 4 / 2", Value(1.0)),
        ("10 - 4 - 3", Value(3.0)),
        ("2 * x + y", Value(2.0 * x + y)),
        ("cos(pi)", Value(-1.0)),
        ("exp(1)", Value(1f64.exp())),
        ("abs(-3.5)", Value(3.5)),
        ("min(2, 3) + max(2, -3)", Value(4.0)),
        ("1e-3 * 1000", Value(1.0)),
        ("2.5E2", Value(250.0)),
        ("--3", Value(3.0)),
        ("a * exp(-a)", Value(a * (-a).exp())),
        ("x^2 + (4*y)^2", Value(x.powf(2.0) + (4.0 * y).powf(2.0))),
        ("((((1))))", Value(1.0)),
        ("2 * (3 + 4) ^ 2", Value(98.0)),
        ("-x ^ 2", Value(-(x.powf(2.0)))),
        ("", SyntaxAt(1)),
        ("1 + ", SyntaxAt(5)),
        ("1 + foo", SyntaxAt(5)),
        ("(1 + 2", SyntaxAt(7)),
        ("1 2", SyntaxAt(3)),
        ("min(1)", SyntaxAt(1)),
        ("sin 1", SyntaxAt(1)),
        ("2 * $", SyntaxAt(5)),
        ("foo(1)", SyntaxAt(1)),
        ("1 / 0", DivisionByZero),
    ];
    let bindings = Bindings { x, y, a };
    let mut failures = Vec::new();
    for (text, expect) in &table {
        let ok = match (Expr::parse(text), expect) {
            (Ok(e), Value(v)) => e.eval(&bindings) == Ok(*v),
            (Err(err), SyntaxAt(pos)) => err.pos == *pos,
            (Ok(e), DivisionByZero) => e.eval(&bindings) == Err(EvalError::DivisionByZero),
            _ => false,
        };
        if !ok {
            failures.push(format!("{text:?}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!("{}/{} cases{}", table.len() - failures.len(), table.len(), if failures.is_empty() { String::new() } else { format!("; failed {}", failures.join(", ")) }),
    )
}

fn criterion_10() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("short.toml");
    fs::write(&config, DEMO.replace("t_end = 50.0", "t_end = 2.0").replace("output_every = 20", "output_every = 4"))?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_vectorhost"))
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "error")
            .output()?
            .status;
        if !status.success() {
            return outcome(false, format!("run {run} exited with {status}"));
        }
        outputs.push(out);
    }
    let mut compared = 0;
    let mut differing = Vec::new();
    for name in ["series.csv", "final_state.csv", "report.csv", "report.txt"] {
        let a = fs::read(outputs[0].join(name))?;
        let b = fs::read(outputs[1].join(name))?;
        compared += a.len();
        if a != b {
            differing.push(name);
        }
    }
    outcome(
        differing.is_empty(),
        format!("{compared} bytes compared across 4 files{}", if differing.is_empty() { String::new() } else { format!("; differ: {differing:?}") }),
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

fn report(number: usize, name: &str, secs: f64, result: Result<Outcome>) -> bool {
    match result {
        Ok(o) => {
            println!("{} criterion {number} ({name}) [{secs:.1} s]: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
            o.passed
        }
        Err(e) => {
            println!("FAIL criterion {number} ({name}) [{secs:.1} s]: error: {e}");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut watch = IdentityWatch::default();
    let mut all = true;

    let (c1, s1) = timed(|| criterion_1(&mut watch));
    all &= report(1, "cohort representation", s1, c1);
    let (c2, s2) = timed(|| criterion_2(&mut watch));
    all &= report(2, "incubation-window decoupling", s2, c2);
    let (c34, s34) = timed(|| criteria_3_4(&mut watch));
    let (c3, c4) = match c34 {
        Ok((c3, c4)) => (Ok(c3), Ok(c4)),
        Err(e) => (Err(vectorhost::Error::Config(e.to_string())), Err(e)),
    };
    all &= report(3, "a priori bounds", s34, c3);
    all &= report(4, "monotone totals and L1 ledger", s34, c4);
    let (c5, s5) = timed(|| criterion_5(&mut watch));
    all &= report(5, "long-time limits", s5, c5);
    let (c7, s7) = timed(criterion_7);
    let (c8, s8) = timed(|| criterion_8(&mut watch));
    let c6 = outcome(
        watch.worst <= 1e-8 && watch.steps > 0,
        format!("max ||phi + psi - rho||_inf / ||rho||_inf {:.3e} over {} steps", watch.worst, watch.steps),
    );
    all &= report(6, "vector identity", 0.0, c6);
    all &= report(7, "steady state", s7, c7);
    all &= report(8, "convergence order", s8, c8);
    let (c9, s9) = timed(criterion_9);
    all &= report(9, "expression parser", s9, c9);
    let (c10, s10) = timed(criterion_10);
    all &= report(10, "determinism", s10, c10);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
