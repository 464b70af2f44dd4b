//! The oracle suite behind `verify`: stepper bookkeeping against independent
//! reference computations on a configured scenario.

use std::fmt;

use crate::config::Scenario;
use crate::diffusion::{DiffusionOperator, ImplicitStep};
use crate::dynamics::Model;
use crate::grid::{ScalarField, Support};
use crate::oracle::{logistic_exact, ode_reduction, represent_i, v_tau_first_interval, OdeParams};
use crate::steady::{logistic_step, solve_rho_star_with};
use crate::Result;

/// Steps simulated by the bookkeeping checks.
pub const ORACLE_STEPS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { name, passed, detail });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖a − b‖∞ / ‖b‖∞`, or the absolute difference when `b` vanishes.
pub fn relative_gap(a: &ScalarField, b: &ScalarField) -> f64 {
    let diff = a.values().iter().zip(b.values()).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()));
    let scale = sup(b.values());
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if b != 0.0 {
        d / b.abs()
    } else {
        d
    }
}

/// Runs every check; only setup failures are returned as errors.
pub fn verify(scenario: &Scenario) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let model = scenario.model()?;
    let grid = &scenario.grid;
    let n_steps = ORACLE_STEPS;
    let area = grid.cell_area();

    // coupled run with full bookkeeping
    let seed = scenario.seed()?;
    let mut state = scenario.initial_state(&model)?;
    let mut states = vec![state.clone()];
    let mut births = Vec::with_capacity(n_steps);
    let mut worst_identity: f64 = 0.0;
    let mut worst_ledger: f64 = 0.0;
    let mut worst_monotone: f64 = 0.0;
    let total = |s: &crate::dynamics::SimState| {
        area * s.u.values().iter().sum::<f64>() + area * s.v.values().iter().sum::<f64>()
    };
    let mut w_prev = total(&state);
    for _ in 0..n_steps {
        let r = model.step_in_place(&mut state)?;
        births.push(state.i.cohort(0).clone());
        worst_identity = worst_identity.max(r.identity_defect / state.rho.max().max(f64::MIN_POSITIVE));
        worst_ledger = worst_ledger.max(r.relative_mass_residual());
        let w = total(&state);
        worst_monotone = worst_monotone.max((r.u_total_after - r.u_total_before) / r.u_total_before.max(f64::MIN_POSITIVE));
        worst_monotone = worst_monotone.max((w - w_prev) / w_prev.max(f64::MIN_POSITIVE));
        w_prev = w;
        states.push(state.clone());
    }

    let mut worst_repr: f64 = 0.0;
    for (n, s) in states.iter().enumerate() {
        for j in 0..model.cohorts() {
            let oracle = represent_i(model.cohort_step(), model.survival(), &seed, &births, n, j)?;
            worst_repr = worst_repr.max(relative_gap(s.i.cohort(j), &oracle));
        }
    }
    report.push(
        "cohort representation",
        worst_repr <= 1e-12,
        format!("max relative gap {worst_repr:.3e} over {} steps x {} cohorts", n_steps + 1, model.cohorts()),
    );

    let window = model.tau_face().min(n_steps);
    let mut worst_window: f64 = 0.0;
    for (n, s) in states.iter().enumerate().take(window + 1) {
        let oracle = v_tau_first_interval(&seed, model.cohort_step(), model.survival(), model.tau_face(), n)?;
        worst_window = worst_window.max(relative_gap(&s.v_tau, &oracle));
    }
    report.push(
        "incubation window",
        worst_window <= 1e-12,
        format!("v_tau on the first {window} steps, max relative gap {worst_window:.3e}"),
    );

    let mut boosted = scenario.coeffs.clone();
    boosted.sigma2 = boosted.sigma2.scaled(10.0);
    let boosted_model = Model::new(
        grid.clone(),
        boosted,
        scenario.dt,
        scenario.tau_face,
        scenario.cohorts,
        scenario.tolerances.invariant_tol,
    )?;
    let mut b_state = boosted_model.initial_state(&scenario.init)?;
    let mut worst_sigma2: f64 = 0.0;
    for s in states.iter().take(window + 1).skip(1) {
        boosted_model.step_in_place(&mut b_state)?;
        worst_sigma2 = worst_sigma2.max(relative_gap(&b_state.v_tau, &s.v_tau));
    }
    report.push(
        "sigma2 independence",
        worst_sigma2 <= 1e-12,
        format!("v_tau with 10x sigma2 on the first {window} steps, max relative gap {worst_sigma2:.3e}"),
    );

    report.push(
        "vector identity",
        worst_identity <= scenario.tolerances.invariant_tol,
        format!("max |phi + psi - rho| / max rho = {worst_identity:.3e}"),
    );
    report.push("host ledger", worst_ledger <= 1e-10, format!("max relative residual {worst_ledger:.3e}"));
    report.push(
        "monotone totals",
        worst_monotone <= 1e-10,
        format!("largest relative increase of U or U + V: {worst_monotone:.3e}"),
    );

    // steady state
    let tol = scenario.tolerances.steady_tol;
    let rho = solve_rho_star_with(&scenario.coeffs, grid, tol, scenario.tolerances.cg_tol)?;
    let bound = scenario.coeffs.beta_norm() / scenario.coeffs.m_star;
    let in_bounds = rho.rho.min() > 0.0 && rho.rho.max() <= bound * (1.0 + 1e-12);
    report.push(
        "steady residual",
        rho.residual <= 10.0 * tol && in_bounds && !rho.newton_failed,
        format!(
            "residual {:.3e}, range [{:.6}, {:.6}], bound {bound:.6}",
            rho.residual,
            rho.rho.min(),
            rho.rho.max()
        ),
    );
    let once = logistic_step(model.op1(), &scenario.coeffs, &rho.rho, scenario.dt)?;
    let moved = sup(once.zip_with(&rho.rho, |a, b| a - b)?.values());
    report.push("steady fixed point", moved <= 10.0 * tol, format!("one step moves rho* by {moved:.3e}"));

    // d = 0 copy against the scalar reduction, cell by cell
    let mut frozen = scenario.coeffs.clone();
    frozen.d1 = grid.zeros(Support::Star);
    frozen.d2 = grid.zeros(Support::Omega);
    let frozen_model = Model::new(
        grid.clone(),
        frozen.clone(),
        scenario.dt,
        scenario.tau_face,
        scenario.cohorts,
        scenario.tolerances.invariant_tol,
    )?;
    let mut f_state = frozen_model.initial_state(&scenario.init)?;
    let mut f_states = vec![f_state.clone()];
    for _ in 0..n_steps {
        frozen_model.step_in_place(&mut f_state)?;
        f_states.push(f_state.clone());
    }
    let mut worst_ode: f64 = 0.0;
    for c in 0..grid.cell_count() {
        let local = grid.local_index(Support::Star, c);
        let at = |f: &ScalarField| local.map_or(0.0, |l| f.values()[l]);
        let params = OdeParams {
            in_star: local.is_some(),
            beta: at(&frozen.beta),
            m: at(&frozen.m),
            sigma1: at(&frozen.sigma1),
            sigma2: at(&frozen.sigma2),
            phi0: at(&scenario.init.phi0),
            psi0: at(&scenario.init.psi0),
            u0: scenario.init.u0.values()[c],
            cohorts0: seed.cohorts().iter().map(|k| k.values()[c]).collect(),
            survival: frozen_model.survival().factors().to_vec(),
            tau_face: scenario.tau_face,
        };
        let traj = ode_reduction(&params, scenario.dt, n_steps)?;
        for (p, s) in traj.iter().zip(&f_states) {
            let mut gaps = vec![rel(s.u.values()[c], p.u), rel(s.v.values()[c], p.v), rel(s.v_tau.values()[c], p.v_tau)];
            if let Some(l) = local {
                gaps.extend([rel(s.phi.values()[l], p.phi), rel(s.psi.values()[l], p.psi), rel(s.rho.values()[l], p.rho)]);
            }
            worst_ode = gaps.into_iter().fold(worst_ode, f64::max);
        }
    }
    report.push(
        "ode reduction",
        worst_ode <= 1e-13,
        format!("zero-diffusion run vs scalar reduction, max relative gap {worst_ode:.3e}"),
    );

    // temporal order of the logistic scheme
    let (beta, m) = (scenario.coeffs.beta_norm(), scenario.coeffs.m.max());
    let rho0 = 0.25 * beta / m;
    let horizon = 1.0;
    let errors: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| {
            let n = (horizon / dt as f64).round() as usize;
            let p = OdeParams {
                in_star: true,
                beta,
                m,
                sigma1: 0.0,
                sigma2: 0.0,
                phi0: rho0,
                psi0: 0.0,
                u0: 1.0,
                cohorts0: vec![0.0; 2],
                survival: vec![1.0; 2],
                tau_face: 0,
            };
            ode_reduction(&p, dt, n).map(|t| (t[n].rho - logistic_exact(rho0, beta, m, horizon)).abs())
        })
        .collect::<Result<_>>()?;
    let orders = [(errors[0] / errors[1]).log2(), (errors[1] / errors[2]).log2()];
    report.push(
        "temporal order",
        orders.iter().all(|&o| o >= 0.9),
        format!("logistic errors {:.3e}, {:.3e}, {:.3e}; orders {:.3}, {:.3}", errors[0], errors[1], errors[2], orders[0], orders[1]),
    );

    // discrete eigenmode of the host diffusion
    let d = scenario.coeffs.d2.values().iter().sum::<f64>() / scenario.coeffs.d2.len() as f64;
    if d > 0.0 {
        let op = DiffusionOperator::assemble(grid, Support::Omega, &grid.constant(Support::Omega, d))?;
        let step = ImplicitStep::new(&op, scenario.dt, None)?;
        let lx = grid.lx();
        let w = grid.field_from_fn(Support::Omega, |x, _| (std::f64::consts::PI * x / lx).cos());
        let h = grid.h();
        let mu = (2.0 - 2.0 * (std::f64::consts::PI * h / lx).cos()) / (h * h);
        let expected = w.scaled(1.0 / (1.0 + scenario.dt * d * mu));
        let got = step.solve(&w)?;
        let gap = sup(got.zip_with(&expected, |a, b| a - b)?.values());
        report.push("cosine mode", gap <= 1e-10, format!("implicit step vs 1/(1 + dt d mu1) decay, gap {gap:.3e}"));
    } else {
        report.push("cosine mode", true, "host diffusion disabled; skipped".into());
    }

    Ok(report)
}
