//! The coupled stepper for vectors (φ, ψ, ρ) on Ω* and hosts (u, i) on Ω.
//!
//! One step, in order:
//! 1. `v_τ` from the current cohorts, restricted to Ω*;
//! 2. transfer `T = min(dt·σ₁·φ·v_τ, φ)` moved from φ to ψ, then a
//!    backward-Euler solve with the logistic death `m·ρⁿ` folded into the
//!    diffusion matrix (the same solve advances the check field ρ);
//! 3. `u⁺` by backward Euler with the infection sink `σ₂·ψ⁺` folded in;
//! 4. `B⁺ = σ₂·u⁺·ψ⁺` deposited as the new youngest cohort;
//! 5. `v`, `v_τ` recomputed.
//!
//! Because `B⁺` uses the same `u⁺` that appears in the sink, the host ledger
//! `U + V` closes exactly up to rounding.

use log::debug;

use crate::age::{AgeDensity, AgeLedger, SurvivalTable};
use crate::coeffs::{CoefficientSet, InitialData};
use crate::diagnostics::{self, DiagnosticsSeries, Recorder};
use crate::diffusion::{DiffusionOperator, ImplicitStep};
use crate::grid::{Grid, ScalarField, Support};
use crate::{Error, Result};

/// Relative slack allowed below zero before a step is rejected.
pub const POSITIVITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub steps: usize,
    pub phi: ScalarField,
    pub psi: ScalarField,
    pub rho: ScalarField,
    pub u: ScalarField,
    pub i: AgeDensity,
    pub v: ScalarField,
    pub v_tau: ScalarField,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// `U⁺ + V⁺ − (U + V) + removed`, absolute.
    pub mass_residual: f64,
    /// `U + V` before the step, the scale of the residual.
    pub mass_scale: f64,
    pub ledger: AgeLedger,
    pub u_total_before: f64,
    pub u_total_after: f64,
    /// Whether `T ≤ φⁿ` had to be enforced in some cell.
    pub clamped: bool,
    /// `‖φ + ψ − ρ‖∞` after the step.
    pub identity_defect: f64,
    /// Most negative value among all fields after the step (0 if none).
    pub min_value: f64,
}

impl StepReport {
    pub fn relative_mass_residual(&self) -> f64 {
        if self.mass_scale > 0.0 {
            self.mass_residual.abs() / self.mass_scale
        } else {
            self.mass_residual.abs()
        }
    }
}

/// `σ₁·φ·v_τ` on Ω*.
pub fn incidence_f1(sigma1: &ScalarField, phi: &ScalarField, v_tau_star: &ScalarField) -> Result<ScalarField> {
    let sp = sigma1.zip_with(phi, |s, p| s * p)?;
    sp.zip_with(v_tau_star, |sp, v| sp * v)
}

/// `σ₂·u·ψ` on Ω*, extended by zero to Ω.
pub fn birth_b(grid: &Grid, sigma2: &ScalarField, u: &ScalarField, psi: &ScalarField) -> Result<ScalarField> {
    let u_star = grid.restrict_to_star(u)?;
    let b = sigma2.zip_with(&u_star, |s, u| s * u)?.zip_with(psi, |su, p| su * p)?;
    grid.extend_to_omega(&b, 0.0)
}

/// Everything that stays fixed over a run.
#[derive(Debug, Clone)]
pub struct Model {
    grid: Grid,
    coeffs: CoefficientSet,
    dt: f64,
    tau_face: usize,
    survival: SurvivalTable,
    op1: DiffusionOperator,
    op2: DiffusionOperator,
    cohort_step: ImplicitStep,
    invariant_tol: f64,
}

impl Model {
    /// `tau_face` is τ/dt; `cohorts` is the age-grid length J.
    pub fn new(grid: Grid, coeffs: CoefficientSet, dt: f64, tau_face: usize, cohorts: usize, invariant_tol: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if tau_face >= cohorts {
            return Err(Error::Age(format!(
                "tau = {} must be below a_max = {}",
                tau_face as f64 * dt,
                cohorts as f64 * dt
            )));
        }
        if !(invariant_tol > 0.0) {
            return Err(Error::Config(format!("invariant tolerance must be positive, got {invariant_tol}")));
        }
        for (name, f) in [("beta", &coeffs.beta), ("m", &coeffs.m), ("sigma1", &coeffs.sigma1), ("sigma2", &coeffs.sigma2)] {
            if f.values().iter().any(|&v| v < 0.0) {
                return Err(Error::Coefficient(format!("{name} must be nonnegative")));
            }
        }
        let op1 = DiffusionOperator::assemble_or_zero(&grid, Support::Star, &coeffs.d1)?;
        let op2 = DiffusionOperator::assemble_or_zero(&grid, Support::Omega, &coeffs.d2)?;
        let survival = SurvivalTable::new(&coeffs.lambda, dt, cohorts)?;
        if survival.factors().iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::Coefficient("recovery rate must be nonnegative".into()));
        }
        let cohort_step = ImplicitStep::new(&op2, dt, None)?;
        Ok(Model { grid, coeffs, dt, tau_face, survival, op1, op2, cohort_step, invariant_tol })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn tau_face(&self) -> usize {
        self.tau_face
    }

    pub fn tau(&self) -> f64 {
        self.tau_face as f64 * self.dt
    }

    pub fn cohorts(&self) -> usize {
        self.survival.len()
    }

    pub fn survival(&self) -> &SurvivalTable {
        &self.survival
    }

    pub fn op1(&self) -> &DiffusionOperator {
        &self.op1
    }

    pub fn op2(&self) -> &DiffusionOperator {
        &self.op2
    }

    /// The factored host diffusion step applied to every cohort.
    pub fn cohort_step(&self) -> &ImplicitStep {
        &self.cohort_step
    }

    pub fn state_from_parts(
        &self,
        phi: ScalarField,
        psi: ScalarField,
        u: ScalarField,
        i: AgeDensity,
    ) -> Result<SimState> {
        self.grid.check(&phi, Support::Star)?;
        self.grid.check(&psi, Support::Star)?;
        self.grid.check(&u, Support::Omega)?;
        if i.len() != self.cohorts() || (i.da() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Age(format!(
                "age density has {} cohorts of width {}, model expects {} of width {}",
                i.len(),
                i.da(),
                self.cohorts(),
                self.dt
            )));
        }
        for (name, f) in [("phi", &phi), ("psi", &psi), ("u", &u)] {
            if f.values().iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(Error::Coefficient(format!("initial {name} must be finite and nonnegative")));
            }
        }
        let rho = phi.zip_with(&psi, |a, b| a + b)?;
        let v = i.integrate_age();
        let v_tau = i.integrate_age_from(self.tau_face)?;
        Ok(SimState { t: 0.0, steps: 0, phi, psi, rho, u, i, v, v_tau })
    }

    pub fn initial_state(&self, init: &InitialData) -> Result<SimState> {
        let i = AgeDensity::seed(&init.z0, &init.k, &self.grid, self.dt, self.cohorts())?;
        self.state_from_parts(init.phi0.clone(), init.psi0.clone(), init.u0.clone(), i)
    }

    /// Advances `state` by one step of length dt.
    pub fn step_in_place(&self, state: &mut SimState) -> Result<StepReport> {
        let dt = self.dt;
        let g = &self.grid;
        let area = g.cell_area();
        let u_before = area * state.u.values().iter().sum::<f64>();
        let v_before = area * state.v.values().iter().sum::<f64>();

        // (1) infectious hosts seen by the vectors
        let v_tau_star = g.restrict_to_star(&state.v_tau)?;

        // (2) vectors
        let f1 = incidence_f1(&self.coeffs.sigma1, &state.phi, &v_tau_star)?;
        let mut clamped = false;
        let transfer: Vec<f64> = f1
            .values()
            .iter()
            .zip(state.phi.values())
            .map(|(&f, &p)| {
                let t = dt * f;
                if t > p {
                    clamped = true;
                    p
                } else {
                    t
                }
            })
            .collect();
        let beta = self.coeffs.beta.values();
        let rho = state.rho.values();
        let death: Vec<f64> = self.coeffs.m.values().iter().zip(rho).map(|(m, r)| m * r).collect();
        let vec_step = ImplicitStep::new(&self.op1, dt, Some(&death))?;
        let n_star = rho.len();
        let mut phi = Vec::with_capacity(n_star);
        let mut psi = Vec::with_capacity(n_star);
        let mut rho_new = Vec::with_capacity(n_star);
        for c in 0..n_star {
            let growth = dt * beta[c] * rho[c];
            phi.push(state.phi.values()[c] - transfer[c] + growth);
            psi.push(state.psi.values()[c] + transfer[c]);
            rho_new.push(rho[c] + growth);
        }
        vec_step.solve_in_place(&mut phi);
        vec_step.solve_in_place(&mut psi);
        vec_step.solve_in_place(&mut rho_new);
        let phi = ScalarField::new(Support::Star, phi);
        let psi = ScalarField::new(Support::Star, psi);
        let rho_new = ScalarField::new(Support::Star, rho_new);

        // (3) susceptible hosts
        let psi_ext = g.extend_to_omega(&psi, 0.0)?;
        let sigma2_ext = g.extend_to_omega(&self.coeffs.sigma2, 0.0)?;
        let sink: Vec<f64> = sigma2_ext.values().iter().zip(psi_ext.values()).map(|(s, p)| s * p).collect();
        let host_step = ImplicitStep::new(&self.op2, dt, Some(&sink))?;
        let mut u = state.u.clone();
        host_step.solve_in_place(u.values_mut());

        // (4) recruitment into the infected class
        let birth = birth_b(g, &self.coeffs.sigma2, &u, &psi)?;
        let ledger = state.i.step(g, &self.cohort_step, &self.survival, birth)?;

        // (5) age integrals
        let v = state.i.integrate_age();
        let v_tau = state.i.integrate_age_from(self.tau_face)?;

        let u_after = area * u.values().iter().sum::<f64>();
        let v_after = area * v.values().iter().sum::<f64>();
        let mass_residual = (u_after + v_after) - (u_before + v_before) + ledger.removed();

        state.t = (state.steps + 1) as f64 * dt;
        state.steps += 1;
        state.phi = phi;
        state.psi = psi;
        state.rho = rho_new;
        state.u = u;
        state.v = v;
        state.v_tau = v_tau;

        let identity_defect = state
            .phi
            .values()
            .iter()
            .zip(state.psi.values())
            .zip(state.rho.values())
            .map(|((p, q), r)| (p + q - r).abs())
            .fold(0.0, f64::max);
        let min_value = [state.phi.min(), state.psi.min(), state.rho.min(), state.u.min(), state.i.min()]
            .into_iter()
            .fold(0.0, f64::min);
        let report = StepReport {
            mass_residual,
            mass_scale: u_before + v_before,
            ledger,
            u_total_before: u_before,
            u_total_after: u_after,
            clamped,
            identity_defect,
            min_value,
        };
        self.check_invariants(state, &report)?;
        Ok(report)
    }

    pub fn step(&self, state: &SimState) -> Result<(SimState, StepReport)> {
        let mut next = state.clone();
        let report = self.step_in_place(&mut next)?;
        Ok((next, report))
    }

    fn check_invariants(&self, state: &SimState, report: &StepReport) -> Result<()> {
        let t = state.t;
        let fields = [&state.phi, &state.psi, &state.rho, &state.u, &state.v];
        if !fields.iter().all(|f| f.all_finite()) || !state.i.all_finite() || !report.mass_residual.is_finite() {
            return Err(Error::Invariant { t, what: "non-finite value".into() });
        }
        let scale = fields.iter().map(|f| f.max()).fold(0.0, f64::max);
        if report.min_value < -POSITIVITY_SLACK * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Invariant { t, what: format!("negative value {}", report.min_value) });
        }
        let rho_max = state.rho.max();
        if report.identity_defect > self.invariant_tol * rho_max {
            return Err(Error::Invariant {
                t,
                what: format!("phi + psi - rho reached {} (rho max {rho_max})", report.identity_defect),
            });
        }
        if report.clamped {
            debug!("transfer clamped at t = {t}");
        }
        Ok(())
    }
}

/// Number of steps to reach `t_end`; `t_end` must be a multiple of dt.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("t_end must be nonnegative, got {t_end}")));
    }
    let n = (t_end / dt).round();
    if (n * dt - t_end).abs() > 1e-9 * dt.max(t_end) {
        return Err(Error::Config(format!("t_end = {t_end} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

/// Steps from `state` to `t_end`, recording diagnostics at t = 0, every
/// `output_every` steps and at the final step. `observer` sees every state
/// (with its step report, absent for the initial one).
pub fn run_with(
    model: &Model,
    mut state: SimState,
    rho_star: &ScalarField,
    t_end: f64,
    output_every: usize,
    mut observer: impl FnMut(&SimState, Option<&StepReport>) -> Result<()>,
) -> Result<(DiagnosticsSeries, SimState)> {
    if output_every == 0 {
        return Err(Error::Config("output_every must be at least 1".into()));
    }
    let n = step_count(t_end, model.dt())?;
    let mut series = DiagnosticsSeries::default();
    let mut recorder = Recorder::default();
    observer(&state, None)?;
    series.push(diagnostics::record(model.grid(), &state, rho_star, 0.0, false)?, 0.0)?;
    for k in 1..=n {
        let report = model.step_in_place(&mut state)?;
        recorder.absorb(&state, &report, model.dt());
        observer(&state, Some(&report))?;
        if k % output_every == 0 || k == n {
            let row = diagnostics::record(
                model.grid(),
                &state,
                rho_star,
                recorder.max_relative_residual,
                recorder.clamped,
            )?;
            series.push(row, recorder.psi_sup_integral)?;
            recorder.reset_interval();
            if series.rows().len() % diagnostics::CROSS_CHECK_EVERY == 0 {
                diagnostics::cross_check_v(&state)?;
            }
        }
    }
    Ok((series, state))
}

pub fn run(
    model: &Model,
    state: SimState,
    rho_star: &ScalarField,
    t_end: f64,
    output_every: usize,
) -> Result<(DiagnosticsSeries, SimState)> {
    run_with(model, state, rho_star, t_end, output_every, |_, _| Ok(()))
}
