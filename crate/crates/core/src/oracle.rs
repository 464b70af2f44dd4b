//! Reference computations independent of the stepper's bookkeeping: the
//! characteristic representation of the cohorts, the incubation-window
//! decoupling of `v_τ`, the closed-form logistic curve and the scalar
//! reduction of the full system.

use crate::age::{AgeDensity, SurvivalTable};
use crate::diffusion::ImplicitStep;
use crate::grid::ScalarField;
use crate::{Error, Result};

fn diffuse_times(step: &ImplicitStep, field: &ScalarField, times: usize) -> Result<ScalarField> {
    let mut out = field.clone();
    for _ in 0..times {
        step.solve_in_place(out.values_mut());
    }
    Ok(out)
}

/// Cohort `j` after `n` steps, rebuilt along its characteristic.
///
/// For `n ≤ j` the cohort is seed cohort `j − n` diffused `n` times and
/// weighted by `s_{j−n}⋯s_{j−1}`; otherwise it is the birth of step `n − j`
/// diffused `j` times and weighted by `s_0⋯s_{j−1}`. `birth_history[k − 1]`
/// holds the birth of step `k`.
pub fn represent_i(
    step: &ImplicitStep,
    survival: &SurvivalTable,
    seed: &AgeDensity,
    birth_history: &[ScalarField],
    n: usize,
    j: usize,
) -> Result<ScalarField> {
    if j >= seed.len() {
        return Err(Error::OutOfRange(format!("cohort {j} of {}", seed.len())));
    }
    if j > survival.len() {
        return Err(Error::OutOfRange(format!("cohort {j} needs {j} survival factors, have {}", survival.len())));
    }
    if n <= j {
        let weight = survival.product(j - n, j);
        Ok(diffuse_times(step, seed.cohort(j - n), n)?.scaled(weight))
    } else {
        let k = n - j;
        let birth = birth_history
            .get(k - 1)
            .ok_or_else(|| Error::OutOfRange(format!("birth of step {k}, history has {}", birth_history.len())))?;
        let weight = survival.product(0, j);
        Ok(diffuse_times(step, birth, j)?.scaled(weight))
    }
}

/// `v_τ` after `t_steps ≤ τ/dt` steps from the seed alone; no birth can have
/// aged past τ yet.
pub fn v_tau_first_interval(
    seed: &AgeDensity,
    step: &ImplicitStep,
    survival: &SurvivalTable,
    tau_face: usize,
    t_steps: usize,
) -> Result<ScalarField> {
    if t_steps > tau_face {
        return Err(Error::OutOfRange(format!("step {t_steps} lies beyond tau = {tau_face} steps")));
    }
    if tau_face >= seed.len() {
        return Err(Error::OutOfRange(format!("tau face {tau_face} not below {} cohorts", seed.len())));
    }
    let mut acc = vec![0.0; seed.cohort(0).len()];
    for j in tau_face..seed.len() {
        let c = represent_i(step, survival, seed, &[], t_steps, j)?;
        for (a, v) in acc.iter_mut().zip(c.values()) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a *= seed.da());
    Ok(ScalarField::new(seed.cohort(0).support(), acc))
}

/// Closed-form solution of `ρ' = βρ − mρ²`.
pub fn logistic_exact(rho0: f64, beta: f64, m: f64, t: f64) -> f64 {
    beta * rho0 / (m * rho0 + (beta - m * rho0) * (-beta * t).exp())
}

/// Per-cell constants and initial data for [`ode_reduction`].
#[derive(Debug, Clone, PartialEq)]
pub struct OdeParams {
    /// Whether the cell belongs to the vector habitat; outside it there are
    /// no vectors and no infection.
    pub in_star: bool,
    pub beta: f64,
    pub m: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub phi0: f64,
    pub psi0: f64,
    pub u0: f64,
    /// Initial cohort values `z0(a_j)·k`.
    pub cohorts0: Vec<f64>,
    pub survival: Vec<f64>,
    pub tau_face: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdePoint {
    pub t: f64,
    pub rho: f64,
    pub phi: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub v_tau: f64,
}

fn age_sum(c: &[f64], from: usize, da: f64) -> f64 {
    let mut acc = 0.0;
    for x in &c[from..] {
        acc += x;
    }
    acc * da
}

/// The stepper's splitting with every diffusion solve replaced by the
/// identity, for one cell. Returns `n + 1` points starting at t = 0.
pub fn ode_reduction(p: &OdeParams, dt: f64, n: usize) -> Result<Vec<OdePoint>> {
    let j_max = p.cohorts0.len();
    if j_max == 0 || p.survival.len() < j_max || p.tau_face >= j_max {
        return Err(Error::OutOfRange(format!(
            "{j_max} cohorts, {} survival factors, tau face {}",
            p.survival.len(),
            p.tau_face
        )));
    }
    let (mut phi, mut psi) = if p.in_star { (p.phi0, p.psi0) } else { (0.0, 0.0) };
    let mut rho = phi + psi;
    let mut u = p.u0;
    let mut c = p.cohorts0.clone();
    let mut out = Vec::with_capacity(n + 1);
    let point = |t, rho, phi, psi, u, c: &[f64]| OdePoint {
        t,
        rho,
        phi,
        psi,
        u,
        v: age_sum(c, 0, dt),
        v_tau: age_sum(c, p.tau_face, dt),
    };
    out.push(point(0.0, rho, phi, psi, u, &c));
    for k in 1..=n {
        let v_tau = age_sum(&c, p.tau_face, dt);
        let birth = if p.in_star {
            let f1 = p.sigma1 * phi * v_tau;
            let transfer = (dt * f1).min(phi);
            let growth = dt * p.beta * rho;
            let death = 1.0 + dt * (p.m * rho);
            let phi_new = (phi - transfer + growth) / death;
            let psi_new = (psi + transfer) / death;
            rho = (rho + growth) / death;
            phi = phi_new;
            psi = psi_new;
            u /= 1.0 + dt * (p.sigma2 * psi);
            p.sigma2 * u * psi
        } else {
            0.0
        };
        for (j, x) in c.iter_mut().enumerate().take(j_max - 1) {
            *x *= p.survival[j];
        }
        c.rotate_right(1);
        c[0] = birth;
        out.push(point(k as f64 * dt, rho, phi, psi, u, &c));
    }
    Ok(out)
}
