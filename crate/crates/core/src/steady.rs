//! The carrying-capacity steady state ρ*, convergence detection for a
//! completed run, and the estimate of the host limit u*.

use std::fmt;

use log::{debug, warn};

use crate::coeffs::CoefficientSet;
use crate::diagnostics::{DiagnosticsSeries, Row};
use crate::diffusion::{solve_spd, DiffusionOperator, ImplicitStep};
use crate::grid::{Grid, ScalarField, Support};
use crate::{Error, Result};

/// Convergence flags require this many trailing records below threshold.
pub const TAIL_RECORDS: usize = 10;

const MAX_MARCH_STEPS: usize = 1_000_000;
const MAX_NEWTON: usize = 20;

#[derive(Debug, Clone)]
pub struct RhoStar {
    pub rho: ScalarField,
    /// `‖−Lρ − βρ + mρ²‖∞`.
    pub residual: f64,
    pub march_steps: usize,
    pub newton_steps: usize,
    /// Newton failed and the time-marched iterate was kept.
    pub newton_failed: bool,
}

/// `−Lρ − βρ + mρ²` on Ω*.
pub fn elliptic_residual(op: &DiffusionOperator, coeffs: &CoefficientSet, rho: &ScalarField) -> Result<ScalarField> {
    let lr = op.apply(rho)?;
    let beta = coeffs.beta.values();
    let m = coeffs.m.values();
    let r = rho.values();
    let values = (0..r.len()).map(|c| -lr.values()[c] - beta[c] * r[c] + m[c] * r[c] * r[c]).collect();
    Ok(ScalarField::new(Support::Star, values))
}

fn sup(f: &ScalarField) -> f64 {
    f.values().iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// The backward-Euler logistic step with death folded into the matrix;
/// its fixed points are exactly the zeros of [`elliptic_residual`].
pub fn logistic_step(op: &DiffusionOperator, coeffs: &CoefficientSet, rho: &ScalarField, dt: f64) -> Result<ScalarField> {
    let death: Vec<f64> = coeffs.m.values().iter().zip(rho.values()).map(|(m, r)| m * r).collect();
    let step = ImplicitStep::new(op, dt, Some(&death))?;
    let mut next: Vec<f64> = rho.values().iter().zip(coeffs.beta.values()).map(|(r, b)| r + dt * b * r).collect();
    step.solve_in_place(&mut next);
    Ok(ScalarField::new(Support::Star, next))
}

/// Time-marches from `ρ₀ ≡ ‖β‖∞/m*` until `‖Δρ‖∞/dt < tol`, then polishes
/// with damped Newton until the residual is below `tol`.
pub fn solve_rho_star(coeffs: &CoefficientSet, grid: &Grid, tol: f64) -> Result<RhoStar> {
    solve_rho_star_with(coeffs, grid, tol, 1e-12)
}

/// [`solve_rho_star`] with an explicit tolerance for the Newton linear solves.
pub fn solve_rho_star_with(coeffs: &CoefficientSet, grid: &Grid, tol: f64, cg_tol: f64) -> Result<RhoStar> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("steady tolerance must be positive, got {tol}")));
    }
    if !(coeffs.m_star > 0.0 && coeffs.beta_star > 0.0) {
        return Err(Error::Assumptions(format!(
            "steady state needs positive beta and m (beta_star = {}, m_star = {})",
            coeffs.beta_star, coeffs.m_star
        )));
    }
    let op = DiffusionOperator::assemble_or_zero(grid, Support::Star, &coeffs.d1)?;
    let beta_norm = coeffs.beta_norm();
    let dt = 1.0 / beta_norm;
    let mut rho = grid.constant(Support::Star, beta_norm / coeffs.m_star);
    let mut march_steps = 0;
    loop {
        let next = logistic_step(&op, coeffs, &rho, dt)?;
        march_steps += 1;
        let change = next.zip_with(&rho, |a, b| a - b)?;
        rho = next;
        if sup(&change) / dt < tol {
            break;
        }
        if march_steps >= MAX_MARCH_STEPS {
            return Err(Error::SolverNonConvergence { iterations: march_steps, residual: sup(&change) / dt });
        }
    }
    debug!("steady march converged after {march_steps} steps");

    let marched = rho.clone();
    let marched_res = sup(&elliptic_residual(&op, coeffs, &marched)?);
    match newton(&op, coeffs, rho, tol, cg_tol) {
        Ok((rho, residual, newton_steps)) => Ok(RhoStar { rho, residual, march_steps, newton_steps, newton_failed: false }),
        Err(e) => {
            warn!("Newton polish failed ({e}); keeping the time-marched iterate");
            Ok(RhoStar { rho: marched, residual: marched_res, march_steps, newton_steps: 0, newton_failed: true })
        }
    }
}

fn newton(
    op: &DiffusionOperator,
    coeffs: &CoefficientSet,
    mut rho: ScalarField,
    tol: f64,
    cg_tol: f64,
) -> Result<(ScalarField, f64, usize)> {
    let beta = coeffs.beta.values().to_vec();
    let m = coeffs.m.values().to_vec();
    let l_diag = op.diagonal();
    let mut res = elliptic_residual(op, coeffs, &rho)?;
    let mut res_norm = sup(&res);
    let mut steps = 0;
    while res_norm > tol {
        if steps == MAX_NEWTON {
            return Err(Error::SolverNonConvergence { iterations: steps, residual: res_norm });
        }
        steps += 1;
        // J = −L − diag(β) + diag(2mρ)
        let jd: Vec<f64> = (0..rho.len()).map(|c| -beta[c] + 2.0 * m[c] * rho.values()[c]).collect();
        let diag: Vec<f64> = (0..rho.len()).map(|c| -l_diag[c] + jd[c]).collect();
        if diag.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::NotPositiveDefinite { row: diag.iter().position(|&d| !(d > 0.0)).unwrap_or(0) });
        }
        let matvec = |x: &[f64], out: &mut [f64]| {
            op.apply_into(x, out);
            for c in 0..x.len() {
                out[c] = -out[c] + jd[c] * x[c];
            }
        };
        let rhs: Vec<f64> = res.values().iter().map(|r| -r).collect();
        let delta = solve_spd(matvec, &diag, &rhs, cg_tol, 10 * rho.len() + 100)?.x;
        let mut damping = 1.0;
        loop {
            let trial = ScalarField::new(
                Support::Star,
                rho.values().iter().zip(&delta).map(|(r, d)| r + damping * d).collect(),
            );
            let trial_res = elliptic_residual(op, coeffs, &trial)?;
            let trial_norm = sup(&trial_res);
            if trial.min() > 0.0 && trial_norm < res_norm {
                rho = trial;
                res = trial_res;
                res_norm = trial_norm;
                break;
            }
            damping /= 2.0;
            if damping < 1e-4 {
                // at rounding level the residual may not decrease any more
                if res_norm <= 10.0 * tol {
                    return Ok((rho, res_norm, steps));
                }
                return Err(Error::SolverNonConvergence { iterations: steps, residual: res_norm });
            }
        }
    }
    Ok((rho, res_norm, steps))
}

/// Relative thresholds for [`detect_limits`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Fraction of the peak for `‖v‖₁`, `‖v‖∞`, `‖ψ‖₂`, `‖ψ‖∞`.
    pub disease: f64,
    /// Fraction of `ū(0)` for `‖u − ū‖₂`.
    pub host: f64,
    /// Fraction of `‖ρ*‖∞` for `‖φ − ρ*‖∞`.
    pub vector: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { disease: 1e-6, host: 1e-6, vector: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantityReport {
    pub name: &'static str,
    pub last: f64,
    pub threshold: f64,
    /// Fitted exponential decay rate over the second half of the records.
    pub decay_rate: Option<f64>,
    pub converged: bool,
    /// Start of the final stretch of records at or below threshold.
    pub crossing_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub quantities: Vec<QuantityReport>,
    pub t_end: f64,
    pub u_star_estimate: f64,
    /// Geometric-tail extrapolation of the remaining change in ū.
    pub u_star_extrapolation_error: Option<f64>,
    pub u_star_lower_bound: f64,
}

impl ConvergenceReport {
    pub fn all_converged(&self) -> bool {
        self.quantities.iter().all(|q| q.converged)
    }

    pub fn quantity(&self, name: &str) -> Option<&QuantityReport> {
        self.quantities.iter().find(|q| q.name == name)
    }

    /// One `name,last,threshold,decay_rate,converged,crossing_time` row per quantity.
    pub fn to_csv(&self) -> String {
        let f = crate::diagnostics::format_float;
        let opt = |x: Option<f64>| x.map(f).unwrap_or_default();
        let mut out = String::from("quantity,last,threshold,decay_rate,converged,crossing_time\n");
        for q in &self.quantities {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                q.name,
                f(q.last),
                f(q.threshold),
                opt(q.decay_rate),
                u8::from(q.converged),
                opt(q.crossing_time)
            ));
        }
        out.push_str(&format!("u_star_estimate,{},,,,\n", f(self.u_star_estimate)));
        out.push_str(&format!("u_star_extrapolation_error,{},,,,\n", opt(self.u_star_extrapolation_error)));
        out.push_str(&format!("u_star_lower_bound,{},,,,\n", f(self.u_star_lower_bound)));
        out
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "convergence report at t = {}", self.t_end)?;
        for q in &self.quantities {
            write!(
                f,
                "  {:<24} last = {:.6e}  threshold = {:.3e}  {}",
                q.name,
                q.last,
                q.threshold,
                if q.converged { "converged" } else { "NOT converged" }
            )?;
            if let Some(t) = q.crossing_time {
                write!(f, "  below since t = {t}")?;
            }
            if let Some(r) = q.decay_rate {
                write!(f, "  decay rate = {r:.4e}")?;
            }
            writeln!(f)?;
        }
        write!(f, "  u* estimate = {:.12e}", self.u_star_estimate)?;
        if let Some(e) = self.u_star_extrapolation_error {
            write!(f, " (extrapolation error {e:.3e})")?;
        }
        writeln!(f)?;
        writeln!(f, "  u* lower bound = {:.12e}", self.u_star_lower_bound)
    }
}

fn decay_rate(ts: &[f64], ys: &[f64]) -> Option<f64> {
    let start = ys.len() / 2;
    let pts: Vec<(f64, f64)> = ts[start..]
        .iter()
        .zip(&ys[start..])
        .filter(|(_, &y)| y > 0.0)
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

fn quantity(name: &'static str, rows: &[Row], get: impl Fn(&Row) -> f64, threshold: f64) -> QuantityReport {
    let ys: Vec<f64> = rows.iter().map(&get).collect();
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let below = |y: &f64| *y <= threshold;
    let tail = ys.iter().rev().take_while(|y| below(y)).count();
    let converged = ys.len() >= TAIL_RECORDS && tail >= TAIL_RECORDS;
    let crossing_time = (tail > 0).then(|| ts[ts.len() - tail]);
    QuantityReport {
        name,
        last: *ys.last().unwrap_or(&f64::NAN),
        threshold,
        decay_rate: decay_rate(&ts, &ys),
        converged,
        crossing_time,
    }
}

/// Evaluates the asymptotic limits on a completed run.
pub fn detect_limits(series: &DiagnosticsSeries, rho_star: &ScalarField, sigma2_norm: f64, thresholds: &Thresholds) -> ConvergenceReport {
    let rows = series.rows();
    let peak = |get: fn(&Row) -> f64| rows.iter().map(get).fold(0.0, f64::max);
    let u0 = rows.first().map_or(0.0, |r| r.u_bar);
    let rho_norm = sup(rho_star);
    let quantities = vec![
        quantity("v_linf", rows, |r| r.v_linf, thresholds.disease * peak(|r| r.v_linf)),
        quantity("v_l1", rows, |r| r.v_l1, thresholds.disease * peak(|r| r.v_l1)),
        quantity("psi_linf", rows, |r| r.psi_linf, thresholds.disease * peak(|r| r.psi_linf)),
        quantity("psi_l2", rows, |r| r.psi_l2, thresholds.disease * peak(|r| r.psi_l2)),
        quantity("u_dev_l2", rows, |r| r.u_dev_l2, thresholds.host * u0),
        quantity("phi_minus_rho_star_linf", rows, |r| r.phi_minus_rho_star_linf, thresholds.vector * rho_norm),
    ];
    let u_bar: Vec<f64> = rows.iter().map(|r| r.u_bar).collect();
    let extrapolation = match u_bar.len() {
        n if n >= 3 => {
            let d1 = u_bar[n - 2] - u_bar[n - 1];
            let d0 = u_bar[n - 3] - u_bar[n - 2];
            if d1 == 0.0 {
                Some(0.0)
            } else {
                let r = d1 / d0;
                (d0 != 0.0 && r > 0.0 && r < 1.0).then(|| d1.abs() * r / (1.0 - r))
            }
        }
        _ => None,
    };
    ConvergenceReport {
        quantities,
        t_end: rows.last().map_or(0.0, |r| r.t),
        u_star_estimate: *u_bar.last().unwrap_or(&f64::NAN),
        u_star_extrapolation_error: extrapolation,
        u_star_lower_bound: u_star_lower_bound(series, sigma2_norm),
    }
}

/// `ū(0)·exp(−‖σ₂‖∞·Σ_n dt·‖ψ(t_n)‖∞)`, using the per-step sum carried
/// by the series.
pub fn u_star_lower_bound(series: &DiagnosticsSeries, sigma2_norm: f64) -> f64 {
    let Some(first) = series.rows().first() else { return f64::NAN };
    let integral = series.psi_sup_integral().last().copied().unwrap_or(0.0);
    first.u_bar * (-sigma2_norm * integral).exp()
}
