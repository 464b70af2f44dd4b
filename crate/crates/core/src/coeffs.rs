//! Coefficient fields evaluated from expressions, and the admissibility
//! checks (A0–A6) that gate a simulation in paper mode.

use std::fmt;

use crate::expr::{Bindings, Expr, Var};
use crate::grid::{Grid, ScalarField, Support};
use crate::{Error, Result};

/// Slack subtracted from observed minima when deriving the floors.
pub const FLOOR_SLACK: f64 = 1e-12;

/// `Paper` enforces every admissibility assumption; `Lab` only reports them
/// so that degenerate oracle scenarios (λ ≡ 0, d₂ = 0, ψ₀ ≠ 0) can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Paper,
    Lab,
}

/// Evaluates an `x, y` expression at the cell centers of a support.
pub fn evaluate_field(expr: &Expr, grid: &Grid, support: Support) -> Result<ScalarField> {
    if expr.uses(Var::A) {
        return Err(Error::Coefficient(format!("spatial expression '{expr}' must not use the age variable a")));
    }
    let mut values = Vec::with_capacity(grid.len(support));
    for c in grid.cells(support) {
        let (x, y) = grid.center(c);
        let v = expr.eval_finite(&Bindings::xy(x, y)).map_err(|source| Error::Eval {
            context: format!("evaluating '{expr}' at cell {:?} (x = {x}, y = {y})", grid.ix_iy(c)),
            source,
        })?;
        values.push(v);
    }
    Ok(ScalarField::new(support, values))
}

/// Evaluates an expression in the age variable only.
pub fn eval_age(expr: &Expr, a: f64) -> Result<f64> {
    expr.eval_finite(&Bindings::age(a)).map_err(|source| Error::Eval {
        context: format!("evaluating '{expr}' at a = {a}"),
        source,
    })
}

/// The raw expressions behind a [`CoefficientSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientExprs {
    pub d1: Expr,
    pub d2: Expr,
    pub beta: Expr,
    pub m: Expr,
    pub sigma1: Expr,
    pub sigma2: Expr,
    pub lambda: Expr,
}

impl CoefficientExprs {
    pub fn parse(d1: &str, d2: &str, beta: &str, m: &str, sigma1: &str, sigma2: &str, lambda: &str) -> Result<Self> {
        Ok(CoefficientExprs {
            d1: Expr::parse(d1)?,
            d2: Expr::parse(d2)?,
            beta: Expr::parse(beta)?,
            m: Expr::parse(m)?,
            sigma1: Expr::parse(sigma1)?,
            sigma2: Expr::parse(sigma2)?,
            lambda: Expr::parse(lambda)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub d1: ScalarField,
    pub d2: ScalarField,
    pub beta: ScalarField,
    pub m: ScalarField,
    pub sigma1: ScalarField,
    pub sigma2: ScalarField,
    pub lambda: Expr,
    pub d_star: f64,
    pub m_star: f64,
    pub beta_star: f64,
    pub lambda_star: f64,
}

impl CoefficientSet {
    /// Evaluates every coefficient; `lambda_ages` are the ages at which the
    /// recovery rate floor is sampled.
    pub fn new(grid: &Grid, exprs: &CoefficientExprs, lambda_ages: &[f64]) -> Result<Self> {
        if exprs.lambda.uses(Var::X) || exprs.lambda.uses(Var::Y) {
            return Err(Error::Coefficient(format!(
                "recovery rate '{}' may only depend on the age a",
                exprs.lambda
            )));
        }
        if lambda_ages.is_empty() {
            return Err(Error::Coefficient("no ages supplied to sample the recovery rate".into()));
        }
        let d1 = evaluate_field(&exprs.d1, grid, Support::Star)?;
        let d2 = evaluate_field(&exprs.d2, grid, Support::Omega)?;
        let beta = evaluate_field(&exprs.beta, grid, Support::Star)?;
        let m = evaluate_field(&exprs.m, grid, Support::Star)?;
        let sigma1 = evaluate_field(&exprs.sigma1, grid, Support::Star)?;
        let sigma2 = evaluate_field(&exprs.sigma2, grid, Support::Star)?;
        let mut lambda_min = f64::INFINITY;
        for &a in lambda_ages {
            lambda_min = lambda_min.min(eval_age(&exprs.lambda, a)?);
        }
        Ok(CoefficientSet {
            d_star: d1.min().min(d2.min()) - FLOOR_SLACK,
            m_star: m.min() - FLOOR_SLACK,
            beta_star: beta.min() - FLOOR_SLACK,
            lambda_star: lambda_min - FLOOR_SLACK,
            d1,
            d2,
            beta,
            m,
            sigma1,
            sigma2,
            lambda: exprs.lambda.clone(),
        })
    }

    /// Spatially constant coefficients, mostly for tests.
    #[allow(clippy::too_many_arguments)]
    pub fn constant(grid: &Grid, d1: f64, d2: f64, beta: f64, m: f64, sigma1: f64, sigma2: f64, lambda: Expr) -> Result<Self> {
        let lit = |v: f64| Expr::Num(v);
        let exprs = CoefficientExprs {
            d1: lit(d1),
            d2: lit(d2),
            beta: lit(beta),
            m: lit(m),
            sigma1: lit(sigma1),
            sigma2: lit(sigma2),
            lambda,
        };
        Self::new(grid, &exprs, &[0.0])
    }

    pub fn beta_norm(&self) -> f64 {
        self.beta.max()
    }

    pub fn sigma2_norm(&self) -> f64 {
        self.sigma2.max()
    }

    /// Upper bound max{‖ρ₀‖∞, ‖β‖∞/m*} for the total vector density.
    pub fn rho_bound(&self, rho0_norm: f64) -> f64 {
        rho0_norm.max(self.beta_norm() / self.m_star)
    }
}

/// Scales a nonnegative seed profile supported in Ω** to unit integral.
pub fn normalize_k(raw_k: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    grid.check(raw_k, Support::Omega)?;
    for (c, &v) in raw_k.values().iter().enumerate() {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::Coefficient(format!("seed profile k is negative or non-finite at cell {:?}", grid.ix_iy(c))));
        }
        if v != 0.0 && !grid.in_starstar(c) {
            return Err(Error::Coefficient(format!(
                "seed profile k is nonzero outside the seeding region at cell {:?}",
                grid.ix_iy(c)
            )));
        }
    }
    let total = grid.integrate(raw_k, Support::Omega)?;
    if total <= 0.0 {
        return Err(Error::Coefficient("seed profile k is identically zero".into()));
    }
    Ok(raw_k.scaled(1.0 / total))
}

/// Zeroes a field outside the seeding region Ω**.
pub fn clip_to_starstar(field: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    grid.check(field, Support::Omega)?;
    let values = field
        .values()
        .iter()
        .enumerate()
        .map(|(c, &v)| if grid.in_starstar(c) { v } else { 0.0 })
        .collect();
    Ok(ScalarField::new(Support::Omega, values))
}

/// Initial data for the four compartments.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub u0: ScalarField,
    pub phi0: ScalarField,
    pub psi0: ScalarField,
    pub z0: Expr,
    pub k: ScalarField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    A0,
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn passed(&self, a: Assumption) -> bool {
        self.checks.iter().filter(|c| c.assumption == a).all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", c.assumption, if c.passed { "ok  " } else { "FAIL" }, c.detail)?;
        }
        Ok(())
    }
}

fn nonneg_nontrivial(field: &ScalarField) -> (bool, bool) {
    (field.values().iter().all(|&v| v >= 0.0), field.values().iter().any(|&v| v > 0.0))
}

/// Checks A0–A6 on evaluated data; `ages` are the cohort midpoints.
pub fn validate_assumptions(coeffs: &CoefficientSet, grid: &Grid, init: &InitialData, ages: &[f64]) -> AssumptionReport {
    let mut checks = Vec::new();
    let mut push = |assumption, passed, detail: String| checks.push(AssumptionCheck { assumption, passed, detail });

    push(
        Assumption::A0,
        coeffs.d_star > 0.0,
        format!("min d1 = {}, min d2 = {}", coeffs.d1.min(), coeffs.d2.min()),
    );

    // A1: z0 on the age grid
    let z0_zero = eval_age(&init.z0, 0.0);
    let samples: Result<Vec<f64>> = ages.iter().map(|&a| eval_age(&init.z0, a)).collect();
    match (z0_zero, samples) {
        (Ok(z00), Ok(samples)) => {
            let nonneg = samples.iter().all(|&v| v >= 0.0);
            let nontrivial = samples.iter().any(|&v| v > 0.0);
            let integrable = samples.iter().all(|v| v.is_finite());
            push(
                Assumption::A1,
                nonneg && nontrivial && integrable && z00.abs() <= 1e-14,
                format!("z0(0) = {z00}, nonnegative: {nonneg}, nontrivial: {nontrivial}"),
            );
        }
        (Err(e), _) | (_, Err(e)) => push(Assumption::A1, false, format!("z0 evaluation failed: {e}")),
    }

    // A2: k
    let (k_nonneg, k_nontrivial) = nonneg_nontrivial(&init.k);
    let outside = init
        .k
        .values()
        .iter()
        .enumerate()
        .any(|(c, &v)| v != 0.0 && !grid.in_starstar(c));
    let k_mass = grid.integrate(&init.k, Support::Omega).unwrap_or(f64::NAN);
    push(
        Assumption::A2,
        k_nonneg && k_nontrivial && !outside && (k_mass - 1.0).abs() <= 1e-12,
        format!("integral of k = {k_mass}, support outside seeding region: {outside}"),
    );

    push(
        Assumption::A3,
        coeffs.sigma1.min() > 0.0 && coeffs.sigma2.min() > 0.0,
        format!("min sigma1 = {}, min sigma2 = {}", coeffs.sigma1.min(), coeffs.sigma2.min()),
    );
    push(
        Assumption::A4,
        coeffs.m_star > 0.0 && coeffs.beta_star > 0.0,
        format!("m_star = {}, beta_star = {}", coeffs.m_star, coeffs.beta_star),
    );
    push(Assumption::A5, coeffs.lambda_star > 0.0, format!("lambda_star = {}", coeffs.lambda_star));

    let (u_nonneg, u_nontrivial) = nonneg_nontrivial(&init.u0);
    let (phi_nonneg, phi_nontrivial) = nonneg_nontrivial(&init.phi0);
    push(
        Assumption::A6,
        u_nonneg && u_nontrivial && phi_nonneg && phi_nontrivial,
        format!(
            "u0 nonnegative/nontrivial: {u_nonneg}/{u_nontrivial}, phi0 nonnegative/nontrivial: {phi_nonneg}/{phi_nontrivial}"
        ),
    );
    AssumptionReport { checks }
}
