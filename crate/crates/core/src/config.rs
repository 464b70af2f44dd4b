//! TOML scenario files and their validation into a runnable [`Scenario`].

use std::fmt;
use std::path::Path;

use log::{info, warn};
use serde::Deserialize;

use crate::age::{auto_cohorts, lambda_sample_ages, snap_tau, tail_rule_holds, AgeDensity};
use crate::coeffs::{
    clip_to_starstar, evaluate_field, normalize_k, validate_assumptions, AssumptionReport, CoefficientExprs,
    CoefficientSet, InitialData, Mode,
};
use crate::dynamics::{step_count, Model, SimState};
use crate::expr::Expr;
use crate::grid::{Grid, Rect, Support};
use crate::{Error, Result};

/// An expression given either as text or as a bare number.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ExprText {
    Number(f64),
    Text(String),
}

impl ExprText {
    fn parse(&self, key: &str) -> Result<Expr> {
        match self {
            ExprText::Number(v) => Ok(Expr::Num(*v)),
            ExprText::Text(s) => Expr::parse(s).map_err(|e| Error::Config(format!("{key} = \"{s}\": {e}"))),
        }
    }
}

impl fmt::Display for ExprText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprText::Number(v) => write!(f, "{v}"),
            ExprText::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdomainConfig {
    /// `[x0, x1, y0, y1]`.
    pub star: [f64; 4],
    pub starstar: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub d1: ExprText,
    pub d2: ExprText,
    pub beta: ExprText,
    pub m: ExprText,
    pub sigma1: ExprText,
    pub sigma2: ExprText,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AMax {
    Value(f64),
    Policy(String),
}

impl Default for AMax {
    fn default() -> Self {
        AMax::Policy("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeConfig {
    pub lambda: ExprText,
    pub tau: f64,
    #[serde(default)]
    pub a_max: AMax,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub u0: ExprText,
    pub phi0: ExprText,
    pub z0: ExprText,
    pub k: ExprText,
    #[serde(default)]
    pub psi0: Option<ExprText>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
}

fn default_output_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_steady_tol")]
    pub steady_tol: f64,
    #[serde(default = "default_invariant_tol")]
    pub invariant_tol: f64,
}

fn default_cg_tol() -> f64 {
    1e-12
}

fn default_steady_tol() -> f64 {
    1e-10
}

fn default_invariant_tol() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { cg_tol: default_cg_tol(), steady_tol: default_steady_tol(), invariant_tol: default_invariant_tol() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub mode: Mode,
    pub domain: DomainConfig,
    pub subdomains: SubdomainConfig,
    pub coefficients: CoefficientConfig,
    pub age: AgeConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Config::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn rect(r: [f64; 4]) -> Rect {
    Rect::new(r[0], r[1], r[2], r[3])
}

/// A validated configuration with every field evaluated.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: Config,
    pub mode: Mode,
    pub grid: Grid,
    pub coeffs: CoefficientSet,
    pub init: InitialData,
    pub dt: f64,
    pub tau_face: usize,
    pub cohorts: usize,
    pub steps: usize,
    pub output_every: usize,
    pub tolerances: Tolerances,
    pub assumptions: AssumptionReport,
}

impl Scenario {
    pub fn from_config(config: &Config) -> Result<Self> {
        let mode = config.mode;
        let d = &config.domain;
        let grid = Grid::build(d.lx, d.ly, d.nx, d.ny, rect(config.subdomains.star), rect(config.subdomains.starstar))?;

        let t = &config.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return Err(Error::Config(format!("time.dt must be positive, got {}", t.dt)));
        }
        if t.output_every == 0 {
            return Err(Error::Config("time.output_every must be at least 1".into()));
        }
        let steps = step_count(t.t_end, t.dt)?;
        let tol = &config.tolerances;
        for (name, v) in [("cg_tol", tol.cg_tol), ("steady_tol", tol.steady_tol), ("invariant_tol", tol.invariant_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerances.{name} must be positive, got {v}")));
            }
        }

        let c = &config.coefficients;
        let exprs = CoefficientExprs {
            d1: c.d1.parse("coefficients.d1")?,
            d2: c.d2.parse("coefficients.d2")?,
            beta: c.beta.parse("coefficients.beta")?,
            m: c.m.parse("coefficients.m")?,
            sigma1: c.sigma1.parse("coefficients.sigma1")?,
            sigma2: c.sigma2.parse("coefficients.sigma2")?,
            lambda: config.age.lambda.parse("age.lambda")?,
        };

        let dt = t.dt;
        let cohorts = match &config.age.a_max {
            AMax::Policy(p) if p == "auto" => auto_cohorts(&exprs.lambda, dt)?,
            AMax::Policy(p) => return Err(Error::Config(format!("age.a_max must be \"auto\" or a number, got \"{p}\""))),
            AMax::Value(a) => {
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::Config(format!("age.a_max must be positive, got {a}")));
                }
                let j = (a / dt - 1e-9).ceil().max(1.0) as usize;
                if mode == Mode::Paper && !tail_rule_holds(&exprs.lambda, dt, j)? {
                    return Err(Error::Config(format!(
                        "age.a_max = {a} leaves a tail above {:e}; use \"auto\" or a larger value",
                        crate::age::TAIL_TOLERANCE
                    )));
                }
                j
            }
        };
        info!("age grid: {cohorts} cohorts, a_max = {}", cohorts as f64 * dt);
        let (tau_face, tau) = snap_tau(config.age.tau, dt)?;
        if tau_face >= cohorts {
            return Err(Error::Config(format!("age.tau = {tau} must be below a_max = {}", cohorts as f64 * dt)));
        }

        let coeffs = CoefficientSet::new(&grid, &exprs, &lambda_sample_ages(dt, cohorts))
            .map_err(|e| Error::Config(format!("coefficients: {e}")))?;

        let i = &config.initial;
        let u0 = evaluate_field(&i.u0.parse("initial.u0")?, &grid, Support::Omega)?;
        let phi0 = evaluate_field(&i.phi0.parse("initial.phi0")?, &grid, Support::Star)?;
        let psi0 = match (&i.psi0, mode) {
            (None, _) => grid.zeros(Support::Star),
            (Some(_), Mode::Paper) => {
                return Err(Error::Config("initial.psi0 is only allowed in lab mode".into()));
            }
            (Some(p), Mode::Lab) => evaluate_field(&p.parse("initial.psi0")?, &grid, Support::Star)?,
        };
        let z0 = i.z0.parse("initial.z0")?;
        let raw_k = evaluate_field(&i.k.parse("initial.k")?, &grid, Support::Omega)?;
        let clipped = clip_to_starstar(&raw_k, &grid)?;
        if clipped != raw_k {
            info!("initial.k clipped to the seeding region");
        }
        let k = normalize_k(&clipped, &grid).map_err(|e| Error::Config(format!("initial.k: {e}")))?;
        let init = InitialData { u0, phi0, psi0, z0, k };

        let ages: Vec<f64> = (0..cohorts).map(|j| (j as f64 + 0.5) * dt).collect();
        let assumptions = validate_assumptions(&coeffs, &grid, &init, &ages);
        if !assumptions.all_passed() {
            let list: Vec<String> =
                assumptions.failures().iter().map(|c| format!("{}: {}", c.assumption, c.detail)).collect();
            match mode {
                Mode::Paper => return Err(Error::Assumptions(list.join("; "))),
                Mode::Lab => warn!("lab mode, assumptions not met: {}", list.join("; ")),
            }
        }

        Ok(Scenario {
            config: config.clone(),
            mode,
            grid,
            coeffs,
            init,
            dt,
            tau_face,
            cohorts,
            steps,
            output_every: t.output_every,
            tolerances: tol.clone(),
            assumptions,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config(&load_config(path)?)
    }

    pub fn t_end(&self) -> f64 {
        self.config.time.t_end
    }

    pub fn tau(&self) -> f64 {
        self.tau_face as f64 * self.dt
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(
            self.grid.clone(),
            self.coeffs.clone(),
            self.dt,
            self.tau_face,
            self.cohorts,
            self.tolerances.invariant_tol,
        )
    }

    pub fn initial_state(&self, model: &Model) -> Result<SimState> {
        model.initial_state(&self.init)
    }

    pub fn seed(&self) -> Result<AgeDensity> {
        AgeDensity::seed(&self.init.z0, &self.init.k, &self.grid, self.dt, self.cohorts)
    }
}
