//! Infection-age structure: cohorts of infected hosts on a midpoint age
//! grid aligned with the time step, so transport in age is an exact shift.

use log::warn;

use crate::coeffs::eval_age;
use crate::diffusion::ImplicitStep;
use crate::expr::Expr;
use crate::grid::{Grid, ScalarField, Support};
use crate::{Error, Result};

/// Largest cohort count the auto policy will produce.
pub const MAX_COHORTS: usize = 100_000;

/// Target for the dropped tail, `e^{−λ*·a_max}`.
pub const TAIL_TOLERANCE: f64 = 1e-10;

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// `∫_{lo}^{hi} λ(a) da` by 5-point Gauss–Legendre.
pub fn integrate_lambda(lambda: &Expr, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::Age(format!("empty age interval [{lo}, {hi}]")));
    }
    let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
    let mut q = 0.0;
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
        q += w * eval_age(lambda, mid + half * x)?;
    }
    Ok(half * q)
}

/// `exp(−∫_{lo}^{hi} λ)`.
pub fn survival_factor(lambda: &Expr, lo: f64, hi: f64) -> Result<f64> {
    Ok((-integrate_lambda(lambda, lo, hi)?).exp())
}

/// Per-cohort survival factors `s_j` over `[j·da, (j+1)·da]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTable {
    da: f64,
    factors: Vec<f64>,
}

impl SurvivalTable {
    pub fn new(lambda: &Expr, da: f64, cohorts: usize) -> Result<Self> {
        check_da(da)?;
        let factors = (0..cohorts)
            .map(|j| survival_factor(lambda, j as f64 * da, (j + 1) as f64 * da))
            .collect::<Result<Vec<_>>>()?;
        Ok(SurvivalTable { da, factors })
    }

    pub fn from_factors(da: f64, factors: Vec<f64>) -> Result<Self> {
        check_da(da)?;
        if factors.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::Age("survival factors must lie in (0, 1]".into()));
        }
        Ok(SurvivalTable { da, factors })
    }

    pub fn da(&self) -> f64 {
        self.da
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factor(&self, j: usize) -> f64 {
        self.factors[j]
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    /// `∏_{k=lo}^{hi−1} s_k`.
    pub fn product(&self, lo: usize, hi: usize) -> f64 {
        self.factors[lo..hi].iter().product()
    }
}

fn check_da(da: f64) -> Result<()> {
    if !(da > 0.0 && da.is_finite()) {
        return Err(Error::Age(format!("age step must be positive, got {da}")));
    }
    Ok(())
}

/// Snaps τ to the nearest cohort face `K·da` (ties round up).
///
/// Returns the face index and the snapped value.
pub fn snap_tau(tau: f64, da: f64) -> Result<(usize, f64)> {
    check_da(da)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Age(format!("incubation period must be nonnegative, got {tau}")));
    }
    let k = (tau / da + 0.5 + 1e-9).floor() as usize;
    let snapped = k as f64 * da;
    if (snapped - tau).abs() > 1e-12 * da.max(tau) {
        warn!("tau = {tau} is not a multiple of the age step {da}; using {snapped}");
    }
    Ok((k, snapped))
}

/// Ages at which the recovery-rate floor is sampled on `[0, J·da]`:
/// the quadrature nodes of every cohort interval.
pub fn lambda_sample_ages(da: f64, cohorts: usize) -> Vec<f64> {
    let mut ages = Vec::with_capacity(5 * cohorts + 1);
    ages.push(0.0);
    for j in 0..cohorts {
        let mid = (j as f64 + 0.5) * da;
        ages.extend(GL5_NODES.iter().map(|x| mid + 0.5 * da * x));
    }
    ages
}

fn lambda_floor(lambda: &Expr, da: f64, cohorts: usize) -> Result<f64> {
    let mut lo = f64::INFINITY;
    for a in lambda_sample_ages(da, cohorts) {
        lo = lo.min(eval_age(lambda, a)?);
    }
    Ok(lo)
}

/// Smallest cohort count `J` with `e^{−λ*·J·da} ≤ 1e-10`, where λ* is the
/// floor of λ sampled on `[0, J·da]` (refined until self-consistent).
pub fn auto_cohorts(lambda: &Expr, da: f64) -> Result<usize> {
    check_da(da)?;
    let needed = |lambda_star: f64| (-TAIL_TOLERANCE.ln() / (lambda_star * da) - 1e-9).ceil().max(1.0);
    let mut j = 1usize;
    loop {
        let floor = lambda_floor(lambda, da, j)?;
        if !(floor > 0.0) {
            return Err(Error::Age(format!(
                "recovery rate floor is {floor} on [0, {}]; an explicit a_max is required",
                j as f64 * da
            )));
        }
        let want = needed(floor);
        if want > MAX_COHORTS as f64 {
            return Err(Error::Age(format!(
                "tail rule needs {want} cohorts, more than the cap of {MAX_COHORTS}"
            )));
        }
        let want = want as usize;
        if want <= j {
            return Ok(j);
        }
        j = want;
    }
}

/// Whether `J` cohorts satisfy the tail rule for the sampled floor of λ.
pub fn tail_rule_holds(lambda: &Expr, da: f64, cohorts: usize) -> Result<bool> {
    let floor = lambda_floor(lambda, da, cohorts)?;
    Ok(floor > 0.0 && (-floor * cohorts as f64 * da).exp() <= TAIL_TOLERANCE * (1.0 + 1e-9))
}

/// Mass bookkeeping of one age step (integrals over Ω, already weighted by da).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgeLedger {
    /// `da·∫B`.
    pub birth: f64,
    /// `da·Σ_{j<J−1} (1 − s_j)·∫D(c_j)`.
    pub recovered: f64,
    /// `da·∫D(c_{J−1})`, dropped past `a_max`.
    pub truncated: f64,
}

impl AgeLedger {
    pub fn removed(&self) -> f64 {
        self.recovered + self.truncated
    }
}

/// Cohort stack `i(x, a_j, t)` with `a_j = (j + ½)·da`, each a field on Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeDensity {
    da: f64,
    cohorts: Vec<ScalarField>,
}

impl AgeDensity {
    pub fn zeros(grid: &Grid, da: f64, cohorts: usize) -> Result<Self> {
        check_da(da)?;
        if cohorts == 0 {
            return Err(Error::Age("need at least one cohort".into()));
        }
        Ok(AgeDensity { da, cohorts: vec![grid.zeros(Support::Omega); cohorts] })
    }

    pub fn from_cohorts(grid: &Grid, da: f64, cohorts: Vec<ScalarField>) -> Result<Self> {
        check_da(da)?;
        if cohorts.is_empty() {
            return Err(Error::Age("need at least one cohort".into()));
        }
        for c in &cohorts {
            grid.check(c, Support::Omega)?;
        }
        Ok(AgeDensity { da, cohorts })
    }

    /// Cohort `j` set to `z0(a_j)·k`.
    pub fn seed(z0: &Expr, k: &ScalarField, grid: &Grid, da: f64, cohorts: usize) -> Result<Self> {
        check_da(da)?;
        grid.check(k, Support::Omega)?;
        let mut out = Vec::with_capacity(cohorts);
        for j in 0..cohorts {
            let a = (j as f64 + 0.5) * da;
            let z = eval_age(z0, a)?;
            if z < 0.0 {
                return Err(Error::Age(format!("initial age profile is negative at a = {a}")));
            }
            out.push(k.scaled(z));
        }
        Self::from_cohorts(grid, da, out)
    }

    pub fn da(&self) -> f64 {
        self.da
    }

    pub fn len(&self) -> usize {
        self.cohorts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cohorts.is_empty()
    }

    pub fn a_max(&self) -> f64 {
        self.len() as f64 * self.da
    }

    pub fn age(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.da
    }

    pub fn cohort(&self, j: usize) -> &ScalarField {
        &self.cohorts[j]
    }

    pub fn cohorts(&self) -> &[ScalarField] {
        &self.cohorts
    }

    /// Diffuses every cohort, applies survival, shifts one age cell and
    /// deposits `birth` in cohort 0. The oldest cohort leaves the grid.
    pub fn step(
        &mut self,
        grid: &Grid,
        diffusion: &ImplicitStep,
        survival: &SurvivalTable,
        birth: ScalarField,
    ) -> Result<AgeLedger> {
        grid.check(&birth, Support::Omega)?;
        let j_max = self.len();
        if survival.len() < j_max {
            return Err(Error::Age(format!("survival table has {} factors, need {j_max}", survival.len())));
        }
        if (diffusion.dt() - self.da).abs() > 1e-12 * self.da {
            return Err(Error::Age(format!("diffusion step dt = {} differs from da = {}", diffusion.dt(), self.da)));
        }
        diffusion.solve_many(&mut self.cohorts)?;
        let area = grid.cell_area();
        let mut ledger = AgeLedger { birth: self.da * area * birth.values().iter().sum::<f64>(), ..Default::default() };
        for (j, c) in self.cohorts.iter_mut().enumerate() {
            let mass = self.da * area * c.values().iter().sum::<f64>();
            if j + 1 == j_max {
                ledger.truncated = mass;
            } else {
                let s = survival.factor(j);
                ledger.recovered += (1.0 - s) * mass;
                c.values_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
        self.cohorts.rotate_right(1);
        self.cohorts[0] = birth;
        Ok(ledger)
    }

    /// `v = da·Σ_j c_j`.
    pub fn integrate_age(&self) -> ScalarField {
        self.sum_from(0)
    }

    /// `v_τ = da·Σ_{j ≥ K} c_j` for the cohort face index `K = τ/da`.
    pub fn integrate_age_from(&self, face: usize) -> Result<ScalarField> {
        if face >= self.len() {
            return Err(Error::Age(format!(
                "incubation face {face} (tau = {}) is not below a_max = {}",
                face as f64 * self.da,
                self.a_max()
            )));
        }
        Ok(self.sum_from(face))
    }

    /// [`AgeDensity::integrate_age_from`] with τ snapped to a face.
    pub fn integrate_age_from_tau(&self, tau: f64) -> Result<ScalarField> {
        self.integrate_age_from(snap_tau(tau, self.da)?.0)
    }

    fn sum_from(&self, face: usize) -> ScalarField {
        let n = self.cohorts[0].len();
        let mut acc = vec![0.0; n];
        for c in &self.cohorts[face..] {
            for (a, v) in acc.iter_mut().zip(c.values()) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a *= self.da);
        ScalarField::new(Support::Omega, acc)
    }

    pub fn min(&self) -> f64 {
        self.cohorts.iter().map(|c| c.min()).fold(f64::INFINITY, f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.cohorts.iter().all(|c| c.all_finite())
    }
}
