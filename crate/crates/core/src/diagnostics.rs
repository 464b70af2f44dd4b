//! Norms, totals and the per-record diagnostics series.

use std::io::Write;

use crate::dynamics::{SimState, StepReport};
use crate::grid::{Grid, ScalarField, Support};
use crate::{Error, Result};

/// The cached `v` is re-summed from the cohorts once per this many records.
pub const CROSS_CHECK_EVERY: usize = 100;

pub const COLUMNS: [&str; 14] = [
    "t",
    "U",
    "V",
    "V_tau_total",
    "v_l1",
    "v_linf",
    "psi_l1",
    "psi_l2",
    "psi_linf",
    "phi_minus_rho_star_linf",
    "u_dev_l2",
    "u_bar",
    "mass_residual",
    "clamp_flag",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

/// Midpoint-rule norms: `h²Σ|w|`, `sqrt(h²Σw²)`, `max|w|`.
pub fn norm(field: &ScalarField, cell_area: f64, kind: NormKind) -> f64 {
    let w = field.values();
    match kind {
        NormKind::L1 => cell_area * w.iter().map(|x| x.abs()).sum::<f64>(),
        NormKind::L2 => (cell_area * w.iter().map(|x| x * x).sum::<f64>()).sqrt(),
        NormKind::Linf => w.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// One diagnostics record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub t: f64,
    pub u_total: f64,
    pub v_total: f64,
    pub v_tau_total: f64,
    pub v_l1: f64,
    pub v_linf: f64,
    pub psi_l1: f64,
    pub psi_l2: f64,
    pub psi_linf: f64,
    pub phi_minus_rho_star_linf: f64,
    pub u_dev_l2: f64,
    pub u_bar: f64,
    /// Largest relative host-ledger residual over the steps since the previous record.
    pub mass_residual: f64,
    /// Whether the transfer was clamped in any step since the previous record.
    pub clamp_flag: bool,
}

impl Row {
    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.u_total,
            self.v_total,
            self.v_tau_total,
            self.v_l1,
            self.v_linf,
            self.psi_l1,
            self.psi_l2,
            self.psi_linf,
            self.phi_minus_rho_star_linf,
            self.u_dev_l2,
            self.u_bar,
            self.mass_residual,
        ]
    }
}

pub fn record(grid: &Grid, state: &SimState, rho_star: &ScalarField, mass_residual: f64, clamp_flag: bool) -> Result<Row> {
    let area = grid.cell_area();
    let u_total = grid.integrate(&state.u, Support::Omega)?;
    let u_bar = u_total / grid.area();
    let u_dev = state.u.map(|x| x - u_bar);
    let phi_dev = state.phi.zip_with(rho_star, |p, r| p - r)?;
    Ok(Row {
        t: state.t,
        u_total,
        v_total: grid.integrate(&state.v, Support::Omega)?,
        v_tau_total: grid.integrate(&state.v_tau, Support::Omega)?,
        v_l1: norm(&state.v, area, NormKind::L1),
        v_linf: norm(&state.v, area, NormKind::Linf),
        psi_l1: norm(&state.psi, area, NormKind::L1),
        psi_l2: norm(&state.psi, area, NormKind::L2),
        psi_linf: norm(&state.psi, area, NormKind::Linf),
        phi_minus_rho_star_linf: norm(&phi_dev, area, NormKind::Linf),
        u_dev_l2: norm(&u_dev, area, NormKind::L2),
        u_bar,
        mass_residual,
        clamp_flag,
    })
}

/// Accumulates per-step quantities between records.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    pub max_relative_residual: f64,
    pub clamped: bool,
    /// `Σ dt·‖ψ(t_n)‖∞` over all steps so far.
    pub psi_sup_integral: f64,
}

impl Recorder {
    pub fn absorb(&mut self, state: &SimState, report: &StepReport, dt: f64) {
        self.max_relative_residual = self.max_relative_residual.max(report.relative_mass_residual());
        self.clamped |= report.clamped;
        self.psi_sup_integral += dt * norm(&state.psi, 1.0, NormKind::Linf);
    }

    pub fn reset_interval(&mut self) {
        self.max_relative_residual = 0.0;
        self.clamped = false;
    }
}

/// Time-ordered records, each paired with the running `Σ dt·‖ψ‖∞`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsSeries {
    rows: Vec<Row>,
    psi_sup_integral: Vec<f64>,
}

impl DiagnosticsSeries {
    pub fn push(&mut self, row: Row, psi_sup_integral: f64) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::Invariant { t: row.t, what: format!("record time not increasing after {}", last.t) });
            }
        }
        if !row.values().iter().all(|v| v.is_finite()) {
            return Err(Error::Invariant { t: row.t, what: "non-finite diagnostics".into() });
        }
        self.rows.push(row);
        self.psi_sup_integral.push(psi_sup_integral);
        Ok(())
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn last(&self) -> Option<&Row> {
        self.rows.last()
    }

    /// Running `Σ dt·‖ψ(t_n)‖∞` at each record.
    pub fn psi_sup_integral(&self) -> &[f64] {
        &self.psi_sup_integral
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", COLUMNS.join(","))?;
        for r in &self.rows {
            let mut line: Vec<String> = r.values().iter().map(|&v| format_float(v)).collect();
            line.push(if r.clamp_flag { "1".into() } else { "0".into() });
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// 17 significant digits, locale-free.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Re-sums `v` from the cohorts cell by cell and compares with the cache.
pub fn cross_check_v(state: &SimState) -> Result<()> {
    let da = state.i.da();
    let n = state.v.len();
    for c in 0..n {
        let direct = da * state.i.cohorts().iter().map(|k| k.values()[c]).sum::<f64>();
        let cached = state.v.values()[c];
        if (direct - cached).abs() > 1e-12 * direct.abs().max(cached.abs()) + 1e-300 {
            return Err(Error::Invariant {
                t: state.t,
                what: format!("cached v = {cached} differs from direct sum {direct} in cell {c}"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::age::AgeDensity;
    use crate::grid::Rect;
    use proptest::prelude::*;

    fn unit_grid(n: usize) -> Grid {
        Grid::build(1.0, 1.0, n, n, Rect::square(0.3, 0.7), Rect::square(0.0, 0.2)).unwrap()
    }

    #[test]
    fn norm_examples() {
        let g = unit_grid(4);
        let one = g.constant(Support::Omega, 1.0);
        for kind in [NormKind::L1, NormKind::L2, NormKind::Linf] {
            assert!((norm(&one, g.cell_area(), kind) - 1.0).abs() < 1e-15);
        }
        let two = ScalarField::new(Support::Omega, vec![3.0, 4.0]);
        assert_eq!(norm(&two, 0.5, NormKind::L1), 3.5);
        assert_eq!(norm(&two, 0.5, NormKind::L2), 12.5f64.sqrt());
        assert_eq!(norm(&two, 0.5, NormKind::Linf), 4.0);
    }

    fn state(g: &Grid, u: f64, psi: f64, cohort: f64) -> SimState {
        let i = AgeDensity::from_cohorts(g, 0.5, vec![g.constant(Support::Omega, cohort); 4]).unwrap();
        SimState {
            t: 0.0,
            steps: 0,
            phi: g.constant(Support::Star, 2.0),
            psi: g.constant(Support::Star, psi),
            rho: g.constant(Support::Star, 2.0 + psi),
            u: g.constant(Support::Omega, u),
            v: i.integrate_age(),
            v_tau: i.integrate_age_from(2).unwrap(),
            i,
        }
    }

    #[test]
    fn record_by_hand() {
        let g = unit_grid(4);
        let s = state(&g, 3.0, 0.5, 1.0);
        let rho_star = g.constant(Support::Star, 1.5);
        let r = record(&g, &s, &rho_star, 0.0, false).unwrap();
        assert!((r.u_total - 3.0).abs() < 1e-15);
        assert!((r.u_bar - 3.0).abs() < 1e-15);
        assert!(r.u_dev_l2 < 1e-15);
        assert!((r.v_total - 2.0).abs() < 1e-15);
        assert!((r.v_tau_total - 1.0).abs() < 1e-15);
        assert!((r.v_linf - 2.0).abs() < 1e-15);
        // Ω* is the central 2x2 block: area 1/4
        assert!((r.psi_l1 - 0.125).abs() < 1e-15);
        assert!((r.psi_l2 - (0.25f64 * 0.25).sqrt()).abs() < 1e-15);
        assert_eq!(r.psi_linf, 0.5);
        assert_eq!(r.phi_minus_rho_star_linf, 0.5);
        cross_check_v(&s).unwrap();
        let mut bad = s.clone();
        bad.v.values_mut()[3] += 1e-6;
        assert!(cross_check_v(&bad).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = unit_grid(4);
        let s = state(&g, 1.0, 0.0, 0.0);
        let mut series = DiagnosticsSeries::default();
        series.push(record(&g, &s, &g.constant(Support::Star, 2.0), 0.0, false).unwrap(), 0.0).unwrap();
        let csv = series.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], COLUMNS.join(","));
        assert_eq!(lines[1].split(',').count(), 14);
        assert!(lines[1].starts_with("0.0000000000000000e0,1.0000000000000000e0,"));
        assert!(lines[1].ends_with(",0"));
        // time must increase
        let again = record(&g, &s, &g.constant(Support::Star, 2.0), 0.0, false).unwrap();
        assert!(series.push(again, 0.0).is_err());
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -2.5] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    proptest! {
        #[test]
        fn norm_properties(vals in proptest::collection::vec(-10.0f64..10.0, 36), c in -4.0f64..4.0) {
            let g = Grid::build(2.0, 2.0, 6, 6, Rect::square(0.5, 1.5), Rect::square(0.0, 0.5)).unwrap();
            let w = ScalarField::new(Support::Omega, vals);
            let a = g.cell_area();
            let area = g.area();
            let (l1, l2, li) = (norm(&w, a, NormKind::L1), norm(&w, a, NormKind::L2), norm(&w, a, NormKind::Linf));
            prop_assert!(l1 <= area.sqrt() * l2 * (1.0 + 1e-12) + 1e-300);
            prop_assert!(l2 <= area.sqrt() * li * (1.0 + 1e-12) + 1e-300);
            let cw = w.scaled(c);
            for kind in [NormKind::L1, NormKind::L2, NormKind::Linf] {
                let lhs = norm(&cw, a, kind);
                let rhs = c.abs() * norm(&w, a, kind);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
            }
        }
    }
}
