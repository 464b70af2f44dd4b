//! CSV and text files written by the command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::Scenario;
use crate::diagnostics::{format_float, DiagnosticsSeries};
use crate::dynamics::SimState;
use crate::grid::{Grid, ScalarField, Support};
use crate::steady::{ConvergenceReport, RhoStar};
use crate::Result;

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

pub fn write_series(dir: &Path, series: &DiagnosticsSeries) -> Result<()> {
    write(dir, "series.csv", &series.to_csv())
}

/// One row per grid cell: `ix,iy,phi,psi,u,v,v_tau`; vector columns are
/// empty outside Ω*.
pub fn final_state_csv(grid: &Grid, state: &SimState) -> String {
    let mut out = String::from("ix,iy,phi,psi,u,v,v_tau\n");
    for c in 0..grid.cell_count() {
        let (ix, iy) = grid.ix_iy(c);
        let (phi, psi) = match grid.local_index(Support::Star, c) {
            Some(l) => (format_float(state.phi.values()[l]), format_float(state.psi.values()[l])),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{ix},{iy},{phi},{psi},{},{},{}",
            format_float(state.u.values()[c]),
            format_float(state.v.values()[c]),
            format_float(state.v_tau.values()[c])
        );
    }
    out
}

pub fn write_final_state(dir: &Path, grid: &Grid, state: &SimState) -> Result<()> {
    write(dir, "final_state.csv", &final_state_csv(grid, state))
}

/// `ix,iy,rho_star` over the Ω* cells.
pub fn rho_star_csv(grid: &Grid, rho: &ScalarField) -> String {
    let mut out = String::from("ix,iy,rho_star\n");
    for (l, c) in grid.cells(Support::Star).into_iter().enumerate() {
        let (ix, iy) = grid.ix_iy(c);
        let _ = writeln!(out, "{ix},{iy},{}", format_float(rho.values()[l]));
    }
    out
}

pub fn steady_summary(rho: &RhoStar, bound: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "residual_linf = {}", format_float(rho.residual));
    let _ = writeln!(out, "rho_star_max = {}", format_float(rho.rho.max()));
    let _ = writeln!(out, "rho_star_min = {}", format_float(rho.rho.min()));
    let _ = writeln!(out, "bound = {}", format_float(bound));
    let _ = writeln!(out, "march_steps = {}", rho.march_steps);
    let _ = writeln!(out, "newton_steps = {}", rho.newton_steps);
    let _ = writeln!(out, "newton_failed = {}", rho.newton_failed);
    out
}

pub fn write_steady(dir: &Path, grid: &Grid, rho: &RhoStar, bound: f64) -> Result<()> {
    write(dir, "rho_star.csv", &rho_star_csv(grid, &rho.rho))?;
    write(dir, "steady.txt", &steady_summary(rho, bound))
}

pub fn report_text(scenario: &Scenario, rho: &RhoStar, report: &ConvergenceReport, clamped: bool) -> String {
    let mut out = String::new();
    let g = &scenario.grid;
    let _ = writeln!(out, "mode: {:?}", scenario.mode);
    let _ = writeln!(out, "grid: {} x {} cells, h = {}", g.nx(), g.ny(), g.h());
    let _ = writeln!(out, "dt = {}, t_end = {}, tau = {}, cohorts = {}", scenario.dt, scenario.t_end(), scenario.tau(), scenario.cohorts);
    let _ = writeln!(out, "rho_star residual = {:.3e}{}", rho.residual, if rho.newton_failed { " (Newton failed)" } else { "" });
    if clamped {
        let _ = writeln!(out, "warning: the transfer term was clamped; results are only qualitative");
    }
    let _ = writeln!(out, "assumptions:");
    for line in scenario.assumptions.to_string().lines() {
        let _ = writeln!(out, "  {line}");
    }
    let _ = write!(out, "{report}");
    out
}

pub fn write_report(dir: &Path, text: &str, report: &ConvergenceReport) -> Result<()> {
    write(dir, "report.txt", text)?;
    write(dir, "report.csv", &report.to_csv())
}
