//! CSV and text exports. All floats serialize with 17 significant digits so
//! repeated runs are byte-comparable.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::montecarlo::{SummaryStats, TerminalRecord};
use crate::ode_bounds::BoundingCurve;
use crate::pde::HjbSolution;
use crate::singular::PenaltySweep;
use crate::strategy::ExecutionTrajectory;

/// 17 significant digits, scientific.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    Ok(())
}

/// Two-column curve export: `t,value`.
pub fn write_curve(path: &Path, curve: &BoundingCurve) -> Result<()> {
    let mut out = String::from("t,value\n");
    for (t, v) in curve.times.iter().zip(&curve.values) {
        let _ = writeln!(out, "{},{}", fmt_float(*t), fmt_float(*v));
    }
    write_text(path, &out)
}

/// Solution export: `t,y,z`, one row per node.
pub fn write_solution(path: &Path, solution: &HjbSolution) -> Result<()> {
    let grid = &solution.grid;
    let mut out = String::from("t,y,z\n");
    for i in 0..=grid.nt {
        for j in 0..grid.ny {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_float(grid.t(i)),
                fmt_float(grid.y(j)),
                fmt_float(solution.z.at(i, j))
            );
        }
    }
    write_text(path, &out)
}

/// Sidecar metadata for a solution: `key = value` text.
pub fn solution_metadata(solution: &HjbSolution) -> String {
    let grid = &solution.grid;
    let p = &solution.params;
    let mut out = String::new();
    let _ = writeln!(out, "y_min = {}", fmt_float(grid.y_min));
    let _ = writeln!(out, "y_max = {}", fmt_float(grid.y_max));
    let _ = writeln!(out, "ny = {}", grid.ny);
    let _ = writeln!(out, "nt = {}", grid.nt);
    let _ = writeln!(out, "horizon = {}", fmt_float(p.horizon));
    let _ = writeln!(out, "impact_exponent = {}", fmt_float(p.impact_exponent));
    let _ = writeln!(out, "risk_aversion = {}", fmt_float(p.risk_aversion));
    let _ = writeln!(out, "penalty = {}", fmt_float(p.penalty));
    let _ = writeln!(out, "iterations = {}", solution.iterations);
    let _ = writeln!(out, "converged = {}", solution.converged);
    let _ = writeln!(out, "gap = {}", fmt_float(solution.gap));
    let _ = writeln!(
        out,
        "max_lower_violation = {}",
        fmt_float(solution.max_lower_violation)
    );
    let _ = writeln!(
        out,
        "max_upper_violation = {}",
        fmt_float(solution.max_upper_violation)
    );
    out
}

/// Stats export: `quantity,mean,std,q05,q25,q75,q95`.
pub fn write_stats(path: &Path, stats: &SummaryStats) -> Result<()> {
    let mut out = String::from("quantity,mean,std,q05,q25,q75,q95\n");
    for (name, s) in [
        ("X_T", &stats.cash),
        ("Q_T", &stats.inventory),
        ("w_T", &stats.wealth),
    ] {
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{}",
            fmt_float(s.mean),
            fmt_float(s.std),
            fmt_float(s.q05),
            fmt_float(s.q25),
            fmt_float(s.q75),
            fmt_float(s.q95)
        );
    }
    write_text(path, &out)
}

/// Histogram export: `quantity,bin_left,bin_right,count`.
pub fn write_histograms(path: &Path, stats: &SummaryStats) -> Result<()> {
    let mut out = String::from("quantity,bin_left,bin_right,count\n");
    for (name, s) in [
        ("X_T", &stats.cash),
        ("Q_T", &stats.inventory),
        ("w_T", &stats.wealth),
    ] {
        for bin in &s.histogram {
            let _ = writeln!(
                out,
                "{name},{},{},{}",
                fmt_float(bin.left),
                fmt_float(bin.right),
                bin.count
            );
        }
    }
    write_text(path, &out)
}

/// Terminal-record export: `path,X_T,Q_T,w_T`.
pub fn write_terminals(path: &Path, records: &[TerminalRecord]) -> Result<()> {
    let mut out = String::from("path,X_T,Q_T,w_T\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.path,
            fmt_float(r.cash),
            fmt_float(r.inventory),
            fmt_float(r.wealth)
        );
    }
    write_text(path, &out)
}

/// Trajectory export: `t,y,S,nu,Q,X,w`.
pub fn write_trajectory(path: &Path, traj: &ExecutionTrajectory) -> Result<()> {
    let mut out = String::from("t,y,S,nu,Q,X,w\n");
    for i in 0..traj.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_float(traj.times[i]),
            fmt_float(traj.y_path[i]),
            fmt_float(traj.s_path[i]),
            fmt_float(traj.nu_path[i]),
            fmt_float(traj.q_path[i]),
            fmt_float(traj.x_path[i]),
            fmt_float(traj.w_path[i])
        );
    }
    write_text(path, &out)
}

/// Penalty-sweep export: `A,z_at_origin,mean_QT_pow,max_QT,mean_J`.
pub fn write_penalty_sweep(path: &Path, sweep: &PenaltySweep) -> Result<()> {
    let mut out = String::from("A,z_at_origin,mean_QT_pow,max_QT,mean_J\n");
    for e in &sweep.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_float(e.penalty),
            fmt_float(e.z_origin),
            fmt_float(e.mean_qt_pow),
            fmt_float(e.max_abs_qt),
            fmt_float(e.mean_criterion)
        );
    }
    write_text(path, &out)
}
