//! Subcommand orchestration: wiring configuration into solves, simulations,
//! sweeps, and file output.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::RunConfig;
use crate::csvio;
use crate::error::{Error, Result};
use crate::model::validate;
use crate::montecarlo::{
    comparative_statics, run_experiment, simulate_factor_paths, SweepParameter,
};
use crate::ode_bounds::{
    curve_envelope_constant, ell_constant, penalty_floor, solve_bounding_ode_relaxed,
    subsolution_curve, supersolution_curve, CurveKind,
};
use crate::pde::solve_hjb_with;
use crate::singular::{constrained_convergence_report, penalty_sweep, singular_envelope_check};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Validate,
    Bounds,
    Solve,
    Simulate,
    Sweep,
    Singular,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Validate => "validate",
            Subcommand::Bounds => "bounds",
            Subcommand::Solve => "solve",
            Subcommand::Simulate => "simulate",
            Subcommand::Sweep => "sweep",
            Subcommand::Singular => "singular",
        }
    }
}

/// What a run produced.
#[derive(Debug)]
pub struct RunOutcome {
    /// False when a declared solve failed to converge (exit 1 at the CLI).
    pub converged: bool,
    pub files: Vec<PathBuf>,
}

/// Overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub master_seed: Option<u64>,
    pub sweep_parameter: Option<String>,
    pub sweep_values: Option<Vec<f64>>,
}

pub fn run(
    sub: Subcommand,
    config: &RunConfig,
    out_dir: &Path,
    overrides: &Overrides,
) -> Result<RunOutcome> {
    let mut cfg = config.clone();
    if let Some(seed) = overrides.master_seed {
        cfg.montecarlo.master_seed = seed;
    }
    if let Some(p) = &overrides.sweep_parameter {
        cfg.sweep.parameter = p.clone();
    }
    if let Some(v) = &overrides.sweep_values {
        cfg.sweep.values = v.clone();
    }
    cfg.validate()?;

    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut converged = true;

    match sub {
        Subcommand::Validate => {
            let params = cfg.model_params()?;
            let fields = cfg.coefficient_fields()?;
            let report = validate(
                &params,
                &fields,
                cfg.grid.y_min,
                cfg.grid.y_max,
                cfg.grid.ny.max(101),
            )?;
            let mut text = String::new();
            text.push_str(&format!("bounds_ok = {}\n", report.h2_bounds_ok));
            text.push_str(&format!(
                "worst_bound_violation = {}\n",
                csvio::fmt_float(report.h2_worst_violation)
            ));
            text.push_str(&format!("penalty_ok = {}\n", report.h3_ok));
            text.push_str(&format!(
                "penalty_threshold = {}\n",
                csvio::fmt_float(report.h3_threshold)
            ));
            for msg in &report.messages {
                text.push_str(&format!("# {msg}\n"));
            }
            let path = out_dir.join("validation.txt");
            csvio::write_text(&path, &text)?;
            files.push(path);
        }
        Subcommand::Bounds => {
            let params = cfg.model_params()?;
            let fields = cfg.coefficient_fields()?;
            let grid = cfg.solve_grid()?;
            let times = grid.times();
            let phi = params.impact_exponent;
            let sub_curve = subsolution_curve(
                params.risk_aversion,
                phi,
                &fields.bounds,
                params.penalty,
                &times,
            )?;
            let sup_curve = supersolution_curve(
                params.risk_aversion,
                phi,
                &fields.bounds,
                params.penalty,
                &times,
            )?;
            let sub_path = out_dir.join("subsolution.csv");
            let sup_path = out_dir.join("supersolution.csv");
            csvio::write_curve(&sub_path, &sub_curve)?;
            csvio::write_curve(&sup_path, &sup_curve)?;

            // Derived constants on a dense grid for the ell infimum.
            let dense: Vec<f64> = (0..=100_000)
                .map(|i| params.horizon * i as f64 / 100_000.0)
                .collect();
            let dense_sup = solve_bounding_ode_relaxed(
                CurveKind::Supersolution,
                sup_curve.a,
                sup_curve.b,
                sup_curve.r,
                params.penalty,
                &dense,
            )?;
            let ell = ell_constant(&dense_sup, phi)?;
            let floor = penalty_floor(
                params.risk_aversion,
                phi,
                fields.bounds.sigma_lo,
                fields.bounds.kappa_lo,
            )?;
            let half_exec = crate::ode_bounds::penalty_for_fraction(
                0.5,
                ell,
                fields.bounds.kappa_hi,
                params.horizon,
                phi,
            )?;
            let mut text = String::new();
            text.push_str(&format!("ell = {}\n", csvio::fmt_float(ell)));
            text.push_str(&format!("penalty_floor = {}\n", csvio::fmt_float(floor)));
            text.push_str(&format!(
                "penalty_for_half_execution = {}\n",
                csvio::fmt_float(half_exec)
            ));
            text.push_str(&format!(
                "subsolution_feasible = {}\n",
                sub_curve.feasible
            ));
            text.push_str(&format!(
                "supersolution_feasible = {}\n",
                sup_curve.feasible
            ));
            if sub_curve.feasible {
                text.push_str(&format!(
                    "envelope_constant = {}\n",
                    csvio::fmt_float(
                        curve_envelope_constant(&sub_curve)?
                            .max(curve_envelope_constant(&sup_curve)?)
                    )
                ));
            }
            let path = out_dir.join("bounds.txt");
            csvio::write_text(&path, &text)?;
            files.push(sub_path);
            files.push(sup_path);
            files.push(path);
        }
        Subcommand::Solve => {
            let params = cfg.model_params()?;
            let fields = cfg.coefficient_fields()?;
            let grid = cfg.solve_grid()?;
            let solution = solve_hjb_with(&params, &fields, &grid, &cfg.solver_options())?;
            converged = solution.converged;
            let sol_path = out_dir.join("solution.csv");
            csvio::write_solution(&sol_path, &solution)?;
            let meta_path = out_dir.join("solution_meta.txt");
            csvio::write_text(&meta_path, &csvio::solution_metadata(&solution))?;
            files.push(sol_path);
            files.push(meta_path);
        }
        Subcommand::Simulate => {
            let params = cfg.model_params()?;
            let fields = cfg.coefficient_fields()?;
            let grid = cfg.solve_grid()?;
            let solution = solve_hjb_with(&params, &fields, &grid, &cfg.solver_options())?;
            converged = solution.converged;
            let batch = simulate_factor_paths(
                &fields,
                params.initial_factor,
                &grid.times(),
                cfg.montecarlo.n_paths,
                cfg.montecarlo.master_seed,
            )?;
            let result = run_experiment(&params, &fields, &solution, &batch)?;
            let exhibit = crate::strategy::simulate_execution(
                &solution,
                &params,
                &fields,
                &batch.times,
                batch.factor_path(0),
                batch.price_increments(0),
            )?;
            for (name, write) in [
                ("stats.csv", true),
                ("histograms.csv", true),
                ("terminals.csv", true),
                ("trajectory.csv", true),
            ] {
                let path = out_dir.join(name);
                match name {
                    "stats.csv" => csvio::write_stats(&path, &result.stats)?,
                    "histograms.csv" => csvio::write_histograms(&path, &result.stats)?,
                    "terminals.csv" => csvio::write_terminals(&path, &result.records)?,
                    _ => csvio::write_trajectory(&path, &exhibit)?,
                }
                let _ = write;
                files.push(path);
            }
            let meta_path = out_dir.join("solution_meta.txt");
            csvio::write_text(&meta_path, &csvio::solution_metadata(&solution))?;
            files.push(meta_path);
        }
        Subcommand::Sweep => {
            let params = cfg.model_params()?;
            let fields = cfg.coefficient_fields()?;
            let grid = cfg.solve_grid()?;
            let vary = SweepParameter::parse(&cfg.sweep.parameter)?;
            let batch = simulate_factor_paths(
                &fields,
                params.initial_factor,
                &grid.times(),
                cfg.montecarlo.n_paths,
                cfg.montecarlo.master_seed,
            )?;
            let entries = comparative_statics(
                &params,
                &fields,
                &grid,
                cfg.solver.tolerance_rel,
                cfg.solver.max_iterations,
                vary,
                &cfg.sweep.values,
                &batch,
                0,
            )?;
            for entry in &entries {
                let tag = format!("{}={}", vary.name(), entry.value);
                if !entry.converged {
                    converged = false;
                    let path = out_dir.join(format!("nonconverged_{tag}.txt"));
                    csvio::write_text(
                        &path,
                        &format!("solve did not converge for {tag}\n"),
                    )?;
                    files.push(path);
                    continue;
                }
                let result = entry.result.as_ref().expect("converged entry has stats");
                let stats_path = out_dir.join(format!("stats_{tag}.csv"));
                csvio::write_stats(&stats_path, &result.stats)?;
                files.push(stats_path);
                let hist_path = out_dir.join(format!("histograms_{tag}.csv"));
                csvio::write_histograms(&hist_path, &result.stats)?;
                files.push(hist_path);
                let traj_path = out_dir.join(format!("trajectory_{tag}.csv"));
                csvio::write_trajectory(&traj_path, entry.exhibit.as_ref().unwrap())?;
                files.push(traj_path);
            }
        }
        Subcommand::Singular => {
            let params = cfg.model_params()?;
            let fields = cfg.coefficient_fields()?;
            let grid = cfg.solve_grid()?;
            let sweep = penalty_sweep(
                &params,
                &fields,
                &grid,
                cfg.solver.tolerance_rel,
                cfg.solver.max_iterations,
                &cfg.sweep.penalties,
                cfg.montecarlo.n_paths,
                cfg.montecarlo.master_seed,
            )?;
            let sweep_path = out_dir.join("penalty_sweep.csv");
            csvio::write_penalty_sweep(&sweep_path, &sweep)?;
            files.push(sweep_path);

            let report = constrained_convergence_report(&sweep);
            let mut text = String::new();
            text.push_str(&format!("twap_mean_criterion = {}\n", csvio::fmt_float(sweep.twap_mean_criterion)));
            text.push_str(&format!("pathwise_monotone = {}\n", report.pathwise_monotone));
            text.push_str(&format!(
                "worst_pathwise_violation = {}\n",
                csvio::fmt_float(report.worst_pathwise_violation)
            ));
            text.push_str(&format!("qt_pow_bounded = {}\n", report.qt_pow_bounded));
            text.push_str(&format!("qt_pow_decreasing = {}\n", report.qt_pow_decreasing));
            text.push_str(&format!("criteria_above_twap = {}\n", report.criteria_above_twap));
            text.push_str(&format!("criteria_decreasing = {}\n", report.criteria_decreasing));
            text.push_str(&format!(
                "z_monotonicity_violation = {}\n",
                csvio::fmt_float(sweep.z_monotonicity_violation)
            ));
            for (k, gap) in report.origin_gaps.iter().enumerate() {
                text.push_str(&format!("origin_gap_{k} = {}\n", csvio::fmt_float(*gap)));
            }
            // Envelope check at a few interior times, when the largest
            // penalty supports the strict-limit comparison.
            let t_checks: Vec<f64> = [0.0, 0.5, 0.9]
                .iter()
                .map(|f| f * params.horizon)
                .collect();
            match singular_envelope_check(&sweep, &t_checks) {
                Ok(env) => {
                    text.push_str(&format!("envelope_constant = {}\n", csvio::fmt_float(env.constant)));
                    text.push_str(&format!("envelope_all_inside = {}\n", env.all_inside));
                    for (t, lo, hi) in &env.margins {
                        text.push_str(&format!(
                            "envelope_margin_t_{} = {},{}\n",
                            csvio::fmt_float(*t),
                            csvio::fmt_float(*lo),
                            csvio::fmt_float(*hi)
                        ));
                    }
                }
                Err(e) => {
                    text.push_str(&format!("# envelope check skipped: {e}\n"));
                }
            }
            let report_path = out_dir.join("singular_report.txt");
            csvio::write_text(&report_path, &text)?;
            files.push(report_path);
        }
    }

    let manifest_path = out_dir.join("manifest.txt");
    csvio::write_text(&manifest_path, &manifest(sub, &cfg))?;
    files.push(manifest_path);
    Ok(RunOutcome { converged, files })
}

fn manifest(sub: Subcommand, cfg: &RunConfig) -> String {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!(
        "subcommand = {}\nrun_timestamp = {}\nconfig_hash = {}\nmaster_seed = {}\nversion = {}\n",
        sub.name(),
        timestamp,
        cfg.hash(),
        cfg.montecarlo.master_seed,
        env!("CARGO_PKG_VERSION"),
    )
}

/// Map an error to the documented process exit code.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Parse(_) => 2,
        Error::Usage(_) => 2,
        Error::Config(_) | Error::Domain(_) => 3,
        Error::Io(_) => 4,
        Error::Numeric(_) | Error::Infeasible(_) => 5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn small_config() -> RunConfig {
        RunConfig::from_toml(
            "[grid]\nny = 21\nnt = 60\n\n[montecarlo]\nn_paths = 40\nmaster_seed = 7\n\n\
             [sweep]\nparameter = \"risk_aversion\"\nvalues = [0.05]\npenalties = [3.0, 10.0]\n",
        )
        .unwrap()
    }

    #[test]
    fn validate_and_solve_produce_files() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let out = run(Subcommand::Validate, &cfg, dir.path(), &Overrides::default()).unwrap();
        assert!(out.converged);
        assert!(dir.path().join("validation.txt").exists());
        assert!(dir.path().join("manifest.txt").exists());

        let out = run(Subcommand::Solve, &cfg, dir.path(), &Overrides::default()).unwrap();
        assert!(out.converged);
        let solution = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
        assert!(solution.starts_with("t,y,z\n"));
        // (nt + 1) * ny rows plus header.
        assert_eq!(solution.lines().count(), 1 + 61 * 21);
    }

    #[test]
    fn manifest_hash_revalidates_against_reloaded_config() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        run(Subcommand::Validate, &cfg, dir.path(), &Overrides::default()).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        let line = manifest
            .lines()
            .find(|l| l.starts_with("config_hash = "))
            .unwrap();
        let hash = line.trim_start_matches("config_hash = ");
        let reloaded = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(hash, reloaded.hash());
    }

    #[test]
    fn seed_override_applies() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let overrides = Overrides {
            master_seed: Some(12345),
            ..Overrides::default()
        };
        run(Subcommand::Validate, &cfg, dir.path(), &overrides).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("master_seed = 12345"));
    }

    #[test]
    fn simulate_writes_experiment_files() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let out = run(Subcommand::Simulate, &cfg, dir.path(), &Overrides::default()).unwrap();
        assert!(out.converged);
        for name in ["stats.csv", "histograms.csv", "terminals.csv", "trajectory.csv"] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
        assert!(stats.starts_with("quantity,mean,std,q05,q25,q75,q95\n"));
        assert_eq!(stats.lines().count(), 4);
    }
}
