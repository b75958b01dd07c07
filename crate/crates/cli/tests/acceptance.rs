//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured quantities. Run with `--nocapture` to see the measurements.
//!
//! The reference experiment (A = 3, phi = 0.75, gamma = 0.05, q0 = 15,
//! S0 = 40 on the factor-driven coefficient set) is solved once and shared
//! by the statistical criteria.

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use hjb_exec_core::hamiltonian::abs_pow;
use hjb_exec_core::model::{CoefficientBounds, CoefficientFields, CoefficientSpec, ModelParams};
use hjb_exec_core::montecarlo::{
    comparative_statics, run_experiment, run_twap, simulate_factor_paths, ExperimentResult,
    PathBatch, SweepParameter,
};
use hjb_exec_core::ode_bounds::{ell_constant, supersolution_curve};
use hjb_exec_core::pde::{build_grid, solve_hjb, HjbSolution};
use hjb_exec_core::singular::{constrained_convergence_report, penalty_sweep};
use hjb_exec_core::strategy::{inventory_bound_check, simulate_execution};

const PATHS: usize = 10_000;
const SEED: u64 = 42;
/// Time resolution for the reference-experiment criteria; the bracketing
/// scheme is plain Crank-Nicolson in the bulk at this step size.
const REFERENCE_NT: usize = 2500;

fn constant_unit_fields() -> CoefficientFields {
    CoefficientFields::new(
        CoefficientSpec::Constant(1.0),
        CoefficientSpec::Constant(1.0),
        CoefficientSpec::Constant(0.0),
        CoefficientSpec::Constant(1.0),
        CoefficientBounds::new(1.0, 1.0, 1.0, 1.0).unwrap(),
    )
    .unwrap()
}

struct ReferenceRun {
    params: ModelParams,
    fields: CoefficientFields,
    solution: HjbSolution,
    batch: PathBatch,
    result: ExperimentResult,
    twap: ExperimentResult,
}

fn reference_run() -> &'static ReferenceRun {
    static RUN: OnceLock<ReferenceRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let params = ModelParams::reference();
        let fields = CoefficientFields::reference();
        let grid = build_grid(-5.0, 5.0, 201, REFERENCE_NT, params.horizon).unwrap();
        let solution = solve_hjb(&params, &fields, &grid, 1e-6 * params.penalty, 100).unwrap();
        assert!(solution.converged, "reference solve did not converge");
        let batch =
            simulate_factor_paths(&fields, params.initial_factor, &grid.times(), PATHS, SEED)
                .unwrap();
        let result = run_experiment(&params, &fields, &solution, &batch).unwrap();
        let twap = run_twap(&params, &fields, &batch).unwrap();
        ReferenceRun {
            params,
            fields,
            solution,
            batch,
            result,
            twap,
        }
    })
}

fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

fn arccoth(x: f64) -> f64 {
    0.5 * ((x + 1.0) / (x - 1.0)).ln()
}

#[test]
fn criterion_1_riccati_oracle() {
    let start = Instant::now();
    let params = ModelParams::new(1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 0.0, 0.0).unwrap();
    let fields = constant_unit_fields();
    let grid = build_grid(-5.0, 5.0, 201, 500, 1.0).unwrap();
    let solution = solve_hjb(&params, &fields, &grid, 1e-6 * 2.0, 100).unwrap();
    assert!(solution.converged);
    let shift = arccoth(2.0);
    let mut err: f64 = 0.0;
    for i in 0..=grid.nt {
        let exact = -coth((1.0 - grid.t(i)) + shift);
        for j in 0..grid.ny {
            err = err.max((solution.z.at(i, j) - exact).abs());
        }
    }
    let elapsed = start.elapsed();
    assert!(err < 1e-4, "max error {err:.3e} vs closed form");
    assert!(elapsed.as_secs_f64() < 5.0, "runtime {elapsed:.2?}");
    println!(
        "criterion 1 PASS: closed-form error {err:.3e} (< 1e-4), runtime {elapsed:.2?} (< 5 s)"
    );
}

#[test]
fn criterion_2_general_exponent_oracle() {
    let phi = 0.75;
    let params = ModelParams::new(1.0, phi, 1.0, 2.0, 1.0, 1.0, 0.0, 0.0).unwrap();
    let fields = constant_unit_fields();

    // Dense RK4 reference for z' = 1 - phi |z|^(1 + 1/phi), z(T) = -A,
    // independent of the solver path.
    let fine_steps = 200_000;
    let mut reference = vec![0.0; fine_steps + 1];
    reference[fine_steps] = -2.0;
    let g = |z: f64| -(1.0 - phi * z.abs().powf(1.0 + 1.0 / phi));
    let h = 1.0 / fine_steps as f64;
    let mut u = -2.0;
    for i in (0..fine_steps).rev() {
        let k1 = g(u);
        let k2 = g(u + 0.5 * h * k1);
        let k3 = g(u + 0.5 * h * k2);
        let k4 = g(u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        reference[i] = u;
    }

    let mut errors = Vec::new();
    for (ny, nt) in [(101usize, 250usize), (201, 500)] {
        let grid = build_grid(-5.0, 5.0, ny, nt, 1.0).unwrap();
        let solution = solve_hjb(&params, &fields, &grid, 1e-10, 200).unwrap();
        assert!(solution.converged);
        let stride = fine_steps / nt;
        let mut err: f64 = 0.0;
        for i in 0..=nt {
            let exact = reference[i * stride];
            for j in 0..ny {
                err = err.max((solution.z.at(i, j) - exact).abs());
            }
        }
        errors.push(err);
    }
    let ratio = errors[0] / errors[1];
    assert!(errors[1] < 1e-4, "fine-grid error {:.3e}", errors[1]);
    assert!(ratio >= 3.0, "refinement ratio {ratio:.2}");
    println!(
        "criterion 2 PASS: errors {:.3e} -> {:.3e} (< 1e-4), refinement ratio {ratio:.2} (>= 3)",
        errors[0], errors[1]
    );
}

#[test]
fn criterion_3_monotone_bracketing() {
    let run = reference_run();
    let sol = &run.solution;
    let penalty = run.params.penalty;
    let budget = 1e-9 * penalty;
    assert!(sol.converged, "bracket gap never reached 1e-6 * A");
    assert!(
        sol.iterations <= 100,
        "took {} iterations (> 100)",
        sol.iterations
    );
    assert!(
        sol.gap < 1e-6 * penalty,
        "final gap {:.3e} above 1e-6 * A",
        sol.gap
    );
    assert!(
        sol.max_lower_violation < budget,
        "lower iterates regressed by {:.3e} (budget {budget:.1e})",
        sol.max_lower_violation
    );
    assert!(
        sol.max_upper_violation < budget,
        "upper iterates increased by {:.3e} (budget {budget:.1e})",
        sol.max_upper_violation
    );
    // Final z inside the seed band.
    let grid = &sol.grid;
    for i in 0..=grid.nt {
        for j in 0..grid.ny {
            assert!(
                sol.z.at(i, j) >= sol.lower_curve.values[i] - budget,
                "z below the lower curve at (i={i}, j={j})"
            );
            assert!(
                sol.z.at(i, j) <= sol.upper_curve.values[i] + budget,
                "z above the upper curve at (i={i}, j={j})"
            );
        }
    }
    println!(
        "criterion 3 PASS: gap {:.3e} in {} iterations, ordering violations ({:.2e}, {:.2e}) < {budget:.1e}, z inside [lower, upper]",
        sol.gap, sol.iterations, sol.max_lower_violation, sol.max_upper_violation
    );
}

// The inventory targets of this criterion are not attainable from the
// configured dynamics: an independent discretized optimization of the
// deterministic problem (L-BFGS-B over the rate path, no shared code with
// the solver) puts the optimal terminal inventory at 0.170 for this
// parameter set, and its optimal value matches z(0, y0) |q0|^(1+phi) to five
// digits, so the solver, the simulator, and the independent optimizer agree
// with each other and disagree with the 0.080 target. The criterion runs as
// stated and reports every check; the two inventory checks fail.
#[test]
fn criterion_4_reference_statistics() {
    let start = Instant::now();
    let run = reference_run();
    let stats = &run.result.stats;
    let elapsed = start.elapsed();

    let checks = [
        ("mean X_T", stats.cash.mean, 578.122, 0.05),
        ("mean Q_T", stats.inventory.mean, 0.080, 0.05),
        ("mean w_T", stats.wealth.mean, 581.335, 0.05),
        ("std X_T", stats.cash.std, 15.612, 0.25),
        ("std Q_T", stats.inventory.std, 0.047, 0.25),
        ("std w_T", stats.wealth.std, 15.601, 0.25),
    ];
    let mut failures = Vec::new();
    for (name, got, target, tol) in checks {
        let rel = (got - target).abs() / target.abs();
        let verdict = if rel < tol { "ok" } else { "FAIL" };
        println!(
            "criterion 4 check: {name} = {got:.4} vs {target} ({:.2}% off, tolerance {:.0}%): {verdict}",
            rel * 100.0,
            tol * 100.0
        );
        if rel >= tol {
            failures.push(format!("{name} = {got:.4} vs {target}"));
        }
    }
    assert!(elapsed.as_secs_f64() < 120.0, "runtime {elapsed:.2?}");
    println!("criterion 4 runtime {elapsed:.2?} (< 2 min)");
    assert!(
        failures.is_empty(),
        "reference statistics outside tolerance: {}",
        failures.join("; ")
    );
    println!("criterion 4 PASS");
}

#[test]
fn criterion_5_trend_orderings() {
    let run = reference_run();
    let grid = build_grid(-5.0, 5.0, 201, REFERENCE_NT, run.params.horizon).unwrap();

    let gamma_entries = comparative_statics(
        &run.params,
        &run.fields,
        &grid,
        1e-6,
        100,
        SweepParameter::RiskAversion,
        &[0.005, 0.05, 0.5],
        &run.batch,
        0,
    )
    .unwrap();
    let gamma_means: Vec<f64> = gamma_entries
        .iter()
        .map(|e| e.result.as_ref().unwrap().stats.inventory.mean)
        .collect();
    assert!(
        gamma_means[0] > gamma_means[1] && gamma_means[1] > gamma_means[2],
        "E[Q_T] not strictly decreasing across gamma: {gamma_means:?}"
    );

    let phi_entries = comparative_statics(
        &run.params,
        &run.fields,
        &grid,
        1e-6,
        100,
        SweepParameter::ImpactExponent,
        &[0.5, 0.75, 1.0],
        &run.batch,
        0,
    )
    .unwrap();
    let phi_means: Vec<f64> = phi_entries
        .iter()
        .map(|e| e.result.as_ref().unwrap().stats.inventory.mean)
        .collect();
    assert!(
        phi_means[0] < phi_means[1] && phi_means[1] < phi_means[2],
        "E[Q_T] not strictly increasing across phi: {phi_means:?}"
    );
    println!(
        "criterion 5 PASS: E[Q_T] over gamma {{0.005, 0.05, 0.5}} = {:.4?} strictly decreasing; \
         over phi {{0.5, 0.75, 1}} = {:.4?} strictly increasing (common random numbers)",
        gamma_means, phi_means
    );
}

#[test]
fn criterion_6_pathwise_invariants() {
    let run = reference_run();
    let params = &run.params;
    let phi = params.impact_exponent;
    let q0 = params.initial_inventory;

    // The ell constant from the model-level supersolution on a dense grid.
    let dense: Vec<f64> = (0..=100_000)
        .map(|i| params.horizon * i as f64 / 100_000.0)
        .collect();
    let sup = supersolution_curve(
        params.risk_aversion,
        phi,
        &run.fields.bounds,
        params.penalty,
        &dense,
    )
    .unwrap();
    let ell = ell_constant(&sup, phi).unwrap();

    let mut worst_margin = f64::INFINITY;
    for path in 0..run.batch.n_paths {
        let traj = simulate_execution(
            &run.solution,
            params,
            &run.fields,
            &run.batch.times,
            run.batch.factor_path(path),
            run.batch.price_increments(path),
        )
        .unwrap();
        for i in 0..traj.times.len() {
            assert!(
                q0 * traj.nu_path[i] <= 0.0,
                "q0 * nu > 0 on path {path} at node {i}"
            );
            assert!(
                q0 * traj.q_path[i] >= 0.0,
                "q0 * Q < 0 on path {path} at node {i}"
            );
        }
        let report = inventory_bound_check(
            &traj,
            ell,
            run.fields.bounds.kappa_hi,
            params.penalty,
            phi,
            q0,
            params.horizon,
        );
        assert!(
            report.all_pass(),
            "inventory bound failed on path {path}: worst margin {:.3e}",
            report.worst_margin
        );
        worst_margin = worst_margin.min(report.worst_margin);
    }
    println!(
        "criterion 6 PASS: sign conditions and the terminal-inventory bound hold on all {} paths \
         at every sample (ell = {ell:.4}, worst bound margin {worst_margin:.3e})",
        run.batch.n_paths
    );
}

#[test]
fn criterion_7_verification_identity() {
    let run = reference_run();
    let params = &run.params;
    let target = run.solution.z_at(0.0, params.initial_factor)
        * abs_pow(params.initial_inventory, 1.0 + params.impact_exponent);
    let mean = run.result.mean_criterion;
    let se = run.result.criterion_se;
    let gap = (mean - target).abs();
    assert!(
        gap <= 3.0 * se,
        "mean criterion {mean:.4} vs z(0,y0)|q0|^(1+phi) = {target:.4}: off by {gap:.4} (> 3 SE = {:.4})",
        3.0 * se
    );
    assert!(
        mean > run.twap.mean_criterion,
        "optimal mean criterion {mean:.4} does not beat TWAP {:.4}",
        run.twap.mean_criterion
    );
    println!(
        "criterion 7 PASS: mean criterion {mean:.4} vs z(0,y0)|q0|^(1+phi) = {target:.4} \
         (gap {gap:.4} <= 3 SE = {:.4}); TWAP benchmark {:.4} beaten",
        3.0 * se,
        run.twap.mean_criterion
    );
}

#[test]
fn criterion_8_singular_limit() {
    let start = Instant::now();
    let params = ModelParams::reference();
    let fields = CoefficientFields::reference();
    let base_grid = build_grid(-5.0, 5.0, 201, 500, params.horizon).unwrap();
    let penalties = [3.0, 10.0, 30.0, 100.0, 300.0, 1000.0];
    let sweep = penalty_sweep(
        &params, &fields, &base_grid, 1e-6, 100, &penalties, PATHS, SEED,
    )
    .unwrap();

    for w in sweep.entries.windows(2) {
        assert!(
            w[1].z_origin < w[0].z_origin,
            "z(0, y0) not strictly decreasing: {} (A = {}) vs {} (A = {})",
            w[0].z_origin,
            w[0].penalty,
            w[1].z_origin,
            w[1].penalty
        );
    }
    let m = sweep.twap_mean_criterion;
    for e in &sweep.entries {
        let bound = -m / e.penalty;
        assert!(
            e.mean_qt_pow <= bound,
            "E|Q_T|^(1+phi) = {:.3e} above -m/A = {bound:.3e} at A = {}",
            e.mean_qt_pow,
            e.penalty
        );
    }
    let last = sweep.entries.last().unwrap();
    assert!(
        last.max_abs_qt < 1e-2,
        "max |Q_T| = {:.3e} at A = 1000 (>= 1e-2)",
        last.max_abs_qt
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 900.0, "runtime {elapsed:.2?}");

    let report = constrained_convergence_report(&sweep);
    assert!(report.criteria_above_twap, "{:?}", report.details);
    println!(
        "criterion 8 PASS: z(0,y0) strictly decreasing over A = {penalties:?} \
         ({:.5} .. {:.5}); E|Q_T|^(1+phi) <= -m/A everywhere (m = {m:.3}); \
         max |Q_T| at A=1000 is {:.2e} (< 1e-2); runtime {elapsed:.2?} (< 15 min)",
        sweep.entries[0].z_origin,
        last.z_origin,
        last.max_abs_qt
    );
}

#[test]
fn criterion_9_determinism_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.toml");
    std::fs::write(
        &cfg_path,
        "[grid]\nny = 101\nnt = 300\n\n[montecarlo]\nn_paths = 2000\nmaster_seed = 42\n",
    )
    .unwrap();
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for threads in ["1", "4", "8"] {
        let out_dir = dir.path().join(format!("run_{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_hjb-exec"))
            .args(["simulate", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out_dir)
            .env("HJB_EXEC_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success(), "simulate failed with {threads} threads");
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().into_string().unwrap(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .filter(|(name, _)| name.ends_with(".csv"))
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1], "1-thread vs 4-thread CSVs differ");
    assert_eq!(outputs[0], outputs[2], "1-thread vs 8-thread CSVs differ");
    println!(
        "criterion 9 PASS: {} CSVs byte-identical under 1, 4, and 8 worker threads",
        outputs[0].len()
    );
}
