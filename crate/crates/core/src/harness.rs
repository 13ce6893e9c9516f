//! Scenario-driven verification runner.
//!
//! `run_converge` executes every gate the scenario's tolerance map
//! configures — exact identities, moment matches against the closed
//! forms, the fdd weak-convergence ladder (raw, centered, or the
//! degenerate line test), and the three condition statistics — and
//! assembles one [`TestReport`]. A gate runs iff its tolerance key is
//! present, so scenario files fully determine what the exit code means.

use std::time::Instant;

use thiserror::Error;

use crate::convergence::{
    condition_ladder, fdd_convergence_test, ConditionTrace, FddSettings, StatError,
};
use crate::gw_engine::{PathEnsemble, SimError};
use crate::moments::{mean_xk, var_xk_critical, MomentError, MomentParams};
use crate::report::{Cmp, TestReport, TestVerdict};
use crate::scenario::Scenario;
use crate::stats::MomentAccumulator;
use crate::step_process::{build_mn, build_xn, floor_nt, psi_n_of_step};

/// Paths used for the exact identity checks; they are deterministic
/// identities, not statistics, so a fixed sample suffices.
const IDENTITY_PATHS: u64 = 1000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("converge requires a critical scenario (offspring mean 1), got m_xi = {m_xi}")]
    NotCritical { m_xi: f64 },
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

fn stamp(report: &mut TestReport, from: usize, started: Instant) {
    let ms = started.elapsed().as_millis() as u64;
    for v in report.verdicts.iter_mut().skip(from) {
        v.runtime_ms = Some(ms);
    }
}

/// Run the configured verification gates of a scenario.
pub fn run_converge(scenario: &Scenario) -> Result<TestReport, HarnessError> {
    let params = MomentParams::from_config(&scenario.gw);
    if !params.is_critical() {
        return Err(HarnessError::NotCritical { m_xi: params.m_xi });
    }
    let mut report = TestReport::new(scenario.name.clone(), scenario.master_seed);

    run_identity_gates(scenario, &params, &mut report)?;
    run_moment_gates(scenario, &params, &mut report)?;
    run_fdd_gates(scenario, &mut report)?;
    run_condition_gates(scenario, &mut report)?;

    Ok(report)
}

/// Reconstruction identity `X_k = X_0 + Σ M_j + k m_eps` and the grid
/// functional identity `Ψ^(n)(M^(n)) = n^{-1} X_⌊n·⌋`, checked exactly on
/// a fixed path sample.
fn run_identity_gates(
    scenario: &Scenario,
    params: &MomentParams,
    report: &mut TestReport,
) -> Result<(), HarnessError> {
    let recon_tol = scenario.tolerance("reconstruction_abs");
    let psi_tol = scenario.tolerance("psi_identity_abs");
    if recon_tol.is_none() && psi_tol.is_none() {
        return Ok(());
    }
    let started = Instant::now();
    let before = report.verdicts.len();
    // The largest rung gives the identity checks the densest grid.
    let n_id = *scenario.n_ladder.last().expect("validated nonempty");
    let horizon = floor_nt(n_id, scenario.horizon_t).max(1);
    let mut config = scenario.gw.clone();
    config.horizon = horizon;
    let m_eps = params.m_eps;
    let ensemble = PathEnsemble::new(
        config,
        scenario.master_seed,
        scenario.n_paths.min(IDENTITY_PATHS),
    )?;
    let (max_recon, max_psi) = ensemble.par_fold(
        |path| {
            let m = path.martingale_differences(m_eps);
            let mut cum = 0.0;
            let mut recon = 0.0f64;
            for (k, mk) in m.iter().enumerate() {
                cum += mk;
                let rebuilt = path.x[0] as f64 + cum + (k + 1) as f64 * m_eps;
                recon = recon.max((rebuilt - path.x[k + 1] as f64).abs());
            }
            let t_end = horizon as f64 / n_id as f64;
            let mn = build_mn(path, n_id, m_eps, t_end).expect("horizon covers grid");
            let xn = build_xn(path, n_id, t_end).expect("horizon covers grid");
            let psi = psi_n_of_step(&mn, m_eps);
            let max_psi = psi
                .values()
                .iter()
                .zip(xn.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            (recon, max_psi)
        },
        |a, b| (a.0.max(b.0), a.1.max(b.1)),
    )?;
    if let Some(tol) = recon_tol {
        report.push(TestVerdict::gate(
            "reconstruction_abs",
            max_recon,
            tol,
            Cmp::Le,
        ));
    }
    if let Some(tol) = psi_tol {
        report.push(TestVerdict::gate("psi_identity_abs", max_psi, tol, Cmp::Le));
    }
    stamp(report, before, started);
    Ok(())
}

/// Ensemble mean and variance against the closed forms at
/// k in {1, 10, 50} (clipped to the horizon), gated on the worst
/// z-score.
fn run_moment_gates(
    scenario: &Scenario,
    params: &MomentParams,
    report: &mut TestReport,
) -> Result<(), HarnessError> {
    let Some(tol) = scenario.tolerance("moment_z") else {
        return Ok(());
    };
    let started = Instant::now();
    let before = report.verdicts.len();
    let horizon = scenario.gw.horizon.min(50);
    let k_values: Vec<u64> = [1u64, 10, 50]
        .into_iter()
        .filter(|&k| k <= horizon)
        .collect();
    let mut config = scenario.gw.clone();
    config.horizon = horizon;
    let ensemble = PathEnsemble::new(config, scenario.master_seed, scenario.n_paths)?;
    let accs = ensemble.par_fold(
        |path| {
            let mut accs = vec![MomentAccumulator::new(); k_values.len()];
            for (acc, &k) in accs.iter_mut().zip(&k_values) {
                acc.push(path.x[k as usize] as f64);
            }
            accs
        },
        |a, b| {
            a.into_iter()
                .zip(b)
                .map(|(x, y)| MomentAccumulator::merge(x, y))
                .collect()
        },
    )?;
    let mut worst_z = 0.0f64;
    for (acc, &k) in accs.iter().zip(&k_values) {
        let want_mean = mean_xk(params, k);
        let want_var = var_xk_critical(params, k)?;
        let z_mean = (acc.mean() - want_mean).abs() / acc.se_mean();
        let z_var = (acc.variance() - want_var).abs() / acc.se_variance();
        report.diagnostic(format!("moment_mean[k={k}]"), acc.mean());
        report.diagnostic(format!("moment_var[k={k}]"), acc.variance());
        worst_z = worst_z.max(z_mean).max(z_var);
    }
    report.push(TestVerdict::gate("moment_z_max", worst_z, tol, Cmp::Le));
    stamp(report, before, started);
    Ok(())
}

/// Weak-convergence gates: KS ladder for the raw and centered marginals,
/// or the line test in the degenerate case.
fn run_fdd_gates(scenario: &Scenario, report: &mut TestReport) -> Result<(), HarnessError> {
    let degenerate = scenario.gw.offspring.variance() == 0.0;
    let wants_fdd = if degenerate {
        scenario.tolerance("line_sup").is_some()
            || scenario.tolerance("line_pass_frac").is_some()
    } else {
        scenario.tolerance("fdd_ks").is_some()
    };
    if !wants_fdd {
        return Ok(());
    }
    let started = Instant::now();
    let before = report.verdicts.len();
    let settings = FddSettings {
        t_values: scenario.t_values.clone(),
        n_values: scenario.n_ladder.clone(),
        n_paths: scenario.n_paths,
        master_seed: scenario.master_seed,
        ks_tolerance: scenario.tolerance("fdd_ks").unwrap_or(f64::INFINITY),
        monotone_se_slack: scenario.tolerance("fdd_monotone_se"),
        centered_ks_tolerance: scenario.tolerance("centered_ks"),
        line_sup_threshold: scenario.tolerance("line_sup").unwrap_or(0.05),
        line_pass_fraction: scenario.tolerance("line_pass_frac").unwrap_or(0.99),
    };
    let fdd = fdd_convergence_test(&scenario.gw, &settings)?;
    report.merge(fdd);
    stamp(report, before, started);
    Ok(())
}

/// Condition-statistic gates over the scaling ladder.
fn run_condition_gates(scenario: &Scenario, report: &mut TestReport) -> Result<(), HarnessError> {
    let decay_tol = scenario.tolerance("cond1_decay_factor");
    let pair_tol = scenario.tolerance("cond11_decay_pairs");
    let final_tol = scenario.tolerance("cond2_final");
    let mono_tol = scenario.tolerance("cond_monotone_se");
    if decay_tol.is_none() && pair_tol.is_none() && final_tol.is_none() && mono_tol.is_none() {
        return Ok(());
    }
    let started = Instant::now();
    let before = report.verdicts.len();
    let ladder = condition_ladder(
        &scenario.gw,
        scenario.master_seed,
        scenario.n_paths,
        &scenario.n_ladder,
        &scenario.theta_values,
        scenario.horizon_t,
    )?;
    let trace_diag = |report: &mut TestReport, name: &str, trace: &ConditionTrace| {
        for (i, &n) in trace.n_values.iter().enumerate() {
            report.diagnostic(format!("{name}[n={n}]"), trace.estimates[i]);
        }
    };
    trace_diag(report, "cond1_mean", &ladder.cond1);
    if let Some(tol) = decay_tol {
        report.push(TestVerdict::gate(
            "cond1_decay_factor",
            ladder.cond1.decay_factor(),
            tol,
            Cmp::Ge,
        ));
    }
    if let Some(tol) = mono_tol {
        report.push(TestVerdict::gate(
            "cond1_monotone_z",
            ladder.cond1.max_monotone_violation_se(),
            tol,
            Cmp::Le,
        ));
    }
    for trace in &ladder.cond2 {
        let theta = trace.theta.expect("cond2 trace has theta");
        trace_diag(report, &format!("cond2_mean[theta={theta}]"), trace);
        if let Some(tol) = final_tol {
            report.push(TestVerdict::gate(
                format!("cond2_final[theta={theta}]"),
                *trace.estimates.last().expect("nonempty ladder"),
                tol,
                Cmp::Le,
            ));
        }
        if let Some(tol) = mono_tol {
            report.push(TestVerdict::gate(
                format!("cond2_monotone_z[theta={theta}]"),
                trace.max_monotone_violation_se(),
                tol,
                Cmp::Le,
            ));
        }
    }
    trace_diag(report, "cond11_mean", &ladder.cond11);
    if let Some(tol) = pair_tol {
        report.push(TestVerdict::gate(
            "cond11_decay_pairs",
            ladder.cond11.min_pair_decay(),
            tol,
            Cmp::Ge,
        ));
    }
    if let Some(tol) = mono_tol {
        report.push(TestVerdict::gate(
            "cond11_monotone_z",
            ladder.cond11.max_monotone_violation_se(),
            tol,
            Cmp::Le,
        ));
    }
    stamp(report, before, started);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::gw_engine::GWConfig;
    use std::collections::BTreeMap;

    fn small_scenario() -> Scenario {
        let mut tolerances = BTreeMap::new();
        tolerances.insert("reconstruction_abs".to_string(), 1e-9);
        tolerances.insert("psi_identity_abs".to_string(), 1e-12);
        tolerances.insert("moment_z".to_string(), 5.0);
        tolerances.insert("fdd_ks".to_string(), 0.1);
        tolerances.insert("fdd_monotone_se".to_string(), 3.0);
        tolerances.insert("centered_ks".to_string(), 0.1);
        tolerances.insert("cond1_decay_factor".to_string(), 3.0);
        tolerances.insert("cond11_decay_pairs".to_string(), 3.0);
        tolerances.insert("cond2_final".to_string(), 0.05);
        tolerances.insert("cond_monotone_se".to_string(), 3.0);
        Scenario {
            schema: 1,
            name: "harness-smoke".to_string(),
            gw: GWConfig {
                offspring: DistributionSpec::poisson(1.0).unwrap(),
                immigration: DistributionSpec::poisson(1.0).unwrap(),
                initial: DistributionSpec::point_mass(0),
                horizon: 100,
                record_immigration: false,
            },
            sde: None,
            n_ladder: vec![10, 30, 100],
            t_values: vec![0.5, 1.0],
            horizon_t: 1.0,
            theta_values: vec![0.5],
            n_paths: 5000,
            master_seed: 12345,
            tolerances,
            output_dir: "out".into(),
            sde_steps: 256,
        }
    }

    #[test]
    fn full_converge_passes_at_smoke_scale() {
        let sc = small_scenario();
        sc.validate().unwrap();
        let report = run_converge(&sc).unwrap();
        assert!(report.all_pass(), "{}", report.render_table());
        // Fixed verdict inventory: identities, moments, fdd (ks + monotone
        // + centered per t), cond gates.
        let names: Vec<&str> = report.verdicts.iter().map(|v| v.test.as_str()).collect();
        assert!(names.contains(&"reconstruction_abs"));
        assert!(names.contains(&"psi_identity_abs"));
        assert!(names.contains(&"moment_z_max"));
        assert!(names.contains(&"fdd_ks[t=1]"));
        assert!(names.contains(&"centered_ks[t=0.5]"));
        assert!(names.contains(&"cond1_decay_factor"));
        assert!(names.contains(&"cond2_final[theta=0.5]"));
        assert!(names.contains(&"cond11_decay_pairs"));
    }

    #[test]
    fn converge_is_deterministic_across_thread_counts() {
        let sc = small_scenario();
        let base = run_converge(&sc).unwrap().to_json_deterministic();
        for threads in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let json = pool
                .install(|| run_converge(&sc).unwrap())
                .to_json_deterministic();
            assert_eq!(json, base, "report differs at {threads} threads");
        }
    }

    #[test]
    fn noncritical_scenario_is_rejected() {
        let mut sc = small_scenario();
        sc.gw.offspring = DistributionSpec::poisson(1.2).unwrap();
        assert!(matches!(
            run_converge(&sc),
            Err(HarnessError::NotCritical { .. })
        ));
    }

    #[test]
    fn empty_tolerances_make_an_empty_report() {
        let mut sc = small_scenario();
        sc.tolerances.clear();
        let report = run_converge(&sc).unwrap();
        assert!(report.verdicts.is_empty());
        assert!(report.all_pass());
    }

    #[test]
    fn degenerate_scenario_runs_the_line_gate() {
        let mut sc = small_scenario();
        sc.gw.offspring = DistributionSpec::point_mass(1);
        sc.tolerances.clear();
        sc.tolerances.insert("line_sup".to_string(), 0.5);
        sc.tolerances
            .insert("line_pass_frac".to_string(), 0.99);
        sc.tolerances.insert("cond2_final".to_string(), 0.05);
        let report = run_converge(&sc).unwrap();
        assert!(report.all_pass(), "{}", report.render_table());
        assert!(report
            .verdicts
            .iter()
            .any(|v| v.test.starts_with("line_sup_frac")));
    }
}
