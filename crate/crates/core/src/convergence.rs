//! Statistical verification of the weak-convergence claims.
//!
//! The scaled processes `n^{-1} X_⌊nt⌋` converge to the squared-Bessel
//! limit; this module measures that on ensembles. Kolmogorov-Smirnov
//! distances (one-sample against the exact Gamma marginal, two-sample for
//! scheme comparisons) and the 1-D Wasserstein distance are the metrics.
//! The three sufficient conditions of the martingale limit theorem have
//! empirical counterparts:
//!
//! * `cond1_sup_statistic` — the exact pathwise sup over [0, T] of the
//!   residual between `n^{-2} Σ E(M_k² | F_{k-1})` and
//!   `σ_ξ² ∫ (M^(n)_s + m_eps s)^+ ds`. On each grid cell the residual is
//!   a quadratic in the cell offset, so the sup is taken exactly at cell
//!   endpoints plus the interior vertex when it falls inside.
//! * `cond2_lindeberg_statistic` — the Monte-Carlo mean of
//!   `n^{-2} Σ_{k<=⌊nT⌋} M_k² 1{|M_k| > nθ}`; the unconditional
//!   expectation dominates the conditional statistic in L¹, so its decay
//!   certifies the Lindeberg condition in probability.
//! * `cond11_supx_statistic` — `n^{-2} max_{k<=⌊nT⌋} X_k`.
//!
//! `fdd_convergence_test` draws the finite-dimensional marginals across a
//! ladder of scaling indices and gates the KS distances against the exact
//! limit law, covering the raw, centered and degenerate (zero offspring
//! variance) cases.

use thiserror::Error;

use crate::diffusion::{limit_marginal_cdf, SDEParams};
use crate::gw_engine::{GWConfig, GWPath, PathEnsemble, SimError};
use crate::moments::{mean_xk, MomentParams};
use crate::report::{Cmp, TestReport, TestVerdict};
use crate::special::kolmogorov_sf;
use crate::stats::MomentAccumulator;
use crate::step_process::{floor_nt, StepError};

/// Standard deviation of the Kolmogorov law; `0.26 / sqrt(n)` is the
/// asymptotic sd of the one-sample KS statistic under the null, used as
/// the SE unit for rung-to-rung monotonicity slack.
const KOLMOGOROV_SD: f64 = 0.2603;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("empty sample")]
    EmptySample,
    #[error("theta must be positive, got {0}")]
    NonPositiveTheta(f64),
    #[error("statistic requires a critical configuration (offspring mean 1)")]
    NotCritical,
    #[error("ladder of scaling indices must be nonempty")]
    EmptyLadder,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// Kolmogorov-Smirnov comparison outcome. `n2` is the second sample size,
/// or `None` when the comparison was against an exact CDF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KSResult {
    pub statistic: f64,
    pub n1: u64,
    pub n2: Option<u64>,
    pub p_value: f64,
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    s
}

fn ks_p_value(effective_n: f64, d: f64) -> f64 {
    let sq = effective_n.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS: sup-norm gap between the empirical CDF and `cdf`,
/// evaluated exactly (both one-sided gaps at every sample point).
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KSResult, StatError> {
    if sample.is_empty() {
        return Err(StatError::EmptySample);
    }
    let xs = sorted(sample);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KSResult {
        statistic: d,
        n1: xs.len() as u64,
        n2: None,
        p_value: ks_p_value(n, d),
    })
}

/// Two-sample KS over the merged order statistics.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KSResult, StatError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatError::EmptySample);
    }
    let xa = sorted(a);
    let xb = sorted(b);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let effective = na * nb / (na + nb);
    Ok(KSResult {
        statistic: d,
        n1: xa.len() as u64,
        n2: Some(xb.len() as u64),
        p_value: ks_p_value(effective, d),
    })
}

/// 1-D Wasserstein distance. Equal lengths reduce to the mean absolute
/// difference of sorted samples; otherwise the ECDF-difference integral
/// realizes the quantile coupling.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64, StatError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatError::EmptySample);
    }
    let xa = sorted(a);
    let xb = sorted(b);
    if xa.len() == xb.len() {
        let n = xa.len() as f64;
        return Ok(xa.iter().zip(&xb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n);
    }
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut total = 0.0;
    let mut prev = xa[0].min(xb[0]);
    while i < xa.len() || j < xb.len() {
        let v = match (xa.get(i), xb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (v - prev);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        prev = v;
    }
    Ok(total)
}

/// Exact sup over t in [0, T] of the residual
/// `|n^{-2} Σ_{k<=⌊nt⌋} E(M_k²|F_{k-1}) - σ_ξ² ∫_0^t (M^(n)_s + m_eps s)^+ ds|`,
/// evaluated through its closed form
/// `⌊nt⌋ σ_ε²/n² - σ_ξ² (nt-⌊nt⌋) X_⌊nt⌋/n² - σ_ξ² m_eps (⌊nt⌋+(nt-⌊nt⌋)²)/(2n²)`,
/// maximized cell by cell (endpoints plus interior quadratic vertex).
pub fn cond1_sup_statistic(
    path: &GWPath,
    n: u64,
    params: &MomentParams,
    t_end: f64,
) -> Result<f64, StatError> {
    if !params.is_critical() {
        return Err(StatError::NotCritical);
    }
    let j_max = floor_nt(n, t_end);
    if j_max > path.horizon() {
        return Err(StatError::Step(StepError::PathTooShort {
            needed: j_max,
            horizon: path.horizon(),
        }));
    }
    let n2 = (n as f64) * (n as f64);
    let mut sup = 0.0f64;
    for j in 0..=j_max {
        let u_max = if j == j_max {
            n as f64 * t_end - j as f64
        } else {
            1.0
        };
        let xj = path.x[j as usize] as f64;
        // R(u) = a + b u + c u² on the cell, in 1/n² units.
        let a = (j as f64) * params.sigma2_eps - params.sigma2_xi * params.m_eps * j as f64 / 2.0;
        let b = -params.sigma2_xi * xj;
        let c = -params.sigma2_xi * params.m_eps / 2.0;
        let r = |u: f64| (a + b * u + c * u * u) / n2;
        sup = sup.max(r(0.0).abs()).max(r(u_max).abs());
        if c != 0.0 {
            let vertex = -b / (2.0 * c);
            if vertex > 0.0 && vertex < u_max {
                sup = sup.max(r(vertex).abs());
            }
        }
    }
    Ok(sup)
}

/// Monte-Carlo estimate (mean, standard error) of the Lindeberg sum
/// `E[n^{-2} Σ_{k<=⌊nT⌋} M_k² 1{|M_k| > nθ}]` over the ensemble.
pub fn cond2_lindeberg_statistic(
    ensemble: &PathEnsemble,
    n: u64,
    theta: f64,
    m_eps: f64,
    t_end: f64,
) -> Result<(f64, f64), StatError> {
    if theta <= 0.0 {
        return Err(StatError::NonPositiveTheta(theta));
    }
    let k_max = floor_nt(n, t_end);
    if k_max > ensemble.config.horizon {
        return Err(StatError::Step(StepError::PathTooShort {
            needed: k_max,
            horizon: ensemble.config.horizon,
        }));
    }
    let acc = ensemble.par_fold(
        |path| {
            let mut a = MomentAccumulator::new();
            a.push(lindeberg_sum(path, n, theta, m_eps, k_max));
            a
        },
        MomentAccumulator::merge,
    )?;
    Ok((acc.mean(), acc.se_mean()))
}

fn lindeberg_sum(path: &GWPath, n: u64, theta: f64, m_eps: f64, k_max: u64) -> f64 {
    let cut = n as f64 * theta;
    let mut sum = 0.0;
    for k in 1..=k_max as usize {
        let m = path.x[k] as f64 - path.x[k - 1] as f64 - m_eps;
        if m.abs() > cut {
            sum += m * m;
        }
    }
    sum / ((n as f64) * (n as f64))
}

/// `n^{-2} max_{k <= ⌊nT⌋} X_k`.
pub fn cond11_supx_statistic(path: &GWPath, n: u64, t_end: f64) -> f64 {
    let k_max = (floor_nt(n, t_end) as usize).min(path.x.len() - 1);
    let max = path.x[..=k_max].iter().max().copied().unwrap_or(0);
    max as f64 / ((n as f64) * (n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionKind {
    Cond1Sup,
    Cond2Lindeberg,
    Cond11SupX,
}

/// One condition statistic estimated across the ladder of scaling indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionTrace {
    pub kind: ConditionKind,
    pub n_values: Vec<u64>,
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub theta: Option<f64>,
    pub t_end: f64,
    pub n_paths: u64,
}

impl ConditionTrace {
    /// Decay factor first rung / last rung (inf when the last is 0).
    pub fn decay_factor(&self) -> f64 {
        let first = *self.estimates.first().expect("nonempty trace");
        let last = *self.estimates.last().expect("nonempty trace");
        if last == 0.0 {
            if first == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            first / last
        }
    }

    /// Smallest decay factor across rung pairs two apart
    /// (estimate[i] / estimate[i+2]).
    pub fn min_pair_decay(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.estimates.len().saturating_sub(2) {
            let num = self.estimates[i];
            let den = self.estimates[i + 2];
            let ratio = if den == 0.0 {
                if num == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                num / den
            };
            min = min.min(ratio);
        }
        min
    }

    /// Largest rung-over-rung increase in joint-SE units; nonincreasing
    /// sequences give nonpositive values.
    pub fn max_monotone_violation_se(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.estimates.len() - 1 {
            let jump = self.estimates[i + 1] - self.estimates[i];
            let joint_se =
                (self.standard_errors[i].powi(2) + self.standard_errors[i + 1].powi(2)).sqrt();
            let z = if jump <= 0.0 {
                0.0
            } else if joint_se == 0.0 {
                f64::INFINITY
            } else {
                jump / joint_se
            };
            worst = worst.max(z);
        }
        worst
    }
}

/// All three condition statistics across the ladder.
#[derive(Clone, Debug)]
pub struct ConditionLadder {
    pub cond1: ConditionTrace,
    /// One trace per theta.
    pub cond2: Vec<ConditionTrace>,
    pub cond11: ConditionTrace,
}

/// Estimate the three condition statistics over `n_values`, one streaming
/// ensemble pass per rung. Rung `n` simulates to horizon `⌊nT⌋`.
pub fn condition_ladder(
    config: &GWConfig,
    master_seed: u64,
    n_paths: u64,
    n_values: &[u64],
    thetas: &[f64],
    t_end: f64,
) -> Result<ConditionLadder, StatError> {
    if n_values.is_empty() {
        return Err(StatError::EmptyLadder);
    }
    let params = MomentParams::from_config(config);
    if !params.is_critical() {
        return Err(StatError::NotCritical);
    }
    for &theta in thetas {
        if theta <= 0.0 {
            return Err(StatError::NonPositiveTheta(theta));
        }
    }
    let m_eps = params.m_eps;
    let n_stats = 2 + thetas.len();
    let mut per_rung: Vec<Vec<MomentAccumulator>> = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let k_max = floor_nt(n, t_end);
        let mut rung_config = config.clone();
        rung_config.horizon = k_max.max(1);
        let ensemble = PathEnsemble::new(rung_config, master_seed, n_paths)?;
        let accs = ensemble.par_fold(
            |path| {
                let mut accs = vec![MomentAccumulator::new(); n_stats];
                accs[0].push(
                    cond1_sup_statistic(path, n, &params, t_end).expect("horizon covers the rung"),
                );
                accs[1].push(cond11_supx_statistic(path, n, t_end));
                for (i, &theta) in thetas.iter().enumerate() {
                    accs[2 + i].push(lindeberg_sum(path, n, theta, m_eps, k_max));
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
        per_rung.push(accs);
    }
    let trace = |kind, idx: usize, theta: Option<f64>| ConditionTrace {
        kind,
        n_values: n_values.to_vec(),
        estimates: per_rung.iter().map(|r| r[idx].mean()).collect(),
        standard_errors: per_rung.iter().map(|r| r[idx].se_mean()).collect(),
        theta,
        t_end,
        n_paths,
    };
    Ok(ConditionLadder {
        cond1: trace(ConditionKind::Cond1Sup, 0, None),
        cond11: trace(ConditionKind::Cond11SupX, 1, None),
        cond2: thetas
            .iter()
            .enumerate()
            .map(|(i, &theta)| trace(ConditionKind::Cond2Lindeberg, 2 + i, Some(theta)))
            .collect(),
    })
}

/// Settings of the finite-dimensional-distribution convergence test.
#[derive(Clone, Debug)]
pub struct FddSettings {
    pub t_values: Vec<f64>,
    pub n_values: Vec<u64>,
    pub n_paths: u64,
    pub master_seed: u64,
    /// KS gate at the largest scaling index.
    pub ks_tolerance: f64,
    /// Allowed rung-over-rung KS increase in joint-SE units; `None`
    /// reports monotonicity as a diagnostic only.
    pub monotone_se_slack: Option<f64>,
    /// Run the centered variant against the shifted limit law.
    pub centered_ks_tolerance: Option<f64>,
    /// Degenerate case: sup-gap threshold and required pass fraction.
    pub line_sup_threshold: f64,
    pub line_pass_fraction: f64,
}

/// Weak-convergence test of the scaled marginals across the ladder.
///
/// For offspring variance zero the limit path is the deterministic line
/// `m_eps t`; the test then gates the fraction of paths whose sup-gap
/// from the line stays below the threshold. Otherwise each requested `t`
/// is tested against the exact Gamma marginal (and the centered variant
/// against the same law shifted by `-m_eps t`).
pub fn fdd_convergence_test(
    config: &GWConfig,
    settings: &FddSettings,
) -> Result<TestReport, StatError> {
    if !config.is_critical() {
        return Err(StatError::NotCritical);
    }
    if settings.n_values.is_empty() {
        return Err(StatError::EmptyLadder);
    }
    if settings.t_values.is_empty() {
        return Err(StatError::EmptySample);
    }
    let params = MomentParams::from_config(config);
    let sde = SDEParams::from_gw(config);
    let mut report = TestReport::new("fdd", settings.master_seed);
    let t_max = settings
        .t_values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);

    if sde.sigma2_xi == 0.0 {
        return fdd_degenerate_line(config, settings, &sde, t_max, report);
    }

    // KS per (n, t), plus the sup-functional samples for the ungated
    // path-space diagnostic.
    let mut ks_table: Vec<Vec<f64>> = Vec::new();
    let mut centered_ks_table: Vec<Vec<f64>> = Vec::new();
    let mut sup_samples: Vec<Vec<f64>> = Vec::new();
    for &n in &settings.n_values {
        let k_end = floor_nt(n, t_max);
        let mut rung_config = config.clone();
        rung_config.horizon = k_end.max(1);
        let ensemble = PathEnsemble::new(rung_config, settings.master_seed, settings.n_paths)?;
        let k_at_t: Vec<u64> = settings.t_values.iter().map(|&t| floor_nt(n, t)).collect();
        let rows = ensemble.par_map_collect(|path| {
            let mut row = Vec::with_capacity(k_at_t.len() + 1);
            for &k in &k_at_t {
                row.push(path.x[k as usize] as f64 / n as f64);
            }
            row.push(cond11_supx_statistic(path, n, t_max) * n as f64); // sup X / n
            row
        })?;
        let mut ks_row = Vec::with_capacity(settings.t_values.len());
        let mut centered_row = Vec::with_capacity(settings.t_values.len());
        for (ti, &t) in settings.t_values.iter().enumerate() {
            let sample: Vec<f64> = rows.iter().map(|r| r[ti]).collect();
            let cdf = |x: f64| limit_marginal_cdf(&sde, t, x).expect("valid marginal");
            ks_row.push(ks_distance(&sample, cdf)?.statistic);
            if settings.centered_ks_tolerance.is_some() {
                let shift = mean_xk(&params, k_at_t[ti]) / n as f64;
                let centered: Vec<f64> = sample.iter().map(|x| x - shift).collect();
                let drift = sde.m_eps * t;
                let cdf_m =
                    |x: f64| limit_marginal_cdf(&sde, t, x + drift).expect("valid marginal");
                centered_row.push(ks_distance(&centered, cdf_m)?.statistic);
            }
        }
        ks_table.push(ks_row);
        centered_ks_table.push(centered_row);
        sup_samples.push(rows.iter().map(|r| r[k_at_t.len()]).collect());
    }

    let se = KOLMOGOROV_SD / (settings.n_paths as f64).sqrt();
    let joint_se = se * std::f64::consts::SQRT_2;
    for (ti, &t) in settings.t_values.iter().enumerate() {
        for (ni, &n) in settings.n_values.iter().enumerate() {
            report.diagnostic(format!("fdd_ks[t={t}][n={n}]"), ks_table[ni][ti]);
        }
        let last = ks_table.last().expect("nonempty")[ti];
        report.push(TestVerdict::gate(
            format!("fdd_ks[t={t}]"),
            last,
            settings.ks_tolerance,
            Cmp::Le,
        ));
        let worst_z = (1..settings.n_values.len())
            .map(|i| (ks_table[i][ti] - ks_table[i - 1][ti]) / joint_se)
            .fold(0.0f64, f64::max);
        match settings.monotone_se_slack {
            Some(slack) => report.push(TestVerdict::gate(
                format!("fdd_monotone[t={t}]"),
                worst_z,
                slack,
                Cmp::Le,
            )),
            None => report.diagnostic(format!("fdd_monotone_z[t={t}]"), worst_z),
        }
        if let Some(tol) = settings.centered_ks_tolerance {
            let last = centered_ks_table.last().expect("nonempty")[ti];
            for (ni, &n) in settings.n_values.iter().enumerate() {
                report.diagnostic(
                    format!("centered_ks[t={t}][n={n}]"),
                    centered_ks_table[ni][ti],
                );
            }
            report.push(TestVerdict::gate(
                format!("centered_ks[t={t}]"),
                last,
                tol,
                Cmp::Le,
            ));
        }
    }
    // Path-space diagnostic: Wasserstein distance between sup-functional
    // samples at successive rungs (reported, never gated).
    for i in 1..settings.n_values.len() {
        let w = wasserstein1(&sup_samples[i - 1], &sup_samples[i])?;
        report.diagnostic(
            format!(
                "supx_w1[n={}->{}]",
                settings.n_values[i - 1],
                settings.n_values[i]
            ),
            w,
        );
    }
    Ok(report)
}

/// Degenerate branch: offspring variance zero, limit is the line
/// `m_eps t`.
fn fdd_degenerate_line(
    config: &GWConfig,
    settings: &FddSettings,
    sde: &SDEParams,
    t_max: f64,
    mut report: TestReport,
) -> Result<TestReport, StatError> {
    let m_eps = sde.m_eps;
    for (ni, &n) in settings.n_values.iter().enumerate() {
        let k_end = floor_nt(n, t_max);
        let mut rung_config = config.clone();
        rung_config.horizon = k_end.max(1);
        let ensemble = PathEnsemble::new(rung_config, settings.master_seed, settings.n_paths)?;
        let sups = ensemble.par_map_collect(|path| line_sup_gap(path, n, m_eps, t_max))?;
        let mean = sups.iter().sum::<f64>() / sups.len() as f64;
        report.diagnostic(format!("line_sup_mean[n={n}]"), mean);
        if ni + 1 == settings.n_values.len() {
            let below = sups
                .iter()
                .filter(|&&s| s < settings.line_sup_threshold)
                .count();
            let frac = below as f64 / sups.len() as f64;
            report.push(TestVerdict::gate(
                format!("line_sup_frac[n={n}]"),
                frac,
                settings.line_pass_fraction,
                Cmp::Ge,
            ));
        }
    }
    Ok(report)
}

/// sup over t in [0, T] of |X_⌊nt⌋/n - m_eps t|: on each cell the drift
/// line moves while the step value is frozen, so the sup sits at cell
/// endpoints.
pub fn line_sup_gap(path: &GWPath, n: u64, m_eps: f64, t_end: f64) -> f64 {
    let j_max = floor_nt(n, t_end);
    let nf = n as f64;
    let mut sup = 0.0f64;
    for j in 0..=j_max {
        let v = path.x[j as usize] as f64 / nf;
        let left = j as f64 / nf;
        let right = if j == j_max {
            t_end
        } else {
            (j + 1) as f64 / nf
        };
        sup = sup
            .max((v - m_eps * left).abs())
            .max((v - m_eps * right).abs());
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::gw_engine::simulate_path;
    use crate::rng::StreamKey;
    use crate::step_process::{cell_inf_time, cell_sup_time, shifted_integral};

    fn poisson_config(horizon: u64) -> GWConfig {
        GWConfig {
            offspring: DistributionSpec::poisson(1.0).unwrap(),
            immigration: DistributionSpec::poisson(1.0).unwrap(),
            initial: DistributionSpec::point_mass(0),
            horizon,
            record_immigration: false,
        }
    }

    #[test]
    fn ks_distance_worked_examples() {
        // All mass at 0 against Exp(1): the gap is the full unit jump.
        let exp_cdf = |x: f64| if x < 0.0 { 0.0 } else { 1.0 - (-x).exp() };
        let ks = ks_distance(&[0.0, 0.0, 0.0], exp_cdf).unwrap();
        assert_eq!(ks.statistic, 1.0);

        // A sample against its own ECDF-like step: distance small for the
        // matching uniform grid.
        let sample: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let ks = ks_distance(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(ks.statistic <= 0.0006);

        assert!(ks_distance(&[], |_| 0.0).is_err());
    }

    #[test]
    fn ks_distance_null_scale() {
        // Sample genuinely from the CDF: statistic is O(n^{-1/2}).
        let mut s = StreamKey::new(404, 0).slot(0);
        let sample: Vec<f64> = (0..100_000).map(|_| -(1.0 - s.next_f64()).ln()).collect();
        let ks = ks_distance(&sample, |x| if x < 0.0 { 0.0 } else { 1.0 - (-x).exp() }).unwrap();
        assert!(ks.statistic < 0.01, "{}", ks.statistic);
        assert!(ks.p_value > 0.001);
    }

    #[test]
    fn ks_two_sample_worked_examples() {
        let ks = ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(ks.statistic, 0.0);
        let ks = ks_two_sample(&[1.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_eq!(ks.statistic, 0.5);
        let ks = ks_two_sample(&[0.0, 0.1], &[5.0, 6.0]).unwrap();
        assert_eq!(ks.statistic, 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn ks_p_values_approximately_uniform_under_null() {
        // 200 repetitions, chi-square on deciles at level 0.001
        // (critical value 27.877 for 9 dof).
        let mut counts = [0u32; 10];
        for rep in 0..200u64 {
            let mut s = StreamKey::new(1234, rep).slot(0);
            let sample: Vec<f64> = (0..2000).map(|_| s.next_f64()).collect();
            let ks = ks_distance(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
            let bin = ((ks.p_value * 10.0) as usize).min(9);
            counts[bin] += 1;
        }
        let expected = 20.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 27.877, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn wasserstein_worked_examples() {
        assert_eq!(wasserstein1(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        // Unequal lengths go through the ECDF integral; a point mass at 0
        // vs {0,1} has distance 1/2.
        assert_eq!(wasserstein1(&[0.0], &[0.0, 1.0]).unwrap(), 0.5);
        assert!(wasserstein1(&[], &[1.0]).is_err());
    }

    #[test]
    fn wasserstein_equal_length_matches_ecdf_integral() {
        let mut s = StreamKey::new(31, 0).slot(0);
        let a: Vec<f64> = (0..257).map(|_| s.next_f64() * 3.0).collect();
        let b: Vec<f64> = (0..257).map(|_| s.next_f64() * 2.0 + 0.5).collect();
        let direct = wasserstein1(&a, &b).unwrap();
        // Duplicate each sample 2x and 3x: same distributions, unequal
        // lengths, forcing the integral route.
        let a2: Vec<f64> = a.iter().flat_map(|&x| [x, x]).collect();
        let b3: Vec<f64> = b.iter().flat_map(|&x| [x, x, x]).collect();
        let integral = wasserstein1(&a2, &b3).unwrap();
        assert!((direct - integral).abs() < 1e-12, "{direct} vs {integral}");
    }

    #[test]
    fn cond1_worked_examples() {
        let params = MomentParams::new(1.0, 1.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        // sigma_xi = 0: residual is ⌊nt⌋ σ_ε²/n², sup at t = T.
        let path = simulate_path(&poisson_config(10), StreamKey::new(1, 0)).unwrap();
        let s = cond1_sup_statistic(&path, 10, &params, 1.0).unwrap();
        assert!((s - 0.1).abs() < 1e-15);
        // All variances zero: identically zero.
        let params0 = MomentParams::new(1.0, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let s = cond1_sup_statistic(&path, 10, &params0, 1.0).unwrap();
        assert_eq!(s, 0.0);
        // Non-critical parameters are rejected.
        let bad = MomentParams::new(2.0, 1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            cond1_sup_statistic(&path, 10, &bad, 1.0),
            Err(StatError::NotCritical)
        ));
    }

    #[test]
    fn cond1_matches_brute_force_grid_sup() {
        // Oracle via the other algebraic route (conditional-variance sum
        // minus sigma_xi^2 * shifted integral) on a dense grid that
        // includes both one-sided cell endpoints; 20 random paths, 1e-8.
        let params = MomentParams::new(1.0, 1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        let t_end = 1.0;
        for seed in 0..20u64 {
            let n = 10 + (seed % 4) * 7;
            let k_max = floor_nt(n, t_end);
            let path =
                simulate_path(&poisson_config(k_max.max(1)), StreamKey::new(900, seed)).unwrap();
            let exact = cond1_sup_statistic(&path, n, &params, t_end).unwrap();
            let n2 = (n * n) as f64;
            let statistic = |t: f64| {
                let j = floor_nt(n, t);
                let sum: f64 = (1..=j)
                    .map(|k| params.sigma2_xi * path.x[k as usize - 1] as f64 + params.sigma2_eps)
                    .sum();
                (sum / n2 - params.sigma2_xi * shifted_integral(&path, n, params.m_eps, t).unwrap())
                    .abs()
            };
            let mut brute = 0.0f64;
            let per_cell = 1_000_000 / (k_max as usize + 1);
            for j in 0..=k_max {
                // Ulp-exact cell boundaries: j/n and the ulp below
                // (j+1)/n can both round into the wrong cell under n*t.
                let a = if j == 0 { 0.0 } else { cell_inf_time(n, j) };
                let b = if j == k_max {
                    t_end
                } else {
                    cell_sup_time(n, j)
                };
                brute = brute.max(statistic(a)).max(statistic(b));
                for i in 1..per_cell {
                    let t = a + (b - a) * i as f64 / per_cell as f64;
                    brute = brute.max(statistic(t));
                }
            }
            assert!(
                (exact - brute).abs() <= 1e-8,
                "seed {seed} n {n}: exact {exact} brute {brute}"
            );
        }
    }

    #[test]
    fn cond2_bounded_increments_are_exactly_zero() {
        // xi = 1 and eps in {0, 2}: |M_k| <= 1, so n theta > 1 kills every
        // indicator.
        let config = GWConfig {
            offspring: DistributionSpec::point_mass(1),
            immigration: DistributionSpec::two_point(0, 2, 0.5).unwrap(),
            initial: DistributionSpec::point_mass(0),
            horizon: 20,
            record_immigration: false,
        };
        let ensemble = PathEnsemble::new(config, 5, 2000).unwrap();
        let (mean, se) = cond2_lindeberg_statistic(&ensemble, 10, 0.5, 1.0, 2.0).unwrap();
        assert_eq!(mean, 0.0);
        assert_eq!(se, 0.0);
        assert!(matches!(
            cond2_lindeberg_statistic(&ensemble, 10, 0.0, 1.0, 2.0),
            Err(StatError::NonPositiveTheta(_))
        ));
    }

    #[test]
    fn cond2_degenerate_noise_free_case() {
        let config = GWConfig {
            offspring: DistributionSpec::point_mass(1),
            immigration: DistributionSpec::point_mass(1),
            initial: DistributionSpec::point_mass(0),
            horizon: 10,
            record_immigration: false,
        };
        let ensemble = PathEnsemble::new(config, 6, 100).unwrap();
        for n in [1u64, 5, 10] {
            let (mean, _) = cond2_lindeberg_statistic(&ensemble, n, 0.25, 1.0, 1.0).unwrap();
            assert_eq!(mean, 0.0);
        }
    }

    #[test]
    fn cond11_worked_examples() {
        // Deterministic path X_k = 2k: max at the horizon.
        let path = GWPath {
            x: (0..=10u64).map(|k| 2 * k).collect(),
            eps: None,
            seed_id: 0,
        };
        let s = cond11_supx_statistic(&path, 10, 1.0);
        assert_eq!(s, 20.0 / 100.0);
        // Empty process stays zero.
        let zero = GWPath {
            x: vec![0; 11],
            eps: None,
            seed_id: 0,
        };
        assert_eq!(cond11_supx_statistic(&zero, 10, 1.0), 0.0);
    }

    #[test]
    fn condition_ladder_decays_on_the_reference_scenario() {
        // Small-scale version of the acceptance gate: ladder {10, 50, 100},
        // 4000 paths; cond1 and cond11 must decay and stay ordered within
        // 3 joint SE.
        let config = poisson_config(100);
        let ladder = condition_ladder(&config, 77, 4000, &[10, 50, 100], &[0.5], 1.0).unwrap();
        assert!(ladder.cond1.decay_factor() > 5.0);
        assert!(ladder.cond11.decay_factor() > 5.0);
        assert!(ladder.cond1.max_monotone_violation_se() <= 3.0);
        assert!(ladder.cond11.max_monotone_violation_se() <= 3.0);
        assert!(ladder.cond2[0].max_monotone_violation_se() <= 3.0);
        // Lindeberg estimate at the top rung is already tiny.
        assert!(*ladder.cond2[0].estimates.last().unwrap() < 0.05);
    }

    #[test]
    fn condition_ladder_rejects_noncritical_configs() {
        let mut config = poisson_config(10);
        config.offspring = DistributionSpec::poisson(1.5).unwrap();
        assert!(matches!(
            condition_ladder(&config, 1, 10, &[10], &[0.5], 1.0),
            Err(StatError::NotCritical)
        ));
    }

    #[test]
    fn fdd_small_scale_poisson() {
        // 20k paths, ladder {20, 100}: the KS at n = 100 is already below
        // 0.05 and the report carries one verdict per t plus diagnostics.
        let config = poisson_config(100);
        let settings = FddSettings {
            t_values: vec![0.5, 1.0],
            n_values: vec![20, 100],
            n_paths: 20_000,
            master_seed: 99,
            ks_tolerance: 0.05,
            monotone_se_slack: None,
            centered_ks_tolerance: Some(0.05),
            line_sup_threshold: 0.05,
            line_pass_fraction: 0.99,
        };
        let report = fdd_convergence_test(&config, &settings).unwrap();
        assert!(report.all_pass(), "{}", report.render_table());
        assert_eq!(report.verdicts.len(), 4);
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.name.starts_with("supx_w1")));
    }

    #[test]
    fn fdd_with_nonzero_initial_value() {
        // The limit law starts from zero regardless of X_0; at finite n
        // the raw marginal carries the X_0/n shift and the centered one
        // the extra branching variance of X_0's descendants, so the two
        // statistics genuinely differ — and both shrink as n grows.
        let config = GWConfig {
            offspring: DistributionSpec::poisson(1.0).unwrap(),
            immigration: DistributionSpec::poisson(1.0).unwrap(),
            initial: DistributionSpec::point_mass(5),
            horizon: 400,
            record_immigration: false,
        };
        let settings = FddSettings {
            t_values: vec![1.0],
            n_values: vec![100, 400],
            n_paths: 20_000,
            master_seed: 41,
            ks_tolerance: 1.0,
            monotone_se_slack: None,
            centered_ks_tolerance: Some(1.0),
            line_sup_threshold: 0.05,
            line_pass_fraction: 0.99,
        };
        let report = fdd_convergence_test(&config, &settings).unwrap();
        let diag = |name: &str| {
            report
                .diagnostics
                .iter()
                .find(|d| d.name == name)
                .unwrap()
                .value
        };
        let raw_100 = diag("fdd_ks[t=1][n=100]");
        let raw_400 = diag("fdd_ks[t=1][n=400]");
        let cen_100 = diag("centered_ks[t=1][n=100]");
        let cen_400 = diag("centered_ks[t=1][n=400]");
        assert_ne!(raw_100, cen_100);
        assert!(raw_400 < raw_100, "raw {raw_100} -> {raw_400}");
        assert!(cen_400 < cen_100, "centered {cen_100} -> {cen_400}");
    }

    #[test]
    fn fdd_rejects_noncritical() {
        let mut config = poisson_config(10);
        config.offspring = DistributionSpec::poisson(0.9).unwrap();
        let settings = FddSettings {
            t_values: vec![1.0],
            n_values: vec![10],
            n_paths: 10,
            master_seed: 1,
            ks_tolerance: 1.0,
            monotone_se_slack: None,
            centered_ks_tolerance: None,
            line_sup_threshold: 0.05,
            line_pass_fraction: 0.99,
        };
        assert!(matches!(
            fdd_convergence_test(&config, &settings),
            Err(StatError::NotCritical)
        ));
    }

    #[test]
    fn fdd_degenerate_line_mode() {
        // PointMass(1) offspring: the line test runs instead of KS. At a
        // loose threshold the fraction gate passes.
        let config = GWConfig {
            offspring: DistributionSpec::point_mass(1),
            immigration: DistributionSpec::poisson(1.0).unwrap(),
            initial: DistributionSpec::point_mass(0),
            horizon: 100,
            record_immigration: false,
        };
        let settings = FddSettings {
            t_values: vec![1.0],
            n_values: vec![20, 100],
            n_paths: 4000,
            master_seed: 5,
            ks_tolerance: 0.05,
            monotone_se_slack: None,
            centered_ks_tolerance: None,
            line_sup_threshold: 0.5,
            line_pass_fraction: 0.99,
        };
        let report = fdd_convergence_test(&config, &settings).unwrap();
        assert_eq!(report.verdicts.len(), 1);
        assert!(report.verdicts[0].test.starts_with("line_sup_frac"));
        assert!(report.all_pass(), "{}", report.render_table());
        // The mean sup-gap decays with n.
        let means: Vec<f64> = report
            .diagnostics
            .iter()
            .filter(|d| d.name.starts_with("line_sup_mean"))
            .map(|d| d.value)
            .collect();
        assert!(means[1] < means[0]);
    }

    #[test]
    fn line_sup_gap_deterministic_path() {
        // X_k = k with m_eps = 1: gap is at most one cell of drift, 1/n.
        let path = GWPath {
            x: (0..=20u64).collect(),
            eps: None,
            seed_id: 0,
        };
        let gap = line_sup_gap(&path, 20, 1.0, 1.0);
        assert!((gap - 0.05).abs() < 1e-12);
    }
}
