//! The limit diffusion `dX_t = m_eps dt + sqrt(sigma2_xi * X_t^+) dW_t`
//! (a squared Bessel process) and its exact marginal law.
//!
//! Two schemes: full-truncation Euler, which transcribes the SDE as
//! written — the positive part sits inside the square root and transiently
//! negative iterates are kept — and exact transition sampling. Given
//! `X_t = x` and a step `h`, the next value is `c·V` with `c = sigma2 h/4`
//! and `V` noncentral chi-square with `d = 4 m_eps / sigma2` degrees of
//! freedom and noncentrality `x/c`, drawn as a Poisson-mixed Gamma, exact
//! for every parameter range including `d < 1`. Started from zero the
//! time-`t` marginal is `Gamma(2 m_eps / sigma2, sigma2 t / 2)`, whose CDF
//! is the convergence target of the verification layer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gw_engine::GWConfig;
use crate::rng::RandomStream;
use crate::sampling::{sample_gamma, sample_poisson, sample_std_normal};
use crate::special::reg_lower_gamma;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid SDE parameters: {0}")]
    InvalidParameter(String),
    #[error("sigma2_xi = 0 is the deterministic line; use euler_path for it")]
    DegenerateDiffusion,
    #[error("exact transitions require x0 >= 0, got {0}")]
    NegativeStart(f64),
    #[error("marginal law requires x0 = 0, got {0}")]
    NonzeroStart(f64),
    #[error("marginal law requires t > 0, got {0}")]
    NonpositiveTime(f64),
}

/// Drift `m_eps`, squared diffusion scale `sigma2_xi` and the start value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SDEParams {
    pub m_eps: f64,
    pub sigma2_xi: f64,
    #[serde(default)]
    pub x0: f64,
}

impl SDEParams {
    pub fn new(m_eps: f64, sigma2_xi: f64, x0: f64) -> Result<Self, DiffusionError> {
        if !(m_eps >= 0.0 && m_eps.is_finite()) {
            return Err(DiffusionError::InvalidParameter(format!(
                "m_eps must be finite and nonnegative, got {m_eps}"
            )));
        }
        if !(sigma2_xi >= 0.0 && sigma2_xi.is_finite()) {
            return Err(DiffusionError::InvalidParameter(format!(
                "sigma2_xi must be finite and nonnegative, got {sigma2_xi}"
            )));
        }
        if !x0.is_finite() {
            return Err(DiffusionError::InvalidParameter(format!(
                "x0 must be finite, got {x0}"
            )));
        }
        Ok(Self {
            m_eps,
            sigma2_xi,
            x0,
        })
    }

    /// Limit coefficients implied by a branching configuration:
    /// drift = immigration mean, diffusion scale = offspring variance,
    /// start 0 (the limit starts from zero regardless of X_0).
    pub fn from_gw(config: &GWConfig) -> Self {
        Self {
            m_eps: config.immigration.mean(),
            sigma2_xi: config.offspring.variance(),
            x0: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerFullTruncation,
    ExactTransition,
}

/// A discretized trajectory on the uniform grid 0..T.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub scheme: Scheme,
}

impl DiffusionPath {
    pub fn endpoint(&self) -> f64 {
        *self.values.last().expect("non-empty path")
    }
}

fn check_grid(t_end: f64, steps: u64) -> Result<f64, DiffusionError> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DiffusionError::InvalidParameter(format!(
            "horizon must be positive and finite, got {t_end}"
        )));
    }
    if steps == 0 {
        return Err(DiffusionError::InvalidParameter(
            "steps must be >= 1".to_string(),
        ));
    }
    Ok(t_end / steps as f64)
}

/// Full-truncation Euler:
/// `X_{i+1} = X_i + m_eps h + sqrt(sigma2 X_i^+) sqrt(h) Z_i`.
/// Negative iterates are retained; only the diffusion coefficient is
/// truncated.
pub fn euler_path(
    params: &SDEParams,
    t_end: f64,
    steps: u64,
    stream: &mut RandomStream,
) -> Result<DiffusionPath, DiffusionError> {
    let h = check_grid(t_end, steps)?;
    let sqrt_h = h.sqrt();
    let mut times = Vec::with_capacity(steps as usize + 1);
    let mut values = Vec::with_capacity(steps as usize + 1);
    let mut x = params.x0;
    times.push(0.0);
    values.push(x);
    for i in 1..=steps {
        let diff = (params.sigma2_xi * x.max(0.0)).sqrt();
        x += params.m_eps * h + diff * sqrt_h * sample_std_normal(stream);
        times.push(i as f64 * h);
        values.push(x);
    }
    Ok(DiffusionPath {
        times,
        values,
        scheme: Scheme::EulerFullTruncation,
    })
}

/// One exact squared-Bessel transition of size `h` from state `x >= 0`.
pub fn exact_transition_step(params: &SDEParams, x: f64, h: f64, stream: &mut RandomStream) -> f64 {
    debug_assert!(x >= 0.0 && h > 0.0);
    let c = params.sigma2_xi * h / 4.0;
    let d = 4.0 * params.m_eps / params.sigma2_xi;
    // Noncentral chi-square (d, x/c) as a Poisson(x/2c)-mixed Gamma.
    let mixing = sample_poisson(x / (2.0 * c), stream);
    let shape = d / 2.0 + mixing as f64;
    if shape == 0.0 {
        // Zero degrees of freedom and no mixing mass: absorbed at 0.
        return 0.0;
    }
    c * sample_gamma(shape, 2.0, stream)
}

/// Exact-transition trajectory; all values are nonnegative.
pub fn exact_transition_path(
    params: &SDEParams,
    t_end: f64,
    steps: u64,
    stream: &mut RandomStream,
) -> Result<DiffusionPath, DiffusionError> {
    if params.sigma2_xi == 0.0 {
        return Err(DiffusionError::DegenerateDiffusion);
    }
    if params.x0 < 0.0 {
        return Err(DiffusionError::NegativeStart(params.x0));
    }
    let h = check_grid(t_end, steps)?;
    let mut times = Vec::with_capacity(steps as usize + 1);
    let mut values = Vec::with_capacity(steps as usize + 1);
    let mut x = params.x0;
    times.push(0.0);
    values.push(x);
    for i in 1..=steps {
        x = exact_transition_step(params, x, h, stream);
        times.push(i as f64 * h);
        values.push(x);
    }
    Ok(DiffusionPath {
        times,
        values,
        scheme: Scheme::ExactTransition,
    })
}

/// CDF of the time-`t` marginal started at zero:
/// `Gamma(2 m_eps / sigma2, sigma2 t / 2)`. With `sigma2 = 0` the law is
/// the point mass at `m_eps t`; with `m_eps = 0` it is the point mass at 0.
pub fn limit_marginal_cdf(params: &SDEParams, t: f64, x: f64) -> Result<f64, DiffusionError> {
    if params.x0 != 0.0 {
        return Err(DiffusionError::NonzeroStart(params.x0));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(DiffusionError::NonpositiveTime(t));
    }
    if x < 0.0 {
        return Ok(0.0);
    }
    if params.sigma2_xi == 0.0 {
        return Ok(if x >= params.m_eps * t { 1.0 } else { 0.0 });
    }
    if params.m_eps == 0.0 {
        return Ok(1.0);
    }
    let shape = 2.0 * params.m_eps / params.sigma2_xi;
    let scale = params.sigma2_xi * t / 2.0;
    Ok(reg_lower_gamma(shape, x / scale))
}

/// Shift an X-trajectory to its driftless companion
/// `M_t = X_t - m_eps t` (the two SDEs correspond pathwise).
pub fn m_path_from_x(xpath: &DiffusionPath, m_eps: f64) -> DiffusionPath {
    DiffusionPath {
        times: xpath.times.clone(),
        values: xpath
            .times
            .iter()
            .zip(&xpath.values)
            .map(|(&t, &v)| v - m_eps * t)
            .collect(),
        scheme: xpath.scheme,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convergence::{ks_distance, ks_two_sample};
    use crate::rng::StreamKey;
    use crate::stats::MomentAccumulator;

    fn stream(seed: u64, path: u64) -> RandomStream {
        StreamKey::new(seed, path).slot(0)
    }

    fn reference() -> SDEParams {
        // Coefficients of the Poisson/Poisson critical case.
        SDEParams::new(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn degenerate_sigma_gives_the_deterministic_line() {
        let p = SDEParams::new(1.0, 0.0, 0.0).unwrap();
        let mut s = stream(1, 0);
        let path = euler_path(&p, 2.0, 64, &mut s).unwrap();
        for (t, v) in path.times.iter().zip(&path.values) {
            assert!((v - t).abs() < 1e-12);
        }
        assert!(matches!(
            exact_transition_path(&p, 1.0, 8, &mut s),
            Err(DiffusionError::DegenerateDiffusion)
        ));
    }

    #[test]
    fn no_drift_no_noise_is_constant() {
        let p = SDEParams::new(0.0, 0.0, 3.5).unwrap();
        let mut s = stream(2, 0);
        let path = euler_path(&p, 1.0, 16, &mut s).unwrap();
        assert!(path.values.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn euler_truncation_keeps_negatives_but_zeroes_diffusion() {
        // With x0 < 0 and no drift the diffusion term is dead: the path
        // stays frozen at x0.
        let p = SDEParams::new(0.0, 4.0, -1.0).unwrap();
        let mut s = stream(3, 0);
        let path = euler_path(&p, 1.0, 32, &mut s).unwrap();
        assert!(path.values.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn euler_endpoint_mean_matches_drift_integral() {
        // m_eps = 1, sigma2 = 2, x0 = 0: E X_1 = 1 (moment identity from
        // integrating the drift).
        let p = SDEParams::new(1.0, 2.0, 0.0).unwrap();
        let mut acc = MomentAccumulator::new();
        for i in 0..200_000u64 {
            let mut s = stream(4, i);
            acc.push(euler_path(&p, 1.0, 64, &mut s).unwrap().endpoint());
        }
        assert!(
            (acc.mean() - 1.0).abs() <= 5.0 * acc.se_mean(),
            "mean {} se {}",
            acc.mean(),
            acc.se_mean()
        );
    }

    #[test]
    fn exact_endpoint_moments_match_the_gamma_law() {
        // Mean m_eps t and variance sigma2 m_eps t^2 / 2 within 5 SE.
        let p = reference();
        let t = 1.0;
        let mut acc = MomentAccumulator::new();
        for i in 0..200_000u64 {
            let mut s = stream(5, i);
            acc.push(exact_transition_path(&p, t, 4, &mut s).unwrap().endpoint());
        }
        let want_mean = p.m_eps * t;
        let want_var = p.sigma2_xi * p.m_eps * t * t / 2.0;
        assert!((acc.mean() - want_mean).abs() <= 5.0 * acc.se_mean());
        assert!((acc.variance() - want_var).abs() <= 5.0 * acc.se_variance());
    }

    #[test]
    fn exact_paths_are_nonnegative() {
        let p = SDEParams::new(0.3, 2.5, 0.0).unwrap();
        for i in 0..200u64 {
            let mut s = stream(6, i);
            let path = exact_transition_path(&p, 2.0, 16, &mut s).unwrap();
            assert!(path.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn zero_drift_absorbs_at_zero() {
        // d = 0 and x = 0: the process never leaves 0.
        let p = SDEParams::new(0.0, 1.0, 0.0).unwrap();
        let mut s = stream(7, 0);
        let path = exact_transition_path(&p, 1.0, 8, &mut s).unwrap();
        assert!(path.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_endpoint_matches_gamma_marginal_in_distribution() {
        // x0 = 0, m_eps = 1, sigma2 = 2, t = 1: Exp(1). One-sample KS on
        // 1e5 endpoints sampled in a single transition.
        let p = SDEParams::new(1.0, 2.0, 0.0).unwrap();
        let sample: Vec<f64> = (0..100_000u64)
            .map(|i| {
                let mut s = stream(8, i);
                exact_transition_path(&p, 1.0, 1, &mut s)
                    .unwrap()
                    .endpoint()
            })
            .collect();
        let ks = ks_distance(&sample, |x| limit_marginal_cdf(&p, 1.0, x).unwrap()).unwrap();
        assert!(ks.p_value > 0.001, "KS {} p {}", ks.statistic, ks.p_value);

        // Multi-step sampling hits the same marginal: m_eps = 1,
        // sigma2 = 1 at t = 1 is Gamma(2, 1/2).
        let p = reference();
        let sample: Vec<f64> = (0..100_000u64)
            .map(|i| {
                let mut s = stream(9, i);
                exact_transition_path(&p, 1.0, 8, &mut s)
                    .unwrap()
                    .endpoint()
            })
            .collect();
        let ks = ks_distance(&sample, |x| limit_marginal_cdf(&p, 1.0, x).unwrap()).unwrap();
        assert!(ks.p_value > 0.001, "KS {} p {}", ks.statistic, ks.p_value);
    }

    #[test]
    fn markov_consistency_one_step_vs_two_half_steps() {
        // Two-sample KS at level 0.001 on 1e5 replicates.
        let p = reference();
        let h = 0.5;
        let one: Vec<f64> = (0..100_000u64)
            .map(|i| {
                let mut s = stream(10, i);
                exact_transition_step(&p, 0.7, h, &mut s)
            })
            .collect();
        let two: Vec<f64> = (0..100_000u64)
            .map(|i| {
                let mut s = stream(11, i);
                let mid = exact_transition_step(&p, 0.7, h / 2.0, &mut s);
                exact_transition_step(&p, mid, h / 2.0, &mut s)
            })
            .collect();
        let ks = ks_two_sample(&one, &two).unwrap();
        assert!(ks.p_value > 0.001, "KS {} p {}", ks.statistic, ks.p_value);
    }

    #[test]
    fn euler_converges_weakly_to_the_exact_law() {
        // KS between 2e4 Euler endpoints (512 steps) and the exact
        // marginal stays small; full acceptance runs 2048 steps at 1e5.
        let p = reference();
        let sample: Vec<f64> = (0..20_000u64)
            .map(|i| {
                let mut s = stream(12, i);
                euler_path(&p, 1.0, 512, &mut s).unwrap().endpoint()
            })
            .collect();
        let ks = ks_distance(&sample, |x| limit_marginal_cdf(&p, 1.0, x).unwrap()).unwrap();
        assert!(ks.statistic < 0.02, "KS {}", ks.statistic);
    }

    #[test]
    fn marginal_cdf_worked_values() {
        // m_eps = 1, sigma2 = 2, t = 1: Exp(1); F(1) = 1 - e^{-1}.
        let p = SDEParams::new(1.0, 2.0, 0.0).unwrap();
        let got = limit_marginal_cdf(&p, 1.0, 1.0).unwrap();
        assert!((got - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert_eq!(limit_marginal_cdf(&p, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(limit_marginal_cdf(&p, 1.0, -3.0).unwrap(), 0.0);
        assert!((limit_marginal_cdf(&p, 1.0, 1e6).unwrap() - 1.0).abs() < 1e-14);
        // Degenerate sigma: step at m_eps t.
        let p0 = SDEParams::new(2.0, 0.0, 0.0).unwrap();
        assert_eq!(limit_marginal_cdf(&p0, 1.0, 1.9).unwrap(), 0.0);
        assert_eq!(limit_marginal_cdf(&p0, 1.0, 2.0).unwrap(), 1.0);
        // Domain errors.
        let bad = SDEParams::new(1.0, 1.0, 0.5).unwrap();
        assert!(matches!(
            limit_marginal_cdf(&bad, 1.0, 1.0),
            Err(DiffusionError::NonzeroStart(_))
        ));
        assert!(matches!(
            limit_marginal_cdf(&p, 0.0, 1.0),
            Err(DiffusionError::NonpositiveTime(_))
        ));
    }

    #[test]
    fn m_path_round_trip() {
        let p = reference();
        let mut s = stream(13, 0);
        let xpath = exact_transition_path(&p, 1.0, 32, &mut s).unwrap();
        let mpath = m_path_from_x(&xpath, p.m_eps);
        assert_eq!(mpath.values[0], 0.0);
        // psi_limit undoes the shift pointwise.
        for ((&t, &m), &x) in mpath.times.iter().zip(&mpath.values).zip(&xpath.values) {
            assert!((m + p.m_eps * t - x).abs() < 1e-12);
        }
        // The deterministic line maps to the zero path.
        let line = DiffusionPath {
            times: (0..=10).map(|i| i as f64 * 0.1).collect(),
            values: (0..=10).map(|i| i as f64 * 0.1 * 2.0).collect(),
            scheme: Scheme::EulerFullTruncation,
        };
        let m = m_path_from_x(&line, 2.0);
        assert!(m.values.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn parameter_validation() {
        assert!(SDEParams::new(-1.0, 1.0, 0.0).is_err());
        assert!(SDEParams::new(1.0, -1.0, 0.0).is_err());
        assert!(SDEParams::new(1.0, 1.0, f64::NAN).is_err());
        let p = reference();
        let mut s = stream(14, 0);
        assert!(euler_path(&p, 0.0, 8, &mut s).is_err());
        assert!(euler_path(&p, 1.0, 0, &mut s).is_err());
        let neg = SDEParams::new(1.0, 1.0, -0.5).unwrap();
        assert!(matches!(
            exact_transition_path(&neg, 1.0, 8, &mut s),
            Err(DiffusionError::NegativeStart(_))
        ));
    }
}
