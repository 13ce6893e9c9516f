//! Closed-form moments of the process and its martingale differences.
//!
//! These are the exact oracles the Monte Carlo engine is verified
//! against: the general-criticality mean
//! `E X_k = E X_0 · m_xi^k + m_eps (m_xi^k - 1)/(m_xi - 1)` (linear
//! branch `E X_0 + m_eps k` at criticality), the critical variance
//! `Var X_k = m_eps σ_ξ² (k-1)k/2 + (σ_ξ² E X_0 + σ_ε²) k + Var X_0`,
//! the conditional variance `σ_ξ² X_{k-1} + σ_ε²`, and the second moment
//! `E M_k² = σ_ξ² m_eps (k-1) + σ_ξ² E X_0 + σ_ε²`. The order
//! certificates expose the ratio sequences behind the `O(k)`/`O(k²)`/
//! `O(√k)` growth bounds.

use thiserror::Error;

use crate::gw_engine::GWConfig;

/// Width of the removable singularity at m_xi = 1: inside it the linear
/// branch is used (the geometric branch loses all precision there).
pub const CRITICAL_BRANCH_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("formula requires a critical process (m_xi = 1), got m_xi = {m_xi}")]
    NotCritical { m_xi: f64 },
    #[error("M_0 is undefined; k must be >= 1")]
    UndefinedAtZero,
    #[error("invalid moment parameters: {0}")]
    InvalidParameter(String),
}

/// First and second moments of the offspring, immigration and initial
/// laws, the inputs of every closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentParams {
    pub m_xi: f64,
    pub m_eps: f64,
    pub sigma2_xi: f64,
    pub sigma2_eps: f64,
    pub mean_x0: f64,
    pub var_x0: f64,
}

impl MomentParams {
    pub fn new(
        m_xi: f64,
        m_eps: f64,
        sigma2_xi: f64,
        sigma2_eps: f64,
        mean_x0: f64,
        var_x0: f64,
    ) -> Result<Self, MomentError> {
        for (name, v) in [
            ("m_xi", m_xi),
            ("m_eps", m_eps),
            ("sigma2_xi", sigma2_xi),
            ("sigma2_eps", sigma2_eps),
            ("mean_x0", mean_x0),
            ("var_x0", var_x0),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MomentError::InvalidParameter(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self {
            m_xi,
            m_eps,
            sigma2_xi,
            sigma2_eps,
            mean_x0,
            var_x0,
        })
    }

    pub fn from_config(config: &GWConfig) -> Self {
        Self {
            m_xi: config.offspring.mean(),
            m_eps: config.immigration.mean(),
            sigma2_xi: config.offspring.variance(),
            sigma2_eps: config.immigration.variance(),
            mean_x0: config.initial.mean(),
            var_x0: config.initial.variance(),
        }
    }

    pub fn is_critical(&self) -> bool {
        (self.m_xi - 1.0).abs() < CRITICAL_BRANCH_EPS
    }

    fn require_critical(&self) -> Result<(), MomentError> {
        if self.is_critical() {
            Ok(())
        } else {
            Err(MomentError::NotCritical { m_xi: self.m_xi })
        }
    }
}

/// E X_k for any criticality regime.
pub fn mean_xk(params: &MomentParams, k: u64) -> f64 {
    if params.is_critical() {
        params.mean_x0 + params.m_eps * k as f64
    } else {
        let mk = params.m_xi.powi(k.min(i32::MAX as u64) as i32);
        params.mean_x0 * mk + params.m_eps * (mk - 1.0) / (params.m_xi - 1.0)
    }
}

/// Var X_k in the critical case.
pub fn var_xk_critical(params: &MomentParams, k: u64) -> Result<f64, MomentError> {
    params.require_critical()?;
    let kf = k as f64;
    Ok(params.m_eps * params.sigma2_xi * (kf - 1.0) * kf / 2.0
        + (params.sigma2_xi * params.mean_x0 + params.sigma2_eps) * kf
        + params.var_x0)
}

/// Conditional variance of X_k (equivalently of M_k) given X_{k-1} = x_prev.
pub fn cond_var_given_prev(params: &MomentParams, x_prev: u64) -> f64 {
    params.sigma2_xi * x_prev as f64 + params.sigma2_eps
}

/// E M_k² in the critical case, k >= 1. Also equals
/// `σ_ξ² · mean_xk(k-1) + σ_ε²`.
pub fn second_moment_mk(params: &MomentParams, k: u64) -> Result<f64, MomentError> {
    params.require_critical()?;
    if k == 0 {
        return Err(MomentError::UndefinedAtZero);
    }
    Ok(params.sigma2_xi * params.m_eps * (k as f64 - 1.0)
        + params.sigma2_xi * params.mean_x0
        + params.sigma2_eps)
}

/// E X_k² in the critical case, exposed as variance + mean².
pub fn second_moment_xk_critical(params: &MomentParams, k: u64) -> Result<f64, MomentError> {
    let mean = mean_xk(params, k);
    Ok(var_xk_critical(params, k)? + mean * mean)
}

/// One row of the growth-order certificate table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderRow {
    pub k: u64,
    /// E X_k / k.
    pub mean_ratio: f64,
    /// E X_k² / k².
    pub second_moment_ratio: f64,
    /// sqrt(E M_k²) / sqrt(k) — the Lyapunov bound on E|M_k|.
    pub abs_m_bound_ratio: f64,
    /// E M_k² / k.
    pub m2_ratio: f64,
}

/// Ratio sequences that certify the critical growth orders
/// E X_k = O(k), E X_k² = O(k²), E|M_k| = O(√k), E M_k² = O(k):
/// each column must stay bounded in k. E|M_k| has no closed form, so its
/// column carries the Lyapunov bound sqrt(E M_k²).
pub fn order_certificates(params: &MomentParams, k_max: u64) -> Result<Vec<OrderRow>, MomentError> {
    params.require_critical()?;
    if k_max < 2 {
        return Err(MomentError::InvalidParameter(
            "k_max must be >= 2".to_string(),
        ));
    }
    (1..=k_max)
        .map(|k| {
            let kf = k as f64;
            let m2 = second_moment_mk(params, k)?;
            Ok(OrderRow {
                k,
                mean_ratio: mean_xk(params, k) / kf,
                second_moment_ratio: second_moment_xk_critical(params, k)? / (kf * kf),
                abs_m_bound_ratio: m2.sqrt() / kf.sqrt(),
                m2_ratio: m2 / kf,
            })
        })
        .collect()
}

/// Tabulated moments at chosen generations (critical case).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    pub k_values: Vec<u64>,
    pub mean_x: Vec<f64>,
    pub var_x: Vec<f64>,
    pub mean_m2: Vec<f64>,
}

pub fn moment_table(params: &MomentParams, k_values: &[u64]) -> Result<MomentTable, MomentError> {
    params.require_critical()?;
    let mut table = MomentTable {
        k_values: k_values.to_vec(),
        mean_x: Vec::with_capacity(k_values.len()),
        var_x: Vec::with_capacity(k_values.len()),
        mean_m2: Vec::with_capacity(k_values.len()),
    };
    for &k in k_values {
        table.mean_x.push(mean_xk(params, k));
        table.var_x.push(var_xk_critical(params, k)?);
        table.mean_m2.push(if k == 0 {
            f64::NAN
        } else {
            second_moment_mk(params, k)?
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(
        m_xi: f64,
        m_eps: f64,
        sigma2_xi: f64,
        sigma2_eps: f64,
        mean_x0: f64,
        var_x0: f64,
    ) -> MomentParams {
        MomentParams::new(m_xi, m_eps, sigma2_xi, sigma2_eps, mean_x0, var_x0).unwrap()
    }

    #[test]
    fn mean_examples() {
        // Supercritical: m_xi = 2, E X_0 = 1, m_eps = 1, k = 2 -> 7.
        let p = params(2.0, 1.0, 0.0, 0.0, 1.0, 0.0);
        assert_eq!(mean_xk(&p, 2), 7.0);
        // Critical linear branch: 0 + 1 * 5 = 5.
        let p = params(1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        assert_eq!(mean_xk(&p, 5), 5.0);
        // k = 0 is the initial mean.
        assert_eq!(mean_xk(&p, 0), 0.0);
        let p = params(0.5, 2.0, 0.0, 0.0, 3.0, 0.0);
        assert_eq!(mean_xk(&p, 0), 3.0);
    }

    #[test]
    fn mean_satisfies_one_step_recursion() {
        // E X_k = m_xi E X_{k-1} + m_eps, k <= 1000, 1e-9 relative.
        for p in [
            params(1.0, 1.0, 1.0, 1.0, 2.0, 1.0),
            params(0.9, 2.0, 0.5, 0.25, 1.0, 0.0),
            params(1.05, 0.5, 1.0, 2.0, 0.0, 0.0),
        ] {
            for k in 1..=1000u64 {
                let lhs = mean_xk(&p, k);
                let rhs = p.m_xi * mean_xk(&p, k - 1) + p.m_eps;
                assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn variance_examples_and_recursion() {
        // sigma2_xi = 1, m_eps = 1, sigma2_eps = 1, X_0 = 0, k = 3 -> 6.
        let p = params(1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        assert_eq!(var_xk_critical(&p, 3).unwrap(), 6.0);
        assert_eq!(var_xk_critical(&p, 0).unwrap(), 0.0);
        // sigma2_xi = 0 degenerates to sigma2_eps k + Var X_0.
        let p0 = params(1.0, 1.0, 0.0, 2.0, 0.0, 3.0);
        assert_eq!(var_xk_critical(&p0, 10).unwrap(), 23.0);
        // Var X_k = Var X_{k-1} + sigma2_xi E X_{k-1} + sigma2_eps.
        let p = params(1.0, 2.0, 0.5, 0.25, 1.0, 4.0);
        for k in 1..=1000u64 {
            let lhs = var_xk_critical(&p, k).unwrap();
            let rhs = var_xk_critical(&p, k - 1).unwrap()
                + p.sigma2_xi * mean_xk(&p, k - 1)
                + p.sigma2_eps;
            assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
        }
        assert!(matches!(
            var_xk_critical(&params(2.0, 1.0, 1.0, 1.0, 0.0, 0.0), 3),
            Err(MomentError::NotCritical { .. })
        ));
    }

    #[test]
    fn conditional_variance() {
        let p = params(1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        assert_eq!(cond_var_given_prev(&p, 0), 1.0);
        assert_eq!(cond_var_given_prev(&p, 10), 11.0);
        let p0 = params(1.0, 1.0, 0.0, 0.7, 0.0, 0.0);
        for x in [0u64, 1, 1000] {
            assert_eq!(cond_var_given_prev(&p0, x), 0.7);
        }
    }

    #[test]
    fn second_moment_of_martingale_differences() {
        let p = params(1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        assert_eq!(second_moment_mk(&p, 1).unwrap(), 1.0);
        assert_eq!(second_moment_mk(&p, 4).unwrap(), 4.0);
        assert!(matches!(
            second_moment_mk(&p, 0),
            Err(MomentError::UndefinedAtZero)
        ));
        // Algebraic identity with the mean: E M_k² = σ_ξ² E X_{k-1} + σ_ε².
        let p = params(1.0, 1.7, 0.6, 0.3, 2.5, 1.0);
        for k in 1..=100u64 {
            assert_relative_eq!(
                second_moment_mk(&p, k).unwrap(),
                p.sigma2_xi * mean_xk(&p, k - 1) + p.sigma2_eps,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn near_critical_continuity_of_mean() {
        // Inside the branch window the linear form is used exactly.
        let crit = params(1.0, 1.0, 1.0, 1.0, 2.0, 0.0);
        for &m in &[1.0 - 1e-13, 1.0 + 1e-13] {
            let near = params(m, 1.0, 1.0, 1.0, 2.0, 0.0);
            for k in [1u64, 10, 100, 1000] {
                let rel = (mean_xk(&near, k) - mean_xk(&crit, k)).abs() / mean_xk(&crit, k);
                assert!(rel < 1e-6, "m={m}, k={k}: rel {rel}");
            }
        }
        // Just outside the window the geometric branch agrees closely.
        for &m in &[1.0 - 1e-11, 1.0 + 1e-11] {
            let near = params(m, 1.0, 1.0, 1.0, 2.0, 0.0);
            for k in [1u64, 10, 100, 1000] {
                let rel = (mean_xk(&near, k) - mean_xk(&crit, k)).abs() / mean_xk(&crit, k);
                assert!(rel < 1e-6, "m={m}, k={k}: rel {rel}");
            }
        }
    }

    #[test]
    fn order_certificates_bounded_for_reference_parameters() {
        // Poisson(1)/Poisson(1), X_0 = 0: all ratios bounded by 3 up to 1e4.
        let p = params(1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        let rows = order_certificates(&p, 10_000).unwrap();
        let mut max_ratio = 0.0f64;
        for r in &rows {
            max_ratio = max_ratio
                .max(r.mean_ratio)
                .max(r.second_moment_ratio)
                .max(r.abs_m_bound_ratio)
                .max(r.m2_ratio);
        }
        assert!(max_ratio <= 3.0, "max ratio {max_ratio}");
        // k = 1 columns finite and positive when sigma2_eps > 0.
        let first = rows[0];
        assert!(first.mean_ratio.is_finite() && first.mean_ratio > 0.0);
        assert!(first.m2_ratio > 0.0 && first.abs_m_bound_ratio > 0.0);
    }

    #[test]
    fn order_certificates_m2_column_vanishes_without_branching_noise() {
        let p = params(1.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        let rows = order_certificates(&p, 1000).unwrap();
        assert!(rows.last().unwrap().m2_ratio < 2e-3);
        assert!(rows.windows(2).all(|w| w[1].m2_ratio <= w[0].m2_ratio));
        assert!(matches!(
            order_certificates(&params(1.5, 1.0, 1.0, 1.0, 0.0, 0.0), 100),
            Err(MomentError::NotCritical { .. })
        ));
        assert!(order_certificates(&p, 1).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(MomentParams::new(1.0, -0.1, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(MomentParams::new(1.0, f64::NAN, 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn moment_table_rows() {
        let p = params(1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        let t = moment_table(&p, &[1, 2, 3]).unwrap();
        assert_eq!(t.mean_x, vec![1.0, 2.0, 3.0]);
        assert_eq!(t.var_x, vec![1.0, 3.0, 6.0]);
        assert_eq!(t.mean_m2, vec![1.0, 2.0, 3.0]);
    }
}
