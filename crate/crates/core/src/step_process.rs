//! Scaled càdlàg step processes on the ⌊nt⌋ grid.
//!
//! `build_mn` realizes the scaled martingale step process
//! `M^(n)_t = (X_0 + Σ_{k<=⌊nt⌋} M_k)/n = X_⌊nt⌋/n - ⌊nt⌋ m_eps / n`
//! (both forms are computed and cross-checked), `build_xn` the scaled
//! population `X_⌊nt⌋/n`. `shifted_integral` evaluates
//! `∫_0^t (M^(n)_s + m_eps s)^+ ds` by its exact closed form — the
//! integrand equals `X_⌊ns⌋/n + (ns - ⌊ns⌋) m_eps / n >= 0`, so the
//! positive part never clips. The grid functional `psi_n`
//! (`f ↦ f(⌊nt⌋/n) + ⌊nt⌋ m_eps/n`) maps `M^(n)` back to `X_⌊n·⌋/n`
//! exactly; `psi_limit` is its continuous-time counterpart
//! `f ↦ f(t) + m_eps t`.

use thiserror::Error;

use crate::gw_engine::GWPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("path horizon {horizon} too short: need floor(n*t) = {needed} generations")]
    PathTooShort { needed: u64, horizon: u64 },
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("scaling index n must be >= 1")]
    ZeroScale,
    #[error("step function needs {needed} values on [0, {horizon}], got {got}")]
    TooFewValues {
        needed: usize,
        horizon: f64,
        got: usize,
    },
}

/// ⌊n t⌋ with the one floating-point rounding every consumer shares.
#[inline]
pub fn floor_nt(n: u64, t: f64) -> u64 {
    (n as f64 * t).floor() as u64
}

/// Drift grid term `k · m_eps / n`, shared by `build_mn` and `psi_n` so
/// their values cancel exactly in the identity tests.
#[inline]
fn drift_term(k: u64, n: u64, m_eps: f64) -> f64 {
    k as f64 * m_eps / n as f64
}

/// Smallest representable time inside grid cell k (the first t with
/// `floor_nt(n, t) == k`). `k/n` itself can land in cell k-1 after the
/// two roundings in `n * (k/n)`.
pub fn cell_inf_time(n: u64, k: u64) -> f64 {
    let mut t = k as f64 / n as f64;
    while floor_nt(n, t) < k {
        t = f64::from_bits(t.to_bits() + 1);
    }
    t
}

/// Largest representable time inside grid cell k (the last t with
/// `floor_nt(n, t) == k`). The value one ulp below `(k+1)/n` can round
/// back into cell k+1 under `n * t`, so a short ulp walk is needed.
pub fn cell_sup_time(n: u64, k: u64) -> f64 {
    let mut t = f64::from_bits(((k + 1) as f64 / n as f64).to_bits() - 1);
    while floor_nt(n, t) > k {
        t = f64::from_bits(t.to_bits() - 1);
    }
    t
}

/// Piecewise-constant càdlàg function on [0, T]: value on
/// [k/n, (k+1)/n) is `values[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    n: u64,
    values: Vec<f64>,
    horizon: f64,
}

impl StepFunction {
    pub fn new(n: u64, values: Vec<f64>, horizon: f64) -> Result<Self, StepError> {
        if n == 0 {
            return Err(StepError::ZeroScale);
        }
        if horizon < 0.0 {
            return Err(StepError::NegativeTime(horizon));
        }
        let needed = floor_nt(n, horizon) as usize + 1;
        if values.len() < needed {
            return Err(StepError::TooFewValues {
                needed,
                horizon,
                got: values.len(),
            });
        }
        Ok(Self { n, values, horizon })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at time t: `values[⌊nt⌋]`.
    pub fn eval(&self, t: f64) -> f64 {
        assert!(
            (0.0..=self.horizon).contains(&t),
            "t = {t} outside [0, {}]",
            self.horizon
        );
        self.values[floor_nt(self.n, t) as usize]
    }
}

/// The scaled martingale step process `M^(n)` of a path.
pub fn build_mn(
    path: &GWPath,
    n: u64,
    m_eps: f64,
    horizon: f64,
) -> Result<StepFunction, StepError> {
    if n == 0 {
        return Err(StepError::ZeroScale);
    }
    if horizon < 0.0 {
        return Err(StepError::NegativeTime(horizon));
    }
    let needed = floor_nt(n, horizon);
    if needed > path.horizon() {
        return Err(StepError::PathTooShort {
            needed,
            horizon: path.horizon(),
        });
    }
    let nf = n as f64;
    let mut values = Vec::with_capacity(needed as usize + 1);
    let mut cum_m = 0.0f64;
    let x0 = path.x[0] as f64;
    for k in 0..=needed {
        let direct = path.x[k as usize] as f64 / nf - drift_term(k, n, m_eps);
        if k > 0 {
            cum_m += path.x[k as usize] as f64 - path.x[k as usize - 1] as f64 - m_eps;
        }
        let via_martingale = (x0 + cum_m) / nf;
        assert!(
            (direct - via_martingale).abs() <= 1e-9,
            "step process forms disagree at k={k}: {direct} vs {via_martingale}"
        );
        values.push(direct);
    }
    StepFunction::new(n, values, horizon)
}

/// The scaled population step process `n^{-1} X_⌊nt⌋`.
pub fn build_xn(path: &GWPath, n: u64, horizon: f64) -> Result<StepFunction, StepError> {
    if n == 0 {
        return Err(StepError::ZeroScale);
    }
    if horizon < 0.0 {
        return Err(StepError::NegativeTime(horizon));
    }
    let needed = floor_nt(n, horizon);
    if needed > path.horizon() {
        return Err(StepError::PathTooShort {
            needed,
            horizon: path.horizon(),
        });
    }
    let nf = n as f64;
    let values = path.x[..=needed as usize]
        .iter()
        .map(|&x| x as f64 / nf)
        .collect();
    StepFunction::new(n, values, horizon)
}

/// `∫_0^t (M^(n)_s + m_eps s)^+ ds` in closed form:
/// `n^{-2} Σ_{k<⌊nt⌋} X_k + (nt-⌊nt⌋) X_⌊nt⌋ / n² + (⌊nt⌋+(nt-⌊nt⌋)²) m_eps / (2n²)`.
pub fn shifted_integral(path: &GWPath, n: u64, m_eps: f64, t: f64) -> Result<f64, StepError> {
    if n == 0 {
        return Err(StepError::ZeroScale);
    }
    if t < 0.0 {
        return Err(StepError::NegativeTime(t));
    }
    let j = floor_nt(n, t);
    if j > path.horizon() {
        return Err(StepError::PathTooShort {
            needed: j,
            horizon: path.horizon(),
        });
    }
    let n2 = (n as f64) * (n as f64);
    let frac = n as f64 * t - j as f64;
    let prefix: f64 = path.x[..j as usize].iter().map(|&x| x as f64).sum();
    Ok(prefix / n2
        + frac * path.x[j as usize] as f64 / n2
        + (j as f64 + frac * frac) * m_eps / (2.0 * n2))
}

/// Grid functional `(Ψ^(n) f)(t) = f(⌊nt⌋/n) + ⌊nt⌋ m_eps / n` applied to
/// a step function on the same grid.
pub fn psi_n_of_step(f: &StepFunction, m_eps: f64) -> StepFunction {
    let values = f
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| v + drift_term(k as u64, f.n, m_eps))
        .collect();
    StepFunction {
        n: f.n,
        values,
        horizon: f.horizon,
    }
}

/// Grid functional applied to an arbitrary callable on [0, horizon].
pub fn psi_n<F: Fn(f64) -> f64>(
    f: F,
    n: u64,
    m_eps: f64,
    horizon: f64,
) -> Result<StepFunction, StepError> {
    if n == 0 {
        return Err(StepError::ZeroScale);
    }
    if horizon < 0.0 {
        return Err(StepError::NegativeTime(horizon));
    }
    let cells = floor_nt(n, horizon);
    let values = (0..=cells)
        .map(|k| f(k as f64 / n as f64) + drift_term(k, n, m_eps))
        .collect();
    StepFunction::new(n, values, horizon)
}

/// Limit functional `(Ψ f)(t) = f(t) + m_eps t`.
pub fn psi_limit<F: Fn(f64) -> f64>(f: F, m_eps: f64) -> impl Fn(f64) -> f64 {
    move |t| f(t) + m_eps * t
}
