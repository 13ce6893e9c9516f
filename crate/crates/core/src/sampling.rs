//! Low-level samplers over [`RandomStream`].
//!
//! All samplers draw uniforms from the caller's stream and do their
//! arithmetic through [`crate::pmath`], so a fixed stream reproduces the
//! same variates bit-for-bit on every platform. Poisson uses chop-down
//! inversion below λ = 10 and Hörmann's PTRS transformed rejection above,
//! gamma uses Marsaglia-Tsang, normals use the polar method.

use crate::pmath;
use crate::rng::RandomStream;
use crate::special::ln_gamma;

/// Inversion / rejection crossover for the Poisson sampler.
pub const POISSON_INVERSION_CUTOFF: f64 = 10.0;

/// One Poisson(λ) draw, λ >= 0.
pub fn sample_poisson(lambda: f64, stream: &mut RandomStream) -> u64 {
    assert!(lambda >= 0.0 && lambda.is_finite(), "bad lambda {lambda}");
    if lambda == 0.0 {
        return 0;
    }
    if lambda <= POISSON_INVERSION_CUTOFF {
        poisson_inversion(lambda, stream)
    } else {
        poisson_ptrs(lambda, stream)
    }
}

/// Chop-down inversion from k = 0; exactly one uniform per draw.
fn poisson_inversion(lambda: f64, stream: &mut RandomStream) -> u64 {
    let u = stream.next_f64();
    let mut pk = pmath::exp(-lambda);
    let mut cum = pk;
    let mut k = 0u64;
    // The cap is unreachable in exact arithmetic (tail mass < 1e-100);
    // it only guards against a stalled cumulative sum in the last ulp.
    let cap = (lambda + 40.0 * lambda.sqrt() + 60.0) as u64;
    while u > cum && k < cap {
        k += 1;
        pk *= lambda / k as f64;
        cum += pk;
    }
    k
}

/// Hörmann's PTRS transformed rejection, valid for λ >= 10.
fn poisson_ptrs(lambda: f64, stream: &mut RandomStream) -> u64 {
    let log_lambda = pmath::ln(lambda);
    let b = 0.931 + 2.53 * lambda.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = stream.next_f64() - 0.5;
        let v = stream.next_f64_open();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if pmath::ln(v * inv_alpha / (a / (us * us) + b))
            <= k * log_lambda - lambda - ln_gamma(k + 1.0)
        {
            return k as u64;
        }
    }
}

/// Standard normal via the Marsaglia polar method.
pub fn sample_std_normal(stream: &mut RandomStream) -> f64 {
    loop {
        let u = 2.0 * stream.next_f64() - 1.0;
        let v = 2.0 * stream.next_f64() - 1.0;
        let r2 = u * u + v * v;
        if r2 > 0.0 && r2 < 1.0 {
            return u * (-2.0 * pmath::ln(r2) / r2).sqrt();
        }
    }
}

/// Gamma(shape, scale) via Marsaglia-Tsang, with the shape < 1 boost.
pub fn sample_gamma(shape: f64, scale: f64, stream: &mut RandomStream) -> f64 {
    assert!(
        shape > 0.0 && scale > 0.0,
        "bad gamma parameters ({shape}, {scale})"
    );
    if shape < 1.0 {
        let g = sample_gamma(shape + 1.0, 1.0, stream);
        let u = stream.next_f64_open();
        return g * pmath::exp(pmath::ln(u) / shape) * scale;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (3.0 * d.sqrt());
    loop {
        let x = sample_std_normal(stream);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = stream.next_f64_open();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v * scale;
        }
        if pmath::ln(u) < 0.5 * x2 + d - d * v + d * pmath::ln(v) {
            return d * v * scale;
        }
    }
}

/// Binomial(n, p) draw; Bernoulli counting for small n, two-sided
/// chop-down inversion from the mode otherwise.
pub fn sample_binomial(n: u64, p: f64, stream: &mut RandomStream) -> u64 {
    assert!((0.0..=1.0).contains(&p), "bad p {p}");
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    if p > 0.5 {
        return n - sample_binomial(n, 1.0 - p, stream);
    }
    if n <= 64 {
        let mut count = 0;
        for _ in 0..n {
            if stream.next_f64() < p {
                count += 1;
            }
        }
        return count;
    }
    binomial_from_mode(n, p, stream)
}

fn binomial_from_mode(n: u64, p: f64, stream: &mut RandomStream) -> u64 {
    let nf = n as f64;
    let q = 1.0 - p;
    let mode = (((nf + 1.0) * p).floor() as u64).min(n);
    let mf = mode as f64;
    let ln_pm = ln_gamma(nf + 1.0) - ln_gamma(mf + 1.0) - ln_gamma(nf - mf + 1.0)
        + mf * pmath::ln(p)
        + (nf - mf) * pmath::ln_1p(-p);
    let pm = pmath::exp(ln_pm);
    let ratio = p / q;

    let u = stream.next_f64();
    let mut cum = pm;
    if u <= cum {
        return mode;
    }
    // Enumerate outcomes mode, mode+1, mode-1, mode+2, ... in a fixed
    // alternating order; any fixed enumeration of the pmf is a valid
    // inversion.
    let mut right_k = mode;
    let mut right_p = pm;
    let mut right_alive = true;
    let mut left_k = mode;
    let mut left_p = pm;
    let mut left_alive = mode > 0;
    loop {
        if right_alive {
            if right_k < n {
                let kf = right_k as f64;
                right_p *= (nf - kf) / (kf + 1.0) * ratio;
                right_k += 1;
                cum += right_p;
                if u <= cum {
                    return right_k;
                }
            } else {
                right_alive = false;
            }
        }
        if left_alive {
            let kf = left_k as f64;
            left_p *= kf / (nf - kf + 1.0) / ratio;
            left_k -= 1;
            cum += left_p;
            if u <= cum {
                return left_k;
            }
            if left_k == 0 {
                left_alive = false;
            }
        }
        if !right_alive && !left_alive {
            // Cumulative sum saturated below u in the last ulp.
            return mode;
        }
    }
}

/// Geometric(p) on {0, 1, ...} (failures before the first success),
/// P(k) = (1-p)^k p, by inversion. Requires p in (0, 1].
pub fn sample_geometric(p: f64, stream: &mut RandomStream) -> u64 {
    assert!(p > 0.0 && p <= 1.0, "bad p {p}");
    if p == 1.0 {
        return 0;
    }
    let u = stream.next_f64_open();
    (pmath::ln(u) / pmath::ln_1p(-p)).floor() as u64
}

/// Negative binomial: sum of `count` iid Geometric(p) draws, sampled as a
/// Gamma-mixed Poisson.
pub fn sample_neg_binomial(count: u64, p: f64, stream: &mut RandomStream) -> u64 {
    assert!(p > 0.0 && p <= 1.0, "bad p {p}");
    if count == 0 || p == 1.0 {
        return 0;
    }
    let lambda = sample_gamma(count as f64, (1.0 - p) / p, stream);
    sample_poisson(lambda, stream)
}
