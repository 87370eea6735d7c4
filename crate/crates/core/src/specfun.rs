//! Bessel functions of the first kind and the ₁F₂ gain function.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SPEED_OF_LIGHT;

/// Above this |x| the power series loses too many digits to cancellation.
const SERIES_LIMIT: f64 = 12.0;
/// Above this ε the ₁F₂ power series is abandoned for the Neumann sum.
const HYP_SERIES_LIMIT: f64 = 8.0;
const HYP_TERM_CAP: usize = 500;
const HYP_REL_TOL: f64 = 1e-12;
const RESCALE: f64 = 1e250;

/// Outcome of a series evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypergeomResult {
    pub value: f64,
    pub terms_used: usize,
    pub converged: bool,
}

/// Jₙ(x) for integer order n ≥ 0.
pub fn bessel_j(order: u32, x: f64) -> f64 {
    let sign = if x < 0.0 && order % 2 == 1 { -1.0 } else { 1.0 };
    let ax = x.abs();
    if ax == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    let v = if ax <= SERIES_LIMIT {
        series_j(order, ax)
    } else {
        miller_sequence(order as usize, ax)[order as usize]
    };
    sign * v
}

/// J₀(x) … J_{n_max}(x).
pub fn bessel_j_sequence(n_max: usize, x: f64) -> Vec<f64> {
    let ax = x.abs();
    let mut out = if ax == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        v
    } else if ax <= SERIES_LIMIT {
        (0..=n_max).map(|n| series_j(n as u32, ax)).collect()
    } else {
        miller_sequence(n_max, ax)
    };
    if x < 0.0 {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

fn series_j(order: u32, x: f64) -> f64 {
    let half = x / 2.0;
    let mut lead = 1.0;
    for i in 1..=order {
        lead *= half / i as f64;
    }
    if lead == 0.0 {
        return 0.0;
    }
    let q = half * half;
    let mut term = lead;
    let mut sum = lead;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= -q / (k as f64 * (k + order) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || k > 300 {
            break;
        }
    }
    sum
}

/// Downward recurrence from well above max(n, x), normalised with
/// J₀ + 2ΣJ₂ₖ = 1.
fn miller_sequence(n_max: usize, x: f64) -> Vec<f64> {
    let top = n_max.max(x as usize) as f64;
    let mut start = (top + 30.0 + (60.0 * top).sqrt()) as usize;
    start += start % 2;
    let mut vals = vec![0.0; start + 2];
    let mut next = 0.0;
    let mut cur = 1e-300;
    let mut norm = 0.0;
    vals[start] = cur;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        vals[k - 1] = cur;
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > RESCALE {
            for v in vals[k - 1..].iter_mut() {
                *v /= RESCALE;
            }
            norm /= RESCALE;
            cur /= RESCALE;
            next /= RESCALE;
        }
    }
    norm += vals[0];
    vals.truncate(n_max + 1);
    for v in vals.iter_mut() {
        *v /= norm;
    }
    vals
}

/// ₁F₂(1/2; 1, 3/2; −ε²/4), which equals (1/ε)∫₀^ε J₀.
pub fn hyp1f2_gain(eps: f64) -> HypergeomResult {
    let eps = eps.abs();
    if eps == 0.0 {
        return HypergeomResult { value: 1.0, terms_used: 0, converged: true };
    }
    if eps <= HYP_SERIES_LIMIT {
        hyp_series(eps)
    } else {
        hyp_neumann(eps)
    }
}

fn hyp_series(eps: f64) -> HypergeomResult {
    let z = -eps * eps / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..HYP_TERM_CAP {
        let kf = k as f64;
        term *= (0.5 + kf) / ((1.0 + kf) * (1.5 + kf)) * z / (kf + 1.0);
        sum += term;
        if term.abs() < HYP_REL_TOL * sum.abs() {
            return HypergeomResult { value: sum, terms_used: k + 2, converged: true };
        }
    }
    HypergeomResult { value: sum, terms_used: HYP_TERM_CAP + 1, converged: false }
}

// ∫₀^x J₀ = 2 Σ_{k≥0} J_{2k+1}(x)
fn hyp_neumann(eps: f64) -> HypergeomResult {
    let n_max = (eps + 40.0 + 4.0 * eps.sqrt()) as usize;
    let js = bessel_j_sequence(n_max, eps);
    let mut sum = 0.0;
    let mut used = 0;
    let mut last = 0.0;
    for n in (1..=n_max).step_by(2) {
        last = js[n];
        sum += last;
        used += 1;
        if n as f64 > eps && last.abs() < 1e-17 {
            break;
        }
    }
    let value = 2.0 * sum / eps;
    HypergeomResult { value, terms_used: used, converged: last.abs() < HYP_REL_TOL * value.abs().max(1e-3) }
}

/// First ε > 0 where the gain function stops decreasing, with its value there.
///
/// d/dε[(1/ε)∫₀^ε J₀] = (J₀(ε) − f(ε))/ε, so this is the first crossing of J₀
/// and f.
pub fn first_stationary_point() -> (f64, f64) {
    let g = |e: f64| bessel_j(0, e) - hyp1f2_gain(e).value;
    let (mut lo, mut hi) = (3.0, 7.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let eps = 0.5 * (lo + hi);
    (eps, hyp1f2_gain(eps).value)
}

/// Smallest ε with ₁F₂(ε) = 1 − Δ.
pub fn invert_gain_threshold(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let target = 1.0 - delta;
    let (eps_min, f_min) = first_stationary_point();
    if target < f_min {
        return Err(Error::OutOfRange(format!(
            "1 - delta = {target} is below the first minimum {f_min:.6} of the gain function; \
             delta must be at most {:.6}",
            1.0 - f_min
        )));
    }
    let f = |e: f64| hyp1f2_gain(e).value - target;
    let (mut lo, mut hi) = (0.0, eps_min);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() <= 1e-12 || hi - lo < 1e-15 {
            break;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Smallest Q with Q ≥ π²B·R(1 − R/4r)/(c·f⁻¹(1−Δ)).
pub fn min_ttd_count(delta: f64, bandwidth_hz: f64, radius_m: f64, r_user_m: f64) -> Result<usize> {
    if !(bandwidth_hz.is_finite() && bandwidth_hz >= 0.0) {
        return Err(Error::field("bandwidth_hz", format!("must be finite and >= 0, got {bandwidth_hz}")));
    }
    if !(radius_m.is_finite() && radius_m >= 0.0) {
        return Err(Error::field("radius_m", format!("must be finite and >= 0, got {radius_m}")));
    }
    if !(r_user_m.is_finite() && r_user_m > radius_m / 4.0) {
        return Err(Error::field("r_user_m", format!("must exceed radius_m/4 = {}, got {r_user_m}", radius_m / 4.0)));
    }
    let eps = invert_gain_threshold(delta)?;
    if bandwidth_hz == 0.0 {
        return Ok(1);
    }
    let bound = PI * PI * bandwidth_hz * radius_m * (1.0 - radius_m / (4.0 * r_user_m)) / (SPEED_OF_LIGHT * eps);
    Ok((bound.ceil() as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_j(0, 0.0), 1.0);
        assert_eq!(bessel_j(1, 0.0), 0.0);
        assert_eq!(hyp1f2_gain(0.0).value, 1.0);
    }

    #[test]
    fn negative_argument_parity() {
        for n in 0..6 {
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(bessel_j(n, -3.7), s * bessel_j(n, 3.7));
            assert_eq!(bessel_j(n, -31.0), s * bessel_j(n, 31.0));
        }
    }

    #[test]
    fn series_and_recurrence_agree_at_switch() {
        for n in [0, 1, 5, 12] {
            let a = series_j(n, 12.0);
            let b = miller_sequence(n as usize, 12.0)[n as usize];
            assert!((a - b).abs() < 1e-12, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn sequence_matches_single_order() {
        let seq = bessel_j_sequence(30, 17.3);
        for (n, v) in seq.iter().enumerate() {
            assert!((v - bessel_j(n as u32, 17.3)).abs() < 1e-15);
        }
    }

    #[test]
    fn hyp_branches_agree_at_switch() {
        let a = hyp_series(HYP_SERIES_LIMIT);
        let b = hyp_neumann(HYP_SERIES_LIMIT);
        assert!(a.converged && b.converged);
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn delta_outside_unit_interval_rejected() {
        assert!(matches!(invert_gain_threshold(0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(invert_gain_threshold(1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(invert_gain_threshold(0.95), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn zero_bandwidth_needs_one_ttd() {
        assert_eq!(min_ttd_count(0.1, 0.0, 0.2, 5.0).unwrap(), 1);
    }
}
