//! Bessel functions of the first kind for integer and half-integer orders.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::gamma;

/// Below this argument the power series is used.
pub const SERIES_LIMIT: f64 = 12.0;

fn check_order(nu: f64) -> Result<()> {
    let twice = 2.0 * nu;
    if (twice - twice.round()).abs() > 1e-12 {
        return Err(Error::Domain(format!("only integer and half-integer orders are supported, got {nu}")));
    }
    if nu < -0.5 && (nu - nu.round()).abs() > 1e-12 {
        return Err(Error::Domain(format!("negative half-integer order {nu} below -1/2")));
    }
    Ok(())
}

/// `J_ν(x)` for `x ≥ 0`.
pub fn bessel_j(nu: f64, x: f64) -> Result<f64> {
    check_order(nu)?;
    if x < 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!("Bessel argument must be finite and non-negative, got {x}")));
    }
    let integer = (nu - nu.round()).abs() < 1e-12;
    if integer && nu < 0.0 {
        let n = -nu.round();
        let sign = if n as i64 % 2 == 0 { 1.0 } else { -1.0 };
        return Ok(sign * bessel_j(n, x)?);
    }
    if x == 0.0 {
        return Ok(if nu == 0.0 {
            1.0
        } else if nu > 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    if !integer && x >= HALF_SERIES_LIMIT.max(nu) {
        return Ok(half_integer_closed(nu, x));
    }
    if x < SERIES_LIMIT {
        return Ok(x.powf(nu) * scaled_series(nu, x * x / 4.0) / 2f64.powf(nu));
    }
    Ok(if integer { hankel_asymptotic(nu, x) } else { half_integer_closed(nu, x) })
}

/// Half-integer orders switch from the series to the trigonometric forms here, or at `x = ν`
/// when that is larger (upward recurrence is stable only beyond the order).
const HALF_SERIES_LIMIT: f64 = 2.0;

/// `Σ_k (-q)^k / (k! Γ(ν+k+1))`, so that `J_ν(x) = (x/2)^ν · series(x²/4)`.
fn scaled_series(nu: f64, q: f64) -> f64 {
    let mut term = 1.0 / gamma(nu + 1.0);
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= -q / (k * (k + nu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() && k * k > q {
            break;
        }
        k += 1.0;
        if k > 500.0 {
            break;
        }
    }
    sum
}

/// Upward recurrence from `J_{-1/2} = √(2/(πx)) cos x` and `J_{1/2} = √(2/(πx)) sin x`.
fn half_integer_closed(nu: f64, x: f64) -> f64 {
    let pref = (2.0 / (PI * x)).sqrt();
    let (mut prev, mut cur) = (pref * x.cos(), pref * x.sin());
    if nu < 0.0 {
        return prev;
    }
    let mut order = 0.5;
    while order < nu - 1e-9 {
        let next = 2.0 * order / x * cur - prev;
        prev = cur;
        cur = next;
        order += 1.0;
    }
    cur
}

/// `√(2/(πx)) (P cos ω - Q sin ω)`, `ω = x - νπ/2 - π/4`, truncated at the smallest term.
fn hankel_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let (mut p, mut q) = (1.0, 0.0);
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() >= last || term == 0.0 {
            break;
        }
        last = term.abs();
        // a_k / x^k goes to Q for odd k and to P for even k, with alternating signs
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let omega = x - nu * PI / 2.0 - PI / 4.0;
    (2.0 / (PI * x)).sqrt() * (p * omega.cos() - q * omega.sin())
}

/// `(λ/a)^(ν/2) J_ν(2√(aλ))`, continuous as `a → 0` where it tends to `λ^ν / Γ(ν+1)`.
pub fn bessel_scaled(nu: f64, a: f64, lambda: f64) -> Result<f64> {
    check_order(nu)?;
    if a < 0.0 || lambda < 0.0 {
        return Err(Error::Domain("scaled Bessel needs a, λ ≥ 0".into()));
    }
    let x = 2.0 * (a * lambda).sqrt();
    let integer = (nu - nu.round()).abs() < 1e-12;
    let limit = if integer { SERIES_LIMIT } else { HALF_SERIES_LIMIT.max(nu) };
    if x < limit {
        // (λ/a)^(ν/2) (aλ)^(ν/2) Σ … = λ^ν Σ (-aλ)^k / (k! Γ(ν+k+1))
        return Ok(lambda.powf(nu) * scaled_series(nu, a * lambda));
    }
    Ok((lambda / a).powf(nu / 2.0) * bessel_j(nu, x)?)
}
