//! Digamma and log-gamma, via upward recurrence into the asymptotic regime
//! followed by the Bernoulli-number series, plus the Gamma-vs-Gamma KL
//! divergence used by the evidence bound.

use crate::{Error, Result};

/// Recurrence threshold: below this the argument is shifted up with
/// psi(x) = psi(x+1) - 1/x before the series is applied. Terms through
/// x^-14 keep the series truncation error under 1e-16 at the threshold.
const SHIFT: f64 = 10.0;

/// Digamma psi(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::DomainError(format!(
            "digamma requires x > 0, got {x}"
        )));
    }
    Ok(digamma_raw(x))
}

/// Unchecked digamma; callers guarantee x > 0. Nonpositive or NaN input
/// yields a non-finite result rather than a panic.
pub(crate) fn digamma_raw(x: f64) -> f64 {
    // shift into [SHIFT, inf), compensated so the huge 1/x terms near zero
    // lose as little as possible
    let mut y = x;
    let mut shift_sum = 0.0f64;
    let mut comp = 0.0f64;
    while y < SHIFT {
        let term = -1.0 / y;
        let t = shift_sum + term;
        comp += if shift_sum.abs() >= term.abs() {
            (shift_sum - t) + term
        } else {
            (term - t) + shift_sum
        };
        shift_sum = t;
        y += 1.0;
    }
    let inv = 1.0 / y;
    let t = inv * inv;
    // psi(y) = ln y - 1/(2y) - sum_n B_{2n} / (2n y^{2n})
    let series = t * (1.0 / 12.0
        - t * (1.0 / 120.0
            - t * (1.0 / 252.0
                - t * (1.0 / 240.0
                    - t * (1.0 / 132.0 - t * (691.0 / 32760.0 - t * (1.0 / 12.0)))))));
    y.ln() - 0.5 * inv - series + shift_sum + comp
}

/// Natural log of the Gamma function for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::DomainError(format!(
            "ln_gamma requires x > 0, got {x}"
        )));
    }
    Ok(ln_gamma_raw(x))
}

pub(crate) fn ln_gamma_raw(x: f64) -> f64 {
    // ln G(x) = ln G(x+n) - sum ln(x+k)
    let mut y = x;
    let mut shift = 0.0f64;
    while y < SHIFT {
        shift -= y.ln();
        y += 1.0;
    }
    const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;
    let inv = 1.0 / y;
    let t = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - t * (1.0 / 360.0
                - t * (1.0 / 1260.0
                    - t * (1.0 / 1680.0 - t * (1.0 / 1188.0 - t * (691.0 / 360_360.0))))));
    (y - 0.5) * y.ln() - y + HALF_LN_TWO_PI + series + shift
}

/// KL( Gamma(shape c, scale d) || Gamma(shape a, scale b) ).
pub(crate) fn gamma_kl_shape_scale(c: f64, d: f64, a: f64, b: f64) -> f64 {
    (c - a) * digamma_raw(c) - ln_gamma_raw(c) + ln_gamma_raw(a)
        + a * (b / d).ln()
        + c * (d / b - 1.0)
}
