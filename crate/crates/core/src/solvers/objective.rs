//! Convergence objectives: the masked generalized KL divergence (the cost
//! the multiplicative updates descend) and the evidence lower bound
//! maximized by the variational sweeps.

use crate::contraction::{check_factors_conform, FactorView, ObsPlan};
use crate::factor::Factor;
use crate::model::ModelSpec;
use crate::solvers::validate_observations;
use crate::special::{gamma_kl_shape_scale, ln_gamma_raw};
use crate::tensor::SparseTensor;
use crate::{Error, Result};

pub(crate) fn kl_objective_with_plans(
    plans: &[ObsPlan],
    factors: &[Factor],
    observations: &[SparseTensor],
    view: FactorView,
    eps: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for (plan, x) in plans.iter().zip(observations) {
        let xhat = plan.reconstruct_values(factors, view, x)?;
        for (&xv, &xh) in x.values().iter().zip(&xhat) {
            let xh = xh.max(eps);
            // convention 0 * ln(0/y) = 0
            total += if xv > 0.0 {
                xv * (xv / xh).ln() - xv + xh
            } else {
                xh
            };
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteResult("KL objective".into()));
    }
    Ok(total)
}

/// Masked generalized KL divergence summed over all observations:
/// sum over supported cells of X ln(X/Xhat) - X + Xhat, with Xhat floored
/// at `eps` inside the ratio. Zero exactly when Xhat = X on every support.
/// Use `FactorView::Values` for EM runs and `FactorView::E` as a VB
/// diagnostic.
pub fn kl_objective(
    spec: &ModelSpec,
    factors: &[Factor],
    observations: &[SparseTensor],
    view: FactorView,
    eps: f64,
) -> Result<f64> {
    check_factors_conform(spec, factors)?;
    validate_observations(spec, observations)?;
    let plans = (0..spec.n_observations())
        .map(|nu| ObsPlan::build(spec, nu))
        .collect::<Result<Vec<_>>>()?;
    kl_objective_with_plans(&plans, factors, observations, view, eps)
}

pub(crate) fn elbo_with_plans(
    spec: &ModelSpec,
    plans: &[ObsPlan],
    factors: &[Factor],
    observations: &[SparseTensor],
    eps: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for (plan, x) in plans.iter().zip(observations) {
        let xhat_e = plan.reconstruct_values(factors, FactorView::E, x)?;
        let xhat_l = plan.reconstruct_values(factors, FactorView::L, x)?;
        for ((&xv, &xe), &xl) in x.values().iter().zip(&xhat_e).zip(&xhat_l) {
            let data = if xv > 0.0 {
                xv * xl.max(eps).ln()
            } else {
                0.0
            };
            total += -xe + data - ln_gamma_raw(xv + 1.0);
        }
    }
    for (f, decl) in factors.iter().zip(spec.factors()) {
        let vb = f
            .vb()
            .ok_or_else(|| Error::MissingVbFields(f.name().to_string()))?;
        for cell in 0..f.len() {
            let a = decl.prior.shape_at(cell);
            let prior_scale = decl.prior.mean_at(cell) / a;
            total -= gamma_kl_shape_scale(vb.c[cell], vb.d[cell], a, prior_scale);
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteResult("ELBO".into()));
    }
    Ok(total)
}

/// Evidence lower bound for the current variational state: the Poisson
/// data term assembled from the E and L reconstructions plus the negative
/// KL of each cell's Gamma posterior against its prior. Non-decreasing
/// across full VB sweeps.
pub fn elbo(
    spec: &ModelSpec,
    factors: &[Factor],
    observations: &[SparseTensor],
    eps: f64,
) -> Result<f64> {
    check_factors_conform(spec, factors)?;
    validate_observations(spec, observations)?;
    let plans = (0..spec.n_observations())
        .map(|nu| ObsPlan::build(spec, nu))
        .collect::<Result<Vec<_>>>()?;
    elbo_with_plans(spec, &plans, factors, observations, eps)
}
