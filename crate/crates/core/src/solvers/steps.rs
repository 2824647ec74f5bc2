//! The per-factor fixed-point updates. Every algorithm comes in two
//! routes: a dedicated single-observation path and the general path that
//! accumulates coupling-weighted sums over all connected observations.
//! With one observation the two are bit-identical; the public `em_step` /
//! `vb_step` dispatch on the observation count.

use crate::contraction::{check_factors_conform, FactorView, ObsPlan};
use crate::factor::Factor;
use crate::model::ModelSpec;
use crate::solvers::validate_observations;
use crate::special::digamma_raw;
use crate::tensor::SparseTensor;
use crate::{Error, Result};

pub(crate) struct StepContext<'a> {
    pub spec: &'a ModelSpec,
    pub plans: &'a [ObsPlan],
    pub observations: &'a [SparseTensor],
    pub eps: f64,
}

impl<'a> StepContext<'a> {
    fn build_plans(spec: &ModelSpec) -> Result<Vec<ObsPlan>> {
        (0..spec.n_observations())
            .map(|nu| ObsPlan::build(spec, nu))
            .collect()
    }
}

/// Numerator field values for one observation: X / max(Xhat, eps) at every
/// supported coordinate, with Xhat computed under `view`.
fn ratio_field(
    plan: &ObsPlan,
    factors: &[Factor],
    view: FactorView,
    x: &SparseTensor,
    eps: f64,
) -> Result<Vec<f64>> {
    let xhat = plan.reconstruct_values(factors, view, x)?;
    Ok(x.values()
        .iter()
        .zip(&xhat)
        .map(|(&xv, &xh)| xv / xh.max(eps))
        .collect())
}

/// Coupling-weighted sums of Delta_alpha over every observation connected
/// to `alpha`: numerator uses the X/Xhat ratio field under `num_view`,
/// denominator uses the mask (all-ones field) under `den_view`.
fn accumulate_deltas(
    ctx: &StepContext,
    factors: &[Factor],
    alpha: usize,
    num_view: FactorView,
    den_view: FactorView,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cells = factors[alpha].len();
    let mut num = vec![0.0; cells];
    let mut den = vec![0.0; cells];
    for (nu, x) in ctx.observations.iter().enumerate() {
        if !ctx.spec.coupling(nu, alpha) {
            continue;
        }
        let plan = &ctx.plans[nu];
        let ratio = ratio_field(plan, factors, num_view, x, ctx.eps)?;
        let dn = plan.delta_values(factors, num_view, alpha, x, &ratio)?;
        for (acc, v) in num.iter_mut().zip(&dn) {
            *acc += v;
        }
        let ones = vec![1.0; x.nnz()];
        let dd = plan.delta_values(factors, den_view, alpha, x, &ones)?;
        for (acc, v) in den.iter_mut().zip(&dd) {
            *acc += v;
        }
    }
    Ok((num, den))
}

fn write_values(factor: &mut Factor, new_values: Vec<f64>) -> Result<()> {
    if new_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteUpdate(factor.name().to_string()));
    }
    factor.values_mut().copy_from_slice(&new_values);
    Ok(())
}

/// Multiplicative KL update from already-accumulated numerator and
/// denominator fields; denominator cells at or below `eps` freeze the cell.
fn apply_multiplicative(
    factors: &mut [Factor],
    alpha: usize,
    num: &[f64],
    den: &[f64],
    eps: f64,
) -> Result<()> {
    let old = factors[alpha].values();
    let new_values: Vec<f64> = old
        .iter()
        .zip(num.iter().zip(den))
        .map(|(&z, (&n, &d))| if d <= eps { z } else { z * n / d })
        .collect();
    write_values(&mut factors[alpha], new_values)
}

pub(crate) fn em_update(ctx: &StepContext, factors: &mut [Factor], alpha: usize) -> Result<()> {
    if ctx.observations.len() == 1 {
        em_update_single(ctx, factors, alpha)
    } else {
        em_update_coupled(ctx, factors, alpha)
    }
}

pub(crate) fn em_update_single(
    ctx: &StepContext,
    factors: &mut [Factor],
    alpha: usize,
) -> Result<()> {
    let plan = &ctx.plans[0];
    let x = &ctx.observations[0];
    let view = FactorView::Values;
    let ratio = ratio_field(plan, factors, view, x, ctx.eps)?;
    let num = plan.delta_values(factors, view, alpha, x, &ratio)?;
    let ones = vec![1.0; x.nnz()];
    let den = plan.delta_values(factors, view, alpha, x, &ones)?;
    apply_multiplicative(factors, alpha, &num, &den, ctx.eps)
}

pub(crate) fn em_update_coupled(
    ctx: &StepContext,
    factors: &mut [Factor],
    alpha: usize,
) -> Result<()> {
    let (num, den) =
        accumulate_deltas(ctx, factors, alpha, FactorView::Values, FactorView::Values)?;
    apply_multiplicative(factors, alpha, &num, &den, ctx.eps)
}

pub(crate) fn map_em_update(
    ctx: &StepContext,
    factors: &mut [Factor],
    alpha: usize,
    warn_shape_below_one: bool,
) -> Result<()> {
    let (num, den) =
        accumulate_deltas(ctx, factors, alpha, FactorView::Values, FactorView::Values)?;
    let prior = &ctx.spec.factors()[alpha].prior;
    let old = factors[alpha].values();
    let mut saw_sub_one = false;
    let new_values: Vec<f64> = old
        .iter()
        .enumerate()
        .map(|(cell, &z)| {
            let a = prior.shape_at(cell);
            if a < 1.0 {
                saw_sub_one = true;
            }
            let denom = prior.rate_at(cell) + den[cell];
            if denom <= ctx.eps {
                z
            } else {
                let v = ((a - 1.0) + z * num[cell]) / denom;
                // clamp without masking NaN from write_values' finite check
                if v < 0.0 {
                    0.0
                } else {
                    v
                }
            }
        })
        .collect();
    if saw_sub_one && warn_shape_below_one {
        log::warn!(
            "factor '{}' has prior shape A < 1; MAP-EM update clamped at 0",
            factors[alpha].name()
        );
    }
    write_values(&mut factors[alpha], new_values)
}

pub(crate) fn vb_update(ctx: &StepContext, factors: &mut [Factor], alpha: usize) -> Result<()> {
    if ctx.observations.len() == 1 {
        vb_update_single(ctx, factors, alpha)
    } else {
        vb_update_coupled(ctx, factors, alpha)
    }
}

pub(crate) fn vb_update_single(
    ctx: &StepContext,
    factors: &mut [Factor],
    alpha: usize,
) -> Result<()> {
    let plan = &ctx.plans[0];
    let x = &ctx.observations[0];
    let ratio = ratio_field(plan, factors, FactorView::L, x, ctx.eps)?;
    let num = plan.delta_values(factors, FactorView::L, alpha, x, &ratio)?;
    let ones = vec![1.0; x.nnz()];
    let den = plan.delta_values(factors, FactorView::E, alpha, x, &ones)?;
    apply_vb(ctx, factors, alpha, &num, &den)
}

pub(crate) fn vb_update_coupled(
    ctx: &StepContext,
    factors: &mut [Factor],
    alpha: usize,
) -> Result<()> {
    let (num, den) = accumulate_deltas(ctx, factors, alpha, FactorView::L, FactorView::E)?;
    apply_vb(ctx, factors, alpha, &num, &den)
}

/// Gamma posterior refresh: shape C = A + L .* num, scale
/// D = 1 / (A/B + den), then E = C .* D and L = exp(psi(C)) .* D. The
/// plain values are kept equal to E so that value-view consumers see the
/// posterior mean.
fn apply_vb(
    ctx: &StepContext,
    factors: &mut [Factor],
    alpha: usize,
    num: &[f64],
    den: &[f64],
) -> Result<()> {
    let prior = &ctx.spec.factors()[alpha].prior;
    let name = factors[alpha].name().to_string();
    let cells = factors[alpha].len();
    {
        let vb = factors[alpha]
            .vb()
            .ok_or_else(|| Error::MissingVbFields(name.clone()))?;
        debug_assert_eq!(vb.l.len(), cells);
    }
    let mut c_new = Vec::with_capacity(cells);
    let mut d_new = Vec::with_capacity(cells);
    let mut e_new = Vec::with_capacity(cells);
    let mut l_new = Vec::with_capacity(cells);
    {
        let vb = factors[alpha].vb().expect("checked above");
        for cell in 0..cells {
            let shape = prior.shape_at(cell) + vb.l[cell] * num[cell];
            let scale = 1.0 / (prior.rate_at(cell) + den[cell]);
            let e = shape * scale;
            let l = digamma_raw(shape).exp() * scale;
            if !shape.is_finite() || !scale.is_finite() || !e.is_finite() || !l.is_finite() {
                return Err(Error::NonFiniteUpdate(name.clone()));
            }
            c_new.push(shape);
            d_new.push(scale);
            e_new.push(e);
            l_new.push(l);
        }
    }
    let factor = &mut factors[alpha];
    factor.values_mut().copy_from_slice(&e_new);
    let vb = factor.vb_mut().expect("checked above");
    vb.c = c_new;
    vb.d = d_new;
    vb.e = e_new;
    vb.l = l_new;
    Ok(())
}

fn context_checked<'a>(
    spec: &'a ModelSpec,
    factors: &[Factor],
    observations: &'a [SparseTensor],
    plans: &'a [ObsPlan],
    eps: f64,
) -> Result<StepContext<'a>> {
    check_factors_conform(spec, factors)?;
    validate_observations(spec, observations)?;
    Ok(StepContext {
        spec,
        plans,
        observations,
        eps,
    })
}

macro_rules! public_step {
    ($(#[$doc:meta])* $name:ident, $update:ident, single_only: $single:expr) => {
        $(#[$doc])*
        pub fn $name(
            spec: &ModelSpec,
            factors: &mut [Factor],
            observations: &[SparseTensor],
            alpha: usize,
            epsilon_guard: f64,
        ) -> Result<()> {
            if $single && observations.len() != 1 {
                return Err(Error::InvalidSpec(format!(
                    "{} requires exactly one observation, got {}",
                    stringify!($name),
                    observations.len()
                )));
            }
            if alpha >= spec.n_factors() {
                return Err(Error::InvalidSpec(format!("no factor #{alpha}")));
            }
            let plans = StepContext::build_plans(spec)?;
            let ctx = context_checked(spec, factors, observations, &plans, epsilon_guard)?;
            $update(&ctx, factors, alpha)
        }
    };
}

public_step!(
    /// Multiplicative KL update of factor `alpha`; dispatches to the
    /// single-observation route when the model has one observation.
    em_step,
    em_update,
    single_only: false
);
public_step!(
    /// Single-observation multiplicative KL update (errors unless the
    /// model has exactly one observation).
    em_step_single,
    em_update_single,
    single_only: true
);
public_step!(
    /// General coupled multiplicative KL update, usable for any number of
    /// observations (including one, where it matches `em_step_single`
    /// bit for bit).
    em_step_coupled,
    em_update_coupled,
    single_only: false
);
public_step!(
    /// Variational Gamma-posterior refresh of factor `alpha`; dispatches
    /// to the single-observation route when the model has one observation.
    vb_step,
    vb_update,
    single_only: false
);
public_step!(
    /// Single-observation variational refresh.
    vb_step_single,
    vb_update_single,
    single_only: true
);
public_step!(
    /// General coupled variational refresh.
    vb_step_coupled,
    vb_update_coupled,
    single_only: false
);

/// MAP-EM update of factor `alpha`: the Gamma prior enters as (A-1) in the
/// numerator and A/B in the denominator. With A = 1 and B large enough
/// that A/B underflows against the data term, this reduces to `em_step`
/// exactly. A < 1 voids the nonnegativity guarantee; values clamp at 0.
pub fn map_em_step(
    spec: &ModelSpec,
    factors: &mut [Factor],
    observations: &[SparseTensor],
    alpha: usize,
    epsilon_guard: f64,
) -> Result<()> {
    if alpha >= spec.n_factors() {
        return Err(Error::InvalidSpec(format!("no factor #{alpha}")));
    }
    let plans = StepContext::build_plans(spec)?;
    let ctx = context_checked(spec, factors, observations, &plans, epsilon_guard)?;
    map_em_update(&ctx, factors, alpha, true)
}
