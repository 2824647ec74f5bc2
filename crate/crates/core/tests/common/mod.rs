//! Shared test support: random model instances and dense-oracle reference
//! sweeps. The oracles are built exclusively on the brute-force dense
//! kernels (`to_dense`, `dense_reconstruct`, `dense_delta`) so they stay
//! independent of the sparse iteration machinery they are used to check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gctf_core::contraction::{dense_delta, dense_reconstruct, reconstruct_observed, FactorView};
use gctf_core::model::ModelSpec;
use gctf_core::special::digamma;
use gctf_core::synth::{coupled_cp_model, cp_model, planted_factors};
use gctf_core::tensor::{DenseTensor, SparseTensor};
use gctf_core::Factor;

pub const EPS: f64 = 1e-12;

pub struct Instance {
    pub spec: ModelSpec,
    pub observations: Vec<SparseTensor>,
}

/// All-cells support tensor for one observation, values 1.
pub fn full_support(spec: &ModelSpec, nu: usize) -> SparseTensor {
    let shape = spec.observation_shape(nu);
    DenseTensor::from_values(
        spec.observations()[nu].indices.clone(),
        shape.clone(),
        vec![1.0; shape.iter().product()],
    )
    .unwrap()
    .to_sparse(false)
    .unwrap()
}

/// Jittered planted data for one observation, keeping an exact fraction of
/// cells (at least one).
pub fn observed_tensor(
    spec: &ModelSpec,
    truth: &[Factor],
    nu: usize,
    keep_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> SparseTensor {
    let support = full_support(spec, nu);
    let exact = reconstruct_observed(spec, truth, FactorView::Values, nu, &support).unwrap();
    let nnz = exact.nnz();
    let keep = ((keep_fraction * nnz as f64).round() as usize).clamp(1, nnz);
    let mut ids: Vec<usize> = (0..nnz).collect();
    // Fisher-Yates so the kept set is an exact-size uniform sample
    for i in (1..nnz).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    ids.truncate(keep);
    ids.sort_unstable();
    let ndim = exact.ndim();
    let mut coords = Vec::with_capacity(keep * ndim);
    let mut values = Vec::with_capacity(keep);
    for &e in &ids {
        coords.extend_from_slice(exact.coord(e));
        let jitter = rng.random_range(0.5..1.5);
        values.push(exact.values()[e] * jitter);
    }
    SparseTensor::from_flat(
        exact.indices().to_vec(),
        exact.shape().to_vec(),
        coords,
        values,
    )
    .unwrap()
}

/// Random small instance: CP dims within 6x5x4, rank within 3, 20-80% of
/// cells observed, optionally coupled with one shared-factor side matrix.
pub fn random_instance(seed: u64, coupled: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = vec![
        rng.random_range(2..=6usize),
        rng.random_range(2..=5usize),
        rng.random_range(2..=4usize),
    ];
    let rank = rng.random_range(1..=3usize);
    let spec = if coupled {
        let side = rng.random_range(2..=4usize);
        coupled_cp_model(&dims, side, rank, 0.5, 10.0).unwrap()
    } else {
        cp_model(&dims, rank, 0.5, 10.0).unwrap()
    };
    let truth = planted_factors(&spec, seed ^ 0x5bd1_e995).unwrap();
    let keep = rng.random_range(0.2..0.8);
    let observations = (0..spec.n_observations())
        .map(|nu| {
            // side observations stay fully observed, as in the protocol
            let fraction = if nu == 0 { keep } else { 1.0 };
            observed_tensor(&spec, &truth, nu, fraction, &mut rng)
        })
        .collect();
    Instance { spec, observations }
}

fn dense_mask(x: &SparseTensor) -> DenseTensor {
    let mut m = DenseTensor::zeros(x.indices().to_vec(), x.shape().to_vec());
    for (coord, _) in x.iter() {
        m.set(coord, 1.0);
    }
    m
}

/// Masked ratio field M .* X ./ max(Xhat, eps), densely.
fn dense_ratio(x: &SparseTensor, xhat: &DenseTensor, eps: f64) -> DenseTensor {
    let mut q = DenseTensor::zeros(x.indices().to_vec(), x.shape().to_vec());
    for (coord, value) in x.iter() {
        q.set(coord, value / xhat.get(coord).max(eps));
    }
    q
}

/// One reference EM sweep: literal masked-ratio / mask delta quotient per
/// factor, evaluated densely, with the same guard semantics as the solver.
pub fn oracle_em_sweep(
    spec: &ModelSpec,
    factors: &mut [Factor],
    observations: &[SparseTensor],
    eps: f64,
) {
    for alpha in 0..spec.n_factors() {
        let cells = factors[alpha].len();
        let mut num = vec![0.0; cells];
        let mut den = vec![0.0; cells];
        for (nu, x) in observations.iter().enumerate() {
            if !spec.coupling(nu, alpha) {
                continue;
            }
            let xhat = dense_reconstruct(spec, factors, FactorView::Values, nu).unwrap();
            let q = dense_ratio(x, &xhat, eps);
            let dn = dense_delta(spec, factors, FactorView::Values, nu, alpha, &q).unwrap();
            for (acc, v) in num.iter_mut().zip(dn.values()) {
                *acc += v;
            }
            let m = dense_mask(x);
            let dd = dense_delta(spec, factors, FactorView::Values, nu, alpha, &m).unwrap();
            for (acc, v) in den.iter_mut().zip(dd.values()) {
                *acc += v;
            }
        }
        let values = factors[alpha].values_mut();
        for c in 0..cells {
            if den[c] > eps {
                values[c] = values[c] * num[c] / den[c];
            }
        }
    }
}

/// One reference MAP-EM sweep: prior-shifted numerator and denominator,
/// clamped at zero.
pub fn oracle_map_em_sweep(
    spec: &ModelSpec,
    factors: &mut [Factor],
    observations: &[SparseTensor],
    eps: f64,
) {
    for alpha in 0..spec.n_factors() {
        let cells = factors[alpha].len();
        let mut num = vec![0.0; cells];
        let mut den = vec![0.0; cells];
        for (nu, x) in observations.iter().enumerate() {
            if !spec.coupling(nu, alpha) {
                continue;
            }
            let xhat = dense_reconstruct(spec, factors, FactorView::Values, nu).unwrap();
            let q = dense_ratio(x, &xhat, eps);
            let dn = dense_delta(spec, factors, FactorView::Values, nu, alpha, &q).unwrap();
            for (acc, v) in num.iter_mut().zip(dn.values()) {
                *acc += v;
            }
            let m = dense_mask(x);
            let dd = dense_delta(spec, factors, FactorView::Values, nu, alpha, &m).unwrap();
            for (acc, v) in den.iter_mut().zip(dd.values()) {
                *acc += v;
            }
        }
        let prior = &spec.factors()[alpha].prior;
        let values = factors[alpha].values_mut();
        for c in 0..cells {
            let denom = prior.rate_at(c) + den[c];
            if denom > eps {
                let v = ((prior.shape_at(c) - 1.0) + values[c] * num[c]) / denom;
                values[c] = if v < 0.0 { 0.0 } else { v };
            }
        }
    }
}

/// One reference VB sweep: Gamma posterior refresh per factor with the
/// numerator contraction under the L view against the L reconstruction and
/// the denominator under the E view, refreshed factor by factor.
pub fn oracle_vb_sweep(
    spec: &ModelSpec,
    factors: &mut [Factor],
    observations: &[SparseTensor],
    eps: f64,
) {
    for alpha in 0..spec.n_factors() {
        let cells = factors[alpha].len();
        let mut num = vec![0.0; cells];
        let mut den = vec![0.0; cells];
        for (nu, x) in observations.iter().enumerate() {
            if !spec.coupling(nu, alpha) {
                continue;
            }
            let xhat_l = dense_reconstruct(spec, factors, FactorView::L, nu).unwrap();
            let q = dense_ratio(x, &xhat_l, eps);
            let dn = dense_delta(spec, factors, FactorView::L, nu, alpha, &q).unwrap();
            for (acc, v) in num.iter_mut().zip(dn.values()) {
                *acc += v;
            }
            let m = dense_mask(x);
            let dd = dense_delta(spec, factors, FactorView::E, nu, alpha, &m).unwrap();
            for (acc, v) in den.iter_mut().zip(dd.values()) {
                *acc += v;
            }
        }
        let prior = &spec.factors()[alpha].prior;
        let mut c_new = Vec::with_capacity(cells);
        let mut d_new = Vec::with_capacity(cells);
        let mut e_new = Vec::with_capacity(cells);
        let mut l_new = Vec::with_capacity(cells);
        {
            let vb = factors[alpha].vb().expect("oracle needs VB fields");
            for cell in 0..cells {
                let shape = prior.shape_at(cell) + vb.l[cell] * num[cell];
                let scale = 1.0 / (prior.rate_at(cell) + den[cell]);
                c_new.push(shape);
                d_new.push(scale);
                e_new.push(shape * scale);
                l_new.push(digamma(shape).unwrap().exp() * scale);
            }
        }
        let factor = &mut factors[alpha];
        factor.values_mut().copy_from_slice(&e_new);
        let vb = factor.vb_mut().unwrap();
        vb.c = c_new;
        vb.d = d_new;
        vb.e = e_new;
        vb.l = l_new;
    }
}

/// Largest per-cell relative difference across two factor sets (values
/// field), with a floor so near-zero pairs compare absolutely.
pub fn max_rel_diff(a: &[Factor], b: &[Factor]) -> f64 {
    let mut worst = 0.0f64;
    for (fa, fb) in a.iter().zip(b) {
        for (&x, &y) in fa.values().iter().zip(fb.values()) {
            let scale = x.abs().max(y.abs()).max(1e-12);
            worst = worst.max((x - y).abs() / scale);
        }
    }
    worst
}

/// Same, over the four VB fields.
pub fn max_rel_diff_vb(a: &[Factor], b: &[Factor]) -> f64 {
    let mut worst = 0.0f64;
    for (fa, fb) in a.iter().zip(b) {
        let (va, vb) = (fa.vb().unwrap(), fb.vb().unwrap());
        for (x, y) in [(&va.c, &vb.c), (&va.d, &vb.d), (&va.e, &vb.e), (&va.l, &vb.l)] {
            for (&p, &q) in x.iter().zip(y.iter()) {
                let scale = p.abs().max(q.abs()).max(1e-12);
                worst = worst.max((p - q).abs() / scale);
            }
        }
    }
    worst
}

/// Planted binarized tensor on the full cell set: CP values from Gamma(1,1)
/// factors, thresholded at their median so labels are balanced. Returns
/// the tensor together with the planted factors.
pub fn planted_binary_tensor(
    spec: &ModelSpec,
    nu: usize,
    seed: u64,
) -> (SparseTensor, Vec<Factor>) {
    let truth = planted_factors(spec, seed).unwrap();
    let support = full_support(spec, nu);
    let exact = reconstruct_observed(spec, &truth, FactorView::Values, nu, &support).unwrap();
    let mut sorted = exact.values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let binary = exact
        .with_values(
            exact
                .values()
                .iter()
                .map(|&v| if v >= median { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap();
    (binary, truth)
}
