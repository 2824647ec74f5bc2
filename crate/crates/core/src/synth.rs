//! Synthetic benchmark data: planted low-rank CP tensors with controlled
//! noise, missingness, and optional binarization, plus helpers that build
//! the matching model specs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::factor::{init_factor, Factor};
use crate::model::{FactorDecl, ModelSpec, ObservationDecl, PriorSpec};
use crate::seed;
use crate::space::IndexSpace;
use crate::tensor::SparseTensor;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub dims: Vec<usize>,
    /// Rank of the planted CP structure.
    pub rank: usize,
    /// Fraction of cells emitted as observed entries, in (0, 1].
    pub observed_fraction: f64,
    /// Gaussian noise scale relative to the standard deviation of the
    /// noiseless observed values; negative draws clamp at 0.
    pub noise_std_fraction: f64,
    pub seed: u64,
    /// Binarize with this threshold: value >= threshold becomes 1, else 0.
    pub binarize: Option<f64>,
}

fn dim_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|d| match d {
            0 => "i".to_string(),
            1 => "j".to_string(),
            2 => "k".to_string(),
            other => format!("d{other}"),
        })
        .collect()
}

/// CP model over `dims` with a shared rank index `r` and factors Z1..Zn,
/// all carrying the scalar Gamma prior (A = `a`, B = `b`).
pub fn cp_model(dims: &[usize], rank: usize, a: f64, b: f64) -> Result<ModelSpec> {
    let names = dim_names(dims.len());
    let mut pairs: Vec<(String, usize)> = names.iter().cloned().zip(dims.iter().copied()).collect();
    pairs.push(("r".to_string(), rank));
    let space = IndexSpace::new(pairs)?;
    let factors = names
        .iter()
        .enumerate()
        .map(|(m, n)| FactorDecl {
            name: format!("Z{}", m + 1),
            indices: vec![n.clone(), "r".to_string()],
            prior: PriorSpec::scalar(a, b),
        })
        .collect();
    let observations = vec![ObservationDecl {
        name: "X1".to_string(),
        indices: names,
        factors: (1..=dims.len()).map(|m| format!("Z{m}")).collect(),
    }];
    ModelSpec::new(space, factors, observations)
}

/// CP model plus one side matrix X2(i, m) sharing the first-mode factor,
/// the usual coupled layout for link prediction with side information.
pub fn coupled_cp_model(
    dims: &[usize],
    side_dim: usize,
    rank: usize,
    a: f64,
    b: f64,
) -> Result<ModelSpec> {
    let names = dim_names(dims.len());
    let mut pairs: Vec<(String, usize)> = names.iter().cloned().zip(dims.iter().copied()).collect();
    pairs.push(("m".to_string(), side_dim));
    pairs.push(("r".to_string(), rank));
    let space = IndexSpace::new(pairs)?;
    let mut factors: Vec<FactorDecl> = names
        .iter()
        .enumerate()
        .map(|(m, n)| FactorDecl {
            name: format!("Z{}", m + 1),
            indices: vec![n.clone(), "r".to_string()],
            prior: PriorSpec::scalar(a, b),
        })
        .collect();
    factors.push(FactorDecl {
        name: "Zs".to_string(),
        indices: vec!["m".to_string(), "r".to_string()],
        prior: PriorSpec::scalar(a, b),
    });
    let observations = vec![
        ObservationDecl {
            name: "X1".to_string(),
            indices: names.clone(),
            factors: (1..=dims.len()).map(|m| format!("Z{m}")).collect(),
        },
        ObservationDecl {
            name: "X2".to_string(),
            indices: vec![names[0].clone(), "m".to_string()],
            factors: vec!["Z1".to_string(), "Zs".to_string()],
        },
    ];
    ModelSpec::new(space, factors, observations)
}

/// Distinct uniform draws from 0..total, ascending.
fn sample_distinct(rng: &mut ChaCha8Rng, total: u64, count: usize) -> Vec<u64> {
    let mut picked: Vec<u64> = Vec::with_capacity(count + count / 8 + 16);
    while picked.len() < count {
        let missing = count - picked.len();
        for _ in 0..missing + missing / 8 + 8 {
            picked.push(rng.random_range(0..total));
        }
        picked.sort_unstable();
        picked.dedup();
    }
    // trim deterministically: drop a uniform subset of positions in one pass
    if picked.len() > count {
        let mut drop = rand::seq::index::sample(rng, picked.len(), picked.len() - count)
            .into_vec();
        drop.sort_unstable();
        let mut next = 0usize;
        let mut kept = Vec::with_capacity(count);
        for (pos, cell) in picked.into_iter().enumerate() {
            if next < drop.len() && drop[next] == pos {
                next += 1;
            } else {
                kept.push(cell);
            }
        }
        picked = kept;
    }
    picked
}

fn sample_support(rng: &mut ChaCha8Rng, total: u64, count: usize) -> Vec<u64> {
    const SHUFFLE_LIMIT: u64 = 1 << 24;
    if 2 * (count as u64) <= total {
        sample_distinct(rng, total, count)
    } else if total <= SHUFFLE_LIMIT {
        let mut all: Vec<u64> = (0..total).collect();
        all.partial_shuffle(rng, count);
        let mut chosen: Vec<u64> = all[..count].to_vec();
        chosen.sort_unstable();
        chosen
    } else {
        // dense case on a huge space: sample the complement instead
        let excluded = sample_distinct(rng, total, (total - count as u64) as usize);
        let mut chosen = Vec::with_capacity(count);
        let mut ex = excluded.iter().peekable();
        for cell in 0..total {
            if ex.peek() == Some(&&cell) {
                ex.next();
            } else {
                chosen.push(cell);
            }
        }
        chosen
    }
}

/// Generate an observed tensor from a planted CP structure: factors drawn
/// from Gamma(1, mean 1), a uniform random support of exactly
/// round(observed_fraction * prod(dims)) cells, values equal to the CP
/// reconstruction plus optional Gaussian noise (clamped at 0), optionally
/// binarized. Deterministic per seed; the ground-truth factors are
/// returned alongside.
pub fn generate_cp_data(spec: &SynthSpec) -> Result<(SparseTensor, Vec<Factor>)> {
    if spec.dims.is_empty() || spec.dims.contains(&0) {
        return Err(Error::InvalidSpec(format!("bad dims {:?}", spec.dims)));
    }
    if spec.rank < 1 {
        return Err(Error::InvalidSpec("rank must be at least 1".into()));
    }
    if !(spec.observed_fraction > 0.0 && spec.observed_fraction <= 1.0) {
        return Err(Error::InvalidSpec(format!(
            "observed_fraction {} outside (0, 1]",
            spec.observed_fraction
        )));
    }
    if spec.noise_std_fraction.is_nan() || spec.noise_std_fraction < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "noise_std_fraction {} must be nonnegative",
            spec.noise_std_fraction
        )));
    }
    if let Some(t) = spec.binarize {
        if !t.is_finite() {
            return Err(Error::InvalidSpec("binarize threshold must be finite".into()));
        }
    }
    let total_u128: u128 = spec.dims.iter().map(|&d| d as u128).product();
    let Ok(total) = u64::try_from(total_u128) else {
        return Err(Error::InvalidSpec("index space too large".into()));
    };
    let count = (spec.observed_fraction * total as f64).round() as u64;
    if count == 0 || count > total {
        return Err(Error::InvalidSpec(format!(
            "observed_fraction {} yields {count} of {total} cells",
            spec.observed_fraction
        )));
    }

    let model = cp_model(&spec.dims, spec.rank, 1.0, 1.0)?;
    let init_seed = seed::stream(spec.seed, "factors");
    let truth: Vec<Factor> = model
        .factors()
        .iter()
        .map(|d| {
            init_factor(
                &d.name,
                &d.indices,
                model.space(),
                seed::stream(init_seed, &d.name),
                &PriorSpec::scalar(1.0, 1.0),
            )
        })
        .collect::<Result<_>>()?;

    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed::stream(spec.seed, "mask"));
    let support = sample_support(&mut mask_rng, total, count as usize);

    // noiseless CP values at the sampled coordinates
    let ndim = spec.dims.len();
    let mut coords: Vec<u32> = Vec::with_capacity(support.len() * ndim);
    let mut values: Vec<f64> = Vec::with_capacity(support.len());
    let mut coord = vec![0u32; ndim];
    for &cell in &support {
        let mut rest = cell;
        for d in (0..ndim).rev() {
            coord[d] = (rest % spec.dims[d] as u64) as u32;
            rest /= spec.dims[d] as u64;
        }
        let mut acc = 0.0;
        for r in 0..spec.rank {
            let mut prod = 1.0;
            for (d, f) in truth.iter().enumerate() {
                prod *= f.values()[coord[d] as usize * spec.rank + r];
            }
            acc += prod;
        }
        coords.extend_from_slice(&coord);
        values.push(acc);
    }

    if spec.noise_std_fraction > 0.0 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sigma = spec.noise_std_fraction * var.sqrt();
        if sigma > 0.0 {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(seed::stream(spec.seed, "noise"));
            let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
            for v in &mut values {
                *v = (*v + normal.sample(&mut noise_rng)).max(0.0);
            }
        }
    }

    if let Some(threshold) = spec.binarize {
        for v in &mut values {
            *v = if *v >= threshold { 1.0 } else { 0.0 };
        }
    }

    let names = dim_names(ndim);
    let tensor = SparseTensor::from_flat(names, spec.dims.clone(), coords, values)?;
    Ok((tensor, truth))
}

/// Draw one factor per mode from Gamma(shape 1, mean 1); exposed for tests
/// that need planted structure without the observation sampling.
pub fn planted_factors(model: &ModelSpec, base_seed: u64) -> Result<Vec<Factor>> {
    model
        .factors()
        .iter()
        .map(|d| {
            init_factor(
                &d.name,
                &d.indices,
                model.space(),
                seed::stream(base_seed, &d.name),
                &PriorSpec::scalar(1.0, 1.0),
            )
        })
        .collect()
}

/// Sample a Gamma(shape, mean) value stream; test helper for planted data.
pub fn gamma_draws(shape: f64, mean: f64, n: usize, seed_value: u64) -> Result<Vec<f64>> {
    let gamma = Gamma::new(shape, mean / shape).map_err(|e| Error::InvalidPrior {
        factor: "draws".into(),
        reason: e.to_string(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
    Ok((0..n).map(|_| gamma.sample(&mut rng)).collect())
}
