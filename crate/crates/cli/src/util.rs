//! Shared command plumbing: file loading with path-carrying errors, prior
//! overrides, and manifest writing.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gctf_core::model::{FactorDecl, ModelSpec, PriorField};
use gctf_core::tensor::SparseTensor;

use crate::SolverArgs;

pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read model file '{}'", path.display()))?;
    ModelSpec::parse(&text).with_context(|| format!("in model file '{}'", path.display()))
}

pub fn load_tensors(paths: &[PathBuf], spec: &ModelSpec) -> Result<Vec<SparseTensor>> {
    anyhow::ensure!(
        paths.len() == spec.n_observations(),
        "model declares {} observations but {} data files were given",
        spec.n_observations(),
        paths.len()
    );
    paths
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read data file '{}'", path.display()))?;
            let tensor = gctf_core::io::read_coo(&text)
                .with_context(|| format!("in data file '{}'", path.display()))?;
            tensor
                .validate_against(spec.space())
                .with_context(|| format!("in data file '{}'", path.display()))?;
            Ok(tensor)
        })
        .collect()
}

/// Apply --A/--B overrides to every factor's prior.
pub fn override_priors(
    spec: &ModelSpec,
    shape: Option<f64>,
    mean: Option<f64>,
) -> Result<ModelSpec> {
    if shape.is_none() && mean.is_none() {
        return Ok(spec.clone());
    }
    let factors = spec
        .factors()
        .iter()
        .map(|f| {
            let mut prior = f.prior.clone();
            if let Some(a) = shape {
                prior.a = PriorField::Scalar(a);
            }
            if let Some(b) = mean {
                prior.b = PriorField::Scalar(b);
            }
            FactorDecl {
                name: f.name.clone(),
                indices: f.indices.clone(),
                prior,
            }
        })
        .collect();
    Ok(ModelSpec::new(
        spec.space().clone(),
        factors,
        spec.observations().to_vec(),
    )?)
}

pub fn solver_config(args: &SolverArgs) -> gctf_core::SolverConfig {
    gctf_core::SolverConfig {
        algorithm: args.algo.to_core(),
        max_iters: args.iters,
        rel_tol: args.tol,
        seed: args.seed,
        ..gctf_core::SolverConfig::default()
    }
}

pub fn write_manifest(out: &Path, manifest: &serde_json::Value) -> Result<()> {
    let path = out.join("manifest.json");
    fs::write(&path, format!("{:#}\n", manifest))
        .with_context(|| format!("cannot write '{}'", path.display()))?;
    Ok(())
}

pub fn solver_manifest(args: &SolverArgs) -> serde_json::Value {
    serde_json::json!({
        "algo": match args.algo {
            crate::AlgoArg::Em => "em",
            crate::AlgoArg::MapEm => "map-em",
            crate::AlgoArg::Vb => "vb",
        },
        "iters": args.iters,
        "tol": args.tol,
        "seed": args.seed,
        "A": args.prior_shape,
        "B": args.prior_mean,
    })
}

pub fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create '{}'", out.display()))
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
