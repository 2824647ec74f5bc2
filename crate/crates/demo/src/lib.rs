//! Browser demo bindings. Two interactive operations are exposed to the
//! page: a stepwise tensor-completion session (synthetic low-rank data,
//! live objective and held-out RMSE traces, slice and factor heatmaps)
//! and a one-shot EM-vs-VB link-prediction comparison across hidden
//! fractions. All numeric work happens in `gctf-core`; the page only
//! plots the JSON these functions return.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use gctf_core::contraction::{reconstruct_observed, FactorView};
use gctf_core::eval::{link_prediction_eval, make_split, rmse, SplitScope, SplitSpec};
use gctf_core::seed;
use gctf_core::solvers::{Algorithm, Solver, SolverConfig};
use gctf_core::synth::{cp_model, generate_cp_data, SynthSpec};
use gctf_core::tensor::{DenseTensor, SparseTensor};
use gctf_core::Factor;

fn parse_algorithm(name: &str) -> Result<Algorithm, String> {
    match name {
        "em" => Ok(Algorithm::Em),
        "map-em" => Ok(Algorithm::MapEm),
        "vb" => Ok(Algorithm::Vb),
        other => Err(format!("unknown algorithm '{other}'")),
    }
}

fn default_prior_shape() -> f64 {
    0.5
}
fn default_prior_mean() -> f64 {
    10.0
}
fn default_max_iters() -> usize {
    400
}

#[derive(Deserialize)]
struct SessionParams {
    dims: [usize; 3],
    rank_true: usize,
    rank_fit: usize,
    /// Fraction of cells used for training; as much again (capped) is
    /// held out for scoring.
    observed_fraction: f64,
    noise: f64,
    algorithm: String,
    #[serde(default = "default_prior_shape")]
    prior_shape: f64,
    #[serde(default = "default_prior_mean")]
    prior_mean: f64,
    seed: u64,
    #[serde(default = "default_max_iters")]
    max_iters: usize,
}

#[derive(Serialize, Deserialize)]
struct StepReport {
    iterations: usize,
    converged: bool,
    objective: Vec<f64>,
    heldout_rmse: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Heatmap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SessionInfo {
    dims: [usize; 3],
    train_entries: usize,
    test_entries: usize,
    algorithm: String,
    baseline_rmse: f64,
}

struct SessionInner {
    solver: Solver,
    test: SparseTensor,
    truth: Vec<Factor>,
    /// Model at the planted rank, for rendering the ground-truth slice.
    truth_spec: gctf_core::ModelSpec,
    dims: [usize; 3],
    algorithm: Algorithm,
    baseline_rmse: f64,
}

impl SessionInner {
    fn create(params_json: &str) -> Result<Self, String> {
        let p: SessionParams =
            serde_json::from_str(params_json).map_err(|e| format!("bad params: {e}"))?;
        let algorithm = parse_algorithm(&p.algorithm)?;
        if !(p.observed_fraction > 0.0 && p.observed_fraction < 1.0) {
            return Err("observed_fraction must be in (0, 1)".into());
        }
        let test_frac = p.observed_fraction.min(1.0 - p.observed_fraction);
        let total = p.observed_fraction + test_frac;
        let (data, truth) = generate_cp_data(&SynthSpec {
            dims: p.dims.to_vec(),
            rank: p.rank_true,
            observed_fraction: total,
            noise_std_fraction: p.noise,
            seed: seed::stream(p.seed, "data"),
            binarize: None,
        })
        .map_err(|e| e.to_string())?;
        let (train, test) = make_split(
            &data,
            &SplitSpec {
                hide_fraction: test_frac / total,
                seed: seed::stream(p.seed, "mask"),
                scope: SplitScope::Entries,
            },
        )
        .map_err(|e| e.to_string())?;
        let train_mean = train.values().iter().sum::<f64>() / train.nnz() as f64;
        let baseline_rmse = (test
            .values()
            .iter()
            .map(|v| (v - train_mean) * (v - train_mean))
            .sum::<f64>()
            / test.nnz() as f64)
            .sqrt();
        let truth_spec = cp_model(&p.dims, p.rank_true, 1.0, 1.0).map_err(|e| e.to_string())?;
        let spec = cp_model(&p.dims, p.rank_fit, p.prior_shape, p.prior_mean)
            .map_err(|e| e.to_string())?;
        let solver = Solver::new(
            spec,
            vec![train],
            SolverConfig {
                algorithm,
                max_iters: p.max_iters,
                rel_tol: 1e-7,
                seed: seed::stream(p.seed, "fit"),
                ..SolverConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        Ok(Self {
            solver,
            test,
            truth,
            truth_spec,
            dims: p.dims,
            algorithm,
            baseline_rmse,
        })
    }

    fn info(&self) -> String {
        serde_json::to_string(&SessionInfo {
            dims: self.dims,
            train_entries: self.solver.observations()[0].nnz(),
            test_entries: self.test.nnz(),
            algorithm: self.algorithm.name().to_string(),
            baseline_rmse: self.baseline_rmse,
        })
        .expect("serializable")
    }

    fn step(&mut self, sweeps: u32) -> Result<String, String> {
        let mut objective = Vec::new();
        let mut heldout = Vec::new();
        for _ in 0..sweeps {
            if self.solver.has_converged()
                || self.solver.iterations() >= self.solver.config().max_iters
            {
                break;
            }
            let obj = self.solver.sweep().map_err(|e| e.to_string())?;
            objective.push(obj);
            let predicted = reconstruct_observed(
                self.solver.spec(),
                self.solver.factors(),
                self.solver.scoring_view(),
                0,
                &self.test,
            )
            .map_err(|e| e.to_string())?;
            heldout.push(rmse(&predicted, &self.test).map_err(|e| e.to_string())?);
        }
        serde_json::to_string(&StepReport {
            iterations: self.solver.iterations(),
            converged: self.solver.has_converged(),
            objective,
            heldout_rmse: heldout,
        })
        .map_err(|e| e.to_string())
    }

    /// Frontal slice (all i,j at fixed k) of a reconstruction built from
    /// the given factors under `view`, against the spec they conform to.
    fn slice_from(
        &self,
        spec: &gctf_core::ModelSpec,
        factors: &[Factor],
        view: FactorView,
        k: u32,
    ) -> Result<String, String> {
        let [rows, cols, depth] = self.dims;
        if k as usize >= depth {
            return Err(format!("slice {k} out of range (depth {depth})"));
        }
        let mut coords = Vec::with_capacity(rows * cols * 3);
        for i in 0..rows as u32 {
            for j in 0..cols as u32 {
                coords.extend_from_slice(&[i, j, k]);
            }
        }
        let support = SparseTensor::from_flat(
            spec.observations()[0].indices.to_vec(),
            vec![rows, cols, depth],
            coords,
            vec![1.0; rows * cols],
        )
        .map_err(|e| e.to_string())?;
        let recon =
            reconstruct_observed(spec, factors, view, 0, &support).map_err(|e| e.to_string())?;
        serde_json::to_string(&Heatmap {
            rows,
            cols,
            values: recon.values().to_vec(),
        })
        .map_err(|e| e.to_string())
    }

    fn reconstruction_slice(&self, k: u32) -> Result<String, String> {
        self.slice_from(
            self.solver.spec(),
            self.solver.factors(),
            self.solver.scoring_view(),
            k,
        )
    }

    fn truth_slice(&self, k: u32) -> Result<String, String> {
        self.slice_from(&self.truth_spec, &self.truth, FactorView::Values, k)
    }

    /// Observed training cells of one frontal slice: value where observed,
    /// -1 where hidden (values are nonnegative, so the page renders
    /// negatives as blank; JSON cannot carry NaN).
    fn observed_slice(&self, k: u32) -> Result<String, String> {
        let [rows, cols, depth] = self.dims;
        if k as usize >= depth {
            return Err(format!("slice {k} out of range (depth {depth})"));
        }
        let mut grid = DenseTensor::zeros(vec!["i".into(), "j".into()], vec![rows, cols]);
        grid.values_mut().fill(-1.0);
        let train = &self.solver.observations()[0];
        for (coord, value) in train.iter() {
            if coord[2] == k {
                grid.set(&coord[..2], value);
            }
        }
        serde_json::to_string(&Heatmap {
            rows,
            cols,
            values: grid.values().to_vec(),
        })
        .map_err(|e| e.to_string())
    }

    fn factor_heatmap(&self, mode: u32) -> Result<String, String> {
        let factors = self.solver.factors();
        let Some(factor) = factors.get(mode as usize) else {
            return Err(format!("no factor #{mode}"));
        };
        let values = match self.algorithm {
            Algorithm::Vb => factor.vb().expect("VB run has fields").e.clone(),
            _ => factor.values().to_vec(),
        };
        serde_json::to_string(&Heatmap {
            rows: factor.shape()[0],
            cols: factor.shape()[1],
            values,
        })
        .map_err(|e| e.to_string())
    }
}

/// Stepwise tensor-completion session over planted low-rank data.
#[wasm_bindgen]
pub struct CompletionSession {
    inner: SessionInner,
}

#[wasm_bindgen]
impl CompletionSession {
    #[wasm_bindgen(constructor)]
    pub fn new(params_json: &str) -> Result<CompletionSession, JsValue> {
        SessionInner::create(params_json)
            .map(|inner| CompletionSession { inner })
            .map_err(|e| JsValue::from_str(&e))
    }

    /// Session metadata (dims, entry counts, baseline RMSE) as JSON.
    pub fn info(&self) -> String {
        self.inner.info()
    }

    /// Advance up to `sweeps` sweeps; returns the new objective and
    /// held-out RMSE values as JSON.
    pub fn step(&mut self, sweeps: u32) -> Result<String, JsValue> {
        self.inner.step(sweeps).map_err(|e| JsValue::from_str(&e))
    }

    pub fn reconstruction_slice(&self, k: u32) -> Result<String, JsValue> {
        self.inner
            .reconstruction_slice(k)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn truth_slice(&self, k: u32) -> Result<String, JsValue> {
        self.inner.truth_slice(k).map_err(|e| JsValue::from_str(&e))
    }

    pub fn observed_slice(&self, k: u32) -> Result<String, JsValue> {
        self.inner
            .observed_slice(k)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn factor_heatmap(&self, mode: u32) -> Result<String, JsValue> {
        self.inner
            .factor_heatmap(mode)
            .map_err(|e| JsValue::from_str(&e))
    }
}

#[derive(Deserialize)]
struct CompareParams {
    dims: [usize; 3],
    rank_true: usize,
    rank_fit: usize,
    hide_fractions: Vec<f64>,
    seeds: u64,
    #[serde(default = "default_max_iters")]
    max_iters: usize,
    #[serde(default = "default_prior_shape")]
    prior_shape: f64,
    #[serde(default = "default_prior_mean")]
    prior_mean: f64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CompareReport {
    hide_fractions: Vec<f64>,
    em_auc_mean: Vec<f64>,
    em_auc_std: Vec<f64>,
    vb_auc_mean: Vec<f64>,
    vb_auc_std: Vec<f64>,
}

fn compare_impl(params_json: &str) -> Result<String, String> {
    let p: CompareParams =
        serde_json::from_str(params_json).map_err(|e| format!("bad params: {e}"))?;
    if p.seeds == 0 || p.hide_fractions.is_empty() {
        return Err("need at least one seed and one hide fraction".into());
    }
    // planted binary links: CP values thresholded at their median
    let mut report = CompareReport {
        hide_fractions: p.hide_fractions.clone(),
        em_auc_mean: Vec::new(),
        em_auc_std: Vec::new(),
        vb_auc_mean: Vec::new(),
        vb_auc_std: Vec::new(),
    };
    for &hide in &p.hide_fractions {
        if !(hide > 0.0 && hide < 1.0) {
            return Err(format!("hide fraction {hide} outside (0, 1)"));
        }
        let mut em_aucs = Vec::new();
        let mut vb_aucs = Vec::new();
        for s in 0..p.seeds {
            let run_seed = seed::stream(p.seed, &format!("run/{s}"));
            let (raw, _) = generate_cp_data(&SynthSpec {
                dims: p.dims.to_vec(),
                rank: p.rank_true,
                observed_fraction: 1.0,
                noise_std_fraction: 0.0,
                seed: seed::stream(run_seed, "data"),
                binarize: None,
            })
            .map_err(|e| e.to_string())?;
            let mut sorted = raw.values().to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let median = sorted[sorted.len() / 2];
            let binary = raw
                .with_values(
                    raw.values()
                        .iter()
                        .map(|&v| f64::from(v >= median))
                        .collect(),
                )
                .map_err(|e| e.to_string())?;
            let (train, test) = make_split(
                &binary,
                &SplitSpec {
                    hide_fraction: hide,
                    seed: seed::stream(run_seed, "mask"),
                    scope: SplitScope::Entries,
                },
            )
            .map_err(|e| e.to_string())?;
            let spec = cp_model(&p.dims, p.rank_fit, p.prior_shape, p.prior_mean)
                .map_err(|e| e.to_string())?;
            for (algorithm, out) in [
                (Algorithm::Em, &mut em_aucs),
                (Algorithm::Vb, &mut vb_aucs),
            ] {
                let config = SolverConfig {
                    algorithm,
                    max_iters: p.max_iters,
                    rel_tol: 1e-6,
                    seed: seed::stream(run_seed, "fit"),
                    ..SolverConfig::default()
                };
                let result =
                    link_prediction_eval(&spec, &config, std::slice::from_ref(&train), 0, &test)
                        .map_err(|e| e.to_string())?;
                out.push(result.auc);
            }
        }
        let stats = |xs: &[f64]| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let (m, sd) = stats(&em_aucs);
        report.em_auc_mean.push(m);
        report.em_auc_std.push(sd);
        let (m, sd) = stats(&vb_aucs);
        report.vb_auc_mean.push(m);
        report.vb_auc_std.push(sd);
    }
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// Run the EM-vs-VB link-prediction comparison on planted binary data and
/// return mean/std AUC per hidden fraction as JSON.
#[wasm_bindgen]
pub fn link_prediction_compare(params_json: &str) -> Result<String, JsValue> {
    compare_impl(params_json).map_err(|e| JsValue::from_str(&e))
}
