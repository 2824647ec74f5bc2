//! Evaluation harness: train/test splits over observed entries (random
//! cells or whole fibers), rank-based AUC with midrank tie handling, RMSE,
//! and the end-to-end link-prediction protocol (fit on the train support,
//! score the held-out cells from the reconstruction).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::contraction::reconstruct_observed;
use crate::model::ModelSpec;
use crate::solvers::{fit, SolverConfig, Termination};
use crate::tensor::SparseTensor;
use crate::{Error, Result};

/// What a split hides: individual observed entries, or every entry lying
/// in randomly chosen fibers along the named index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitScope {
    Entries,
    Slices(String),
}

#[derive(Debug, Clone)]
pub struct SplitSpec {
    /// Fraction of the support hidden into the test set, strictly in (0, 1).
    pub hide_fraction: f64,
    pub seed: u64,
    pub scope: SplitScope,
}

/// Split a tensor's support into disjoint train and test tensors whose
/// supports union back to the original. Deterministic per seed.
pub fn make_split(tensor: &SparseTensor, spec: &SplitSpec) -> Result<(SparseTensor, SparseTensor)> {
    if tensor.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if !(spec.hide_fraction > 0.0 && spec.hide_fraction < 1.0) {
        return Err(Error::DegenerateSplit(format!(
            "hide_fraction {} outside (0, 1)",
            spec.hide_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nnz = tensor.nnz();
    let in_test: Vec<bool> = match &spec.scope {
        SplitScope::Entries => {
            let hide = (spec.hide_fraction * nnz as f64).round() as usize;
            if hide == 0 || hide >= nnz {
                return Err(Error::DegenerateSplit(format!(
                    "hiding {hide} of {nnz} entries"
                )));
            }
            let mut ids: Vec<usize> = (0..nnz).collect();
            ids.shuffle(&mut rng);
            let mut mask = vec![false; nnz];
            for &id in &ids[..hide] {
                mask[id] = true;
            }
            mask
        }
        SplitScope::Slices(axis) => {
            let Some(dim) = tensor.indices().iter().position(|n| n == axis) else {
                return Err(Error::UnknownIndex(axis.clone()));
            };
            let mut present: Vec<u32> = (0..nnz).map(|e| tensor.coord(e)[dim]).collect();
            present.sort_unstable();
            present.dedup();
            let hide = (spec.hide_fraction * present.len() as f64).round() as usize;
            if hide == 0 || hide >= present.len() {
                return Err(Error::DegenerateSplit(format!(
                    "hiding {hide} of {} fibers along '{axis}'",
                    present.len()
                )));
            }
            present.shuffle(&mut rng);
            let hidden: Vec<u32> = present[..hide].to_vec();
            (0..nnz)
                .map(|e| hidden.contains(&tensor.coord(e)[dim]))
                .collect()
        }
    };

    let ndim = tensor.ndim();
    let mut train_coords = Vec::new();
    let mut train_values = Vec::new();
    let mut test_coords = Vec::new();
    let mut test_values = Vec::new();
    for (e, &hide) in in_test.iter().enumerate() {
        let (coords, values) = if hide {
            (&mut test_coords, &mut test_values)
        } else {
            (&mut train_coords, &mut train_values)
        };
        coords.extend_from_slice(&tensor.coords()[e * ndim..(e + 1) * ndim]);
        values.push(tensor.values()[e]);
    }
    if train_values.is_empty() || test_values.is_empty() {
        return Err(Error::DegenerateSplit("train or test side is empty".into()));
    }
    let train = SparseTensor::from_flat(
        tensor.indices().to_vec(),
        tensor.shape().to_vec(),
        train_coords,
        train_values,
    )?;
    let test = SparseTensor::from_flat(
        tensor.indices().to_vec(),
        tensor.shape().to_vec(),
        test_coords,
        test_values,
    )?;
    Ok((train, test))
}

/// Area under the ROC curve in the rank-sum form with midrank tie
/// correction: pairs with a higher positive score count 1, exact ties
/// count one half. O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFiniteResult("AUC scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN scores"));
    // midranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0f64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &id in &order[start..end] {
            if labels[id] {
                rank_sum_pos += midrank;
            }
        }
        start = end;
    }
    let n_pos = n_pos as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg as f64))
}

/// Root mean squared error over two tensors with identical supports.
pub fn rmse(predicted: &SparseTensor, truth: &SparseTensor) -> Result<f64> {
    if predicted.indices() != truth.indices()
        || predicted.shape() != truth.shape()
        || predicted.coords() != truth.coords()
    {
        return Err(Error::SupportMismatch(
            "predicted and truth tensors must share one support".into(),
        ));
    }
    let n = truth.nnz();
    if n == 0 {
        return Err(Error::EmptyTensor);
    }
    let sum_sq: f64 = predicted
        .values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum_sq / n as f64).sqrt())
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub auc: f64,
    pub rmse: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub wall_seconds: f64,
}

/// Fit on the train supports and score the held-out cells of observation
/// `target` from the reconstruction (posterior-mean view for VB, plain
/// values otherwise). `train` carries one tensor per observation, with the
/// target observation already reduced to its train split; side
/// observations stay fully observed. Test values must be binary.
pub fn link_prediction_eval(
    spec: &ModelSpec,
    config: &SolverConfig,
    train: &[SparseTensor],
    target: usize,
    test: &SparseTensor,
) -> Result<EvalReport> {
    if target >= spec.n_observations() {
        return Err(Error::InvalidSpec(format!(
            "target observation #{target} of {}",
            spec.n_observations()
        )));
    }
    if let Some(v) = test.values().iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::NonBinaryLabels(*v));
    }
    let result = fit(spec, train, config)?;
    let view = match config.algorithm {
        crate::solvers::Algorithm::Vb => crate::contraction::FactorView::E,
        _ => crate::contraction::FactorView::Values,
    };
    let predicted = reconstruct_observed(spec, &result.factors, view, target, test)?;
    let labels: Vec<bool> = test.values().iter().map(|&v| v == 1.0).collect();
    let auc_value = auc(predicted.values(), &labels)?;
    let rmse_value = rmse(&predicted, test)?;
    Ok(EvalReport {
        auc: auc_value,
        rmse: rmse_value,
        objective_trace: result.objective_trace,
        iterations: result.iterations_run,
        termination: result.termination,
        wall_seconds: result.iter_seconds.iter().sum(),
    })
}
