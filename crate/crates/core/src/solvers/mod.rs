//! Fixed-point solvers for the Poisson/KL factorization model: plain
//! multiplicative EM, MAP-EM with the Gamma prior folded in, and
//! variational Bayes with Gamma posteriors. Each sweeps the factors in
//! declaration order; convergence is measured on the masked KL objective
//! (EM, MAP-EM) or on the evidence lower bound (VB).

mod objective;
mod steps;

pub use objective::{elbo, kl_objective};
pub use steps::{
    em_step, em_step_coupled, em_step_single, map_em_step, vb_step, vb_step_coupled,
    vb_step_single,
};

use crate::contraction::{check_factors_conform, FactorView, ObsPlan};
use crate::factor::{init_factor, Factor};
use crate::model::ModelSpec;
use crate::seed;
use crate::tensor::SparseTensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Multiplicative EM on the masked KL objective (no prior in the update).
    Em,
    /// MAP-EM: Gamma-prior terms folded into numerator and denominator.
    MapEm,
    /// Variational Bayes with a Gamma posterior per factor cell.
    Vb,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Em => "em",
            Algorithm::MapEm => "map-em",
            Algorithm::Vb => "vb",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    /// Floor for model estimates inside ratios; denominator cells at or
    /// below this freeze the corresponding factor cell.
    pub epsilon_guard: f64,
    pub trace_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Em,
            max_iters: 200,
            rel_tol: 1e-6,
            seed: 0,
            epsilon_guard: 1e-12,
            trace_objective: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        if self.epsilon_guard.is_nan() || self.epsilon_guard <= 0.0 {
            return Err(Error::InvalidConfig(
                "epsilon_guard must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Fitted factors, with VB fields populated when algorithm = Vb.
    pub factors: Vec<Factor>,
    /// Objective value after each sweep (KL for EM/MAP-EM, ELBO for VB);
    /// empty when tracing is disabled.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub termination: Termination,
    /// Wall seconds per sweep (zeros on targets without a monotonic clock).
    pub iter_seconds: Vec<f64>,
}

#[cfg(not(target_arch = "wasm32"))]
mod clock {
    pub struct Stopwatch(std::time::Instant);
    impl Stopwatch {
        pub fn start() -> Self {
            Self(std::time::Instant::now())
        }
        pub fn seconds(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }
}

#[cfg(target_arch = "wasm32")]
mod clock {
    pub struct Stopwatch;
    impl Stopwatch {
        pub fn start() -> Self {
            Self
        }
        pub fn seconds(&self) -> f64 {
            0.0
        }
    }
}

/// Stepwise fitting state: factors are initialized from their priors at
/// construction and advanced one full sweep at a time, so callers can
/// interleave their own bookkeeping (held-out scoring, plotting) between
/// sweeps. [`fit`] wraps the usual run-to-convergence loop.
#[derive(Debug)]
pub struct Solver {
    spec: ModelSpec,
    observations: Vec<SparseTensor>,
    config: SolverConfig,
    plans: Vec<ObsPlan>,
    factors: Vec<Factor>,
    trace: Vec<f64>,
    iter_seconds: Vec<f64>,
    iterations: usize,
    prev_objective: Option<f64>,
    converged: bool,
}

impl Solver {
    pub fn new(
        spec: ModelSpec,
        observations: Vec<SparseTensor>,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        validate_observations(&spec, &observations)?;
        let plans = (0..spec.n_observations())
            .map(|nu| ObsPlan::build(&spec, nu))
            .collect::<Result<Vec<_>>>()?;

        let init_seed = seed::stream(config.seed, "init");
        let mut factors = Vec::with_capacity(spec.n_factors());
        for decl in spec.factors() {
            let fseed = seed::stream(init_seed, &decl.name);
            let mut f = init_factor(&decl.name, &decl.indices, spec.space(), fseed, &decl.prior)?;
            if config.algorithm == Algorithm::Vb {
                f.init_vb(&decl.prior)?;
            }
            factors.push(f);
        }
        if config.algorithm == Algorithm::MapEm {
            warn_if_shape_below_one(&spec);
        }

        Ok(Self {
            spec,
            observations,
            config,
            plans,
            factors,
            trace: Vec::new(),
            iter_seconds: Vec::new(),
            iterations: 0,
            prev_objective: None,
            converged: false,
        })
    }

    /// Start from existing factors instead of prior draws (they must
    /// conform to the spec). VB fields are installed if missing.
    pub fn with_factors(mut self, factors: Vec<Factor>) -> Result<Self> {
        check_factors_conform(&self.spec, &factors)?;
        self.factors = factors;
        if self.config.algorithm == Algorithm::Vb {
            for (f, decl) in self.factors.iter_mut().zip(self.spec.factors()) {
                if f.vb().is_none() {
                    f.init_vb(&decl.prior)?;
                }
            }
        }
        Ok(self)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn observations(&self) -> &[SparseTensor] {
        &self.observations
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn objective_trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn iter_seconds(&self) -> &[f64] {
        &self.iter_seconds
    }

    pub fn has_converged(&self) -> bool {
        self.converged
    }

    /// The factor field downstream scoring should read for this run.
    pub fn scoring_view(&self) -> FactorView {
        match self.config.algorithm {
            Algorithm::Vb => FactorView::E,
            _ => FactorView::Values,
        }
    }

    /// Current objective (KL for EM/MAP-EM, ELBO for VB) without advancing.
    pub fn objective(&self) -> Result<f64> {
        let eps = self.config.epsilon_guard;
        match self.config.algorithm {
            Algorithm::Vb => objective::elbo_with_plans(
                &self.spec,
                &self.plans,
                &self.factors,
                &self.observations,
                eps,
            ),
            _ => objective::kl_objective_with_plans(
                &self.plans,
                &self.factors,
                &self.observations,
                FactorView::Values,
                eps,
            ),
        }
    }

    /// Run one full sweep over all factors and return the objective after
    /// it. Also updates the convergence flag.
    pub fn sweep(&mut self) -> Result<f64> {
        let watch = clock::Stopwatch::start();
        let eps = self.config.epsilon_guard;
        let ctx = steps::StepContext {
            spec: &self.spec,
            plans: &self.plans,
            observations: &self.observations,
            eps,
        };
        for alpha in 0..self.spec.n_factors() {
            match self.config.algorithm {
                Algorithm::Em => steps::em_update(&ctx, &mut self.factors, alpha)?,
                Algorithm::MapEm => {
                    steps::map_em_update(&ctx, &mut self.factors, alpha, false)?
                }
                Algorithm::Vb => steps::vb_update(&ctx, &mut self.factors, alpha)?,
            }
        }
        let objective = self.objective()?;
        self.iter_seconds.push(watch.seconds());
        self.iterations += 1;
        if self.config.trace_objective {
            self.trace.push(objective);
        }
        if let Some(prev) = self.prev_objective {
            let rel = (objective - prev).abs() / (prev.abs() + 1.0);
            if rel < self.config.rel_tol {
                self.converged = true;
            }
        }
        self.prev_objective = Some(objective);
        Ok(objective)
    }

    /// Sweep until convergence or the iteration cap, then hand back the
    /// result.
    pub fn run(mut self) -> Result<FitResult> {
        while !self.converged && self.iterations < self.config.max_iters {
            self.sweep()?;
        }
        Ok(FitResult {
            termination: if self.converged {
                Termination::Converged
            } else {
                Termination::MaxIters
            },
            factors: self.factors,
            objective_trace: self.trace,
            iterations_run: self.iterations,
            iter_seconds: self.iter_seconds,
        })
    }
}

/// Initialize factors from their priors and iterate sweeps until the
/// relative objective change drops below `rel_tol` or `max_iters` is hit.
pub fn fit(
    spec: &ModelSpec,
    observations: &[SparseTensor],
    config: &SolverConfig,
) -> Result<FitResult> {
    Solver::new(spec.clone(), observations.to_vec(), config.clone())?.run()
}

pub(crate) fn validate_observations(
    spec: &ModelSpec,
    observations: &[SparseTensor],
) -> Result<()> {
    if observations.len() != spec.n_observations() {
        return Err(Error::ShapeMismatch(format!(
            "{} observation tensors supplied, model declares {}",
            observations.len(),
            spec.n_observations()
        )));
    }
    for (nu, obs) in observations.iter().enumerate() {
        let decl = &spec.observations()[nu];
        if obs.indices() != decl.indices.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "observation '{}' declares indices {:?}, tensor has {:?}",
                decl.name,
                decl.indices,
                obs.indices()
            )));
        }
        obs.validate_against(spec.space())?;
    }
    Ok(())
}

fn warn_if_shape_below_one(spec: &ModelSpec) {
    for decl in spec.factors() {
        let cells = decl
            .indices
            .iter()
            .map(|n| spec.space().cardinality(n).unwrap())
            .product::<usize>()
            .max(1);
        if (0..cells).any(|c| decl.prior.shape_at(c) < 1.0) {
            log::warn!(
                "factor '{}' has prior shape A < 1; MAP-EM loses its nonnegativity guarantee and will clamp at 0",
                decl.name
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{cp_model, generate_cp_data, SynthSpec};

    #[test]
    fn max_iters_zero_rejected() {
        let config = SolverConfig {
            max_iters: 0,
            ..SolverConfig::default()
        };
        assert!(matches!(
            config.validate(),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn fixed_seed_reproduces_fit() {
        let spec = cp_model(&[5, 4, 3], 2, 0.5, 10.0).unwrap();
        let (data, _) = generate_cp_data(&SynthSpec {
            dims: vec![5, 4, 3],
            rank: 2,
            observed_fraction: 0.8,
            noise_std_fraction: 0.1,
            seed: 11,
            binarize: None,
        })
        .unwrap();
        let config = SolverConfig {
            algorithm: Algorithm::Vb,
            max_iters: 20,
            seed: 5,
            ..SolverConfig::default()
        };
        let a = fit(&spec, std::slice::from_ref(&data), &config).unwrap();
        let b = fit(&spec, std::slice::from_ref(&data), &config).unwrap();
        assert_eq!(a.iterations_run, b.iterations_run);
        assert_eq!(a.objective_trace, b.objective_trace);
        for (fa, fb) in a.factors.iter().zip(&b.factors) {
            assert_eq!(fa.values(), fb.values());
            assert_eq!(fa.vb().unwrap().e, fb.vb().unwrap().e);
        }
    }

    #[test]
    fn em_drives_objective_down_on_noiseless_data() {
        let spec = cp_model(&[6, 5, 4], 2, 0.5, 10.0).unwrap();
        let (data, _) = generate_cp_data(&SynthSpec {
            dims: vec![6, 5, 4],
            rank: 2,
            observed_fraction: 1.0,
            noise_std_fraction: 0.0,
            seed: 3,
            binarize: None,
        })
        .unwrap();
        let solver = Solver::new(
            spec,
            vec![data],
            SolverConfig {
                algorithm: Algorithm::Em,
                max_iters: 200,
                rel_tol: 1e-14,
                seed: 1,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        let initial = solver.objective().unwrap();
        let result = solver.run().unwrap();
        let last = *result.objective_trace.last().unwrap();
        assert!(
            last < 1e-8 * initial,
            "objective only fell from {initial} to {last}"
        );
    }

    #[test]
    fn trace_length_matches_iterations() {
        let spec = cp_model(&[4, 3, 2], 2, 0.5, 10.0).unwrap();
        let (data, _) = generate_cp_data(&SynthSpec {
            dims: vec![4, 3, 2],
            rank: 2,
            observed_fraction: 1.0,
            noise_std_fraction: 0.2,
            seed: 9,
            binarize: None,
        })
        .unwrap();
        let config = SolverConfig {
            max_iters: 7,
            rel_tol: 1e-15,
            ..SolverConfig::default()
        };
        let result = fit(&spec, std::slice::from_ref(&data), &config).unwrap();
        assert_eq!(result.iterations_run, 7);
        assert_eq!(result.objective_trace.len(), 7);
        assert_eq!(result.iter_seconds.len(), 7);
        assert_eq!(result.termination, Termination::MaxIters);
    }
}
