//! The two computational kernels every update is built from:
//!
//! * [`reconstruct_observed`] — the model estimate restricted to a support
//!   set: for each supported coordinate, sum over the latent configurations
//!   of the product of connected factor entries.
//! * [`delta`] — the Delta_alpha operator: contract an observation-shaped
//!   field Q against every connected factor except alpha, producing an
//!   array shaped like factor alpha.
//!
//! Both iterate the sorted support and the latent cross-product in a fixed
//! lexicographic order, so results are reproducible bit for bit. The cost
//! is O(nnz * |latent cross-product| * K); with a single shared latent
//! index (the CP case) the latent loop degenerates to the rank loop of the
//! observed-entries MTTKRP pattern.
//!
//! [`dense_reconstruct`] and [`dense_delta`] are literal nested-loop
//! evaluations over the full index space. They are the ground truth the
//! sparse kernels are tested against and are deliberately built on their
//! own name-based index mapping rather than the sparse kernels' precomputed
//! offset tables.

use crate::factor::Factor;
use crate::layout::{cell_count, for_each_config, linear_index, row_major_strides};
use crate::model::ModelSpec;
use crate::tensor::{DenseTensor, SparseTensor, DENSE_CELL_LIMIT};
use crate::{Error, Result};

/// Which per-cell field of a factor feeds a contraction: the plain values,
/// the posterior means E, or the exponentiated log-means L.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorView {
    Values,
    E,
    L,
}

/// Guard for the per-observation latent offset tables.
const LATENT_CONFIG_LIMIT: u128 = 10_000_000;

/// How one connected factor is addressed while iterating an observation:
/// its base offset is assembled from the visible coordinate, then shifted
/// by a precomputed per-latent-configuration offset.
#[derive(Debug, Clone)]
pub(crate) struct ConnFactor {
    pub factor_pos: usize,
    /// (position within the observation coordinate, stride within factor)
    vis_strides: Vec<(usize, usize)>,
    /// Offset contribution of each latent configuration, lexicographic.
    lat_offsets: Vec<usize>,
}

/// Precomputed iteration plan for one observation of a model. Depends only
/// on model structure, never on factor values.
#[derive(Debug, Clone)]
pub(crate) struct ObsPlan {
    pub nu: usize,
    obs_indices: Vec<String>,
    obs_shape: Vec<usize>,
    n_latent: usize,
    pub conn: Vec<ConnFactor>,
}

impl ObsPlan {
    pub fn build(spec: &ModelSpec, nu: usize) -> Result<Self> {
        let obs = &spec.observations()[nu];
        let space = spec.space();
        let obs_shape = spec.observation_shape(nu);
        let latent_names = spec.latent_indices(nu);
        let latent_shape = space.shape_of(latent_names)?;
        let n_latent_cells = cell_count(&latent_shape);
        if n_latent_cells > LATENT_CONFIG_LIMIT {
            return Err(Error::TooLargeToMaterialize {
                cells: n_latent_cells,
                limit: LATENT_CONFIG_LIMIT,
            });
        }
        let n_latent = n_latent_cells as usize;
        let latent_strides_table = row_major_strides(&latent_shape);

        let mut conn = Vec::new();
        for &fpos in spec.connected_factors(nu) {
            let decl = &spec.factors()[fpos];
            let fshape = space.shape_of(&decl.indices)?;
            let fstrides = row_major_strides(&fshape);
            let mut vis_strides = Vec::new();
            // stride of each latent dimension within this factor (0 if absent)
            let mut lat_strides = vec![0usize; latent_names.len()];
            for (d, name) in decl.indices.iter().enumerate() {
                if let Some(p) = obs.indices.iter().position(|n| n == name) {
                    vis_strides.push((p, fstrides[d]));
                } else {
                    let q = latent_names
                        .iter()
                        .position(|n| n == name)
                        .expect("factor index is visible or latent by construction");
                    lat_strides[q] = fstrides[d];
                }
            }
            let mut lat_offsets = Vec::with_capacity(n_latent);
            for cid in 0..n_latent {
                // row-major decomposition: digit_q = (cid / stride_q) % card_q
                let mut offset = 0usize;
                for (q, &card) in latent_shape.iter().enumerate() {
                    offset += ((cid / latent_strides_table[q]) % card) * lat_strides[q];
                }
                lat_offsets.push(offset);
            }
            conn.push(ConnFactor {
                factor_pos: fpos,
                vis_strides,
                lat_offsets,
            });
        }
        Ok(Self {
            nu,
            obs_indices: obs.indices.clone(),
            obs_shape,
            n_latent,
            conn,
        })
    }

    fn check_support(&self, support: &SparseTensor) -> Result<()> {
        if support.indices() != self.obs_indices.as_slice()
            || support.shape() != self.obs_shape.as_slice()
        {
            return Err(Error::ShapeMismatch(format!(
                "support over {:?}{:?} does not match observation over {:?}{:?}",
                support.indices(),
                support.shape(),
                self.obs_indices,
                self.obs_shape
            )));
        }
        Ok(())
    }

    /// Model estimate at every supported coordinate, in support order.
    pub fn reconstruct_values(
        &self,
        factors: &[Factor],
        view: FactorView,
        support: &SparseTensor,
    ) -> Result<Vec<f64>> {
        self.check_support(support)?;
        let fields: Vec<&[f64]> = self
            .conn
            .iter()
            .map(|cf| factors[cf.factor_pos].field(view))
            .collect::<Result<_>>()?;
        let nnz = support.nnz();
        let mut out = Vec::with_capacity(nnz);
        let mut bases = vec![0usize; self.conn.len()];
        for e in 0..nnz {
            let coord = support.coord(e);
            for (slot, cf) in self.conn.iter().enumerate() {
                bases[slot] = cf
                    .vis_strides
                    .iter()
                    .map(|&(p, s)| coord[p] as usize * s)
                    .sum();
            }
            let mut acc = 0.0;
            for cid in 0..self.n_latent {
                let mut prod = 1.0;
                for (slot, cf) in self.conn.iter().enumerate() {
                    prod *= fields[slot][bases[slot] + cf.lat_offsets[cid]];
                }
                acc += prod;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Delta_alpha: accumulate `qvals` (aligned with `support`) times the
    /// product of every connected factor except `alpha` into an array
    /// shaped like factor `alpha`.
    pub fn delta_values(
        &self,
        factors: &[Factor],
        view: FactorView,
        alpha: usize,
        support: &SparseTensor,
        qvals: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_support(support)?;
        if qvals.len() != support.nnz() {
            return Err(Error::ShapeMismatch(format!(
                "{} field values for support of size {}",
                qvals.len(),
                support.nnz()
            )));
        }
        let Some(target_slot) = self.conn.iter().position(|cf| cf.factor_pos == alpha) else {
            return Err(Error::FactorNotConnected {
                factor: factors
                    .get(alpha)
                    .map(|f| f.name().to_string())
                    .unwrap_or_else(|| format!("#{alpha}")),
                observation: format!("#{}", self.nu),
            });
        };
        let fields: Vec<&[f64]> = self
            .conn
            .iter()
            .map(|cf| factors[cf.factor_pos].field(view))
            .collect::<Result<_>>()?;
        let mut out = vec![0.0; factors[alpha].len()];
        let mut bases = vec![0usize; self.conn.len()];
        for (e, &q) in qvals.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let coord = support.coord(e);
            for (slot, cf) in self.conn.iter().enumerate() {
                bases[slot] = cf
                    .vis_strides
                    .iter()
                    .map(|&(p, s)| coord[p] as usize * s)
                    .sum();
            }
            let target = &self.conn[target_slot];
            for cid in 0..self.n_latent {
                let mut prod = q;
                for (slot, cf) in self.conn.iter().enumerate() {
                    if slot != target_slot {
                        prod *= fields[slot][bases[slot] + cf.lat_offsets[cid]];
                    }
                }
                out[bases[target_slot] + target.lat_offsets[cid]] += prod;
            }
        }
        Ok(out)
    }
}

/// Check that a factor slice conforms to the spec's factor declarations
/// (same order, names, indices, shapes).
pub(crate) fn check_factors_conform(spec: &ModelSpec, factors: &[Factor]) -> Result<()> {
    if factors.len() != spec.n_factors() {
        return Err(Error::ShapeMismatch(format!(
            "{} factors supplied, model declares {}",
            factors.len(),
            spec.n_factors()
        )));
    }
    for (decl, f) in spec.factors().iter().zip(factors) {
        if decl.name != f.name() || decl.indices != f.indices() {
            return Err(Error::ShapeMismatch(format!(
                "factor '{}' over {:?} does not match declaration '{}' over {:?}",
                f.name(),
                f.indices(),
                decl.name,
                decl.indices
            )));
        }
        let expected = spec.space().shape_of(&decl.indices)?;
        if expected != f.shape() {
            return Err(Error::ShapeMismatch(format!(
                "factor '{}' has shape {:?}, space implies {:?}",
                f.name(),
                f.shape(),
                expected
            )));
        }
    }
    Ok(())
}

/// Model estimate of observation `nu` restricted to the support of
/// `support` (usually the observed tensor itself, or a held-out test set).
pub fn reconstruct_observed(
    spec: &ModelSpec,
    factors: &[Factor],
    view: FactorView,
    nu: usize,
    support: &SparseTensor,
) -> Result<SparseTensor> {
    check_factors_conform(spec, factors)?;
    let plan = ObsPlan::build(spec, nu)?;
    let values = plan.reconstruct_values(factors, view, support)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResult(format!(
            "reconstruction of observation '{}'",
            spec.observations()[nu].name
        )));
    }
    support.with_values(values)
}

/// The Delta_alpha operator for observation `nu`: contract `q` against
/// every connected factor except `alpha`. `q` must be shaped like the
/// observation and its support must lie within the observed support.
pub fn delta(
    spec: &ModelSpec,
    factors: &[Factor],
    view: FactorView,
    nu: usize,
    alpha: usize,
    q: &SparseTensor,
) -> Result<DenseTensor> {
    check_factors_conform(spec, factors)?;
    let plan = ObsPlan::build(spec, nu)?;
    let values = plan.delta_values(factors, view, alpha, q, q.values())?;
    let decl = &spec.factors()[alpha];
    DenseTensor::from_values(
        decl.indices.clone(),
        spec.space().shape_of(&decl.indices)?,
        values,
    )
}

/// Positions of a factor's indices inside a union coordinate, by name.
fn union_positions(factor_indices: &[String], union: &[String]) -> Vec<usize> {
    factor_indices
        .iter()
        .map(|n| {
            union
                .iter()
                .position(|u| u == n)
                .expect("connected factor index is in the union by construction")
        })
        .collect()
}

fn union_of(spec: &ModelSpec, nu: usize) -> (Vec<String>, Vec<usize>) {
    let obs = &spec.observations()[nu];
    let mut union = obs.indices.clone();
    union.extend(spec.latent_indices(nu).iter().cloned());
    let shape = spec.space().shape_of(&union).expect("validated");
    (union, shape)
}

/// Brute-force reference for [`reconstruct_observed`]: evaluate the model
/// estimate at every cell of observation `nu` by literal nested loops over
/// all index configurations.
pub fn dense_reconstruct(
    spec: &ModelSpec,
    factors: &[Factor],
    view: FactorView,
    nu: usize,
) -> Result<DenseTensor> {
    check_factors_conform(spec, factors)?;
    let (union, union_shape) = union_of(spec, nu);
    let cells = cell_count(&union_shape);
    if cells > DENSE_CELL_LIMIT {
        return Err(Error::TooLargeToMaterialize {
            cells,
            limit: DENSE_CELL_LIMIT,
        });
    }
    let obs = &spec.observations()[nu];
    let ndim0 = obs.indices.len();
    let mut out = DenseTensor::zeros(obs.indices.clone(), spec.observation_shape(nu));
    let conn = spec.connected_factors(nu);
    let positions: Vec<Vec<usize>> = conn
        .iter()
        .map(|&fpos| union_positions(&spec.factors()[fpos].indices, &union))
        .collect();
    let fields: Vec<&[f64]> = conn
        .iter()
        .map(|&fpos| factors[fpos].field(view))
        .collect::<Result<_>>()?;
    let strides: Vec<Vec<usize>> = conn
        .iter()
        .map(|&fpos| row_major_strides(factors[fpos].shape()))
        .collect();
    let mut fcoord: Vec<u32> = Vec::new();
    for_each_config(&union_shape, |cfg| {
        let mut prod = 1.0;
        for (slot, _) in conn.iter().enumerate() {
            fcoord.clear();
            fcoord.extend(positions[slot].iter().map(|&p| cfg[p]));
            prod *= fields[slot][linear_index(&fcoord, &strides[slot])];
        }
        let lin = out.linear(&cfg[..ndim0]);
        out.values_mut()[lin] += prod;
    });
    Ok(out)
}

/// Brute-force reference for [`delta`]: literal nested-loop evaluation over
/// all index configurations, with `q` given densely over the observation
/// cells (zeros where masked out).
pub fn dense_delta(
    spec: &ModelSpec,
    factors: &[Factor],
    view: FactorView,
    nu: usize,
    alpha: usize,
    q: &DenseTensor,
) -> Result<DenseTensor> {
    check_factors_conform(spec, factors)?;
    let obs = &spec.observations()[nu];
    if q.indices() != obs.indices.as_slice() || q.shape() != spec.observation_shape(nu).as_slice()
    {
        return Err(Error::ShapeMismatch(format!(
            "Q over {:?} does not match observation '{}' over {:?}",
            q.indices(),
            obs.name,
            obs.indices
        )));
    }
    if !spec.coupling(nu, alpha) {
        return Err(Error::FactorNotConnected {
            factor: spec.factors()[alpha].name.clone(),
            observation: obs.name.clone(),
        });
    }
    let (union, union_shape) = union_of(spec, nu);
    let cells = cell_count(&union_shape);
    if cells > DENSE_CELL_LIMIT {
        return Err(Error::TooLargeToMaterialize {
            cells,
            limit: DENSE_CELL_LIMIT,
        });
    }
    let ndim0 = obs.indices.len();
    let target = &spec.factors()[alpha];
    let mut out = DenseTensor::zeros(
        target.indices.clone(),
        spec.space().shape_of(&target.indices)?,
    );
    let target_positions = union_positions(&target.indices, &union);
    let conn: Vec<usize> = spec
        .connected_factors(nu)
        .iter()
        .copied()
        .filter(|&fpos| fpos != alpha)
        .collect();
    let positions: Vec<Vec<usize>> = conn
        .iter()
        .map(|&fpos| union_positions(&spec.factors()[fpos].indices, &union))
        .collect();
    let fields: Vec<&[f64]> = conn
        .iter()
        .map(|&fpos| factors[fpos].field(view))
        .collect::<Result<_>>()?;
    let strides: Vec<Vec<usize>> = conn
        .iter()
        .map(|&fpos| row_major_strides(factors[fpos].shape()))
        .collect();
    let mut fcoord: Vec<u32> = Vec::new();
    for_each_config(&union_shape, |cfg| {
        let qv = q.get(&cfg[..ndim0]);
        let mut prod = qv;
        for (slot, _) in conn.iter().enumerate() {
            fcoord.clear();
            fcoord.extend(positions[slot].iter().map(|&p| cfg[p]));
            prod *= fields[slot][linear_index(&fcoord, &strides[slot])];
        }
        fcoord.clear();
        fcoord.extend(target_positions.iter().map(|&p| cfg[p]));
        let lin = out.linear(&fcoord);
        out.values_mut()[lin] += prod;
    });
    Ok(out)
}
