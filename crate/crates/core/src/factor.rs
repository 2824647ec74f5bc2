//! Dense nonnegative factor arrays. In VB mode a factor additionally
//! carries the Gamma posterior parameters C (shape) and D (scale) together
//! with the two derived expectation fields E = C.*D and L = exp(psi(C)).*D.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::contraction::FactorView;
use crate::layout::row_major_strides;
use crate::model::PriorSpec;
use crate::space::IndexSpace;
use crate::special::digamma_raw;
use crate::{Error, Result};

/// Parallel variational fields, one value per factor cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VbFields {
    /// Posterior Gamma shape.
    pub c: Vec<f64>,
    /// Posterior Gamma scale (strictly positive).
    pub d: Vec<f64>,
    /// Posterior mean, `c * d`.
    pub e: Vec<f64>,
    /// Exponentiated posterior log-mean, `exp(psi(c)) * d`.
    pub l: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    name: String,
    indices: Vec<String>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
    vb: Option<VbFields>,
}

impl Factor {
    pub fn new(
        name: impl Into<String>,
        indices: Vec<String>,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if indices.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "factor '{name}': {} index names but {} cardinalities",
                indices.len(),
                shape.len()
            )));
        }
        let cells = shape.iter().product::<usize>().max(1);
        if values.len() != cells {
            return Err(Error::ShapeMismatch(format!(
                "factor '{name}': {} values for shape {shape:?} ({cells} cells)",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NegativeValue {
                coord: vec![],
                value: *v,
            });
        }
        Ok(Self {
            strides: row_major_strides(&shape),
            name,
            indices,
            shape,
            values,
            vb: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn indices(&self) -> &[String] {
        &self.indices
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn vb(&self) -> Option<&VbFields> {
        self.vb.as_ref()
    }

    pub fn vb_mut(&mut self) -> Option<&mut VbFields> {
        self.vb.as_mut()
    }

    /// The field a contraction reads under `view`. `E` and `L` require VB
    /// fields to be present.
    pub fn field(&self, view: FactorView) -> Result<&[f64]> {
        match view {
            FactorView::Values => Ok(&self.values),
            FactorView::E => self
                .vb
                .as_ref()
                .map(|f| f.e.as_slice())
                .ok_or_else(|| Error::MissingVbFields(self.name.clone())),
            FactorView::L => self
                .vb
                .as_ref()
                .map(|f| f.l.as_slice())
                .ok_or_else(|| Error::MissingVbFields(self.name.clone())),
        }
    }

    /// Install variational fields so that the posterior mean E equals the
    /// current values exactly: C = values * A/B, D = B/A (the prior scale),
    /// L = exp(psi(C)) * D. EM and VB runs started from the same draw then
    /// share bit-identical initial means.
    pub fn init_vb(&mut self, prior: &PriorSpec) -> Result<()> {
        prior.validate(self.len(), &self.name)?;
        let n = self.len();
        let mut c = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        let mut e = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n);
        for cell in 0..n {
            let a = prior.shape_at(cell);
            let b = prior.mean_at(cell);
            let scale = b / a;
            let shape = (self.values[cell] / scale).max(f64::MIN_POSITIVE);
            c.push(shape);
            d.push(scale);
            e.push(self.values[cell]);
            l.push(digamma_raw(shape).exp() * scale);
        }
        self.vb = Some(VbFields { c, d, e, l });
        Ok(())
    }

    /// Drop variational fields (used when re-fitting with EM).
    pub fn clear_vb(&mut self) {
        self.vb = None;
    }

    /// Check the VB field consistency invariants E = C.*D and
    /// L = exp(psi(C)).*D up to `tol` relative error.
    pub fn check_vb_consistency(&self, tol: f64) -> Result<()> {
        let Some(vb) = &self.vb else {
            return Err(Error::MissingVbFields(self.name.clone()));
        };
        for cell in 0..self.len() {
            if vb.d[cell] <= 0.0 {
                return Err(Error::InvalidPrior {
                    factor: self.name.clone(),
                    reason: format!("nonpositive scale D at cell {cell}"),
                });
            }
            let e = vb.c[cell] * vb.d[cell];
            let l = digamma_raw(vb.c[cell]).exp() * vb.d[cell];
            if (vb.e[cell] - e).abs() > tol * e.abs().max(1.0)
                || (vb.l[cell] - l).abs() > tol * l.abs().max(1.0)
            {
                return Err(Error::ShapeMismatch(format!(
                    "factor '{}': VB fields inconsistent at cell {cell}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Draw a factor over `indices` from its Gamma prior: values are i.i.d.
/// Gamma(shape A, mean B), strictly positive (exact zeros are resampled),
/// deterministic for a fixed seed.
pub fn init_factor(
    name: impl Into<String>,
    indices: &[String],
    space: &IndexSpace,
    seed: u64,
    prior: &PriorSpec,
) -> Result<Factor> {
    let name = name.into();
    let shape = space.shape_of(indices)?;
    let cells = shape.iter().product::<usize>().max(1);
    prior.validate(cells, &name)?;
    if !prior.is_finite() {
        return Err(Error::InvalidPrior {
            factor: name,
            reason: "sampling requires finite prior parameters".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(cells);
    for cell in 0..cells {
        let a = prior.shape_at(cell);
        let b = prior.mean_at(cell);
        let gamma = Gamma::new(a, b / a).map_err(|e| Error::InvalidPrior {
            factor: name.clone(),
            reason: e.to_string(),
        })?;
        let mut draw = gamma.sample(&mut rng);
        while draw <= 0.0 {
            draw = gamma.sample(&mut rng);
        }
        values.push(draw);
    }
    Factor::new(name, indices.to_vec(), shape, values)
}
