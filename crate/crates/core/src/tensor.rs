//! Coordinate-list sparse tensors and the dense arrays used as their
//! brute-force counterpart in tests and oracles.
//!
//! A `SparseTensor` plays two roles at once: its values are the observed
//! data X and its support set is the observation mask M (a coordinate is
//! observed iff it is present, so an explicit zero entry is an observed
//! zero, not a missing cell). Entries are kept sorted in lexicographic
//! coordinate order so every downstream accumulation is reproducible.

use crate::layout::{cell_count, for_each_config, linear_index, row_major_strides};
use crate::space::IndexSpace;
use crate::{Error, Result};

/// Guard for dense materialization.
pub const DENSE_CELL_LIMIT: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    indices: Vec<String>,
    shape: Vec<usize>,
    /// Flattened coordinates, `ndim` per entry, sorted lexicographically.
    coords: Vec<u32>,
    values: Vec<f64>,
}

impl SparseTensor {
    /// Build a tensor from (coordinate, value) entries. Entries are sorted;
    /// out-of-range or duplicate coordinates and negative or non-finite
    /// values are rejected.
    pub fn new(
        indices: Vec<String>,
        shape: Vec<usize>,
        entries: Vec<(Vec<u32>, f64)>,
    ) -> Result<Self> {
        if indices.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} index names but {} cardinalities",
                indices.len(),
                shape.len()
            )));
        }
        let ndim = indices.len();
        let mut coords = Vec::with_capacity(entries.len() * ndim);
        let mut values = Vec::with_capacity(entries.len());
        for (coord, value) in &entries {
            if coord.len() != ndim {
                return Err(Error::ShapeMismatch(format!(
                    "coordinate {coord:?} has {} dims, tensor has {ndim}",
                    coord.len()
                )));
            }
            coords.extend_from_slice(coord);
            values.push(*value);
        }
        let mut t = Self {
            indices,
            shape,
            coords,
            values,
        };
        t.sort_entries();
        t.check_entries()?;
        Ok(t)
    }

    /// Build from pre-flattened parallel arrays (`coords.len() == values.len() * ndim`).
    pub fn from_flat(
        indices: Vec<String>,
        shape: Vec<usize>,
        coords: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indices.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} index names but {} cardinalities",
                indices.len(),
                shape.len()
            )));
        }
        if coords.len() != values.len() * indices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for {} values of dimension {}",
                coords.len(),
                values.len(),
                indices.len()
            )));
        }
        let mut t = Self {
            indices,
            shape,
            coords,
            values,
        };
        t.sort_entries();
        t.check_entries()?;
        Ok(t)
    }

    fn sort_entries(&mut self) {
        let ndim = self.indices.len();
        if ndim == 0 || self.values.len() < 2 {
            return;
        }
        let nnz = self.values.len();
        let mut perm: Vec<usize> = (0..nnz).collect();
        let coords = &self.coords;
        perm.sort_unstable_by(|&a, &b| coords[a * ndim..(a + 1) * ndim].cmp(&coords[b * ndim..(b + 1) * ndim]));
        if perm.windows(2).all(|w| w[0] < w[1]) {
            return; // already sorted
        }
        let mut new_coords = Vec::with_capacity(self.coords.len());
        let mut new_values = Vec::with_capacity(nnz);
        for &p in &perm {
            new_coords.extend_from_slice(&self.coords[p * ndim..(p + 1) * ndim]);
            new_values.push(self.values[p]);
        }
        self.coords = new_coords;
        self.values = new_values;
    }

    fn check_entries(&self) -> Result<()> {
        let ndim = self.indices.len();
        for (e, &value) in self.values.iter().enumerate() {
            let coord = &self.coords[e * ndim..(e + 1) * ndim];
            for (d, &c) in coord.iter().enumerate() {
                if c as usize >= self.shape[d] {
                    return Err(Error::OutOfRangeCoordinate {
                        coord: coord.to_vec(),
                        index: self.indices[d].clone(),
                        card: self.shape[d],
                    });
                }
            }
            if !value.is_finite() {
                return Err(Error::NonFiniteValue {
                    coord: coord.to_vec(),
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeValue {
                    coord: coord.to_vec(),
                    value,
                });
            }
            if e > 0 {
                let prev = &self.coords[(e - 1) * ndim..e * ndim];
                if prev == coord {
                    return Err(Error::DuplicateCoordinate {
                        coord: coord.to_vec(),
                    });
                }
            }
        }
        // a zero-dimensional tensor has at most one cell
        if ndim == 0 && self.values.len() > 1 {
            return Err(Error::DuplicateCoordinate { coord: vec![] });
        }
        Ok(())
    }

    pub fn indices(&self) -> &[String] {
        &self.indices
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.indices.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flattened coordinate array, `ndim` per entry, lexicographic order.
    pub fn coords(&self) -> &[u32] {
        &self.coords
    }

    pub fn coord(&self, entry: usize) -> &[u32] {
        let ndim = self.indices.len();
        &self.coords[entry * ndim..(entry + 1) * ndim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        (0..self.values.len()).map(|e| (self.coord(e), self.values[e]))
    }

    /// Same support, different values. Values must be nonnegative and finite.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for support of size {}",
                values.len(),
                self.values.len()
            )));
        }
        let t = Self {
            indices: self.indices.clone(),
            shape: self.shape.clone(),
            coords: self.coords.clone(),
            values,
        };
        t.check_entries()?;
        Ok(t)
    }

    /// Check this tensor against an index space: every index name must
    /// exist and the cardinalities must agree (entry-level invariants were
    /// already enforced at construction but are re-checked here so the
    /// operation stands on its own).
    pub fn validate_against(&self, space: &IndexSpace) -> Result<()> {
        for (name, &card) in self.indices.iter().zip(&self.shape) {
            let expected = space.cardinality(name)?;
            if expected != card {
                return Err(Error::ShapeMismatch(format!(
                    "index '{name}' has cardinality {card} in tensor but {expected} in space"
                )));
            }
        }
        self.check_entries()
    }

    /// Materialize as a dense array (missing cells become 0). Guarded at
    /// [`DENSE_CELL_LIMIT`] cells.
    pub fn to_dense(&self) -> Result<DenseTensor> {
        let cells = cell_count(&self.shape);
        if cells > DENSE_CELL_LIMIT {
            return Err(Error::TooLargeToMaterialize {
                cells,
                limit: DENSE_CELL_LIMIT,
            });
        }
        let mut dense = DenseTensor::zeros(self.indices.clone(), self.shape.clone());
        let ndim = self.indices.len();
        for (e, &v) in self.values.iter().enumerate() {
            let coord = &self.coords[e * ndim..(e + 1) * ndim];
            let lin = linear_index(coord, &dense.strides);
            dense.values[lin] = v;
        }
        Ok(dense)
    }
}

/// Dense row-major array over a named index subset. Used by `to_dense`, the
/// brute-force contraction oracles, and as the result type of the delta
/// operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    indices: Vec<String>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(indices: Vec<String>, shape: Vec<usize>) -> Self {
        let strides = row_major_strides(&shape);
        let len = shape.iter().product::<usize>().max(1);
        Self {
            indices,
            shape,
            strides,
            values: vec![0.0; len],
        }
    }

    pub fn from_values(indices: Vec<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected = shape.iter().product::<usize>().max(1);
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {shape:?} ({expected} cells)",
                values.len()
            )));
        }
        Ok(Self {
            strides: row_major_strides(&shape),
            indices,
            shape,
            values,
        })
    }

    pub fn indices(&self) -> &[String] {
        &self.indices
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn linear(&self, coord: &[u32]) -> usize {
        linear_index(coord, &self.strides)
    }

    pub fn get(&self, coord: &[u32]) -> f64 {
        self.values[self.linear(coord)]
    }

    pub fn set(&mut self, coord: &[u32], value: f64) {
        let lin = self.linear(coord);
        self.values[lin] = value;
    }

    /// Convert back to coordinate form. With `drop_zeros` only nonzero cells
    /// become entries; otherwise every cell does.
    pub fn to_sparse(&self, drop_zeros: bool) -> Result<SparseTensor> {
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for_each_config(&self.shape, |coord| {
            let v = self.values[linear_index(coord, &self.strides)];
            if !drop_zeros || v != 0.0 {
                coords.extend_from_slice(coord);
                values.push(v);
            }
        });
        SparseTensor::from_flat(self.indices.clone(), self.shape.clone(), coords, values)
    }
}
