//! Named parameter tensors and their binding into a [`Graph`].

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, Var};
use crate::scalar::{c, Float};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T: Float> {
    tensors: BTreeMap<String, Array2<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub shape: [usize; 2],
}

impl<T: Float> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<T>) {
        self.tensors.insert(name.into(), value);
    }

    /// Uniform Glorot initialization.
    pub fn insert_glorot<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        self.insert_uniform(name, rows, cols, limit, rng);
    }

    /// Uniform in `±1/√rows`, scaled by the fan-in of a `rows × cols` weight.
    pub fn insert_fan_in<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) {
        let limit = 1.0 / (rows.max(1) as f64).sqrt();
        self.insert_uniform(name, rows, cols, limit, rng);
    }

    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        limit: f64,
        rng: &mut R,
    ) {
        let v = Array2::from_shape_fn((rows, cols), |_| c::<T>(rng.random_range(-limit..=limit)));
        self.insert(name, v);
    }

    pub fn insert_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Array2::zeros((rows, cols)));
    }

    pub fn get(&self, name: &str) -> Option<&Array2<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<T>> {
        self.tensors.get_mut(name)
    }

    /// Panics on unknown names; parameter names are fixed by model code.
    pub fn tensor(&self, name: &str) -> &Array2<T> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array2<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Array2<T>)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn shapes(&self) -> Vec<TensorShape> {
        self.tensors
            .iter()
            .map(|(n, t)| TensorShape {
                name: n.clone(),
                shape: [t.nrows(), t.ncols()],
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Float>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| (n.clone(), t.mapv(|v| U::from_f64_lossy(v.to_f64_lossy()))))
                .collect(),
        }
    }

    /// Largest absolute element-wise difference over tensors present in both.
    pub fn max_abs_diff(&self, other: &ParamSet<T>) -> T {
        let mut m = T::zero();
        for (n, a) in &self.tensors {
            if let Some(b) = other.tensors.get(n) {
                for (x, y) in a.iter().zip(b.iter()) {
                    m = m.max((*x - *y).abs());
                }
            }
        }
        m
    }

    /// Places every tensor on the tape as a leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(n, t)| (n.clone(), g.leaf(t.clone())))
                .collect(),
        }
    }
}

/// Tape handles for a bound [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Collects parameter gradients, zero-filling parameters the loss did not touch.
    pub fn gradients<T: Float>(
        &self,
        g: &Graph<T>,
        grads: &mut Gradients<T>,
    ) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (n, &v) in &self.vars {
            let d = grads.take(v).unwrap_or_else(|| {
                let (r, c) = g.shape(v);
                Array2::zeros((r, c))
            });
            out.insert(n.clone(), d);
        }
        out
    }
}
