use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    MeanVar,
    MinMax,
}

/// Per-dimension affine normalization. For `mean_var`, `a` is the mean and `b`
/// the (population) standard deviation; for `min_max`, `a` is the minimum and
/// `b` the maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub kind: NormKind,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl NormalizationStats {
    /// Zero-variance dimensions get a unit standard deviation.
    pub fn fit_mean_var<T: Float>(frames: ArrayView2<'_, T>) -> Result<Self> {
        let n = frames.nrows();
        if n == 0 {
            return Err(Error::Empty("no frames to fit normalization"));
        }
        let mut a = Vec::with_capacity(frames.ncols());
        let mut b = Vec::with_capacity(frames.ncols());
        for col in frames.axis_iter(Axis(1)) {
            let mean = col.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n as f64;
            let var = col
                .iter()
                .map(|v| (v.to_f64_lossy() - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let std = var.sqrt();
            a.push(mean);
            b.push(if std > 1e-12 { std } else { 1.0 });
        }
        Ok(NormalizationStats {
            kind: NormKind::MeanVar,
            a,
            b,
        })
    }

    pub fn fit_min_max<T: Float>(frames: ArrayView2<'_, T>) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::Empty("no frames to fit normalization"));
        }
        let mut a = Vec::with_capacity(frames.ncols());
        let mut b = Vec::with_capacity(frames.ncols());
        for col in frames.axis_iter(Axis(1)) {
            let lo = col.iter().map(|v| v.to_f64_lossy()).fold(f64::INFINITY, f64::min);
            let hi = col
                .iter()
                .map(|v| v.to_f64_lossy())
                .fold(f64::NEG_INFINITY, f64::max);
            a.push(lo);
            b.push(hi);
        }
        Ok(NormalizationStats {
            kind: NormKind::MinMax,
            a,
            b,
        })
    }

    /// Fits over several matrices as one pooled frame set.
    pub fn fit_pooled<T: Float>(kind: NormKind, mats: &[ArrayView2<'_, T>]) -> Result<Self> {
        let dim = mats
            .first()
            .ok_or(Error::Empty("no matrices to fit normalization"))?
            .ncols();
        let rows: usize = mats.iter().map(|m| m.nrows()).sum();
        let mut all = Array2::<T>::zeros((rows, dim));
        let mut r = 0;
        for m in mats {
            if m.ncols() != dim {
                return Err(Error::Shape(format!("expected {dim} columns, got {}", m.ncols())));
            }
            all.slice_mut(ndarray::s![r..r + m.nrows(), ..]).assign(m);
            r += m.nrows();
        }
        match kind {
            NormKind::MeanVar => Self::fit_mean_var(all.view()),
            NormKind::MinMax => Self::fit_min_max(all.view()),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::Shape(format!(
                "normalization stats have {} dims, data has {cols}",
                self.dim()
            )));
        }
        Ok(())
    }

    fn degenerate(&self, j: usize) -> bool {
        self.kind == NormKind::MinMax && self.b[j] <= self.a[j]
    }

    /// Min-max maps constant dimensions to 0.5.
    pub fn apply<T: Float>(&self, frames: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check(frames.ncols())?;
        let mut out = frames.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (a, b) = (self.a[j], self.b[j]);
            let degenerate = self.degenerate(j);
            col.mapv_inplace(|v| {
                let x = v.to_f64_lossy();
                let y = match self.kind {
                    NormKind::MeanVar => (x - a) / b,
                    NormKind::MinMax if degenerate => 0.5,
                    NormKind::MinMax => (x - a) / (b - a),
                };
                T::from_f64_lossy(y)
            });
        }
        Ok(out)
    }

    pub fn invert<T: Float>(&self, frames: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check(frames.ncols())?;
        let mut out = frames.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (a, b) = (self.a[j], self.b[j]);
            let degenerate = self.degenerate(j);
            col.mapv_inplace(|v| {
                let y = v.to_f64_lossy();
                let x = match self.kind {
                    NormKind::MeanVar => y * b + a,
                    NormKind::MinMax if degenerate => a,
                    NormKind::MinMax => y * (b - a) + a,
                };
                T::from_f64_lossy(x)
            });
        }
        Ok(out)
    }
}
