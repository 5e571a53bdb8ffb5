//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::scalar::{c, Float};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T: Float> {
    pub config: AdamConfig,
    m: ParamSet<T>,
    v: ParamSet<T>,
    t: u64,
}

pub fn global_norm<T: Float>(grads: &ParamSet<T>) -> f64 {
    grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|x| {
            let x = x.to_f64_lossy();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

impl<T: Float> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            m: ParamSet::new(),
            v: ParamSet::new(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update and returns the pre-clipping gradient norm.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> f64 {
        let norm = global_norm(grads);
        let clip = match self.config.clip_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let step = c::<T>(learning_rate * bc2.sqrt() / bc1);
        let (b1, b2, e, k) = (c::<T>(beta1), c::<T>(beta2), c::<T>(eps), c::<T>(clip));
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if self.m.get(name).is_none() {
                self.m.insert_zeros(name, p.nrows(), p.ncols());
                self.v.insert_zeros(name, p.nrows(), p.ncols());
            }
            let m = self.m.get_mut(name).expect("initialized");
            let v = self.v.get_mut(name).expect("initialized");
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    let g = g * k;
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + e);
                });
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = ParamSet::<f64>::new();
        p.insert("x", array![[3.0, -2.0]]);
        let mut opt = Adam::new(AdamConfig {
            learning_rate: 0.1,
            ..Default::default()
        });
        for _ in 0..500 {
            let mut g = ParamSet::new();
            g.insert("x", p.tensor("x").mapv(|v| 2.0 * v));
            opt.step(&mut p, &g);
        }
        assert!(p.tensor("x").iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = ParamSet::<f64>::new();
        p.insert("x", array![[1.0]]);
        let mut opt = Adam::new(AdamConfig {
            learning_rate: 0.01,
            clip_norm: None,
            ..Default::default()
        });
        let mut g = ParamSet::new();
        g.insert("x", array![[123.0]]);
        opt.step(&mut p, &g);
        assert!((p.tensor("x")[[0, 0]] - 0.99).abs() < 1e-9);
    }

    #[test]
    fn clipping_reports_raw_norm() {
        let mut p = ParamSet::<f64>::new();
        p.insert("x", array![[0.0, 0.0]]);
        let mut g = ParamSet::new();
        g.insert("x", array![[3.0, 4.0]]);
        let mut opt = Adam::new(AdamConfig::default());
        assert!((opt.step(&mut p, &g) - 5.0).abs() < 1e-12);
    }
}
