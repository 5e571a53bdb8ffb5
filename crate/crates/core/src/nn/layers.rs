//! Dense, GRU and LSTM building blocks expressed on the tape.
//!
//! Recurrent cells take the input projection precomputed for a whole
//! sequence, so each time step only multiplies the hidden state.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{Bound, ParamSet};
use crate::scalar::Float;

#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: Var,
    pub b: Var,
}

impl Dense {
    pub fn init<T: Float, R: Rng>(p: &mut ParamSet<T>, prefix: &str, i: usize, o: usize, rng: &mut R) {
        p.insert_fan_in(&format!("{prefix}.w"), i, o, rng);
        p.insert_zeros(&format!("{prefix}.b"), 1, o);
    }

    pub fn bind(b: &Bound, prefix: &str) -> Self {
        Dense {
            w: b.var(&format!("{prefix}.w")),
            b: b.var(&format!("{prefix}.b")),
        }
    }

    pub fn apply<T: Float>(&self, g: &mut Graph<T>, x: Var) -> Var {
        g.affine(x, self.w, self.b)
    }
}

/// Gated recurrent unit; gate column order is reset, update, candidate.
#[derive(Debug, Clone, Copy)]
pub struct Gru {
    pub input: Dense,
    pub hidden: Dense,
    pub size: usize,
}

impl Gru {
    pub fn init<T: Float, R: Rng>(p: &mut ParamSet<T>, prefix: &str, i: usize, h: usize, rng: &mut R) {
        Dense::init(p, &format!("{prefix}.x"), i, 3 * h, rng);
        Dense::init(p, &format!("{prefix}.h"), h, 3 * h, rng);
    }

    pub fn bind(b: &Bound, prefix: &str, size: usize) -> Self {
        Gru {
            input: Dense::bind(b, &format!("{prefix}.x")),
            hidden: Dense::bind(b, &format!("{prefix}.h")),
            size,
        }
    }

    /// Projects a whole input sequence (rows are time steps or batch rows).
    pub fn project<T: Float>(&self, g: &mut Graph<T>, x: Var) -> Var {
        self.input.apply(g, x)
    }

    pub fn step<T: Float>(&self, g: &mut Graph<T>, xp: Var, h: Var) -> Var {
        let n = self.size;
        let hp = self.hidden.apply(g, h);
        let xr = g.slice_cols(xp, 0, n);
        let xz = g.slice_cols(xp, n, 2 * n);
        let xn = g.slice_cols(xp, 2 * n, 3 * n);
        let hr = g.slice_cols(hp, 0, n);
        let hz = g.slice_cols(hp, n, 2 * n);
        let hn = g.slice_cols(hp, 2 * n, 3 * n);
        let r = g.add(xr, hr);
        let r = g.sigmoid(r);
        let z = g.add(xz, hz);
        let z = g.sigmoid(z);
        let rh = g.mul(r, hn);
        let cand = g.add(xn, rh);
        let cand = g.tanh(cand);
        let diff = g.sub(h, cand);
        let keep = g.mul(z, diff);
        g.add(cand, keep)
    }
}

/// Long short-term memory cell; gate column order is input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub input: Dense,
    pub recurrent: Var,
    pub size: usize,
}

impl Lstm {
    pub fn init<T: Float, R: Rng>(p: &mut ParamSet<T>, prefix: &str, i: usize, h: usize, rng: &mut R) {
        Dense::init(p, &format!("{prefix}.x"), i, 4 * h, rng);
        p.insert_fan_in(&format!("{prefix}.u"), h, 4 * h, rng);
        let b = p.get_mut(&format!("{prefix}.x.b")).expect("just inserted");
        b.slice_mut(ndarray::s![.., h..2 * h]).fill(T::one());
    }

    pub fn bind(b: &Bound, prefix: &str, size: usize) -> Self {
        Lstm {
            input: Dense::bind(b, &format!("{prefix}.x")),
            recurrent: b.var(&format!("{prefix}.u")),
            size,
        }
    }

    pub fn project<T: Float>(&self, g: &mut Graph<T>, x: Var) -> Var {
        self.input.apply(g, x)
    }

    /// Returns the new `(h, c)`.
    pub fn step<T: Float>(&self, g: &mut Graph<T>, xp: Var, h: Var, c: Var) -> (Var, Var) {
        let n = self.size;
        let hu = g.matmul(h, self.recurrent);
        let z = g.add(xp, hu);
        let i = g.slice_cols(z, 0, n);
        let f = g.slice_cols(z, n, 2 * n);
        let u = g.slice_cols(z, 2 * n, 3 * n);
        let o = g.slice_cols(z, 3 * n, 4 * n);
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let u = g.tanh(u);
        let o = g.sigmoid(o);
        let fc = g.mul(f, c);
        let iu = g.mul(i, u);
        let c2 = g.add(fc, iu);
        let tc = g.tanh(c2);
        let h2 = g.mul(o, tc);
        (h2, c2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gru_with_saturated_update_gate_keeps_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParamSet::<f64>::new();
        Gru::init(&mut p, "g", 2, 3, &mut rng);
        p.get_mut("g.x.b").unwrap().slice_mut(ndarray::s![.., 3..6]).fill(50.0);
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let cell = Gru::bind(&b, "g", 3);
        let x = g.leaf(Array2::from_elem((1, 2), 0.3));
        let h = g.leaf(Array2::from_shape_vec((1, 3), vec![0.1, -0.2, 0.7]).unwrap());
        let xp = cell.project(&mut g, x);
        let h2 = cell.step(&mut g, xp, h);
        for (a, b) in g.value(h2).iter().zip(g.value(h).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_state_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::<f32>::new();
        Lstm::init(&mut p, "l", 4, 5, &mut rng);
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let cell = Lstm::bind(&b, "l", 5);
        let x = g.leaf(Array2::from_elem((3, 4), 10.0));
        let xp = cell.project(&mut g, x);
        let mut h = g.zeros(3, 5);
        let mut c = g.zeros(3, 5);
        for _ in 0..20 {
            (h, c) = cell.step(&mut g, xp, h, c);
        }
        assert!(g.value(h).iter().all(|v| v.abs() <= 1.0));
    }
}
