//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the nodes in reverse creation order, which is a
//! valid topological order because inputs always precede their consumers.

use ndarray::{s, Array2, Axis};

use crate::scalar::{c, Float};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T: Float> {
    Leaf,
    MatMul(Var, Var),
    Affine(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LnFloor(Var, T),
    GatedTanh(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    SelectRows(Var, Vec<usize>),
    ShiftRows(Var, usize),
    Transpose(Var),
    SoftmaxRows(Var),
    Im2Col(Var, usize),
    SumOf(Vec<Var>),
    SumAll(Var),
    MaskedL1 {
        pred: Var,
        target: Array2<T>,
        mask: Array2<T>,
    },
    MaskedSquare {
        pred: Var,
        target: Array2<T>,
        mask: Array2<T>,
    },
    BceWithLogits {
        logits: Var,
        target: Array2<T>,
        mask: Array2<T>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        target: Vec<usize>,
        probs: Array2<T>,
    },
}

struct Node<T: Float> {
    value: Array2<T>,
    op: Op<T>,
}

pub struct Graph<T: Float> {
    nodes: Vec<Node<T>>,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Parameters and constants alike; gradients are available for every leaf.
    pub fn leaf(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.leaf(Array2::zeros((rows, cols)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `x · w + b` with `b` a single row broadcast over `x`'s rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let mut v = self.value(x).dot(self.value(w));
        v += self.value(b);
        self.push(v, Op::Affine(x, w, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.tanh());
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a))
    }

    /// `ln(max(a, floor))`; the gradient is zero where the floor is active.
    pub fn ln_floor(&mut self, a: Var, floor: T) -> Var {
        let v = self.value(a).mapv(|x| x.max(floor).ln());
        self.push(v, Op::LnFloor(a, floor))
    }

    /// `tanh(z[:, :h]) ⊙ σ(z[:, h:])` for `z` with `2h` columns.
    pub fn gated_tanh(&mut self, z: Var) -> Var {
        let zv = self.value(z);
        let h = zv.ncols() / 2;
        let mut v = zv.slice(s![.., ..h]).mapv(|x| x.tanh());
        v.zip_mut_with(&zv.slice(s![.., h..]), |a, &b| *a *= sigmoid(b));
        self.push(v, Op::GatedTanh(z))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start, end))
    }

    /// Gathers rows by index (embedding lookup).
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), idx);
        self.push(v, Op::SelectRows(a, idx.to_vec()))
    }

    /// Delays rows by `d`: `out[t] = a[t - d]`, zero for `t < d`.
    pub fn shift_rows(&mut self, a: Var, d: usize) -> Var {
        let av = self.value(a);
        let (n, m) = av.dim();
        let mut v = Array2::zeros((n, m));
        if d < n {
            v.slice_mut(s![d.., ..]).assign(&av.slice(s![..n - d, ..]));
        }
        self.push(v, Op::ShiftRows(a, d))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Turns a `1 × L` row into `L × k` windows centered on each position
    /// (zero padded), for a location-sensitive convolution.
    pub fn im2col(&mut self, a: Var, k: usize) -> Var {
        let av = self.value(a);
        let l = av.ncols();
        let pad = k / 2;
        let mut v = Array2::zeros((l, k));
        for j in 0..l {
            for i in 0..k {
                let src = j as isize + i as isize - pad as isize;
                if src >= 0 && (src as usize) < l {
                    v[[j, i]] = av[[0, src as usize]];
                }
            }
        }
        self.push(v, Op::Im2Col(a, k))
    }

    pub fn sum_of(&mut self, parts: &[Var]) -> Var {
        let mut v = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            v += self.value(p);
        }
        self.push(v, Op::SumOf(parts.to_vec()))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a))
    }

    /// `Σ mask · |pred − target|` as a 1×1 node.
    pub fn masked_l1(&mut self, pred: Var, target: Array2<T>, mask: Array2<T>) -> Var {
        let p = self.value(pred);
        let mut s = T::zero();
        ndarray::Zip::from(p)
            .and(&target)
            .and(&mask)
            .for_each(|&a, &b, &m| s += m * (a - b).abs());
        self.push(Array2::from_elem((1, 1), s), Op::MaskedL1 { pred, target, mask })
    }

    /// `Σ mask · (pred − target)²` as a 1×1 node.
    pub fn masked_square(&mut self, pred: Var, target: Array2<T>, mask: Array2<T>) -> Var {
        let p = self.value(pred);
        let mut s = T::zero();
        ndarray::Zip::from(p)
            .and(&target)
            .and(&mask)
            .for_each(|&a, &b, &m| s += m * (a - b) * (a - b));
        self.push(Array2::from_elem((1, 1), s), Op::MaskedSquare { pred, target, mask })
    }

    /// Masked sum of binary cross-entropy on logits.
    pub fn bce_with_logits(&mut self, logits: Var, target: Array2<T>, mask: Array2<T>) -> Var {
        let x = self.value(logits);
        let mut s = T::zero();
        ndarray::Zip::from(x)
            .and(&target)
            .and(&mask)
            .for_each(|&x, &t, &m| {
                let l = x.max(T::zero()) - x * t + (T::one() + (-x.abs()).exp()).ln();
                s += m * l;
            });
        self.push(Array2::from_elem((1, 1), s), Op::BceWithLogits { logits, target, mask })
    }

    /// Sum over rows of `−log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &[usize]) -> Var {
        let x = self.value(logits);
        let mut probs = x.clone();
        let mut s = T::zero();
        for (mut row, &t) in probs.rows_mut().into_iter().zip(target) {
            let m = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let z = row.sum();
            s += z.ln() - (row[t].ln());
            row.mapv_inplace(|v| v / z);
        }
        self.push(
            Array2::from_elem((1, 1), s),
            Op::SoftmaxCrossEntropy {
                logits,
                target: target.to_vec(),
                probs,
            },
        )
    }

    /// Gradients of the 1×1 node `loss` with respect to every node; entries
    /// for intermediate nodes are released as soon as they are propagated, so
    /// only leaf gradients survive in the result.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Array2<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Array2::ones(self.nodes[loss.0].value.dim()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node<T>, g: &Array2<T>, grads: &mut [Option<Array2<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(grads, *a, g.dot(&val(*b).t()));
                acc(grads, *b, val(*a).t().dot(g));
            }
            Op::Affine(x, w, b) => {
                acc(grads, *x, g.dot(&val(*w).t()));
                acc(grads, *w, val(*x).t().dot(g));
                acc(grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Add(a, b) => {
                acc_ref(grads, *a, g);
                acc_ref(grads, *b, g);
            }
            Op::Sub(a, b) => {
                acc_ref(grads, *a, g);
                acc(grads, *b, g.mapv(|v| -v));
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g * val(*b));
                acc(grads, *b, g * val(*a));
            }
            Op::AddRow(a, r) => {
                acc_ref(grads, *a, g);
                acc(grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Scale(a, k) => acc(grads, *a, g * *k),
            Op::Sigmoid(a) => {
                let y = &node.value;
                let mut d = g.clone();
                d.zip_mut_with(y, |d, &y| *d = *d * y * (T::one() - y));
                acc(grads, *a, d);
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let mut d = g.clone();
                d.zip_mut_with(y, |d, &y| *d *= T::one() - y * y);
                acc(grads, *a, d);
            }
            Op::Relu(a) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |d, &x| {
                    if x <= T::zero() {
                        *d = T::zero()
                    }
                });
                acc(grads, *a, d);
            }
            Op::LnFloor(a, floor) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |d, &x| *d = if x > *floor { *d / x } else { T::zero() });
                acc(grads, *a, d);
            }
            Op::GatedTanh(z) => {
                let zv = val(*z);
                let h = zv.ncols() / 2;
                let mut d = Array2::zeros(zv.dim());
                for r in 0..zv.nrows() {
                    for j in 0..h {
                        let th = zv[[r, j]].tanh();
                        let sg = sigmoid(zv[[r, j + h]]);
                        let gr = g[[r, j]];
                        d[[r, j]] = gr * sg * (T::one() - th * th);
                        d[[r, j + h]] = gr * th * sg * (T::one() - sg);
                    }
                }
                acc(grads, *z, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = val(p).ncols();
                    acc(grads, p, g.slice(s![.., off..off + w]).to_owned());
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let h = val(p).nrows();
                    acc(grads, p, g.slice(s![off..off + h, ..]).to_owned());
                    off += h;
                }
            }
            Op::SliceCols(a, st, en) => {
                let mut d = Array2::zeros(val(*a).dim());
                d.slice_mut(s![.., *st..*en]).assign(g);
                acc(grads, *a, d);
            }
            Op::SliceRows(a, st, en) => {
                let mut d = Array2::zeros(val(*a).dim());
                d.slice_mut(s![*st..*en, ..]).assign(g);
                acc(grads, *a, d);
            }
            Op::SelectRows(a, idx) => {
                let mut d = Array2::zeros(val(*a).dim());
                for (r, &i) in idx.iter().enumerate() {
                    let mut row = d.row_mut(i);
                    row += &g.row(r);
                }
                acc(grads, *a, d);
            }
            Op::ShiftRows(a, dly) => {
                let (n, m) = g.dim();
                let mut d = Array2::zeros((n, m));
                if *dly < n {
                    d.slice_mut(s![..n - dly, ..]).assign(&g.slice(s![*dly.., ..]));
                }
                acc(grads, *a, d);
            }
            Op::Transpose(a) => acc(grads, *a, g.t().to_owned()),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = g * y;
                for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                    let s = drow.sum();
                    drow.zip_mut_with(&yrow, |dv, &yv| *dv -= yv * s);
                }
                acc(grads, *a, d);
            }
            Op::Im2Col(a, k) => {
                let l = val(*a).ncols();
                let pad = k / 2;
                let mut d = Array2::zeros((1, l));
                for j in 0..l {
                    for i in 0..*k {
                        let src = j as isize + i as isize - pad as isize;
                        if src >= 0 && (src as usize) < l {
                            d[[0, src as usize]] += g[[j, i]];
                        }
                    }
                }
                acc(grads, *a, d);
            }
            Op::SumOf(parts) => {
                for &p in parts {
                    acc_ref(grads, p, g);
                }
            }
            Op::SumAll(a) => {
                let k = g[[0, 0]];
                acc(grads, *a, Array2::from_elem(val(*a).dim(), k));
            }
            Op::MaskedL1 { pred, target, mask } => {
                let k = g[[0, 0]];
                let mut d = val(*pred) - target;
                d.zip_mut_with(mask, |dv, &m| {
                    let sgn = if *dv > T::zero() {
                        T::one()
                    } else if *dv < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    *dv = sgn * m * k;
                });
                acc(grads, *pred, d);
            }
            Op::MaskedSquare { pred, target, mask } => {
                let k = g[[0, 0]] * c::<T>(2.0);
                let mut d = val(*pred) - target;
                d.zip_mut_with(mask, |dv, &m| *dv = *dv * m * k);
                acc(grads, *pred, d);
            }
            Op::BceWithLogits {
                logits,
                target,
                mask,
            } => {
                let k = g[[0, 0]];
                let mut d = val(*logits).mapv(sigmoid);
                ndarray::Zip::from(&mut d)
                    .and(target)
                    .and(mask)
                    .for_each(|dv, &t, &m| *dv = (*dv - t) * m * k);
                acc(grads, *logits, d);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            } => {
                let k = g[[0, 0]];
                let mut d = probs.clone();
                for (r, &t) in target.iter().enumerate() {
                    d[[r, t]] -= T::one();
                }
                d.mapv_inplace(|v| v * k);
                acc(grads, *logits, d);
            }
        }
    }
}

fn acc<T: Float>(grads: &mut [Option<Array2<T>>], v: Var, d: Array2<T>) {
    match &mut grads[v.0] {
        Some(g) => *g += &d,
        slot @ None => *slot = Some(d),
    }
}

fn acc_ref<T: Float>(grads: &mut [Option<Array2<T>>], v: Var, d: &Array2<T>) {
    match &mut grads[v.0] {
        Some(g) => *g += d,
        slot @ None => *slot = Some(d.clone()),
    }
}

pub struct Gradients<T: Float> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Builds a scalar loss from leaf `x` through `f` and checks d loss / d x
    /// against central differences.
    fn check(x0: Array2<f64>, f: impl Fn(&mut Graph<f64>, Var) -> Var) {
        let mut g = Graph::new();
        let x = g.leaf(x0.clone());
        let y = f(&mut g, x);
        let loss = g.sum_all(y);
        let grads = g.backward(loss);
        let analytic = grads.get(x).cloned().unwrap_or_else(|| Array2::zeros(x0.dim()));
        let h = 1e-6;
        for idx in 0..x0.len() {
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                xp.as_slice_mut().unwrap()[idx] += delta;
                let mut g = Graph::new();
                let x = g.leaf(xp);
                let y = f(&mut g, x);
                let l = g.sum_all(y);
                g.scalar(l)
            };
            let num = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.as_slice().unwrap()[idx];
            assert!((a - num).abs() <= 1e-6 * (1.0 + num.abs()), "idx {idx}: {a} vs {num}");
        }
    }

    #[test]
    fn elementwise_and_matrix_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = rand_mat(&mut rng, 4, 3);
        let b = rand_mat(&mut rng, 1, 3);
        check(rand_mat(&mut rng, 2, 4), |g, x| {
            let w = g.leaf(w.clone());
            let b = g.leaf(b.clone());
            let a = g.affine(x, w, b);
            let t = g.tanh(a);
            let s = g.sigmoid(x);
            let m = g.matmul(s, w);
            let p = g.mul(t, m);
            let r = g.relu(p);
            let q = g.sub(p, r);
            g.scale(q, 3.0)
        });
    }

    #[test]
    fn structural_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let weights = rand_mat(&mut rng, 3, 5);
        check(rand_mat(&mut rng, 6, 4), |g, x| {
            let a = g.slice_cols(x, 1, 3);
            let b = g.slice_rows(x, 2, 5);
            let bt = g.transpose(b);
            let c = g.concat_cols(&[x, a]);
            let sh = g.shift_rows(c, 2);
            let sel = g.select_rows(sh, &[0, 3, 3, 5]);
            let gt = g.gated_tanh(sel);
            let cr = g.concat_rows(&[bt, bt]);
            let w = g.leaf(weights.clone());
            let cw = g.matmul(cr, w);
            let z = g.sum_all(gt);
            let z2 = g.sum_all(cw);
            g.sum_of(&[z, z2, z])
        });
    }

    #[test]
    fn softmax_and_im2col() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let proj = rand_mat(&mut rng, 3, 7);
        check(rand_mat(&mut rng, 1, 7), |g, x| {
            let sm = g.softmax_rows(x);
            let lg = g.ln_floor(sm, 1e-3);
            let sm = g.add(sm, lg);
            let cols = g.im2col(sm, 3);
            let w = g.leaf(proj.clone());
            let y = g.matmul(cols, w);
            g.tanh(y)
        });
    }

    #[test]
    fn losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = rand_mat(&mut rng, 3, 4);
        let mask = array![[1.0, 0.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 1.0, 0.5]];
        let bin = mask.mapv(|v: f64| if v > 0.6 { 1.0 } else { 0.0 });
        check(rand_mat(&mut rng, 3, 4), |g, x| {
            let a = g.masked_l1(x, target.clone(), mask.clone());
            let b = g.masked_square(x, target.clone(), mask.clone());
            let c = g.bce_with_logits(x, bin.clone(), mask.clone());
            let d = g.softmax_cross_entropy(x, &[0, 3, 1]);
            g.sum_of(&[a, b, c, d])
        });
    }

    #[test]
    fn softmax_rows_normalize() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(array![[1000.0, 1000.0], [0.0, -1000.0]]);
        let y = g.softmax_rows(x);
        assert_eq!(g.value(y), &array![[0.5, 0.5], [1.0, 0.0]]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_classes() {
        let mut g = Graph::<f64>::new();
        let x = g.zeros(5, 256);
        let l = g.softmax_cross_entropy(x, &[0, 1, 2, 3, 255]);
        assert!((g.scalar(l) / 5.0 - 256f64.ln()).abs() < 1e-12);
    }
}
