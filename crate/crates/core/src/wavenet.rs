//! Autoregressive vocoder over 8-bit µ-law codes.
//!
//! A 1×1 embedding of the previous sample feeds stacks of dilated causal
//! convolutions with gated tanh units, residual and skip connections, and a
//! two-layer ReLU output head producing 256-way logits. Every layer receives
//! a projection of the per-sample conditioning track.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{MuLawCodec, NormalizationStats, Waveform, MU_LAW_LEVELS};
use crate::nn::{Bound, Checkpoint, Dense, Graph, LossReport, ModelKind, ParamSet, Trainable, Var};
use crate::scalar::{c, Float};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveNetConfig {
    pub stacks: usize,
    pub layers_per_stack: usize,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub output_classes: usize,
    pub filter_width: usize,
    pub conditioning_dim: usize,
    /// Training excerpt length in samples.
    pub excerpt_len: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl WaveNetConfig {
    /// Three stacks of ten layers, 64 residual and 128 skip channels.
    pub fn standard(conditioning_dim: usize) -> Self {
        WaveNetConfig {
            stacks: 3,
            layers_per_stack: 10,
            residual_channels: 64,
            skip_channels: 128,
            output_classes: MU_LAW_LEVELS,
            filter_width: 2,
            conditioning_dim,
            excerpt_len: 4000,
            batch_size: 4,
            learning_rate: 1e-3,
        }
    }

    pub fn toy(conditioning_dim: usize) -> Self {
        WaveNetConfig {
            stacks: 2,
            layers_per_stack: 6,
            residual_channels: 16,
            skip_channels: 32,
            excerpt_len: 1000,
            batch_size: 2,
            learning_rate: 2e-3,
            ..Self::standard(conditioning_dim)
        }
    }

    pub fn n_layers(&self) -> usize {
        self.stacks * self.layers_per_stack
    }

    pub fn dilation(&self, layer: usize) -> usize {
        1 << (layer % self.layers_per_stack)
    }

    /// Samples of history the prediction of one sample can depend on.
    pub fn receptive_field(&self) -> usize {
        self.stacks * ((1 << self.layers_per_stack) - 1) * (self.filter_width - 1) + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.stacks == 0 || self.layers_per_stack == 0 || self.filter_width == 0 {
            return Err(Error::Config("wavenet stacks, layers and filter width must be positive".into()));
        }
        if self.residual_channels == 0 || self.skip_channels == 0 || self.conditioning_dim == 0 {
            return Err(Error::Config("wavenet channel counts must be positive".into()));
        }
        if self.output_classes != MU_LAW_LEVELS {
            return Err(Error::Config(format!("output_classes must be {MU_LAW_LEVELS}")));
        }
        if self.layers_per_stack > 20 {
            return Err(Error::Config("layers_per_stack above 20 is not supported".into()));
        }
        Ok(())
    }
}

/// Linear interpolation between frame centers `(t + ½)·hop`, clamped at the
/// ends; columns listed in `binary_cols` are held from the nearest frame.
pub fn upsample_conditioning(
    frames: ArrayView2<'_, f32>,
    frame_shift_ms: f32,
    n_samples: usize,
    binary_cols: &[usize],
) -> Result<Array2<f32>> {
    let hop = (frame_shift_ms as f64 * 16.0).round() as usize;
    if hop == 0 {
        return Err(Error::Config("frame shift too small".into()));
    }
    let needed = n_samples.div_ceil(hop);
    let (n_frames, dim) = frames.dim();
    if n_frames < needed.max(1) {
        return Err(Error::Shape(format!(
            "{n_frames} frames cannot cover {n_samples} samples (need {needed})"
        )));
    }
    let mut out = Array2::zeros((n_samples, dim));
    let half = hop as f64 / 2.0;
    for i in 0..n_samples {
        let pos = ((i as f64 - half) / hop as f64).clamp(0.0, (n_frames - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_frames - 1);
        let w = (pos - lo as f64) as f32;
        let mut row = out.row_mut(i);
        row.assign(&frames.row(lo));
        row.zip_mut_with(&frames.row(hi), |a, &b| *a = *a * (1.0 - w) + b * w);
        let nearest = pos.round() as usize;
        for &col in binary_cols {
            row[col] = frames[[nearest, col]];
        }
    }
    Ok(out)
}

/// Codes paired with their per-sample conditioning.
#[derive(Debug, Clone)]
pub struct WaveNetExample<T: Float> {
    pub id: String,
    pub codes: Vec<usize>,
    pub cond: Array2<T>,
}

/// Random excerpts of `len` samples (the whole signal when shorter).
pub fn make_excerpts<T: Float>(
    id: &str,
    codes: &[usize],
    cond: ArrayView2<'_, f32>,
    len: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<WaveNetExample<T>> {
    let n = codes.len().min(cond.nrows());
    (0..count)
        .map(|k| {
            let l = len.min(n);
            let start = if n > l { rng.random_range(0..=n - l) } else { 0 };
            WaveNetExample {
                id: format!("{id}#{k}"),
                codes: codes[start..start + l].to_vec(),
                cond: cond.slice(s![start..start + l, ..]).mapv(T::from_f32_lossy),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    Temperature(f64),
    Argmax,
}

#[derive(Debug, Clone)]
pub struct WaveNet<T: Float> {
    pub config: WaveNetConfig,
    pub params: ParamSet<T>,
    /// Min-max statistics mapping raw acoustic frames to the [0, 1] track.
    pub cond_stats: Option<NormalizationStats>,
}

struct LayerVars {
    conv: Dense,
    cond: Var,
    res: Dense,
    skip: Dense,
}

fn sigmoid<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Float> WaveNet<T> {
    pub fn new(config: WaveNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, sk, k) = (config.residual_channels, config.skip_channels, config.filter_width);
        let mut p = ParamSet::new();
        p.insert_uniform("embed", config.output_classes, r, 1.0, &mut rng);
        for l in 0..config.n_layers() {
            Dense::init(&mut p, &format!("l{l}.conv"), k * r, 2 * r, &mut rng);
            p.insert_fan_in(&format!("l{l}.cond"), config.conditioning_dim, 2 * r, &mut rng);
            Dense::init(&mut p, &format!("l{l}.res"), r, r, &mut rng);
            Dense::init(&mut p, &format!("l{l}.skip"), r, sk, &mut rng);
        }
        Dense::init(&mut p, "out1", sk, sk, &mut rng);
        // a small output layer keeps the untrained distribution near uniform
        let limit = 0.01 / (sk as f64).sqrt();
        p.insert_uniform("out2.w", sk, config.output_classes, limit, &mut rng);
        p.insert_zeros("out2.b", 1, config.output_classes);
        Ok(WaveNet {
            config,
            params: p,
            cond_stats: None,
        })
    }

    fn check(&self, codes: &[usize], cond: ArrayView2<'_, T>) -> Result<()> {
        if codes.len() != cond.nrows() {
            return Err(Error::Shape(format!(
                "{} codes vs {} conditioning rows",
                codes.len(),
                cond.nrows()
            )));
        }
        if cond.ncols() != self.config.conditioning_dim {
            return Err(Error::Shape(format!(
                "conditioning width {} vs {}",
                cond.ncols(),
                self.config.conditioning_dim
            )));
        }
        if let Some(&bad) = codes.iter().find(|&&c| c >= self.config.output_classes) {
            return Err(Error::Shape(format!("code {bad} out of range")));
        }
        if codes.is_empty() {
            return Err(Error::Empty("no samples"));
        }
        Ok(())
    }

    /// Tape forward: logits for every position of `codes` given its past.
    fn tape_logits(&self, g: &mut Graph<T>, b: &Bound, codes: &[usize], cond: &Array2<T>) -> Var {
        let cfg = &self.config;
        let k = cfg.filter_width;
        let emb = g.select_rows(b.var("embed"), codes);
        let mut x = g.shift_rows(emb, 1);
        let cond = g.leaf(cond.clone());
        let mut skips = Vec::with_capacity(cfg.n_layers());
        for l in 0..cfg.n_layers() {
            let d = cfg.dilation(l);
            let lv = LayerVars {
                conv: Dense::bind(b, &format!("l{l}.conv")),
                cond: b.var(&format!("l{l}.cond")),
                res: Dense::bind(b, &format!("l{l}.res")),
                skip: Dense::bind(b, &format!("l{l}.skip")),
            };
            let taps: Vec<Var> = (0..k).map(|i| g.shift_rows(x, d * (k - 1 - i))).collect();
            let taps = if k == 1 { taps[0] } else { g.concat_cols(&taps) };
            let z = lv.conv.apply(g, taps);
            let zc = g.matmul(cond, lv.cond);
            let z = g.add(z, zc);
            let gated = g.gated_tanh(z);
            skips.push(lv.skip.apply(g, gated));
            let res = lv.res.apply(g, gated);
            x = g.add(x, res);
        }
        let s = g.sum_of(&skips);
        let s = g.relu(s);
        let h = Dense::bind(b, "out1").apply(g, s);
        let h = g.relu(h);
        Dense::bind(b, "out2").apply(g, h)
    }

    fn batch_loss(&self, g: &mut Graph<T>, batch: &[&WaveNetExample<T>]) -> Result<(Var, Bound)> {
        if batch.is_empty() {
            return Err(Error::Empty("empty batch"));
        }
        let b = self.params.bind(g);
        let mut parts = Vec::with_capacity(batch.len());
        let mut n = 0usize;
        for ex in batch {
            self.check(&ex.codes, ex.cond.view())?;
            let logits = self.tape_logits(g, &b, &ex.codes, &ex.cond);
            parts.push(g.softmax_cross_entropy(logits, &ex.codes));
            n += ex.codes.len();
        }
        let total = g.sum_of(&parts);
        Ok((g.scale(total, c::<T>(1.0 / n as f64)), b))
    }

    /// Teacher-forced logits computed directly with ndarray.
    pub fn forward_logits(&self, codes: &[usize], cond: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check(codes, cond)?;
        let cfg = &self.config;
        let p = &self.params;
        let (n, r, k) = (codes.len(), cfg.residual_channels, cfg.filter_width);
        let embed = p.tensor("embed");
        let mut x = Array2::<T>::zeros((n, r));
        for t in 1..n {
            x.row_mut(t).assign(&embed.row(codes[t - 1]));
        }
        let mut skip_sum = Array2::<T>::zeros((n, cfg.skip_channels));
        for l in 0..cfg.n_layers() {
            let d = cfg.dilation(l);
            let mut taps = Array2::<T>::zeros((n, k * r));
            for i in 0..k {
                let sh = d * (k - 1 - i);
                if sh < n {
                    taps.slice_mut(s![sh.., i * r..(i + 1) * r]).assign(&x.slice(s![..n - sh, ..]));
                }
            }
            let mut z = taps.dot(p.tensor(&format!("l{l}.conv.w")));
            z += p.tensor(&format!("l{l}.conv.b"));
            z += &cond.dot(p.tensor(&format!("l{l}.cond")));
            let mut gated = z.slice(s![.., ..r]).mapv(|v| v.tanh());
            gated.zip_mut_with(&z.slice(s![.., r..]), |a, &b| *a *= sigmoid(b));
            skip_sum += &gated.dot(p.tensor(&format!("l{l}.skip.w")));
            skip_sum += p.tensor(&format!("l{l}.skip.b"));
            x += &gated.dot(p.tensor(&format!("l{l}.res.w")));
            x += p.tensor(&format!("l{l}.res.b"));
        }
        skip_sum.mapv_inplace(|v| v.max(T::zero()));
        let mut h = skip_sum.dot(p.tensor("out1.w")) + p.tensor("out1.b");
        h.mapv_inplace(|v| v.max(T::zero()));
        Ok(h.dot(p.tensor("out2.w")) + p.tensor("out2.b"))
    }

    /// Mean next-sample cross-entropy (nats) under teacher forcing.
    pub fn cross_entropy(&self, codes: &[usize], cond: ArrayView2<'_, T>) -> Result<f64> {
        let logits = self.forward_logits(codes, cond)?;
        let mut total = 0.0;
        for (row, &c) in logits.rows().into_iter().zip(codes) {
            let m = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64_lossy()));
            let z: f64 = row.iter().map(|v| (v.to_f64_lossy() - m).exp()).sum();
            total += z.ln() + m - row[c].to_f64_lossy();
        }
        Ok(total / codes.len() as f64)
    }

    /// Autoregressive sampling with per-layer input histories.
    pub fn generate_codes(&self, cond: ArrayView2<'_, T>, seed: u64, sampling: Sampling) -> Result<Vec<usize>> {
        let cfg = &self.config;
        if cond.ncols() != cfg.conditioning_dim {
            return Err(Error::Shape(format!(
                "conditioning width {} vs {}",
                cond.ncols(),
                cfg.conditioning_dim
            )));
        }
        let p = &self.params;
        let (r, k, nl) = (cfg.residual_channels, cfg.filter_width, cfg.n_layers());
        let layer_w: Vec<_> = (0..nl)
            .map(|l| {
                (
                    p.tensor(&format!("l{l}.conv.w")),
                    p.tensor(&format!("l{l}.conv.b")).row(0),
                    p.tensor(&format!("l{l}.cond")),
                    p.tensor(&format!("l{l}.res.w")),
                    p.tensor(&format!("l{l}.res.b")).row(0),
                    p.tensor(&format!("l{l}.skip.w")),
                    p.tensor(&format!("l{l}.skip.b")).row(0),
                )
            })
            .collect();
        // history[l][j] holds the input of layer l at time t − 1 − j
        let hist_len: Vec<usize> = (0..nl).map(|l| cfg.dilation(l) * (k - 1)).collect();
        let mut history: Vec<std::collections::VecDeque<Array1<T>>> = hist_len
            .iter()
            .map(|&h| std::iter::repeat_n(Array1::zeros(r), h).collect())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed = p.tensor("embed");
        let mut out = Vec::with_capacity(cond.nrows());
        let mut taps = Array1::<T>::zeros(k * r);
        for t in 0..cond.nrows() {
            let mut x = match out.last() {
                Some(&prev) => embed.row(prev).to_owned(),
                None => Array1::zeros(r),
            };
            let ct = cond.row(t);
            let mut skip = Array1::<T>::zeros(cfg.skip_channels);
            for (l, &(cw, cb, condw, rw, rb, sw, sb)) in layer_w.iter().enumerate() {
                let d = cfg.dilation(l);
                for i in 0..k {
                    let sh = d * (k - 1 - i);
                    let src = if sh == 0 { &x } else { &history[l][sh - 1] };
                    taps.slice_mut(s![i * r..(i + 1) * r]).assign(src);
                }
                let mut z = taps.dot(cw);
                z += &cb;
                z += &ct.dot(condw);
                let mut gated = z.slice(s![..r]).mapv(|v| v.tanh());
                gated.zip_mut_with(&z.slice(s![r..]), |a, &b| *a *= sigmoid(b));
                skip += &gated.dot(sw);
                skip += &sb;
                if hist_len[l] > 0 {
                    history[l].pop_back();
                    history[l].push_front(x.clone());
                }
                x += &gated.dot(rw);
                x += &rb;
            }
            skip.mapv_inplace(|v| v.max(T::zero()));
            let mut h = skip.dot(p.tensor("out1.w")) + p.tensor("out1.b").row(0);
            h.mapv_inplace(|v| v.max(T::zero()));
            let logits = h.dot(p.tensor("out2.w")) + p.tensor("out2.b").row(0);
            out.push(sample(&logits, sampling, &mut rng));
        }
        Ok(out)
    }

    /// Samples a waveform of `cond.nrows()` samples.
    pub fn generate(&self, cond: ArrayView2<'_, T>, seed: u64, sampling: Sampling) -> Result<Waveform> {
        let codes = self.generate_codes(cond, seed, sampling)?;
        Ok(Waveform::new(MuLawCodec::default().decode(&codes.iter().map(|&c| c as u8).collect::<Vec<_>>())))
    }

    /// Largest lag (in samples) at which perturbing the input changes the
    /// logits of the final position, found by bisection over perturbed
    /// prefixes. Also checks that the current sample itself has no influence.
    pub fn measure_receptive_field(&self, max_probe: usize) -> Result<usize> {
        let n = max_probe + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let codes: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.config.output_classes)).collect();
        let cond = Array2::from_shape_fn((n, self.config.conditioning_dim), |_| c::<T>(rng.random_range(0.0..1.0)));
        let base = self.forward_logits(&codes, cond.view())?.row(n - 1).to_owned();
        let changed = |upto: usize| -> Result<bool> {
            let mut pert = codes.clone();
            for v in &mut pert[..=upto] {
                *v = (*v + 128) % self.config.output_classes;
            }
            let l = self.forward_logits(&pert, cond.view())?;
            Ok(l.row(n - 1) != base)
        };
        let mut own = codes.clone();
        own[n - 1] = (own[n - 1] + 128) % self.config.output_classes;
        if self.forward_logits(&own, cond.view())?.row(n - 1) != base {
            return Err(Error::Shape("output depends on the sample it predicts".into()));
        }
        if !changed(n - 2)? {
            return Ok(0);
        }
        // smallest prefix end whose perturbation reaches the final logits
        let (mut lo, mut hi) = (0usize, n - 2);
        if changed(0)? {
            return Ok(n - 1);
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if changed(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(n - 1 - hi)
    }

    pub fn to_checkpoint(&self, metadata: serde_json::Value) -> Result<Checkpoint> {
        let mut meta = metadata;
        if let (Some(obj), Some(stats)) = (meta.as_object_mut(), &self.cond_stats) {
            obj.insert("cond_stats".into(), serde_json::to_value(stats)?);
        }
        Ok(Checkpoint::new(ModelKind::Wavenet, serde_json::to_value(&self.config)?, meta, &self.params))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != ModelKind::Wavenet {
            return Err(Error::Checkpoint(format!("expected wavenet checkpoint, found {}", ckpt.kind)));
        }
        let config: WaveNetConfig = serde_json::from_value(ckpt.config.clone())?;
        let fresh = WaveNet::<T>::new(config.clone(), 0)?;
        crate::nn::ensure_compatible(&fresh.params, &ckpt.params)?;
        let cond_stats = match ckpt.metadata.get("cond_stats") {
            Some(v) => Some(serde_json::from_value(v.clone())?),
            None => None,
        };
        Ok(WaveNet {
            config,
            params: ckpt.params_as(),
            cond_stats,
        })
    }
}

/// Inverse-CDF draw from the softmax of `logits`.
fn sample<T: Float>(logits: &Array1<T>, mode: Sampling, rng: &mut ChaCha8Rng) -> usize {
    let argmax = || {
        logits
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    };
    match mode {
        Sampling::Argmax => argmax(),
        Sampling::Temperature(temp) => {
            let u: f64 = rng.random();
            let m = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64_lossy()));
            let w: Vec<f64> = logits.iter().map(|v| ((v.to_f64_lossy() - m) / temp).exp()).collect();
            let target = u * w.iter().sum::<f64>();
            let mut acc = 0.0;
            for (i, wi) in w.iter().enumerate() {
                acc += wi;
                if acc > target {
                    return i;
                }
            }
            w.len() - 1
        }
    }
}

impl<T: Float> Trainable<T> for WaveNet<T> {
    type Example = WaveNetExample<T>;

    fn example_id(example: &Self::Example) -> &str {
        &example.id
    }

    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn loss_and_grads(
        &self,
        batch: &[&Self::Example],
        _rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(LossReport, ParamSet<T>)> {
        let mut g = Graph::new();
        let (loss, b) = self.batch_loss(&mut g, batch)?;
        let mut grads = g.backward(loss);
        let total = g.scalar(loss).to_f64_lossy();
        Ok((
            LossReport {
                total,
                parts: vec![("cross_entropy", total)],
            },
            b.gradients(&g, &mut grads),
        ))
    }

    fn loss(&self, batch: &[&Self::Example]) -> Result<LossReport> {
        let mut g = Graph::new();
        let (loss, _) = self.batch_loss(&mut g, batch)?;
        let total = g.scalar(loss).to_f64_lossy();
        Ok(LossReport {
            total,
            parts: vec![("cross_entropy", total)],
        })
    }
}

/// Mean absolute difference of two conditioning tracks per column; used to
/// check tracks stay inside the normalized range.
pub fn track_in_unit_range(track: ArrayView2<'_, f32>) -> bool {
    track.iter().all(|&v| (-1e-6..=1.0 + 1e-6).contains(&v)) && track.len_of(Axis(0)) > 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{fit, gradient_check, FitOptions};
    use proptest::prelude::*;
    use rand::Rng;

    fn micro(stacks: usize, layers: usize, width: usize) -> WaveNetConfig {
        WaveNetConfig {
            stacks,
            layers_per_stack: layers,
            residual_channels: 3,
            skip_channels: 4,
            filter_width: width,
            conditioning_dim: 2,
            excerpt_len: 32,
            batch_size: 1,
            ..WaveNetConfig::standard(2)
        }
    }

    fn random_example(n: usize, cdim: usize, seed: u64) -> WaveNetExample<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        WaveNetExample {
            id: format!("r{seed}"),
            codes: (0..n).map(|_| rng.random_range(0..256)).collect(),
            cond: Array2::from_shape_fn((n, cdim), |_| rng.random_range(0.0..1.0)),
        }
    }

    #[test]
    fn receptive_field_formula() {
        assert_eq!(WaveNetConfig::standard(62).receptive_field(), 3070);
        assert_eq!(micro(1, 2, 2).receptive_field(), 4);
        assert_eq!(micro(1, 2, 1).receptive_field(), 1);
    }

    #[test]
    fn measured_receptive_field_matches_formula_on_small_configs() {
        for (s, l, w) in [(1, 2, 2), (1, 2, 1), (2, 3, 2), (1, 3, 3)] {
            let cfg = micro(s, l, w);
            let m = WaveNet::<f64>::new(cfg.clone(), 1).unwrap();
            assert_eq!(m.measure_receptive_field(40).unwrap(), cfg.receptive_field(), "{s} {l} {w}");
        }
    }

    #[test]
    fn tape_plain_and_incremental_paths_agree() {
        let m = WaveNet::<f64>::new(micro(2, 3, 2), 2).unwrap();
        let ex = random_example(40, 2, 3);
        let plain = m.forward_logits(&ex.codes, ex.cond.view()).unwrap();
        let mut g = Graph::new();
        let b = m.params.bind(&mut g);
        let tape = m.tape_logits(&mut g, &b, &ex.codes, &ex.cond);
        for (a, b) in plain.iter().zip(g.value(tape).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // argmax generation must agree with teacher forcing on its own output
        let gen = m.generate_codes(ex.cond.view(), 0, Sampling::Argmax).unwrap();
        let tf = m.forward_logits(&gen, ex.cond.view()).unwrap();
        for (t, row) in tf.rows().into_iter().enumerate() {
            let best = row.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0;
            assert_eq!(best, gen[t], "step {t}");
        }
    }

    #[test]
    fn untrained_loss_is_near_uniform() {
        let m = WaveNet::<f32>::new(WaveNetConfig::toy(62), 3).unwrap();
        let ex = random_example(500, 62, 4);
        let ce = m.cross_entropy(&ex.codes, ex.cond.mapv(|v| v as f32).view()).unwrap();
        assert!((5.0..=6.1).contains(&ce), "{ce}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut m = WaveNet::<f64>::new(micro(1, 3, 2), 5).unwrap();
        // move biases off the ReLU kinks at zero
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (_, t) in m.params.iter_mut() {
            t.mapv_inplace(|v| v + rng.random_range(-0.1..0.1));
        }
        let a = random_example(12, 2, 6);
        let b = random_example(9, 2, 7);
        let (_, grads) = m.loss_and_grads(&[&a, &b], None).unwrap();
        let report = gradient_check(
            &m.params,
            &grads,
            |p| {
                let mm = WaveNet { config: m.config.clone(), params: p.clone(), cond_stats: None };
                mm.loss(&[&a, &b]).unwrap().total
            },
            1e-5,
            24,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn generation_is_deterministic_and_causal() {
        let m = WaveNet::<f32>::new(micro(1, 3, 2), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cond = Array2::from_shape_fn((60, 2), |_| rng.random_range(0.0f32..1.0));
        let mut cond2 = cond.clone();
        cond2.slice_mut(s![30.., ..]).mapv_inplace(|v| 1.0 - v);
        let a = m.generate_codes(cond.view(), 7, Sampling::Temperature(1.0)).unwrap();
        let b = m.generate_codes(cond.view(), 7, Sampling::Temperature(1.0)).unwrap();
        let c2 = m.generate_codes(cond2.view(), 7, Sampling::Temperature(1.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        assert_eq!(a[..30], c2[..30]);
        let w = m.generate(cond.view(), 7, Sampling::Temperature(1.0)).unwrap();
        assert_eq!(w.len(), 60);
    }

    #[test]
    fn overfits_silence() {
        let cfg = WaveNetConfig { excerpt_len: 200, ..micro(1, 3, 2) };
        let mut m = WaveNet::<f32>::new(cfg, 10).unwrap();
        let ex = vec![WaveNetExample { id: "z".into(), codes: vec![128; 200], cond: Array2::zeros((200, 2)) }];
        let opts = FitOptions { steps: 500, batch_size: 1, learning_rate: 1e-2, seed: 0, decay_half_life: None };
        let curve = fit(&mut m, &ex, &opts).unwrap();
        assert!(curve.last().unwrap().total < 0.1, "{:?}", curve.last());
    }

    #[test]
    fn two_frame_ramp() {
        let frames = Array2::from_shape_vec((2, 1), vec![0.0f32, 1.0]).unwrap();
        let up = upsample_conditioning(frames.view(), 5.0, 160, &[]).unwrap();
        assert_eq!(up[[0, 0]], 0.0);
        assert_eq!(up[[40, 0]], 0.0);
        assert_eq!(up[[80, 0]], 0.5);
        assert_eq!(up[[120, 0]], 1.0);
        assert_eq!(up[[159, 0]], 1.0);
        assert!(up.column(0).windows(2).into_iter().all(|w| w[1] >= w[0]));
        assert!(upsample_conditioning(frames.view(), 5.0, 161, &[]).is_err());
    }

    proptest! {
        #[test]
        fn upsampling_length_range_and_binary_columns(
            n_frames in 1usize..12,
            dim in 2usize..5,
            seed in 0u64..1000,
            trim in 0usize..79,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = Array2::from_shape_fn((n_frames, dim), |(_, j)| {
                if j == 0 { if rng.random::<bool>() { 1.0f32 } else { 0.0 } } else { rng.random_range(0.0..1.0) }
            });
            let n = (n_frames * 80).saturating_sub(trim).max(1);
            let up = upsample_conditioning(frames.view(), 5.0, n, &[0]).unwrap();
            prop_assert_eq!(up.nrows(), n);
            prop_assert!(up.column(0).iter().all(|&v| v == 0.0 || v == 1.0));
            prop_assert!(track_in_unit_range(up.view()));
        }
    }
}
