//! Attention-based encoder–decoder acoustic model.
//!
//! * Encoder: phoneme embedding, a ReLU pre-net and a bidirectional GRU.
//! * Attention: additive scoring of the encoder states against the previous
//!   decoder state, with a location feature computed by convolving the
//!   previous alignment.
//! * Decoder: a ReLU pre-net (with dropout while training) on the previous
//!   output frame, a GRU over `[pre-net, context]`, and linear projections of
//!   `[state, context]` to `r` frames and a stop logit.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{NormalizationStats, OutputKind};
use crate::nn::{
    Bound, Checkpoint, Dense, Graph, Gru, LossReport, ModelKind, ParamSet, Trainable, Var,
};
use crate::scalar::{c, Float};

/// Padding steps appended to every training target with stop target 1.
pub const EXTRA_STOP_STEPS: usize = 2;
/// Consecutive steps above [`STOP_THRESHOLD`] that end decoding.
pub const STOP_PATIENCE: usize = 3;
pub const STOP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqConfig {
    pub output_kind: OutputKind,
    pub output_dim: usize,
    pub frames_per_step: usize,
    pub n_symbols: usize,
    pub embedding_dim: usize,
    /// Width of the encoder output; split evenly between the two directions.
    pub encoder_dim: usize,
    pub attention_dim: usize,
    pub location_filters: usize,
    pub location_kernel: usize,
    pub prenet_dim: usize,
    pub decoder_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_decoder_steps: usize,
    pub prenet_dropout: f64,
    /// Length of the fixed causal prior filter applied to the previous
    /// alignment; 0 disables the prior.
    #[serde(default = "default_prior_len")]
    pub prior_filter_len: usize,
}

fn default_prior_len() -> usize {
    PRIOR_FILTER_LEN
}

/// Prior filter length and beta-binomial shape: most mass on staying or
/// advancing one position.
pub const PRIOR_FILTER_LEN: usize = 5;
const PRIOR_ALPHA: f64 = 0.1;
const PRIOR_BETA: f64 = 0.9;
/// Floor inside the log of the prior term.
const PRIOR_FLOOR: f64 = 1e-6;

/// Beta-binomial probabilities of moving `k = 0..len` positions forward.
pub fn beta_binomial_prior(len: usize, a: f64, b: f64) -> Vec<f64> {
    use statrs::function::gamma::ln_gamma;
    let n = (len - 1) as f64;
    let ln_beta = |x: f64, y: f64| ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y);
    (0..len)
        .map(|k| {
            let k = k as f64;
            let ln_choose = ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0);
            (ln_choose + ln_beta(k + a, n - k + b) - ln_beta(a, b)).exp()
        })
        .collect()
}

impl Seq2SeqConfig {
    pub fn standard(output_kind: OutputKind, n_symbols: usize) -> Self {
        Seq2SeqConfig {
            output_kind,
            output_dim: output_kind.dim(),
            frames_per_step: 2,
            n_symbols,
            embedding_dim: 256,
            encoder_dim: 256,
            attention_dim: 128,
            location_filters: 32,
            location_kernel: 31,
            prenet_dim: 128,
            decoder_dim: 256,
            batch_size: 32,
            learning_rate: 1e-3,
            max_decoder_steps: 1000,
            prenet_dropout: 0.5,
            prior_filter_len: PRIOR_FILTER_LEN,
        }
    }

    /// Small enough to train on the toy corpus in minutes on a CPU.
    pub fn toy(output_kind: OutputKind, n_symbols: usize) -> Self {
        Seq2SeqConfig {
            embedding_dim: 32,
            encoder_dim: 64,
            attention_dim: 32,
            location_filters: 8,
            location_kernel: 7,
            prenet_dim: 32,
            decoder_dim: 96,
            batch_size: 4,
            learning_rate: 2e-3,
            max_decoder_steps: 400,
            ..Self::standard(output_kind, n_symbols)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frames_per_step != 2 {
            return bad(format!("frames_per_step must be 2, got {}", self.frames_per_step));
        }
        if self.output_dim != self.output_kind.dim() {
            return bad(format!(
                "output_dim {} does not match {} ({})",
                self.output_dim,
                self.output_kind,
                self.output_kind.dim()
            ));
        }
        if self.encoder_dim == 0 || !self.encoder_dim.is_multiple_of(2) {
            return bad("encoder_dim must be positive and even".into());
        }
        if self.location_kernel.is_multiple_of(2) {
            return bad("location_kernel must be odd".into());
        }
        if self.batch_size == 0 || self.batch_size > 32 {
            return bad(format!("batch_size must be in 1..=32, got {}", self.batch_size));
        }
        if self.n_symbols == 0 || self.max_decoder_steps == 0 {
            return bad("n_symbols and max_decoder_steps must be positive".into());
        }
        if self.prior_filter_len == 1 {
            return bad("prior_filter_len must be 0 or at least 2".into());
        }
        if !(0.0..1.0).contains(&self.prenet_dropout) {
            return bad("prenet_dropout must be in [0, 1)".into());
        }
        Ok(())
    }
}

/// Training pair: phoneme ids and normalized target frames.
#[derive(Debug, Clone)]
pub struct Seq2SeqExample<T: Float> {
    pub id: String,
    pub ids: Vec<usize>,
    pub frames: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<T: Float> {
    pub h: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState<T: Float> {
    pub alpha: Array1<T>,
    pub context: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T: Float> {
    pub s: Array1<T>,
    /// Last frame of the previous output block (normalized).
    pub last_output: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput<T: Float> {
    /// `r × output_dim` normalized frames.
    pub frames: Array2<T>,
    /// Stop probability.
    pub stop_energy: T,
    pub state: DecoderState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis<T: Float> {
    /// De-normalized acoustic frames.
    pub frames: Array2<T>,
    /// Decoder steps × input length.
    pub alignment: Array2<T>,
    pub hit_max_decoder_steps: bool,
}

/// Teacher-forced outputs for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherForced<T: Float> {
    pub frames: Array2<T>,
    pub stop_logits: Array1<T>,
    pub alignment: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct Seq2Seq<T: Float> {
    pub config: Seq2SeqConfig,
    pub params: ParamSet<T>,
    /// Output normalization; synthesis de-normalizes with it when present.
    pub stats: Option<NormalizationStats>,
}

struct Net {
    embed: Var,
    enc_pre: Dense,
    enc_fw: Gru,
    enc_bw: Gru,
    att_key: Var,
    att_query: Dense,
    loc_conv: Var,
    loc_proj: Var,
    att_v: Var,
    dec_pre: Dense,
    dec_gru: Gru,
    out: Dense,
    stop: Dense,
    kernel: usize,
    /// Fixed prior filter laid out for a centered window of `2K − 1` taps.
    prior: Option<(Var, usize)>,
}

impl Net {
    fn bind<T: Float>(cfg: &Seq2SeqConfig, b: &Bound, g: &mut Graph<T>) -> Self {
        let prior = (cfg.prior_filter_len > 1).then(|| {
            let k = cfg.prior_filter_len;
            let p = beta_binomial_prior(k, PRIOR_ALPHA, PRIOR_BETA);
            // window tap i sees position j + i − (k − 1), i.e. a move of k − 1 − i
            let col = Array2::from_shape_fn((2 * k - 1, 1), |(i, _)| if i < k { c::<T>(p[k - 1 - i]) } else { T::zero() });
            (g.leaf(col), 2 * k - 1)
        });
        Net {
            prior,
            embed: b.var("embed"),
            enc_pre: Dense::bind(b, "enc.pre"),
            enc_fw: Gru::bind(b, "enc.fw", cfg.encoder_dim / 2),
            enc_bw: Gru::bind(b, "enc.bw", cfg.encoder_dim / 2),
            att_key: b.var("att.key"),
            att_query: Dense::bind(b, "att.query"),
            loc_conv: b.var("att.loc_conv"),
            loc_proj: b.var("att.loc_proj"),
            att_v: b.var("att.v"),
            dec_pre: Dense::bind(b, "dec.pre"),
            dec_gru: Gru::bind(b, "dec.gru", cfg.decoder_dim),
            out: Dense::bind(b, "dec.out"),
            stop: Dense::bind(b, "dec.stop"),
            kernel: cfg.location_kernel,
        }
    }

    fn encode<T: Float>(&self, g: &mut Graph<T>, ids: &[usize]) -> Var {
        let l = ids.len();
        let emb = g.select_rows(self.embed, ids);
        let pre = self.enc_pre.apply(g, emb);
        let pre = g.relu(pre);
        let run = |g: &mut Graph<T>, cell: &Gru, order: &mut dyn Iterator<Item = usize>| {
            let xp = cell.project(g, pre);
            let mut h = g.zeros(1, cell.size);
            let mut states = vec![h; l];
            for j in order {
                let xj = g.slice_rows(xp, j, j + 1);
                h = cell.step(g, xj, h);
                states[j] = h;
            }
            g.concat_rows(&states)
        };
        let fw = run(g, &self.enc_fw, &mut (0..l));
        let bw = run(g, &self.enc_bw, &mut (0..l).rev());
        g.concat_cols(&[fw, bw])
    }

    fn keys<T: Float>(&self, g: &mut Graph<T>, h: Var) -> Var {
        g.matmul(h, self.att_key)
    }

    /// Returns `(alpha: 1×L, context: 1×encoder_dim)`.
    fn attend<T: Float>(&self, g: &mut Graph<T>, keys: Var, h: Var, s_prev: Var, alpha_prev: Var) -> (Var, Var) {
        let q = self.att_query.apply(g, s_prev);
        let win = g.im2col(alpha_prev, self.kernel);
        let loc = g.matmul(win, self.loc_conv);
        let loc = g.matmul(loc, self.loc_proj);
        let e = g.add(keys, loc);
        let e = g.add_row(e, q);
        let e = g.tanh(e);
        let mut e = g.matmul(e, self.att_v);
        if let Some((filter, width)) = self.prior {
            let win = g.im2col(alpha_prev, width);
            let p = g.matmul(win, filter);
            let lp = g.ln_floor(p, c::<T>(PRIOR_FLOOR));
            e = g.add(e, lp);
        }
        let e = g.transpose(e);
        let alpha = g.softmax_rows(e);
        let ctx = g.matmul(alpha, h);
        (alpha, ctx)
    }

    /// Advances the decoder; returns `(s_t, [s_t, c_t])`.
    fn decode<T: Float>(
        &self,
        g: &mut Graph<T>,
        s_prev: Var,
        ctx: Var,
        y_prev: Var,
        dropout: Option<Array2<T>>,
    ) -> (Var, Var) {
        let p = self.dec_pre.apply(g, y_prev);
        let mut p = g.relu(p);
        if let Some(mask) = dropout {
            let m = g.leaf(mask);
            p = g.mul(p, m);
        }
        let x = g.concat_cols(&[p, ctx]);
        let xp = self.dec_gru.project(g, x);
        let s = self.dec_gru.step(g, xp, s_prev);
        let sc = g.concat_cols(&[s, ctx]);
        (s, sc)
    }
}

fn one_hot_row<T: Float>(len: usize, at: usize) -> Array2<T> {
    let mut a = Array2::zeros((1, len));
    a[[0, at]] = T::one();
    a
}

fn row<T: Float>(v: &Array1<T>) -> Array2<T> {
    v.clone().insert_axis(Axis(0))
}

struct UtteranceLoss {
    l1: Var,
    bce: Var,
    n_frame_values: usize,
    n_steps: usize,
    outputs: Var,
    stop_logits: Var,
    alphas: Vec<Var>,
}

impl<T: Float> Seq2Seq<T> {
    pub fn new(config: Seq2SeqConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let cfg = &config;
        let half = cfg.encoder_dim / 2;
        let rd = cfg.frames_per_step * cfg.output_dim;
        p.insert_uniform("embed", cfg.n_symbols, cfg.embedding_dim, 0.5, &mut rng);
        Dense::init(&mut p, "enc.pre", cfg.embedding_dim, cfg.embedding_dim, &mut rng);
        Gru::init(&mut p, "enc.fw", cfg.embedding_dim, half, &mut rng);
        Gru::init(&mut p, "enc.bw", cfg.embedding_dim, half, &mut rng);
        p.insert_fan_in("att.key", cfg.encoder_dim, cfg.attention_dim, &mut rng);
        Dense::init(&mut p, "att.query", cfg.decoder_dim, cfg.attention_dim, &mut rng);
        p.insert_fan_in("att.loc_conv", cfg.location_kernel, cfg.location_filters, &mut rng);
        p.insert_fan_in("att.loc_proj", cfg.location_filters, cfg.attention_dim, &mut rng);
        p.insert_fan_in("att.v", cfg.attention_dim, 1, &mut rng);
        Dense::init(&mut p, "dec.pre", cfg.output_dim, cfg.prenet_dim, &mut rng);
        Gru::init(&mut p, "dec.gru", cfg.prenet_dim + cfg.encoder_dim, cfg.decoder_dim, &mut rng);
        Dense::init(&mut p, "dec.out", cfg.decoder_dim + cfg.encoder_dim, rd, &mut rng);
        Dense::init(&mut p, "dec.stop", cfg.decoder_dim + cfg.encoder_dim, 1, &mut rng);
        Ok(Seq2Seq {
            config,
            params: p,
            stats: None,
        })
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Empty("phoneme sequence is empty"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.n_symbols) {
            return Err(Error::Shape(format!(
                "symbol id {bad} outside inventory of {}",
                self.config.n_symbols
            )));
        }
        Ok(())
    }

    fn bind(&self, g: &mut Graph<T>) -> (Bound, Net) {
        let b = self.params.bind(g);
        let net = Net::bind(&self.config, &b, g);
        (b, net)
    }

    pub fn encode(&self, ids: &[usize]) -> Result<EncoderOutput<T>> {
        self.check_ids(ids)?;
        let mut g = Graph::new();
        let (_, net) = self.bind(&mut g);
        let h = net.encode(&mut g, ids);
        Ok(EncoderOutput { h: g.value(h).clone() })
    }

    pub fn initial_alpha(len: usize) -> Array1<T> {
        let mut a = Array1::zeros(len);
        a[0] = T::one();
        a
    }

    pub fn initial_state(&self) -> DecoderState<T> {
        DecoderState {
            s: Array1::zeros(self.config.decoder_dim),
            last_output: Array1::zeros(self.config.output_dim),
        }
    }

    pub fn attend(
        &self,
        s_prev: &DecoderState<T>,
        alpha_prev: &Array1<T>,
        enc: &EncoderOutput<T>,
    ) -> Result<AttentionState<T>> {
        let (l, d) = enc.h.dim();
        if alpha_prev.len() != l || d != self.config.encoder_dim || s_prev.s.len() != self.config.decoder_dim {
            return Err(Error::Shape(format!(
                "attend: alpha {} vs L {l}, h width {d} vs {}, state {} vs {}",
                alpha_prev.len(),
                self.config.encoder_dim,
                s_prev.s.len(),
                self.config.decoder_dim
            )));
        }
        let mut g = Graph::new();
        let (_, net) = self.bind(&mut g);
        let h = g.leaf(enc.h.clone());
        let keys = net.keys(&mut g, h);
        let s = g.leaf(row(&s_prev.s));
        let a = g.leaf(row(alpha_prev));
        let (alpha, ctx) = net.attend(&mut g, keys, h, s, a);
        Ok(AttentionState {
            alpha: g.value(alpha).row(0).to_owned(),
            context: g.value(ctx).row(0).to_owned(),
        })
    }

    /// Context for an externally supplied alignment (bypasses scoring).
    pub fn context_for(&self, alpha: &Array1<T>, enc: &EncoderOutput<T>) -> Result<Array1<T>> {
        if alpha.len() != enc.h.nrows() {
            return Err(Error::Shape(format!("alpha {} vs L {}", alpha.len(), enc.h.nrows())));
        }
        let mut g = Graph::new();
        let a = g.leaf(row(alpha));
        let h = g.leaf(enc.h.clone());
        let ctx = g.matmul(a, h);
        Ok(g.value(ctx).row(0).to_owned())
    }

    pub fn decode_step(&self, state: &DecoderState<T>, context: &Array1<T>) -> Result<DecodeOutput<T>> {
        let cfg = &self.config;
        if context.len() != cfg.encoder_dim
            || state.s.len() != cfg.decoder_dim
            || state.last_output.len() != cfg.output_dim
        {
            return Err(Error::Shape("decode_step: state or context width mismatch".into()));
        }
        let mut g = Graph::new();
        let (_, net) = self.bind(&mut g);
        let s_prev = g.leaf(row(&state.s));
        let ctx = g.leaf(row(context));
        let y_prev = g.leaf(row(&state.last_output));
        let (s, sc) = net.decode(&mut g, s_prev, ctx, y_prev, None);
        let y = net.out.apply(&mut g, sc);
        let z = net.stop.apply(&mut g, sc);
        let frames = g
            .value(y)
            .clone()
            .into_shape_with_order((cfg.frames_per_step, cfg.output_dim))
            .expect("r·D row");
        let last_output = frames.row(cfg.frames_per_step - 1).to_owned();
        let zv = g.scalar(z);
        Ok(DecodeOutput {
            frames,
            stop_energy: T::one() / (T::one() + (-zv).exp()),
            state: DecoderState {
                s: g.value(s).row(0).to_owned(),
                last_output,
            },
        })
    }

    /// Builds one utterance's teacher-forced forward pass and losses.
    fn utterance_loss(
        &self,
        g: &mut Graph<T>,
        net: &Net,
        ids: &[usize],
        frames: &Array2<T>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<UtteranceLoss> {
        let cfg = &self.config;
        self.check_ids(ids)?;
        let (n_frames, d) = frames.dim();
        if d != cfg.output_dim {
            return Err(Error::Shape(format!("target width {d} vs output_dim {}", cfg.output_dim)));
        }
        if n_frames == 0 {
            return Err(Error::Empty("target has no frames"));
        }
        let r = cfg.frames_per_step;
        let real = n_frames.div_ceil(r);
        let n_steps = real + EXTRA_STOP_STEPS;
        let mut target = Array2::zeros((n_steps, r * d));
        let mut mask = Array2::zeros((n_steps, r * d));
        for f in 0..n_frames {
            let (t, k) = (f / r, f % r);
            target.slice_mut(s![t, k * d..(k + 1) * d]).assign(&frames.row(f));
            mask.slice_mut(s![t, k * d..(k + 1) * d]).fill(T::one());
        }
        let mut stop_target = Array2::zeros((n_steps, 1));
        stop_target.slice_mut(s![real - 1.., ..]).fill(T::one());
        let mut prev = Array2::zeros((n_steps, d));
        for t in 1..n_steps {
            let f = t * r - 1;
            if f < n_frames {
                prev.row_mut(t).assign(&frames.row(f));
            }
        }

        let h = net.encode(g, ids);
        let keys = net.keys(g, h);
        let prev = g.leaf(prev);
        let mut alpha = g.leaf(one_hot_row(ids.len(), 0));
        let mut s = g.zeros(1, cfg.decoder_dim);
        let keep = 1.0 - cfg.prenet_dropout;
        let mut scs = Vec::with_capacity(n_steps);
        let mut alphas = Vec::with_capacity(n_steps);
        for t in 0..n_steps {
            let (a, ctx) = net.attend(g, keys, h, s, alpha);
            alpha = a;
            alphas.push(a);
            let y_prev = g.slice_rows(prev, t, t + 1);
            let dropout = match rng.as_deref_mut() {
                Some(rng) if cfg.prenet_dropout > 0.0 => Some(Array2::from_shape_fn((1, cfg.prenet_dim), |_| {
                    if rng.random::<f64>() < keep {
                        c::<T>(1.0 / keep)
                    } else {
                        T::zero()
                    }
                })),
                _ => None,
            };
            let (s_next, sc) = net.decode(g, s, ctx, y_prev, dropout);
            s = s_next;
            scs.push(sc);
        }
        let sc = g.concat_rows(&scs);
        let outputs = net.out.apply(g, sc);
        let stop_logits = net.stop.apply(g, sc);
        let l1 = g.masked_l1(outputs, target, mask);
        let bce = g.bce_with_logits(stop_logits, stop_target, Array2::ones((n_steps, 1)));
        Ok(UtteranceLoss {
            l1,
            bce,
            n_frame_values: n_frames * d,
            n_steps,
            outputs,
            stop_logits,
            alphas,
        })
    }

    fn batch_graph(
        &self,
        batch: &[&Seq2SeqExample<T>],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Graph<T>, Bound, Var, f64, f64)> {
        if batch.is_empty() {
            return Err(Error::Empty("empty batch"));
        }
        let mut g = Graph::new();
        let (b, net) = self.bind(&mut g);
        let mut l1s = Vec::new();
        let mut bces = Vec::new();
        let (mut nv, mut ns) = (0usize, 0usize);
        for ex in batch {
            let u = self.utterance_loss(&mut g, &net, &ex.ids, &ex.frames, rng.as_deref_mut())?;
            l1s.push(u.l1);
            bces.push(u.bce);
            nv += u.n_frame_values;
            ns += u.n_steps;
        }
        let l1 = g.sum_of(&l1s);
        let frame = g.scale(l1, c::<T>(1.0 / nv as f64));
        let bce = g.sum_of(&bces);
        let stop = g.scale(bce, c::<T>(1.0 / ns as f64));
        let total = g.add(frame, stop);
        let (fv, sv) = (g.scalar(frame).to_f64_lossy(), g.scalar(stop).to_f64_lossy());
        Ok((g, b, total, fv, sv))
    }

    /// Teacher-forced outputs for normalized `frames`: the training-time
    /// forward pass without dropout.
    pub fn teacher_forced(&self, ids: &[usize], frames: &Array2<T>) -> Result<TeacherForced<T>> {
        let mut g = Graph::new();
        let (_, net) = self.bind(&mut g);
        let u = self.utterance_loss(&mut g, &net, ids, frames, None)?;
        let n = u.n_steps;
        let r = self.config.frames_per_step;
        let out = g
            .value(u.outputs)
            .clone()
            .into_shape_with_order((n * r, self.config.output_dim))
            .expect("contiguous");
        let rows: Vec<_> = u.alphas.iter().map(|&a| g.value(a).view()).collect();
        Ok(TeacherForced {
            frames: out,
            stop_logits: g.value(u.stop_logits).column(0).to_owned(),
            alignment: ndarray::concatenate(Axis(0), &rows).expect("equal widths"),
        })
    }

    /// Autoregressive decoding until the stop criterion or the step cap.
    pub fn synthesize(&self, ids: &[usize]) -> Result<Synthesis<T>> {
        self.check_ids(ids)?;
        let cfg = &self.config;
        let (r, d) = (cfg.frames_per_step, cfg.output_dim);
        let mut g = Graph::new();
        let (_, net) = self.bind(&mut g);
        let h = net.encode(&mut g, ids);
        let keys = net.keys(&mut g, h);
        let mut alpha = g.leaf(one_hot_row(ids.len(), 0));
        let mut s = g.zeros(1, cfg.decoder_dim);
        let mut y_prev = g.zeros(1, d);
        let mut blocks: Vec<Array2<T>> = Vec::new();
        let mut alphas: Vec<Array2<T>> = Vec::new();
        let mut run = 0usize;
        let mut stopped = false;
        for _ in 0..cfg.max_decoder_steps {
            let (a, ctx) = net.attend(&mut g, keys, h, s, alpha);
            alpha = a;
            let (s_next, sc) = net.decode(&mut g, s, ctx, y_prev, None);
            s = s_next;
            let y = net.out.apply(&mut g, sc);
            let z = net.stop.apply(&mut g, sc);
            let block = g.value(y).clone().into_shape_with_order((r, d)).expect("r·D row");
            y_prev = g.leaf(block.slice(s![r - 1..r, ..]).to_owned());
            blocks.push(block);
            alphas.push(g.value(alpha).clone());
            let p = 1.0 / (1.0 + (-g.scalar(z).to_f64_lossy()).exp());
            run = if p > STOP_THRESHOLD { run + 1 } else { 0 };
            if run >= STOP_PATIENCE {
                stopped = true;
                break;
            }
        }
        let keep = if stopped {
            blocks.len() - (STOP_PATIENCE - 1)
        } else {
            blocks.len()
        };
        let views: Vec<_> = blocks[..keep].iter().map(|b| b.view()).collect();
        let mut frames = ndarray::concatenate(Axis(0), &views).expect("equal widths");
        if let Some(stats) = &self.stats {
            frames = stats.invert(frames.view())?;
        }
        let rows: Vec<_> = alphas.iter().map(|a| a.view()).collect();
        Ok(Synthesis {
            frames,
            alignment: ndarray::concatenate(Axis(0), &rows).expect("equal widths"),
            hit_max_decoder_steps: !stopped,
        })
    }

    pub fn to_checkpoint(&self, metadata: serde_json::Value) -> Result<Checkpoint> {
        let mut meta = metadata;
        if let (Some(obj), Some(stats)) = (meta.as_object_mut(), &self.stats) {
            obj.insert("stats".into(), serde_json::to_value(stats)?);
        }
        Ok(Checkpoint::new(
            ModelKind::Seq2seq,
            serde_json::to_value(&self.config)?,
            meta,
            &self.params,
        ))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != ModelKind::Seq2seq {
            return Err(Error::Checkpoint(format!("expected seq2seq checkpoint, found {}", ckpt.kind)));
        }
        let config: Seq2SeqConfig = serde_json::from_value(ckpt.config.clone())?;
        let fresh = Seq2Seq::<T>::new(config.clone(), 0)?;
        crate::nn::ensure_compatible(&fresh.params, &ckpt.params)?;
        let stats = match ckpt.metadata.get("stats") {
            Some(v) => Some(serde_json::from_value(v.clone())?),
            None => None,
        };
        Ok(Seq2Seq {
            config,
            params: ckpt.params_as(),
            stats,
        })
    }
}

impl<T: Float> Trainable<T> for Seq2Seq<T> {
    type Example = Seq2SeqExample<T>;

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
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(LossReport, ParamSet<T>)> {
        let (g, b, total, frame, stop) = self.batch_graph(batch, rng)?;
        let mut grads = g.backward(total);
        let report = LossReport {
            total: g.scalar(total).to_f64_lossy(),
            parts: vec![("frame", frame), ("stop", stop)],
        };
        Ok((report, b.gradients(&g, &mut grads)))
    }

    fn loss(&self, batch: &[&Self::Example]) -> Result<LossReport> {
        let (g, _, total, frame, stop) = self.batch_graph(batch, None)?;
        Ok(LossReport {
            total: g.scalar(total).to_f64_lossy(),
            parts: vec![("frame", frame), ("stop", stop)],
        })
    }
}

/// Fraction of consecutive decoder steps whose most-attended input position
/// does not move backwards. Fewer than two rows score 1.
pub fn alignment_monotonicity<T: Float>(alignment: ArrayView2<'_, T>) -> f64 {
    if alignment.nrows() < 2 {
        return 1.0;
    }
    let argmax: Vec<usize> = alignment
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect();
    let ok = argmax.windows(2).filter(|w| w[1] >= w[0]).count();
    ok as f64 / (argmax.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use ndarray::array;

    fn micro() -> Seq2SeqConfig {
        Seq2SeqConfig {
            embedding_dim: 3,
            encoder_dim: 4,
            attention_dim: 3,
            location_filters: 2,
            location_kernel: 3,
            prenet_dim: 3,
            decoder_dim: 4,
            batch_size: 2,
            max_decoder_steps: 20,
            prenet_dropout: 0.0,
            prior_filter_len: 4,
            ..Seq2SeqConfig::standard(OutputKind::Mel, 5)
        }
    }

    fn random_frames(rows: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn config_validation() {
        let mut c = micro();
        assert!(c.validate().is_ok());
        c.frames_per_step = 3;
        assert!(c.validate().is_err());
        let mut c = micro();
        c.output_dim = 63;
        assert!(c.validate().is_err());
        let mut c = micro();
        c.batch_size = 33;
        assert!(c.validate().is_err());
    }

    #[test]
    fn encoder_shape_order_and_determinism() {
        let m = Seq2Seq::<f64>::new(micro(), 1).unwrap();
        let a = m.encode(&[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(a.h.dim(), (5, 4));
        assert_eq!(a, m.encode(&[0, 1, 2, 3, 4]).unwrap());
        let b = m.encode(&[0, 2, 1, 3, 4]).unwrap();
        assert_ne!(a.h, b.h);
        assert!(m.encode(&[]).is_err());
        assert!(m.encode(&[7]).is_err());
    }

    #[test]
    fn forced_alignment_contexts() {
        let m = Seq2Seq::<f64>::new(micro(), 2).unwrap();
        let enc = m.encode(&[1, 2, 3]).unwrap();
        let ctx = m.context_for(&array![0.0, 1.0, 0.0], &enc).unwrap();
        assert_eq!(ctx, enc.h.row(1).to_owned());
        let enc2 = m.encode(&[1, 2]).unwrap();
        let ctx = m.context_for(&array![0.5, 0.5], &enc2).unwrap();
        let mean = (&enc2.h.row(0) + &enc2.h.row(1)) / 2.0;
        for (a, b) in ctx.iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_is_a_distribution() {
        let m = Seq2Seq::<f64>::new(micro(), 3).unwrap();
        let enc = m.encode(&[0, 4, 2, 2]).unwrap();
        let mut st = m.initial_state();
        st.s = Array1::from_vec(vec![0.3, -0.8, 0.1, 0.9]);
        let att = m.attend(&st, &Seq2Seq::initial_alpha(4), &enc).unwrap();
        assert!(att.alpha.iter().all(|&a| a >= 0.0));
        assert!((att.alpha.sum() - 1.0).abs() < 1e-12);
        let expect = att.alpha.view().insert_axis(Axis(0)).dot(&enc.h);
        for (a, b) in att.context.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(m.attend(&st, &Seq2Seq::initial_alpha(3), &enc).is_err());
    }

    #[test]
    fn decode_step_emits_two_frames() {
        let m = Seq2Seq::<f32>::new(micro(), 4).unwrap();
        let out = m.decode_step(&m.initial_state(), &Array1::from_elem(4, 0.2)).unwrap();
        assert_eq!(out.frames.dim(), (2, 80));
        assert!(out.frames.iter().all(|v| v.is_finite()));
        assert!(out.stop_energy > 0.0 && out.stop_energy < 1.0);
    }

    #[test]
    fn zero_model_on_zero_targets_has_zero_frame_loss() {
        let mut m = Seq2Seq::<f64>::new(micro(), 5).unwrap();
        for (_, t) in m.params.iter_mut() {
            t.fill(0.0);
        }
        let ex = Seq2SeqExample {
            id: "z".into(),
            ids: vec![0, 1],
            frames: Array2::zeros((5, 80)),
        };
        let l = m.loss(&[&ex]).unwrap();
        assert_eq!(l.part("frame"), Some(0.0));
    }

    #[test]
    fn loss_is_order_invariant() {
        let m = Seq2Seq::<f64>::new(micro(), 6).unwrap();
        let a = Seq2SeqExample { id: "a".into(), ids: vec![0, 1, 2], frames: random_frames(7, 80, 1) };
        let b = Seq2SeqExample { id: "b".into(), ids: vec![3, 4], frames: random_frames(4, 80, 2) };
        let l1 = m.loss(&[&a, &b]).unwrap().total;
        let l2 = m.loss(&[&b, &a]).unwrap().total;
        assert!((l1 - l2).abs() < 1e-12 * l1.abs().max(1.0));
    }

    #[test]
    fn teacher_forcing_matches_training_forward() {
        let m = Seq2Seq::<f32>::new(micro(), 7).unwrap();
        let frames = random_frames(6, 80, 3).mapv(|v| v as f32);
        let a = m.teacher_forced(&[1, 2, 3], &frames).unwrap();
        let b = m.teacher_forced(&[1, 2, 3], &frames).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames.nrows(), 2 * (3 + EXTRA_STOP_STEPS));
    }

    #[test]
    fn decoder_is_causal_under_teacher_forcing() {
        let m = Seq2Seq::<f64>::new(micro(), 8).unwrap();
        let frames = random_frames(10, 80, 4);
        let mut perturbed = frames.clone();
        // frame 5 is the last frame of block 2, which feeds step 3
        perturbed.row_mut(5).fill(3.0);
        let a = m.teacher_forced(&[0, 1, 2], &frames).unwrap();
        let b = m.teacher_forced(&[0, 1, 2], &perturbed).unwrap();
        assert_eq!(a.frames.slice(s![..6, ..]), b.frames.slice(s![..6, ..]));
        assert_ne!(a.frames.slice(s![6..8, ..]), b.frames.slice(s![6..8, ..]));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut cfg = micro();
        cfg.output_kind = OutputKind::Mel;
        let mut m = Seq2Seq::<f64>::new(cfg, 9).unwrap();
        // move biases off the ReLU kink at zero input
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (_, t) in m.params.iter_mut() {
            t.mapv_inplace(|v| v + rng.random_range(-0.1..0.1));
        }
        let a = Seq2SeqExample { id: "a".into(), ids: vec![0, 3, 1], frames: random_frames(5, 80, 5) };
        let b = Seq2SeqExample { id: "b".into(), ids: vec![2, 4], frames: random_frames(3, 80, 6) };
        let (_, grads) = m.loss_and_grads(&[&a, &b], None).unwrap();
        let report = gradient_check(
            &m.params,
            &grads,
            |p| {
                let mm = Seq2Seq { config: m.config.clone(), params: p.clone(), stats: None };
                mm.loss(&[&a, &b]).unwrap().total
            },
            1e-5,
            12,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn synthesis_respects_step_cap_and_alignment_rows() {
        let m = Seq2Seq::<f32>::new(micro(), 10).unwrap();
        let out = m.synthesize(&[0, 1, 2]).unwrap();
        assert!(out.frames.nrows() <= 2 * m.config.max_decoder_steps);
        for row in out.alignment.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = Seq2Seq::<f32>::new(micro(), 11).unwrap();
        m.stats = Some(NormalizationStats { kind: crate::features::NormKind::MeanVar, a: vec![0.0; 80], b: vec![1.0; 80] });
        let ck = m.to_checkpoint(serde_json::json!({})).unwrap();
        let back = Seq2Seq::<f32>::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.stats, m.stats);
    }

    #[test]
    fn prior_is_a_distribution_favoring_small_moves() {
        let p = beta_binomial_prior(PRIOR_FILTER_LEN, PRIOR_ALPHA, PRIOR_BETA);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1] && p[1] > p[2]);
        // independent evaluation of the k = 1 term with n = 4: n·B(1.1, 3.9)/B(0.1, 0.9)
        let b = |x: f64, y: f64| {
            use statrs::function::gamma::gamma;
            gamma(x) * gamma(y) / gamma(x + y)
        };
        assert_eq!(PRIOR_FILTER_LEN, 5);
        assert!((p[1] - 4.0 * b(1.1, 3.9) / b(0.1, 0.9)).abs() < 1e-12);
    }

    #[test]
    fn prior_blocks_backward_jumps() {
        let m = Seq2Seq::<f64>::new(micro(), 12).unwrap();
        let enc = m.encode(&[0, 1, 2, 3, 4]).unwrap();
        let mut prev = Array1::zeros(5);
        prev[3] = 1.0;
        let att = m.attend(&m.initial_state(), &prev, &enc).unwrap();
        assert!(att.alpha.iter().take(3).all(|&a| a < 1e-4), "{:?}", att.alpha);
    }

    #[test]
    fn monotonicity_examples() {
        let diag = Array2::<f64>::eye(4);
        assert_eq!(alignment_monotonicity(diag.view()), 1.0);
        let from_argmax = |idx: &[usize]| {
            let mut a = Array2::<f64>::zeros((idx.len(), 4));
            for (r, &i) in idx.iter().enumerate() {
                a[[r, i]] = 1.0;
            }
            alignment_monotonicity(a.view())
        };
        assert_eq!(from_argmax(&[3, 2, 1]), 0.0);
        assert_eq!(from_argmax(&[1, 1, 2, 1, 3]), 0.75);
        assert_eq!(from_argmax(&[2]), 1.0);
    }
}
