//! Recurrent baseline: a duration model over phonemes and a frame-synchronous
//! acoustic model over upsampled linguistic features, both stacked
//! unidirectional LSTMs with a linear output layer.

use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{NormalizationStats, WORLD_DIM};
use crate::nn::{Bound, Checkpoint, Dense, Graph, LossReport, Lstm, ModelKind, ParamSet, Trainable, Var};
use crate::scalar::{c, Float};
use crate::text::{FrameLinguisticFeatures, PhonemeSequence, MAX_DURATION_FRAMES, POSITIONAL_FEATURES, WB};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub output_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl LstmConfig {
    /// Two layers of 256 units.
    pub fn standard(input_dim: usize, output_dim: usize) -> Self {
        LstmConfig {
            input_dim,
            hidden_dim: 256,
            layers: 2,
            output_dim,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }

    pub fn toy(input_dim: usize, output_dim: usize) -> Self {
        LstmConfig {
            hidden_dim: 64,
            batch_size: 4,
            learning_rate: 2e-3,
            ..Self::standard(input_dim, output_dim)
        }
    }

    pub fn acoustic(n_symbols: usize) -> Self {
        Self::standard(n_symbols + POSITIONAL_FEATURES, WORLD_DIM)
    }

    pub fn duration(n_symbols: usize) -> Self {
        Self::standard(n_symbols + POSITIONAL_FEATURES, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.layers == 0 || self.output_dim == 0 {
            return Err(Error::Config("lstm dimensions must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Input rows with normalized targets of the same length.
#[derive(Debug, Clone)]
pub struct SequenceExample<T: Float> {
    pub id: String,
    pub inputs: Array2<T>,
    pub targets: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct LstmRegressor<T: Float> {
    pub config: LstmConfig,
    pub params: ParamSet<T>,
    /// Output normalization inverted by [`LstmRegressor::predict`].
    pub stats: Option<NormalizationStats>,
}

impl<T: Float> LstmRegressor<T> {
    pub fn new(config: LstmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let mut width = config.input_dim;
        for l in 0..config.layers {
            Lstm::init(&mut p, &format!("lstm{l}"), width, config.hidden_dim, &mut rng);
            width = config.hidden_dim;
        }
        Dense::init(&mut p, "out", width, config.output_dim, &mut rng);
        Ok(LstmRegressor {
            config,
            params: p,
            stats: None,
        })
    }

    /// Runs the batch with rows stacked time-major (`t · B + b`); sequences
    /// shorter than the longest are zero-padded at the end.
    fn forward(&self, g: &mut Graph<T>, inputs: &[ArrayView2<'_, T>]) -> Result<(Var, usize, Bound)> {
        let cfg = &self.config;
        let b = inputs.len();
        let t_max = inputs.iter().map(|x| x.nrows()).max().unwrap_or(0);
        if t_max == 0 {
            return Err(Error::Empty("no input frames"));
        }
        let mut x = Array2::zeros((t_max * b, cfg.input_dim));
        for (k, inp) in inputs.iter().enumerate() {
            if inp.ncols() != cfg.input_dim {
                return Err(Error::Shape(format!(
                    "input width {} vs expected {}",
                    inp.ncols(),
                    cfg.input_dim
                )));
            }
            for t in 0..inp.nrows() {
                x.row_mut(t * b + k).assign(&inp.row(t));
            }
        }
        let bound = self.params.bind(g);
        let mut layer_in = g.leaf(x);
        for l in 0..cfg.layers {
            let cell = Lstm::bind(&bound, &format!("lstm{l}"), cfg.hidden_dim);
            let xp = cell.project(g, layer_in);
            let mut h = g.zeros(b, cfg.hidden_dim);
            let mut cs = g.zeros(b, cfg.hidden_dim);
            let mut hs = Vec::with_capacity(t_max);
            for t in 0..t_max {
                let xt = g.slice_rows(xp, t * b, (t + 1) * b);
                (h, cs) = cell.step(g, xt, h, cs);
                hs.push(h);
            }
            layer_in = g.concat_rows(&hs);
        }
        let out = Dense::bind(&bound, "out").apply(g, layer_in);
        Ok((out, t_max, bound))
    }

    /// Normalized-domain outputs, one row per input row.
    pub fn predict_normalized(&self, inputs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let mut g = Graph::new();
        let (out, _, _) = self.forward(&mut g, &[inputs])?;
        Ok(g.value(out).clone())
    }

    pub fn predict(&self, inputs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let y = self.predict_normalized(inputs)?;
        match &self.stats {
            Some(s) => s.invert(y.view()),
            None => Ok(y),
        }
    }

    fn batch_loss(&self, g: &mut Graph<T>, batch: &[&SequenceExample<T>]) -> Result<(Var, Bound)> {
        if batch.is_empty() {
            return Err(Error::Empty("empty batch"));
        }
        for ex in batch {
            if ex.inputs.nrows() != ex.targets.nrows() {
                return Err(Error::Shape(format!(
                    "{}: {} input rows vs {} target rows",
                    ex.id,
                    ex.inputs.nrows(),
                    ex.targets.nrows()
                )));
            }
            if ex.targets.ncols() != self.config.output_dim {
                return Err(Error::Shape(format!("{}: target width mismatch", ex.id)));
            }
        }
        let views: Vec<_> = batch.iter().map(|e| e.inputs.view()).collect();
        let (out, t_max, bound) = self.forward(g, &views)?;
        let b = batch.len();
        let d = self.config.output_dim;
        let mut target = Array2::zeros((t_max * b, d));
        let mut mask = Array2::zeros((t_max * b, d));
        let mut count = 0usize;
        for (k, ex) in batch.iter().enumerate() {
            for t in 0..ex.targets.nrows() {
                target.row_mut(t * b + k).assign(&ex.targets.row(t));
                mask.row_mut(t * b + k).fill(T::one());
                count += d;
            }
        }
        let sq = g.masked_square(out, target, mask);
        Ok((g.scale(sq, c::<T>(1.0 / count.max(1) as f64)), bound))
    }

    pub fn to_checkpoint(&self, kind: ModelKind, metadata: serde_json::Value) -> Result<Checkpoint> {
        let mut meta = metadata;
        if let (Some(obj), Some(stats)) = (meta.as_object_mut(), &self.stats) {
            obj.insert("stats".into(), serde_json::to_value(stats)?);
        }
        Ok(Checkpoint::new(kind, serde_json::to_value(&self.config)?, meta, &self.params))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, kind: ModelKind) -> Result<Self> {
        if ckpt.kind != kind {
            return Err(Error::Checkpoint(format!("expected {kind} checkpoint, found {}", ckpt.kind)));
        }
        let config: LstmConfig = serde_json::from_value(ckpt.config.clone())?;
        let fresh = LstmRegressor::<T>::new(config.clone(), 0)?;
        crate::nn::ensure_compatible(&fresh.params, &ckpt.params)?;
        let stats = match ckpt.metadata.get("stats") {
            Some(v) => Some(serde_json::from_value(v.clone())?),
            None => None,
        };
        Ok(LstmRegressor {
            config,
            params: ckpt.params_as(),
            stats,
        })
    }
}

impl<T: Float> Trainable<T> for LstmRegressor<T> {
    type Example = SequenceExample<T>;

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
        let (loss, bound) = self.batch_loss(&mut g, batch)?;
        let mut grads = g.backward(loss);
        let total = g.scalar(loss).to_f64_lossy();
        Ok((
            LossReport {
                total,
                parts: vec![("mse", total)],
            },
            bound.gradients(&g, &mut grads),
        ))
    }

    fn loss(&self, batch: &[&Self::Example]) -> Result<LossReport> {
        let mut g = Graph::new();
        let (loss, _) = self.batch_loss(&mut g, batch)?;
        let total = g.scalar(loss).to_f64_lossy();
        Ok(LossReport {
            total,
            parts: vec![("mse", total)],
        })
    }
}

/// Phoneme-level inputs for the duration model: one-hot identity, position
/// in the utterance, utterance length and a word-initial flag.
pub fn phoneme_inputs<T: Float>(seq: &PhonemeSequence, n_symbols: usize) -> Array2<T> {
    let l = seq.len();
    let mut x = Array2::zeros((l, n_symbols + POSITIONAL_FEATURES));
    for (j, (&id, sym)) in seq.ids.iter().zip(&seq.symbols).enumerate() {
        x[[j, id]] = T::one();
        x[[j, n_symbols]] = if l > 1 { c(j as f64 / (l - 1) as f64) } else { T::zero() };
        x[[j, n_symbols + 1]] = c((l as f64 / 100.0).min(1.0));
        let word_initial = j > 0 && seq.symbols[j - 1] == WB && sym != WB;
        x[[j, n_symbols + 2]] = if word_initial { T::one() } else { T::zero() };
    }
    x
}

/// Log-duration scaled by the log of the longest duration, so targets lie in
/// [0, 1].
fn encode_duration(frames: usize) -> f64 {
    (frames as f64).ln() / (MAX_DURATION_FRAMES as f64).ln()
}

fn decode_duration(v: f64) -> usize {
    let d = (v * (MAX_DURATION_FRAMES as f64).ln()).exp().round();
    (d.max(1.0) as usize).min(MAX_DURATION_FRAMES as usize)
}

#[derive(Debug, Clone)]
pub struct DurationModel<T: Float> {
    pub net: LstmRegressor<T>,
    pub n_symbols: usize,
}

impl<T: Float> DurationModel<T> {
    pub fn new(config: LstmConfig, n_symbols: usize, seed: u64) -> Result<Self> {
        if config.input_dim != n_symbols + POSITIONAL_FEATURES || config.output_dim != 1 {
            return Err(Error::Config(format!(
                "duration model needs input {} and output 1",
                n_symbols + POSITIONAL_FEATURES
            )));
        }
        Ok(DurationModel {
            net: LstmRegressor::new(config, seed)?,
            n_symbols,
        })
    }

    /// Training pair from aligned durations; `None` (with a warning) when a
    /// phoneme has zero frames.
    pub fn example(&self, id: &str, seq: &PhonemeSequence, durations: &[usize]) -> Option<SequenceExample<T>> {
        if durations.len() != seq.len() || durations.contains(&0) {
            tracing::warn!(id, "skipping utterance with zero-length or misaligned phoneme durations");
            return None;
        }
        let targets = Array2::from_shape_fn((durations.len(), 1), |(j, _)| c::<T>(encode_duration(durations[j])));
        Some(SequenceExample {
            id: id.to_string(),
            inputs: phoneme_inputs(seq, self.n_symbols),
            targets,
        })
    }

    /// Frames per phoneme, at least one.
    pub fn predict(&self, seq: &PhonemeSequence) -> Result<Vec<usize>> {
        let y = self.net.predict_normalized(phoneme_inputs::<T>(seq, self.n_symbols).view())?;
        Ok(y.column(0).iter().map(|v| decode_duration(v.to_f64_lossy())).collect())
    }
}

#[derive(Debug, Clone)]
pub struct AcousticModel<T: Float> {
    pub net: LstmRegressor<T>,
}

impl<T: Float> AcousticModel<T> {
    /// De-normalized World-style frames, one per input frame.
    pub fn predict_acoustic(&self, ling: &FrameLinguisticFeatures) -> Result<Array2<T>> {
        if ling.frames.ncols() != self.net.config.input_dim {
            return Err(Error::Shape(format!(
                "linguistic width {} vs model input {}",
                ling.frames.ncols(),
                self.net.config.input_dim
            )));
        }
        let x = ling.frames.mapv(T::from_f32_lossy);
        self.net.predict(x.view())
    }
}

/// Segments each utterance into its phonemes: uniform initialization, then
/// `iterations` rounds of re-estimating per-symbol mean frames over the whole
/// corpus and re-assigning frames to the nearest mean under a monotone
/// alignment (every phoneme keeps at least one frame).
///
/// Utterances with fewer frames than phonemes get `None`.
pub fn forced_align(
    utterances: &[(&PhonemeSequence, ArrayView2<'_, f32>)],
    n_symbols: usize,
    iterations: usize,
) -> Vec<Option<Vec<usize>>> {
    let mut durs: Vec<Option<Vec<usize>>> = utterances
        .iter()
        .map(|(seq, x)| uniform_durations(x.nrows(), seq.len()))
        .collect();
    for _ in 0..iterations {
        let dim = utterances.first().map(|(_, x)| x.ncols()).unwrap_or(0);
        let mut sums = Array2::<f64>::zeros((n_symbols, dim));
        let mut counts = vec![0usize; n_symbols];
        for ((seq, x), d) in utterances.iter().zip(&durs) {
            let Some(d) = d else { continue };
            let mut t = 0;
            for (&id, &n) in seq.ids.iter().zip(d) {
                for row in x.slice(s![t..t + n, ..]).rows() {
                    let mut acc = sums.row_mut(id);
                    acc.zip_mut_with(&row, |a, &v| *a += v as f64);
                }
                counts[id] += n;
                t += n;
            }
        }
        for (k, &n) in counts.iter().enumerate() {
            if n > 0 {
                sums.row_mut(k).mapv_inplace(|v| v / n as f64);
            }
        }
        for ((seq, x), d) in utterances.iter().zip(durs.iter_mut()) {
            if d.is_some() {
                *d = Some(monotone_assign(seq, *x, &sums));
            }
        }
    }
    durs
}

fn uniform_durations(frames: usize, phones: usize) -> Option<Vec<usize>> {
    if phones == 0 || frames < phones {
        return None;
    }
    Some(
        (0..phones)
            .map(|j| (j + 1) * frames / phones - j * frames / phones)
            .collect(),
    )
}

/// Minimum total squared distance segmentation by dynamic programming.
fn monotone_assign(seq: &PhonemeSequence, x: ArrayView2<'_, f32>, means: &Array2<f64>) -> Vec<usize> {
    let (t_len, n) = (x.nrows(), seq.len());
    let cost = |t: usize, j: usize| -> f64 {
        x.row(t)
            .iter()
            .zip(means.row(seq.ids[j]).iter())
            .map(|(&a, &m)| (a as f64 - m).powi(2))
            .sum()
    };
    let inf = f64::INFINITY;
    // acc[t][j]: best cost of frames 0..=t with frame t in phoneme j
    let mut acc = vec![vec![inf; n]; t_len];
    let mut from_prev = vec![vec![false; n]; t_len];
    acc[0][0] = cost(0, 0);
    for t in 1..t_len {
        for j in 0..n.min(t + 1) {
            let stay = acc[t - 1][j];
            let advance = if j > 0 { acc[t - 1][j - 1] } else { inf };
            let (best, adv) = if advance < stay { (advance, true) } else { (stay, false) };
            if best.is_finite() {
                acc[t][j] = best + cost(t, j);
                from_prev[t][j] = adv;
            }
        }
    }
    let mut durs = vec![0usize; n];
    let mut j = n - 1;
    for t in (0..t_len).rev() {
        durs[j] += 1;
        if t > 0 && from_prev[t][j] {
            j -= 1;
        }
    }
    durs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{fit, gradient_check, FitOptions};
    use crate::text::PhonemeInventory;
    use rand::Rng;

    fn micro() -> LstmConfig {
        LstmConfig {
            input_dim: 4,
            hidden_dim: 3,
            layers: 2,
            output_dim: 2,
            batch_size: 2,
            learning_rate: 1e-2,
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn frame_synchronous_and_deterministic() {
        let m = LstmRegressor::<f32>::new(micro(), 0).unwrap();
        let x = random(10, 4, 1).mapv(|v| v as f32);
        let a = m.predict(x.view()).unwrap();
        assert_eq!(a.dim(), (10, 2));
        assert_eq!(a, m.predict(x.view()).unwrap());
        assert!(m.predict(random(3, 5, 2).mapv(|v| v as f32).view()).is_err());
    }

    #[test]
    fn padding_does_not_leak_into_shorter_sequences() {
        let m = LstmRegressor::<f64>::new(micro(), 1).unwrap();
        let a = SequenceExample { id: "a".into(), inputs: random(4, 4, 3), targets: random(4, 2, 4) };
        let b = SequenceExample { id: "b".into(), inputs: random(9, 4, 5), targets: random(9, 2, 6) };
        let alone = m.loss(&[&a]).unwrap().total * 8.0;
        let both = m.loss(&[&a, &b]).unwrap().total * 26.0;
        let b_alone = m.loss(&[&b]).unwrap().total * 18.0;
        assert!((both - alone - b_alone).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = LstmRegressor::<f64>::new(micro(), 2).unwrap();
        let a = SequenceExample { id: "a".into(), inputs: random(5, 4, 7), targets: random(5, 2, 8) };
        let b = SequenceExample { id: "b".into(), inputs: random(3, 4, 9), targets: random(3, 2, 10) };
        let (_, grads) = m.loss_and_grads(&[&a, &b], None).unwrap();
        let report = gradient_check(
            &m.params,
            &grads,
            |p| {
                let mm = LstmRegressor { config: m.config.clone(), params: p.clone(), stats: None };
                mm.loss(&[&a, &b]).unwrap().total
            },
            1e-5,
            usize::MAX,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn zero_steps_or_zero_rate_leave_parameters_unchanged() {
        let mut m = LstmRegressor::<f32>::new(micro(), 3).unwrap();
        let before = m.params.clone();
        let ex = vec![SequenceExample {
            id: "a".into(),
            inputs: random(5, 4, 1).mapv(|v| v as f32),
            targets: random(5, 2, 2).mapv(|v| v as f32),
        }];
        let mut opts = FitOptions { steps: 0, batch_size: 1, learning_rate: 1e-2, seed: 0, decay_half_life: None };
        fit(&mut m, &ex, &opts).unwrap();
        assert_eq!(m.params, before);
        opts.steps = 5;
        opts.learning_rate = 0.0;
        fit(&mut m, &ex, &opts).unwrap();
        assert_eq!(m.params, before);
    }

    #[test]
    fn constant_durations_are_learned() {
        let inv = PhonemeInventory::default();
        let lex = crate::text::Lexicon::toy();
        let cfg = LstmConfig { hidden_dim: 16, layers: 1, ..LstmConfig::duration(inv.len()) };
        let mut dm = DurationModel::<f32>::new(cfg, inv.len(), 0).unwrap();
        let exs: Vec<_> = crate::corpus::toy::TOY_PHRASES[..6]
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                let seq = crate::text::text_to_phonemes(t, &lex, &inv).unwrap();
                dm.example(&format!("{i}"), &seq, &vec![8; seq.len()])
            })
            .collect();
        let opts = FitOptions { steps: 300, batch_size: 3, learning_rate: 1e-2, seed: 0, decay_half_life: None };
        fit(&mut dm.net, &exs, &opts).unwrap();
        let seq = crate::text::text_to_phonemes("judge my vow", &lex, &inv).unwrap();
        for d in dm.predict(&seq).unwrap() {
            assert!((7..=9).contains(&d), "{d}");
        }
        let seq0 = PhonemeSequence::from_symbols(&["sil"], &inv).unwrap();
        assert!(dm.example("z", &seq0, &[0]).is_none());
    }

    #[test]
    fn duration_decoding_is_clamped() {
        assert_eq!(decode_duration(-5.0), 1);
        assert_eq!(decode_duration(5.0), MAX_DURATION_FRAMES as usize);
        assert_eq!(decode_duration(encode_duration(8)), 8);
    }

    #[test]
    fn aligner_recovers_planted_segmentation() {
        let inv = PhonemeInventory::default();
        let seq = PhonemeSequence::from_symbols(&["sil", "aa", "s", "iy", "eos"], &inv).unwrap();
        let truth = [3usize, 12, 5, 9, 4];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let level = |j: usize| [0.0f32, 3.0, -2.0, 1.5, 0.5][j];
        let mut rows = Vec::new();
        for (j, &d) in truth.iter().enumerate() {
            for _ in 0..d {
                rows.extend([level(j) + rng.random_range(-0.2..0.2), -level(j)]);
            }
        }
        let x = Array2::from_shape_vec((rows.len() / 2, 2), rows).unwrap();
        let out = forced_align(&[(&seq, x.view())], inv.len(), 3);
        assert_eq!(out[0].as_deref(), Some(&truth[..]));
        let short = Array2::<f32>::zeros((3, 2));
        assert_eq!(forced_align(&[(&seq, short.view())], inv.len(), 3)[0], None);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = LstmRegressor::<f32>::new(micro(), 5).unwrap();
        let ck = m.to_checkpoint(ModelKind::Lstm, serde_json::json!({})).unwrap();
        let back = LstmRegressor::<f32>::from_checkpoint(&ck, ModelKind::Lstm).unwrap();
        assert_eq!(back.params, m.params);
        assert!(LstmRegressor::<f32>::from_checkpoint(&ck, ModelKind::Duration).is_err());
    }
}
