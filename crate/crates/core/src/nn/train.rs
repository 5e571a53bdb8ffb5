//! Model-agnostic optimization step.

use rand_chacha::ChaCha8Rng;

use super::optim::Adam;
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::scalar::Float;

/// Scalar loss with its named components.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub parts: Vec<(&'static str, f64)>,
}

impl LossReport {
    pub fn part(&self, name: &str) -> Option<f64> {
        self.parts.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

pub trait Trainable<T: Float> {
    type Example;

    fn example_id(example: &Self::Example) -> &str;

    fn params(&self) -> &ParamSet<T>;

    fn params_mut(&mut self) -> &mut ParamSet<T>;

    /// Loss and parameter gradients. `rng` enables training-time noise
    /// (dropout); `None` gives the deterministic evaluation-mode loss.
    fn loss_and_grads(
        &self,
        batch: &[&Self::Example],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(LossReport, ParamSet<T>)>;

    /// Evaluation-mode loss without gradients.
    fn loss(&self, batch: &[&Self::Example]) -> Result<LossReport>;
}

/// One optimizer update. A non-finite loss or gradient aborts without
/// touching the parameters and reports the offending batch.
pub fn train_step<T: Float, M: Trainable<T>>(
    model: &mut M,
    opt: &mut Adam<T>,
    batch: &[&M::Example],
    rng: &mut ChaCha8Rng,
) -> Result<LossReport> {
    let (report, grads) = model.loss_and_grads(batch, Some(rng))?;
    if !report.total.is_finite() || !grads.all_finite() {
        let batch_ids: Vec<String> = batch.iter().map(|e| M::example_id(e).to_string()).collect();
        tracing::error!(loss = report.total, ?batch_ids, "non-finite loss");
        return Err(Error::NonFiniteLoss { batch_ids });
    }
    opt.step(model.params_mut(), &grads);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Halves the learning rate every this many steps.
    #[serde(default)]
    pub decay_half_life: Option<usize>,
}

/// Runs `steps` updates over shuffled mini-batches (reshuffled each pass)
/// and returns the training loss of every step.
pub fn fit<T: Float, M: Trainable<T>>(
    model: &mut M,
    examples: &[M::Example],
    opts: &FitOptions,
) -> Result<Vec<LossReport>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if opts.steps == 0 {
        return Ok(Vec::new());
    }
    if examples.is_empty() {
        return Err(Error::Empty("no training examples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut opt = Adam::new(super::optim::AdamConfig {
        learning_rate: opts.learning_rate,
        ..Default::default()
    });
    let bs = opts.batch_size.clamp(1, examples.len());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        if cursor + bs > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch: Vec<&M::Example> = order[cursor..cursor + bs].iter().map(|&i| &examples[i]).collect();
        cursor += bs;
        opt.config.learning_rate = match opts.decay_half_life {
            Some(h) if h > 0 => opts.learning_rate * 0.5f64.powf(step as f64 / h as f64),
            _ => opts.learning_rate,
        };
        curve.push(train_step(model, &mut opt, &batch, &mut rng)?);
    }
    Ok(curve)
}
