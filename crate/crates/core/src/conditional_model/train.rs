use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{group_names, ConditionalModel, Gradient};
use crate::distribution_grid::{DistributionGrid, EPSILON};
use crate::{Error, Result};

/// Mean over cells of the soft-label cross-entropy −Σ_k t_k ln p_k.
pub fn loss(pred: &DistributionGrid, target: &DistributionGrid) -> Result<f64> {
    if pred.g() != target.g() || pred.k() != target.k() {
        return Err(Error::Dimension(format!(
            "prediction (g={}, K={}) and target (g={}, K={}) differ",
            pred.g(),
            pred.k(),
            target.g(),
            target.k()
        )));
    }
    let total: f64 = pred
        .probs()
        .iter()
        .zip(target.probs())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * p.max(EPSILON).ln())
        .sum();
    Ok(total / pred.cells() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub optimizer: Optimizer,
    /// Standard deviation multiplier of the hidden-layer init.
    pub init_scale: f64,
    /// Cap on chains visited per epoch; 0 visits all.
    pub max_chains_per_epoch: usize,
    /// Probability that a step's input is the model's own previous prediction
    /// rather than the previous target.
    pub self_feed: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 4,
            batch_size: 16,
            seed: 0,
            clip_norm: 5.0,
            optimizer: Optimizer::Sgd,
            init_scale: 1.0,
            max_chains_per_epoch: 0,
            self_feed: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.self_feed) {
            return Err(Error::Config(format!("self-feed probability {} outside [0, 1]", self.self_feed)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        Ok(())
    }
}

/// One supervised step: previous distribution, phrase, target distribution.
#[derive(Clone, Debug)]
pub struct TrainPair {
    pub z_prev: DistributionGrid,
    pub phrase: String,
    pub target: DistributionGrid,
}

/// Consecutive steps of one description. Step t takes the target of step t−1
/// (or `start` for the first step) as input, unless self-feeding replaces it
/// with the model's own previous prediction.
#[derive(Clone, Debug)]
pub struct TrainChain {
    pub start: DistributionGrid,
    pub steps: Vec<(String, DistributionGrid)>,
}

impl From<TrainPair> for TrainChain {
    fn from(p: TrainPair) -> Self {
        Self {
            start: p.z_prev,
            steps: vec![(p.phrase, p.target)],
        }
    }
}

/// Random-access supply of training chains, so large sets need not be held in memory.
pub trait ChainSource {
    fn len(&self) -> usize;
    fn chain(&self, index: usize) -> Result<TrainChain>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ChainSource for [TrainPair] {
    fn len(&self) -> usize {
        <[TrainPair]>::len(self)
    }
    fn chain(&self, index: usize) -> Result<TrainChain> {
        self.get(index)
            .cloned()
            .map(TrainChain::from)
            .ok_or_else(|| Error::NotFound(format!("training pair {index}")))
    }
}

impl ChainSource for Vec<TrainPair> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn chain(&self, index: usize) -> Result<TrainChain> {
        self.as_slice().chain(index)
    }
}

impl ChainSource for Vec<TrainChain> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn chain(&self, index: usize) -> Result<TrainChain> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("training chain {index}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean step loss of each epoch, measured before each batch update.
    pub epoch_loss: Vec<f64>,
    /// Loss of the first step of the first chain under the initial parameters.
    pub initial_loss: f64,
    pub steps: usize,
    pub parameter_count: usize,
}

struct AdamState {
    m: Gradient,
    v: Gradient,
    t: i32,
}

/// Mini-batch training with hand-written backpropagation. A batch holds
/// `batch_size` chains; every step of every chain contributes equally.
pub fn train<S: ChainSource + ?Sized>(
    model: &mut ConditionalModel,
    data: &S,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("no training data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = Gradient::zeros_like(model);
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| AdamState {
        m: Gradient::zeros_like(model),
        v: Gradient::zeros_like(model),
        t: 0,
    });
    let first = data.chain(0)?;
    let (phrase, target) = first
        .steps
        .first()
        .ok_or_else(|| Error::Config("training chain without steps".into()))?;
    let mut report = TrainReport {
        initial_loss: loss(&model.predict_text(&first.start, phrase)?, target)?,
        parameter_count: model.parameter_count(),
        ..Default::default()
    };
    let per_epoch = match config.max_chains_per_epoch {
        0 => data.len(),
        n => n.min(data.len()),
    };
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut epoch_steps = 0usize;
        for batch in order[..per_epoch].chunks(config.batch_size) {
            grad.clear();
            let chains = batch.iter().map(|&i| data.chain(i)).collect::<Result<Vec<_>>>()?;
            let n_steps: usize = chains.iter().map(|c| c.steps.len()).sum();
            if n_steps == 0 {
                continue;
            }
            let w = 1.0 / n_steps as f64;
            for (chain, &i) in chains.iter().zip(batch) {
                let mut input = chain.start.clone();
                for (phrase, target) in &chain.steps {
                    let b = model.embed(phrase);
                    let (l, pred) = model.loss_and_grad(&input, &b, target, &mut grad, w)?;
                    if !l.is_finite() {
                        return Err(Error::Numeric(format!(
                            "non-finite loss {l} at epoch {epoch}, chain {i} (phrase {phrase:?})"
                        )));
                    }
                    epoch_total += l;
                    input = if config.self_feed > 0.0 && rng.gen::<f64>() < config.self_feed {
                        pred
                    } else {
                        target.clone()
                    };
                }
            }
            epoch_steps += n_steps;
            let norm = grad.norm();
            if !norm.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient norm at epoch {epoch}")));
            }
            if norm > config.clip_norm {
                grad.scale(config.clip_norm / norm);
            }
            apply(model, &grad, config.learning_rate, adam.as_mut());
            report.steps += 1;
        }
        let mean = epoch_total / epoch_steps.max(1) as f64;
        log::info!("epoch {}: mean loss {:.6}", epoch + 1, mean);
        report.epoch_loss.push(mean);
    }
    if !model.all_finite() {
        return Err(Error::Numeric("training produced non-finite parameters".into()));
    }
    Ok(report)
}

fn apply(model: &mut ConditionalModel, grad: &Gradient, lr: f64, adam: Option<&mut AdamState>) {
    match adam {
        None => {
            for (p, g) in model.groups_mut().into_iter().zip(grad.groups()) {
                for (p, g) in p.iter_mut().zip(g) {
                    *p -= lr * g;
                }
            }
        }
        Some(state) => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            state.t += 1;
            let c1 = 1.0 - B1.powi(state.t);
            let c2 = 1.0 - B2.powi(state.t);
            let params = model.groups_mut();
            let ms = state.m.groups_mut();
            let vs = state.v.groups_mut();
            for (((p, g), m), v) in params.into_iter().zip(grad.groups()).zip(ms).zip(vs) {
                for i in 0..p.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

/// Worst parameter of one gradient check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub group: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the analytic gradient of every parameter group against central
/// differences of the loss. `corrupt` is applied to the analytic gradient first,
/// so tests can confirm the checker catches a broken backward pass.
pub fn grad_check_with(
    model: &ConditionalModel,
    pair: &TrainPair,
    h: f64,
    corrupt: impl Fn(&mut Gradient),
) -> Result<GradCheck> {
    let b = model.embed(&pair.phrase);
    let mut grad = Gradient::zeros_like(model);
    model.loss_and_grad(&pair.z_prev, &b, &pair.target, &mut grad, 1.0)?;
    corrupt(&mut grad);
    let eval = |m: &ConditionalModel| -> Result<f64> {
        let c = m.project(&b)?;
        loss(&m.predict(&pair.z_prev, &c)?, &pair.target)
    };
    let names = group_names(model.config.depth);
    let analytic = grad.groups();
    let mut probe = model.clone();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        group: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (gi, name) in names.iter().enumerate() {
        for i in 0..analytic[gi].len() {
            let orig = probe.groups()[gi][i];
            probe.groups_mut()[gi][i] = orig + h;
            let up = eval(&probe)?;
            probe.groups_mut()[gi][i] = orig - h;
            let down = eval(&probe)?;
            probe.groups_mut()[gi][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[gi][i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            worst.checked += 1;
            if rel > worst.max_rel_error || worst.group.is_empty() {
                worst = GradCheck {
                    max_rel_error: rel,
                    group: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    checked: worst.checked,
                };
            }
        }
    }
    Ok(worst)
}

pub fn grad_check(model: &ConditionalModel, pair: &TrainPair, h: f64) -> Result<GradCheck> {
    grad_check_with(model, pair, h, |_| {})
}
