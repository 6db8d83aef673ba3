//! Training loop, evaluation and the repeated-seed driver.

mod adam;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPS};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featgraph::{FeatGraphError, ViewMatrices};
use crate::graphio::{DomainPair, Graph};
use crate::losses::{self, LossTerms, LossWeights};
use crate::model::{self, DomainInput, DropoutStreams, ForwardOutputs, GaaModel, Hyper, ModelError, Variant};
use crate::numcore::{NumError, Tape, TensorId};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    FeatGraph(#[from] FeatGraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("graph has no labels to evaluate against")]
    MissingLabels,
}

/// Everything that determines one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Dropout on the hidden GCN activation.
    pub dropout: f64,
    /// Dropout on the input of every GCN layer.
    pub layer_dropout: f64,
    pub hidden: usize,
    pub embed: usize,
    pub k: usize,
    pub weights: LossWeights,
    pub grl_lambda: f64,
    pub relu_last: bool,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let h = Hyper::default();
        TrainConfig {
            epochs: 100,
            lr: 5e-4,
            weight_decay: 5e-4,
            dropout: h.dropout,
            layer_dropout: h.layer_dropout,
            hidden: h.hidden,
            embed: h.embed,
            k: 3,
            weights: LossWeights::default(),
            grl_lambda: h.grl_lambda,
            relu_last: h.relu_last,
            seed: 0,
            variant: Variant::Gaa,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        for (name, rate) in [("dropout", self.dropout), ("layer_dropout", self.layer_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} must lie in [0, 1), got {rate}"));
            }
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if self.hidden == 0 || self.embed == 0 {
            return bad("hidden and embed sizes must be >= 1".into());
        }
        if !(self.grl_lambda >= 0.0 && self.grl_lambda.is_finite()) {
            return bad(format!("grl_lambda must be >= 0, got {}", self.grl_lambda));
        }
        self.weights.validate().map_err(TrainError::Config)
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            hidden: self.hidden,
            embed: self.embed,
            dropout: self.dropout,
            layer_dropout: self.layer_dropout,
            grl_lambda: self.grl_lambda,
            relu_last: self.relu_last,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub loss_total: f64,
    #[serde(rename = "loss_S")]
    pub loss_s: f64,
    #[serde(rename = "loss_A")]
    pub loss_a: f64,
    #[serde(rename = "loss_D")]
    pub loss_d: f64,
    #[serde(rename = "loss_T")]
    pub loss_t: f64,
}

/// Outcome of one run. `target_accuracy` is absent when the target graph
/// carries no labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub epochs: usize,
    pub per_epoch: Vec<EpochLosses>,
    pub target_accuracy: Option<f64>,
    pub wall_seconds: Option<f64>,
    pub config_echo: TrainConfig,
}

/// Builds the weighted training objective for one forward pass. Terms a
/// variant does not use stay `None`.
pub fn compose_loss(
    tape: &mut Tape,
    variant: Variant,
    out: &ForwardOutputs,
    source_labels: &[usize],
    weights: LossWeights,
) -> Result<(TensorId, LossTerms), TrainError> {
    let probs_s = out.probs_s.expect("every variant classifies the source");
    let mut terms = LossTerms {
        source: Some(losses::source_ce(tape, probs_s, source_labels)?),
        ..LossTerms::default()
    };
    if let (Some(ds), Some(dt)) = (out.dom_s, out.dom_t) {
        terms.domain = Some(losses::domain_bce(tape, ds, dt)?);
    }
    if variant.adapts() {
        if let Some(pt) = out.probs_t {
            terms.entropy = Some(losses::target_entropy(tape, pt)?);
        }
    }
    if variant.aligns() {
        if let (Some(a), Some(b), Some(c), Some(d)) = (out.att_s, out.att_t, out.att_fs, out.att_ft) {
            terms.align = Some(losses::alignment_loss(tape, a, b, c, d)?);
        }
    }
    let total = losses::total_loss(tape, terms, weights)?;
    Ok((total, terms))
}

/// Trains one model on `pair` following `cfg`.
///
/// Target labels are never read here except by the final [`evaluate`] call.
pub fn train_gaa(pair: &DomainPair, cfg: &TrainConfig) -> Result<(GaaModel, RunMetrics), TrainError> {
    cfg.validate()?;
    let started = Instant::now();
    let source_labels = pair
        .source
        .labels()
        .ok_or_else(|| TrainError::Config("source graph must be labeled".into()))?;

    let source_views = ViewMatrices::build(&pair.source, cfg.k)?;
    let target_views = ViewMatrices::build(&pair.target, cfg.k)?;
    let source = DomainInput {
        views: &source_views,
        features: pair.source.features(),
    };
    let target = DomainInput {
        views: &target_views,
        features: pair.target.features(),
    };

    let mut model = GaaModel::init(
        cfg.variant,
        cfg.hyper(),
        pair.source.feature_dim(),
        pair.num_classes(),
        cfg.k,
        cfg.seed,
    );
    let mut streams = DropoutStreams::new(cfg.seed);
    let mut adam = AdamState::new(model.named_params().into_iter().map(|(_, m)| m));
    let mut tape = Tape::new();
    let mut per_epoch = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        tape.clear();
        let bound = model.bind(&mut tape);
        let out = model::forward_all(&mut tape, &model, &bound, source, target, true, &mut streams)?;

        let (total, terms) = compose_loss(&mut tape, cfg.variant, &out, source_labels, cfg.weights)?;
        let value = |id: Option<_>| id.map_or(0.0, |id| tape.scalar(id));
        let record = EpochLosses {
            epoch,
            loss_total: tape.scalar(total),
            loss_s: value(terms.source),
            loss_a: value(terms.align),
            loss_d: value(terms.domain),
            loss_t: value(terms.entropy),
        };
        if !record.loss_total.is_finite() {
            return Err(TrainError::NonFinite { epoch });
        }
        per_epoch.push(record);

        tape.backward(total)?;
        let mut grads = bound.grads(&tape);
        adam_step(&mut model.params_mut(), &mut grads, &mut adam, cfg.lr, cfg.weight_decay);
    }

    let target_accuracy = match pair.target.labels() {
        Some(_) => Some(evaluate(&model, &pair.target)?),
        None => None,
    };
    let metrics = RunMetrics {
        seed: cfg.seed,
        epochs: cfg.epochs,
        per_epoch,
        target_accuracy,
        wall_seconds: Some(started.elapsed().as_secs_f64()),
        config_echo: cfg.clone(),
    };
    Ok((model, metrics))
}

/// Fraction of nodes whose arg-max class (lowest index on ties) equals the label.
pub fn evaluate(model: &GaaModel, graph: &Graph) -> Result<f64, TrainError> {
    let labels = graph.labels().ok_or(TrainError::MissingLabels)?;
    let probs = model::predict_probs(model, graph)?;
    Ok(accuracy(&probs.argmax_rows(), labels))
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Worker count for parallel runs: `GAA_THREADS` when set, else the machine's
/// available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("GAA_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` over `items` on at most [`worker_threads`] threads, returning
/// results in input order.
pub fn parallel_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let threads = worker_threads().min(items.len()).max(1);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepeatedSummary {
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
    pub runs: Vec<RunMetrics>,
}

/// Trains with seeds `cfg.seed, cfg.seed + 1, …` and summarizes target accuracy.
pub fn run_repeated(pair: &DomainPair, cfg: &TrainConfig, n_runs: usize) -> Result<RepeatedSummary, TrainError> {
    if n_runs == 0 {
        return Err(TrainError::Config("n_runs must be >= 1".into()));
    }
    if pair.target.labels().is_none() {
        return Err(TrainError::MissingLabels);
    }
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let results = parallel_map(&seeds, |&seed| {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        train_gaa(pair, &cfg).map(|(_, m)| m)
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let accuracies: Vec<f64> = runs
        .iter()
        .map(|r| r.target_accuracy.expect("target is labeled"))
        .collect();
    let (mean, std) = mean_std(&accuracies);
    Ok(RepeatedSummary {
        mean,
        std,
        accuracies,
        runs,
    })
}
