use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{backward, forward, DropoutPlan};
use super::loss::{loss, LossKind, LossOutput, MetricCounts, Targets};
use super::model::ModelSpec;
use super::optim::{Adam, AdamConstants};
use super::params::{add_weight_penalty_grad, weight_penalty, Parameters};
use crate::error::{Error, Result};
use crate::graph::Splits;
use crate::kernels::KernelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Graphs per update in inductive training.
    pub batch_size: usize,
    /// L2 coefficient on weight matrices.
    pub weight_decay: f64,
    /// L2 coefficient on depthwise vectors.
    pub depthwise_weight_decay: f64,
    pub input_dropout: f64,
    pub kernel_dropout: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub adam: AdamConstants,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 1,
            weight_decay: 0.0,
            depthwise_weight_decay: 0.0,
            input_dropout: 0.0,
            kernel_dropout: 0.0,
            seed: 0,
            loss: LossKind::SoftmaxCrossEntropy,
            adam: AdamConstants::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        for (name, r) in [("input dropout", self.input_dropout), ("kernel dropout", self.kernel_dropout)] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("{name} rate {r} is outside [0, 1)"));
            }
        }
        if !(self.weight_decay >= 0.0 && self.depthwise_weight_decay >= 0.0) {
            return bad("weight decay must be nonnegative".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }

    fn dropout_plan(&self, seed: u64) -> Option<DropoutPlan> {
        (self.input_dropout > 0.0 || self.kernel_dropout > 0.0).then_some(DropoutPlan {
            input_rate: self.input_dropout,
            kernel_rate: self.kernel_dropout,
            seed,
        })
    }
}

/// Features, supports and targets of one graph.
#[derive(Debug, Clone)]
pub struct GraphSample {
    pub features: DMatrix<f64>,
    pub kernels: Option<KernelSet>,
    pub targets: Targets,
}

impl GraphSample {
    pub fn supports(&self) -> usize {
        self.kernels.as_ref().map_or(0, KernelSet::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: Parameters,
    pub history: Vec<EpochMetrics>,
}

/// Loss and its gradient for one graph.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &Parameters,
    sample: &GraphSample,
    mask: Option<&[bool]>,
    plan: Option<&DropoutPlan>,
    kind: LossKind,
) -> Result<(LossOutput, Parameters)> {
    let k = sample.kernels.as_ref();
    let (out, cache) = forward(spec, params, &sample.features, k, plan)?;
    let l = loss(&out, &sample.targets, mask, kind)?;
    let grads = backward(spec, params, k, plan, &cache, &l.grad)?;
    Ok((l, grads))
}

/// Training objective of one graph: loss plus weight penalties.
pub fn objective(
    spec: &ModelSpec,
    params: &Parameters,
    sample: &GraphSample,
    mask: Option<&[bool]>,
    plan: Option<&DropoutPlan>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (out, _) = forward(spec, params, &sample.features, sample.kernels.as_ref(), plan)?;
    let l = loss(&out, &sample.targets, mask, cfg.loss)?;
    Ok(l.loss + weight_penalty(params, cfg.weight_decay, cfg.depthwise_weight_decay))
}

/// Gradient of [`objective`].
pub fn objective_grad(
    spec: &ModelSpec,
    params: &Parameters,
    sample: &GraphSample,
    mask: Option<&[bool]>,
    plan: Option<&DropoutPlan>,
    cfg: &TrainConfig,
) -> Result<Parameters> {
    let (_, mut g) = loss_and_grad(spec, params, sample, mask, plan, cfg.loss)?;
    add_weight_penalty_grad(params, &mut g, cfg.weight_decay, cfg.depthwise_weight_decay);
    Ok(g)
}

/// Dropout-free loss and metric counts.
pub fn evaluate(
    spec: &ModelSpec,
    params: &Parameters,
    sample: &GraphSample,
    mask: Option<&[bool]>,
    kind: LossKind,
) -> Result<LossOutput> {
    let (out, _) = forward(spec, params, &sample.features, sample.kernels.as_ref(), None)?;
    loss(&out, &sample.targets, mask, kind)
}

/// Mean per-graph loss and pooled metric over `idx`; NaN for an empty set.
pub fn evaluate_set(
    spec: &ModelSpec,
    params: &Parameters,
    samples: &[GraphSample],
    idx: &[usize],
    kind: LossKind,
) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut total = 0.0;
    let mut counts = MetricCounts::default();
    for &i in idx {
        let l = evaluate(spec, params, &samples[i], None, kind)?;
        total += l.loss;
        counts.merge(l.counts);
    }
    Ok((total / idx.len() as f64, counts.value(kind)))
}

fn masked_eval(spec: &ModelSpec, params: &Parameters, sample: &GraphSample, mask: &[bool], kind: LossKind) -> Result<(f64, f64)> {
    if !mask.iter().any(|&m| m) {
        return Ok((f64::NAN, f64::NAN));
    }
    let l = evaluate(spec, params, sample, Some(mask), kind)?;
    Ok((l.loss, l.counts.value(kind)))
}

fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let init = ChaCha8Rng::seed_from_u64(seed);
    let mut run = ChaCha8Rng::seed_from_u64(seed);
    run.set_stream(1);
    (init, run)
}

fn initial_params(spec: &ModelSpec, supports: usize, init: Option<Parameters>, rng: &mut ChaCha8Rng) -> Result<Parameters> {
    match init {
        Some(p) => {
            p.check(spec, supports)?;
            Ok(p)
        }
        None => Parameters::init(spec, supports, rng),
    }
}

/// Full-graph training on the nodes of `splits.train`; one update per epoch.
/// Per-epoch metrics are dropout-free evaluations after the update.
pub fn train_transductive(
    spec: &ModelSpec,
    sample: &GraphSample,
    splits: &Splits,
    cfg: &TrainConfig,
    init: Option<Parameters>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let (mut init_rng, mut run_rng) = rngs(cfg.seed);
    let mut params = initial_params(spec, sample.supports(), init, &mut init_rng)?;
    let mut opt = Adam::new(&params, cfg.learning_rate, cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let plan = cfg.dropout_plan(run_rng.next_u64());
        let (l, mut grads) = loss_and_grad(spec, &params, sample, Some(&splits.train), plan.as_ref(), cfg.loss)?;
        let obj = l.loss + weight_penalty(&params, cfg.weight_decay, cfg.depthwise_weight_decay);
        if !obj.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        add_weight_penalty_grad(&params, &mut grads, cfg.weight_decay, cfg.depthwise_weight_decay);
        opt.step(&mut params, &grads);
        if !params.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let (train_loss, train_acc) = masked_eval(spec, &params, sample, &splits.train, cfg.loss)?;
        let (val_loss, val_acc) = masked_eval(spec, &params, sample, &splits.val, cfg.loss)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: train {train_loss:.4}/{train_acc:.4} val {val_loss:.4}/{val_acc:.4}");
        history.push(EpochMetrics { epoch, train_loss, train_acc, val_loss, val_acc });
    }
    Ok(TrainResult { params, history })
}

/// Training over whole graphs. Each epoch shuffles `train`, accumulates the
/// mean gradient over each batch of `batch_size` graphs and updates once
/// per batch.
pub fn train_inductive(
    spec: &ModelSpec,
    samples: &[GraphSample],
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
    init: Option<Parameters>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let first = train.first().ok_or(Error::EmptyMask)?;
    let supports = samples[*first].supports();
    if let Some(i) = train.iter().chain(val).find(|&&i| i >= samples.len() || samples[i].supports() != supports) {
        return Err(Error::Dataset(format!("graph {i} is missing or has a different number of supports")));
    }
    let (mut init_rng, mut run_rng) = rngs(cfg.seed);
    let mut params = initial_params(spec, supports, init, &mut init_rng)?;
    let mut opt = Adam::new(&params, cfg.learning_rate, cfg.adam);
    let mut order = train.to_vec();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut run_rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let plan = cfg.dropout_plan(run_rng.next_u64());
                let (l, g) = loss_and_grad(spec, &params, &samples[i], None, plan.as_ref(), cfg.loss)?;
                batch_loss += l.loss;
                grads.axpy(1.0 / batch.len() as f64, &g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            add_weight_penalty_grad(&params, &mut grads, cfg.weight_decay, cfg.depthwise_weight_decay);
            opt.step(&mut params, &grads);
            if !params.is_finite() {
                return Err(Error::Diverged { epoch });
            }
        }
        let (train_loss, train_acc) = evaluate_set(spec, &params, samples, train, cfg.loss)?;
        let (val_loss, val_acc) = evaluate_set(spec, &params, samples, val, cfg.loss)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: train {train_loss:.4}/{train_acc:.4} val {val_loss:.4}/{val_acc:.4}");
        history.push(EpochMetrics { epoch, train_loss, train_acc, val_loss, val_acc });
    }
    Ok(TrainResult { params, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gcn_kernel, KernelTag};
    use crate::nn::model::ArchitectureOptions;

    /// Two 10-node cliques joined by one edge, one feature separating them.
    fn two_blocks() -> (GraphSample, Splits) {
        let n = 20;
        let mut edges = Vec::new();
        for b in 0..2 {
            for i in 0..10 {
                for j in i + 1..10 {
                    edges.push((b * 10 + i, b * 10 + j, 1.0));
                }
            }
        }
        edges.push((9, 10, 1.0));
        let feats = DMatrix::from_fn(n, 2, |i, j| if (i < 10) == (j == 0) { 1.0 } else { 0.2 });
        let g = crate::graph::Graph::from_edges(n, &edges, feats.clone()).unwrap();
        let k = KernelSet::new(vec![gcn_kernel(&g)], vec![KernelTag::Gcn]).unwrap();
        let labels = (0..n).map(|i| Some(usize::from(i >= 10))).collect();
        let sample = GraphSample { features: feats, kernels: Some(k), targets: Targets::Classes(labels) };
        let splits = Splits {
            train: (0..n).map(|i| i % 2 == 0).collect(),
            val: (0..n).map(|i| i % 2 == 1).collect(),
            test: vec![false; n],
        };
        (sample, splits)
    }

    #[test]
    fn separable_pilot_reaches_full_train_accuracy() {
        let (sample, splits) = two_blocks();
        let spec = ModelSpec::parse("G2", 2, ArchitectureOptions::default()).unwrap();
        let cfg = TrainConfig { epochs: 200, learning_rate: 0.05, ..Default::default() };
        let r = train_transductive(&spec, &sample, &splits, &cfg, None).unwrap();
        assert_eq!(r.history.len(), 200);
        assert_eq!(r.history.last().unwrap().train_acc, 1.0);
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        let (sample, splits) = two_blocks();
        let spec = ModelSpec::parse("DSG3-DSG2", 2, ArchitectureOptions::default()).unwrap();
        let cfg = TrainConfig { epochs: 5, learning_rate: 0.0, input_dropout: 0.5, kernel_dropout: 0.5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p0 = Parameters::init(&spec, 1, &mut rng).unwrap();
        let r = train_transductive(&spec, &sample, &splits, &cfg, Some(p0.clone())).unwrap();
        assert_eq!(r.params, p0);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (sample, splits) = two_blocks();
        let spec = ModelSpec::parse("DSG4-DSG2", 2, ArchitectureOptions::default()).unwrap();
        let cfg = TrainConfig { epochs: 10, input_dropout: 0.3, kernel_dropout: 0.3, seed: 9, ..Default::default() };
        let a = train_transductive(&spec, &sample, &splits, &cfg, None).unwrap();
        let b = train_transductive(&spec, &sample, &splits, &cfg, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn divergence_reports_epoch() {
        let (mut sample, splits) = two_blocks();
        sample.features[(0, 0)] = f64::INFINITY;
        let spec = ModelSpec::parse("G2", 2, ArchitectureOptions::default()).unwrap();
        let cfg = TrainConfig { epochs: 3, ..Default::default() };
        assert!(matches!(
            train_transductive(&spec, &sample, &splits, &cfg, None),
            Err(Error::Diverged { epoch: 1 })
        ));
    }

    #[test]
    fn invalid_rates_rejected() {
        for cfg in [
            TrainConfig { input_dropout: 1.0, ..Default::default() },
            TrainConfig { kernel_dropout: -0.1, ..Default::default() },
            TrainConfig { learning_rate: -1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
