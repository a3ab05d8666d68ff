//! Deterministic SE training and the finite-difference gradient check.
//!
//! Only structuring-element weights train. Each block is paired with its
//! objective: an opening block with the text-centre loss, a closing block
//! with the text-map loss. With no prediction stub the objective is
//! `2 * L_TC + 1 * L_TM`, and since the blocks share no weights each one
//! receives only its own weighted term.

pub mod gradcheck;
pub mod optim;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::loss::{balanced_ce_ohem_grad, balanced_ce_tc_grad, total_loss, LossBundle, DEFAULT_WEIGHTS};
use crate::map::{BinaryMap, FeatureMap};
use crate::morph::{save_checkpoint, MorphBlock};

pub use gradcheck::{grad_check, linear_loss, random_instance, GradCheckReport, LossFn, DEFAULT_EPS, DEFAULT_TOL};
pub use optim::{adam_step, sgd_step, AdamParams, OptimizerKind, SlotState};

pub const LOSS_CSV_HEADER: &str = "epoch,l_tc,l_tm,total";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr_decay_factor: f64,
    /// Epochs between decays; 0 disables decay.
    pub lr_decay_every: usize,
    pub adam: AdamParams,
    /// Worker cap for per-sample gradients; `None` uses the ambient pool.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Sgd,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 100,
            batch_size: 8,
            seed: 0,
            lr_decay_factor: 0.1,
            lr_decay_every: 100,
            adam: AdamParams::default(),
            threads: None,
        }
    }
}

impl TrainConfig {
    /// Pretraining optimizer: Adam at 1e-3.
    pub fn adam() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            ..Self::default()
        }
    }

    /// Benchmark recipe for both blocks: the pretraining optimizer for ten
    /// epochs.
    pub fn standard() -> Self {
        TrainConfig {
            epochs: 10,
            seed: 1,
            ..Self::adam()
        }
    }

    /// `lr = 0` is accepted as a frozen run.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be finite and non-negative", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad(format!("lr decay factor {} outside (0, 1]", self.lr_decay_factor));
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.lr_decay_every == 0 {
            return self.lr;
        }
        self.lr * self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }
}

/// Which loss term supervises a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Class-balanced text-centre loss, weight 2.
    TextCenter,
    /// OHEM text-map loss, weight 1.
    TextMap,
}

impl Objective {
    pub fn weight(self) -> f64 {
        match self {
            Objective::TextCenter => DEFAULT_WEIGHTS[1],
            Objective::TextMap => DEFAULT_WEIGHTS[4],
        }
    }

    pub fn loss_grad(self, logits: &FeatureMap, target: &BinaryMap) -> Result<(f64, FeatureMap)> {
        match self {
            Objective::TextCenter => balanced_ce_tc_grad(logits, target),
            Objective::TextMap => balanced_ce_ohem_grad(logits, target),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: FeatureMap,
    pub target: BinaryMap,
}

/// A block, its objective and the samples it trains on.
#[derive(Debug, Clone)]
pub struct BlockTask<'a> {
    pub name: String,
    pub block: MorphBlock,
    pub objective: Objective,
    pub samples: &'a [Sample],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: LossBundle,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub blocks: Vec<(String, MorphBlock)>,
    /// Optimizer steps taken per block.
    pub steps: Vec<usize>,
}

impl TrainReport {
    pub fn block(&self, name: &str) -> Option<&MorphBlock> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }

    /// Loss curve without timings, so equal runs give equal bytes.
    pub fn loss_csv(&self) -> String {
        let mut s = format!("{LOSS_CSV_HEADER}\n");
        for r in &self.history {
            writeln!(s, "{},{},{},{}", r.epoch, r.losses.l_tc, r.losses.l_tm, r.losses.total).unwrap();
        }
        s
    }

    /// Writes the checkpoint directory and `loss.csv` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let blocks: Vec<(&str, &MorphBlock)> = self.blocks.iter().map(|(n, b)| (n.as_str(), b)).collect();
        save_checkpoint(dir.join("checkpoint"), &blocks)?;
        let path = dir.join("loss.csv");
        std::fs::write(&path, self.loss_csv()).map_err(|e| Error::io(&path, e))
    }
}

/// Loss and per-layer SE gradients of one sample.
pub fn sample_gradient(block: &MorphBlock, objective: Objective, sample: &Sample) -> Result<(f64, Vec<Vec<f64>>)> {
    let (out, trace) = block.forward_traced(&sample.input)?;
    let readout = block.readout();
    let (loss, g_logits) = objective.loss_grad(&readout.logits(&out), &sample.target)?;
    let (_, grads) = block.backward_traced(&trace, &readout.backward(&g_logits))?;
    Ok((loss, grads))
}

/// Mean objective of `block` over `samples`, without touching gradients.
pub fn evaluate_loss(block: &MorphBlock, objective: Objective, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses = samples
        .par_iter()
        .map(|s| {
            let out = block.forward_traced(&s.input)?.0;
            Ok(objective.loss_grad(&block.readout().logits(&out), &s.target)?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Trains every trainable block in `tasks` for `cfg.epochs` epochs.
///
/// Per-sample gradients run in parallel and are reduced in sample order, so
/// a fixed seed gives bitwise-identical results for any thread count.
pub fn train(tasks: Vec<BlockTask<'_>>, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if tasks.is_empty() || tasks.iter().any(|t| t.samples.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| train_inner(tasks, cfg)),
        None => train_inner(tasks, cfg),
    }
}

fn train_inner(mut tasks: Vec<BlockTask<'_>>, cfg: &TrainConfig) -> Result<TrainReport> {
    let mut slots: Vec<Vec<SlotState>> = tasks
        .iter()
        .map(|t| t.block.layers().iter().map(|l| SlotState::new(l.se().weights().len())).collect())
        .collect();
    let mut report = TrainReport {
        history: Vec::with_capacity(cfg.epochs),
        blocks: Vec::new(),
        steps: vec![0; tasks.len()],
    };
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        let mut terms = [0.0; 5];
        for ti in 0..tasks.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((epoch as u64) << 16) | ti as u64);
            let mut order: Vec<usize> = (0..tasks[ti].samples.len()).collect();
            order.shuffle(&mut rng);
            let mut sum = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let task = &tasks[ti];
                let results = batch
                    .par_iter()
                    .map(|&i| sample_gradient(&task.block, task.objective, &task.samples[i]))
                    .collect::<Result<Vec<_>>>();
                let results = match results {
                    Ok(r) => r,
                    Err(Error::NonFinite(what)) => return Err(diverged(report, &tasks, epoch, what)),
                    Err(e) => return Err(e),
                };
                let mut grads: Vec<Vec<f64>> = task.block.layers().iter().map(|l| vec![0.0; l.se().weights().len()]).collect();
                for (loss, g) in &results {
                    sum += loss;
                    for (acc, gl) in grads.iter_mut().zip(g) {
                        for (a, v) in acc.iter_mut().zip(gl) {
                            *a += v;
                        }
                    }
                }
                if !sum.is_finite() {
                    let reason = format!("{} loss is not finite", task.name);
                    return Err(diverged(report, &tasks, epoch, reason));
                }
                if !task.block.trainable() {
                    continue;
                }
                let scale = task.objective.weight() / batch.len() as f64;
                let mut failure = None;
                for (k, layer) in tasks[ti].block.layers_mut().iter_mut().enumerate() {
                    let g: Vec<f64> = grads[k].iter().map(|v| v * scale).collect();
                    let se = layer.se_mut();
                    se.zero_grad();
                    se.accumulate_grad(&g);
                    let step = match cfg.optimizer {
                        OptimizerKind::Sgd => sgd_step(se, &mut slots[ti][k].first, lr, cfg.momentum, cfg.weight_decay),
                        OptimizerKind::Adam => adam_step(se, &mut slots[ti][k], lr, cfg.weight_decay, cfg.adam),
                    };
                    if let Err(e) = step {
                        failure = Some(e);
                        break;
                    }
                }
                match failure {
                    Some(Error::NonFinite(what)) => return Err(diverged(report, &tasks, epoch, what)),
                    Some(e) => return Err(e),
                    None => report.steps[ti] += 1,
                }
            }
            let mean = sum / tasks[ti].samples.len() as f64;
            match tasks[ti].objective {
                Objective::TextCenter => terms[1] += mean,
                Objective::TextMap => terms[4] += mean,
            }
        }
        let losses = total_loss(terms, DEFAULT_WEIGHTS)?;
        report.history.push(EpochRecord {
            epoch,
            losses,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    report.blocks = tasks.into_iter().map(|t| (t.name, t.block)).collect();
    Ok(report)
}

fn diverged(mut report: TrainReport, tasks: &[BlockTask<'_>], epoch: usize, reason: String) -> Error {
    report.blocks = tasks.iter().map(|t| (t.name.clone(), t.block.clone())).collect();
    Error::Diverged {
        epoch,
        reason,
        partial: Box::new(report),
    }
}
