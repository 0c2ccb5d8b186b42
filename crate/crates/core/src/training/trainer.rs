use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{batch_input, AgeScaler, Example, SplitData, Standardizer};
use super::metrics::{argmax, evaluate_classification, evaluate_regression, TaskMetrics};
use crate::autodiff::{Adam, AdamConfig, Tape, Var};
use crate::models::{combined_loss, LossWeights, Mode, Model, ModelOutput, Task};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    GlobalStandardize,
}

/// Objective for the age head. Metrics are always MAE and RMSE in years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeLoss {
    Mse,
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Only consulted for multi-task models; a single-task model always
    /// trains on its own loss with weight 1.
    pub loss_weights: LossWeights,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub normalization: Normalization,
    pub age_loss: AgeLoss,
    /// Feature spec the data was extracted with, e.g. `mfcc:40,mel:64`.
    pub features: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            loss_weights: LossWeights::default(),
            patience: Some(10),
            normalization: Normalization::GlobalStandardize,
            age_loss: AgeLoss::Mse,
            features: "mfcc:40".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::Config(format!("learning rate {} is invalid", self.lr)));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1 when set".into()));
        }
        self.loss_weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_task_losses: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// A trained model together with the transforms fitted on its training split.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub standardizer: Option<Standardizer>,
    pub age_scaler: AgeScaler,
    pub history: History,
}

fn effective_weights(model: &Model, cfg: &TrainConfig) -> LossWeights {
    if model.spec().kind.is_multitask() {
        cfg.loss_weights
    } else {
        LossWeights::default()
    }
}

fn task_losses(
    tape: &mut Tape<f32>,
    out: &ModelOutput,
    batch: &[&Example],
    weights: &LossWeights,
    age: &AgeScaler,
    age_loss: AgeLoss,
) -> Result<Vec<(Task, Var)>> {
    let mut losses = Vec::new();
    for &(task, head) in &out.heads {
        if weights.weight(task) == 0.0 {
            continue;
        }
        let loss = if task.is_regression() {
            let target: Vec<f32> = batch
                .iter()
                .map(|e| age.forward(e.targets.age) as f32)
                .collect();
            match age_loss {
                AgeLoss::Mse => tape.mse_loss(head, &target)?,
                AgeLoss::L1 => tape.l1_loss(head, &target)?,
            }
        } else {
            let target: Vec<usize> = batch.iter().map(|e| e.targets.class(task)).collect();
            tape.softmax_cross_entropy(head, &target)?
        };
        losses.push((task, loss));
    }
    Ok(losses)
}

fn at_step(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFinite {
            component, value, ..
        } => {
            log::error!(
                "aborting: {component} loss is {value} at epoch {epoch}, batch {batch}"
            );
            Error::NonFinite {
                epoch,
                batch,
                component,
                value,
            }
        }
        other => other,
    }
}

/// Batches of `size` over `order`; a trailing batch of one is folded into the
/// previous batch so batch statistics are always defined.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

fn prepare(examples: &[Example], norm: Option<&Standardizer>) -> Result<Vec<Example>> {
    let mut out = examples.to_vec();
    if let Some(s) = norm {
        for e in &mut out {
            s.apply(e)?;
        }
    }
    Ok(out)
}

/// Mean per-task and combined validation losses in eval mode.
fn validation_loss(
    model: &Model,
    val: &[Example],
    cfg: &TrainConfig,
    weights: &LossWeights,
    age: &AgeScaler,
    epoch: usize,
) -> Result<(f64, BTreeMap<String, f64>)> {
    let order: Vec<usize> = (0..val.len()).collect();
    let mut total = 0.0;
    let mut per_task: BTreeMap<String, f64> = BTreeMap::new();
    for (bi, idx) in order.chunks(cfg.batch_size.max(64)).enumerate() {
        let batch: Vec<&Example> = idx.iter().map(|&i| &val[i]).collect();
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch_input(&batch)?, Mode::Eval)?;
        let losses = task_losses(&mut tape, &out, &batch, weights, age, cfg.age_loss)?;
        let combined = combined_loss(&mut tape, &losses, weights).map_err(|e| at_step(e, epoch, bi))?;
        let n = batch.len() as f64;
        total += f64::from(tape.scalar(combined)) * n;
        for (task, v) in losses {
            *per_task.entry(task.to_string()).or_default() += f64::from(tape.scalar(v)) * n;
        }
    }
    let n = val.len() as f64;
    per_task.values_mut().for_each(|v| *v /= n);
    Ok((total / n, per_task))
}

/// Trains with per-epoch seeded shuffling and Adam. The parameters from the
/// epoch with the lowest validation loss are restored at the end.
pub fn train(mut model: Model, data: &SplitData, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty train and validation splits (got {} and {})",
            data.train.len(),
            data.val.len()
        )));
    }
    let standardizer = match cfg.normalization {
        Normalization::GlobalStandardize => Some(Standardizer::fit(&data.train)?),
        Normalization::None => None,
    };
    let train_set = prepare(&data.train, standardizer.as_ref())?;
    let val_set = prepare(&data.val, standardizer.as_ref())?;
    let age = AgeScaler::fit(&data.train);
    let weights = effective_weights(&model, cfg);

    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);

    let mut history = History::default();
    let mut best: Option<(f64, Model)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for (bi, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            let input = batch_input(&batch)?;
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &input, Mode::Train(&mut dropout_rng))?;
            let losses = task_losses(&mut tape, &out, &batch, &weights, &age, cfg.age_loss)?;
            let loss = combined_loss(&mut tape, &losses, &weights).map_err(|e| at_step(e, epoch, bi))?;
            model.params_mut().zero_grad();
            tape.backward(loss, model.params_mut())?;
            adam.step(model.params_mut());
            model.update_running_stats(&out.batch_stats);
            total += f64::from(tape.scalar(loss)) * batch.len() as f64;
        }
        let (val_loss, val_task_losses) =
            validation_loss(&model, &val_set, cfg, &weights, &age, epoch)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_loss,
            val_task_losses,
        });
        log::debug!("epoch {epoch}: val loss {val_loss:.5}");
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                history.stopped_early = true;
                break;
            }
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok(Trained {
        model,
        standardizer,
        age_scaler: age,
        history,
    })
}

/// Scores every head of a trained model on raw (unnormalized) examples.
pub fn evaluate(trained: &Trained, examples: &[Example]) -> Result<Vec<(Task, TaskMetrics)>> {
    if examples.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty split".into()));
    }
    let set = prepare(examples, trained.standardizer.as_ref())?;
    let model = &trained.model;
    let tasks = model.tasks().to_vec();
    let mut class_preds: Vec<Vec<usize>> = vec![Vec::new(); tasks.len()];
    let mut ages: Vec<f64> = Vec::new();
    for chunk in set.chunks(256) {
        let batch: Vec<&Example> = chunk.iter().collect();
        for (ti, (task, out)) in model.predict(&batch_input(&batch)?)?.into_iter().enumerate() {
            if task.is_regression() {
                ages.extend(out.data().iter().map(|&z| trained.age_scaler.inverse(f64::from(z))));
            } else {
                let k = out.shape()[1];
                class_preds[ti].extend(out.data().chunks(k).map(argmax));
            }
        }
    }
    tasks
        .iter()
        .enumerate()
        .map(|(ti, &task)| {
            let m = if task.is_regression() {
                let truth: Vec<f64> = set.iter().map(|e| e.targets.age).collect();
                TaskMetrics::Regression(evaluate_regression(&ages, &truth)?)
            } else {
                let truth: Vec<usize> = set.iter().map(|e| e.targets.class(task)).collect();
                TaskMetrics::Classification(evaluate_classification(
                    &class_preds[ti],
                    &truth,
                    model.spec().head_width(task),
                )?)
            };
            Ok((task, m))
        })
        .collect()
}
