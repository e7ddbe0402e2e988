use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AdamW, AdamWConfig, Example, PathwayModel};
use crate::error::{Error, Result};
use crate::eval::{PredictionRow, PredictionTable};
use crate::loss::Objective;
use crate::rng::{substream, Stream};
use crate::scalar::Scalar;
use crate::schedule::GammaSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    /// Ground-truth-class focal loss with the scheduled γ.
    Focal,
    /// Focal terms summed over every class, without the one-hot factor.
    FocalAllClasses,
}

impl LossKind {
    pub fn objective<T: Scalar>(self, gamma: T) -> Objective<T> {
        match self {
            LossKind::CrossEntropy => Objective::CrossEntropy,
            LossKind::Focal => Objective::Focal { gamma },
            LossKind::FocalAllClasses => Objective::FocalAllClasses { gamma },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            optimizer: AdamWConfig::default(),
            loss: LossKind::Focal,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub gamma: f64,
    pub mean_loss: f64,
    pub val_top1: Option<f64>,
    /// Samples whose true-class probability hit the log clamp.
    pub clamped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn final_val_top1(&self) -> Option<f64> {
        self.epochs.last().and_then(|r| r.val_top1)
    }
}

/// Runs `config.epochs` epochs of mini-batch AdamW.
///
/// γ is recomputed from the schedule at the start of each epoch and held for
/// all of its batches. The training order is reshuffled every epoch from the
/// run seed.
pub fn train<T: Scalar>(
    mut model: PathwayModel<T>,
    train_set: &[Example<'_, T>],
    val_set: &[Example<'_, T>],
    schedule: &GammaSchedule<T>,
    config: &TrainConfig,
) -> Result<(PathwayModel<T>, TrainTrace)> {
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if config.epochs != schedule.total_epochs() {
        return Err(Error::Config(format!(
            "training runs {} epochs but the gamma schedule spans {}",
            config.epochs,
            schedule.total_epochs()
        )));
    }
    let mut optimizer = AdamW::new(config.optimizer, &model)?;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut trace = TrainTrace::default();
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        let gamma = match config.loss {
            LossKind::CrossEntropy => T::zero(),
            _ => schedule.gamma_at(epoch)?,
        };
        let objective = config.loss.objective(gamma);
        order.sort_unstable();
        order.shuffle(&mut substream(config.seed, Stream::Shuffle, epoch as u64));

        let mut loss_sum = T::zero();
        let mut clamped = 0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i]));
            let step = model.backward(&batch, &objective)?;
            for &l in step.losses.losses() {
                loss_sum += l;
            }
            clamped += step.clamped;
            optimizer.step(&mut model, &step.grads)?;
        }
        let val_top1 = if val_set.is_empty() {
            None
        } else {
            Some(top1_percent(&model, val_set)?)
        };
        trace.epochs.push(EpochRecord {
            epoch,
            gamma: gamma.as_f64(),
            mean_loss: (loss_sum / T::from_count(train_set.len())).as_f64(),
            val_top1,
            clamped,
        });
    }
    Ok((model, trace))
}

fn top1_percent<T: Scalar>(model: &PathwayModel<T>, samples: &[Example<'_, T>]) -> Result<f64> {
    let mut correct = 0usize;
    for ex in samples {
        let logits = model.logits(ex.features)?;
        if crate::loss::argmax(&logits) == ex.label.index() {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / samples.len() as f64)
}

/// Class probabilities for every sample, ids and labels carried through.
pub fn predict<T: Scalar>(model: &PathwayModel<T>, samples: &[Example<'_, T>]) -> Result<PredictionTable<T>> {
    let rows = samples
        .iter()
        .map(|ex| {
            Ok(PredictionRow {
                id: ex.id.to_string(),
                label: ex.label,
                probs: model.forward(ex.features)?.probs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionTable::new(model.num_classes(), rows)
}
