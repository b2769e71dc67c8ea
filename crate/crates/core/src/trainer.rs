//! Mini-batch SGD with learning-rate decay and early stopping on validation
//! MAE.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{split_identity_disjoint, DatasetSplit, ThreeFrameSet};
use crate::error::{Error, Result};
use crate::geometry::{normalize, GazeVector};
use crate::losses::{gradients, LossBreakdown, LossOptions, LossWeights};
use crate::metrics::mae_metric;
use crate::model::{Mode, Model, ModelGrads};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayKind {
    /// `lr0 / (1 + decay * e)`.
    #[default]
    InverseTime,
    /// `lr0 * (1 - decay)^e`.
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay: f64,
    pub decay_kind: DecayKind,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weights: LossWeights,
    pub options: LossOptions,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.001,
            decay: 1e-6,
            decay_kind: DecayKind::InverseTime,
            batch_size: 32,
            max_epochs: 1000,
            patience: 50,
            weights: LossWeights::default(),
            options: LossOptions::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// A zero epoch budget is accepted and trains nothing.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad(format!("decay must be non-negative, got {}", self.decay));
        }
        if self.decay_kind == DecayKind::Multiplicative && self.decay >= 1.0 {
            return bad(format!("multiplicative decay must be below 1, got {}", self.decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        self.weights.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let e = epoch as f64;
        match self.decay_kind {
            DecayKind::InverseTime => self.lr0 / (1.0 + self.decay * e),
            DecayKind::Multiplicative => self.lr0 * (1.0 - self.decay).powf(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-set training loss terms.
    pub loss: LossBreakdown,
    pub val_mae: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

pub const HISTORY_HEADER: &str = "epoch,reg,consistency,divergence,embedding,total,val_mae,lr";

impl TrainHistory {
    pub fn best_val_mae(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_mae)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(HISTORY_HEADER);
        s.push('\n');
        for r in &self.epochs {
            let l = &r.loss;
            writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.epoch, l.reg, l.consistency, l.divergence, l.embedding, l.total, r.val_mae, r.lr
            )
            .expect("string write");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Validation MAE. Sets whose middle frame carries ground truth are scored on
/// it; otherwise on the terminal labels the mode consumes.
pub fn validation_mae<T: Scalar>(model: &Model<T>, sets: &[ThreeFrameSet<T>]) -> Result<f64> {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for s in sets {
        let out = model.forward(s)?;
        if let Some(m) = s.unlabelled.label {
            preds.push(normalize(out.y_ul_p)?.to_array());
            gts.push(m.to_array());
            continue;
        }
        let start = s
            .start
            .label
            .ok_or_else(|| Error::MissingLabel(format!("start frame {}", s.start.frame_id)))?;
        preds.push(normalize(out.y_s_p)?.to_array());
        gts.push(start.to_array());
        if let (Mode::TwoLabels, Some(e)) = (model.mode(), s.end.label) {
            preds.push(normalize(out.y_e_p)?.to_array());
            gts.push(e.to_array());
        }
    }
    mae_metric(&preds, &gts)
}

/// Holds out roughly `fraction` of the identities for validation.
pub fn validation_split<T: Scalar>(
    sets: &[ThreeFrameSet<T>],
    fraction: f64,
    seed: u64,
) -> Result<DatasetSplit<T>> {
    split_identity_disjoint(sets, 1.0 - fraction, seed)
}

fn finite<T: Scalar>(g: &ModelGrads<T>) -> bool {
    g.layers
        .iter()
        .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
}

/// Trains `model` and returns it with the parameters of its best validation
/// epoch.
pub fn train<T: Scalar>(
    mut model: Model<T>,
    train_sets: &[ThreeFrameSet<T>],
    val_sets: &[ThreeFrameSet<T>],
    cfg: &TrainConfig,
) -> Result<(Model<T>, TrainHistory)> {
    cfg.validate()?;
    if train_sets.is_empty() {
        return Err(Error::EmptyDataset("no training sets".into()));
    }
    if val_sets.is_empty() {
        return Err(Error::EmptyDataset("no validation sets".into()));
    }
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<T>)> = None;
    let mut order: Vec<usize> = (0..train_sets.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut epoch_loss = LossBreakdown::default();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc = ModelGrads::zeros_like(&model);
            let mut batch_loss = LossBreakdown::default();
            for &i in batch {
                let (l, g) = gradients(&model, &train_sets[i], &cfg.weights, &cfg.options)?;
                if !l.is_finite() || !finite(&g) {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b,
                        detail: format!("set starting at frame {}: {l:?}", train_sets[i].start.frame_id),
                    });
                }
                acc.add_assign(&g);
                batch_loss.add_assign(&l);
            }
            acc.scale(T::lit(1.0 / batch.len() as f64));
            model.apply_update(&acc, T::lit(lr));
            epoch_loss.add_assign(&batch_loss);
        }

        let val_mae = validation_mae(&model, val_sets)?;
        if !val_mae.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: 0,
                detail: "validation MAE is not finite".into(),
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            loss: epoch_loss.scaled(1.0 / train_sets.len() as f64),
            val_mae,
            lr,
        });
        if best.as_ref().is_none_or(|(m, _)| val_mae < *m) {
            best = Some((val_mae, model.params()));
            history.best_epoch = Some(epoch);
        } else if epoch - history.best_epoch.expect("set on first epoch") >= cfg.patience {
            history.stopped_early = true;
            break;
        }
    }
    if let Some((_, params)) = best {
        model.set_params(&params)?;
    }
    Ok((model, history))
}

/// One normalized prediction per set for its middle frame, in input order.
pub fn label_unlabelled<T: Scalar>(
    model: &Model<T>,
    sets: &[ThreeFrameSet<T>],
) -> Result<Vec<(String, GazeVector<T>)>> {
    sets.iter()
        .map(|s| Ok((s.unlabelled.frame_id.clone(), model.predict_label(s)?)))
        .collect()
}
