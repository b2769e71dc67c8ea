//! Evaluation metrics, cross-dataset evaluation and loss ablations.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{FrameRecord, ThreeFrameSet};
use crate::error::{Error, Result};
use crate::geometry::{angular_error_deg, GazeVector};
use crate::losses::LossWeights;
use crate::model::{Model, ModelConfig};
use crate::par::par_map;
use crate::scalar::Scalar;
use crate::trainer::{train, TrainConfig};

fn check_pairs(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::dims(a, b));
    }
    if a == 0 {
        return Err(Error::EmptyInput("no prediction/ground-truth pairs".into()));
    }
    Ok(())
}

/// Mean over samples of the mean absolute componentwise deviation.
pub fn mae_metric<T: Scalar>(preds: &[[T; 3]], gts: &[[T; 3]]) -> Result<f64> {
    check_pairs(preds.len(), gts.len())?;
    let total: f64 = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            (0..3).map(|i| (p[i] - g[i]).abs().as_f64()).sum::<f64>() / 3.0
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// Pearson correlation between the flattened components of `preds` and `gts`.
pub fn cc_metric<T: Scalar>(preds: &[[T; 3]], gts: &[[T; 3]]) -> Result<f64> {
    check_pairs(preds.len(), gts.len())?;
    let x: Vec<f64> = preds.iter().flatten().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = gts.iter().flatten().map(|v| v.as_f64()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if preds.len() < 2 || sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation(format!(
            "{} sample(s), variances {sxx:e} and {syy:e}",
            preds.len()
        )));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Mean angular error in degrees.
pub fn angular_metric<T: Scalar>(preds: &[GazeVector<T>], gts: &[GazeVector<T>]) -> Result<f64> {
    check_pairs(preds.len(), gts.len())?;
    let total: f64 = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| angular_error_deg(p, g).degrees().as_f64())
        .sum();
    Ok(total / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: f64,
    /// `None` when the correlation is undefined (one sample, or zero variance).
    pub cc: Option<f64>,
    pub angular_error_deg: f64,
    pub n: usize,
}

pub const REPORT_HEADER: &str = "name,n,mae,cc,angular_error_deg";

impl EvalReport {
    pub fn from_pairs<T: Scalar>(preds: &[GazeVector<T>], gts: &[GazeVector<T>]) -> Result<Self> {
        let p: Vec<[T; 3]> = preds.iter().map(GazeVector::to_array).collect();
        let g: Vec<[T; 3]> = gts.iter().map(GazeVector::to_array).collect();
        let mae = mae_metric(&p, &g)?;
        let cc = match cc_metric(&p, &g) {
            Ok(c) => Some(c),
            Err(Error::UndefinedCorrelation(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(EvalReport {
            mae,
            cc,
            angular_error_deg: angular_metric(preds, gts)?,
            n: preds.len(),
        })
    }

    pub fn csv_row(&self, name: &str) -> String {
        let cc = self.cc.map(|c| format!("{c:.6}")).unwrap_or_default();
        format!("{name},{},{:.6},{cc},{:.6}", self.n, self.mae, self.angular_error_deg)
    }

    pub fn summary_line(&self, name: &str) -> String {
        let cc = self
            .cc
            .map(|c| format!("{c:.4}"))
            .unwrap_or_else(|| "undefined".into());
        format!(
            "{name:<12} n={:<6} MAE={:.4}  CC={cc}  angular={:.3} deg",
            self.n, self.mae, self.angular_error_deg
        )
    }
}

/// Writes named reports as CSV and returns the human-readable summary.
pub fn write_reports(csv_path: &Path, reports: &[(String, EvalReport)]) -> Result<String> {
    let mut csv = String::from(REPORT_HEADER);
    csv.push('\n');
    let mut text = String::new();
    for (name, r) in reports {
        csv.push_str(&r.csv_row(name));
        csv.push('\n');
        writeln!(text, "{}", r.summary_line(name)).expect("string write");
    }
    std::fs::write(csv_path, csv).map_err(|e| Error::io(csv_path, e))?;
    Ok(text)
}

fn middle_label<T: Scalar>(set: &ThreeFrameSet<T>) -> Result<GazeVector<T>> {
    set.unlabelled.label.ok_or_else(|| {
        Error::MissingLabel(format!("ground truth for frame {}", set.unlabelled.frame_id))
    })
}

/// Middle-frame predictions against middle-frame ground truth.
pub fn evaluate<T: Scalar>(model: &Model<T>, sets: &[ThreeFrameSet<T>]) -> Result<EvalReport> {
    evaluate_jobs(model, sets, 1)
}

/// As [`evaluate`], spreading forward passes over `jobs` threads. Results are
/// reduced in input order, so the report does not depend on `jobs`.
pub fn evaluate_jobs<T: Scalar>(
    model: &Model<T>,
    sets: &[ThreeFrameSet<T>],
    jobs: usize,
) -> Result<EvalReport> {
    let gts = sets.iter().map(middle_label).collect::<Result<Vec<_>>>()?;
    let preds = predict_middle(model, sets, jobs)?;
    EvalReport::from_pairs(&preds, &gts)
}

pub(crate) fn predict_middle<T: Scalar>(
    model: &Model<T>,
    sets: &[ThreeFrameSet<T>],
    jobs: usize,
) -> Result<Vec<GazeVector<T>>> {
    par_map(sets, jobs, |s| model.predict_label(s))
}

/// Linear map from a foreign feature space into the model's.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAdapter<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major, `outputs x inputs`.
    pub matrix: Vec<T>,
}

impl<T: Scalar> LinearAdapter<T> {
    pub fn new(inputs: usize, outputs: usize, matrix: Vec<T>) -> Result<Self> {
        if matrix.len() != inputs * outputs {
            return Err(Error::dims(inputs * outputs, matrix.len()));
        }
        Ok(LinearAdapter {
            inputs,
            outputs,
            matrix,
        })
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.inputs {
            return Err(Error::dims(self.inputs, x.len()));
        }
        Ok(self
            .matrix
            .chunks(self.inputs)
            .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect())
    }
}

fn adapt_frame<T: Scalar>(f: &FrameRecord<T>, a: &LinearAdapter<T>) -> Result<FrameRecord<T>> {
    let mut g = f.clone();
    g.features = a.apply(&f.features)?;
    Ok(g)
}

/// Evaluates a model trained on one dataset against another dataset's sets.
/// Feature dimensions must agree unless an adapter is supplied.
pub fn cross_dataset_eval<T: Scalar>(
    model: &Model<T>,
    sets: &[ThreeFrameSet<T>],
    adapter: Option<&LinearAdapter<T>>,
) -> Result<EvalReport> {
    let f = model.config.feature_dim;
    match adapter {
        None => {
            if let Some(s) = sets.iter().find(|s| s.start.features.len() != f) {
                return Err(Error::dims(f, s.start.features.len()));
            }
            evaluate(model, sets)
        }
        Some(a) => {
            if a.outputs != f {
                return Err(Error::dims(f, a.outputs));
            }
            let adapted = sets
                .iter()
                .map(|s| {
                    ThreeFrameSet::new(
                        adapt_frame(&s.start, a)?.into(),
                        adapt_frame(&s.unlabelled, a)?.into(),
                        adapt_frame(&s.end, a)?.into(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            evaluate(model, &adapted)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub weights: LossWeights,
    /// Best validation MAE reached during training.
    pub val_mae: f64,
    pub epochs: usize,
    /// Middle-frame evaluation on the held-out sets.
    pub test: EvalReport,
}

pub const ABLATION_HEADER: &str = "lambda1,lambda2,lambda3,lambda4,epochs,val_mae,test_mae,test_cc,test_angular_deg";

/// Trains one model per weight configuration with shared data, model
/// initialization and seed.
pub fn ablation_run<T: Scalar>(
    model_cfg: &ModelConfig,
    train_sets: &[ThreeFrameSet<T>],
    val_sets: &[ThreeFrameSet<T>],
    test_sets: &[ThreeFrameSet<T>],
    configs: &[LossWeights],
    cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("ablation needs at least one weight configuration".into()));
    }
    configs
        .iter()
        .map(|w| {
            let mut c = cfg.clone();
            c.weights = *w;
            let (model, hist) = train(Model::new(model_cfg.clone())?, train_sets, val_sets, &c)?;
            Ok(AblationRow {
                weights: *w,
                val_mae: hist.best_val_mae().unwrap_or(f64::NAN),
                epochs: hist.epochs.len(),
                test: evaluate(&model, test_sets)?,
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(ABLATION_HEADER);
    s.push('\n');
    for r in rows {
        let w = r.weights.as_array();
        let cc = r.test.cc.map(|c| format!("{c:.6}")).unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{},{:.6},{:.6},{cc},{:.6}",
            w[0], w[1], w[2], w[3], r.epochs, r.val_mae, r.test.mae, r.test.angular_error_deg
        )
        .expect("string write");
    }
    s
}
