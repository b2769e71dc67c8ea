#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use gazelabel::cli::weaken;
use gazelabel::datamodel::{split_identity_disjoint, synth_generate, FrameRecord, SynthConfig, ThreeFrameSet};
use gazelabel::geometry::{normalize, GazeVector};
use gazelabel::losses::LossWeights;
use gazelabel::metrics::{evaluate, EvalReport};
use gazelabel::mining::mine_ordered_sets;
use gazelabel::model::{Mode, Model, ModelConfig};
use gazelabel::trainer::{train, validation_split, TrainConfig, TrainHistory};
use gazelabel::{Frame, Gaze, Set};
use nalgebra::DMatrix;

/// Synthetic ordered-trajectory task with an identity-disjoint 80/20 split.
pub struct Task {
    pub feature_dim: usize,
    /// Every frame of the training identities, fully labelled.
    pub train_frames: Vec<Arc<Frame>>,
    /// Training sets carrying every label; weaken before use.
    pub train: Vec<Set>,
    /// Held-out sets with ground-truth middle labels.
    pub test: Vec<Set>,
}

impl Task {
    pub fn new(cfg: &SynthConfig) -> Task {
        let ds = synth_generate::<f64>(cfg).unwrap();
        let sets: Vec<Set> = ds
            .trajectories
            .iter()
            .flat_map(|t| mine_ordered_sets(t).unwrap())
            .collect();
        let split = split_identity_disjoint(&sets, 0.8, cfg.seed).unwrap();
        let test_ids: BTreeSet<String> = split.test.iter().map(|s| s.identity_id().to_string()).collect();
        let train_frames = ds
            .trajectories
            .iter()
            .filter(|t| !test_ids.contains(&t.identity_id))
            .flat_map(|t| t.frames().to_vec())
            .collect();
        Task {
            feature_dim: cfg.feature_dim,
            train_frames,
            train: split.train,
            test: split.test,
        }
    }

    /// Trains a fresh model on the mode's weak labels, early-stopping on a
    /// held-out tenth of the training identities, and evaluates it on the
    /// test sets.
    pub fn fit(&self, mode: Mode, weights: LossWeights, cfg: &TrainConfig) -> (Model<f64>, TrainHistory, EvalReport) {
        let weak: Vec<Set> = self.train.iter().map(|s| weaken(s, mode).unwrap()).collect();
        let inner = validation_split(&weak, 0.1, cfg.seed).unwrap();
        let mut mc = ModelConfig::new(self.feature_dim, 16, [32, 16], mode);
        mc.seed = cfg.seed;
        let tc = TrainConfig {
            weights,
            ..cfg.clone()
        };
        let (model, hist) = train(Model::new(mc).unwrap(), &inner.train, &inner.test, &tc).unwrap();
        let report = evaluate(&model, &self.test).unwrap();
        (model, hist, report)
    }

    pub fn oracle(&self) -> LinearOracle {
        LinearOracle::fit(&self.train_frames, self.feature_dim)
    }
}

/// Synthetic data used by the end-to-end checks: noiseless and linear, with
/// an appearance space wider than the training identities can span, so the
/// fully supervised linear fit keeps a small identity-dependent error.
pub fn weak_identity_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_identities: 20,
        trajectories_per_identity: 2,
        frames_per_trajectory: 9,
        feature_dim: 32,
        appearance_dim: 24,
        appearance_scale: 0.025,
        noise_sigma: 0.0,
        seed,
        ..SynthConfig::default()
    }
}

pub fn end_to_end_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr0: 0.02,
        max_epochs: 1000,
        patience: 100,
        seed,
        ..TrainConfig::default()
    }
}

/// Least-squares affine map from features to gaze, `(F + 1) x 3`.
pub struct LinearOracle {
    pub weights: DMatrix<f64>,
}

impl LinearOracle {
    pub fn fit(frames: &[Arc<Frame>], f: usize) -> LinearOracle {
        let n = frames.len();
        let x = DMatrix::from_fn(n, f + 1, |i, j| if j == f { 1.0 } else { frames[i].features[j] });
        let y = DMatrix::from_fn(n, 3, |i, j| frames[i].label.unwrap().to_array()[j]);
        let weights = x.svd(true, true).solve(&y, 1e-10).unwrap();
        LinearOracle { weights }
    }

    pub fn raw(&self, x: &[f64]) -> [f64; 3] {
        let f = x.len();
        std::array::from_fn(|k| {
            x.iter().enumerate().map(|(j, v)| v * self.weights[(j, k)]).sum::<f64>() + self.weights[(f, k)]
        })
    }

    pub fn predict(&self, x: &[f64]) -> Gaze {
        normalize(self.raw(x)).unwrap()
    }

    pub fn report(&self, sets: &[Set]) -> EvalReport {
        let preds: Vec<Gaze> = sets.iter().map(|s| self.predict(&s.unlabelled.features)).collect();
        let gts: Vec<Gaze> = sets.iter().map(|s| s.unlabelled.label.unwrap()).collect();
        EvalReport::from_pairs(&preds, &gts).unwrap()
    }

    /// A network that reproduces this linear map: every tanh runs in its
    /// small-signal regime (inputs scaled by `eps`) and the output layer
    /// undoes the scaling.
    pub fn as_model(&self, f: usize, mode: Mode, eps: f64) -> Model<f64> {
        let mut model = Model::new(ModelConfig::new(f, 3, [3, 3], mode)).unwrap();
        let eye = |s: f64, cols: usize| -> Vec<f64> {
            (0..3).flat_map(|r| (0..cols).map(move |c| if r == c { s } else { 0.0 })).collect()
        };
        let layers = model.layers_mut();
        layers[0].weights = (0..3).flat_map(|k| (0..f).map(move |j| (j, k))).map(|(j, k)| eps * self.weights[(j, k)]).collect();
        layers[0].bias = (0..3).map(|k| eps * self.weights[(f, k)]).collect();
        layers[1].weights = eye(1.0, 3);
        layers[1].bias = vec![0.0; 3];
        layers[2].weights = eye(1.0, 9);
        layers[2].bias = vec![0.0; 3];
        layers[3].weights = eye(1.0, 3);
        layers[3].bias = vec![0.0; 3];
        layers[4].weights = eye(1.0 / eps, 3);
        layers[4].bias = vec![0.0; 3];
        model
    }
}

/// Frame with features and an optional label; identity `id`, trajectory `t`.
pub fn frame(id: &str, identity: &str, traj: &str, order: i64, x: Vec<f64>, label: Option<Gaze>) -> Arc<Frame> {
    let f = FrameRecord::new(id, identity, traj, order, x);
    Arc::new(match label {
        Some(g) => f.with_label(g),
        None => f,
    })
}

pub fn unit(x: f64, y: f64, z: f64) -> Gaze {
    GazeVector::new(x, y, z).unwrap()
}

pub fn set3(a: Arc<Frame>, b: Arc<Frame>, c: Arc<Frame>) -> Set {
    ThreeFrameSet::new(a, b, c).unwrap()
}
