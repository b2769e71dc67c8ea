//! Encoder, shared prediction head and the one-label decoder, with forward
//! and backward passes over a 3-frame set.
//!
//! Layer stack:
//!
//! ```text
//! encoder  F -> d (tanh) -> d (tanh)                     applied to each frame
//! head     [z_k, m_su, m_ue] (3d) -> h1 (tanh) -> h2 (tanh) -> 3   shared by s, ul, e
//! decoder  h2 -> d (affine)                               one-label mode only
//! ```
//!
//! with motion features `m_su = z_s - z_ul` and `m_ue = z_ul - z_e`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::datamodel::ThreeFrameSet;
use crate::error::{Error, Result};
use crate::geometry::{normalize, GazeVector};
use crate::scalar::Scalar;

pub const OUTPUT_DIM: usize = 3;

/// Which terminal labels the weak supervision provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Start and end frame labels.
    TwoLabels,
    /// Start frame label only.
    OneLabel,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::TwoLabels => "2l",
            Mode::OneLabel => "1l",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-labels" | "2-labels" | "2l" => Ok(Mode::TwoLabels),
            "one-label" | "1-label" | "1l" => Ok(Mode::OneLabel),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// How motion features are formed from consecutive latents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionKind {
    /// `z_a - z_b`.
    #[default]
    Signed,
    /// `|z_a - z_b|` elementwise.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub head_dims: [usize; 2],
    #[serde(default = "default_output_dim")]
    pub output_dim: usize,
    pub mode: Mode,
    #[serde(default)]
    pub motion: MotionKind,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dim() -> usize {
    OUTPUT_DIM
}

impl ModelConfig {
    pub fn new(feature_dim: usize, latent_dim: usize, head_dims: [usize; 2], mode: Mode) -> Self {
        ModelConfig {
            feature_dim,
            latent_dim,
            head_dims,
            output_dim: OUTPUT_DIM,
            mode,
            motion: MotionKind::Signed,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 1 || self.latent_dim < 1 || self.head_dims.contains(&0) {
            return Err(Error::InvalidConfig("model dimensions must be at least 1".into()));
        }
        if self.output_dim != OUTPUT_DIM {
            return Err(Error::InvalidConfig(format!(
                "output_dim must be {OUTPUT_DIM}, got {}",
                self.output_dim
            )));
        }
        Ok(())
    }

    /// `(inputs, outputs)` of every layer in declared order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let (f, d, [h1, h2]) = (self.feature_dim, self.latent_dim, self.head_dims);
        let mut shapes = vec![(f, d), (d, d), (3 * d, h1), (h1, h2), (h2, OUTPUT_DIM)];
        if self.mode == Mode::OneLabel {
            shapes.push((h2, d));
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Fully connected layer; weights row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let u = Uniform::new_inclusive(-bound, bound).expect("finite init bound");
        let weights = (0..inputs * outputs).map(|_| T::lit(u.sample(rng))).collect();
        let bias = (0..outputs).map(|_| T::lit(u.sample(rng))).collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.inputs);
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let pre = row.iter().zip(x).fold(self.bias[o], |acc, (&w, &v)| acc + w * v);
                match self.activation {
                    Activation::Tanh => pre.tanh(),
                    Activation::Identity => pre,
                }
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: &[T], y: &[T], dy: &[T], grad: &mut DenseGrad<T>) -> Vec<T> {
        let dpre: Vec<T> = match self.activation {
            Activation::Tanh => dy.iter().zip(y).map(|(&g, &v)| g * (T::one() - v * v)).collect(),
            Activation::Identity => dy.to_vec(),
        };
        let mut dx = vec![T::zero(); self.inputs];
        for (o, &g) in dpre.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grad.bias[o] = grad.bias[o] + g;
            let row = o * self.inputs;
            for i in 0..self.inputs {
                grad.weights[row + i] = grad.weights[row + i] + g * x[i];
                dx[i] = dx[i] + g * self.weights[row + i];
            }
        }
        dx
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradient collection shaped like the model's layer list.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub layers: Vec<DenseGrad<T>>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        ModelGrads {
            layers: model
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weights: vec![T::zero(); l.weights.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weights.iter_mut().zip(&b.weights) {
                *x = *x + y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = *v * s);
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn norm(&self) -> T {
        self.flatten().iter().map(|&v| v * v).sum::<T>().sqrt()
    }
}

pub(crate) const ENC0: usize = 0;
pub(crate) const ENC1: usize = 1;
pub(crate) const HEAD0: usize = 2;
pub(crate) const HEAD1: usize = 3;
pub(crate) const HEAD_OUT: usize = 4;
pub(crate) const DECODER: usize = 5;

/// Reference model: two-layer tanh encoder, shared three-layer head and an
/// optional affine decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    layers: Vec<Dense<T>>,
}

/// Activations of one frame through encoder and head.
#[derive(Debug, Clone)]
struct FrameTrace<T> {
    x: Vec<T>,
    enc_hidden: Vec<T>,
    z: Vec<T>,
    head_in: Vec<T>,
    h1: Vec<T>,
    h2: Vec<T>,
}

/// Result of a forward pass over `(start, unlabelled, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub y_s_p: [T; 3],
    pub y_ul_p: [T; 3],
    pub y_e_p: [T; 3],
    pub z_s: Vec<T>,
    pub z_ul: Vec<T>,
    pub z_e: Vec<T>,
    /// End frame's last hidden head activations (one-label mode).
    pub penultimate: Option<Vec<T>>,
    /// Decoder reconstruction of `z_e` (one-label mode).
    pub z_e_reconstructed: Option<Vec<T>>,
}

impl<T: Copy> ForwardOutput<T> {
    pub fn predictions(&self) -> [[T; 3]; 3] {
        [self.y_s_p, self.y_ul_p, self.y_e_p]
    }

    pub fn latents(&self) -> [&[T]; 3] {
        [&self.z_s, &self.z_ul, &self.z_e]
    }
}

/// Forward output plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub output: ForwardOutput<T>,
    frames: [FrameTrace<T>; 3],
}

/// Loss gradients with respect to the forward outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads<T> {
    /// `dL/dy_k^p` for k = s, ul, e.
    pub dy: [[T; 3]; 3],
    /// Direct `dL/dz_k` (from latent-space loss terms).
    pub dz: [Vec<T>; 3],
    /// `dL/dz_e^r`.
    pub dz_reconstructed: Option<Vec<T>>,
}

impl<T: Scalar> OutputGrads<T> {
    pub fn zeros(latent_dim: usize) -> Self {
        OutputGrads {
            dy: [[T::zero(); 3]; 3],
            dz: std::array::from_fn(|_| vec![T::zero(); latent_dim]),
            dz_reconstructed: None,
        }
    }
}

/// `m_su = z_s - z_ul`, `m_ue = z_ul - z_e` (or their absolute values).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFeature<T> {
    pub m_su: Vec<T>,
    pub m_ue: Vec<T>,
}

pub fn motion_features<T: Scalar>(
    z_s: &[T],
    z_ul: &[T],
    z_e: &[T],
    kind: MotionKind,
) -> Result<MotionFeature<T>> {
    if z_ul.len() != z_s.len() {
        return Err(Error::dims(z_s.len(), z_ul.len()));
    }
    if z_e.len() != z_s.len() {
        return Err(Error::dims(z_s.len(), z_e.len()));
    }
    let diff = |a: &[T], b: &[T]| -> Vec<T> {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| match kind {
                MotionKind::Signed => x - y,
                MotionKind::Absolute => (x - y).abs(),
            })
            .collect()
    };
    Ok(MotionFeature {
        m_su: diff(z_s, z_ul),
        m_ue: diff(z_ul, z_e),
    })
}

impl<T: Scalar> Model<T> {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization from
    /// `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, (n_in, n_out))| {
                let act = if i == HEAD_OUT || i == DECODER {
                    Activation::Identity
                } else {
                    Activation::Tanh
                };
                Dense::init(n_in, n_out, act, &mut rng)
            })
            .collect();
        Ok(Model { config, layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All parameters, each layer's weights then bias, in layer order.
    pub fn params(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dims(self.param_count(), flat.len()));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| {
                *v = it.next().expect("length checked");
            });
        }
        Ok(())
    }

    /// Gradient step `p <- p - lr * g`.
    pub fn apply_update(&mut self, grads: &ModelGrads<T>, lr: T) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, &d) in l.weights.iter_mut().zip(&g.weights) {
                *p = *p - lr * d;
            }
            for (p, &d) in l.bias.iter_mut().zip(&g.bias) {
                *p = *p - lr * d;
            }
        }
    }

    fn check_features(&self, x: &[T]) -> Result<()> {
        if x.len() != self.config.feature_dim {
            return Err(Error::dims(self.config.feature_dim, x.len()));
        }
        Ok(())
    }

    /// Latent embedding of one frame's features.
    pub fn encode(&self, features: &[T]) -> Result<Vec<T>> {
        self.check_features(features)?;
        Ok(self.layers[ENC1].forward(&self.layers[ENC0].forward(features)))
    }

    fn head_input(&self, z: &[T], motion: &[Vec<T>; 2]) -> Vec<T> {
        let mut v = Vec::with_capacity(3 * z.len());
        v.extend_from_slice(z);
        v.extend_from_slice(&motion[0]);
        v.extend_from_slice(&motion[1]);
        v
    }

    /// Forward pass on raw feature vectors of start, unlabelled and end.
    pub fn forward_features(&self, xs: [&[T]; 3]) -> Result<ForwardTrace<T>> {
        for x in xs {
            self.check_features(x)?;
        }
        let enc: Vec<(Vec<T>, Vec<T>)> = xs
            .iter()
            .map(|x| {
                let h = self.layers[ENC0].forward(x);
                let z = self.layers[ENC1].forward(&h);
                (h, z)
            })
            .collect();
        let mf = motion_features(&enc[0].1, &enc[1].1, &enc[2].1, self.config.motion)?;
        let motion = [mf.m_su, mf.m_ue];
        let mut traces: Vec<FrameTrace<T>> = Vec::with_capacity(3);
        let mut ys = [[T::zero(); 3]; 3];
        for (k, (x, (h, z))) in xs.iter().zip(enc).enumerate() {
            let head_in = self.head_input(&z, &motion);
            let h1 = self.layers[HEAD0].forward(&head_in);
            let h2 = self.layers[HEAD1].forward(&h1);
            let y = self.layers[HEAD_OUT].forward(&h2);
            ys[k] = [y[0], y[1], y[2]];
            traces.push(FrameTrace {
                x: x.to_vec(),
                enc_hidden: h,
                z,
                head_in,
                h1,
                h2,
            });
        }
        let (penultimate, z_e_reconstructed) = match self.config.mode {
            Mode::OneLabel => {
                let p = traces[2].h2.clone();
                let r = self.layers[DECODER].forward(&p);
                (Some(p), Some(r))
            }
            Mode::TwoLabels => (None, None),
        };
        let frames: [FrameTrace<T>; 3] = traces.try_into().expect("three frames");
        let output = ForwardOutput {
            y_s_p: ys[0],
            y_ul_p: ys[1],
            y_e_p: ys[2],
            z_s: frames[0].z.clone(),
            z_ul: frames[1].z.clone(),
            z_e: frames[2].z.clone(),
            penultimate,
            z_e_reconstructed,
        };
        Ok(ForwardTrace { output, frames })
    }

    pub fn forward_trace(&self, set: &ThreeFrameSet<T>) -> Result<ForwardTrace<T>> {
        for f in set.frames() {
            if f.features.is_empty() {
                return Err(Error::MissingFeatures(f.frame_id.clone()));
            }
        }
        self.forward_features([&set.start.features, &set.unlabelled.features, &set.end.features])
    }

    pub fn forward(&self, set: &ThreeFrameSet<T>) -> Result<ForwardOutput<T>> {
        Ok(self.forward_trace(set)?.output)
    }

    /// Unit gaze prediction for the set's unlabelled frame.
    pub fn predict_label(&self, set: &ThreeFrameSet<T>) -> Result<GazeVector<T>> {
        normalize(self.forward(set)?.y_ul_p)
    }

    /// Backpropagates output gradients through head, motion features,
    /// decoder and encoder.
    pub fn backward(&self, trace: &ForwardTrace<T>, upstream: &OutputGrads<T>) -> ModelGrads<T> {
        let d = self.config.latent_dim;
        let mut grads = ModelGrads::zeros_like(self);
        let mut dz: [Vec<T>; 3] = upstream.dz.clone();
        let mut dmotion = [vec![T::zero(); d], vec![T::zero(); d]];

        let mut extra_h2 = vec![T::zero(); self.config.head_dims[1]];
        if let (Some(dr), Mode::OneLabel) = (&upstream.dz_reconstructed, self.config.mode) {
            let p = &trace.frames[2].h2;
            let r = trace
                .output
                .z_e_reconstructed
                .as_ref()
                .expect("one-label trace carries reconstruction");
            extra_h2 = self.layers[DECODER].backward(p, r, dr, &mut grads.layers[DECODER]);
        }

        for (k, fr) in trace.frames.iter().enumerate() {
            let dy = &upstream.dy[k];
            let has_extra = k == 2 && extra_h2.iter().any(|v| *v != T::zero());
            if dy.iter().all(|v| *v == T::zero()) && !has_extra {
                continue;
            }
            // Identity output layer: its backward never reads the activations.
            let mut dh2 = self.layers[HEAD_OUT].backward(&fr.h2, &[], dy, &mut grads.layers[HEAD_OUT]);
            if k == 2 {
                for (a, &b) in dh2.iter_mut().zip(&extra_h2) {
                    *a = *a + b;
                }
            }
            let dh1 = self.layers[HEAD1].backward(&fr.h1, &fr.h2, &dh2, &mut grads.layers[HEAD1]);
            let din = self.layers[HEAD0].backward(&fr.head_in, &fr.h1, &dh1, &mut grads.layers[HEAD0]);
            for i in 0..d {
                dz[k][i] = dz[k][i] + din[i];
                dmotion[0][i] = dmotion[0][i] + din[d + i];
                dmotion[1][i] = dmotion[1][i] + din[2 * d + i];
            }
        }

        // m_su = z_s - z_ul, m_ue = z_ul - z_e.
        let z = |k: usize| &trace.frames[k].z;
        for i in 0..d {
            let (g_su, g_ue) = match self.config.motion {
                MotionKind::Signed => (dmotion[0][i], dmotion[1][i]),
                MotionKind::Absolute => (
                    dmotion[0][i] * sign(z(0)[i] - z(1)[i]),
                    dmotion[1][i] * sign(z(1)[i] - z(2)[i]),
                ),
            };
            dz[0][i] = dz[0][i] + g_su;
            dz[1][i] = dz[1][i] - g_su + g_ue;
            dz[2][i] = dz[2][i] - g_ue;
        }

        for (k, fr) in trace.frames.iter().enumerate() {
            if dz[k].iter().all(|v| *v == T::zero()) {
                continue;
            }
            let dh = self.layers[ENC1].backward(&fr.enc_hidden, &fr.z, &dz[k], &mut grads.layers[ENC1]);
            self.layers[ENC0].backward(&fr.x, &fr.enc_hidden, &dh, &mut grads.layers[ENC0]);
        }
        grads
    }

    /// Writes a checkpoint: magic, format version, JSON model config, then
    /// parameter count and parameters as little-endian `f64`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let cfg = serde_json::to_vec(&self.config).expect("config serializes");
        let params = self.params();
        let mut buf = Vec::with_capacity(16 + cfg.len() + 8 * params.len());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        buf.extend_from_slice(&cfg);
        buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            buf.extend_from_slice(&p.as_f64().to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::BadCheckpoint(format!("{}: {m}", path.display()));
        let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(|| bad("truncated"));
        if take(0, 4)? != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint"));
        }
        let version = u32::from_le_bytes(take(4, 4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let cfg_len = u32::from_le_bytes(take(8, 4)?.try_into().expect("4 bytes")) as usize;
        let config: ModelConfig =
            serde_json::from_slice(take(12, cfg_len)?).map_err(|e| bad(&e.to_string()))?;
        let mut at = 12 + cfg_len;
        let n = u64::from_le_bytes(take(at, 8)?.try_into().expect("8 bytes")) as usize;
        at += 8;
        if bytes.len() != at + 8 * n {
            return Err(bad("parameter block length mismatch"));
        }
        let params: Vec<T> = bytes[at..]
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        let mut model = Model::new(config)?;
        model.set_params(&params).map_err(|e| bad(&e.to_string()))?;
        Ok(model)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GZLC";
pub const CHECKPOINT_VERSION: u32 = 1;

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
