//! Training objectives and their gradients with respect to the forward
//! outputs.
//!
//! Two-label objective: `l1 * reg + l2 * consistency`.
//! One-label objective: `l1 * reg + l2 * consistency + l3 * divergence + l4 * embedding`.

use serde::{Deserialize, Serialize};

use crate::datamodel::ThreeFrameSet;
use crate::error::{Error, Result};
use crate::geometry::{cosine_similarity, GazeVector};
use crate::model::{ForwardOutput, Mode, Model, ModelGrads, OutputGrads};
use crate::scalar::{dot, norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::new(1.0, 1.0, 1.0, 1.0)
    }
}

impl LossWeights {
    pub const fn new(lambda1: f64, lambda2: f64, lambda3: f64, lambda4: f64) -> Self {
        LossWeights {
            lambda1,
            lambda2,
            lambda3,
            lambda4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if all.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be finite and non-negative: {all:?}"
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }
}

/// Variants of individual terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossOptions {
    /// Divergence against the start frame's ground-truth label instead of
    /// its prediction.
    #[serde(default)]
    pub divergence_on_ground_truth: bool,
    /// Euclidean distance instead of squared distance for the embedding term.
    #[serde(default)]
    pub root_embedding: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reg: f64,
    pub consistency: f64,
    pub divergence: f64,
    pub embedding: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add_assign(&mut self, o: &LossBreakdown) {
        self.reg += o.reg;
        self.consistency += o.consistency;
        self.divergence += o.divergence;
        self.embedding += o.embedding;
        self.total += o.total;
    }

    pub fn scaled(&self, s: f64) -> LossBreakdown {
        LossBreakdown {
            reg: self.reg * s,
            consistency: self.consistency * s,
            divergence: self.divergence * s,
            embedding: self.embedding * s,
            total: self.total * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.reg, self.consistency, self.divergence, self.embedding, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Ground-truth labels visible to the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetLabels<T> {
    pub start: GazeVector<T>,
    pub end: Option<GazeVector<T>>,
}

impl<T: Scalar> SetLabels<T> {
    /// Labels a mode may read from a set: the start label, and the end label
    /// in two-label mode. Never touches the unlabelled frame.
    pub fn from_set(set: &ThreeFrameSet<T>, mode: Mode) -> Result<Self> {
        let start = set.start.label.ok_or_else(|| {
            Error::MissingLabel(format!("start frame {}", set.start.frame_id))
        })?;
        let end = match mode {
            Mode::TwoLabels => Some(set.end.label.ok_or_else(|| {
                Error::MissingLabel(format!("end frame {} (two-label mode)", set.end.frame_id))
            })?),
            Mode::OneLabel => None,
        };
        Ok(SetLabels { start, end })
    }
}

pub fn mse<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::dims(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(T::zero());
    }
    let s: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(s / T::lit(a.len() as f64))
}

fn mse_grad<T: Scalar>(pred: &[T; 3], target: &[T; 3], scale: T) -> [T; 3] {
    let k = scale * T::lit(2.0 / 3.0);
    [
        k * (pred[0] - target[0]),
        k * (pred[1] - target[1]),
        k * (pred[2] - target[2]),
    ]
}

pub fn regression_loss<T: Scalar>(
    mode: Mode,
    out: &ForwardOutput<T>,
    y_s: &GazeVector<T>,
    y_e: Option<&GazeVector<T>>,
) -> Result<T> {
    let start = mse(&out.y_s_p, &y_s.to_array())?;
    match mode {
        Mode::OneLabel => Ok(start),
        Mode::TwoLabels => {
            let y_e = y_e.ok_or_else(|| Error::MissingLabel("end label in two-label mode".into()))?;
            Ok(start + mse(&out.y_e_p, &y_e.to_array())?)
        }
    }
}

/// Frame pairs compared by the consistency term: (s, ul) always, (ul, e) in
/// two-label mode.
fn consistency_pairs(mode: Mode) -> &'static [(usize, usize)] {
    match mode {
        Mode::TwoLabels => &[(0, 1), (1, 2)],
        Mode::OneLabel => &[(0, 1)],
    }
}

/// `sum |cos(y_a, y_b) - cos(z_a, z_b)|` over the mode's frame pairs.
pub fn consistency_loss<T: Scalar>(mode: Mode, out: &ForwardOutput<T>) -> Result<T> {
    let ys = out.predictions();
    let zs = out.latents();
    let mut total = T::zero();
    for &(a, b) in consistency_pairs(mode) {
        let dy = cosine_similarity(&ys[a], &ys[b])?;
        let dz = cosine_similarity(zs[a], zs[b])?;
        total = total + (dy - dz).abs();
    }
    Ok(total)
}

pub fn softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = v.iter().map(|&x| (x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `sum p ln(p / q)` for distributions on the simplex; `0 ln 0 = 0`.
pub fn kl_divergence<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::dims(p.len(), q.len()));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > T::zero())
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.ln()))
        .sum())
}

/// `KL(softmax(y_s) || softmax(y_ul))`.
pub fn divergence_loss<T: Scalar>(y_s: &[T; 3], y_ul: &[T; 3]) -> T {
    let p = softmax(y_s);
    let q = softmax(y_ul);
    kl_divergence(&p, &q).expect("equal lengths").max(T::zero())
}

fn log_softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + v.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
    v.iter().map(|&x| x - lse).collect()
}

/// Gradients of the divergence with respect to the start and unlabelled
/// logits.
fn divergence_grad<T: Scalar>(y_s: &[T; 3], y_ul: &[T; 3]) -> ([T; 3], [T; 3]) {
    let (lp, lq) = (log_softmax(y_s), log_softmax(y_ul));
    let p: Vec<T> = lp.iter().map(|v| v.exp()).collect();
    let q: Vec<T> = lq.iter().map(|v| v.exp()).collect();
    let r: Vec<T> = lp.iter().zip(&lq).map(|(&a, &b)| a - b).collect();
    let kl: T = p.iter().zip(&r).map(|(&pi, &ri)| pi * ri).sum();
    let ds = std::array::from_fn(|j| p[j] * (r[j] - kl));
    let dul = std::array::from_fn(|j| q[j] - p[j]);
    (ds, dul)
}

/// Squared Euclidean distance between `z_e` and its reconstruction.
pub fn embedding_loss<T: Scalar>(z_e: &[T], z_e_r: &[T]) -> Result<T> {
    if z_e.len() != z_e_r.len() {
        return Err(Error::dims(z_e.len(), z_e_r.len()));
    }
    Ok(z_e.iter().zip(z_e_r).map(|(&a, &b)| (a - b) * (a - b)).sum())
}

/// `d cos(a, b) / da`.
fn cosine_grad<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let (na, nb) = (norm(a), norm(b));
    let c = dot(a, b) / (na * nb);
    a.iter()
        .zip(b)
        .map(|(&ai, &bi)| bi / (na * nb) - c * ai / (na * na))
        .collect()
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Weighted objective value plus its gradient with respect to the forward
/// outputs.
pub fn total_loss_with_grads<T: Scalar>(
    mode: Mode,
    out: &ForwardOutput<T>,
    labels: &SetLabels<T>,
    w: &LossWeights,
    opts: &LossOptions,
) -> Result<(LossBreakdown, OutputGrads<T>)> {
    let d = out.z_s.len();
    let mut g = OutputGrads::zeros(d);
    let (l1, l2, l3, l4) = (
        T::lit(w.lambda1),
        T::lit(w.lambda2),
        T::lit(w.lambda3),
        T::lit(w.lambda4),
    );

    let reg = regression_loss(mode, out, &labels.start, labels.end.as_ref())?;
    let ys = labels.start.to_array();
    g.dy[0] = mse_grad(&out.y_s_p, &ys, l1);
    if let (Mode::TwoLabels, Some(e)) = (mode, labels.end) {
        g.dy[2] = mse_grad(&out.y_e_p, &e.to_array(), l1);
    }

    let preds = out.predictions();
    let lats = out.latents();
    let mut consistency = T::zero();
    for &(a, b) in consistency_pairs(mode) {
        let cy = cosine_similarity(&preds[a], &preds[b])?;
        let cz = cosine_similarity(lats[a], lats[b])?;
        consistency = consistency + (cy - cz).abs();
        let s = sign(cy - cz) * l2;
        if s == T::zero() {
            continue;
        }
        for (k, other) in [(a, b), (b, a)] {
            let gy = cosine_grad(&preds[k], &preds[other]);
            let gz = cosine_grad(lats[k], lats[other]);
            for i in 0..3 {
                g.dy[k][i] = g.dy[k][i] + s * gy[i];
            }
            for i in 0..d {
                g.dz[k][i] = g.dz[k][i] - s * gz[i];
            }
        }
    }

    let (mut divergence, mut embedding) = (T::zero(), T::zero());
    if mode == Mode::OneLabel {
        let p_src = if opts.divergence_on_ground_truth { ys } else { out.y_s_p };
        divergence = divergence_loss(&p_src, &out.y_ul_p);
        let (ds, dul) = divergence_grad(&p_src, &out.y_ul_p);
        for i in 0..3 {
            if !opts.divergence_on_ground_truth {
                g.dy[0][i] = g.dy[0][i] + l3 * ds[i];
            }
            g.dy[1][i] = g.dy[1][i] + l3 * dul[i];
        }

        let rec = out
            .z_e_reconstructed
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("one-label output lacks decoder reconstruction".into()))?;
        let sq = embedding_loss(&out.z_e, rec)?;
        let (value, scale) = if opts.root_embedding {
            let r = sq.sqrt();
            let s = if r > T::zero() { T::one() / r } else { T::zero() };
            (r, s)
        } else {
            (sq, T::lit(2.0))
        };
        embedding = value;
        let mut dr = vec![T::zero(); d];
        for i in 0..d {
            let diff = out.z_e[i] - rec[i];
            // The squared form contributes 2 * diff; the root form diff / r.
            let gi = l4 * scale * diff;
            g.dz[2][i] = g.dz[2][i] + gi;
            dr[i] = -gi;
        }
        g.dz_reconstructed = Some(dr);
    }

    let total = l1 * reg + l2 * consistency + l3 * divergence + l4 * embedding;
    let b = LossBreakdown {
        reg: reg.as_f64(),
        consistency: consistency.as_f64(),
        divergence: divergence.as_f64(),
        embedding: embedding.as_f64(),
        total: total.as_f64(),
    };
    Ok((b, g))
}

/// Loss terms and weighted total. Two-label mode reports divergence and
/// embedding as zero.
pub fn total_loss<T: Scalar>(
    mode: Mode,
    out: &ForwardOutput<T>,
    labels: &SetLabels<T>,
    w: &LossWeights,
    opts: &LossOptions,
) -> Result<LossBreakdown> {
    Ok(total_loss_with_grads(mode, out, labels, w, opts)?.0)
}

/// Loss and analytic parameter gradient for one set.
pub fn gradients<T: Scalar>(
    model: &Model<T>,
    set: &ThreeFrameSet<T>,
    w: &LossWeights,
    opts: &LossOptions,
) -> Result<(LossBreakdown, ModelGrads<T>)> {
    let mode = model.mode();
    let labels = SetLabels::from_set(set, mode)?;
    let trace = model.forward_trace(set)?;
    let (b, upstream) = total_loss_with_grads(mode, &trace.output, &labels, w, opts)?;
    Ok((b, model.backward(&trace, &upstream)))
}
