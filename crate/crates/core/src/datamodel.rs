//! Frames, trajectories and 3-frame sets; manifest and label-file I/O;
//! identity-disjoint splitting; synthetic data with known ground truth.
//!
//! The manifest is JSON Lines, one frame per line:
//!
//! ```text
//! {"frame_id":"f0","identity_id":"p01","trajectory_id":"p01-t0","order_index":0,
//!  "label":[0.0,0.0,-1.0],"features":[0.1,0.2]}
//! {"frame_id":"f1","identity_id":"p01","trajectory_id":"p01-t0","order_index":1,
//!  "features":"feat/f1.f32"}
//! ```
//!
//! `label` may be replaced by `yaw_pitch` (radians) for datasets that store two
//! angles. `features` is either an inline array or a path, relative to the
//! manifest, of a raw little-endian `f32` vector. Optional keys: `landmarks`
//! (`[lx, ly, rx, ry, nx, ny]` in pixels), `grid` (`[col, row]`) and
//! `target` (`[x, y]` on-screen target coordinate).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize, slerp, yaw_pitch_to_vector, GazeVector};
use crate::scalar::Scalar;

/// Labels whose norm is within this distance of 1 are renormalized silently.
pub const LABEL_NORM_TOLERANCE: f64 = 1e-3;

/// Header of the label output file.
pub const LABEL_HEADER: &str = "frame_id,gx,gy,gz,source";

/// 2D image point in pixels, `y` pointing down.
pub type Point2<T> = [T; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmarks<T> {
    pub pupil_left: Point2<T>,
    pub pupil_right: Point2<T>,
    pub nose_tip: Point2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<T> {
    pub frame_id: String,
    pub identity_id: String,
    pub trajectory_id: String,
    pub order_index: i64,
    /// Flattened eye patch or precomputed descriptor. Empty when absent.
    pub features: Vec<T>,
    pub label: Option<GazeVector<T>>,
    pub landmarks: Option<Landmarks<T>>,
    pub grid_cell: Option<(u32, u32)>,
    pub target: Option<Point2<T>>,
}

impl<T: Scalar> FrameRecord<T> {
    pub fn new(
        frame_id: impl Into<String>,
        identity_id: impl Into<String>,
        trajectory_id: impl Into<String>,
        order_index: i64,
        features: Vec<T>,
    ) -> Self {
        FrameRecord {
            frame_id: frame_id.into(),
            identity_id: identity_id.into(),
            trajectory_id: trajectory_id.into(),
            order_index,
            features,
            label: None,
            landmarks: None,
            grid_cell: None,
            target: None,
        }
    }

    pub fn with_label(mut self, label: GazeVector<T>) -> Self {
        self.label = Some(label);
        self
    }

    pub fn without_label(&self) -> Self {
        FrameRecord {
            label: None,
            ..self.clone()
        }
    }
}

/// Ordered frames of one identity following one gaze path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub trajectory_id: String,
    pub identity_id: String,
    frames: Vec<Arc<FrameRecord<T>>>,
}

impl<T: Scalar> Trajectory<T> {
    /// Builds a trajectory from frames already in path order. Requires at
    /// least two frames, a single identity and strictly increasing
    /// `order_index`.
    pub fn new(trajectory_id: impl Into<String>, frames: Vec<Arc<FrameRecord<T>>>) -> Result<Self> {
        let trajectory_id = trajectory_id.into();
        if frames.len() < 2 {
            return Err(Error::ManifestConflict(format!(
                "trajectory {trajectory_id} has {} frame(s), need at least 2",
                frames.len()
            )));
        }
        let identity_id = frames[0].identity_id.clone();
        if let Some(f) = frames.iter().find(|f| f.identity_id != identity_id) {
            return Err(Error::ManifestConflict(format!(
                "trajectory {trajectory_id} mixes identities {identity_id} and {}",
                f.identity_id
            )));
        }
        if let Some(w) = frames.windows(2).find(|w| w[0].order_index >= w[1].order_index) {
            return Err(Error::ManifestConflict(format!(
                "trajectory {trajectory_id}: order_index {} does not increase to {}",
                w[0].order_index, w[1].order_index
            )));
        }
        Ok(Trajectory {
            trajectory_id,
            identity_id,
            frames,
        })
    }

    pub fn frames(&self) -> &[Arc<FrameRecord<T>>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Ordered (start, unlabelled, end) triple drawn from one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeFrameSet<T> {
    pub start: Arc<FrameRecord<T>>,
    pub unlabelled: Arc<FrameRecord<T>>,
    pub end: Arc<FrameRecord<T>>,
}

impl<T: Scalar> ThreeFrameSet<T> {
    pub fn new(
        start: Arc<FrameRecord<T>>,
        unlabelled: Arc<FrameRecord<T>>,
        end: Arc<FrameRecord<T>>,
    ) -> Result<Self> {
        let set = ThreeFrameSet {
            start,
            unlabelled,
            end,
        };
        set.validate()?;
        Ok(set)
    }

    /// Checks the shared identity/trajectory, strict ordering and the start
    /// label.
    pub fn validate(&self) -> Result<()> {
        let frames = [&self.start, &self.unlabelled, &self.end];
        let conflict = |msg: String| Error::ManifestConflict(msg);
        for f in &frames[1..] {
            if f.identity_id != self.start.identity_id {
                return Err(conflict(format!(
                    "3-frame set mixes identities {} and {}",
                    self.start.identity_id, f.identity_id
                )));
            }
            if f.trajectory_id != self.start.trajectory_id {
                return Err(conflict(format!(
                    "3-frame set mixes trajectories {} and {}",
                    self.start.trajectory_id, f.trajectory_id
                )));
            }
        }
        if !(self.start.order_index < self.unlabelled.order_index
            && self.unlabelled.order_index < self.end.order_index)
        {
            return Err(conflict(format!(
                "3-frame set ({}, {}, {}) is not strictly ordered",
                self.start.frame_id, self.unlabelled.frame_id, self.end.frame_id
            )));
        }
        if self.start.label.is_none() {
            return Err(Error::MissingLabel(format!(
                "start frame {} of a 3-frame set",
                self.start.frame_id
            )));
        }
        Ok(())
    }

    pub fn identity_id(&self) -> &str {
        &self.start.identity_id
    }

    pub fn frames(&self) -> [&Arc<FrameRecord<T>>; 3] {
        [&self.start, &self.unlabelled, &self.end]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<ThreeFrameSet<T>>,
    pub test: Vec<ThreeFrameSet<T>>,
}

impl<T> DatasetSplit<T> {
    pub fn train_fraction(&self) -> f64 {
        let total = self.train.len() + self.test.len();
        if total == 0 {
            0.0
        } else {
            self.train.len() as f64 / total as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureRef {
    Inline(Vec<f64>),
    File(String),
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub frame_id: String,
    pub identity_id: String,
    pub trajectory_id: String,
    pub order_index: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_pitch: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureRef>,
}

fn parse_label<T: Scalar>(frame_id: &str, raw: [f64; 3]) -> Result<GazeVector<T>> {
    let bad = |reason: String| Error::BadLabel {
        frame_id: frame_id.to_string(),
        reason,
    };
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite component".into()));
    }
    let n = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
    if (n - 1.0).abs() > LABEL_NORM_TOLERANCE {
        return Err(bad(format!("norm {n} is not within {LABEL_NORM_TOLERANCE} of 1")));
    }
    normalize([T::lit(raw[0]), T::lit(raw[1]), T::lit(raw[2])])
        .map_err(|_| bad("zero vector".into()))
}

/// Reads a raw little-endian `f32` vector file.
pub fn read_feature_file<T: Scalar>(path: &Path) -> Result<Vec<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Parse {
            location: path.display().to_string(),
            reason: format!("{} bytes is not a whole number of f32 values", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

pub fn write_feature_file<T: Scalar>(path: &Path, features: &[T]) -> Result<()> {
    let mut bytes = Vec::with_capacity(features.len() * 4);
    for v in features {
        bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn row_to_frame<T: Scalar>(row: ManifestRow, base: &Path) -> Result<FrameRecord<T>> {
    let label = match (row.label, row.yaw_pitch) {
        (Some(_), Some(_)) => {
            return Err(Error::BadLabel {
                frame_id: row.frame_id.clone(),
                reason: "both label and yaw_pitch given".into(),
            })
        }
        (Some(raw), None) => Some(parse_label(&row.frame_id, raw)?),
        (None, Some([yaw, pitch])) => Some(yaw_pitch_to_vector(T::lit(yaw), T::lit(pitch)).map_err(
            |e| Error::BadLabel {
                frame_id: row.frame_id.clone(),
                reason: e.to_string(),
            },
        )?),
        (None, None) => None,
    };
    let features = match row.features {
        None => Vec::new(),
        Some(FeatureRef::Inline(v)) => v.into_iter().map(T::lit).collect(),
        Some(FeatureRef::File(rel)) => read_feature_file(&base.join(rel))?,
    };
    let l = |i: usize| T::lit(row.landmarks.unwrap_or_default()[i]);
    Ok(FrameRecord {
        frame_id: row.frame_id,
        identity_id: row.identity_id,
        trajectory_id: row.trajectory_id,
        order_index: row.order_index,
        features,
        label,
        landmarks: row.landmarks.map(|_| Landmarks {
            pupil_left: [l(0), l(1)],
            pupil_right: [l(2), l(3)],
            nose_tip: [l(4), l(5)],
        }),
        grid_cell: row.grid.map(|[c, r]| (c, r)),
        target: row.target.map(|[x, y]| [T::lit(x), T::lit(y)]),
    })
}

/// Parses every manifest line into frame records, in file order.
pub fn load_frames<T: Scalar>(path: &Path) -> Result<Vec<FrameRecord<T>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut frames = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            location: format!("{}:{}", path.display(), lineno + 1),
            reason: e.to_string(),
        })?;
        frames.push(row_to_frame(row, base)?);
    }
    let dims: BTreeSet<usize> = frames
        .iter()
        .map(|f| f.features.len())
        .filter(|&n| n > 0)
        .collect();
    if dims.len() > 1 {
        return Err(Error::ManifestConflict(format!(
            "feature dimensions differ across frames: {dims:?}"
        )));
    }
    Ok(frames)
}

/// Groups frames into trajectories (first-appearance order) sorted by
/// `order_index`.
pub fn group_trajectories<T: Scalar>(frames: Vec<FrameRecord<T>>) -> Result<Vec<Trajectory<T>>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<FrameRecord<T>>> = HashMap::new();
    for f in frames {
        if !groups.contains_key(&f.trajectory_id) {
            order.push(f.trajectory_id.clone());
        }
        groups.entry(f.trajectory_id.clone()).or_default().push(f);
    }
    order
        .into_iter()
        .map(|tid| {
            let mut fs = groups.remove(&tid).unwrap_or_default();
            fs.sort_by_key(|f| f.order_index);
            if let Some(w) = fs.windows(2).find(|w| w[0].order_index == w[1].order_index) {
                return Err(Error::ManifestConflict(format!(
                    "duplicate order_index {} in trajectory {tid} (frames {} and {})",
                    w[0].order_index, w[0].frame_id, w[1].frame_id
                )));
            }
            Trajectory::new(tid, fs.into_iter().map(Arc::new).collect())
        })
        .collect()
}

/// Loads a manifest and groups it into trajectories.
pub fn load_manifest<T: Scalar>(path: &Path) -> Result<Vec<Trajectory<T>>> {
    group_trajectories(load_frames(path)?)
}

/// Converts a frame back to a manifest row with inline features.
pub fn frame_to_row<T: Scalar>(f: &FrameRecord<T>, features: Option<FeatureRef>) -> ManifestRow {
    ManifestRow {
        frame_id: f.frame_id.clone(),
        identity_id: f.identity_id.clone(),
        trajectory_id: f.trajectory_id.clone(),
        order_index: f.order_index,
        label: f.label.map(|g| g.to_array().map(|v| v.as_f64())),
        yaw_pitch: None,
        landmarks: f.landmarks.map(|l| {
            [
                l.pupil_left[0].as_f64(),
                l.pupil_left[1].as_f64(),
                l.pupil_right[0].as_f64(),
                l.pupil_right[1].as_f64(),
                l.nose_tip[0].as_f64(),
                l.nose_tip[1].as_f64(),
            ]
        }),
        grid: f.grid_cell.map(|(c, r)| [c, r]),
        target: f.target.map(|p| [p[0].as_f64(), p[1].as_f64()]),
        features,
    }
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("manifest rows always serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Label files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord<T> {
    pub frame_id: String,
    pub gaze: GazeVector<T>,
    pub source: String,
}

impl<T: Scalar> LabelRecord<T> {
    pub fn new(frame_id: impl Into<String>, gaze: GazeVector<T>, source: impl Into<String>) -> Self {
        LabelRecord {
            frame_id: frame_id.into(),
            gaze,
            source: source.into(),
        }
    }
}

/// Formats with nine significant digits.
pub fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes (or overwrites) a label CSV.
pub fn write_labels<T: Scalar>(path: &Path, records: &[LabelRecord<T>]) -> Result<()> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(LABEL_HEADER);
    out.push('\n');
    for r in records {
        if r.frame_id.contains(',') || r.source.contains(',') {
            return Err(Error::Parse {
                location: r.frame_id.clone(),
                reason: "commas are not allowed in frame ids or source tags".into(),
            });
        }
        let [x, y, z] = r.gaze.to_array().map(|v| fmt_sig9(v.as_f64()));
        out.push_str(&format!("{},{x},{y},{z},{}\n", r.frame_id, r.source));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels<T: Scalar>(path: &Path) -> Result<Vec<LabelRecord<T>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == LABEL_HEADER => {}
        other => {
            return Err(Error::Parse {
                location: format!("{}:1", path.display()),
                reason: format!("expected header {LABEL_HEADER:?}, found {other:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), i + 2);
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse {
                location,
                reason: format!("expected 5 columns, found {}", cols.len()),
            });
        }
        let mut g = [0.0f64; 3];
        for (k, c) in cols[1..4].iter().enumerate() {
            g[k] = c.trim().parse().map_err(|e| Error::Parse {
                location: location.clone(),
                reason: format!("{c:?}: {e}"),
            })?;
        }
        out.push(LabelRecord {
            frame_id: cols[0].to_string(),
            gaze: parse_label(cols[0], g)?,
            source: cols[4].trim().to_string(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Assigns whole identities to train or test.
///
/// Identities are shuffled with `seed`; the number of training identities is
/// the one whose set fraction lies closest to `fraction` (ties go to fewer
/// training identities).
pub fn split_identity_disjoint<T: Scalar>(
    sets: &[ThreeFrameSet<T>],
    fraction: f64,
    seed: u64,
) -> Result<DatasetSplit<T>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction {fraction} must lie in (0, 1)"
        )));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in sets {
        *counts.entry(s.identity_id()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::CannotSplit(format!(
            "need at least 2 identities, found {}",
            counts.len()
        )));
    }
    let mut ids: Vec<&str> = counts.keys().copied().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = sets.len() as f64;
    let mut best = (f64::INFINITY, 1usize);
    let mut cum = 0usize;
    for k in 1..ids.len() {
        cum += counts[ids[k - 1]];
        let gap = (cum as f64 / total - fraction).abs();
        if gap < best.0 - 1e-12 {
            best = (gap, k);
        }
    }
    let train_ids: BTreeSet<&str> = ids[..best.1].iter().copied().collect();
    let (train, test) = sets
        .iter()
        .cloned()
        .partition(|s| train_ids.contains(s.identity_id()));
    Ok(DatasetSplit { train, test })
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

fn default_appearance_dim() -> usize {
    4
}
fn default_appearance_scale() -> f64 {
    0.5
}
fn default_max_yaw() -> f64 {
    40.0
}
fn default_max_pitch() -> f64 {
    25.0
}
fn default_noise() -> f64 {
    0.01
}

/// Parameters of the synthetic generator.
///
/// Features follow `x = A g + B a_i + noise` with `A` (`F x 3`) and `B`
/// (`F x appearance_dim`) drawn once per seed and one appearance vector
/// `a_i` per identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_identities: usize,
    pub trajectories_per_identity: usize,
    pub frames_per_trajectory: usize,
    pub feature_dim: usize,
    #[serde(default = "default_appearance_dim")]
    pub appearance_dim: usize,
    #[serde(default = "default_appearance_scale")]
    pub appearance_scale: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    /// Gaze endpoints are drawn uniformly in yaw/pitch within these bounds.
    #[serde(default = "default_max_yaw")]
    pub max_yaw_deg: f64,
    #[serde(default = "default_max_pitch")]
    pub max_pitch_deg: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_identities: 20,
            trajectories_per_identity: 2,
            frames_per_trajectory: 9,
            feature_dim: 16,
            appearance_dim: default_appearance_dim(),
            appearance_scale: default_appearance_scale(),
            noise_sigma: default_noise(),
            max_yaw_deg: default_max_yaw(),
            max_pitch_deg: default_max_pitch(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_identities < 1 || self.trajectories_per_identity < 1 || self.feature_dim < 1 {
            return bad("synthetic counts and feature_dim must be at least 1");
        }
        if self.frames_per_trajectory < 3 {
            return bad("frames_per_trajectory must be at least 3: mining a 3-frame set needs an interior frame");
        }
        if !(self.noise_sigma >= 0.0) || !(self.appearance_scale >= 0.0) {
            return bad("noise_sigma and appearance_scale must be non-negative");
        }
        if !(self.max_pitch_deg >= 0.0 && self.max_pitch_deg < 90.0) || !(self.max_yaw_deg >= 0.0) {
            return bad("max_pitch_deg must lie in [0, 90) and max_yaw_deg must be non-negative");
        }
        Ok(())
    }
}

/// Generator output: the trajectories plus the mixing matrices used.
#[derive(Debug, Clone)]
pub struct SynthDataset<T> {
    pub trajectories: Vec<Trajectory<T>>,
    /// Row-major `F x 3`.
    pub gaze_mixing: Vec<f64>,
    /// Row-major `F x appearance_dim`.
    pub appearance_mixing: Vec<f64>,
    pub appearance: Vec<Vec<f64>>,
}

/// Draws a fully labelled synthetic dataset. See [`SynthConfig`].
pub fn synth_generate<T: Scalar>(cfg: &SynthConfig) -> Result<SynthDataset<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let f = cfg.feature_dim;
    let ad = cfg.appearance_dim;
    let gaze_mixing: Vec<f64> = (0..f * 3).map(|_| std_normal.sample(&mut rng)).collect();
    let appearance_mixing: Vec<f64> = (0..f * ad).map(|_| std_normal.sample(&mut rng)).collect();
    let yaw = Uniform::new_inclusive(-cfg.max_yaw_deg.to_radians(), cfg.max_yaw_deg.to_radians())
        .expect("finite yaw range");
    let pitch = Uniform::new_inclusive(
        -cfg.max_pitch_deg.to_radians(),
        cfg.max_pitch_deg.to_radians(),
    )
    .expect("finite pitch range");
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut appearance = Vec::with_capacity(cfg.n_identities);
    let mut trajectories = Vec::new();
    let n = cfg.frames_per_trajectory;
    for i in 0..cfg.n_identities {
        let a: Vec<f64> = (0..ad)
            .map(|_| cfg.appearance_scale * std_normal.sample(&mut rng))
            .collect();
        let identity_id = format!("id{i:03}");
        for j in 0..cfg.trajectories_per_identity {
            let trajectory_id = format!("{identity_id}-t{j:02}");
            let p = yaw_pitch_to_vector(yaw.sample(&mut rng), pitch.sample(&mut rng))?;
            let q = yaw_pitch_to_vector(yaw.sample(&mut rng), pitch.sample(&mut rng))?;
            let mut frames = Vec::with_capacity(n);
            for k in 0..n {
                let g = slerp(&p, &q, k as f64 / (n - 1) as f64)?;
                let ga = g.to_array();
                let x: Vec<T> = (0..f)
                    .map(|r| {
                        let mut v = gaze_mixing[r * 3] * ga[0]
                            + gaze_mixing[r * 3 + 1] * ga[1]
                            + gaze_mixing[r * 3 + 2] * ga[2];
                        for (c, av) in a.iter().enumerate() {
                            v += appearance_mixing[r * ad + c] * av;
                        }
                        if cfg.noise_sigma > 0.0 {
                            v += noise.sample(&mut rng);
                        }
                        T::lit(v)
                    })
                    .collect();
                let frame = FrameRecord::new(
                    format!("{trajectory_id}-f{k:03}"),
                    identity_id.clone(),
                    trajectory_id.clone(),
                    k as i64,
                    x,
                )
                .with_label(g.cast());
                frames.push(Arc::new(frame));
            }
            trajectories.push(Trajectory::new(trajectory_id, frames)?);
        }
        appearance.push(a);
    }
    Ok(SynthDataset {
        trajectories,
        gaze_mixing,
        appearance_mixing,
        appearance,
    })
}

/// Parameters of the grid-layout generator: every identity fixates each
/// cell of a `cols x rows` target grid for `frames_per_cell` frames, row by
/// row. Cell `(c, r)` looks at yaw `(c - (cols-1)/2) * spacing` and pitch
/// `((rows-1)/2 - r) * spacing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSynthConfig {
    pub n_identities: usize,
    pub cols: u32,
    pub rows: u32,
    pub frames_per_cell: usize,
    pub spacing_deg: f64,
    pub feature_dim: usize,
    #[serde(default = "default_appearance_dim")]
    pub appearance_dim: usize,
    #[serde(default = "default_appearance_scale")]
    pub appearance_scale: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GridSynthConfig {
    fn default() -> Self {
        GridSynthConfig {
            n_identities: 56,
            cols: 7,
            rows: 3,
            frames_per_cell: 5,
            spacing_deg: 10.0,
            feature_dim: 16,
            appearance_dim: default_appearance_dim(),
            appearance_scale: default_appearance_scale(),
            noise_sigma: default_noise(),
            seed: 0,
        }
    }
}

impl GridSynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_identities < 1 || self.frames_per_cell < 1 || self.feature_dim < 1 {
            return bad("grid counts and feature_dim must be at least 1");
        }
        if self.cols < 3 && self.rows < 3 {
            return bad("a grid needs at least 3 cells along some axis to yield a 3-frame set");
        }
        if !(self.noise_sigma >= 0.0) || !(self.appearance_scale >= 0.0) {
            return bad("noise_sigma and appearance_scale must be non-negative");
        }
        let half = (self.cols.max(self.rows) as f64 - 1.0) / 2.0 * self.spacing_deg;
        if !(self.spacing_deg > 0.0) || half >= 90.0 {
            return bad("spacing_deg must be positive and keep every cell within 90 degrees");
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.n_identities * (self.cols * self.rows) as usize * self.frames_per_cell
    }
}

/// Draws a fully labelled grid dataset. Each frame carries its grid cell and
/// its target position `(col, row)`; one trajectory per identity holds the
/// whole session in capture order.
pub fn synth_grid_generate<T: Scalar>(cfg: &GridSynthConfig) -> Result<Vec<FrameRecord<T>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (f, ad) = (cfg.feature_dim, cfg.appearance_dim);
    let gaze_mixing: Vec<f64> = (0..f * 3).map(|_| std_normal.sample(&mut rng)).collect();
    let appearance_mixing: Vec<f64> = (0..f * ad).map(|_| std_normal.sample(&mut rng)).collect();
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (cx, cy) = ((cfg.cols as f64 - 1.0) / 2.0, (cfg.rows as f64 - 1.0) / 2.0);
    let mut frames = Vec::with_capacity(cfg.total_frames());
    for i in 0..cfg.n_identities {
        let a: Vec<f64> = (0..ad)
            .map(|_| cfg.appearance_scale * std_normal.sample(&mut rng))
            .collect();
        let identity_id = format!("id{i:03}");
        let trajectory_id = format!("{identity_id}-grid");
        let mut order = 0i64;
        for r in 0..cfg.rows {
            for c in 0..cfg.cols {
                let yaw = ((c as f64 - cx) * cfg.spacing_deg).to_radians();
                let pitch = ((cy - r as f64) * cfg.spacing_deg).to_radians();
                let g = yaw_pitch_to_vector(yaw, pitch)?.to_array();
                for k in 0..cfg.frames_per_cell {
                    let x: Vec<T> = (0..f)
                        .map(|row| {
                            let mut v: f64 = (0..3).map(|j| gaze_mixing[row * 3 + j] * g[j]).sum();
                            v += (0..ad).map(|j| appearance_mixing[row * ad + j] * a[j]).sum::<f64>();
                            if cfg.noise_sigma > 0.0 {
                                v += noise.sample(&mut rng);
                            }
                            T::lit(v)
                        })
                        .collect();
                    let mut frame = FrameRecord::new(
                        format!("{identity_id}-c{c}r{r}-{k:02}"),
                        identity_id.clone(),
                        trajectory_id.clone(),
                        order,
                        x,
                    )
                    .with_label(normalize([T::lit(g[0]), T::lit(g[1]), T::lit(g[2])])?);
                    frame.grid_cell = Some((c, r));
                    frame.target = Some([T::lit(c as f64), T::lit(r as f64)]);
                    frames.push(frame);
                    order += 1;
                }
            }
        }
    }
    Ok(frames)
}
