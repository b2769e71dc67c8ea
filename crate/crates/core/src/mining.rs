//! 3-frame set mining: grid layouts, ordered trajectories, sorted target
//! points, and landmark streams without labels.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datamodel::{FrameRecord, Landmarks, ThreeFrameSet, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{slerp, GazeVector};
use crate::model::Mode;
use crate::scalar::Scalar;

/// Grid layout and the trajectory directions mined from it.
///
/// `diagonal` walks down-right (`col + 1, row + 1`); `anti_diagonal` walks
/// down-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub cols: u32,
    pub rows: u32,
    pub horizontal: bool,
    pub vertical: bool,
    pub diagonal: bool,
    #[serde(default)]
    pub anti_diagonal: bool,
    pub bidirectional: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::cave()
    }
}

impl GridSpec {
    /// 7 x 3 still-image layout, mined in both directions.
    pub fn cave() -> Self {
        GridSpec {
            cols: 7,
            rows: 3,
            horizontal: true,
            vertical: true,
            diagonal: true,
            anti_diagonal: false,
            bidirectional: true,
        }
    }

    /// 7 x 5 video layout; temporal order is known so triples are one-way.
    pub fn tablet() -> Self {
        GridSpec {
            cols: 7,
            rows: 5,
            bidirectional: false,
            ..GridSpec::cave()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cols < 1 || self.rows < 1 {
            return Err(Error::InvalidConfig("grid needs at least one row and column".into()));
        }
        if !(self.horizontal || self.vertical || self.diagonal || self.anti_diagonal) {
            return Err(Error::InvalidConfig("grid spec enables no direction".into()));
        }
        Ok(())
    }

    fn contains(&self, c: i64, r: i64) -> bool {
        c >= 0 && r >= 0 && c < self.cols as i64 && r < self.rows as i64
    }

    /// Every maximal straight line of at least three cells, in forward order.
    pub fn lines(&self) -> Vec<(String, Vec<(u32, u32)>)> {
        let mut dirs: Vec<(&str, i64, i64)> = Vec::new();
        if self.horizontal {
            dirs.push(("h", 1, 0));
        }
        if self.vertical {
            dirs.push(("v", 0, 1));
        }
        if self.diagonal {
            dirs.push(("d", 1, 1));
        }
        if self.anti_diagonal {
            dirs.push(("a", -1, 1));
        }
        let mut out = Vec::new();
        for (name, dc, dr) in dirs {
            for r in 0..self.rows as i64 {
                for c in 0..self.cols as i64 {
                    // Only start where the predecessor falls off the grid.
                    if self.contains(c - dc, r - dr) {
                        continue;
                    }
                    let mut cells = Vec::new();
                    let (mut cc, mut rr) = (c, r);
                    while self.contains(cc, rr) {
                        cells.push((cc as u32, rr as u32));
                        cc += dc;
                        rr += dr;
                    }
                    if cells.len() >= 3 {
                        out.push((format!("{name}{c}.{r}"), cells));
                    }
                }
            }
        }
        out
    }
}

fn relabel<T: Scalar>(f: &FrameRecord<T>, trajectory_id: &str, order: usize) -> Arc<FrameRecord<T>> {
    Arc::new(FrameRecord {
        trajectory_id: trajectory_id.to_string(),
        order_index: order as i64,
        ..f.clone()
    })
}

/// Mines grid trajectories for every identity in `frames`.
///
/// Each frame must carry a grid cell. When several frames share a cell
/// (video dwell), the middle frame of the dwell by `order_index` represents
/// it. A line contributes `{first, interior, last}` for each interior cell;
/// lines broken by a missing cell are mined per contiguous run.
pub fn mine_grid_sets<T: Scalar>(
    frames: &[Arc<FrameRecord<T>>],
    spec: &GridSpec,
) -> Result<Vec<ThreeFrameSet<T>>> {
    spec.validate()?;
    let mut by_identity: BTreeMap<&str, BTreeMap<(u32, u32), Vec<&Arc<FrameRecord<T>>>>> =
        BTreeMap::new();
    for f in frames {
        let cell = f.grid_cell.ok_or_else(|| {
            Error::ManifestConflict(format!("frame {} carries no grid cell", f.frame_id))
        })?;
        if cell.0 >= spec.cols || cell.1 >= spec.rows {
            return Err(Error::ManifestConflict(format!(
                "frame {} has cell {cell:?} outside the {}x{} grid",
                f.frame_id, spec.cols, spec.rows
            )));
        }
        by_identity
            .entry(f.identity_id.as_str())
            .or_default()
            .entry(cell)
            .or_default()
            .push(f);
    }

    let lines = spec.lines();
    let mut out = Vec::new();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    for (identity, cells) in by_identity {
        let rep: BTreeMap<(u32, u32), &FrameRecord<T>> = cells
            .into_iter()
            .map(|(cell, mut dwell)| {
                dwell.sort_by(|a, b| {
                    (a.order_index, &a.frame_id).cmp(&(b.order_index, &b.frame_id))
                });
                (cell, dwell[(dwell.len() - 1) / 2].as_ref())
            })
            .collect();
        for (name, line) in &lines {
            for run in line.split(|c| !rep.contains_key(c)) {
                if run.len() < 3 {
                    continue;
                }
                let mut orders = vec![("f", run.to_vec())];
                if spec.bidirectional {
                    orders.push(("r", run.iter().rev().copied().collect()));
                }
                for (dir, cells) in orders {
                    let tid = format!("{identity}:{name}:{dir}{}.{}", cells[0].0, cells[0].1);
                    let recs: Vec<Arc<FrameRecord<T>>> = cells
                        .iter()
                        .enumerate()
                        .map(|(k, c)| relabel(rep[c], &tid, k))
                        .collect();
                    let last = recs.len() - 1;
                    for mid in &recs[1..last] {
                        let key = (
                            recs[0].frame_id.clone(),
                            mid.frame_id.clone(),
                            recs[last].frame_id.clone(),
                        );
                        if seen.insert(key) {
                            out.push(ThreeFrameSet::new(
                                recs[0].clone(),
                                mid.clone(),
                                recs[last].clone(),
                            )?);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `{first, k, last}` for every interior frame `k`, in trajectory order.
pub fn mine_ordered_sets<T: Scalar>(traj: &Trajectory<T>) -> Result<Vec<ThreeFrameSet<T>>> {
    let fr = traj.frames();
    if fr.len() < 3 {
        return Ok(Vec::new());
    }
    let (first, last) = (&fr[0], &fr[fr.len() - 1]);
    fr[1..fr.len() - 1]
        .iter()
        .map(|m| ThreeFrameSet::new(first.clone(), m.clone(), last.clone()))
        .collect()
}

/// Orders frames by ascending target coordinate (`x`, then `y`; stable on
/// ties) and renumbers them `0..n`.
pub fn sort_points_into_trajectory<T: Scalar>(
    trajectory_id: &str,
    frames: &[Arc<FrameRecord<T>>],
) -> Result<Trajectory<T>> {
    let mut keyed = Vec::with_capacity(frames.len());
    for f in frames {
        let t = f.target.ok_or_else(|| {
            Error::ManifestConflict(format!("frame {} carries no target coordinate", f.frame_id))
        })?;
        keyed.push((t, f));
    }
    keyed.sort_by(|(a, _), (b, _)| {
        a[0].partial_cmp(&b[0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a[1].partial_cmp(&b[1]).unwrap_or(std::cmp::Ordering::Equal))
    });
    let frames = keyed
        .into_iter()
        .enumerate()
        .map(|(k, (_, f))| relabel(f, trajectory_id, k))
        .collect();
    Trajectory::new(trajectory_id, frames)
}

/// Angles at the nose tip between the upward vertical and each pupil, in
/// degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeAngles<T> {
    pub theta1: T,
    pub theta2: T,
}

fn vertical_angle<T: Scalar>(nose: [T; 2], pupil: [T; 2]) -> Result<T> {
    let dx = pupil[0] - nose[0];
    let dy = pupil[1] - nose[1];
    if dx == T::zero() && dy == T::zero() {
        return Err(Error::DegenerateLandmarks("pupil coincides with nose tip".into()));
    }
    if !(dx.is_finite() && dy.is_finite()) {
        return Err(Error::DegenerateLandmarks("non-finite landmark".into()));
    }
    // Image y grows downward, so "up" is -y.
    Ok(dx.abs().atan2(-dy).to_degrees())
}

pub fn compute_eye_angles<T: Scalar>(lm: &Landmarks<T>) -> Result<EyeAngles<T>> {
    Ok(EyeAngles {
        theta1: vertical_angle(lm.nose_tip, lm.pupil_left)?,
        theta2: vertical_angle(lm.nose_tip, lm.pupil_right)?,
    })
}

/// Head yaw in degrees from the nose tip's horizontal offset against the
/// pupil midpoint: `atan(offset / (nose_depth_ratio * ipd))`.
pub fn estimate_head_yaw_deg<T: Scalar>(lm: &Landmarks<T>, nose_depth_ratio: T) -> Result<T> {
    let ipd = ((lm.pupil_right[0] - lm.pupil_left[0]).powi(2)
        + (lm.pupil_right[1] - lm.pupil_left[1]).powi(2))
    .sqrt();
    if !(ipd > T::zero()) {
        return Err(Error::DegenerateLandmarks("pupils coincide".into()));
    }
    let mid = (lm.pupil_left[0] + lm.pupil_right[0]) / T::lit(2.0);
    let offset = lm.nose_tip[0] - mid;
    Ok((offset / (nose_depth_ratio * ipd)).atan().to_degrees())
}

/// Thresholds of the in-the-wild trajectory detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WildConfig {
    /// Centered moving-average width over the angle series (odd).
    pub smoothing_window: usize,
    /// Smoothed per-frame change, in degrees, below which an angle is still.
    pub min_delta_deg: f64,
    pub min_len: usize,
    pub max_head_yaw_deg: f64,
    /// Nose-tip depth in front of the eye plane, in interpupillary distances.
    pub nose_depth_ratio: f64,
}

impl Default for WildConfig {
    fn default() -> Self {
        WildConfig {
            smoothing_window: 3,
            min_delta_deg: 0.5,
            min_len: 3,
            max_head_yaw_deg: 10.0,
            nose_depth_ratio: 1.0,
        }
    }
}

/// Moving average with point-reflected padding, which leaves linear
/// trends unchanged at the ends.
fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    let half = (window.max(1) / 2) as i64;
    let n = xs.len() as i64;
    let at = |i: i64| -> f64 {
        if i < 0 {
            2.0 * xs[0] - xs[(-i).min(n - 1) as usize]
        } else if i >= n {
            2.0 * xs[(n - 1) as usize] - xs[(2 * (n - 1) - i).max(0) as usize]
        } else {
            xs[i as usize]
        }
    };
    (0..n)
        .map(|i| (i - half..=i + half).map(at).sum::<f64>() / (2 * half + 1) as f64)
        .collect()
}

fn step_sign(d: f64, thr: f64) -> i8 {
    if d > thr {
        1
    } else if d < -thr {
        -1
    } else {
        0
    }
}

/// Splits a landmark stream into gaze trajectories.
///
/// Frames whose estimated head yaw exceeds the gate (or whose landmarks are
/// degenerate) are dropped and break the stream. Within each contiguous
/// chunk the two eye angles are smoothed and every step gets a state
/// `(sign dθ1, sign dθ2)`; maximal runs of one non-still state of at least
/// `min_len` frames become trajectories. Adjacent runs share their boundary
/// frame. Frames are renumbered under new trajectory ids.
pub fn detect_wild_trajectories<T: Scalar>(
    stream: &[Arc<FrameRecord<T>>],
    cfg: &WildConfig,
) -> Result<Vec<Trajectory<T>>> {
    if let Some(f) = stream.iter().find(|f| f.landmarks.is_none()) {
        return Err(Error::ManifestConflict(format!(
            "wild mining needs landmarks; frame {} has none",
            f.frame_id
        )));
    }
    let mut ordered: Vec<&Arc<FrameRecord<T>>> = stream.iter().collect();
    ordered.sort_by_key(|f| f.order_index);

    let ratio = T::lit(cfg.nose_depth_ratio);
    let usable: Vec<Option<(f64, f64)>> = ordered
        .iter()
        .map(|f| {
            let lm = f.landmarks.as_ref().expect("checked above");
            let yaw = estimate_head_yaw_deg(lm, ratio).ok()?.as_f64();
            if yaw.abs() > cfg.max_head_yaw_deg {
                return None;
            }
            let a = compute_eye_angles(lm).ok()?;
            Some((a.theta1.as_f64(), a.theta2.as_f64()))
        })
        .collect();

    let mut out = Vec::new();
    let mut i = 0;
    while i < ordered.len() {
        if usable[i].is_none() {
            i += 1;
            continue;
        }
        let start = i;
        while i < ordered.len() && usable[i].is_some() {
            i += 1;
        }
        let chunk = &ordered[start..i];
        let t1: Vec<f64> = usable[start..i].iter().map(|a| a.unwrap().0).collect();
        let t2: Vec<f64> = usable[start..i].iter().map(|a| a.unwrap().1).collect();
        let (s1, s2) = (smooth(&t1, cfg.smoothing_window), smooth(&t2, cfg.smoothing_window));
        let states: Vec<(i8, i8)> = (1..chunk.len())
            .map(|k| {
                (
                    step_sign(s1[k] - s1[k - 1], cfg.min_delta_deg),
                    step_sign(s2[k] - s2[k - 1], cfg.min_delta_deg),
                )
            })
            .collect();
        for (fs, fe) in moving_spans(&states, &t1, &t2, cfg.smoothing_window) {
            let frames = &chunk[fs..=fe];
            if frames.len() < cfg.min_len.max(2) {
                continue;
            }
            let tid = format!("{}:w{}", frames[0].trajectory_id, frames[0].order_index);
            let recs = frames
                .iter()
                .enumerate()
                .map(|(n, f)| relabel(f, &tid, n))
                .collect();
            out.push(Trajectory::new(tid, recs)?);
        }
    }
    Ok(out)
}

/// Inclusive frame spans of the moving runs in `states`, where `states[k]`
/// is the step from frame `k` to `k + 1`.
///
/// Smoothing blurs a reversal into a few short steps whose state matches
/// neither side. When at most `window - 1` such steps separate two longer
/// runs in which one angle reverses, both runs are cut at that angle's raw
/// extremum so they share the turning frame, and the blurred steps are
/// dropped.
fn moving_spans(states: &[(i8, i8)], t1: &[f64], t2: &[f64], window: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<((i8, i8), usize, usize)> = Vec::new();
    let mut k = 0;
    while k < states.len() {
        let st = states[k];
        let a = k;
        while k < states.len() && states[k] == st {
            k += 1;
        }
        runs.push((st, a, k));
    }
    let short = window.saturating_sub(1);
    let mut spans: Vec<(usize, usize)> = runs.iter().map(|&(_, a, b)| (a, b)).collect();
    let mut keep: Vec<bool> = runs.iter().map(|r| r.0 != (0, 0)).collect();
    for a in 0..runs.len() {
        if runs[a].0 == (0, 0) || runs[a].2 - runs[a].1 <= short {
            continue;
        }
        let mut gap = 0;
        let mut b = a + 1;
        while b < runs.len() && runs[b].2 - runs[b].1 <= short {
            gap += runs[b].2 - runs[b].1;
            b += 1;
        }
        if b >= runs.len() || b == a + 1 || gap > short || runs[b].0 == (0, 0) {
            continue;
        }
        let (sa, sb) = (runs[a].0, runs[b].0);
        let (series, sign) = if sa.0 * sb.0 < 0 {
            (t1, sa.0)
        } else if sa.1 * sb.1 < 0 {
            (t2, sa.1)
        } else {
            continue;
        };
        let (lo, hi) = (runs[a].2, runs[b].1);
        let turn = (lo..=hi)
            .max_by(|&x, &y| {
                let (vx, vy) = (series[x] * sign as f64, series[y] * sign as f64);
                vx.partial_cmp(&vy).unwrap_or(std::cmp::Ordering::Equal).then(y.cmp(&x))
            })
            .unwrap_or(lo);
        spans[a].1 = turn;
        spans[b].0 = turn;
        keep[a + 1..b].iter_mut().for_each(|k| *k = false);
    }
    spans
        .into_iter()
        .zip(keep)
        .filter_map(|(span, k)| k.then_some(span))
        .collect()
}

/// Frame `k` of `n` gets `slerp(y_start, y_end, k / (n - 1))`.
pub fn slerp_pseudo_labels<T: Scalar>(
    traj: &Trajectory<T>,
    y_start: &GazeVector<T>,
    y_end: &GazeVector<T>,
) -> Result<Vec<(String, GazeVector<T>)>> {
    let n = traj.len();
    let denom = T::lit((n.max(2) - 1) as f64);
    traj.frames()
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let g = if k + 1 == n {
                *y_end
            } else {
                slerp(y_start, y_end, T::lit(k as f64) / denom)?
            };
            Ok((f.frame_id.clone(), g))
        })
        .collect()
}

/// Share of dataset frames whose labels a weak-supervision mode consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationBudget {
    pub labelled_frames: usize,
    pub total_frames: usize,
    pub fraction: f64,
}

/// Counts the distinct frames whose labels `mode` reads: start and end in
/// the two-label mode, start only in the one-label mode.
pub fn annotation_budget<T: Scalar>(
    sets: &[ThreeFrameSet<T>],
    mode: Mode,
    total_frames: usize,
) -> AnnotationBudget {
    let mut used: BTreeSet<&str> = BTreeSet::new();
    for s in sets {
        used.insert(&s.start.frame_id);
        if mode == Mode::TwoLabels {
            used.insert(&s.end.frame_id);
        }
    }
    AnnotationBudget {
        labelled_frames: used.len(),
        total_frames,
        fraction: if total_frames == 0 {
            0.0
        } else {
            used.len() as f64 / total_frames as f64
        },
    }
}

/// Simple orthographic face used to synthesize landmark streams.
///
/// Pupils sit `half_ipd` either side of the eye-line center, the nose tip
/// `nose_drop` pixels below it and `nose_depth` pixels in front of the eye
/// plane. Head yaw rotates the face about the vertical axis through the
/// eye-line center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticFace {
    pub center: [f64; 2],
    pub half_ipd: f64,
    pub nose_drop: f64,
    pub nose_depth: f64,
}

impl SyntheticFace {
    /// A face whose proportions match `WildConfig::nose_depth_ratio`.
    pub fn matching(cfg: &WildConfig) -> Self {
        SyntheticFace {
            center: [320.0, 200.0],
            half_ipd: 32.0,
            nose_drop: 32.0,
            nose_depth: cfg.nose_depth_ratio * 64.0,
        }
    }

    /// Landmarks with both pupils shifted horizontally by `pupil_shift` pixels
    /// (in face coordinates) under `head_yaw_deg`.
    pub fn landmarks<T: Scalar>(&self, pupil_shift: f64, head_yaw_deg: f64) -> Landmarks<T> {
        let (s, c) = head_yaw_deg.to_radians().sin_cos();
        let project = |x: f64, y: f64, z: f64| -> [T; 2] {
            [T::lit(self.center[0] + x * c + z * s), T::lit(self.center[1] + y)]
        };
        Landmarks {
            pupil_left: project(-self.half_ipd + pupil_shift, 0.0, 0.0),
            pupil_right: project(self.half_ipd + pupil_shift, 0.0, 0.0),
            nose_tip: project(0.0, self.nose_drop, self.nose_depth),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angular_error_deg;

    fn frame(id: &str, identity: &str, traj: &str, k: i64) -> FrameRecord<f64> {
        FrameRecord::new(id, identity, traj, k, vec![k as f64])
            .with_label(GazeVector::new(0.0, 0.0, -1.0).unwrap())
    }

    fn grid_frames(identities: usize, spec: &GridSpec) -> Vec<Arc<FrameRecord<f64>>> {
        let mut out = Vec::new();
        for i in 0..identities {
            for r in 0..spec.rows {
                for c in 0..spec.cols {
                    let mut f = frame(&format!("p{i}-{c}-{r}"), &format!("p{i}"), &format!("p{i}"), 0);
                    f.grid_cell = Some((c, r));
                    out.push(Arc::new(f));
                }
            }
        }
        out
    }

    /// Closed form: each interior cell of a maximal line yields one set.
    fn oracle_count(spec: &GridSpec) -> usize {
        let inner = |n: u32| n.saturating_sub(2) as usize;
        let (c, r) = (spec.cols as usize, spec.rows as usize);
        let mut n = 0;
        if spec.horizontal {
            n += r * inner(spec.cols);
        }
        if spec.vertical {
            n += c * inner(spec.rows);
        }
        let diag = inner(spec.cols) * inner(spec.rows);
        n += diag * (spec.diagonal as usize + spec.anti_diagonal as usize);
        if spec.bidirectional {
            n *= 2;
        }
        n
    }

    #[test]
    fn grid_examples() {
        let cave = GridSpec::cave();
        assert_eq!(mine_grid_sets(&grid_frames(1, &cave), &cave).unwrap().len(), 54);

        let row = GridSpec {
            cols: 3,
            rows: 1,
            horizontal: true,
            vertical: false,
            diagonal: false,
            anti_diagonal: false,
            bidirectional: false,
        };
        assert_eq!(mine_grid_sets(&grid_frames(1, &row), &row).unwrap().len(), 1);

        let tiny = GridSpec {
            cols: 2,
            rows: 2,
            anti_diagonal: true,
            ..GridSpec::cave()
        };
        assert_eq!(mine_grid_sets(&grid_frames(1, &tiny), &tiny).unwrap().len(), 0);
    }

    #[test]
    fn grid_count_matches_oracle_up_to_8x8() {
        for cols in 1..=8 {
            for rows in 1..=8 {
                for bits in 1u8..16 {
                    for bidirectional in [false, true] {
                        let spec = GridSpec {
                            cols,
                            rows,
                            horizontal: bits & 1 != 0,
                            vertical: bits & 2 != 0,
                            diagonal: bits & 4 != 0,
                            anti_diagonal: bits & 8 != 0,
                            bidirectional,
                        };
                        let sets = mine_grid_sets(&grid_frames(1, &spec), &spec).unwrap();
                        assert_eq!(sets.len(), oracle_count(&spec), "{spec:?}");
                        for s in &sets {
                            s.validate().unwrap();
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn grid_dwell_uses_middle_frame() {
        let spec = GridSpec {
            cols: 3,
            rows: 1,
            horizontal: true,
            vertical: false,
            diagonal: false,
            anti_diagonal: false,
            bidirectional: false,
        };
        let mut frames = Vec::new();
        for c in 0..3u32 {
            for k in 0..5 {
                let mut f = frame(&format!("c{c}k{k}"), "p", "video", (c * 10 + k) as i64);
                f.grid_cell = Some((c, 0));
                frames.push(Arc::new(f));
            }
        }
        let sets = mine_grid_sets(&frames, &spec).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].unlabelled.frame_id, "c1k2");
        assert_eq!(sets[0].start.frame_id, "c0k2");
    }

    #[test]
    fn ordered_examples() {
        for (n, expect) in [(5usize, 3usize), (3, 1), (100, 98), (2, 0)] {
            let frames = (0..n)
                .map(|k| Arc::new(frame(&format!("f{k}"), "p", "t", k as i64)))
                .collect();
            let t = Trajectory::new("t", frames).unwrap();
            let sets = mine_ordered_sets(&t).unwrap();
            assert_eq!(sets.len(), expect);
            for (i, s) in sets.iter().enumerate() {
                assert_eq!(s.start.frame_id, "f0");
                assert_eq!(s.end.frame_id, format!("f{}", n - 1));
                assert_eq!(s.unlabelled.frame_id, format!("f{}", i + 1));
            }
        }
    }

    #[test]
    fn sort_points_examples() {
        let mk = |id: &str, x: f64, y: f64| {
            let mut f = frame(id, "p", "day1", 0);
            f.target = Some([x, y]);
            Arc::new(f)
        };
        let t = sort_points_into_trajectory("s", &[mk("a", 3.0, 0.0), mk("b", 1.0, 0.0), mk("c", 2.0, 0.0)])
            .unwrap();
        let ids: Vec<_> = t.frames().iter().map(|f| f.frame_id.clone()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert_eq!(t.frames()[2].order_index, 2);

        let t = sort_points_into_trajectory("s", &[mk("a", 1.0, 1.0), mk("b", 1.0, 1.0)]).unwrap();
        assert_eq!(t.frames()[0].frame_id, "a");

        let t = sort_points_into_trajectory("s", &[mk("a", 1.0, 5.0), mk("b", 1.0, 2.0)]).unwrap();
        assert_eq!(t.frames()[0].frame_id, "b");
    }

    #[test]
    fn eye_angle_examples() {
        let lm = Landmarks {
            pupil_left: [-30.0, -40.0],
            pupil_right: [30.0, -40.0],
            nose_tip: [0.0, 0.0],
        };
        let a = compute_eye_angles(&lm).unwrap();
        assert_eq!(a.theta1, a.theta2);

        let up: Landmarks<f64> = Landmarks {
            pupil_left: [0.0, -10.0],
            pupil_right: [-10.0, -10.0],
            nose_tip: [0.0, 0.0],
        };
        let a = compute_eye_angles(&up).unwrap();
        assert_eq!(a.theta1, 0.0);
        assert!((a.theta2 - 45.0).abs() < 1e-12);

        let degenerate = Landmarks {
            pupil_left: [0.0, 0.0],
            ..up
        };
        assert!(matches!(compute_eye_angles(&degenerate), Err(Error::DegenerateLandmarks(_))));
    }

    #[test]
    fn yaw_estimate_is_exact_with_centered_pupils() {
        let cfg = WildConfig::default();
        let face = SyntheticFace::matching(&cfg);
        for yaw in [-30.0, -10.0, 0.0, 4.0, 25.0] {
            let lm = face.landmarks::<f64>(0.0, yaw);
            assert!((estimate_head_yaw_deg(&lm, 1.0).unwrap() - yaw).abs() < 1e-9);
        }
    }

    fn stream(shifts: &[f64], yaws: &[f64]) -> Vec<Arc<FrameRecord<f64>>> {
        let face = SyntheticFace::matching(&WildConfig::default());
        shifts
            .iter()
            .zip(yaws)
            .enumerate()
            .map(|(k, (&s, &y))| {
                let mut f = FrameRecord::new(format!("v-{k:03}"), "p", "v", k as i64, vec![]);
                f.landmarks = Some(face.landmarks(s, y));
                Arc::new(f)
            })
            .collect()
    }

    fn sweep(n: usize, from: f64, to: f64) -> Vec<f64> {
        (0..n).map(|k| from + (to - from) * k as f64 / (n - 1) as f64).collect()
    }

    fn spans(trajs: &[Trajectory<f64>]) -> Vec<(i64, i64)> {
        trajs
            .iter()
            .map(|t| {
                let fr = t.frames();
                let idx = |f: &Arc<FrameRecord<f64>>| f.frame_id[2..].parse::<i64>().unwrap();
                (idx(&fr[0]), idx(&fr[fr.len() - 1]))
            })
            .collect()
    }

    #[test]
    fn wild_examples() {
        let cfg = WildConfig::default();
        let shifts = sweep(20, -8.0, 8.0);
        let trajs = detect_wild_trajectories(&stream(&shifts, &[0.0; 20]), &cfg).unwrap();
        assert_eq!(spans(&trajs), [(0, 19)]);

        let mut there_and_back = sweep(11, -8.0, 8.0);
        there_and_back.extend(sweep(11, 8.0, -8.0).into_iter().skip(1));
        let trajs = detect_wild_trajectories(&stream(&there_and_back, &[0.0; 21]), &cfg).unwrap();
        assert_eq!(spans(&trajs), [(0, 10), (10, 20)]);

        let still = detect_wild_trajectories(&stream(&[1.0; 12], &[0.0; 12]), &cfg).unwrap();
        assert!(still.is_empty());

        let mut no_lm = (*stream(&[0.0], &[0.0])[0]).clone();
        no_lm.landmarks = None;
        assert!(detect_wild_trajectories(&[Arc::new(no_lm)], &cfg).is_err());
    }

    #[test]
    fn slerp_labels_are_uniform() {
        let frames: Vec<_> = (0..5)
            .map(|k| Arc::new(frame(&format!("f{k}"), "p", "t", k)))
            .collect();
        let t = Trajectory::new("t", frames).unwrap();
        let p = GazeVector::new(1.0, 0.0, 0.0).unwrap();
        let q = GazeVector::new(0.5, 3f64.sqrt() / 2.0, 0.0).unwrap();
        let labels = slerp_pseudo_labels(&t, &p, &q).unwrap();
        assert_eq!(labels[0].1, p);
        assert_eq!(labels[4].1, q);
        for w in labels.windows(2) {
            let gap = angular_error_deg(&w[0].1, &w[1].1).degrees();
            assert!((gap - 15.0).abs() < 1e-6, "{gap}");
        }

        let two = Trajectory::new("t", (0..2).map(|k| Arc::new(frame(&format!("f{k}"), "p", "t", k))).collect())
            .unwrap();
        let l = slerp_pseudo_labels(&two, &p, &q).unwrap();
        assert_eq!((l[0].1, l[1].1), (p, q));

        let r = GazeVector::new(-1.0, 0.0, 0.0).unwrap();
        assert!(matches!(slerp_pseudo_labels(&t, &p, &r), Err(Error::AmbiguousGeodesic)));
    }
}
