//! Command-line pipelines: `synth`, `mine`, `train`, `label`, `eval` and
//! `ablate`.
//!
//! Every command reads an optional TOML run configuration, applies its flag
//! overrides and writes the resolved configuration next to its outputs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    frame_to_row, group_trajectories, load_frames, read_labels, split_identity_disjoint, synth_generate,
    synth_grid_generate, write_feature_file, write_labels, write_manifest, FeatureRef,
    GridSynthConfig, LabelRecord, SynthConfig, ThreeFrameSet, Trajectory,
};
use crate::error::{Error, Result};
use crate::geometry::slerp;
use crate::losses::{LossWeights, SetLabels};
use crate::metrics::{ablation_csv, ablation_run, predict_middle, write_reports, EvalReport};
use crate::mining::{
    annotation_budget, detect_wild_trajectories, mine_grid_sets, mine_ordered_sets, slerp_pseudo_labels,
    sort_points_into_trajectory, AnnotationBudget, GridSpec, WildConfig,
};
use crate::model::{Mode, Model, ModelConfig, MotionKind};
use crate::par::par_map;
use crate::trainer::{train, validation_split, TrainConfig};
use crate::{Frame, Gaze, Real, Set};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    #[default]
    Trajectories,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Grid,
    #[default]
    Ordered,
    SortedPoints,
    Wild,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub layout: Layout,
    pub trajectories: SynthConfig,
    pub grid: GridSynthConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineSection {
    pub strategy: Strategy,
    pub grid: GridSpec,
    pub wild: WildConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub mode: Mode,
    pub latent_dim: usize,
    pub head_dims: [usize; 2],
    pub motion: MotionKind,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            mode: Mode::TwoLabels,
            latent_dim: 16,
            head_dims: [32, 16],
            motion: MotionKind::Signed,
            seed: 0,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, feature_dim: usize) -> ModelConfig {
        let mut c = ModelConfig::new(feature_dim, self.latent_dim, self.head_dims, self.mode);
        c.motion = self.motion;
        c.seed = self.seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Share of identities held out for testing.
    pub test_fraction: f64,
    /// Share of training identities held out for early stopping.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            test_fraction: 0.2,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    /// `[lambda1, lambda2, lambda3, lambda4]` per row.
    pub configs: Vec<[f64; 4]>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            configs: vec![
                [1.0, 0.0, 0.0, 0.0],
                [1.0, 1.0, 0.0, 0.0],
                [1.0, 1.0, 1.0, 0.0],
                [1.0, 1.0, 1.0, 1.0],
            ],
        }
    }
}

/// Parameters of every command. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthSection,
    pub mine: MineSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub split: SplitSection,
    pub ablate: AblateSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

// ---------------------------------------------------------------------------
// Arguments
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "gazelabel", version, about = "Weakly supervised gaze labelling")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for mining and evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: manifest, feature files, ground truth.
    Synth(SynthArgs),
    /// Mine 3-frame sets and report the annotation budget.
    Mine(MineArgs),
    /// Train a model on mined sets.
    Train(TrainArgs),
    /// Label the middle frames of sets with a model or SLERP.
    Label(LabelArgs),
    /// Compare label files (and optionally a model) with ground truth.
    Eval(EvalArgs),
    /// Train one model per loss-weight configuration.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub layout: Option<Layout>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub identities: Option<usize>,
    /// Frames per trajectory (trajectory layout) or per cell (grid layout).
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: Option<Strategy>,
    /// Replace the configured grid with a named layout.
    #[arg(long, value_parser = ["cave", "tablet"])]
    pub grid_preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Loss weights as `l1,l2,l3,l4`.
    #[arg(long, value_parser = parse_weights)]
    pub lambdas: Option<[f64; 4]>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub sets: PathBuf,
    /// Output directory for checkpoint, history, split and config.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sets whose middle frames are labelled; without it `--slerp` labels
    /// every trajectory's interior frames.
    #[arg(long)]
    pub sets: Option<PathBuf>,
    #[arg(long, conflicts_with = "slerp")]
    pub checkpoint: Option<PathBuf>,
    /// Interpolate between the terminal labels instead of running a model.
    #[arg(long)]
    pub slerp: bool,
    /// Restrict to the test identities recorded by `train`.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground truth as a label CSV or a manifest.
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Label files to score, as `name=path`.
    #[arg(long = "labels", value_parser = parse_named_path)]
    pub labels: Vec<(String, PathBuf)>,
    #[arg(long, requires_all = ["manifest", "sets"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub sets: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Report CSV; a text summary is written alongside.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub sets: PathBuf,
    /// Ground truth for the held-out middle frames, when the manifest lacks it.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Weight rows as `l1,l2,l3,l4;l1,l2,l3,l4;...`.
    #[arg(long, value_parser = parse_sweep)]
    pub sweep: Option<Vec<[f64; 4]>>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_weights(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 4 weights, got {}", v.len()))
}

fn parse_sweep(s: &str) -> std::result::Result<Vec<[f64; 4]>, String> {
    s.split(';').filter(|r| !r.trim().is_empty()).map(parse_weights).collect()
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

// ---------------------------------------------------------------------------
// Output bookkeeping
// ---------------------------------------------------------------------------

/// Files and directories a command created; removed unless committed.
struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            files: Vec::new(),
            dirs: Vec::new(),
            committed: false,
        }
    }

    fn file(&mut self, p: impl Into<PathBuf>) -> PathBuf {
        let p = p.into();
        self.files.push(p.clone());
        p
    }

    fn dir(&mut self, p: impl Into<PathBuf>) -> Result<PathBuf> {
        let p = p.into();
        if !p.exists() {
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
            self.dirs.push(p.clone());
        }
        Ok(p)
    }

    fn write(&mut self, p: impl Into<PathBuf>, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.file(p);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir_all(d);
        }
    }
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_config(out: &mut Outputs, dir: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    out.write(dir.join(format!("{command}.config.toml")), cfg.to_toml())
}

// ---------------------------------------------------------------------------
// Sets files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetFrameRef {
    pub frame_id: String,
    pub order_index: i64,
}

/// One mined set. Frames are referenced by id; trajectory and order refer to
/// the mined trajectory, which may differ from the manifest's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetRow {
    pub trajectory_id: String,
    pub start: SetFrameRef,
    pub unlabelled: SetFrameRef,
    pub end: SetFrameRef,
}

impl SetRow {
    pub fn from_set(s: &Set) -> Self {
        let r = |f: &Frame| SetFrameRef {
            frame_id: f.frame_id.clone(),
            order_index: f.order_index,
        };
        SetRow {
            trajectory_id: s.start.trajectory_id.clone(),
            start: r(&s.start),
            unlabelled: r(&s.unlabelled),
            end: r(&s.end),
        }
    }
}

pub fn write_sets(path: &Path, sets: &[Set]) -> Result<String> {
    let mut text = String::new();
    for s in sets {
        text.push_str(&serde_json::to_string(&SetRow::from_set(s)).expect("set rows serialize"));
        text.push('\n');
    }
    fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(text)
}

/// Rebuilds sets from a sets file against the manifest's frames.
pub fn load_sets(path: &Path, frames: &HashMap<String, Arc<Frame>>) -> Result<Vec<Set>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), i + 1);
        let row: SetRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            location: location.clone(),
            reason: e.to_string(),
        })?;
        let get = |r: &SetFrameRef| -> Result<Arc<Frame>> {
            let f = frames.get(&r.frame_id).ok_or_else(|| Error::Parse {
                location: location.clone(),
                reason: format!("frame {} is not in the manifest", r.frame_id),
            })?;
            if f.trajectory_id == row.trajectory_id && f.order_index == r.order_index {
                return Ok(f.clone());
            }
            let mut g = (**f).clone();
            g.trajectory_id = row.trajectory_id.clone();
            g.order_index = r.order_index;
            Ok(Arc::new(g))
        };
        out.push(ThreeFrameSet::new(get(&row.start)?, get(&row.unlabelled)?, get(&row.end)?)?);
    }
    Ok(out)
}

fn frame_index(frames: Vec<Frame>) -> HashMap<String, Arc<Frame>> {
    frames.into_iter().map(|f| (f.frame_id.clone(), Arc::new(f))).collect()
}

/// Drops labels the mode must not see: the middle frame's always, the end
/// frame's in one-label mode.
pub fn weaken(set: &Set, mode: Mode) -> Result<Set> {
    let strip = |f: &Arc<Frame>| {
        if f.label.is_some() {
            Arc::new(f.without_label())
        } else {
            f.clone()
        }
    };
    let end = match mode {
        Mode::TwoLabels => set.end.clone(),
        Mode::OneLabel => strip(&set.end),
    };
    let s = ThreeFrameSet::new(set.start.clone(), strip(&set.unlabelled), end)?;
    SetLabels::from_set(&s, mode)?;
    Ok(s)
}

/// Replaces each set's middle label with the ground truth for that frame.
pub fn attach_ground_truth(sets: &[Set], gt: &BTreeMap<String, Gaze>) -> Result<Vec<Set>> {
    sets.iter()
        .map(|s| {
            let g = gt.get(&s.unlabelled.frame_id).ok_or_else(|| {
                Error::MissingLabel(format!("ground truth for frame {}", s.unlabelled.frame_id))
            })?;
            let mid = Arc::new((*s.unlabelled).clone().with_label(*g));
            ThreeFrameSet::new(s.start.clone(), mid, s.end.clone())
        })
        .collect()
}

/// Ground truth from a label CSV, or from the labelled frames of a manifest.
pub fn load_ground_truth(path: &Path) -> Result<BTreeMap<String, Gaze>> {
    if path.extension().is_some_and(|e| e == "csv") {
        Ok(read_labels::<Real>(path)?
            .into_iter()
            .map(|r| (r.frame_id, r.gaze))
            .collect())
    } else {
        Ok(load_frames::<Real>(path)?
            .into_iter()
            .filter_map(|f| f.label.map(|g| (f.frame_id, g)))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRecord {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

fn identities(sets: &[Set]) -> Vec<String> {
    sets.iter()
        .map(|s| s.identity_id().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn read_split(path: &Path) -> Result<SplitRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn test_only(sets: Vec<Set>, split: Option<&Path>) -> Result<Vec<Set>> {
    let Some(p) = split else { return Ok(sets) };
    let keep: BTreeSet<String> = read_split(p)?.test.into_iter().collect();
    Ok(sets.into_iter().filter(|s| keep.contains(s.identity_id())).collect())
}

/// Train / validation / test partition of weakened sets.
pub struct Partition {
    pub train: Vec<Set>,
    pub validation: Vec<Set>,
    /// Held-out sets with whatever middle labels the input carried.
    pub test: Vec<Set>,
}

pub fn partition(sets: &[Set], mode: Mode, split: &SplitSection) -> Result<Partition> {
    let outer = split_identity_disjoint(sets, 1.0 - split.test_fraction, split.seed)?;
    let weak = outer.train.iter().map(|s| weaken(s, mode)).collect::<Result<Vec<_>>>()?;
    let inner = validation_split(&weak, split.val_fraction, split.seed)?;
    Ok(Partition {
        train: inner.train,
        validation: inner.test,
        test: outer.test,
    })
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub fn run(cli: Cli) -> Result<String> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Synth(a) => cmd_synth(cfg, &a),
        Command::Mine(a) => cmd_mine(cfg, &a, jobs),
        Command::Train(a) => cmd_train(cfg, &a),
        Command::Label(a) => cmd_label(cfg, &a, jobs),
        Command::Eval(a) => cmd_eval(cfg, &a, jobs),
        Command::Ablate(a) => cmd_ablate(cfg, &a),
    }
}

pub fn cmd_synth(mut cfg: RunConfig, a: &SynthArgs) -> Result<String> {
    let s = &mut cfg.synth;
    if let Some(l) = a.layout {
        s.layout = l;
    }
    if let Some(v) = a.seed {
        s.trajectories.seed = v;
        s.grid.seed = v;
    }
    if let Some(v) = a.identities {
        s.trajectories.n_identities = v;
        s.grid.n_identities = v;
    }
    if let Some(v) = a.frames {
        s.trajectories.frames_per_trajectory = v;
        s.grid.frames_per_cell = v;
    }
    if let Some(v) = a.feature_dim {
        s.trajectories.feature_dim = v;
        s.grid.feature_dim = v;
    }
    if let Some(v) = a.noise {
        s.trajectories.noise_sigma = v;
        s.grid.noise_sigma = v;
    }
    let (frames, terminal_only): (Vec<Frame>, bool) = match s.layout {
        Layout::Trajectories => {
            let ds = synth_generate::<Real>(&s.trajectories)?;
            let frames = ds
                .trajectories
                .into_iter()
                .flat_map(|t| t.frames().iter().map(|f| (**f).clone()).collect::<Vec<_>>())
                .collect();
            (frames, true)
        }
        Layout::Grid => (synth_grid_generate::<Real>(&s.grid)?, false),
    };

    let mut out = Outputs::new();
    let dir = out.dir(&a.out)?;
    let feat_dir = out.dir(dir.join("features"))?;
    let mut rows = Vec::with_capacity(frames.len());
    let mut truth = Vec::with_capacity(frames.len());
    let last: HashMap<&str, i64> = frames.iter().fold(HashMap::new(), |mut m, f| {
        let e = m.entry(f.trajectory_id.as_str()).or_insert(f.order_index);
        *e = (*e).max(f.order_index);
        m
    });
    for f in &frames {
        let name = format!("{}.f32", f.frame_id);
        let p = out.file(feat_dir.join(&name));
        write_feature_file(&p, &f.features)?;
        let keep = !terminal_only || f.order_index == 0 || f.order_index == last[f.trajectory_id.as_str()];
        let shown = if keep { f.clone() } else { f.without_label() };
        rows.push(frame_to_row(&shown, Some(FeatureRef::File(format!("features/{name}")))));
        if let Some(g) = f.label {
            truth.push(LabelRecord::new(f.frame_id.clone(), g, "ground-truth"));
        }
    }
    let manifest = out.file(dir.join("manifest.jsonl"));
    write_manifest(&manifest, &rows)?;
    let gt = out.file(dir.join("ground_truth.csv"));
    write_labels(&gt, &truth)?;
    write_config(&mut out, &dir, "synth", &cfg)?;
    out.commit();
    Ok(format!(
        "wrote {} frames to {} (ground truth in {})\n",
        frames.len(),
        manifest.display(),
        gt.display()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub strategy: Strategy,
    pub sets: usize,
    pub two_labels: AnnotationBudget,
    pub one_label: AnnotationBudget,
}

impl BudgetReport {
    pub fn new(strategy: Strategy, sets: &[Set], total_frames: usize) -> Self {
        BudgetReport {
            strategy,
            sets: sets.len(),
            two_labels: annotation_budget(sets, Mode::TwoLabels, total_frames),
            one_label: annotation_budget(sets, Mode::OneLabel, total_frames),
        }
    }

    pub fn summary(&self) -> String {
        let line = |name: &str, b: &AnnotationBudget| {
            format!(
                "{name:<10} {} of {} frames labelled ({:.2}%)\n",
                b.labelled_frames,
                b.total_frames,
                100.0 * b.fraction
            )
        };
        format!(
            "{} 3-frame sets\n{}{}",
            self.sets,
            line("2-labels", &self.two_labels),
            line("1-label", &self.one_label)
        )
    }
}

/// Mines sets from manifest frames; work is spread over identities or
/// trajectories and merged in input order.
pub fn mine_frames(frames: Vec<Frame>, section: &MineSection, jobs: usize) -> Result<Vec<Set>> {
    let arcs: Vec<Arc<Frame>> = frames.into_iter().map(Arc::new).collect();
    let group_by = |key: fn(&Frame) -> &str| -> Vec<Vec<Arc<Frame>>> {
        let mut order = Vec::new();
        let mut groups: HashMap<String, Vec<Arc<Frame>>> = HashMap::new();
        for f in &arcs {
            let k = key(f).to_string();
            if !groups.contains_key(&k) {
                order.push(k.clone());
            }
            groups.entry(k).or_default().push(f.clone());
        }
        order.into_iter().map(|k| groups.remove(&k).unwrap_or_default()).collect()
    };
    let nested: Vec<Vec<Set>> = match section.strategy {
        Strategy::Grid => {
            let by_id = group_by(|f| &f.identity_id);
            par_map(&by_id, jobs, |g| mine_grid_sets(g, &section.grid))?
        }
        Strategy::Ordered => {
            let trajs = group_trajectories(arcs.iter().map(|f| (**f).clone()).collect())?;
            par_map(&trajs, jobs, mine_ordered_sets)?
        }
        Strategy::SortedPoints => {
            let groups = group_by(|f| &f.trajectory_id);
            par_map(&groups, jobs, |g| {
                mine_ordered_sets(&sort_points_into_trajectory(&g[0].trajectory_id, g)?)
            })?
        }
        Strategy::Wild => {
            let groups = group_by(|f| &f.trajectory_id);
            par_map(&groups, jobs, |g| {
                let trajs: Vec<Trajectory<Real>> = detect_wild_trajectories(g, &section.wild)?;
                Ok(trajs
                    .iter()
                    .map(mine_ordered_sets)
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .flatten()
                    .collect())
            })?
        }
    };
    Ok(nested.into_iter().flatten().collect())
}

pub fn cmd_mine(mut cfg: RunConfig, a: &MineArgs, jobs: usize) -> Result<String> {
    if let Some(s) = a.strategy {
        cfg.mine.strategy = s;
    }
    match a.grid_preset.as_deref() {
        Some("cave") => cfg.mine.grid = GridSpec::cave(),
        Some("tablet") => cfg.mine.grid = GridSpec::tablet(),
        _ => {}
    }
    let frames = load_frames::<Real>(&a.manifest)?;
    let total = frames.len();
    let sets = mine_frames(frames, &cfg.mine, jobs)?;
    let report = BudgetReport::new(cfg.mine.strategy, &sets, total);

    let mut out = Outputs::new();
    let dir = parent_dir(&a.out);
    out.dir(&dir)?;
    let p = out.file(&a.out);
    write_sets(&p, &sets)?;
    out.write(
        dir.join("budget.json"),
        serde_json::to_string_pretty(&report).expect("budget serializes") + "\n",
    )?;
    write_config(&mut out, &dir, "mine", &cfg)?;
    out.commit();
    Ok(report.summary())
}

fn apply_train_overrides(cfg: &mut RunConfig, o: &TrainOverrides) {
    if let Some(m) = o.mode {
        cfg.model.mode = m;
    }
    if let Some(v) = o.epochs {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = o.lr {
        cfg.train.lr0 = v;
    }
    if let Some(v) = o.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = o.patience {
        cfg.train.patience = v;
    }
    if let Some(v) = o.seed {
        cfg.train.seed = v;
        cfg.model.seed = v;
        cfg.split.seed = v;
    }
    if let Some([l1, l2, l3, l4]) = o.lambdas {
        cfg.train.weights = LossWeights::new(l1, l2, l3, l4);
    }
    if let Some(v) = o.latent_dim {
        cfg.model.latent_dim = v;
    }
}

fn feature_dim(sets: &[Set]) -> Result<usize> {
    let s = sets
        .first()
        .ok_or_else(|| Error::EmptyDataset("the sets file holds no sets".into()))?;
    Ok(s.start.features.len())
}

pub fn cmd_train(mut cfg: RunConfig, a: &TrainArgs) -> Result<String> {
    apply_train_overrides(&mut cfg, &a.overrides);
    let frames = frame_index(load_frames::<Real>(&a.manifest)?);
    let sets = load_sets(&a.sets, &frames)?;
    let mode = cfg.model.mode;
    let part = partition(&sets, mode, &cfg.split)?;
    let model = Model::new(cfg.model.model_config(feature_dim(&sets)?))?;
    let (model, hist) = train(model, &part.train, &part.validation, &cfg.train)?;

    let mut out = Outputs::new();
    let dir = out.dir(&a.out)?;
    let ckpt = out.file(dir.join("model.ckpt"));
    model.save(&ckpt)?;
    let h = out.file(dir.join("history.csv"));
    hist.write_csv(&h)?;
    let split = SplitRecord {
        train: identities(&part.train),
        validation: identities(&part.validation),
        test: identities(&part.test),
    };
    out.write(
        dir.join("split.json"),
        serde_json::to_string_pretty(&split).expect("split serializes") + "\n",
    )?;
    write_config(&mut out, &dir, "train", &cfg)?;
    out.commit();
    Ok(format!(
        "{} mode: {} train / {} validation / {} test sets; {} epochs, best epoch {:?}, validation MAE {:.4}\ncheckpoint {}\n",
        mode.tag(),
        part.train.len(),
        part.validation.len(),
        part.test.len(),
        hist.epochs.len(),
        hist.best_epoch,
        hist.best_val_mae().unwrap_or(f64::NAN),
        ckpt.display()
    ))
}

/// SLERP labels for each set's middle frame, placed by order index between
/// the set's terminal labels.
pub fn slerp_set_labels(sets: &[Set]) -> Result<Vec<(String, Gaze)>> {
    sets.iter()
        .map(|s| {
            let need = |f: &Frame| {
                f.label.ok_or_else(|| {
                    Error::MissingLabel(format!("SLERP needs a label on terminal frame {}", f.frame_id))
                })
            };
            let (p, q) = (need(&s.start)?, need(&s.end)?);
            let t = (s.unlabelled.order_index - s.start.order_index) as f64
                / (s.end.order_index - s.start.order_index) as f64;
            Ok((s.unlabelled.frame_id.clone(), slerp(&p, &q, t)?))
        })
        .collect()
}

/// SLERP labels for the interior frames of every trajectory.
pub fn slerp_trajectory_labels(trajs: &[Trajectory<Real>]) -> Result<Vec<(String, Gaze)>> {
    let mut out = Vec::new();
    for t in trajs {
        let fr = t.frames();
        let (first, last) = (&fr[0], &fr[fr.len() - 1]);
        let (Some(p), Some(q)) = (first.label, last.label) else {
            return Err(Error::MissingLabel(format!(
                "trajectory {} needs labels on both terminal frames",
                t.trajectory_id
            )));
        };
        let labels = slerp_pseudo_labels(t, &p, &q)?;
        out.extend(labels.into_iter().skip(1).take(fr.len().saturating_sub(2)));
    }
    Ok(out)
}

fn dedup_first(labels: Vec<(String, Gaze)>) -> Vec<(String, Gaze)> {
    let mut seen = BTreeSet::new();
    labels.into_iter().filter(|(id, _)| seen.insert(id.clone())).collect()
}

fn model_labels(ckpt: &Path, sets: &[Set], jobs: usize) -> Result<Vec<(String, Gaze)>> {
    let model = Model::<Real>::load(ckpt)?;
    let preds = predict_middle(&model, sets, jobs)?;
    Ok(sets
        .iter()
        .zip(preds)
        .map(|(s, g)| (s.unlabelled.frame_id.clone(), g))
        .collect())
}

pub fn cmd_label(cfg: RunConfig, a: &LabelArgs, jobs: usize) -> Result<String> {
    let frames = load_frames::<Real>(&a.manifest)?;
    let (labels, source) = if a.slerp {
        let labels = match &a.sets {
            Some(p) => slerp_set_labels(&test_only(load_sets(p, &frame_index(frames))?, a.split.as_deref())?)?,
            None => {
                let mut trajs = group_trajectories(frames)?;
                if let Some(sp) = &a.split {
                    let keep: BTreeSet<String> = read_split(sp)?.test.into_iter().collect();
                    trajs.retain(|t| keep.contains(&t.identity_id));
                }
                slerp_trajectory_labels(&trajs)?
            }
        };
        (labels, "slerp")
    } else {
        let ckpt = a
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("label needs --checkpoint or --slerp".into()))?;
        let sets_path = a
            .sets
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("model labelling needs --sets".into()))?;
        let sets = test_only(load_sets(sets_path, &frame_index(frames))?, a.split.as_deref())?;
        (model_labels(ckpt, &sets, jobs)?, "model")
    };
    let labels = dedup_first(labels);
    let records: Vec<LabelRecord<Real>> = labels
        .into_iter()
        .map(|(id, g)| LabelRecord::new(id, g, source))
        .collect();

    let mut out = Outputs::new();
    let dir = parent_dir(&a.out);
    out.dir(&dir)?;
    let p = out.file(&a.out);
    write_labels(&p, &records)?;
    write_config(&mut out, &dir, "label", &cfg)?;
    out.commit();
    Ok(format!("wrote {} {source} labels to {}\n", records.len(), p.display()))
}

/// Scores every named label source on the frames they all share with the
/// ground truth.
pub fn compare_sources(
    sources: &[(String, Vec<(String, Gaze)>)],
    gt: &BTreeMap<String, Gaze>,
) -> Result<Vec<(String, EvalReport)>> {
    let maps: Vec<BTreeMap<&str, &Gaze>> = sources
        .iter()
        .map(|(_, v)| v.iter().map(|(id, g)| (id.as_str(), g)).collect())
        .collect();
    let common: Vec<&str> = gt
        .keys()
        .map(String::as_str)
        .filter(|id| maps.iter().all(|m| m.contains_key(id)))
        .collect();
    if common.is_empty() {
        return Err(Error::EmptyInput(
            "no frame is covered by every label source and the ground truth".into(),
        ));
    }
    let truth: Vec<Gaze> = common.iter().map(|id| gt[*id]).collect();
    sources
        .iter()
        .zip(&maps)
        .map(|((name, _), m)| {
            let preds: Vec<Gaze> = common.iter().map(|id| *m[id]).collect();
            Ok((name.clone(), EvalReport::from_pairs(&preds, &truth)?))
        })
        .collect()
}

pub fn cmd_eval(cfg: RunConfig, a: &EvalArgs, jobs: usize) -> Result<String> {
    let gt = load_ground_truth(&a.ground_truth)?;
    let mut sources: Vec<(String, Vec<(String, Gaze)>)> = Vec::new();
    if let (Some(ckpt), Some(m), Some(s)) = (&a.checkpoint, &a.manifest, &a.sets) {
        let sets = test_only(load_sets(s, &frame_index(load_frames::<Real>(m)?))?, a.split.as_deref())?;
        sources.push(("model".into(), dedup_first(model_labels(ckpt, &sets, jobs)?)));
    }
    for (name, p) in &a.labels {
        let recs = read_labels::<Real>(p)?;
        sources.push((name.clone(), recs.into_iter().map(|r| (r.frame_id, r.gaze)).collect()));
    }
    if sources.is_empty() {
        return Err(Error::InvalidConfig("eval needs --labels or --checkpoint".into()));
    }
    let reports = compare_sources(&sources, &gt)?;

    let mut out = Outputs::new();
    let dir = parent_dir(&a.out);
    out.dir(&dir)?;
    let p = out.file(&a.out);
    let text = write_reports(&p, &reports)?;
    out.write(p.with_extension("txt"), &text)?;
    write_config(&mut out, &dir, "eval", &cfg)?;
    out.commit();
    Ok(text)
}

pub fn cmd_ablate(mut cfg: RunConfig, a: &AblateArgs) -> Result<String> {
    apply_train_overrides(&mut cfg, &a.overrides);
    if let Some(s) = &a.sweep {
        cfg.ablate.configs = s.clone();
    }
    let frames = frame_index(load_frames::<Real>(&a.manifest)?);
    let sets = load_sets(&a.sets, &frames)?;
    let part = partition(&sets, cfg.model.mode, &cfg.split)?;
    let test = match &a.ground_truth {
        Some(p) => attach_ground_truth(&part.test, &load_ground_truth(p)?)?,
        None => part.test,
    };
    let weights: Vec<LossWeights> = cfg
        .ablate
        .configs
        .iter()
        .map(|&[a, b, c, d]| LossWeights::new(a, b, c, d))
        .collect();
    let rows = ablation_run(
        &cfg.model.model_config(feature_dim(&sets)?),
        &part.train,
        &part.validation,
        &test,
        &weights,
        &cfg.train,
    )?;
    let csv = ablation_csv(&rows);

    let mut out = Outputs::new();
    let dir = out.dir(&a.out)?;
    out.write(dir.join("ablation.csv"), &csv)?;
    write_config(&mut out, &dir, "ablate", &cfg)?;
    out.commit();
    Ok(csv)
}
