//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless so a failing criterion is reported rather than hidden
//! behind a panic; set `ACCEPTANCE_STRICT=1` to exit 1 on any FAIL.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::Parser;
use gazelabel::cli::{run, slerp_set_labels, Cli};
use gazelabel::datamodel::{synth_grid_generate, FrameRecord, GridSynthConfig, SynthConfig};
use gazelabel::geometry::{angular_error_deg, slerp, GazeVector};
use gazelabel::losses::{gradients, total_loss, LossOptions, LossWeights, SetLabels};
use gazelabel::metrics::angular_metric;
use gazelabel::mining::{
    annotation_budget, detect_wild_trajectories, estimate_head_yaw_deg, mine_grid_sets, GridSpec,
    SyntheticFace, WildConfig,
};
use gazelabel::model::{Mode, Model, ModelConfig};
use gazelabel::trainer::TrainConfig;
use gazelabel::{Frame, Gaze, Set};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{end_to_end_train_config, weak_identity_config, Task};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed < Duration::from_secs(secs)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Gaze {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = v.iter().map(|x| x * x).sum::<f64>();
        if n > 1e-3 && n <= 1.0 {
            return GazeVector::new(v[0], v[1], v[2]).unwrap();
        }
    }
}

fn geometry() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_add = 0.0f64;
    let mut worst_norm = 0.0f64;
    let mut endpoints = true;
    let mut pairs = 0;
    while pairs < 10_000 {
        let (p, q) = (random_unit(&mut rng), random_unit(&mut rng));
        if p.dot(&q) < -0.999 {
            continue;
        }
        pairs += 1;
        endpoints &= slerp(&p, &q, 0.0).unwrap() == p && slerp(&p, &q, 1.0).unwrap() == q;
        let t = rng.random_range(0.0..1.0);
        let m = slerp(&p, &q, t).unwrap();
        let whole = angular_error_deg(&p, &q).degrees();
        let parts = angular_error_deg(&p, &m).degrees() + angular_error_deg(&m, &q).degrees();
        worst_add = worst_add.max((whole - parts).abs().to_radians());
        let n = m.to_array().iter().map(|x| x * x).sum::<f64>().sqrt();
        worst_norm = worst_norm.max((n - 1.0).abs());
    }
    let g = |x, y, z| GazeVector::new(x, y, z).unwrap();
    let canon = [
        (g(0.0, 0.0, -1.0), g(0.0, 0.0, -1.0), 0.0),
        (g(1.0, 0.0, 0.0), g(0.0, 1.0, 0.0), 90.0),
        (g(0.0, 0.0, -1.0), g(0.0, 0.0, 1.0), 180.0),
        (g(0.0, 1.0, 0.0), g(0.0, -1.0, 0.0), 180.0),
    ];
    let canonical = canon.iter().all(|(a, b, d)| angular_error_deg(a, b).degrees() == *d);
    let el = t0.elapsed();
    let pass = endpoints && canonical && worst_add < 1e-6 && worst_norm < 1e-6 && within(el, 1);
    outcome(
        pass,
        format!(
            "{pairs} pairs, endpoints exact {endpoints}, additivity {worst_add:.1e} rad, unit norm {worst_norm:.1e}, canonical exact {canonical}, {:.2}s",
            el.as_secs_f64()
        ),
    )
}

fn grid_frames(identities: usize, cols: u32, rows: u32) -> Vec<Arc<Frame>> {
    let mut out = Vec::new();
    for i in 0..identities {
        for r in 0..rows {
            for c in 0..cols {
                let mut f = FrameRecord::new(format!("p{i}-{c}-{r}"), format!("p{i}"), format!("p{i}"), 0, vec![0.0])
                    .with_label(GazeVector::new(0.0, 0.0, -1.0).unwrap());
                f.grid_cell = Some((c, r));
                out.push(Arc::new(f));
            }
        }
    }
    out
}

type Cell = (i64, i64);

/// Every (first, middle, last) cell triple: first and last are the two ends
/// of a maximal straight run along an enabled direction, at least two steps
/// apart, and middle lies strictly between them.
fn brute_force_triples(spec: &GridSpec) -> BTreeMap<(Cell, Cell, Cell), usize> {
    let inside = |c: Cell| c.0 >= 0 && c.1 >= 0 && c.0 < spec.cols as i64 && c.1 < spec.rows as i64;
    let mut dirs = Vec::new();
    for (on, d) in [
        (spec.horizontal, (1, 0)),
        (spec.vertical, (0, 1)),
        (spec.diagonal, (1, 1)),
        (spec.anti_diagonal, (-1, 1)),
    ] {
        if on {
            dirs.push(d);
        }
    }
    let cells: Vec<Cell> = (0..spec.rows as i64)
        .flat_map(|r| (0..spec.cols as i64).map(move |c| (c, r)))
        .collect();
    let mut out = BTreeMap::new();
    for &a in &cells {
        for &b in &cells {
            for &(dc, dr) in &dirs {
                let (sc, sr) = (b.0 - a.0, b.1 - a.1);
                // b = a + k * dir for some k >= 2
                let k = if dc != 0 { sc / dc } else { sr / dr };
                if k < 2 || (sc, sr) != (k * dc, k * dr) {
                    continue;
                }
                if inside((a.0 - dc, a.1 - dr)) || inside((b.0 + dc, b.1 + dr)) {
                    continue;
                }
                for j in 1..k {
                    let m = (a.0 + j * dc, a.1 + j * dr);
                    *out.entry((a, m, b)).or_insert(0) += 1;
                    if spec.bidirectional {
                        *out.entry((b, m, a)).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    out
}

fn cell_of(f: &Frame) -> Cell {
    let c = f.grid_cell.unwrap();
    (c.0 as i64, c.1 as i64)
}

fn grid_mining() -> Outcome {
    let t0 = Instant::now();
    let cave = GridSpec::cave();
    let sets = mine_grid_sets(&grid_frames(56, 7, 3), &cave).unwrap();
    let mut per_identity: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &sets {
        *per_identity.entry(s.identity_id()).or_default() += 1;
    }
    let counts: BTreeSet<usize> = per_identity.values().copied().collect();
    let cave_ok = sets.len() == 3024 && per_identity.len() == 56 && counts == BTreeSet::from([54]);

    let mut checked = 0;
    let mut mismatches = Vec::new();
    for cols in 1..=8u32 {
        for rows in 1..=8u32 {
            let frames = grid_frames(1, cols, rows);
            for bits in 0u8..16 {
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
                    checked += 1;
                    let mined = mine_grid_sets(&frames, &spec);
                    if bits == 0 {
                        if mined.is_ok() {
                            mismatches.push(format!("{spec:?} accepted with no direction"));
                        }
                        continue;
                    }
                    let mut got = BTreeMap::new();
                    for s in mined.unwrap() {
                        *got.entry((cell_of(&s.start), cell_of(&s.unlabelled), cell_of(&s.end))).or_insert(0) += 1;
                    }
                    if got != brute_force_triples(&spec) {
                        mismatches.push(format!("{spec:?}"));
                    }
                }
            }
        }
    }
    let el = t0.elapsed();
    let pass = cave_ok && mismatches.is_empty() && within(el, 10);
    outcome(
        pass,
        format!(
            "7x3 grid x 56 identities: {} sets, per identity {counts:?}; {checked} grid specs vs brute force, {} mismatches{}; {:.2}s",
            sets.len(),
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first {m})")).unwrap_or_default(),
            el.as_secs_f64()
        ),
    )
}

fn budget() -> Outcome {
    let cfg = GridSynthConfig::default();
    let frames: Vec<Arc<Frame>> = synth_grid_generate::<f64>(&cfg).unwrap().into_iter().map(Arc::new).collect();
    let sets = mine_grid_sets(&frames, &GridSpec::cave()).unwrap();
    let two = annotation_budget(&sets, Mode::TwoLabels, frames.len());
    let one = annotation_budget(&sets, Mode::OneLabel, frames.len());
    let (p2, p1) = (100.0 * two.fraction, 100.0 * one.fraction);
    let pass = (p2 - 6.56).abs() <= 0.1 && (p1 - 3.28).abs() <= 0.1;
    outcome(
        pass,
        format!(
            "{} sets over {} frames; two-label {}/{} = {p2:.2}% (target 6.56), one-label {}/{} = {p1:.2}% (target 3.28)",
            sets.len(),
            frames.len(),
            two.labelled_frames,
            two.total_frames,
            one.labelled_frames,
            one.total_frames
        ),
    )
}

fn gradcheck_case(seed: u64, mode: Mode) -> (Model<f64>, Set) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = rng.random_range(2..=8);
    let d = rng.random_range(2..=16);
    let heads = [rng.random_range(2..=8), rng.random_range(2..=8)];
    let mut cfg = ModelConfig::new(f, d, heads, mode);
    cfg.seed = seed;
    let model = Model::new(cfg).unwrap();
    let mut frame = |k: i64| {
        let x: Vec<f64> = (0..f).map(|_| rng.random_range(-1.5..1.5)).collect();
        let g = random_unit(&mut rng);
        Arc::new(FrameRecord::new(format!("f{k}"), "id", "t", k, x).with_label(g))
    };
    let (s, u, e) = (frame(0), frame(1), frame(2));
    (model, common::set3(s, u, e))
}

fn finite_difference(model: &Model<f64>, set: &Set, w: &LossWeights, o: &LossOptions) -> Vec<f64> {
    let h = 1e-5;
    let labels = SetLabels::from_set(set, model.mode()).unwrap();
    let base = model.params();
    let mut m = model.clone();
    let mut loss = |p: &[f64]| {
        m.set_params(p).unwrap();
        total_loss(model.mode(), &m.forward(set).unwrap(), &labels, w, o).unwrap().total
    };
    let mut p = base.clone();
    (0..base.len())
        .map(|i| {
            p[i] = base[i] + h;
            let up = loss(&p);
            p[i] = base[i] - h;
            let down = loss(&p);
            p[i] = base[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a) + norm(b);
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn gradient_checks() -> Outcome {
    let t0 = Instant::now();
    let terms: [(&str, Mode, LossWeights); 6] = [
        ("regression", Mode::TwoLabels, LossWeights::new(1.0, 0.0, 0.0, 0.0)),
        ("consistency", Mode::TwoLabels, LossWeights::new(0.0, 1.0, 0.0, 0.0)),
        ("consistency-1L", Mode::OneLabel, LossWeights::new(0.0, 1.0, 0.0, 0.0)),
        ("divergence", Mode::OneLabel, LossWeights::new(0.0, 0.0, 1.0, 0.0)),
        ("embedding", Mode::OneLabel, LossWeights::new(0.0, 0.0, 0.0, 1.0)),
        ("total-2L", Mode::TwoLabels, LossWeights::new(0.7, 1.3, 0.0, 0.0)),
    ];
    let total_1l = ("total-1L", Mode::OneLabel, LossWeights::new(0.7, 1.3, 0.4, 0.9));
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut configs = 0;
    for seed in 0..120u64 {
        for &(name, mode, w) in terms.iter().chain([&total_1l]) {
            let opts = LossOptions {
                divergence_on_ground_truth: seed % 2 == 1,
                root_embedding: seed % 3 == 2,
            };
            let (model, set) = gradcheck_case(1000 + seed, mode);
            let (_, analytic) = gradients(&model, &set, &w, &opts).unwrap();
            let numeric = finite_difference(&model, &set, &w, &opts);
            let e = relative_error(&analytic.flatten(), &numeric);
            let slot = worst.entry(name).or_insert(0.0);
            *slot = slot.max(e);
            configs += 1;
        }
    }
    let el = t0.elapsed();
    let max = worst.values().copied().fold(0.0, f64::max);
    let pass = max < 1e-4 && within(el, 60);
    let per: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    outcome(
        pass,
        format!("{configs} configurations, worst relative error {max:.1e} [{}]; {:.2}s", per.join(", "), el.as_secs_f64()),
    )
}

fn end_to_end() -> Outcome {
    let t0 = Instant::now();
    let task = Task::new(&weak_identity_config(1));
    let oracle = task.oracle().report(&task.test);
    let (_, hist, report) = task.fit(Mode::TwoLabels, LossWeights::default(), &end_to_end_train_config(1));
    let el = t0.elapsed();
    let pass = report.mae <= 2.0 * oracle.mae && report.angular_error_deg < 3.0 && within(el, 300);
    outcome(
        pass,
        format!(
            "test MAE {:.4} vs least-squares oracle {:.4} (ratio {:.2}, limit 2), angular {:.2} deg (limit 3), {} epochs; {:.1}s",
            report.mae,
            oracle.mae,
            report.mae / oracle.mae,
            report.angular_error_deg,
            hist.epochs.len(),
            el.as_secs_f64()
        ),
    )
}

fn mae(task: &Task, mode: Mode, w: [f64; 4], cfg: &TrainConfig) -> f64 {
    task.fit(mode, LossWeights::new(w[0], w[1], w[2], w[3]), cfg).2.mae
}

struct SeedRuns {
    seed: u64,
    two_reg: f64,
    two_cons: f64,
    one_reg: f64,
    one_cons: f64,
    one_div: f64,
    two_all: f64,
    one_all: f64,
}

fn seed_runs(seed: u64) -> SeedRuns {
    let task = Task::new(&weak_identity_config(seed));
    let cfg = end_to_end_train_config(seed);
    SeedRuns {
        seed,
        two_reg: mae(&task, Mode::TwoLabels, [1.0, 0.0, 0.0, 0.0], &cfg),
        two_cons: mae(&task, Mode::TwoLabels, [1.0, 1.0, 0.0, 0.0], &cfg),
        one_reg: mae(&task, Mode::OneLabel, [1.0, 0.0, 0.0, 0.0], &cfg),
        one_cons: mae(&task, Mode::OneLabel, [1.0, 1.0, 0.0, 0.0], &cfg),
        one_div: mae(&task, Mode::OneLabel, [1.0, 1.0, 1.0, 0.0], &cfg),
        two_all: mae(&task, Mode::TwoLabels, [1.0; 4], &cfg),
        one_all: mae(&task, Mode::OneLabel, [1.0; 4], &cfg),
    }
}

fn ablation_direction(runs: &[SeedRuns]) -> Outcome {
    let mut passed = 0;
    let mut lines = Vec::new();
    for r in runs {
        let ok2 = r.two_reg > r.two_cons;
        let ok1 = r.one_reg > r.one_cons;
        let okd = r.one_div <= 1.05 * r.one_cons;
        if ok2 && ok1 && okd {
            passed += 1;
        }
        lines.push(format!(
            "seed {}: 2L reg {:.4} vs reg+cons {:.4} [{}], 1L reg {:.4} vs reg+cons {:.4} [{}], +div {:.4} [{}]",
            r.seed,
            r.two_reg,
            r.two_cons,
            ok2,
            r.one_reg,
            r.one_cons,
            ok1,
            r.one_div,
            okd
        ));
    }
    outcome(passed * 2 > runs.len(), format!("{passed}/{} seeds satisfy; {}", runs.len(), lines.join("; ")))
}

fn mode_ordering(runs: &[SeedRuns]) -> Outcome {
    let wins = runs.iter().filter(|r| r.two_all <= r.one_all).count();
    let detail: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {}: 2L {:.4} vs 1L {:.4}", r.seed, r.two_all, r.one_all))
        .collect();
    outcome(wins >= 2, format!("2L <= 1L in {wins}/{} seeds; {}", runs.len(), detail.join("; ")))
}

fn slerp_baseline() -> Outcome {
    let cfg = SynthConfig {
        noise_sigma: 0.0,
        seed: 1,
        ..SynthConfig::default()
    };
    let task = Task::new(&cfg);
    let (model, _, _) = task.fit(Mode::TwoLabels, LossWeights::default(), &end_to_end_train_config(1));
    let gts: Vec<Gaze> = task.test.iter().map(|s| s.unlabelled.label.unwrap()).collect();
    let preds: Vec<Gaze> = task.test.iter().map(|s| model.predict_label(s).unwrap()).collect();
    let slerp: Vec<Gaze> = slerp_set_labels(&task.test).unwrap().into_iter().map(|(_, g)| g).collect();
    let m = angular_metric(&preds, &gts).unwrap();
    let s = angular_metric(&slerp, &gts).unwrap();
    outcome(
        m - s <= 2.0,
        format!("{} test middle frames: model {m:.3} deg, SLERP {s:.3} deg, gap {:.3} (limit 2)", gts.len(), m - s),
    )
}

fn landmark_stream(shifts: &[f64], yaws: &[f64]) -> Vec<Arc<Frame>> {
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

fn source_index(f: &Frame) -> i64 {
    f.frame_id[2..].parse().unwrap()
}

fn wild_detector() -> Outcome {
    let cfg = WildConfig::default();
    let face = SyntheticFace::matching(&cfg);
    let detect = |shifts: &[f64], yaws: &[f64]| {
        detect_wild_trajectories(&landmark_stream(shifts, yaws), &cfg).unwrap()
    };
    let spans = |trajs: &[gazelabel::datamodel::Trajectory<f64>]| -> Vec<(i64, i64)> {
        trajs
            .iter()
            .map(|t| (source_index(&t.frames()[0]), source_index(t.frames().last().unwrap())))
            .collect()
    };

    let monotone = spans(&detect(&sweep(20, -8.0, 8.0), &[0.0; 20]));

    let mut back = sweep(11, -8.0, 8.0);
    back.extend(sweep(11, 8.0, -8.0).into_iter().skip(1));
    let reversal = spans(&detect(&back, &[0.0; 21]));

    let fixation = spans(&detect(&[1.0; 12], &[0.0; 12]));

    // A pupil shift of s pixels moves the estimated yaw to
    // atan(tan(yaw) - s / ipd); pick yaws that estimate to exactly +-10.5.
    let ipd = 2.0 * face.half_ipd;
    let shifts = sweep(30, -8.0, 8.0);
    let yaws: Vec<f64> = shifts
        .iter()
        .enumerate()
        .map(|(k, s)| match k {
            12 | 13 => (10.5f64.to_radians().tan() + s / ipd).atan().to_degrees(),
            14 | 15 => ((-10.5f64).to_radians().tan() + s / ipd).atan().to_degrees(),
            _ => 0.0,
        })
        .collect();
    let stream = landmark_stream(&shifts, &yaws);
    let trajs = detect_wild_trajectories(&stream, &cfg).unwrap();
    let gated = spans(&trajs);
    let kept_yaw = trajs
        .iter()
        .flat_map(|t| t.frames().iter())
        .map(|f| estimate_head_yaw_deg(f.landmarks.as_ref().unwrap(), cfg.nose_depth_ratio).unwrap().abs())
        .fold(0.0, f64::max);
    let excluded: BTreeSet<i64> = (12..=15).collect();
    let leaked = trajs.iter().flat_map(|t| t.frames().iter()).any(|f| excluded.contains(&source_index(f)));

    let pass = monotone == [(0, 19)]
        && reversal == [(0, 10), (10, 20)]
        && fixation.is_empty()
        && gated == [(0, 11), (16, 29)]
        && !leaked
        && kept_yaw <= cfg.max_head_yaw_deg;
    outcome(
        pass,
        format!(
            "monotone {monotone:?}, reversal {reversal:?}, fixation {fixation:?}, head yaw {gated:?} (gated frames leaked {leaked}, max kept yaw {kept_yaw:.2} deg)"
        ),
    )
}

fn cli(args: &[&str]) {
    let argv = std::iter::once("gazelabel").chain(args.iter().copied());
    run(Cli::try_parse_from(argv).unwrap()).unwrap();
}

fn pipeline(root: &Path) {
    let p = |rel: &str| root.join(rel).to_string_lossy().into_owned();
    let (manifest, sets, ckpt, split) = (p("data/manifest.jsonl"), p("mined/sets.jsonl"), p("run/model.ckpt"), p("run/split.json"));
    cli(&["synth", "--out", &p("data"), "--seed", "5", "--identities", "8", "--frames", "7"]);
    cli(&["mine", "--manifest", &manifest, "--out", &sets]);
    cli(&["train", "--manifest", &manifest, "--sets", &sets, "--out", &p("run"), "--epochs", "40", "--seed", "5"]);
    cli(&["label", "--manifest", &manifest, "--sets", &sets, "--checkpoint", &ckpt, "--split", &split, "--out", &p("model/labels.csv")]);
    cli(&["label", "--manifest", &manifest, "--sets", &sets, "--slerp", "--split", &split, "--out", &p("slerp/labels.csv")]);
    let model_labels = format!("model={}", p("model/labels.csv"));
    let slerp_labels = format!("slerp={}", p("slerp/labels.csv"));
    cli(&[
        "eval",
        "--ground-truth",
        &p("data/ground_truth.csv"),
        "--labels",
        &model_labels,
        "--labels",
        &slerp_labels,
        "--out",
        &p("eval/report.csv"),
    ]);
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<&String> = ta.keys().filter(|k| ta.get(*k) != tb.get(*k)).collect();
    let same_names = ta.keys().eq(tb.keys());
    let pass = same_names && differing.is_empty() && ta.len() > 10;
    outcome(
        pass,
        format!("{} files per run, same file set {same_names}, differing {differing:?}", ta.len()),
    )
}

fn main() -> ExitCode {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };

    report(1, geometry());
    report(2, grid_mining());
    report(3, budget());
    report(4, gradient_checks());
    report(5, end_to_end());
    let runs: Vec<SeedRuns> = std::thread::scope(|s| {
        let handles: Vec<_> = (1..=3).map(|seed| s.spawn(move || seed_runs(seed))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    report(6, ablation_direction(&runs));
    report(7, mode_ordering(&runs));
    report(8, slerp_baseline());
    report(9, wild_detector());
    report(10, determinism());

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {}/{} passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!(", failed {failed:?}") }
    );
    if strict && !failed.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
