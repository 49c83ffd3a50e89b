//! Experiment manifests, presets, on-disk run artifacts and their analysis.
//!
//! Manifest (TOML):
//!
//! ```toml
//! format_version = 1
//! output_dir = "runs/fig4"
//!
//! # Optional extra worlds; "empty", "simple" and "complex" always exist.
//! [worlds.narrow]
//! file = "worlds/narrow.toml"
//!
//! [[runs]]
//! name = "asddpg-2x100"
//! world = "empty"
//! seeds = [0, 1, 2, 3]
//! [runs.config]          # any TrainConfig field; omitted ones use defaults
//! algorithm = "asddpg"
//! trunk = "2x100"
//! max_steps = 150000
//! ```
//!
//! Each `(run, seed)` pair writes `<output_dir>/<name>/seed-<seed>/` with
//! `meta.json`, `curve.csv`, `evals.csv`, `usage.csv`, `trajectories.csv`,
//! `summary.json`, `world.toml` and `checkpoint.txt`. `<output_dir>/index.json`
//! lists every pair with its status.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::PGains;
use crate::error::{Error, Result};
use crate::networks::{config_fingerprint, NetworkBundle, SwitchChoice, TrunkPreset};
use crate::trainer::{
    eval_seeds, evaluate, train_with, Algorithm, EpisodeRecord, EvalRecord, EvalResult, RunArtifacts, RunSummary,
    TrainConfig, TrajectoryRow,
};
use crate::world::{RewardKind, Terminal, WorldSpec};

pub const MANIFEST_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: u32 = 1;

/// Overrides the manifest's `output_dir` when set.
pub const OUTPUT_ROOT_ENV: &str = "ASDDPG_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorldEntry {
    File { file: PathBuf },
    Inline(WorldSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub name: String,
    pub world: String,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub format_version: u32,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub worlds: BTreeMap<String, WorldEntry>,
    pub runs: Vec<RunEntry>,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut m = Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        // world files are relative to the manifest
        let base = path.parent().unwrap_or(Path::new("."));
        for entry in m.worlds.values_mut() {
            if let WorldEntry::File { file } = entry {
                if file.is_relative() {
                    *file = base.join(&*file);
                }
            }
        }
        Ok(m)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: ExperimentManifest = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<manifest>".into(),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let field_err = |field: String, msg: String| Error::Parse {
            path: "<manifest>".into(),
            message: format!("field `{field}`: {msg}"),
        };
        if self.format_version != MANIFEST_VERSION {
            return Err(field_err(
                "format_version".into(),
                format!("unsupported version {} (expected {MANIFEST_VERSION})", self.format_version),
            ));
        }
        let mut names = HashSet::new();
        for (i, run) in self.runs.iter().enumerate() {
            if run.name.is_empty() || run.name.contains(['/', '\\']) {
                return Err(field_err(format!("runs[{i}].name"), format!("invalid run name `{}`", run.name)));
            }
            if !names.insert(run.name.as_str()) {
                return Err(field_err(format!("runs[{i}].name"), format!("duplicate run name `{}`", run.name)));
            }
            if WorldSpec::preset(&run.world).is_none() && !self.worlds.contains_key(&run.world) {
                return Err(field_err(format!("runs[{i}].world"), format!("undefined world `{}`", run.world)));
            }
            if run.seeds.is_empty() {
                return Err(field_err(format!("runs[{i}].seeds"), "at least one seed is required".into()));
            }
            run.config
                .validate()
                .map_err(|e| field_err(format!("runs[{i}].config"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn world(&self, name: &str) -> Result<WorldSpec> {
        match self.worlds.get(name) {
            Some(WorldEntry::Inline(w)) => {
                w.validate()?;
                Ok(w.clone())
            }
            Some(WorldEntry::File { file }) => WorldSpec::load(file),
            None => WorldSpec::preset(name).ok_or_else(|| Error::Config(format!("undefined world `{name}`"))),
        }
    }

    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(self.output_dir.file_name().unwrap_or(self.output_dir.as_os_str())),
            None => self.output_dir.clone(),
        }
    }

    /// Number of `(run, seed)` training jobs.
    pub fn job_count(&self) -> usize {
        self.runs.iter().map(|r| r.seeds.len()).sum()
    }
}

// ---------------------------------------------------------------------------
// Presets

pub const PRESETS: [&str; 4] = ["fig4", "fig5-6", "fig8", "smoke"];

const STUDY_SEEDS: [u64; 4] = [0, 1, 2, 3];

fn run(name: String, world: &str, seeds: &[u64], config: TrainConfig) -> RunEntry {
    RunEntry {
        name,
        world: world.into(),
        seeds: seeds.to_vec(),
        config,
    }
}

/// Manifests mirroring the published experiment suite, plus a tiny smoke run.
pub fn preset(name: &str) -> Option<ExperimentManifest> {
    let long = |max_steps: u64| TrainConfig {
        episodes: 1_000_000,
        max_steps: Some(max_steps),
        ..TrainConfig::default()
    };
    let runs = match name {
        // trunk sweep against the baseline, empty world, P(1,1)
        "fig4" => {
            let mut runs = Vec::new();
            for trunk in TrunkPreset::ALL {
                for algorithm in [Algorithm::Asddpg, Algorithm::Ddpg] {
                    let config = TrainConfig {
                        algorithm,
                        trunk,
                        gains: PGains::MODERATE,
                        ..long(150_000)
                    };
                    runs.push(run(format!("{}-{}", algorithm.as_str(), trunk.label()), "empty", &STUDY_SEEDS, config));
                }
            }
            runs
        }
        // controller gain sweep in the empty and simple worlds
        "fig5-6" => {
            let mut runs = Vec::new();
            for world in ["empty", "simple"] {
                for (label, gains) in [("p0.1", PGains::SLOW), ("p1", PGains::MODERATE), ("p10", PGains::FAST)] {
                    let config = TrainConfig { gains, ..long(150_000) };
                    runs.push(run(format!("{world}-{label}"), world, &STUDY_SEEDS, config));
                }
            }
            runs
        }
        // sparse reward in the corridor world
        "fig8" => [Algorithm::Asddpg, Algorithm::Ddpg]
            .into_iter()
            .map(|algorithm| {
                let config = TrainConfig {
                    algorithm,
                    reward: RewardKind::Sparse,
                    ..long(300_000)
                };
                run(format!("{}-sparse", algorithm.as_str()), "complex", &STUDY_SEEDS, config)
            })
            .collect(),
        "smoke" => [Algorithm::Asddpg, Algorithm::Ddpg]
            .into_iter()
            .map(|algorithm| {
                let config = TrainConfig {
                    algorithm,
                    episodes: 3,
                    horizon: Some(20),
                    batch_size: 4,
                    learning_starts: 16,
                    replay_capacity: 1000,
                    eval_interval: 30,
                    eval_episodes: 2,
                    ..TrainConfig::default()
                };
                run(format!("{}-smoke", algorithm.as_str()), "empty", &[0], config)
            })
            .collect(),
        _ => return None,
    };
    Some(ExperimentManifest {
        format_version: MANIFEST_VERSION,
        output_dir: PathBuf::from("runs").join(name),
        worlds: BTreeMap::new(),
        runs,
    })
}

// ---------------------------------------------------------------------------
// Artifact files

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub format_version: u32,
    pub run: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub world: String,
    pub world_fingerprint: String,
    pub net_fingerprint: String,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub run: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub ok: bool,
    pub error: Option<String>,
    pub summary: Option<RunSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunIndex {
    pub format_version: u32,
    pub entries: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct CurveRow {
    step: u64,
    episode: usize,
    #[serde(rename = "return")]
    episode_return: f64,
    eval_metric: Option<f64>,
    usage_ratio: f64,
    outcome: Terminal,
    length: usize,
}

impl From<&EpisodeRecord> for CurveRow {
    fn from(e: &EpisodeRecord) -> Self {
        Self {
            step: e.step,
            episode: e.episode,
            episode_return: e.episode_return,
            eval_metric: e.eval_metric,
            usage_ratio: e.usage_ratio,
            outcome: e.outcome,
            length: e.length,
        }
    }
}

impl From<CurveRow> for EpisodeRecord {
    fn from(r: CurveRow) -> Self {
        Self {
            episode: r.episode,
            step: r.step,
            episode_return: r.episode_return,
            eval_metric: r.eval_metric,
            usage_ratio: r.usage_ratio,
            outcome: r.outcome,
            length: r.length,
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes every artifact of one finished run into `dir`.
pub fn write_artifacts(dir: &Path, run_name: &str, artifacts: &RunArtifacts) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = RunMeta {
        format_version: ARTIFACT_VERSION,
        run: run_name.to_string(),
        seed: artifacts.config.seed,
        algorithm: artifacts.config.algorithm,
        world: artifacts.world.name.clone(),
        world_fingerprint: artifacts.world.fingerprint(),
        net_fingerprint: config_fingerprint(&artifacts.bundle.config),
        config: artifacts.config.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    write_csv(&dir.join("curve.csv"), artifacts.episodes.iter().map(CurveRow::from))?;
    write_csv(&dir.join("evals.csv"), &artifacts.evals)?;
    #[derive(Serialize)]
    struct UsageRow {
        episode: usize,
        step: u64,
        usage_ratio: f64,
    }
    write_csv(
        &dir.join("usage.csv"),
        artifacts.episodes.iter().map(|e| UsageRow {
            episode: e.episode,
            step: e.step,
            usage_ratio: e.usage_ratio,
        }),
    )?;
    write_csv(&dir.join("trajectories.csv"), &artifacts.trajectories)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&artifacts.summary)?)?;
    fs::write(dir.join("world.toml"), artifacts.world.to_toml())?;
    artifacts.bundle.save(&dir.join("checkpoint.txt"))?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<RunMeta> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let version = value.get("format_version").and_then(|v| v.as_u64());
    if version != Some(ARTIFACT_VERSION as u64) {
        return Err(Error::Format(format!(
            "{}: artifact format version {version:?} is not supported (expected {ARTIFACT_VERSION})",
            path.display()
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_curve(dir: &Path) -> Result<Vec<EpisodeRecord>> {
    Ok(read_csv::<CurveRow>(&dir.join("curve.csv"))?.into_iter().map(Into::into).collect())
}

pub fn read_evals(dir: &Path) -> Result<Vec<EvalRecord>> {
    read_csv(&dir.join("evals.csv"))
}

pub fn read_trajectories(dir: &Path) -> Result<Vec<TrajectoryRow>> {
    read_csv(&dir.join("trajectories.csv"))
}

// ---------------------------------------------------------------------------
// Running

pub fn run_dir(root: &Path, run: &str, seed: u64) -> PathBuf {
    root.join(run).join(format!("seed-{seed}"))
}

/// Trains every `(run, seed)` pair, isolating failures, and writes the index.
/// `jobs > 1` trains pairs on that many worker threads.
pub fn run_manifest(manifest: &ExperimentManifest, jobs: usize) -> Result<RunIndex> {
    run_manifest_in(manifest, &manifest.output_root(), jobs)
}

/// [`run_manifest`] into an explicit output directory.
pub fn run_manifest_in(manifest: &ExperimentManifest, root: &Path, jobs: usize) -> Result<RunIndex> {
    manifest.validate()?;
    let root = root.to_path_buf();
    fs::create_dir_all(&root)?;

    let units: Vec<(&RunEntry, u64)> = manifest
        .runs
        .iter()
        .flat_map(|r| r.seeds.iter().map(move |s| (r, *s)))
        .collect();

    let exec = |(entry, seed): &(&RunEntry, u64)| -> IndexEntry {
        let dir = run_dir(&root, &entry.name, *seed);
        let result = (|| -> Result<RunSummary> {
            let world = manifest.world(&entry.world)?;
            let config = TrainConfig {
                seed: *seed,
                ..entry.config.clone()
            };
            let mut save = |step: u64, bundle: &NetworkBundle| {
                fs::create_dir_all(&dir)?;
                bundle.save(&dir.join(format!("checkpoint-{step}.txt")))
            };
            match train_with(&config, &world, &mut save) {
                Ok(artifacts) => {
                    write_artifacts(&dir, &entry.name, &artifacts)?;
                    Ok(artifacts.summary)
                }
                Err(failure) => {
                    fs::create_dir_all(&dir)?;
                    if let Some(b) = &failure.last_stable {
                        b.save(&dir.join("checkpoint.txt"))?;
                    }
                    fs::write(dir.join("error.txt"), failure.to_string())?;
                    Err(failure.error)
                }
            }
        })();
        let rel = dir.strip_prefix(&root).unwrap_or(&dir).to_path_buf();
        match result {
            Ok(summary) => IndexEntry {
                run: entry.name.clone(),
                seed: *seed,
                dir: rel,
                ok: true,
                error: None,
                summary: Some(summary),
            },
            Err(e) => IndexEntry {
                run: entry.name.clone(),
                seed: *seed,
                dir: rel,
                ok: false,
                error: Some(e.to_string()),
                summary: None,
            },
        }
    };

    let entries: Vec<IndexEntry> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| units.par_iter().map(exec).collect())
    } else {
        units.iter().map(exec).collect()
    };

    let index = RunIndex {
        format_version: ARTIFACT_VERSION,
        entries,
    };
    fs::write(root.join("index.json"), serde_json::to_string_pretty(&index)?)?;
    Ok(index)
}

pub fn read_index(root: &Path) -> Result<RunIndex> {
    let path = root.join("index.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let index: RunIndex = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if index.format_version != ARTIFACT_VERSION {
        return Err(Error::Format(format!(
            "{}: index format version {} is not supported",
            path.display(),
            index.format_version
        )));
    }
    Ok(index)
}

/// Run directories below `dir`: the listed successes of an index, or `dir`
/// itself when it is a single run.
pub fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join("index.json").exists() {
        Ok(read_index(dir)?
            .entries
            .into_iter()
            .filter(|e| e.ok)
            .map(|e| dir.join(e.dir))
            .collect())
    } else if dir.join("meta.json").exists() {
        Ok(vec![dir.to_path_buf()])
    } else {
        Err(Error::Format(format!("{}: neither index.json nor meta.json found", dir.display())))
    }
}

// ---------------------------------------------------------------------------
// Analysis

/// Trailing moving average; early points average what is available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= w {
            sum -= series[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeBin {
    pub first_episode: usize,
    pub reach: usize,
    pub crash: usize,
    pub timeout: usize,
}

/// Reach/crash/timeout counts per block of `bin` episodes.
pub fn outcome_histogram(episodes: &[EpisodeRecord], bin: usize) -> Vec<OutcomeBin> {
    episodes
        .chunks(bin.max(1))
        .map(|chunk| {
            let mut b = OutcomeBin {
                first_episode: chunk[0].episode,
                ..Default::default()
            };
            for e in chunk {
                match e.outcome {
                    Terminal::Reach => b.reach += 1,
                    Terminal::Crash => b.crash += 1,
                    Terminal::Timeout | Terminal::None => b.timeout += 1,
                }
            }
            b
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothedRow {
    pub episode: usize,
    pub step: u64,
    pub return_smoothed: f64,
    pub usage_ratio: f64,
    pub usage_smoothed: f64,
    pub eval_metric: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub steps: u64,
    pub final_reach_rate: Option<f64>,
    pub final_eval_metric: Option<f64>,
    pub final_usage_ratio: f64,
    pub steps_to_sustained_80: Option<u64>,
}

/// Writes `smoothed.csv` and `outcomes.csv` into every run below `dir` and
/// returns one summary row per run.
pub fn summarize(dir: &Path, window: usize) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for run in run_dirs(dir)? {
        let meta = read_meta(&run)?;
        let curve = read_curve(&run)?;
        let evals = read_evals(&run)?;
        let returns: Vec<f64> = curve.iter().map(|e| e.episode_return).collect();
        let usage: Vec<f64> = curve.iter().map(|e| e.usage_ratio).collect();
        let r_s = moving_average(&returns, window);
        let u_s = moving_average(&usage, window);
        write_csv(
            &run.join("smoothed.csv"),
            curve.iter().enumerate().map(|(i, e)| SmoothedRow {
                episode: e.episode,
                step: e.step,
                return_smoothed: r_s[i],
                usage_ratio: e.usage_ratio,
                usage_smoothed: u_s[i],
                eval_metric: e.eval_metric,
            }),
        )?;
        write_csv(&run.join("outcomes.csv"), outcome_histogram(&curve, window))?;
        let total = curve.last().map_or(0, |e| e.step);
        let s = crate::trainer::summarize_run(meta.algorithm, &curve, &evals, total);
        rows.push(SummaryRow {
            run: meta.run,
            seed: meta.seed,
            algorithm: meta.algorithm,
            episodes: s.episodes,
            steps: s.total_steps,
            final_reach_rate: s.final_reach_rate,
            final_eval_metric: s.final_eval_metric,
            final_usage_ratio: s.final_usage_ratio,
            steps_to_sustained_80: s.steps_to_sustained_80,
        });
    }
    Ok(rows)
}

/// One vertex of an episode polyline. `sigma` tags the segment that starts
/// here (empty on the last vertex).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolylineVertex {
    pub episode: usize,
    pub vertex: usize,
    pub x: f64,
    pub y: f64,
    pub sigma: Option<SwitchChoice>,
}

/// Drops interior vertices that sit on a straight continuation of their
/// neighbours when both adjoining segments carry the same tag.
pub fn simplify_polyline(points: &[[f64; 2]], tags: &[SwitchChoice]) -> Vec<usize> {
    assert_eq!(tags.len() + 1, points.len().max(1));
    let mut keep = Vec::with_capacity(points.len());
    if points.is_empty() {
        return keep;
    }
    keep.push(0);
    for i in 1..points.len().saturating_sub(1) {
        let a = points[*keep.last().unwrap()];
        let (b, c) = (points[i], points[i + 1]);
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - b[0], c[1] - b[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        let scale = u[0].hypot(u[1]) * v[0].hypot(v[1]);
        let straight = cross.abs() <= 1e-9 * scale && dot >= 0.0;
        if !(straight && tags[i - 1] == tags[i]) {
            keep.push(i);
        }
    }
    if points.len() > 1 {
        keep.push(points.len() - 1);
    }
    keep
}

/// Turns logged trajectories into σ-tagged polylines, one file per run
/// (`polylines.csv`). Fails if `world` is not the world the run used.
pub fn replay_trajectories(dir: &Path, world: &WorldSpec) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for run in run_dirs(dir)? {
        let meta = read_meta(&run)?;
        if meta.world_fingerprint != world.fingerprint() {
            return Err(Error::Format(format!(
                "{}: world `{}` does not match the run's world `{}` (fingerprint {} vs {})",
                run.display(),
                world.name,
                meta.world,
                world.fingerprint(),
                meta.world_fingerprint
            )));
        }
        let rows = read_trajectories(&run)?;
        let vertices = polylines(&rows)?;
        let path = run.join("polylines.csv");
        write_csv(&path, &vertices)?;
        written.push(path);
    }
    Ok(written)
}

pub fn polylines(rows: &[TrajectoryRow]) -> Result<Vec<PolylineVertex>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let episode = rows[start].episode;
        let end = rows[start..]
            .iter()
            .position(|r| r.episode != episode)
            .map_or(rows.len(), |k| start + k);
        let ep = &rows[start..end];
        let points: Vec<[f64; 2]> = ep.iter().map(|r| [r.x, r.y]).collect();
        let tags: Vec<SwitchChoice> = ep[1..]
            .iter()
            .map(|r| {
                r.sigma
                    .ok_or_else(|| Error::Format(format!("episode {episode}: step {} has no switch tag", r.step)))
            })
            .collect::<Result<_>>()?;
        let keep = simplify_polyline(&points, &tags);
        for (vertex, (k, &i)) in keep.iter().enumerate().enumerate() {
            out.push(PolylineVertex {
                episode,
                vertex,
                x: points[i][0],
                y: points[i][1],
                // segment i → next kept vertex carries tag of step i + 1
                sigma: keep.get(k + 1).map(|_| tags[i]),
            });
        }
        start = end;
    }
    Ok(out)
}

/// Evaluates a saved policy on `episodes` fresh episodes of `world`.
pub fn eval_checkpoint(path: &Path, world: &WorldSpec, episodes: usize, seed: u64) -> Result<EvalResult> {
    let bundle = NetworkBundle::load(path)?;
    let c = &bundle.config;
    if c.beams != world.scan.beams || c.stack != world.scan.stack {
        return Err(Error::dim(
            "eval",
            format!("{} beams × {} scans", c.beams, c.stack),
            format!("{} beams × {} scans", world.scan.beams, world.scan.stack),
        ));
    }
    evaluate(&bundle, world, &eval_seeds(seed, u64::MAX >> 24, episodes))
}
