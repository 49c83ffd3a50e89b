use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use asddpg_core::experiment::{
    self, eval_checkpoint, moving_average, outcome_histogram, polylines, read_curve, replay_trajectories, run_manifest,
    simplify_polyline, summarize, ExperimentManifest,
};
use asddpg_core::trainer::{EpisodeRecord, TrajectoryRow};
use asddpg_core::{Error, SwitchChoice, Terminal, WorldSpec};

/// One smoke run shared by the tests in this file.
fn smoke_root() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let mut m = experiment::preset("smoke").unwrap();
        m.output_dir = dir.join("smoke");
        let index = run_manifest(&m, 2).unwrap();
        assert!(index.entries.iter().all(|e| e.ok), "{index:?}");
        m.output_dir
    })
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            fs::copy(e.path(), target).unwrap();
        }
    }
}

#[test]
fn smoke_run_writes_every_artifact() {
    let root = smoke_root();
    let index = experiment::read_index(root).unwrap();
    assert_eq!(index.entries.len(), 2);
    for e in &index.entries {
        let dir = root.join(&e.dir);
        for f in ["meta.json", "curve.csv", "evals.csv", "usage.csv", "trajectories.csv", "summary.json", "world.toml", "checkpoint.txt"] {
            assert!(dir.join(f).is_file(), "{} missing", f);
        }
        let curve = read_curve(&dir).unwrap();
        let episodes: Vec<_> = curve.iter().map(|c| c.episode).collect();
        assert_eq!(episodes, vec![0, 1, 2]);
        assert_eq!(e.summary.as_ref().unwrap().episodes, 3);
    }
}

#[test]
fn summarize_smooths_and_histograms() {
    let root = smoke_root();
    let rows = summarize(root, 2).unwrap();
    assert_eq!(rows.len(), 2);
    for e in experiment::read_index(root).unwrap().entries {
        let dir = root.join(e.dir);
        assert!(dir.join("smoothed.csv").is_file() && dir.join("outcomes.csv").is_file());
    }
}

#[test]
fn moving_average_is_trailing() {
    let m = moving_average(&[0.0, 1.0, 1.0], 3);
    assert_eq!(m[0], 0.0);
    assert_eq!(m[1], 0.5);
    assert!((m[2] - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.0, 1.5, 2.5, 3.5]);
}

#[test]
fn outcome_bins() {
    let rec = |episode, outcome| EpisodeRecord {
        episode,
        step: 0,
        episode_return: 0.0,
        eval_metric: None,
        usage_ratio: 1.0,
        outcome,
        length: 1,
    };
    let eps = [rec(0, Terminal::Timeout), rec(1, Terminal::Crash), rec(2, Terminal::Reach), rec(3, Terminal::Reach)];
    let bins = outcome_histogram(&eps, 3);
    assert_eq!(bins.len(), 2);
    assert_eq!((bins[0].timeout, bins[0].crash, bins[0].reach), (1, 1, 1));
    assert_eq!((bins[1].first_episode, bins[1].reach), (3, 1));
}

fn row(step: usize, x: f64, y: f64, sigma: Option<SwitchChoice>) -> TrajectoryRow {
    TrajectoryRow {
        episode: 0,
        step,
        x,
        y,
        theta: 0.0,
        v: 0.0,
        omega: 0.0,
        sigma,
        reward: 0.0,
        terminal: Terminal::None,
    }
}

#[test]
fn straight_single_branch_episode_is_two_points() {
    let p = Some(SwitchChoice::Policy);
    let rows: Vec<_> = (0..6).map(|k| row(k, 0.1 * k as f64, 0.0, if k == 0 { None } else { p })).collect();
    let v = polylines(&rows).unwrap();
    assert_eq!(v.len(), 2);
    assert_eq!((v[0].x, v[1].x), (0.0, rows[5].x));
    assert_eq!((v[0].sigma, v[1].sigma), (p, None));
}

#[test]
fn branch_changes_keep_their_vertex() {
    let (p, c) = (SwitchChoice::Policy, SwitchChoice::Controller);
    let pts: Vec<[f64; 2]> = (0..5).map(|k| [k as f64, 0.0]).collect();
    assert_eq!(simplify_polyline(&pts, &[p, p, c, c]), vec![0, 2, 4]);
    // a corner survives even within one branch
    let bent = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
    assert_eq!(simplify_polyline(&bent, &[p, p]), vec![0, 1, 2]);
}

#[test]
fn replay_checks_the_world() {
    let src = smoke_root();
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(src, tmp.path());
    let written = replay_trajectories(tmp.path(), &WorldSpec::empty()).unwrap();
    assert_eq!(written.len(), 2);
    assert!(written.iter().all(|p| p.is_file()));
    let err = replay_trajectories(tmp.path(), &WorldSpec::simple()).unwrap_err();
    assert!(err.to_string().contains("does not match"), "{err}");
}

#[test]
fn unknown_artifact_version_is_refused() {
    let src = smoke_root();
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(src, tmp.path());
    let index = experiment::read_index(tmp.path()).unwrap();
    let meta = tmp.path().join(&index.entries[0].dir).join("meta.json");
    let text = fs::read_to_string(&meta).unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
    fs::write(&meta, text).unwrap();
    assert!(matches!(summarize(tmp.path(), 10), Err(Error::Format(_))));
}

#[test]
fn checkpoints_evaluate_and_check_shapes() {
    let root = smoke_root();
    let index = experiment::read_index(root).unwrap();
    let ckpt = root.join(&index.entries[0].dir).join("checkpoint.txt");
    let r = eval_checkpoint(&ckpt, &WorldSpec::empty(), 3, 0).unwrap();
    assert!((r.reach_rate + r.crash_rate + r.timeout_rate - 1.0).abs() < 1e-12);
    let mut narrow = WorldSpec::empty();
    narrow.scan.beams = 64;
    assert!(matches!(eval_checkpoint(&ckpt, &narrow, 1, 0), Err(Error::Dimension { .. })));
}

#[test]
fn manifest_validation_names_the_field() {
    let base = r#"
format_version = 1
output_dir = "out"

[[runs]]
name = "a"
world = "empty"
seeds = [0]
"#;
    assert!(ExperimentManifest::parse(base).is_ok());

    let dup = format!("{base}\n[[runs]]\nname = \"a\"\nworld = \"empty\"\nseeds = [1]\n");
    let err = ExperimentManifest::parse(&dup).unwrap_err().to_string();
    assert!(err.contains("runs[1].name") && err.contains("duplicate"), "{err}");

    let undefined = base.replace("\"empty\"", "\"moon\"");
    let err = ExperimentManifest::parse(&undefined).unwrap_err().to_string();
    assert!(err.contains("runs[0].world"), "{err}");

    let typo = format!("{base}[runs.config]\nbatchsize = 3\n");
    let err = ExperimentManifest::parse(&typo).unwrap_err().to_string();
    assert!(err.contains("batchsize"), "{err}");

    let version = base.replace("format_version = 1", "format_version = 2");
    assert!(ExperimentManifest::parse(&version).is_err());
}

#[test]
fn presets_have_the_expected_grid() {
    let fig4 = experiment::preset("fig4").unwrap();
    assert_eq!(fig4.runs.len(), 6);
    assert_eq!(fig4.job_count(), 24);
    assert_eq!(experiment::preset("fig5-6").unwrap().runs.len(), 6);
    let fig8 = experiment::preset("fig8").unwrap();
    assert!(fig8.runs.iter().all(|r| r.world == "complex"));
    for name in experiment::PRESETS {
        let m = experiment::preset(name).unwrap();
        assert_eq!(ExperimentManifest::parse(&m.to_toml()).unwrap(), m);
    }
    assert!(experiment::preset("fig9").is_none());
}

#[test]
fn failures_are_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = experiment::preset("smoke").unwrap();
    m.output_dir = tmp.path().join("out");
    m.runs.truncate(1);
    m.runs[0].config.episodes = 1;
    let mut broken = m.runs[0].clone();
    broken.name = "broken".into();
    broken.world = "missing".into();
    m.worlds.insert(
        "missing".into(),
        experiment::WorldEntry::File {
            file: tmp.path().join("nope.toml"),
        },
    );
    m.runs.push(broken);
    let index = run_manifest(&m, 1).unwrap();
    assert!(index.entries[0].ok);
    assert!(!index.entries[1].ok && index.entries[1].error.is_some());
    assert!(m.output_dir.join("index.json").is_file());
}
