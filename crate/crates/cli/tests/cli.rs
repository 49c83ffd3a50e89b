use std::path::Path;
use std::process::{Command, Output};

use asddpg_core::{ExperimentManifest, WorldSpec};

fn asddpg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asddpg"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ASDDPG_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn presets_and_worlds_print_as_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let out = asddpg(&["preset", "fig4"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let m = ExperimentManifest::parse(&stdout(&out)).unwrap();
    assert_eq!(m.runs.len(), 6);

    let out = asddpg(&["world", "complex"], tmp.path());
    assert!(out.status.success());
    assert_eq!(WorldSpec::from_toml(&stdout(&out)).unwrap(), WorldSpec::complex());

    let out = asddpg(&["preset", "nope"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("available"));
}

#[test]
fn bad_manifest_reports_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.toml");
    std::fs::write(
        &path,
        "format_version = 1\noutput_dir = \"out\"\n[[runs]]\nname = \"a\"\nworld = \"mars\"\nseeds = [0]\n",
    )
    .unwrap();
    let out = asddpg(&["run", path.to_str().unwrap()], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("runs[0].world"), "{}", stderr(&out));
}

#[test]
fn run_then_analyse() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("results");
    let out = Command::new(env!("CARGO_BIN_EXE_asddpg"))
        .args(["run", "--preset", "smoke", "--jobs", "2"])
        .current_dir(tmp.path())
        .env("ASDDPG_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("asddpg-smoke"));
    let runs = root.join("smoke");
    assert!(runs.join("index.json").is_file());

    let out = asddpg(&["summarize", runs.to_str().unwrap(), "--window", "2"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 3);

    let out = asddpg(&["replay", runs.to_str().unwrap(), "--world", "empty"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).lines().all(|l| l.ends_with("polylines.csv")));

    let out = asddpg(&["replay", runs.to_str().unwrap(), "--world", "complex"], tmp.path());
    assert!(!out.status.success());

    let ckpt = runs.join("asddpg-smoke/seed-0/checkpoint.txt");
    let out = asddpg(&["eval", ckpt.to_str().unwrap(), "--episodes", "2"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("reach rate"));
}
