use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_storyplan");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

fn tiny() -> String {
    data("data/tiny.map").display().to_string()
}

fn storyplan(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Naive hinder story on the tiny layout, written into `dir`.
fn naive_into(dir: &Path, seed: &str) -> Output {
    storyplan(&[
        "naive",
        "--layout",
        &tiny(),
        "--rho",
        "hinder",
        "--seed",
        seed,
        "--steps",
        "5",
        "--out",
        path_str(dir),
    ])
}

#[test]
fn missing_layout_is_a_usage_error() {
    let out = storyplan(&["optimize", "--objective", "help", "--out", "x"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("--layout"), "{err}");
    assert!(err.contains("Usage:"), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&storyplan(&["optimize", "--bogus"])), 2);
    assert_eq!(
        code(&storyplan(&["naive", "--layout", "kitchen", "--rho", "sideways"])),
        2
    );
}

#[test]
fn zero_beam_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = storyplan(&[
        "optimize",
        "--layout",
        &tiny(),
        "--objective",
        "help",
        "--beam",
        "0",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let out = Command::new(BIN)
        .args(["objectives", "list"])
        .env("STORYPLAN_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn parse_failures_exit_3() {
    let dir = TempDir::new().unwrap();
    let broken_objective = dir.path().join("broken.obj");
    fs::write(&broken_objective, "sum t: P(rho >").unwrap();
    let out = storyplan(&[
        "optimize",
        "--layout",
        &tiny(),
        "--objective",
        path_str(&broken_objective),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));

    let unknown = storyplan(&[
        "optimize",
        "--layout",
        &tiny(),
        "--objective",
        "no_such_story",
        "--out",
        "x",
    ]);
    assert_eq!(code(&unknown), 3);

    let bad_map = dir.path().join("bad.map");
    fs::write(&bad_map, "P.X\n").unwrap();
    let out = storyplan(&["naive", "--layout", path_str(&bad_map), "--rho", "help", "--out", "x"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("column 3"), "{}", stderr(&out));
}

#[test]
fn search_failure_exits_4() {
    let dir = TempDir::new().unwrap();
    let map = dir.path().join("two.map");
    fs::write(&map, "PG\n").unwrap();
    let out = storyplan(&[
        "naive",
        "--layout",
        path_str(&map),
        "--rho",
        "help",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn empty_script_gives_the_prior_row_only() {
    let dir = TempDir::new().unwrap();
    let layout = storyplan::world::parse_layout(&fs::read_to_string(tiny()).unwrap()).unwrap();
    let script = format!(
        r#"{{"layout_hash":"{}","initial":{{"robot":[0,0],"cheese":[2,0],"table":null}},"transitions":[]}}"#,
        layout.hash()
    );
    let script_path = dir.path().join("empty.json");
    fs::write(&script_path, script).unwrap();
    let out_dir = dir.path().join("out");
    let out = storyplan(&[
        "infer",
        "--layout",
        &tiny(),
        "--script",
        path_str(&script_path),
        "--out",
        path_str(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("beliefs.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("t,transition,"));
    assert!(lines[1].starts_with("0,,0:0,2:0,,"));
    assert_eq!(lines[0].split(',').count(), storyplan_cli::beliefs::COLUMNS.len());
    assert_eq!(lines[1].split(',').count(), storyplan_cli::beliefs::COLUMNS.len());
}

#[test]
fn inconsistent_script_exits_3_with_pointer() {
    let dir = TempDir::new().unwrap();
    let layout = storyplan::world::parse_layout(&fs::read_to_string(tiny()).unwrap()).unwrap();
    // The cheese sits against the top wall, so a successful northward move is impossible.
    let script = format!(
        r#"{{"layout_hash":"{}","initial":{{"robot":[0,0],"cheese":[2,0],"table":null}},"transitions":[{{"type":"joint","robot":"X","cheese":"N","success":true}}]}}"#,
        layout.hash()
    );
    let script_path = dir.path().join("bad.json");
    fs::write(&script_path, script).unwrap();
    let out = storyplan(&[
        "infer",
        "--layout",
        &tiny(),
        "--script",
        path_str(&script_path),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("/transitions/0/success"), "{}", stderr(&out));
}

#[test]
fn infer_reproduces_the_generating_trace() {
    let dir = TempDir::new().unwrap();
    let run_dir = dir.path().join("opt");
    let out = storyplan(&[
        "optimize",
        "--layout",
        &tiny(),
        "--objective",
        "twist_hinder_to_help",
        "--steps",
        "6",
        "--starts",
        "12",
        "--out",
        path_str(&run_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let infer_dir = dir.path().join("infer");
    let out = storyplan(&[
        "infer",
        "--layout",
        &tiny(),
        "--script",
        path_str(&run_dir.join("script.json")),
        "--out",
        path_str(&infer_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read(run_dir.join("beliefs.csv")).unwrap(),
        fs::read(infer_dir.join("beliefs.csv")).unwrap()
    );
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    assert_eq!(code(&naive_into(&first, "11")), 0);
    let second = dir.path().join("second");
    let out = storyplan(&[
        "rerun",
        "--manifest",
        path_str(&first.join("manifest.json")),
        "--out",
        path_str(&second),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["script.json", "beliefs.csv", "storyboard.svg"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn rerun_detects_tampered_outputs() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    assert_eq!(code(&naive_into(&first, "2")), 0);
    let manifest_path = first.join("manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest["outputs"]["beliefs.csv"] = serde_json::Value::String("0".repeat(64));
    fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let out = storyplan(&[
        "rerun",
        "--manifest",
        path_str(&manifest_path),
        "--out",
        path_str(&dir.path().join("again")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("beliefs.csv"), "{}", stderr(&out));
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "layout = {:?}\nrho = \"help\"\nsteps = 4\nseed = 9\nout = {:?}\n",
            tiny(),
            path_str(&out_dir)
        ),
    )
    .unwrap();
    let out = storyplan(&["naive", "--config", path_str(&config), "--steps", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let script: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("script.json")).unwrap()).unwrap();
    assert_eq!(script["transitions"].as_array().unwrap().len(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"]["seed"], 9);
    assert_eq!(manifest["command"]["rho"], "help");

    fs::write(&config, "layuot = \"kitchen\"\n").unwrap();
    assert_eq!(code(&storyplan(&["naive", "--config", path_str(&config)])), 3);
}

#[test]
fn flashback_objectives_default_to_a_wide_beam() {
    let dir = TempDir::new().unwrap();
    let out = storyplan(&[
        "optimize",
        "--layout",
        &tiny(),
        "--objective",
        "flashback_help",
        "--steps",
        "3",
        "--starts",
        "2",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"]["search"]["beam_width"], 100);
    assert!(manifest["command"]["objective"]["source"]
        .as_str()
        .unwrap()
        .contains("continue"));
}

#[test]
fn storyboard_has_one_panel_per_state() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&naive_into(dir.path(), "0")), 0);
    let svg = fs::read_to_string(dir.path().join("storyboard.svg")).unwrap();
    assert_eq!(svg.matches("<g id=\"panel-").count(), 6);

    let layout = storyplan::world::parse_layout(&fs::read_to_string(tiny()).unwrap()).unwrap();
    let script = dir.path().join("still.json");
    fs::write(
        &script,
        format!(
            r#"{{"layout_hash":"{}","initial":{{"robot":[0,0],"cheese":[3,2],"table":[2,1]}},"transitions":[]}}"#,
            layout.hash()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("still");
    let out = storyplan(&[
        "render",
        "--layout",
        &tiny(),
        "--script",
        path_str(&script),
        "--out",
        path_str(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let svg = fs::read_to_string(out_dir.join("storyboard.svg")).unwrap();
    assert_eq!(svg.matches("<g id=\"panel-").count(), 1);
}

#[test]
fn objectives_list_and_show() {
    let out = storyplan(&["objectives", "list"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for (name, _) in storyplan::objectives::BUILTINS {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    let out = storyplan(&["objectives", "show", "arc"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().contains("KL_step"));
    assert_eq!(code(&storyplan(&["objectives", "show", "nope"])), 3);
}

#[test]
fn cache_file_is_written_then_reused() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("tiny.cache");
    let out = storyplan(&["cache", "build", "--layout", &tiny(), "--cache", path_str(&cache)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(cache.exists());
    let run = storyplan(&[
        "naive",
        "--layout",
        &tiny(),
        "--cache",
        path_str(&cache),
        "--rho",
        "indifferent",
        "--out",
        path_str(&dir.path().join("n")),
    ]);
    assert_eq!(code(&run), 0);
    assert!(
        !stderr(&run).contains("planning"),
        "cache should have been reused: {}",
        stderr(&run)
    );

    // A different beta needs a different cache; the stale file is replaced.
    let rebuilt = storyplan(&[
        "cache",
        "build",
        "--layout",
        &tiny(),
        "--cache",
        path_str(&cache),
        "--beta",
        "3",
    ]);
    assert_eq!(code(&rebuilt), 0);
    assert!(stderr(&rebuilt).contains("rebuilding"), "{}", stderr(&rebuilt));
}

/// Golden files pin the exact bytes for a fixed naive run. Regenerate with
/// `STORYPLAN_UPDATE_GOLDEN=1 cargo test -p storyplan-cli --test cli golden`.
#[test]
fn golden_files_match() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&naive_into(dir.path(), "3")), 0);
    let update = std::env::var_os("STORYPLAN_UPDATE_GOLDEN").is_some();
    for name in ["script.json", "beliefs.csv", "storyboard.svg"] {
        let produced = fs::read_to_string(dir.path().join(name)).unwrap();
        let golden = data("golden").join(name);
        if update {
            fs::write(&golden, &produced).unwrap();
        }
        let expected = fs::read_to_string(&golden).unwrap();
        assert!(produced == expected, "{name} differs from its golden copy");
    }
}
