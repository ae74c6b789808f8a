//! End-to-end runs of the `pointwalk` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pointwalk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pointwalk"))
        .args(args)
        .current_dir(cwd)
        .env_remove("POINTWALK_OUT")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

const SMALL_CLT: &str = r#"
command = "clt1d"
seed = 12

[environment]
dimension = 1
kind = "renewal1d"
gaps = [1, 2]
probs = [0.5, 0.5]

[walk]
steps = 400
replicas = 1000
"#;

#[test]
fn passing_run_writes_self_describing_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "clt.toml", SMALL_CLT);
    let out = pointwalk(&["--config", cfg.to_str().unwrap(), "--out", "a"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS variance_ratio_deviation"));

    let files = listing(&tmp.path().join("a"));
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["clt1d.csv", "summary.json"]);
    let csv = String::from_utf8(files[0].1.clone()).unwrap();
    assert!(csv.starts_with("# pointwalk "));
    assert!(csv.contains("# environment_seed=12 rng_seed=12"));
    assert!(csv.lines().any(|l| l == "replica,env_seed,x_n,x_n_over_sqrt_n"));
    let summary: serde_json::Value = serde_json::from_slice(&files[1].1).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["command"], "clt1d");
}

#[test]
fn reruns_and_replays_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "clt.toml", SMALL_CLT);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(pointwalk(&["--config", cfg, "--out", "a"], tmp.path()).status.code(), Some(0));
    assert_eq!(pointwalk(&["--config", cfg, "--out", "b", "--threads", "3"], tmp.path()).status.code(), Some(0));
    let a = listing(&tmp.path().join("a"));
    assert_eq!(a, listing(&tmp.path().join("b")));

    for source in ["a/clt1d.csv", "a/summary.json"] {
        let dir = format!("replay-{}", source.replace('/', "-"));
        let out = pointwalk(&["--config", source, "--out", &dir], tmp.path());
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(a, listing(&tmp.path().join(&dir)), "replay from {source}");
    }
}

#[test]
fn seed_flag_and_output_variable() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pointwalk"))
        .args(["expsum", "--seed", "5"])
        .current_dir(tmp.path())
        .env("POINTWALK_OUT", tmp.path().join("from-env"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("from-env/expsum.csv")).unwrap();
    assert!(csv.contains("# environment_seed=5 rng_seed=5"));
    assert!(csv.lines().any(|l| l == "a,sum,sum_times_a_pow_d"));
}

#[test]
fn failed_check_exits_one_and_still_reports() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "expsum.toml",
        "command = \"expsum\"\n[environment]\ndimension = 1\nkind = \"full_lattice\"\n",
    );
    let out = pointwalk(&["--config", cfg.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL ratio_last_first"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
}

#[test]
fn config_errors_exit_two_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("broken.toml", "command = \"lln\"\n[environment\n"),
        ("unknown_key.toml", "command = \"lln\"\ncolour = 3\n"),
        ("bad_density.toml", "command = \"lln\"\n[environment]\ndimension = 2\nkind = \"bernoulli\"\ndensity = 1.5\n"),
        ("bad_param.toml", "command = \"expsum\"\n[params]\nnonsense = 1\n"),
    ];
    for (name, text) in cases {
        let cfg = write(tmp.path(), name, text);
        let out = pointwalk(&["--config", cfg.to_str().unwrap(), "--out", "never"], tmp.path());
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).expect("error is JSON");
        assert!(err.is_object(), "{name}: {err}");
        assert!(!tmp.path().join("never").exists(), "{name} left artifacts");
    }
    assert_eq!(pointwalk(&["no-such-command"], tmp.path()).status.code(), Some(2));
}

#[test]
fn scan_exhaustion_is_a_resource_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "sparse.toml",
        "command = \"simulate\"\n[environment]\ndimension = 1\nkind = \"bernoulli\"\ndensity = 1e-9\nmax_scan = 50\n[walk]\nsteps = 10\nreplicas = 1\n",
    );
    let out = pointwalk(&["--config", cfg.to_str().unwrap(), "--out", "never"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(!tmp.path().join("never").exists());
}

#[test]
fn simulate_emits_a_seed_the_corrector_can_reuse() {
    let tmp = TempDir::new().unwrap();
    let sim = write(
        tmp.path(),
        "sim.toml",
        "command = \"simulate\"\nseed = 8\n[environment]\ndimension = 2\nkind = \"bernoulli\"\ndensity = 0.5\n[walk]\nsteps = 50\nreplicas = 2\n",
    );
    assert_eq!(pointwalk(&["--config", sim.to_str().unwrap(), "--out", "sim"], tmp.path()).status.code(), Some(0));
    let names: Vec<String> = listing(&tmp.path().join("sim")).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["endpoints.csv", "summary.json", "trajectory_00000.csv", "trajectory_00001.csv"]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("sim/summary.json")).unwrap()).unwrap();
    let seed = summary["environment_seed"].as_u64().unwrap();

    let cor = write(
        tmp.path(),
        "cor.toml",
        &format!("command = \"corrector\"\n[environment]\ndimension = 2\nkind = \"bernoulli\"\ndensity = 0.5\nseed = {seed}\n[params]\nside = 32\n"),
    );
    let out = pointwalk(&["--config", cor.to_str().unwrap(), "--out", "cor"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let field = fs::read_to_string(tmp.path().join("cor/corrector_field.csv")).unwrap();
    assert!(field.contains(&format!("# environment_seed={seed} ")));
    assert!(field.lines().any(|l| l == "x_1,x_2,chi_1,chi_2"));
}
