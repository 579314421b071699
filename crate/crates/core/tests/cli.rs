use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mispredict"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"
[experiment]
kind = "empirical_accuracy"
mc_iterates = 2
missing_rates = [0.2]
imputers = ["mean"]
predictors = ["linear"]

[dataset]
path = "data.csv"
response = "y"
"#;

fn data_csv(dir: &Path) {
    let mut s = String::from("a,b,y\n");
    for i in 0..30 {
        let a = i as f64 * 0.37 % 5.0;
        let b = (i * 7 % 11) as f64;
        s.push_str(&format!("{a},{b},{}\n", 2.0 * a - b + (i % 3) as f64));
    }
    write(dir, "data.csv", &s);
}

#[test]
fn validate_accepts_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{SMALL}\nunknown = 1\n"));
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["run", "--config"]).arg(dir.path().join("absent.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // The dataset file is never written.
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    data_csv(dir.path());
    let cfg = write(dir.path(), "c.toml", SMALL);
    let run = |out: &str| {
        let o = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--seed", "9", "--iterates", "3", "--out"])
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.path().join(out).join("results.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    // header + 1 baseline + 3 iterates
    assert_eq!(a.lines().count(), 5);
    let manifest = std::fs::read_to_string(dir.path().join("a/manifest.txt")).unwrap();
    assert!(manifest.contains("master_seed = 9"));
    assert!(manifest.contains("# iterates = 3"));
}

#[test]
fn max_rows_caps_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    data_csv(dir.path());
    let cfg = write(dir.path(), "c.toml", &SMALL.replace("mc_iterates = 2", "mc_iterates = 1"));
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--max-rows", "3", "--out"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    // Three rows cannot hold five folds.
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        seen += 1;
    }
    assert!(seen >= 2);
}
