use std::path::Path;
use std::process::Command;

const SWEEP: &str = r#"
seed = 11
repetitions = 3
methods = ["pf", "mlpf"]
levels = [1, 2, 3, 4, 5]
n1 = 40

[model]
kind = "gbm"
s0 = 32.0
rate = 0.01
sigma = 0.25

[option]
kind = "barrier"
strike = 30.0
dates = 4
interval = 0.25

[reference]
samples = 10000
"#;

fn mlpf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlpf"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn without_wall_time(csv: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let headers = r.headers().unwrap().clone();
    let wall = headers.iter().position(|h| h == "wall_seconds").unwrap();
    r.records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != wall)
                .map(|(_, f)| f.to_string())
                .collect()
        })
        .collect()
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SWEEP);
    let out = dir.path().join("out.csv");
    let status = mlpf()
        .args(["bench", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), mlpf_cli::CSV_HEADER.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[..5].iter().all(|r| r.starts_with("pf,barrier,gbm,4,")));
    assert!(rows[5..].iter().all(|r| r.starts_with("mlpf,barrier,gbm,4,")));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SWEEP);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let status = mlpf()
            .args(["bench", "--threads", threads, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "1");
    let c = run("c.csv", "4");
    assert_eq!(without_wall_time(&a), without_wall_time(&b));
    assert_eq!(without_wall_time(&a), without_wall_time(&c));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SWEEP);
    let run = |seed: &str| {
        let out = mlpf()
            .args(["price", "--level", "2", "--out", "-", "--seed", seed, "--config"])
            .arg(&cfg)
            .output()
            .unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let a = without_wall_time(&run("1"));
    assert_eq!(a.len(), 1);
    assert_eq!(a[0][7], "1");
    assert_ne!(a, without_wall_time(&run("2")));
}

#[test]
fn unknown_option_kind_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SWEEP.replace("\"barrier\"", "\"asian\""));
    let out_path = dir.path().join("out.csv");
    let out = mlpf()
        .args(["bench", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("asian"), "{err}");
}

#[test]
fn invalid_field_is_named_in_the_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &SWEEP.replace("strike = 30.0", "strike = 30.0\nrho = 1.5"),
    );
    let out_path = dir.path().join("out.csv");
    let out = mlpf()
        .args(["bench", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("option.rho: rho must lie in (0,1)"), "{err}");
}

#[test]
fn check_subcommand_reports_each_test() {
    let out = mlpf()
        .args(["check", "--samples", "2000", "--draws", "20000"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // 2 models x 3 levels x 2 marginals, then 3 pairs x 3 checks, then a summary
    assert_eq!(lines.len(), 12 + 9 + 1);
    assert!(lines[..21]
        .iter()
        .all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
    assert_eq!(out.status.success(), lines[..21].iter().all(|l| l.starts_with("PASS ")));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = mlpf_cli::ExperimentConfig::load(&path).unwrap();
            assert!(mlpf_cli::validate(&c).is_empty(), "{}", path.display());
            c.problem().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
