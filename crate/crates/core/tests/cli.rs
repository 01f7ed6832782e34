use std::path::Path;
use std::process::{Command, Output};

const GAUSS: &str = r#"{
    "model": {"type": "gaussian", "mu": [0.0, 1.0], "sigma": [[1.0, 0.2], [0.2, 2.0]]},
    "alpha": 1.0,
    "horizon": {"events": 5000},
    "seed": 17
}"#;

const TEMPERED_MIXTURE: &str = r#"{
    "model": {"type": "mixture", "means": [[0.0, 0.0], [3.0, 3.0]], "sigma2": 0.3},
    "base": {"mu": [1.5, 1.5], "sigma": [[2.0, 0.0], [0.0, 2.0]]},
    "alpha": 0.5,
    "kappa": {"mode": "calibrate", "grid_size": 8, "degree": 3},
    "horizon": {"events": 6000},
    "replicates": 3,
    "seed": 5
}"#;

fn tzz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tzz")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", GAUSS);
    let out = dir.path().join("out");
    let o = tzz(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("skeleton.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,mode,beta,v_beta,x_1,x_2,v_1,v_2,event_kind");
    assert!(lines.all(|l| l.split(',').count() == 9));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["beta_occupancy"], 1.0);
    assert!(s["thinning_efficiency"].as_f64().unwrap() > 0.0);
    assert!(s["wall_time_seconds"].as_f64().is_some());
    assert!(s["estimates"]["mean"].as_array().unwrap().len() == 2);
}

#[test]
fn same_seed_gives_identical_csv_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.json", TEMPERED_MIXTURE);
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = tzz(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b, c) = (run("1", "a"), run("3", "b"), run("1", "c"));
    for r in 0..3 {
        let name = format!("skeleton_{r}.csv");
        let first = std::fs::read(a.join(&name)).unwrap();
        assert_eq!(first, std::fs::read(b.join(&name)).unwrap());
        assert_eq!(first, std::fs::read(c.join(&name)).unwrap());
    }
    let strip = |p: &Path| {
        let mut v = json(&p.join("summary.json"));
        for r in v["replicates"].as_array_mut().unwrap() {
            r.as_object_mut().unwrap().remove("wall_time_seconds");
        }
        v
    };
    assert_eq!(strip(&a), strip(&b));
    let summary = json(&a.join("summary.json"));
    assert_eq!(summary["replicates"].as_array().unwrap().len(), 3);
}

#[test]
fn seed_flag_changes_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", GAUSS);
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        assert!(tzz(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]).status.success());
        std::fs::read(out.join("skeleton.csv")).unwrap()
    };
    assert_ne!(run("1", "a"), run("2", "b"));
}

#[test]
fn invalid_config_reports_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &GAUSS.replace("\"sigma\": [[1.0, 0.2], [0.2, 2.0]]", "\"sigma\": [[1.0, 0.2], [0.2, \"x\"]]"));
    let o = tzz(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/model/sigma/1/1"), "{err}");
}

#[test]
fn calibrate_on_identical_ends_gives_flat_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "model": {"type": "gaussian", "mu": [0.5], "sigma": [[1.0]]},
        "base": {"mu": [0.5], "sigma": [[1.0]]},
        "alpha": 0.5,
        "kappa": {"mode": "calibrate", "grid_size": 10, "degree": 3},
        "horizon": {"events": 20000},
        "seed": 3
    }"#;
    let cfg = write(dir.path(), "c.json", text);
    let o = tzz(&["calibrate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let k = json(&dir.path().join("kappa.json"));
    for p in k["psi"].as_array().unwrap() {
        assert!(p.as_f64().unwrap().abs() < 0.05, "{k}");
    }
}

#[test]
fn experiment_reports_are_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", r#"{"ms": [0.0, 4.0], "events": 4000, "replicates": 3}"#);
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = tzz(&["experiment", "spikeslab", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("1", "a"), run("2", "b"));
    for f in ["spikeslab_report.json", "spikeslab_report.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let csv = std::fs::read_to_string(a.join("spikeslab_report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "alpha,mae_m0,mae_m4");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn unknown_experiment_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = tzz(&["experiment", "nope", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown experiment"));
}
