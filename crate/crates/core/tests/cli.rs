use std::path::Path;
use std::process::Command;

use byzsim::harness::export::read_rounds;

const CONFIG: &str = r#"{
    "objective": {"kind": "quadratic", "a": [[2, 1], [1, 2]]},
    "noise": {"kind": "gaussian", "sigma": 0.5},
    "start": [1, 1],
    "workers": 5,
    "method": {"kind": "alg1_mlmc"},
    "aggregator": {"kind": "cwmed"},
    "attack": {"kind": "sign_flip"},
    "switching": {"kind": "periodic", "period": 10, "delta": 0.2},
    "lr": {"kind": "fixed", "eta": 0.02},
    "horizon": 40,
    "seed": 3,
    "seeds_count": 2
}"#;

fn byzsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_byzsim")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_identical_csv_twice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", CONFIG);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = byzsim(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let rows = read_rounds(bytes.as_slice()).unwrap();
    assert_eq!(rows.len(), 80);
    assert_eq!(rows[0].seed, 3);
    assert!(rows.iter().all(|r| r.record.cost >= 1 && (0.0..=1.0).contains(&r.record.byz_fraction)));
}

#[test]
fn sweep_orders_rows_by_run_id() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", CONFIG);
    let out = dir.path().join("sweep.csv");
    let summary = dir.path().join("summary.csv");
    let o = byzsim(&[
        "sweep",
        "--config",
        &cfg,
        "--axis",
        "lr.eta=0.01,0.02,0.04",
        "--axis",
        "aggregator={\"kind\":\"mean\"},{\"kind\":\"cwmed\"}",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rounds(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 12 * 40);
    let ids: Vec<usize> = rows.iter().map(|r| r.run_id).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let text = std::fs::read_to_string(&summary).unwrap();
    assert!(text.starts_with("run_id,seed,replicate,lr.eta,aggregator,avg_grad_norm_sq"));
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", &CONFIG.replace("\"workers\": 5", "\"workers\": 0"));
    let out = dir.path().join("x.csv");
    let o = byzsim(&["run", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("workers"));

    let o = byzsim(&["verify", "--suite", "nonexistent"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_prints_checks() {
    let o = byzsim(&["verify", "--suite", "mfm"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("PASS counterexample output: 0.75"));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&path).unwrap();
            let mut cfg = byzsim::harness::RunConfig::from_json(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.horizon = cfg.horizon.min(50);
            let trace = byzsim::harness::run(&cfg).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(trace.rounds.len(), cfg.horizon);
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
