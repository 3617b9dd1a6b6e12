use std::path::Path;
use std::process::{Command, Output};

fn pckm(args: &[&str], paths: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pckm"));
    cmd.args(args);
    for (flag, p) in paths {
        cmd.arg(flag).arg(p);
    }
    cmd.output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn synth_constraints_cluster_metrics_chain() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let cons = dir.path().join("c.csv");
    let outcome = dir.path().join("o.json");

    let out = pckm(&["synth", "--n", "120", "--u", "3", "--k", "3", "--noise", "0.05", "--seed", "1"], &[("--out", &data)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 121);

    let out = pckm(&["constraints", "--fraction", "0.2", "--seed", "4"], &[("--data", &data), ("--out", &cons)]);
    assert!(out.status.success());
    let (cs, meta) = pckm::constraints::read_constraints(&cons).unwrap();
    assert_eq!(cs.len(), 24 * 23 / 2);
    assert_eq!(meta.unwrap().seed, 4);

    let out = pckm(&["cluster", "--method", "cop_kmeans", "--seed", "2"], &[("--data", &data), ("--constraints", &cons), ("--out", &outcome)]);
    assert!(out.status.success(), "a dead-end is a status, not an error");
    let cop: pckm::ClusteringOutcome = serde_json::from_str(&std::fs::read_to_string(&outcome).unwrap()).unwrap();
    let report = pckm(&["metrics"], &[("--data", &data), ("--partition", &outcome), ("--constraints", &cons)]);
    match cop.status {
        pckm::RunStatus::Success => assert_eq!(json(&report)["unsat"].as_f64().unwrap(), 0.0),
        pckm::RunStatus::DeadEnd => assert!(!report.status.success()),
    }

    let out = pckm(&["cluster", "--seed", "2"], &[("--data", &data), ("--constraints", &cons), ("--out", &outcome)]);
    assert!(out.status.success());
    let report = json(&pckm(&["metrics"], &[("--data", &data), ("--partition", &outcome), ("--constraints", &cons)]));
    assert!(report["unsat"].as_f64().unwrap() < 0.1);
    let ari = report["ari"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&ari));
}

#[test]
fn mono_kmeans_metrics_from_label_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let outcome = dir.path().join("o.json");
    let labels = dir.path().join("labels.csv");
    assert!(pckm(&["synth", "--n", "80", "--u", "2", "--k", "2", "--seed", "9"], &[("--out", &data)]).status.success());
    let out = pckm(&["cluster", "--method", "mono_kmeans"], &[("--data", &data), ("--out", &outcome)]);
    assert!(out.status.success());
    let parsed: pckm::ClusteringOutcome = serde_json::from_str(&std::fs::read_to_string(&outcome).unwrap()).unwrap();
    let body: String = parsed.labels().unwrap().iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&labels, format!("label\n{body}")).unwrap();
    let report = json(&pckm(&["metrics"], &[("--data", &data), ("--partition", &labels)]));
    assert_eq!(report["nmi"].as_f64().unwrap(), 0.0);
    assert!(report["unsat"].is_null());
}

#[test]
fn signtest_reads_named_columns() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out_dir = dir.path().join("st");
    let rows = |shift: f64| -> String {
        let body: String = (0..25).map(|i| format!("x,{}\n", i as f64 / 25.0 + shift)).collect();
        format!("name,ari\n{body}")
    };
    std::fs::write(&a, rows(1.0)).unwrap();
    std::fs::write(&b, rows(0.0)).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pckm"))
        .args(["signtest", "--column", "ari", "--rope", "-0.02,0.02", "--samples", "20000"])
        .arg(&a)
        .arg(&b)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    let summary = json(&out);
    assert!(summary["p_right"].as_f64().unwrap() > 0.9);
    assert!(out_dir.join("summary.json").exists());
    let samples = std::fs::read_to_string(out_dir.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 20001);
}

#[test]
fn errors_exit_nonzero() {
    let missing = Path::new("/nonexistent/data.csv");
    let out = pckm(&["cluster"], &[("--data", missing)]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(pckm(&["synth", "--n", "10", "--u", "2", "--k", "2"], &[("--out", &data)]).status.success());
    let out = pckm(&["cluster", "--method", "dbscan"], &[("--data", &data)]);
    assert!(!out.status.success());
    let out = pckm(&["constraints", "--fraction", "0.1"], &[("--data", &data), ("--out", &dir.path().join("c.csv"))]);
    assert!(!out.status.success(), "n_f = 1 must be rejected");
}

#[test]
fn run_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let out_dir = dir.path().join("out");
    assert!(pckm(&["synth", "--n", "100", "--u", "3", "--k", "3", "--noise", "0.1"], &[("--out", &data)]).status.success());
    let out = pckm(
        &["run", "--fractions", "0.1,0.2", "--repeats", "3", "--methods", "pckm_mono,kmeans", "--signtest-samples", "500", "--sequential"],
        &[("--datasets", &data), ("--out", &out_dir)],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["runs.csv", "summary.csv", "table_ari.csv", "table_nmi.csv", "table_unsat.csv", "manifest.json", "timings.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let runs = pckm::experiment::ResultsTable::read_csv(out_dir.join("runs.csv")).unwrap();
    assert_eq!(runs.len(), 2 * 3 * 2);
    assert!(out_dir.join("signtest/ari_pckm_mono_vs_kmeans.json").exists());
}
