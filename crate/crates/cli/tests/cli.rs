use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_battdiag"));
    c.args(args).current_dir(dir).env_remove("BATTDIAG_SEED");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).to_string() + &String::from_utf8_lossy(&o.stderr)
}

#[test]
fn generate_reports_counts_and_writes_files() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["generate", "--out", "ds"], &[]);
    assert!(o.status.success(), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("960 experimental, 784 simulation records"), "{t}");
    assert!(t.contains("32 simulation records in the top-degradation subset"), "{t}");
    for f in ["experimental.csv", "simulation.csv", "dataset.json"] {
        assert!(d.path().join("ds").join(f).is_file(), "{f}");
    }
}

#[test]
fn fold_count_mismatch_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), "[dataset.aging]\ncells_per_group = 3\n").unwrap();
    let o = run(d.path(), &["generate", "--config", "c.toml"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let t = text(&o);
    assert!(t.contains("cells_per_group") && t.contains("folds"), "{t}");
    assert!(!d.path().join("data").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), "[evaluation]\nrepeets = 3\n").unwrap();
    let o = run(d.path(), &["generate", "--config", "c.toml"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("repeets"), "{}", text(&o));
}

#[test]
fn empty_method_list_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), "[evaluation]\nmethods = []\n").unwrap();
    let o = run(d.path(), &["evaluate", "--config", "c.toml"], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn unknown_method_lists_the_valid_names() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["train", "--method", "svm", "--out", "m.json"], &[]);
    assert!(!o.status.success());
    let t = text(&o);
    for m in ["pinn", "cokriging", "delta_enet", "augmented", "base_net", "base_gpr", "base_enet"] {
        assert!(t.contains(m), "{m} missing from: {t}");
    }
}

#[test]
fn train_without_data_points_to_generate() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["train", "--method", "base_enet", "--out", "m.json"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("battdiag generate"), "{}", text(&o));
}

#[test]
fn train_and_evaluate_a_baseline() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(d.path(), &["generate"], &[]).status.success());
    let o = run(d.path(), &["train", "--method", "base_enet", "--fold", "2", "--out", "models/enet.json"], &[]);
    assert!(o.status.success(), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("train rows: 180\n") && t.contains("exposure: 180 rows"), "{t}");
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.path().join("models/enet.json")).unwrap()).unwrap();
    assert!(doc.is_object());

    let o = run(d.path(), &["train", "--method", "base_enet", "--fold", "5", "--out", "m.json"], &[]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(
        d.path().join("c.toml"),
        "[evaluation]\nmethods = [\"base_enet\"]\nanalyses = [\"cv\"]\nrepeats = 1\n",
    )
    .unwrap();
    let o = run(d.path(), &["evaluate", "--config", "c.toml"], &[]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("leakage free: true"), "{}", text(&o));
    let csv = std::fs::read_to_string(d.path().join("report/rmspe.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,repeat,q_cell,m_p,m_n,lii"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "base_enet");
    assert!(row[2..].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    assert!(d.path().join("report/manifest.json").is_file());
}

#[test]
fn help_lists_config_keys() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["evaluate", "--help"], &[]);
    let t = text(&o);
    assert!(t.contains("evaluation.repeats") && t.contains("dataset.aging.cells_per_group"), "{t}");
}

#[test]
fn seed_from_the_environment_changes_the_data() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(d.path(), &["generate", "--out", "a"], &[]).status.success());
    assert!(run(d.path(), &["generate", "--out", "b"], &[("BATTDIAG_SEED", "5")]).status.success());
    assert!(run(d.path(), &["generate", "--out", "c", "--seed", "5"], &[]).status.success());
    let read = |s: &str| std::fs::read(d.path().join(s).join("experimental.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
    assert_eq!(read("b"), read("c"));
    // The simulation grid has its own seed.
    let sim = |s: &str| std::fs::read(d.path().join(s).join("simulation.csv")).unwrap();
    assert_eq!(sim("a"), sim("b"));
}

#[test]
fn simulate_writes_a_curve() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["simulate", "--mode", "LLI", "--fraction", "0.2", "--out", "lli.csv"], &[]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(d.path().join("lli.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("voltage,dqdv_fresh,dqdv_degraded"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.len() >= 100);
    let area = |k: usize| rows.windows(2).map(|w| 0.5 * (w[0][k] + w[1][k]) * (w[1][0] - w[0][0])).sum::<f64>();
    assert!(area(2) < area(1));

    let o = run(d.path(), &["simulate", "--mode", "LLI", "--fraction", "1.5"], &[]);
    assert!(!o.status.success());
}

#[test]
fn fit_recovers_a_simulated_cell() {
    use battdiag::electrode::ElectrodePair;
    use battdiag::halfcell::{canonicalize, reconstruct_ocv, HalfCellParams, VoltageWindow};

    let d = tempfile::tempdir().unwrap();
    let pair = ElectrodePair::synthetic();
    let raw = HalfCellParams { m_p: 1.8, m_n: 0.9, delta_p: 20.0, delta_n: -10.0 };
    // Only the relative slippage is observable; compare in the canonical gauge.
    let truth = canonicalize(&pair, &raw, VoltageWindow::default()).unwrap();
    let curve = reconstruct_ocv(&pair, &truth, VoltageWindow::default(), 300).unwrap();
    let mut csv = String::from("q,v\n");
    for (q, v) in curve.q().iter().zip(curve.v()) {
        csv.push_str(&format!("{q},{v}\n"));
    }
    std::fs::write(d.path().join("curve.csv"), csv).unwrap();
    let o = run(d.path(), &["fit", "curve.csv", "--starts", "8"], &[]);
    assert!(o.status.success(), "{}", text(&o));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for (k, t) in [("m_p", truth.m_p), ("m_n", truth.m_n), ("delta_p", truth.delta_p), ("delta_n", truth.delta_n)] {
        let got = doc["params"][k].as_f64().unwrap();
        assert!(((got - t) / t).abs() < 0.02, "{k}: {got} vs {t}");
    }

    let o = run(d.path(), &["fit", "missing.csv"], &[]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(d.path().join("bad.csv"), "q,v\n1,abc\n").unwrap();
    let o = run(d.path(), &["fit", "bad.csv"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("line 2"), "{}", text(&o));
}
