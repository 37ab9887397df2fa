use std::process::{Command, Output};

fn qchan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qchan")).args(args).output().expect("spawn qchan")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn dp_half_weights() {
    let o = qchan(&["decompose", "--kind", "dp", "--lambda", "0.5"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let w: Vec<f64> = v["decomposition"].as_array().unwrap().iter().map(|t| t["weight"].as_f64().unwrap()).collect();
    let want = [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
    assert_eq!(w.len(), 4);
    for (a, b) in w.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{w:?}");
    }
    assert!((v["overhead"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn out_of_range_is_config_error() {
    let o = qchan(&["channel", "--kind", "dp", "--lambda", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
    let o = qchan(&["channel", "--kind", "gad", "--lambda", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
    let o = qchan(&["sweep", "--kind", "trig"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qchan(&["decompose", "--kind", "dp", "--lambda", "0.2", "--dt", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("report.json");
    let o = qchan(&["channel", "--kind", "dp", "--lambda", "0.5", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sweep_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = qchan(&["sweep", "--kind", "gad", "--gamma", "0.5", "--steps", "11", "--seed", "42", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn pure_damping_keeps_entanglement() {
    let o = qchan(&["sweep", "--kind", "gad", "--gamma", "0", "--steps", "11", "--seed", "7", "--source", "ideal"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "conc_theory").unwrap();
    let lcol = header.iter().position(|h| *h == "lambda").unwrap();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let lambda: f64 = f[lcol].parse().unwrap();
        let conc: f64 = f[col].parse().unwrap();
        if lambda < 1.0 {
            assert!(conc > 0.0, "{line}");
        }
    }
}

#[test]
fn tomo_reports_metrics() {
    let o = qchan(&["tomo", "--kind", "gad", "--lambda", "0.3", "--gamma", "0.5", "--seed", "1", "--noiseless", "--source", "ideal"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["metrics"]["fidelity_to_theory"].as_f64().unwrap() > 0.999);
}

#[test]
fn missing_seed_is_reported() {
    let o = qchan(&["sweep", "--kind", "dp", "--steps", "3", "--noiseless"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed: "));
}
