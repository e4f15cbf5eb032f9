use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn nvsim(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nvsim"));
    cmd.args(args).current_dir(dir).env_remove("NVSIM_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("nvsim runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(dir: &Path, text: &str) -> Output {
    let p = write_config(dir, "config.json", text);
    nvsim(&["run", p.to_str().unwrap()], dir, &[])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn quantity(csv: &str, key: &str) -> f64 {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("{key} missing in {csv}"))
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn purcell_from_lifetimes() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), r#"{"experiment":"purcell","parameters":{"tau0":18.5,"tau":11.6},"output":"p"}"#);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.path().join("p.csv")).unwrap();
    assert!((quantity(&csv, "purcell") - 0.595).abs() < 5e-4);
    assert_eq!(quantity(&csv, "negative"), 0.0);
}

#[test]
fn levels_table() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), r#"{"experiment":"levels","output":"lv"}"#);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.path().join("lv.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    let energy = |label: &str| -> f64 { rows.iter().find(|r| r[2] == label).unwrap()[1].parse().unwrap() };
    assert!((energy("A2") - energy("A1") - 3100.0).abs() < 1e-6);
    let energies: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(energies.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn unknown_key_leaves_no_files() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), r#"{"experiment":"cpt","seed":1,"parameters":{"r_aa":0.3},"output":"x"}"#);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("r_aa: unknown key"), "{}", stderr(&o));
    assert_eq!(files(d.path()), vec!["config.json"]);
}

#[test]
fn validate_reports_key_paths() {
    let d = tempfile::tempdir().unwrap();
    let empty = write_config(d.path(), "empty.json", "");
    let o = nvsim(&["validate", empty.to_str().unwrap()], d.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).trim(), "experiment: missing");

    let eta = write_config(d.path(), "eta.json", r#"{"experiment":"cpt","seed":1,"parameters":{"eta":-1}}"#);
    let o = nvsim(&["validate", eta.to_str().unwrap()], d.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("eta: must be > 0"), "{}", stderr(&o));

    let ok = write_config(d.path(), "ok.json", r#"{"experiment":"cpt","seed":1}"#);
    let o = nvsim(&["validate", ok.to_str().unwrap()], d.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["parameters"]["hyperfine_gs"], 2.2);
    assert_eq!(v["seed"], 1);
}

#[test]
fn meta_echoes_the_resolved_config() {
    let d = tempfile::tempdir().unwrap();
    let text = r#"{"experiment":"cpt","seed":8,"parameters":{"r_a":0.3,"b_scan":{"start":-1,"stop":1,"step":0.05}},"output":"c"}"#;
    let cfg = write_config(d.path(), "c.json", text);
    let v = nvsim(&["validate", cfg.to_str().unwrap()], d.path(), &[]);
    let resolved: Value = serde_json::from_slice(&v.stdout).unwrap();
    let o = nvsim(&["run", cfg.to_str().unwrap()], d.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("c.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["parameters"], resolved["parameters"]);
    assert_eq!(meta["seed"], 8);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert!(meta["parameters"]["model"]["rates"]["excited_lifetime"].is_number());
    assert!(meta["derived"]["eta"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(d.path().join("c.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 41);
    assert!(!csv.contains('\r'));
}

#[test]
fn json_format() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), r#"{"experiment":"collect","format":"json","output":"c"}"#);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(files(d.path()), vec!["c.json", "c.meta.json", "config.json"]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("c.json")).unwrap()).unwrap();
    assert!((v["collection_efficiency"].as_f64().unwrap() - 0.0588).abs() < 5e-4);
}

#[test]
fn seeds_matter_and_threads_do_not() {
    let d = tempfile::tempdir().unwrap();
    let cfg = |seed: u64, out: &str| {
        format!(
            r#"{{"experiment":"ple","seed":{seed},"output":"{out}","parameters":{{"axis":{{"start":-10,"stop":10,"step":1}},"n_scans":4}}}}"#
        )
    };
    let p = write_config(d.path(), "a.json", &cfg(1, "a"));
    assert!(nvsim(&["run", p.to_str().unwrap()], d.path(), &[("NVSIM_THREADS", "1")]).status.success());
    let p = write_config(d.path(), "b.json", &cfg(1, "b"));
    assert!(nvsim(&["run", p.to_str().unwrap()], d.path(), &[("NVSIM_THREADS", "3")]).status.success());
    let p = write_config(d.path(), "c.json", &cfg(2, "c"));
    assert!(nvsim(&["run", p.to_str().unwrap()], d.path(), &[]).status.success());
    let read = |n: &str| std::fs::read(d.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));

    let o = nvsim(&["run", p.to_str().unwrap()], d.path(), &[("NVSIM_THREADS", "0")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("NVSIM_THREADS:"));
}

fn lorentzian_csv(amplitude: f64) -> String {
    let mut s = String::from("axis,counts\n");
    for k in 0..=80 {
        let x = -20.0 + 0.5 * k as f64;
        let y = 5.0 + amplitude / (1.0 + ((x - 1.5) / 3.0).powi(2));
        s.push_str(&format!("{x},{y}\n"));
    }
    s
}

#[test]
fn fit_recovers_a_line() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("line.csv"), lorentzian_csv(40.0)).unwrap();
    let o = run(d.path(), r#"{"experiment":"fit","parameters":{"input":"line.csv","y_column":"counts"},"output":"f"}"#);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.path().join("f.csv")).unwrap();
    let get = |k: &str| -> f64 {
        csv.lines().find_map(|l| l.strip_prefix(&format!("{k},"))).unwrap().split(',').next().unwrap().parse().unwrap()
    };
    assert!((get("center") - 1.5).abs() < 1e-6);
    assert!((get("fwhm") - 6.0).abs() < 1e-6);
    assert!((get("offset") - 5.0).abs() < 1e-6);
}

#[test]
fn fit_failure_is_numerical() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("flat.csv"), lorentzian_csv(0.0)).unwrap();
    let o = run(d.path(), r#"{"experiment":"fit","parameters":{"input":"flat.csv","y_column":"counts"},"output":"f"}"#);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("did not converge"));
    assert_eq!(files(d.path()), vec!["config.json", "flat.csv"]);
}

#[test]
fn missing_column_names_the_key() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("line.csv"), lorentzian_csv(1.0)).unwrap();
    let o = run(d.path(), r#"{"experiment":"fit","parameters":{"input":"line.csv"},"output":"f"}"#);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("y_column:"), "{}", stderr(&o));
}

#[test]
fn stochastic_runs_need_a_seed() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), r#"{"experiment":"entangle"}"#);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed: missing"));
}
