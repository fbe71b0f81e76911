use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spekit::scenario::{Product, Scenario};

fn spekit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spekit")).arg("--out-dir").arg(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenario(dir: &Path, name: &str, s: &Scenario) -> String {
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, s.to_toml_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spekit(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&spekit(dir.path(), &["run"])), 1);
    assert_eq!(code(&spekit(dir.path(), &["--help"])), 0);
    let o = spekit(dir.path(), &["run", "no-such-scenario"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no-such-scenario"));
    assert_eq!(code(&spekit(dir.path(), &["presets", "nope"])), 1);
}

#[test]
fn invalid_scenario_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = Scenario::load("fig2f").unwrap().to_toml_string().replace("efficiency = ", "efficiency = -");
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let o = spekit(dir.path(), &["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("detector.efficiency"), "{}", stderr(&o));
}

#[test]
fn presets_are_listed_and_printed() {
    let dir = tempfile::tempdir().unwrap();
    let list = stdout(&spekit(dir.path(), &["presets"]));
    for name in ["fig2e", "fig2f", "fig3b-sweep", "fig3c", "fig3d", "fig4f"] {
        assert!(list.lines().any(|l| l == name), "{list}");
    }
    assert!(stdout(&spekit(dir.path(), &["presets", "fig4f"])).contains("[spin]"));
}

#[test]
fn run_preset_and_rerun_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    assert_eq!(code(&spekit(&first, &["run", "fig2f"])), 0);
    let manifest = first.join("manifest.json");
    assert_eq!(code(&spekit(&second, &["run", manifest.to_str().unwrap()])), 0);
    for entry in fs::read_dir(&first).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(first.join(&name)).unwrap(), fs::read(second.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn empty_outputs_write_only_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::load("fig2f").unwrap();
    s.outputs.clear();
    let path = write_scenario(dir.path(), "empty", &s);
    let out = dir.path().join("out");
    assert_eq!(code(&spekit(&out, &["run", &path])), 0);
    let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec!["manifest.json"]);
}

#[test]
fn failed_product_exits_2_with_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::load("fig3c").unwrap();
    s.acquisition.duration_ps = 1_000;
    let path = write_scenario(dir.path(), "tiny", &s);
    let out = dir.path().join("out");
    let o = spekit(&out, &["run", &path]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["complete"], false);
    assert!(!m["errors"].as_array().unwrap().is_empty());
    assert!(out.join("coupled_g2.csv").exists(), "products that succeeded are kept");
}

#[test]
fn simulate_correlate_fit() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::load("fig3c").unwrap();
    s.acquisition.duration_ps = 200_000_000;
    s.outputs = vec![Product::Summary];
    let path = write_scenario(dir.path(), "short", &s);
    let out = dir.path().join("out");
    assert_eq!(code(&spekit(&out, &["--seed", "9", "simulate", &path])), 0);
    let ch0 = out.join("coupled_streams_ch0.ptsm");
    let ch1 = out.join("coupled_streams_ch1.ptsm");
    let o = spekit(&out, &["correlate", ch0.to_str().unwrap(), ch1.to_str().unwrap(), "--window", "20000", "--bin-width", "50"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("g2(0) = "));
    let o = spekit(&out, &["fit", "g2", out.join("g2.csv").to_str().unwrap()]);
    assert!([0, 2].contains(&code(&o)), "{}", stderr(&o));
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("g2_fit.json")).unwrap()).unwrap();
    assert_eq!(fit["model"], "g2");

    let o = spekit(&out, &["--format", "json", "correlate", ch0.to_str().unwrap(), "--period", "12500", "--bin-width", "25"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("decay.json").exists());
    assert_eq!(code(&spekit(&out, &["correlate", ch0.to_str().unwrap()])), 1);
}

#[test]
fn fit_saturation_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (1..=12).map(|i| {
        let p = i as f64;
        format!("{p},{}\n", 2e5 * p / (p + 1.3))
    }).collect();
    let path = dir.path().join("sat.csv");
    fs::write(&path, format!("power_mw,rate_cts_s\n{rows}")).unwrap();
    let o = spekit(dir.path(), &["fit", "saturation", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let p_sat = fit["params"].as_array().unwrap().iter().find(|p| p["name"] == "p_sat").unwrap()["value"].as_f64().unwrap();
    assert!((p_sat - 1.3).abs() < 1e-6);
    fs::write(&path, "power_mw,rate_cts_s\n1,2\n").unwrap();
    assert_eq!(code(&spekit(dir.path(), &["fit", "saturation", path.to_str().unwrap()])), 1);
}

#[test]
fn sensitivity_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = spekit(dir.path(), &["odmr", "--delta-nu-mhz", "110", "--contrast", "0.023", "--rate", "1.88e5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("eta = 303.3"), "{}", stdout(&o));
    assert_eq!(code(&spekit(dir.path(), &["odmr", "--delta-nu-mhz", "110", "--contrast=-1", "--rate", "1e5"])), 1);
    assert_eq!(code(&spekit(dir.path(), &["odmr", "fig2f"])), 1);
}

#[test]
fn sweep_from_preset_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = spekit(dir.path(), &["sweep", "fig3b-sweep"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("value,variant,"));
    assert_eq!(csv.lines().count(), 1 + 2 * 20);
    let o = spekit(dir.path(), &["sweep", "fig2f", "--param", "emitter.nope", "--values", "1,2"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
