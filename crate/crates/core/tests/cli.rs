use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
seed = 7
realizations = 4

[array]
kind = "uca"
n_antennas = 64
half_wavelength = true

[band]
fc_hz = 28e9
bandwidth_hz = 3e9
n_subcarriers = 10

[hybrid]
n_rf_chains = 2
n_ttd_per_chain = 8

[[users]]
r_m = 5.0
phi_deg = 0.0

[[users]]
r_m = 8.0
phi_deg = 40.0
"#;

fn nfuca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfuca"))
        .args(args)
        .env_remove("NFUCA_SEED")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn out(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn missing_uca_radius_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &BASE.replace("half_wavelength = true", ""));
    let o = nfuca(&["squint", "--config", &cfg, "--out", &out(dir.path(), "o")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("array.radius_m"));
}

#[test]
fn malformed_toml_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "seed = [");
    let o = nfuca(&["squint", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn squint_writes_one_column_per_subcarrier() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", BASE);
    let o_dir = dir.path().join("o");
    for axis in ["angle", "distance"] {
        let o = nfuca(&["squint", "--config", &cfg, "--out", o_dir.to_str().unwrap(), "--axis", axis, "--samples", "50"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let (header, rows) = read_csv(&o_dir.join(format!("squint_{axis}.csv")));
        assert_eq!(header.len(), 11);
        assert_eq!(rows.len(), 50);
        let side: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(o_dir.join(format!("squint_{axis}.json"))).unwrap()).unwrap();
        assert_eq!(side["array"], "uca");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(o_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "squint");
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn ula_and_uca_configs_both_run() {
    let dir = TempDir::new().unwrap();
    let ula = BASE.replace("kind = \"uca\"", "kind = \"ula\"");
    for (name, text) in [("uca.toml", BASE.to_string()), ("ula.toml", ula)] {
        let cfg = write_config(dir.path(), name, &text);
        let o_dir = out(dir.path(), &name.replace(".toml", ""));
        let o = nfuca(&["squint", "--config", &cfg, "--out", &o_dir, "--samples", "20"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ula/squint_angle.json")).unwrap()).unwrap();
    assert_eq!(side["array"], "ula");
}

fn band_min(path: &Path) -> f64 {
    let (_, rows) = read_csv(path);
    rows.iter()
        .flat_map(|r| r[2..].iter().map(|v| v.parse::<f64>().unwrap()))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn analytical_design_holds_the_band_gain() {
    let dir = TempDir::new().unwrap();
    let text = BASE
        .replace("n_antennas = 64", "n_antennas = 256")
        .replace("n_ttd_per_chain = 8", "n_ttd_per_chain = 16");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o_dir = dir.path().join("o");
    let o = nfuca(&["design", "--config", &cfg, "--out", o_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = band_min(&o_dir.join("design_analytical_gain.csv"));
    assert!(g > 0.8 && g <= 1.0 + 1e-12, "band minimum {g}");
    let design: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(o_dir.join("design_analytical.json")).unwrap()).unwrap();
    assert!(design.is_object());
}

#[test]
fn joint_design_without_delay_budget_uses_zero_delays() {
    let dir = TempDir::new().unwrap();
    let text = BASE.replace("n_ttd_per_chain = 8", "n_ttd_per_chain = 8\ntau_max_s = 0.0");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o_dir = dir.path().join("o");
    let o = nfuca(&["design", "--config", &cfg, "--out", o_dir.to_str().unwrap(), "--scheme", "joint"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let design: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(o_dir.join("design_joint.json")).unwrap()).unwrap();
    let mut n = 0;
    fn zeros(v: &serde_json::Value, key_hit: bool, n: &mut usize) {
        match v {
            serde_json::Value::Object(m) => {
                for (k, x) in m {
                    zeros(x, key_hit || k.contains("delay"), n);
                }
            }
            serde_json::Value::Array(a) => a.iter().for_each(|x| zeros(x, key_hit, n)),
            serde_json::Value::Number(x) if key_hit => {
                assert_eq!(x.as_f64().unwrap(), 0.0);
                *n += 1;
            }
            _ => {}
        }
    }
    zeros(&design, false, &mut n);
    assert!(n >= 16, "found {n} delay entries");
}

#[test]
fn joint_trace_is_monotone() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", BASE);
    let o_dir = dir.path().join("o");
    let o = nfuca(&["design", "--config", &cfg, "--out", o_dir.to_str().unwrap(), "--scheme", "joint"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&o_dir.join("design_joint_trace.csv"));
    assert_eq!(header, ["iter", "objective"]);
    let obj: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(obj.len() >= 2);
    for w in obj.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{obj:?}");
    }
}

#[test]
fn min_ttd_reports_and_rejects() {
    let o = nfuca(&["min-ttd", "--delta", "0.11", "--bandwidth-hz", "3e9", "--radius-m", "0.2181", "--distance-m", "10"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("q = 19"), "{text}");
    assert!(text.contains("epsilon = "));
    let o = nfuca(&["min-ttd", "--delta", "0.95", "--bandwidth-hz", "3e9", "--radius-m", "0.2181", "--distance-m", "10"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unknown_sweep_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", BASE);
    let o = nfuca(&["se", "--config", &cfg, "--out", &out(dir.path(), "o"), "--sweep", "wind", "--values", "1"]);
    assert_eq!(o.status.code(), Some(4));
}

const SAMPLED: &str = r#"
seed = 3
realizations = 20

[array]
kind = "uca"
n_antennas = 64
half_wavelength = true

[band]
fc_hz = 28e9
bandwidth_hz = 3e9
n_subcarriers = 10

[hybrid]
n_rf_chains = 3
n_ttd_per_chain = 8
"#;

#[test]
fn se_runs_are_reproducible_and_ordered() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SAMPLED);
    let mut csvs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "3")] {
        let o_dir = out(dir.path(), name);
        let o = nfuca(&[
            "--jobs", jobs, "se", "--config", &cfg, "--out", &o_dir, "--sweep", "snr", "--values", "15", "--seed", "99",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(fs::read(dir.path().join(name).join("se_snr.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);

    let (header, rows) = read_csv(&dir.path().join("a/se_snr.csv"));
    assert_eq!(header, ["sweep_value", "scheme", "mean_se", "std_se", "n_realizations"]);
    let se = |s: &str| -> f64 { rows.iter().find(|r| r[1] == s).unwrap()[2].parse().unwrap() };
    assert!(rows.iter().all(|r| r[4] == "20"));
    let (ps, an, jo, fd) = (se("ps_only"), se("analytical"), se("joint"), se("fully_digital"));
    assert!(fd >= an && fd >= jo, "{ps} {an} {jo} {fd}");
    assert!(an >= ps && jo >= ps, "{ps} {an} {jo} {fd}");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn environment_seed_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SAMPLED);
    let run = |name: &str, env: Option<&str>| {
        let o_dir = out(dir.path(), name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_nfuca"));
        cmd.args(["se", "--config", &cfg, "--out", &o_dir, "--sweep", "snr", "--values", "5", "--schemes", "ps_only", "--realizations", "3"]);
        cmd.env_remove("NFUCA_SEED");
        if let Some(v) = env {
            cmd.env("NFUCA_SEED", v);
        }
        assert!(cmd.output().unwrap().status.success());
        fs::read_to_string(dir.path().join(name).join("se_snr.csv")).unwrap()
    };
    let base = run("a", None);
    let env = run("b", Some("12345"));
    assert_ne!(base, env);
    assert_eq!(env, run("c", Some("12345")));
}
