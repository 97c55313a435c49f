use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_adiabatics"));
    c.env_remove("ADIABATICS_OUTPUT_ROOT").env_remove("RUST_LOG");
    c
}

fn write_spec(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(spec: &Path, out: &Path) -> Output {
    bin().args(["run", "--quiet", "--spec"]).arg(spec).arg("--out").arg(out).output().unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn csv(out: &Path, name: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(out.join(name)).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

const SPIN_HALF_GRID: &str = r#"
[model]
kind = "spin"
twice_s = 1
profile = { kind = "sphere", gb = 1.0 }

[task]
kind = "geometry-grid"
axes = [{ start = 0.4, end = 1.2, points = 5 }, { start = 0.0, end = 1.0, points = 3 }]

[numeric]
mass = 10.0
"#;

#[test]
fn geometry_grid_writes_expected_columns_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "grid.toml", SPIN_HALF_GRID);
    let out = tmp.path().join("out");
    let o = run(&spec, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let (header, rows) = csv(&out, "geometry.csv");
    let expected = "X_0,X_1,E_n,A_0,A_1,g_00,g_01,g_10,g_11,F_00,F_01,F_10,F_11,I_ind_00,I_ind_01,I_ind_10,I_ind_11,Phi,Phi_tilde";
    assert_eq!(header.join(","), expected);
    assert_eq!(rows.len(), 15);
    // spin-1/2 on the sphere: g_theta_theta = 1/4, g_phi_phi = sin^2(theta)/4
    let theta = col(&header, &rows, "X_0");
    for (t, (gtt, gpp)) in theta.iter().zip(col(&header, &rows, "g_00").iter().zip(col(&header, &rows, "g_11"))) {
        assert!((gtt - 0.25).abs() < 1e-12);
        assert!((gpp - t.sin().powi(2) / 4.0).abs() < 1e-12);
    }
    for (phi, phi_t) in col(&header, &rows, "Phi").iter().zip(col(&header, &rows, "Phi_tilde")) {
        assert!(phi_t > 0.0 && phi_t <= *phi);
    }

    let m = manifest(&out);
    assert_eq!(m["task"], "geometry-grid");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["spec_sha256"].as_str().unwrap().len(), 64);
    assert!(m["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["resolved_spec"]["numeric"]["hbar"], 1.0);
    assert_eq!(m["resolved_spec"]["numeric"]["dt"], 0.01);
    assert_eq!(m["resolved_spec"]["output"]["stride"], 1);
    assert!(m["resolved_spec"]["numeric"]["threads"].as_u64().unwrap() >= 1);
    assert_eq!(m["files"][0]["file"], "geometry.csv");
}

#[test]
fn reruns_are_byte_identical_regardless_of_threads() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "grid.toml", SPIN_HALF_GRID);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&spec, &a).status.success());
    let o = bin().args(["run", "--quiet", "--threads", "1", "--spec"]).arg(&spec).arg("--out").arg(&b).output().unwrap();
    assert!(o.status.success());
    let first = std::fs::read(a.join("geometry.csv")).unwrap();
    assert_eq!(first, std::fs::read(b.join("geometry.csv")).unwrap());
    // overwriting in place leaves no stray temporary files
    assert!(run(&spec, &a).status.success());
    assert_eq!(first, std::fs::read(a.join("geometry.csv")).unwrap());
    assert_eq!(std::fs::read_dir(&a).unwrap().count(), 2);
}

#[test]
fn velocity_sweep_reproduces_induced_inertia_limit() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "sweep.toml",
        r#"
[model]
kind = "spin"
twice_s = 2
profile = { kind = "planar-rotation", gb = 1.0, rates = [1.0] }

[task]
kind = "velocity-sweep"
origin = [0.0]
direction = [1.0]
speeds = [0.2, 0.1, 0.05, 0.025]
duration = 300.0

[numeric]
dt = 0.02

[output]
stride = 5
"#,
    );
    let out = tmp.path().join("out");
    let o = run(&spec, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    let ratio = m["summary"]["slowest_ratio"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
    assert!((m["summary"]["log_slope"].as_f64().unwrap() - 2.0).abs() < 0.05);
    assert!((m["summary"]["directional_induced_inertia"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let (header, rows) = csv(&out, "sweep.csv");
    assert_eq!(header, ["speed", "mean_shift", "ratio", "final_leakage"]);
    assert_eq!(rows.len(), 4);
}

#[test]
fn leakage_scan_follows_landau_zener() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "lz.toml",
        r#"
[model]
kind = "avoided-crossing"
delta = 1.0

[task]
kind = "leakage-scan"
start = [-10.0]
end = [10.0]
rates = [0.35, 0.5, 0.7, 1.0]

[numeric]
dt = 0.004

[output]
stride = 10
"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&spec, &out).status.success());
    let (header, rows) = csv(&out, "leakage.csv");
    for (rate, p) in col(&header, &rows, "rate").iter().zip(col(&header, &rows, "final_leakage")) {
        let lz = (-std::f64::consts::PI / rate).exp();
        assert!((p / lz - 1.0).abs() < 0.1, "rate {rate}: {p} vs {lz}");
    }
    assert!(manifest(&out)["summary"]["correlation"].as_f64().unwrap() < -0.999);
}

#[test]
fn trk_inglis_crossing_audit_and_trajectory_tasks_run() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (
            "trk",
            r#"
[model]
kind = "moving-well"
n_points = 161
spacing = 0.1
well = { kind = "harmonic", k = 1.0 }
[task]
kind = "trk"
"#,
        ),
        (
            "inglis",
            r#"
[model]
kind = "cranked-oscillator"
omega_z = 1.0
n_occupied = 3
[task]
kind = "inglis"
"#,
        ),
        (
            "crossing",
            r#"
[model]
kind = "two-level"
offset = [0.0, 0.0, 0.0]
jacobian = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
[task]
kind = "crossing-scan"
centre = [0.0, 0.0, 0.0]
direction = [0.3, 0.4, 0.5]
r_min = 0.01
r_max = 0.1
"#,
        ),
        (
            "audit",
            r#"
[model]
kind = "two-level"
offset = [0.0, 0.0, 1.0]
jacobian = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
[task]
kind = "order-audit"
centre = [0.0, 0.0]
speeds = [0.01, 0.02, 0.04]
periods = [1.0, 2.0, 4.0]
[numeric]
mass = 50.0
"#,
        ),
        (
            "trajectory",
            r#"
[model]
kind = "spin"
twice_s = 1
profile = { kind = "linear", offset = [0.0, 0.0, 1.0], jacobian = [[1.0, 0.0, 0.0]] }
[task]
kind = "trajectory"
start = [-2.0]
velocity = [0.2]
duration = 20.0
[numeric]
mass = 50.0
[output]
stride = 10
"#,
        ),
    ];
    let mut results = std::collections::HashMap::new();
    for (name, text) in cases {
        let spec = write_spec(tmp.path(), &format!("{name}.toml"), text);
        let out = tmp.path().join(name);
        let o = run(&spec, &out);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        results.insert(name, (manifest(&out), out));
    }

    let (trk, out) = &results["trk"];
    let (header, rows) = csv(out, "trk.csv");
    assert_eq!(rows.len(), 2);
    assert!((col(&header, &rows, "trk_sum")[0] - 1.0).abs() < 0.01);
    assert!(trk["summary"]["trk_error_reduction"].as_f64().unwrap() >= 3.0);

    let ratio = results["inglis"].0["summary"]["ratio"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 0.02, "{ratio}");

    let s = &results["crossing"].0["summary"];
    for (key, p) in [("sqrt_tr_g_fit", -1.0), ("Phi_fit", -2.0), ("I_ind_norm_fit", -3.0)] {
        assert!((s[key]["exponent"].as_f64().unwrap() - p).abs() < 0.05, "{key}");
    }

    let s = &results["audit"].0["summary"];
    assert!((s["berry_exponents"]["speed"].as_f64().unwrap() - 2.0).abs() < 0.05);
    assert!((s["scalar_exponents"]["period"].as_f64().unwrap() - 1.0).abs() < 0.05);

    let (traj, out) = &results["trajectory"];
    assert!(traj["summary"]["max_position_deviation"].as_f64().unwrap() < 0.05);
    assert!(traj["summary"]["effective_energy_drift"].as_f64().unwrap() < 1e-6);
    let (header, _) = csv(out, "coupled.csv");
    assert_eq!(header, ["t", "X_0", "P_0", "energy", "leakage"]);
    assert!(out.join("effective.csv").exists());
}

#[test]
fn validate_echoes_resolved_defaults() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "grid.toml", SPIN_HALF_GRID);
    let o = bin().args(["validate", "--spec"]).arg(&spec).output().unwrap();
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("OK"));
    for key in ["hbar = 1.0", "gap_tol_rel", "step_limit", "fd_step", "stride = 1", "fail_fast = false"] {
        assert!(stdout.contains(key), "missing {key} in\n{stdout}");
    }
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 1, "validate must not write results");
}

#[test]
fn validate_names_the_dt_rule() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "lz.toml",
        r#"
[model]
kind = "avoided-crossing"
delta = 1.0
[task]
kind = "leakage-scan"
start = [-10.0]
end = [10.0]
rates = [1.0]
[numeric]
dt = 0.5
"#,
    );
    let o = bin().args(["validate", "--spec"]).arg(&spec).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("dt * spectral range / hbar") && stderr.contains("step_limit"), "{stderr}");
}

#[test]
fn schema_errors_exit_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let unknown_kind = write_spec(tmp.path(), "a.toml", &SPIN_HALF_GRID.replace("kind = \"spin\"", "kind = \"rotor\""));
    let o = bin().args(["validate", "--spec"]).arg(&unknown_kind).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("supported model kinds") && stderr.contains("moving-well"), "{stderr}");

    let unknown_key = write_spec(tmp.path(), "b.toml", &format!("{SPIN_HALF_GRID}\nmystery = 1\n"));
    let out = tmp.path().join("out");
    assert_eq!(run(&unknown_key, &out).status.code(), Some(2));
    assert!(!out.exists());

    let wrong_dim = write_spec(tmp.path(), "c.toml", &SPIN_HALF_GRID.replace(", { start = 0.0, end = 1.0, points = 3 }", ""));
    assert_eq!(run(&wrong_dim, &out).status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_with_code_3_and_report_points() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "cone.toml",
        r#"
[model]
kind = "two-level"
offset = [0.0, 0.0, 0.0]
jacobian = [[0.0, 0.0, 1.0]]
[task]
kind = "geometry-grid"
axes = [{ start = -1.0, end = 1.0, points = 5 }]
"#,
    );
    let out = tmp.path().join("out");
    let o = run(&spec, &out);
    assert_eq!(o.status.code(), Some(3));
    let (_, failed) = csv(&out, "failures.csv");
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0][0], "0.0");
    assert!(failed[0][1].contains("degenerate"));
    let (_, rows) = csv(&out, "geometry.csv");
    assert_eq!(rows.len(), 4);
    let m = manifest(&out);
    assert_eq!(m["status"], "partial");
    assert_eq!(m["failures"], 1);
}

#[test]
fn unwritable_output_exits_with_code_4() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "grid.toml", SPIN_HALF_GRID);
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&spec, &blocker.join("out"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "grid.toml", SPIN_HALF_GRID);
    let root = tmp.path().join("root");
    let o = bin().env("ADIABATICS_OUTPUT_ROOT", &root).args(["run", "--quiet", "--spec"]).arg(&spec).output().unwrap();
    assert!(o.status.success());
    assert!(root.join("grid").join("geometry.csv").exists());
}

#[test]
fn list_models_names_every_kind() {
    let o = bin().arg("list-models").output().unwrap();
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    for kind in ["spin", "two-level", "avoided-crossing", "moving-well", "cranked-oscillator", "random"] {
        assert!(stdout.lines().any(|l| l.starts_with(kind)), "{kind}");
    }
}
