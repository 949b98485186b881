use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn semispin(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_semispin"));
    c.args(args).env("RUST_LOG", "warn").env_remove("SEMISPIN_OUT");
    if let Some(p) = out_env {
        c.env("SEMISPIN_OUT", p);
    }
    c.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn simulate_writes_per_engine_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let o = semispin(
        &[
            "simulate", "stern-gerlach", "--engines", "mcwf,tdse", "--seed", "42", "--n-atoms", "40",
            "--t-final-s", "4e-5", "--out", out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&out.join("trajectories.csv")), "t_s,engine,mean_z_up_m,std_z_up_m,mean_z_down_m,std_z_down_m");
    assert_eq!(header(&out.join("populations.csv")), "t_s,engine,n_up,n_down");
    assert_eq!(header(&out.join("density.csv")), "t_s,engine,label,bin_left_m,bin_right_m,count_or_probability");
    let pops = semispin::output::read_populations(&out.join("populations.csv")).unwrap();
    let engines: Vec<&str> = pops.iter().map(|r| r.engine.as_str()).collect();
    assert!(engines.contains(&"mcwf") && engines.contains(&"tdse") && !engines.contains(&"ehrenfest"));
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("trajectories.csv.json")).unwrap()).unwrap();
    assert_eq!(side["seed"], 42);
    assert_eq!(side["config"]["n_atoms"], 40);
    assert!(out.join("mcwf.json").exists() && out.join("tdse.json").exists());
}

#[test]
fn config_file_overrides_preset_and_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"z0_m": 5e-6, "n_atoms": 7, "seed": 3, "engines": ["mcwf"], "t_final_s": 2e-5, "formats": ["csv"]}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = semispin(
        &["simulate", "custom", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("populations.csv.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["n_atoms"], 7);
    assert_eq!(side["config"]["z0_m"], 5e-6);
    assert_eq!(side["seed"], 9);
    assert!(!out.join("mcwf.json").exists());
    let rows = semispin::output::read_trajectories(&out.join("trajectories.csv")).unwrap();
    assert!(rows.iter().all(|r| r.engine == "mcwf"));
}

#[test]
fn non_increasing_bx_list_fails_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = semispin(&["sweep", "--bx-list-tesla", "2e-7,1e-7", "--out", dir.path().to_str().unwrap()], None);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bx_list_tesla"), "{}", stderr(&o));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = semispin(&["simulate", "stern"], Some(dir.path()));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown scenario"), "{}", stderr(&o));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"bx": 1e-7}"#).unwrap();
    let o = semispin(&["simulate", "custom", "--config", bad.to_str().unwrap()], Some(dir.path()));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("invalid config file"), "{}", stderr(&o));
    let o = semispin(&["simulate", "stern-gerlach", "--engines", "rk4"], Some(dir.path()));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("rk4"), "{}", stderr(&o));
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let o = semispin(
        &["simulate", "custom", "--n-atoms", "2", "--t-final-s", "1e-5", "--engines", "mcwf", "--out", file.join("sub").to_str().unwrap()],
        None,
    );
    assert!(!o.status.success());
}

#[test]
fn sweep_writes_one_row_per_field_and_engine() {
    let dir = tempfile::tempdir().unwrap();
    let o = semispin(
        &["sweep", "--bx-list-tesla", "5e-8,1e-7", "--engines", "mcwf,ehrenfest", "--n-atoms", "20", "--format", "csv"],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = semispin::output::read_sweep(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].bx, 5e-8);
    assert_eq!(rows[3].bx, 1e-7);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.flip_probability)));
}

#[test]
fn tau_table_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = semispin(&["tau-table", "--points", "5"], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("tau_table.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "sigma_m,eta,tau_pos_s,tau_vel_s,tau_approx_s,tau_exact_s");
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!(r[4] <= r[2].min(r[3]) * (1.0 + 1e-12));
        assert!((r[5] / r[4] - 1.0).abs() < 0.5);
    }
}
