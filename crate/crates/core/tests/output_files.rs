use semispin::engine::EngineRegistry;
use semispin::output::{
    density_rows, population_rows, read_density, read_populations, read_run_json, read_sweep, read_trajectories,
    trajectory_rows, write_run_csvs, write_run_json, write_sweep_csv, SweepRow,
};
use semispin::scenario::{run_engines, ScenarioConfig};

fn small_sg() -> ScenarioConfig {
    ScenarioConfig { n_atoms: 60, t_final_s: 6e-5, histogram_every: 1, seed: 17, ..ScenarioConfig::stern_gerlach() }
}

#[test]
fn csv_and_json_read_back_exactly() {
    let cfg = small_sg();
    let runs = run_engines(&cfg, &EngineRegistry::with_defaults()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_csvs(dir.path(), &runs, &cfg).unwrap();
    write_run_json(dir.path(), &runs, &cfg).unwrap();

    let traj: Vec<_> = runs.iter().flat_map(trajectory_rows).collect();
    let pops: Vec<_> = runs.iter().flat_map(population_rows).collect();
    let dens: Vec<_> = runs.iter().flat_map(density_rows).collect();
    assert_eq!(read_trajectories(&dir.path().join("trajectories.csv")).unwrap(), traj);
    assert_eq!(read_populations(&dir.path().join("populations.csv")).unwrap(), pops);
    assert_eq!(read_density(&dir.path().join("density.csv")).unwrap(), dens);
    for ts in &runs {
        assert_eq!(&read_run_json(&dir.path().join(format!("{}.json", ts.engine))).unwrap(), ts);
    }
}

#[test]
fn density_mass_matches_population() {
    let cfg = small_sg();
    let runs = run_engines(&cfg, &EngineRegistry::with_defaults()).unwrap();
    for ts in &runs {
        let scale = if ts.engine == "tdse" { 1.0 } else { cfg.n_atoms as f64 };
        for s in &ts.snapshots {
            let h = s.histograms.as_ref().unwrap();
            for k in 0..2 {
                let mass: f64 = h[k].counts.iter().sum();
                assert!((mass / scale - s.populations[k]).abs() < 1e-5, "{} t={} k={k}", ts.engine, s.t);
            }
        }
    }
}

#[test]
fn sweep_csv_reads_back() {
    let rows = [
        SweepRow { bx: 2e-8, engine: "mcwf", flip_probability: 0.9985, stat_error: 8.65e-4 },
        SweepRow { bx: 3e-7, engine: "tdse", flip_probability: 1.0 / 3.0, stat_error: 0.0 },
    ];
    let dir = tempfile::tempdir().unwrap();
    let p = write_sweep_csv(dir.path(), &rows, &ScenarioConfig::bx_sweep()).unwrap();
    let back = read_sweep(&p).unwrap();
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!((a.bx, a.engine, a.flip_probability, a.stat_error), (b.bx, b.engine.as_str(), b.flip_probability, b.stat_error));
    }
    assert!(dir.path().join("sweep.csv.json").exists());
}
