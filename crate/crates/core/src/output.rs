//! CSV and JSON result files.
//!
//! Floats are written as `{:.16e}` (17 significant digits) so a file read
//! back reproduces the in-memory values exactly; absent values are empty
//! fields. Every file is written to a temporary sibling and renamed into
//! place, and gets a `<file>.json` sidecar holding the resolved config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::TimeSeries;
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

pub const TRAJECTORIES_COLUMNS: [&str; 6] =
    ["t_s", "engine", "mean_z_up_m", "std_z_up_m", "mean_z_down_m", "std_z_down_m"];
pub const POPULATIONS_COLUMNS: [&str; 4] = ["t_s", "engine", "n_up", "n_down"];
pub const DENSITY_COLUMNS: [&str; 6] = ["t_s", "engine", "label", "bin_left_m", "bin_right_m", "count_or_probability"];
pub const SWEEP_COLUMNS: [&str; 4] = ["bx_tesla", "engine", "flip_probability", "stat_error"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub engine: String,
    pub mean_up: Option<f64>,
    pub std_up: Option<f64>,
    pub mean_down: Option<f64>,
    pub std_down: Option<f64>,
}

/// Population fractions of the two branches.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationRow {
    pub t: f64,
    pub engine: String,
    pub up: f64,
    pub down: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub t: f64,
    pub engine: String,
    pub label: String,
    pub left: f64,
    pub right: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bx: f64,
    pub engine: &'static str,
    pub flip_probability: f64,
    pub stat_error: f64,
}

/// Sweep row as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub bx: f64,
    pub engine: String,
    pub flip_probability: f64,
    pub stat_error: f64,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    file: &'a str,
    columns: &'a [&'a str],
    seed: u64,
    config: &'a ScenarioConfig,
    version: &'static str,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn trajectory_rows(ts: &TimeSeries) -> Vec<TrajectoryRow> {
    ts.snapshots
        .iter()
        .map(|s| TrajectoryRow {
            t: s.t,
            engine: ts.engine.clone(),
            mean_up: s.branches[0].mean,
            std_up: s.branches[0].std,
            mean_down: s.branches[1].mean,
            std_down: s.branches[1].std,
        })
        .collect()
}

pub fn population_rows(ts: &TimeSeries) -> Vec<PopulationRow> {
    ts.snapshots
        .iter()
        .map(|s| PopulationRow { t: s.t, engine: ts.engine.clone(), up: s.populations[0], down: s.populations[1] })
        .collect()
}

/// Histogram bins; particle engines give weighted counts, the TDSE probabilities.
pub fn density_rows(ts: &TimeSeries) -> Vec<DensityRow> {
    let mut out = Vec::new();
    for s in &ts.snapshots {
        let Some(hs) = &s.histograms else { continue };
        for (label, h) in ["up", "down"].into_iter().zip(hs) {
            for (i, c) in h.counts.iter().enumerate() {
                out.push(DensityRow {
                    t: s.t,
                    engine: ts.engine.clone(),
                    label: label.to_string(),
                    left: h.edges[i],
                    right: h.edges[i + 1],
                    value: *c,
                });
            }
        }
    }
    out
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_bytes(columns: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes one CSV plus its sidecar.
fn emit(dir: &Path, name: &str, columns: &[&str], rows: impl Iterator<Item = Vec<String>>, cfg: &ScenarioConfig) -> Result<PathBuf> {
    let path = dir.join(name);
    write_atomic(&path, &csv_bytes(columns, rows)?)?;
    let side = Sidecar { file: name, columns, seed: cfg.seed, config: cfg, version: env!("CARGO_PKG_VERSION") };
    write_atomic(&dir.join(format!("{name}.json")), &serde_json::to_vec_pretty(&side)?)?;
    Ok(path)
}

/// Writes trajectories, populations and density CSVs for a set of runs.
pub fn write_run_csvs(dir: &Path, runs: &[TimeSeries], cfg: &ScenarioConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let traj = runs.iter().flat_map(trajectory_rows).map(|r| {
        vec![fmt_f64(r.t), r.engine, fmt_opt(r.mean_up), fmt_opt(r.std_up), fmt_opt(r.mean_down), fmt_opt(r.std_down)]
    });
    let pops = runs.iter().flat_map(population_rows).map(|r| vec![fmt_f64(r.t), r.engine, fmt_f64(r.up), fmt_f64(r.down)]);
    let dens = runs.iter().flat_map(density_rows).map(|r| {
        vec![fmt_f64(r.t), r.engine, r.label, fmt_f64(r.left), fmt_f64(r.right), fmt_f64(r.value)]
    });
    Ok(vec![
        emit(dir, "trajectories.csv", &TRAJECTORIES_COLUMNS, traj, cfg)?,
        emit(dir, "populations.csv", &POPULATIONS_COLUMNS, pops, cfg)?,
        emit(dir, "density.csv", &DENSITY_COLUMNS, dens, cfg)?,
    ])
}

pub fn write_sweep_csv(dir: &Path, rows: &[SweepRow], cfg: &ScenarioConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let it = rows
        .iter()
        .map(|r| vec![fmt_f64(r.bx), r.engine.to_string(), fmt_f64(r.flip_probability), fmt_f64(r.stat_error)]);
    emit(dir, "sweep.csv", &SWEEP_COLUMNS, it, cfg)
}

/// Full time series per engine as `<engine>.json`.
pub fn write_run_json(dir: &Path, runs: &[TimeSeries], cfg: &ScenarioConfig) -> Result<Vec<PathBuf>> {
    #[derive(Serialize)]
    struct Doc<'a> {
        seed: u64,
        config: &'a ScenarioConfig,
        series: &'a TimeSeries,
    }
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for ts in runs {
        let path = dir.join(format!("{}.json", ts.engine));
        write_atomic(&path, &serde_json::to_vec(&Doc { seed: cfg.seed, config: cfg, series: ts })?)?;
        out.push(path);
    }
    Ok(out)
}

pub fn read_run_json(path: &Path) -> Result<TimeSeries> {
    #[derive(Deserialize)]
    struct Doc {
        series: TimeSeries,
    }
    let doc: Doc = serde_json::from_slice(&fs::read(path)?)?;
    Ok(doc.series)
}

fn schema(path: &Path, reason: impl Into<String>) -> Error {
    Error::Schema { file: path.display().to_string(), reason: reason.into() }
}

fn read_records(path: &Path, columns: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.len() != columns.len() {
        return Err(schema(path, format!("expected {} columns, found {}", columns.len(), headers.len())));
    }
    for (i, (got, want)) in headers.iter().zip(columns).enumerate() {
        if got != *want {
            return Err(schema(path, format!("column {i} should be `{want}`, found `{got}`")));
        }
    }
    r.records().map(|x| x.map_err(Error::from)).collect()
}

fn field<'a>(path: &Path, rec: &'a csv::StringRecord, i: usize, name: &str) -> Result<&'a str> {
    rec.get(i).ok_or_else(|| schema(path, format!("missing `{name}`")))
}

fn num(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let s = field(path, rec, i, name)?;
    s.parse().map_err(|_| schema(path, format!("`{name}` is not a number: {s:?}")))
}

fn opt_num(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<Option<f64>> {
    match field(path, rec, i, name)? {
        "" => Ok(None),
        _ => num(path, rec, i, name).map(Some),
    }
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let c = TRAJECTORIES_COLUMNS;
    read_records(path, &c)?
        .iter()
        .map(|r| {
            Ok(TrajectoryRow {
                t: num(path, r, 0, c[0])?,
                engine: field(path, r, 1, c[1])?.to_string(),
                mean_up: opt_num(path, r, 2, c[2])?,
                std_up: opt_num(path, r, 3, c[3])?,
                mean_down: opt_num(path, r, 4, c[4])?,
                std_down: opt_num(path, r, 5, c[5])?,
            })
        })
        .collect()
}

pub fn read_populations(path: &Path) -> Result<Vec<PopulationRow>> {
    let c = POPULATIONS_COLUMNS;
    read_records(path, &c)?
        .iter()
        .map(|r| {
            Ok(PopulationRow {
                t: num(path, r, 0, c[0])?,
                engine: field(path, r, 1, c[1])?.to_string(),
                up: num(path, r, 2, c[2])?,
                down: num(path, r, 3, c[3])?,
            })
        })
        .collect()
}

pub fn read_density(path: &Path) -> Result<Vec<DensityRow>> {
    let c = DENSITY_COLUMNS;
    read_records(path, &c)?
        .iter()
        .map(|r| {
            Ok(DensityRow {
                t: num(path, r, 0, c[0])?,
                engine: field(path, r, 1, c[1])?.to_string(),
                label: field(path, r, 2, c[2])?.to_string(),
                left: num(path, r, 3, c[3])?,
                right: num(path, r, 4, c[4])?,
                value: num(path, r, 5, c[5])?,
            })
        })
        .collect()
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRecord>> {
    let c = SWEEP_COLUMNS;
    read_records(path, &c)?
        .iter()
        .map(|r| {
            Ok(SweepRecord {
                bx: num(path, r, 0, c[0])?,
                engine: field(path, r, 1, c[1])?.to_string(),
                flip_probability: num(path, r, 2, c[2])?,
                stat_error: num(path, r, 3, c[3])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -7.8e-6, 1.2345678901234567e-300, f64::MIN_POSITIVE, 5e-324] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn header_mismatch_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("populations.csv");
        fs::write(&p, "t_s,engine,n_up,n_dn\n").unwrap();
        let e = read_populations(&p).unwrap_err().to_string();
        assert!(e.contains("n_down") && e.contains("n_dn"), "{e}");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
