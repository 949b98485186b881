//! Engines behind one trait, looked up by name at run time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    compensated_sum, histogram_due, run_ensemble, BranchStats, EnsembleConfig, Histogram, ParticleMethod, Snapshot,
    StopRule, StopWatch, TimeSeries,
};
use crate::error::{Error, Result};
use crate::mcwf::Diagnostics;
use crate::spin::Spinor;
use crate::system::System;
use crate::tdse::{Absorber, BranchBasis, Grid1D, TdseField, TdseSolver, MIN_POINTS_PER_SIGMA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdseConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub n_points: usize,
    /// Upper bound on the TDSE step; the actual step divides the record interval evenly.
    pub dt: f64,
    pub absorber: Option<Absorber>,
}

impl Default for TdseConfig {
    fn default() -> Self {
        Self { z_min: -2e-5, z_max: 2e-5, n_points: 4096, dt: 1e-7, absorber: None }
    }
}

/// Everything one engine needs for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub system: System,
    pub ensemble: EnsembleConfig,
    pub tdse: TdseConfig,
    pub stop: Option<StopRule>,
}

pub trait Engine: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, spec: &RunSpec) -> Result<TimeSeries>;
}

pub struct McwfEngine;
pub struct EhrenfestEngine;
pub struct TdseEngine;

impl Engine for McwfEngine {
    fn name(&self) -> &'static str {
        "mcwf"
    }
    fn run(&self, spec: &RunSpec) -> Result<TimeSeries> {
        run_ensemble(&spec.ensemble, &spec.system, ParticleMethod::Mcwf, spec.stop)
    }
}

impl Engine for EhrenfestEngine {
    fn name(&self) -> &'static str {
        "ehrenfest"
    }
    fn run(&self, spec: &RunSpec) -> Result<TimeSeries> {
        run_ensemble(&spec.ensemble, &spec.system, ParticleMethod::Ehrenfest, spec.stop)
    }
}

impl Engine for TdseEngine {
    fn name(&self) -> &'static str {
        "tdse"
    }
    fn run(&self, spec: &RunSpec) -> Result<TimeSeries> {
        run_tdse(spec)
    }
}

pub struct EngineRegistry {
    engines: BTreeMap<&'static str, Box<dyn Engine>>,
}

impl EngineRegistry {
    pub fn empty() -> Self {
        Self { engines: BTreeMap::new() }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(McwfEngine));
        r.register(Box::new(EhrenfestEngine));
        r.register(Box::new(TdseEngine));
        r
    }

    pub fn register(&mut self, engine: Box<dyn Engine>) {
        self.engines.insert(engine.name(), engine);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Engine> {
        self.engines.get(name).map(|e| e.as_ref()).ok_or_else(|| Error::UnknownEngine(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.engines.keys().copied().collect()
    }
}

impl Default for EngineRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

/// Packet with the configured local amplitudes at every grid point.
pub fn initial_tdse_field(spec: &RunSpec) -> Result<TdseField> {
    let cfg = &spec.ensemble;
    let sys = &spec.system;
    let t = &spec.tdse;
    let grid = Grid1D::new(t.z_min, t.z_max, t.n_points)?;
    let w = cfg.widths(&sys.species, &sys.consts)?;
    let sigma = w.sigma_z;
    let dz = grid.dz();
    if !(sigma >= MIN_POINTS_PER_SIGMA * dz) {
        return Err(Error::UnderResolved { sigma, dz });
    }
    if cfg.z0 - 8.0 * sigma < grid.z_min || cfg.z0 + 8.0 * sigma > grid.z_max {
        return Err(Error::invalid("z0_m", "wavepacket must start well inside the TDSE grid"));
    }
    if cfg.sample_sigma_v.is_some() {
        log::warn!("tdse: sample_sigma_v is ignored; the packet is minimum-uncertainty");
    }
    let hbar = sys.consts.hbar;
    let k0 = sys.species.mass * cfg.v0 / hbar;
    let amp = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
    let [a, b] = cfg.chi0_local;
    let mut plus = Vec::with_capacity(grid.n_points);
    let mut minus = Vec::with_capacity(grid.n_points);
    for z in grid.points() {
        let g = amp * (-(z - cfg.z0).powi(2) / (4.0 * sigma * sigma)).exp();
        let env = num_complex::Complex64::from_polar(g, k0 * (z - cfg.z0));
        let chi = match sys.direction(z) {
            Ok(n) => Spinor::from_local(n, a, b)?.normalized()?,
            Err(_) => Spinor::new(a, b).normalized()?,
        };
        plus.push(env * chi.plus);
        minus.push(env * chi.minus);
    }
    let mut f = TdseField { grid, psi_plus: plus, psi_minus: minus };
    let norm = f.norm().sqrt();
    for x in f.psi_plus.iter_mut().chain(f.psi_minus.iter_mut()) {
        *x /= norm;
    }
    Ok(f)
}

/// Range holding all but 1e-6 of the total density at each end.
fn density_support(grid: &Grid1D, total: &[f64]) -> (f64, f64) {
    let sum = compensated_sum(total.iter().copied());
    let cut = 1e-6 * sum;
    let mut acc = 0.0;
    let mut lo = 0;
    for (j, d) in total.iter().enumerate() {
        acc += d;
        if acc > cut {
            lo = j;
            break;
        }
    }
    acc = 0.0;
    let mut hi = total.len() - 1;
    for (j, d) in total.iter().enumerate().rev() {
        acc += d;
        if acc > cut {
            hi = j;
            break;
        }
    }
    (grid.z(lo), grid.z(hi) + grid.dz())
}

fn tdse_snapshot(sol: &TdseSolver, basis: BranchBasis, bins: Option<usize>) -> Snapshot {
    let m = sol.branch_moments(basis);
    let branches = m.map(|b| BranchStats { weight: b.population, mean: b.mean, std: b.std });
    let populations = m.map(|b| b.population);
    let histograms = bins.map(|bins| {
        let grid = sol.field.grid;
        let dens = sol.branch_densities(basis);
        let total: Vec<f64> = dens[0].iter().zip(&dens[1]).map(|(a, b)| a + b).collect();
        let (lo, hi) = density_support(&grid, &total);
        let zs: Vec<f64> = grid.points().collect();
        let dz = grid.dz();
        dens.map(|d| {
            let w: Vec<f64> = d.iter().map(|x| x * dz).collect();
            Histogram::weighted(lo, hi, bins, &zs, &w)
        })
    });
    Snapshot { t: sol.t, branches, populations, population_se: [0.0; 2], fraction_flipped: None, histograms }
}

/// TDSE run sampled at the same record times as the particle engines.
pub fn run_tdse(spec: &RunSpec) -> Result<TimeSeries> {
    let cfg = &spec.ensemble;
    cfg.validate()?;
    if cfg.branch_basis == BranchBasis::Lab && spec.system.field.bx != 0.0 {
        return Err(Error::invalid("branch_basis", "lab branches need bx_tesla = 0"));
    }
    if !(spec.tdse.dt > 0.0) {
        return Err(Error::invalid("tdse_dt_s", "must be positive"));
    }
    let field = initial_tdse_field(spec)?;
    let record_dt = cfg.record_every as f64 * cfg.dt;
    let per_record = (record_dt / spec.tdse.dt).ceil().max(1.0) as usize;
    let dt = record_dt / per_record as f64;
    let mut sol = TdseSolver::new(spec.system, field, dt, spec.tdse.absorber)?;
    let n_steps = cfg.n_steps();
    let n_records = n_steps.div_ceil(cfg.record_every);
    let bins = |i: usize, last: bool| histogram_due(cfg.histogram_every, i, last).then_some(cfg.histogram_bins);
    let mut snapshots = vec![tdse_snapshot(&sol, cfg.branch_basis, bins(0, false))];
    let mut watch = StopWatch::default();
    let mut stopped_at = None;
    let mut done = 0;
    for r in 1..=n_records {
        let chunk = cfg.record_every.min(n_steps - done);
        let steps = if chunk == cfg.record_every {
            per_record
        } else {
            ((chunk as f64 * cfg.dt / dt).round() as usize).max(1)
        };
        sol.advance(steps);
        done += chunk;
        sol.t = done as f64 * cfg.dt;
        sol.check_boundary()?;
        let last = r == n_records;
        let mut snap = tdse_snapshot(&sol, cfg.branch_basis, bins(r, last));
        let stop_now = spec.stop.is_some_and(|rule| watch.should_stop(&rule, &snap));
        if stop_now && snap.histograms.is_none() && cfg.histogram_every > 0 {
            snap = tdse_snapshot(&sol, cfg.branch_basis, Some(cfg.histogram_bins));
        }
        snapshots.push(snap);
        if stop_now {
            stopped_at = Some(sol.t);
            break;
        }
    }
    let drift = (sol.total_norm() - 1.0).abs();
    if drift > 1e-8 {
        log::warn!("tdse: total norm drifted by {drift:.2e}");
    }
    Ok(TimeSeries {
        engine: "tdse".to_string(),
        n_atoms: cfg.n_atoms,
        snapshots,
        flip_events: Vec::new(),
        diagnostics: Diagnostics::default(),
        stopped_at,
    })
}
