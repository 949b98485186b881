//! Initial-condition sampling, lockstep ensemble execution and time-series
//! statistics for the particle engines.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, Species};
use crate::decoherence::TauMode;
use crate::ehrenfest::ehrenfest_step;
use crate::error::{Error, Result};
use crate::mcwf::{step, AtomState, BasisMode, DecayScheme, Diagnostics, FlipEvent, RejectReason, SpinSplit, StepConfig};
use crate::spin::{local_populations, Spinor};
use crate::system::{System, TrackedState};
use crate::tdse::BranchBasis;

/// Cap on substeps per base step.
const MAX_SUBSTEPS: usize = 100_000;

/// h / √(2π m k_B T).
pub fn thermal_de_broglie(species: &Species, consts: &PhysicalConstants, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(
            "temperature_kelvin",
            "thermal wavelength needs T > 0; supply sigma_m explicitly",
        ));
    }
    Ok(consts.h / (2.0 * std::f64::consts::PI * species.mass * consts.k_b * temperature).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_atoms: usize,
    pub temperature: f64,
    pub z0: f64,
    pub v0: f64,
    /// Initial amplitudes on the local up and down states.
    pub chi0_local: [Complex64; 2],
    pub seed: u64,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    /// Wavepacket size for τ; defaults to λ_th.
    pub sigma: Option<f64>,
    /// Position spread of the initial sample; defaults to λ_th.
    pub sample_sigma_z: Option<f64>,
    /// Velocity spread of the initial sample; defaults to ħ/(2 σ_z m).
    pub sample_sigma_v: Option<f64>,
    pub tau_mode: TauMode,
    pub decay_scheme: DecayScheme,
    pub basis_mode: BasisMode,
    pub spin_split: SpinSplit,
    /// Largest field-direction rotation per substep, rad.
    pub max_substep_angle: f64,
    pub histogram_bins: usize,
    /// Histograms are taken every this many records (and at the last one); 0 disables.
    pub histogram_every: usize,
    pub branch_basis: BranchBasis,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_atoms: 1000,
            temperature: 20e-6,
            z0: 0.0,
            v0: 0.0,
            chi0_local: [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            seed: 0,
            dt: 1e-6,
            t_final: 1e-4,
            record_every: 10,
            sigma: None,
            sample_sigma_z: None,
            sample_sigma_v: None,
            tau_mode: TauMode::Approx,
            decay_scheme: DecayScheme::Exponential,
            basis_mode: BasisMode::Instantaneous,
            spin_split: SpinSplit::Symmetric,
            max_substep_angle: 0.01,
            histogram_bins: 200,
            histogram_every: 10,
            branch_basis: BranchBasis::Local,
            workers: None,
        }
    }
}

/// Resolved sampling widths and τ wavepacket size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Widths {
    pub sigma_tau: f64,
    pub sigma_z: f64,
    pub sigma_v: f64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::invalid("n_atoms", "must be at least 1"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature_kelvin", "must be finite and >= 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt_s", "must be positive"));
        }
        if !(self.t_final >= self.dt) {
            return Err(Error::invalid("t_final_s", "must be at least dt_s"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be at least 1"));
        }
        if !(self.z0.is_finite() && self.v0.is_finite()) {
            return Err(Error::invalid("z0_m", "z0 and v0 must be finite"));
        }
        let norm = self.chi0_local[0].norm_sqr() + self.chi0_local[1].norm_sqr();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("chi0", "initial spinor must be nonzero"));
        }
        if !(self.max_substep_angle > 0.0) {
            return Err(Error::invalid("max_substep_angle_rad", "must be positive"));
        }
        if self.histogram_bins == 0 {
            return Err(Error::invalid("histogram_bins", "must be at least 1"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }

    pub fn widths(&self, species: &Species, consts: &PhysicalConstants) -> Result<Widths> {
        let lambda = if self.temperature > 0.0 {
            Some(thermal_de_broglie(species, consts, self.temperature)?)
        } else {
            None
        };
        let need = |what: &str| Error::invalid(what, "temperature is 0, so this width must be given explicitly");
        let sigma_z = self.sample_sigma_z.or(lambda).ok_or_else(|| need("sample_sigma_z_m"))?;
        let sigma_tau = self.sigma.or(lambda).ok_or_else(|| need("sigma_m"))?;
        let sigma_v = match self.sample_sigma_v {
            Some(s) => s,
            None if sigma_z > 0.0 => consts.hbar / (2.0 * sigma_z * species.mass),
            None => return Err(need("sample_sigma_v_m_per_s")),
        };
        for (name, v) in [("sigma_m", sigma_tau), ("sample_sigma_z_m", sigma_z), ("sample_sigma_v_m_per_s", sigma_v)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        if sigma_tau == 0.0 {
            return Err(Error::invalid("sigma_m", "must be positive"));
        }
        Ok(Widths { sigma_tau, sigma_z, sigma_v })
    }

    pub fn step_config(&self, sigma_tau: f64) -> Result<StepConfig> {
        let cfg = StepConfig {
            dt: self.dt,
            tau_mode: self.tau_mode,
            decay_scheme: self.decay_scheme,
            sigma: sigma_tau,
            basis_mode: self.basis_mode,
            spin_split: self.spin_split,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Probability of the local up label in the initial state.
    pub fn initial_up_fraction(&self) -> f64 {
        let [a, b] = self.chi0_local;
        a.norm_sqr() / (a.norm_sqr() + b.norm_sqr())
    }
}

/// Private stream for atom `index`.
pub fn atom_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn sample_one(cfg: &EnsembleConfig, sys: &System, w: &Widths, rng: &mut ChaCha8Rng) -> Result<AtomState> {
    let nz = Normal::new(cfg.z0, w.sigma_z).map_err(|e| Error::invalid("sample_sigma_z_m", e.to_string()))?;
    let nv = Normal::new(cfg.v0, w.sigma_v).map_err(|e| Error::invalid("sample_sigma_v_m_per_s", e.to_string()))?;
    let z = nz.sample(rng);
    let v = nv.sample(rng);
    let n = sys.direction(z)?;
    let [a, b] = cfg.chi0_local;
    let chi = Spinor::from_local(n, a, b)?.normalized()?;
    let [up, _] = local_populations(&chi, n)?;
    let u: f64 = rng.random();
    let tracked = if u < up { TrackedState::Up } else { TrackedState::Down };
    Ok(AtomState { z, v, chi, tracked })
}

/// Draws every atom from its own stream, returning the atoms and the streams
/// positioned after the draws.
pub fn sample_initial(cfg: &EnsembleConfig, sys: &System) -> Result<Vec<AtomState>> {
    Ok(sample_with_streams(cfg, sys)?.into_iter().map(|(a, _)| a).collect())
}

fn sample_with_streams(cfg: &EnsembleConfig, sys: &System) -> Result<Vec<(AtomState, ChaCha8Rng)>> {
    cfg.validate()?;
    let w = cfg.widths(&sys.species, &sys.consts)?;
    (0..cfg.n_atoms)
        .map(|i| {
            let mut rng = atom_rng(cfg.seed, i);
            let a = sample_one(cfg, sys, &w, &mut rng)?;
            Ok((a, rng))
        })
        .collect()
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    /// Atom count or summed population weight.
    pub weight: f64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl BranchStats {
    /// Weighted mean and population standard deviation.
    pub fn from_weighted(zs: &[f64], ws: &[f64]) -> Self {
        let weight = compensated_sum(ws.iter().copied());
        if weight <= 0.0 {
            return Self { weight, mean: None, std: None };
        }
        let mean = compensated_sum(zs.iter().zip(ws).map(|(z, w)| z * w)) / weight;
        let var = compensated_sum(zs.iter().zip(ws).map(|(z, w)| w * (z - mean) * (z - mean))) / weight;
        Self { weight, mean: Some(mean), std: Some(var.max(0.0).sqrt()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    /// `bins` uniform bins on [lo, hi]; values outside are dropped.
    pub fn weighted(lo: f64, hi: f64, bins: usize, zs: &[f64], ws: &[f64]) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5e-9, lo + 0.5e-9) };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0.0; bins];
        for (z, w) in zs.iter().zip(ws) {
            if *z < lo || *z > hi {
                continue;
            }
            let i = (((z - lo) / width) as usize).min(bins - 1);
            counts[i] += w;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.counts.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub branches: [BranchStats; 2],
    pub populations: [f64; 2],
    /// Standard error of each population (0 for the deterministic TDSE).
    pub population_se: [f64; 2],
    /// Fraction of atoms tracking a label other than their initial one.
    pub fraction_flipped: Option<f64>,
    pub histograms: Option<[Histogram; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomEvent {
    pub atom: usize,
    pub event: FlipEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub engine: String,
    pub n_atoms: usize,
    pub snapshots: Vec<Snapshot>,
    /// Accepted and energy-forbidden flips, by atom then time.
    pub flip_events: Vec<AtomEvent>,
    pub diagnostics: Diagnostics,
    /// Time at which a stop rule ended the run early.
    pub stopped_at: Option<f64>,
}

impl TimeSeries {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("time series has at least the initial snapshot")
    }
}

/// Ends a run when the mean of one branch reaches the mirror image of its start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub label: TrackedState,
    /// Antipodal point, m; the branch starts on the opposite side of 0.
    pub z_mirror: f64,
}

/// Tracks the stop rule across records.
#[derive(Debug, Clone, Copy, Default)]
pub struct StopWatch {
    prev: Option<f64>,
}

impl StopWatch {
    /// True once the branch has crossed 0 and either reached the mirror or turned back.
    pub fn should_stop(&mut self, rule: &StopRule, snap: &Snapshot) -> bool {
        let Some(mean) = snap.branches[rule.label.index()].mean else {
            return false;
        };
        let s = rule.z_mirror.signum();
        let x = s * mean;
        let prev = self.prev.replace(x);
        if x <= 0.0 {
            return false;
        }
        x >= s * rule.z_mirror || prev.is_some_and(|p| p > 0.0 && x < p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleMethod {
    Mcwf,
    Ehrenfest,
}

impl ParticleMethod {
    pub fn name(self) -> &'static str {
        match self {
            ParticleMethod::Mcwf => "mcwf",
            ParticleMethod::Ehrenfest => "ehrenfest",
        }
    }
}

/// Substeps for one base step so the field axis turns by at most `max_angle` per substep.
pub fn substeps(sys: &System, z: f64, v: f64, dt: f64, max_angle: f64) -> usize {
    if sys.field.bx == 0.0 {
        return 1;
    }
    let a_max = (sys.species.g_f * sys.consts.mu_b * sys.field.bz_prime).abs() / (2.0 * sys.species.mass);
    let speed = v.abs() + a_max * dt;
    let reach = speed * dt;
    let closest = if z.abs() <= reach { 0.0 } else { z.abs() - reach };
    let angle = speed * sys.field.direction_rate(closest) * dt;
    ((angle / max_angle).ceil() as usize).clamp(1, MAX_SUBSTEPS)
}

struct Slot {
    atom: AtomState,
    initial: TrackedState,
    rng: ChaCha8Rng,
    events: Vec<FlipEvent>,
    diag: Diagnostics,
    t: f64,
}

fn advance_slot(slot: &mut Slot, sys: &System, base: &StepConfig, method: ParticleMethod, steps: usize, max_angle: f64) -> Result<()> {
    for _ in 0..steps {
        let k = substeps(sys, slot.atom.z, slot.atom.v, base.dt, max_angle);
        let cfg = base.with_dt(base.dt / k as f64);
        for _ in 0..k {
            match method {
                ParticleMethod::Mcwf => {
                    let (next, ev) = step(&slot.atom, sys, &cfg, slot.t, &mut slot.rng, &mut slot.diag)?;
                    slot.atom = next;
                    if let Some(e) = ev {
                        if e.rejected_reason != RejectReason::NotDrawn {
                            slot.events.push(e);
                        }
                    }
                }
                ParticleMethod::Ehrenfest => {
                    slot.atom = ehrenfest_step(&slot.atom, sys, &cfg)?;
                    slot.diag.steps += 1;
                }
            }
            slot.t += cfg.dt;
        }
    }
    Ok(())
}

/// Per-atom branch weights in the configured basis.
fn branch_weights(a: &AtomState, sys: &System, method: ParticleMethod, basis: BranchBasis) -> Result<[f64; 2]> {
    match (method, basis) {
        (ParticleMethod::Mcwf, BranchBasis::Local) => Ok(match a.tracked {
            TrackedState::Up => [1.0, 0.0],
            TrackedState::Down => [0.0, 1.0],
        }),
        (ParticleMethod::Mcwf, BranchBasis::Lab) => {
            let aligned = sys.field.vector(a.z)[2] >= 0.0;
            Ok(match (a.tracked, aligned) {
                (TrackedState::Up, true) | (TrackedState::Down, false) => [1.0, 0.0],
                _ => [0.0, 1.0],
            })
        }
        (ParticleMethod::Ehrenfest, BranchBasis::Local) => local_populations(&a.chi, sys.direction(a.z)?),
        (ParticleMethod::Ehrenfest, BranchBasis::Lab) => Ok([a.chi.plus.norm_sqr(), a.chi.minus.norm_sqr()]),
    }
}

fn snapshot(slots: &[Slot], t: f64, sys: &System, method: ParticleMethod, cfg: &EnsembleConfig, with_hist: bool) -> Result<Snapshot> {
    let n = slots.len() as f64;
    let zs: Vec<f64> = slots.iter().map(|s| s.atom.z).collect();
    let mut w = [Vec::with_capacity(slots.len()), Vec::with_capacity(slots.len())];
    for s in slots {
        let [a, b] = branch_weights(&s.atom, sys, method, cfg.branch_basis)?;
        w[0].push(a);
        w[1].push(b);
    }
    let branches = [BranchStats::from_weighted(&zs, &w[0]), BranchStats::from_weighted(&zs, &w[1])];
    let mut populations = [0.0; 2];
    let mut se = [0.0; 2];
    for k in 0..2 {
        let p = branches[k].weight / n;
        populations[k] = p;
        se[k] = match method {
            // A count of 0 or N is floored at one atom so the error never claims certainty.
            ParticleMethod::Mcwf => {
                let q = p.max(1.0 / n).min(1.0 - 1.0 / n);
                (q * (1.0 - q) / n).max(0.0).sqrt()
            }
            ParticleMethod::Ehrenfest => {
                let var = compensated_sum(w[k].iter().map(|x| (x - p) * (x - p))) / n;
                (var / n).sqrt()
            }
        };
    }
    let fraction_flipped = match method {
        ParticleMethod::Mcwf => Some(slots.iter().filter(|s| s.atom.tracked != s.initial).count() as f64 / n),
        ParticleMethod::Ehrenfest => None,
    };
    let histograms = if with_hist {
        let lo = zs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let b = cfg.histogram_bins;
        Some([Histogram::weighted(lo, hi, b, &zs, &w[0]), Histogram::weighted(lo, hi, b, &zs, &w[1])])
    } else {
        None
    };
    Ok(Snapshot { t, branches, populations, population_se: se, fraction_flipped, histograms })
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::invalid("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Whether record `i` of `last` carries histograms.
pub fn histogram_due(every: usize, i: usize, last: bool) -> bool {
    every > 0 && (last || i % every == 0)
}

/// Runs a particle ensemble to t_final (or the stop rule) with lockstep records.
pub fn run_ensemble(cfg: &EnsembleConfig, sys: &System, method: ParticleMethod, stop: Option<StopRule>) -> Result<TimeSeries> {
    cfg.validate()?;
    if cfg.branch_basis == BranchBasis::Lab && sys.field.bx != 0.0 {
        return Err(Error::invalid("branch_basis", "lab branches need bx_tesla = 0"));
    }
    let w = cfg.widths(&sys.species, &sys.consts)?;
    let base = cfg.step_config(w.sigma_tau)?;
    let mut slots: Vec<Slot> = sample_with_streams(cfg, sys)?
        .into_iter()
        .map(|(atom, rng)| Slot { atom, initial: atom.tracked, rng, events: Vec::new(), diag: Diagnostics::default(), t: 0.0 })
        .collect();
    let n_steps = cfg.n_steps();
    let n_records = n_steps.div_ceil(cfg.record_every);
    let mut snapshots = vec![snapshot(&slots, 0.0, sys, method, cfg, histogram_due(cfg.histogram_every, 0, false))?];
    let mut watch = StopWatch::default();
    let mut stopped_at = None;
    let mut done = 0;
    for r in 1..=n_records {
        let chunk = cfg.record_every.min(n_steps - done);
        in_pool(cfg.workers, || {
            slots
                .par_iter_mut()
                .map(|s| advance_slot(s, sys, &base, method, chunk, cfg.max_substep_angle))
                .collect::<Result<Vec<()>>>()
        })??;
        done += chunk;
        let t = done as f64 * cfg.dt;
        let snap = snapshot(&slots, t, sys, method, cfg, histogram_due(cfg.histogram_every, r, r == n_records))?;
        let stop_now = stop.is_some_and(|rule| watch.should_stop(&rule, &snap));
        snapshots.push(snap);
        if stop_now {
            stopped_at = Some(t);
            break;
        }
    }
    if stopped_at.is_some() {
        if let Some(last) = snapshots.last_mut() {
            if last.histograms.is_none() && cfg.histogram_every > 0 {
                *last = snapshot(&slots, last.t, sys, method, cfg, true)?;
            }
        }
    }
    let mut diagnostics = Diagnostics::default();
    let mut flip_events = Vec::new();
    for (i, s) in slots.iter().enumerate() {
        diagnostics.merge(&s.diag);
        flip_events.extend(s.events.iter().map(|e| AtomEvent { atom: i, event: *e }));
    }
    report(method.name(), &diagnostics);
    Ok(TimeSeries { engine: method.name().to_string(), n_atoms: cfg.n_atoms, snapshots, flip_events, diagnostics, stopped_at })
}

fn report(engine: &str, d: &Diagnostics) {
    if d.p_flip_clamps > 0 {
        log::warn!("{engine}: p_flip exceeded 1 on {} steps and was clamped; reduce dt_s", d.p_flip_clamps);
    }
    if d.max_dt_over_tau > 0.1 {
        log::warn!("{engine}: dt/tau reached {:.3} (> 0.1)", d.max_dt_over_tau);
    }
    if d.zeno_steps > 0 {
        log::warn!("{engine}: tau < 10 dt on {} steps; large sigma can suppress transitions", d.zeno_steps);
    }
    if d.max_larmor_phase > 0.1 {
        log::warn!("{engine}: Larmor phase per step reached {:.3} rad (> 0.1)", d.max_larmor_phase);
    }
}
