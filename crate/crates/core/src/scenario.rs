//! Named experiment presets and the flat JSON configuration they resolve to.
//!
//! Every physical key carries its SI unit in the name. A config file is
//! overlaid key by key on the preset it names, so a file only needs the keys
//! it changes.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{Species, CODATA_2018, RB87_MASS};
use crate::decoherence::TauMode;
use crate::engine::{EngineRegistry, RunSpec, TdseConfig};
use crate::ensemble::{EnsembleConfig, StopRule, TimeSeries};
use crate::error::{Error, Result};
use crate::field::FieldModel1D;
use crate::mcwf::{BasisMode, DecayScheme, SpinSplit};
use crate::output::SweepRow;
use crate::system::{System, TrackedState};
use crate::tdse::{Absorber, BranchBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SternGerlach,
    Majorana,
    BxSweep,
    Custom,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::SternGerlach => "stern_gerlach",
            ScenarioKind::Majorana => "majorana",
            ScenarioKind::BxSweep => "bx_sweep",
            ScenarioKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    /// Accepts snake_case or kebab-case.
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "stern_gerlach" => Ok(ScenarioKind::SternGerlach),
            "majorana" => Ok(ScenarioKind::Majorana),
            "bx_sweep" | "sweep" => Ok(ScenarioKind::BxSweep),
            "custom" => Ok(ScenarioKind::Custom),
            _ => Err(Error::UnknownScenario(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub engines: Vec<String>,
    pub formats: Vec<OutputFormat>,
    pub output_dir: Option<PathBuf>,

    pub bx_tesla: f64,
    pub bz_prime_tesla_per_m: f64,
    pub mass_kg: f64,
    pub g_f: f64,

    pub temperature_kelvin: f64,
    pub z0_m: f64,
    pub v0_m_per_s: f64,
    /// Initial amplitude on the local up state as [re, im].
    pub chi0_up: [f64; 2],
    /// Initial amplitude on the local down state as [re, im].
    pub chi0_down: [f64; 2],
    pub n_atoms: usize,
    pub seed: u64,
    pub dt_s: f64,
    pub t_final_s: f64,
    pub record_every: usize,
    pub sigma_m: Option<f64>,
    pub sample_sigma_z_m: Option<f64>,
    pub sample_sigma_v_m_per_s: Option<f64>,
    pub tau_mode: TauMode,
    pub decay_scheme: DecayScheme,
    pub basis_mode: BasisMode,
    pub spin_split: SpinSplit,
    pub max_substep_angle_rad: f64,
    pub histogram_bins: usize,
    pub histogram_every: usize,
    pub branch_basis: BranchBasis,
    pub workers: Option<usize>,

    pub tdse_z_min_m: f64,
    pub tdse_z_max_m: f64,
    pub tdse_n_points: usize,
    pub tdse_dt_s: f64,
    pub absorber_width_m: Option<f64>,
    pub absorber_strength_per_s: Option<f64>,

    /// Stop when the initially tracked branch mean reaches the mirror of z0.
    pub stop_at_antipode: bool,
    /// Transverse fields for a sweep, strictly increasing.
    pub bx_list_tesla: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        let t = TdseConfig::default();
        Self {
            scenario: ScenarioKind::Custom,
            engines: vec!["mcwf".into(), "ehrenfest".into(), "tdse".into()],
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
            output_dir: None,
            bx_tesla: 0.0,
            bz_prime_tesla_per_m: 2.5,
            mass_kg: RB87_MASS,
            g_f: Species::rb87().g_f,
            temperature_kelvin: e.temperature,
            z0_m: 0.0,
            v0_m_per_s: 0.0,
            chi0_up: [1.0, 0.0],
            chi0_down: [0.0, 0.0],
            n_atoms: e.n_atoms,
            seed: e.seed,
            dt_s: e.dt,
            t_final_s: e.t_final,
            record_every: e.record_every,
            sigma_m: None,
            sample_sigma_z_m: None,
            sample_sigma_v_m_per_s: None,
            tau_mode: e.tau_mode,
            decay_scheme: e.decay_scheme,
            basis_mode: e.basis_mode,
            spin_split: e.spin_split,
            max_substep_angle_rad: e.max_substep_angle,
            histogram_bins: e.histogram_bins,
            histogram_every: e.histogram_every,
            branch_basis: e.branch_basis,
            workers: None,
            tdse_z_min_m: t.z_min,
            tdse_z_max_m: t.z_max,
            tdse_n_points: t.n_points,
            tdse_dt_s: t.dt,
            absorber_width_m: None,
            absorber_strength_per_s: None,
            stop_at_antipode: false,
            bx_list_tesla: Vec::new(),
        }
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

/// Default sweep grid: 6 log-spaced fields over 20–300 nT.
pub fn default_bx_grid() -> Vec<f64> {
    log_grid(20e-9, 300e-9, 6)
}

impl ScenarioConfig {
    pub fn preset(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::SternGerlach => Self::stern_gerlach(),
            ScenarioKind::Majorana => Self::majorana(),
            ScenarioKind::BxSweep => Self::bx_sweep(),
            ScenarioKind::Custom => Self::default(),
        }
    }

    /// 50:50 packet at 7.8 µm in a pure gradient, 380 µs.
    pub fn stern_gerlach() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            scenario: ScenarioKind::SternGerlach,
            bx_tesla: 0.0,
            z0_m: 7.8e-6,
            chi0_up: [h, 0.0],
            chi0_down: [h, 0.0],
            n_atoms: 10_000,
            t_final_s: 380e-6,
            dt_s: 1e-6,
            record_every: 20,
            branch_basis: BranchBasis::Lab,
            tdse_z_min_m: -17.4e-6,
            tdse_z_max_m: 33e-6,
            tdse_n_points: 4096,
            tdse_dt_s: 1e-7,
            ..Self::default()
        }
    }

    /// Trapped packet at −50 µm oscillating through the 105 nT minimum, 3.0 ms.
    pub fn majorana() -> Self {
        Self {
            scenario: ScenarioKind::Majorana,
            bx_tesla: 105e-9,
            g_f: Species::rb87_up_trapped().g_f,
            z0_m: -50e-6,
            n_atoms: 10_000,
            t_final_s: 3.0e-3,
            dt_s: 1e-6,
            record_every: 50,
            tdse_z_min_m: -110e-6,
            tdse_z_max_m: 110e-6,
            tdse_n_points: 32_768,
            tdse_dt_s: 4e-8,
            absorber_width_m: Some(25e-6),
            absorber_strength_per_s: Some(1e5),
            ..Self::default()
        }
    }

    /// Majorana preset run out to 5.5 ms.
    pub fn majorana_extended() -> Self {
        Self { t_final_s: 5.5e-3, ..Self::majorana() }
    }

    /// Static packet at −29.8 µm run to the antipode for each field in the grid.
    pub fn bx_sweep() -> Self {
        Self {
            scenario: ScenarioKind::BxSweep,
            z0_m: -29.8e-6,
            t_final_s: 2.5e-3,
            stop_at_antipode: true,
            bx_list_tesla: default_bx_grid(),
            bx_tesla: default_bx_grid()[0],
            ..Self::majorana()
        }
    }

    /// Overlays the keys of a JSON object on `self`; unknown keys are errors.
    pub fn overlay(&self, patch: &serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(patch) = patch else {
            return Err(Error::invalid("config", "expected a JSON object"));
        };
        let mut v = serde_json::to_value(self)?;
        if let serde_json::Value::Object(base) = &mut v {
            for (k, x) in patch {
                base.insert(k.clone(), x.clone());
            }
        }
        Ok(serde_json::from_value(v)?)
    }

    /// Reads a config file and overlays it on the preset named in it (or `fallback`).
    pub fn from_json_str(text: &str, fallback: ScenarioKind) -> Result<Self> {
        let patch: serde_json::Value = serde_json::from_str(text)?;
        let kind = match patch.get("scenario") {
            Some(s) => serde_json::from_value(s.clone())?,
            None => fallback,
        };
        Self::preset(kind).overlay(&patch)
    }

    pub fn validate(&self, registry: &EngineRegistry) -> Result<()> {
        if self.engines.is_empty() {
            return Err(Error::invalid("engines", "at least one engine is required"));
        }
        for e in &self.engines {
            registry.get(e)?;
        }
        if self.absorber_width_m.is_some() != self.absorber_strength_per_s.is_some() {
            return Err(Error::invalid(
                "absorber_width_m",
                "absorber_width_m and absorber_strength_per_s must be given together",
            ));
        }
        if self.scenario == ScenarioKind::BxSweep {
            self.validate_bx_list()?;
        }
        self.run_spec()?;
        Ok(())
    }

    fn validate_bx_list(&self) -> Result<()> {
        if self.bx_list_tesla.is_empty() {
            return Err(Error::invalid("bx_list_tesla", "must not be empty"));
        }
        if let Some(b) = self.bx_list_tesla.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::invalid("bx_list_tesla", format!("entries must be finite and >= 0, got {b}")));
        }
        if let Some(w) = self.bx_list_tesla.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "bx_list_tesla",
                format!("must be strictly increasing, found {:e} then {:e}", w[0], w[1]),
            ));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<System> {
        Ok(System::new(
            Species::new(self.mass_kg, self.g_f)?,
            CODATA_2018,
            FieldModel1D::new(self.bx_tesla, self.bz_prime_tesla_per_m)?,
        ))
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            n_atoms: self.n_atoms,
            temperature: self.temperature_kelvin,
            z0: self.z0_m,
            v0: self.v0_m_per_s,
            chi0_local: [
                Complex64::new(self.chi0_up[0], self.chi0_up[1]),
                Complex64::new(self.chi0_down[0], self.chi0_down[1]),
            ],
            seed: self.seed,
            dt: self.dt_s,
            t_final: self.t_final_s,
            record_every: self.record_every,
            sigma: self.sigma_m,
            sample_sigma_z: self.sample_sigma_z_m,
            sample_sigma_v: self.sample_sigma_v_m_per_s,
            tau_mode: self.tau_mode,
            decay_scheme: self.decay_scheme,
            basis_mode: self.basis_mode,
            spin_split: self.spin_split,
            max_substep_angle: self.max_substep_angle_rad,
            histogram_bins: self.histogram_bins,
            histogram_every: self.histogram_every,
            branch_basis: self.branch_basis,
            workers: self.workers,
        }
    }

    pub fn tdse(&self) -> TdseConfig {
        TdseConfig {
            z_min: self.tdse_z_min_m,
            z_max: self.tdse_z_max_m,
            n_points: self.tdse_n_points,
            dt: self.tdse_dt_s,
            absorber: match (self.absorber_width_m, self.absorber_strength_per_s) {
                (Some(width), Some(strength)) => Some(Absorber { width, strength }),
                _ => None,
            },
        }
    }

    /// Label the initial state is tracked on: the larger local population.
    fn initial_label(&self) -> TrackedState {
        let up = self.chi0_up[0].hypot(self.chi0_up[1]);
        let down = self.chi0_down[0].hypot(self.chi0_down[1]);
        if up >= down {
            TrackedState::Up
        } else {
            TrackedState::Down
        }
    }

    pub fn stop_rule(&self) -> Option<StopRule> {
        self.stop_at_antipode.then(|| StopRule { label: self.initial_label(), z_mirror: -self.z0_m })
    }

    pub fn run_spec(&self) -> Result<RunSpec> {
        let ensemble = self.ensemble();
        ensemble.validate()?;
        if self.stop_at_antipode && self.z0_m == 0.0 {
            return Err(Error::invalid("z0_m", "the antipode stop needs z0_m != 0"));
        }
        Ok(RunSpec { system: self.system()?, ensemble, tdse: self.tdse(), stop: self.stop_rule() })
    }

    /// One resolved config per sweep field, in grid order.
    pub fn sweep_points(&self) -> Result<Vec<ScenarioConfig>> {
        self.validate_bx_list()?;
        Ok(self
            .bx_list_tesla
            .iter()
            .map(|&bx| ScenarioConfig { bx_tesla: bx, bx_list_tesla: Vec::new(), ..self.clone() })
            .collect())
    }
}

/// Runs every configured engine on the resolved spec, in config order.
pub fn run_engines(cfg: &ScenarioConfig, registry: &EngineRegistry) -> Result<Vec<TimeSeries>> {
    cfg.validate(registry)?;
    let spec = cfg.run_spec()?;
    cfg.engines.iter().map(|e| registry.get(e)?.run(&spec)).collect()
}

/// Population that left the initial label at the final record, with its standard error.
pub fn flip_probability(ts: &TimeSeries, initial: TrackedState) -> (f64, f64) {
    let s = ts.last();
    let k = initial.other().index();
    (s.populations[k], s.population_se[k])
}

/// Runs every engine at every sweep field.
pub fn run_sweep(cfg: &ScenarioConfig, registry: &EngineRegistry) -> Result<Vec<SweepRow>> {
    cfg.validate(registry)?;
    let label = cfg.initial_label();
    let mut rows = Vec::new();
    for point in cfg.sweep_points()? {
        let spec = point.run_spec()?;
        for name in &cfg.engines {
            let engine = registry.get(name)?;
            let ts = engine.run(&spec)?;
            let (p, se) = flip_probability(&ts, label);
            log::info!("sweep: bx = {:.3e} T, {}: p = {p:.5} +- {se:.5}", point.bx_tesla, engine.name());
            rows.push(SweepRow { bx: point.bx_tesla, engine: engine.name(), flip_probability: p, stat_error: se });
        }
    }
    Ok(rows)
}
