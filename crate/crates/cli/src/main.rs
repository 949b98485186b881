use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use semispin::constants::{Species, CODATA_2018, RB87_MASS};
use semispin::decoherence::{tau_approx, tau_exact, tau_pos, tau_vel, DecoherenceParams};
use semispin::engine::EngineRegistry;
use semispin::output::{fmt_f64, write_atomic, write_run_csvs, write_run_json, write_sweep_csv};
use semispin::scenario::{log_grid, run_engines, run_sweep, OutputFormat, ScenarioConfig, ScenarioKind};

/// Default output directory when neither `--out` nor the config sets one.
const OUT_ENV: &str = "SEMISPIN_OUT";

#[derive(Parser)]
#[command(name = "semispin", version, about = "Semiclassical spin-1/2 dynamics in magnetic field gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario with the selected engines.
    Simulate {
        /// stern-gerlach, majorana, bx-sweep or custom
        scenario: String,
        /// Use the 5.5 ms end time (majorana only).
        #[arg(long)]
        extended: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Flip probability against transverse field for every engine.
    Sweep {
        /// Strictly increasing transverse fields, T.
        #[arg(long, value_delimiter = ',')]
        bx_list_tesla: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Decoherence times against wavepacket size.
    TauTable {
        #[arg(long, default_value_t = 1e-9)]
        sigma_min_m: f64,
        #[arg(long, default_value_t = 1e-6)]
        sigma_max_m: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, default_value_t = RB87_MASS)]
        mass_kg: f64,
        #[arg(long, default_value_t = 1.0)]
        g_f: f64,
        #[arg(long, default_value_t = 2.5)]
        bz_prime_tesla_per_m: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; its keys override the preset, flags override the file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated engine names.
    #[arg(long, value_delimiter = ',')]
    engines: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_atoms: Option<usize>,
    #[arg(long)]
    t_final_s: Option<f64>,
    #[arg(long)]
    dt_s: Option<f64>,
    #[arg(long)]
    bx_tesla: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// csv, json or both.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<String>>,
    /// Output directory (default: $SEMISPIN_OUT, else ./results).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, kind: ScenarioKind) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                ScenarioConfig::from_json_str(&text, kind).with_context(|| format!("invalid config file {}", p.display()))?
            }
            None => ScenarioConfig::preset(kind),
        };
        if let Some(e) = &self.engines {
            cfg.engines = e.iter().map(|s| s.trim().to_string()).collect();
        }
        if let Some(f) = &self.format {
            cfg.formats = f
                .iter()
                .map(|s| match s.trim() {
                    "csv" => Ok(OutputFormat::Csv),
                    "json" => Ok(OutputFormat::Json),
                    other => bail!("unknown output format `{other}`"),
                })
                .collect::<Result<_>>()?;
        }
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.n_atoms, self.n_atoms);
        set(&mut cfg.t_final_s, self.t_final_s);
        set(&mut cfg.dt_s, self.dt_s);
        set(&mut cfg.bx_tesla, self.bx_tesla);
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        if self.out.is_some() {
            cfg.output_dir = self.out.clone();
        }
        if cfg.output_dir.is_none() {
            cfg.output_dir = Some(default_out());
        }
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"))
}

fn out_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(default_out)
}

fn simulate(kind: ScenarioKind, extended: bool, common: &Common) -> Result<()> {
    let registry = EngineRegistry::with_defaults();
    let mut cfg = common.resolve(kind)?;
    if extended {
        if cfg.scenario != ScenarioKind::Majorana {
            bail!("--extended applies to the majorana scenario only");
        }
        if common.t_final_s.is_none() {
            cfg.t_final_s = ScenarioConfig::majorana_extended().t_final_s;
        }
    }
    if cfg.scenario == ScenarioKind::BxSweep {
        return sweep_with(cfg, &registry);
    }
    cfg.validate(&registry)?;
    let runs = run_engines(&cfg, &registry)?;
    let dir = out_dir(&cfg);
    for ts in &runs {
        let last = ts.last();
        info!(
            "{}: t = {:.4e} s, populations = [{:.6}, {:.6}]",
            ts.engine, last.t, last.populations[0], last.populations[1]
        );
    }
    let mut written = Vec::new();
    if cfg.formats.contains(&OutputFormat::Csv) {
        written.extend(write_run_csvs(&dir, &runs, &cfg)?);
    }
    if cfg.formats.contains(&OutputFormat::Json) {
        written.extend(write_run_json(&dir, &runs, &cfg)?);
    }
    report(&written);
    Ok(())
}

fn sweep_with(cfg: ScenarioConfig, registry: &EngineRegistry) -> Result<()> {
    cfg.validate(registry)?;
    let rows = run_sweep(&cfg, registry)?;
    let dir = out_dir(&cfg);
    let mut written = vec![write_sweep_csv(&dir, &rows, &cfg)?];
    if cfg.formats.contains(&OutputFormat::Json) {
        let path = dir.join("sweep.json");
        write_atomic(&path, &serde_json::to_vec_pretty(&rows)?)?;
        written.push(path);
    }
    report(&written);
    Ok(())
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn tau_table(
    sigma_min: f64,
    sigma_max: f64,
    points: usize,
    mass: f64,
    g_f: f64,
    bz_prime: f64,
    out: Option<&Path>,
) -> Result<()> {
    if !(sigma_min > 0.0 && sigma_max > sigma_min) {
        bail!("need 0 < sigma_min_m < sigma_max_m");
    }
    if points < 2 {
        bail!("points must be at least 2");
    }
    let species = Species::new(mass, g_f)?;
    // Far from the minimum ∂|B|/∂z tends to B'.
    let a = species.g_f.abs() * CODATA_2018.mu_b * bz_prime / species.mass;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sigma_m", "eta", "tau_pos_s", "tau_vel_s", "tau_approx_s", "tau_exact_s"])?;
    for sigma in log_grid(sigma_min, sigma_max, points) {
        let p = DecoherenceParams::new(a, sigma, species.mass, CODATA_2018.hbar)?;
        let exact = tau_exact(&p).map(fmt_f64).unwrap_or_default();
        w.write_record([
            fmt_f64(sigma),
            fmt_f64(p.eta()),
            fmt_f64(tau_pos(&p)),
            fmt_f64(tau_vel(&p)),
            fmt_f64(tau_approx(&p)),
            exact,
        ])?;
    }
    let bytes = w.into_inner()?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(default_out);
    fs::create_dir_all(&dir)?;
    let path = dir.join("tau_table.csv");
    write_atomic(&path, &bytes)?;
    report(&[path]);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, extended, common } => {
            let kind: ScenarioKind = scenario.parse()?;
            simulate(kind, extended, &common)
        }
        Command::Sweep { bx_list_tesla, common } => {
            let registry = EngineRegistry::with_defaults();
            let mut cfg = common.resolve(ScenarioKind::BxSweep)?;
            if cfg.scenario != ScenarioKind::BxSweep {
                bail!("sweep needs a bx_sweep config, got `{}`", cfg.scenario);
            }
            set(&mut cfg.bx_list_tesla, bx_list_tesla);
            sweep_with(cfg, &registry)
        }
        Command::TauTable { sigma_min_m, sigma_max_m, points, mass_kg, g_f, bz_prime_tesla_per_m, out } => {
            tau_table(sigma_min_m, sigma_max_m, points, mass_kg, g_f, bz_prime_tesla_per_m, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
