use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmwave_noma::experiment::{
    run_scenario, run_sweep, summarize, summarize_csv, write_rows_csv, write_summary_csv, Scheme,
    SweepSpec, SweepVariable,
};
use mmwave_noma::{PsoConfig, SystemConfig};

/// Downlink mmWave NOMA simulator: user grouping, power allocation and
/// hybrid beamforming.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario over several channel realizations.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one scenario parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// rate_floor, snr_db or n_rf_chains.
        #[arg(long = "var")]
        variable: SweepVariable,
        /// Comma-separated ascending values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Aggregate a raw sweep CSV into per-point means.
    Summarize {
        /// Raw sweep CSV.
        input: PathBuf,
        /// Output path, stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; fields it omits keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Raw per-realization CSV, stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-point means to this path.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Comma-separated scheme names.
    #[arg(long, value_delimiter = ',', default_value = "proposed,tdma-zf,fdma,fully-digital-zf")]
    schemes: Vec<Scheme>,
    #[arg(long, default_value_t = 20)]
    realizations: usize,
    /// Write 0 in the wall_ms column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    overrides: Overrides,
}

/// Per-field overrides, applied after the config file.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_antennas: Option<usize>,
    #[arg(long)]
    n_rf_chains: Option<usize>,
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    total_power: Option<f64>,
    #[arg(long)]
    noise_power: Option<f64>,
    /// Comma-separated, one per user.
    #[arg(long, value_delimiter = ',')]
    rate_floors: Option<Vec<f64>>,
    /// Same floor for every user.
    #[arg(long, conflicts_with = "rate_floors")]
    rate_floor: Option<f64>,
    /// Sets the noise power from `total_power / noise_power` in dB.
    #[arg(long, conflicts_with = "noise_power")]
    snr_db: Option<f64>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    los: Option<bool>,
    #[arg(long)]
    nlos_backoff_db: Option<f64>,
    #[arg(long)]
    cell_min_m: Option<f64>,
    #[arg(long)]
    cell_max_m: Option<f64>,
    #[arg(long)]
    ref_dist_m: Option<f64>,
    #[arg(long)]
    path_loss_exp: Option<f64>,
    #[arg(long)]
    antenna_spacing_ratio: Option<f64>,
    #[arg(long)]
    f_max: Option<usize>,
    #[arg(long)]
    rf_chain_power_w: Option<f64>,
    #[arg(long)]
    phase_shifter_power_w: Option<f64>,
    #[arg(long)]
    max_grouping_iterations: Option<usize>,
    #[arg(long)]
    n_particles: Option<usize>,
    #[arg(long)]
    n_iterations: Option<usize>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    split_component_draws: Option<bool>,
}

macro_rules! set {
    ($src:expr, $dst:expr, $($field:ident),+) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })+
    };
}

impl Overrides {
    fn apply(&self, c: &mut SystemConfig) {
        set!(self, c, seed, n_antennas, n_rf_chains, n_users, total_power, noise_power, rate_floors);
        set!(self, c, n_paths, los, nlos_backoff_db, cell_min_m, cell_max_m, ref_dist_m);
        set!(self, c, path_loss_exp, antenna_spacing_ratio, f_max, rf_chain_power_w);
        set!(self, c, phase_shifter_power_w, max_grouping_iterations);
        set!(self, c.pso, n_particles, n_iterations, c1, c2, omega_max, omega_min);
        set!(self, c.pso, split_component_draws);
        if let Some(r) = self.rate_floor {
            c.set_uniform_rate_floor(r);
        }
        if let Some(db) = self.snr_db {
            c.set_snr_db(db);
        }
    }
}

/// Desk-scale swarm unless the config file or flags say otherwise.
fn load_config(common: &Common) -> Result<SystemConfig, Box<dyn std::error::Error>> {
    let mut base = toml::Table::try_from(SystemConfig {
        pso: PsoConfig::desk(),
        ..SystemConfig::default()
    })?;
    if let Some(path) = &common.config {
        let file: toml::Table = std::fs::read_to_string(path)?.parse()?;
        merge(&mut base, file);
    }
    let mut config: SystemConfig = base.try_into()?;
    common.overrides.apply(&mut config);
    // a uniform floor list follows the user count
    if let Some(&r) = config.rate_floors.first() {
        if config.rate_floors.len() != config.n_users && config.rate_floors.iter().all(|&x| x == r) {
            config.set_uniform_rate_floor(r);
        }
    }
    Ok(config.validate()?)
}

fn merge(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}

fn writer(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { common } => {
            let config = load_config(&common)?;
            let rows = run_scenario(&config, common.realizations.max(1), &common.schemes, !common.no_timing);
            write_rows_csv(&rows, writer(common.out.as_deref())?)?;
            if let Some(p) = &common.summary {
                write_summary_csv(&summarize(&rows), writer(Some(p))?)?;
            }
        }
        Command::Sweep {
            common,
            variable,
            values,
        } => {
            let config = load_config(&common)?;
            let spec = SweepSpec {
                variable,
                values,
                n_realizations: common.realizations,
                schemes: common.schemes.clone(),
            };
            let rows = run_sweep(&spec, &config, !common.no_timing)?;
            write_rows_csv(&rows, writer(common.out.as_deref())?)?;
            if let Some(p) = &common.summary {
                write_summary_csv(&summarize(&rows), writer(Some(p))?)?;
            }
        }
        Command::Summarize { input, out } => {
            let summary = summarize_csv(File::open(&input)?)?;
            write_summary_csv(&summary, writer(out.as_deref())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
