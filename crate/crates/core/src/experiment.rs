//! Parameter sweeps over channel realizations and their CSV summaries.
//!
//! Every realization `r` draws its channels, grouping and swarm from
//! `realization_seed(config.seed, r)`, so the same realization index sees the
//! same channels at every sweep point and any row can be replayed alone.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{fdma, fully_digital_zf, tdma_zf};
use crate::beamforming::{optimize, FitnessMode, OptimizeResult};
use crate::channel::{generate_channels, ChannelSet};
use crate::config::SystemConfig;
use crate::error::{invalid, Error, Result};
use crate::grouping::{group_users, Grouping};
use crate::rng::{realization_seed, rng_stream, CHANNEL_STREAM, GROUPING_STREAM};

pub const ROW_HEADER: [&str; 9] = [
    "sweep_var",
    "sweep_value",
    "realization",
    "seed",
    "scheme",
    "asr_bps_hz",
    "ee_bps_hz_per_w",
    "feasible",
    "wall_ms",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "sweep_var",
    "sweep_value",
    "scheme",
    "n",
    "mean_asr_bps_hz",
    "mean_ee_bps_hz_per_w",
    "feasible_fraction",
    "gap_vs_oma_bps_hz",
];

/// Sweep variable name used by single-scenario runs.
pub const NO_SWEEP: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Grouping, swarm-designed hybrid beamformer and two-level allocation.
    Proposed,
    /// Same pipeline with inter-group interference forced to zero.
    Ideal,
    TdmaZf,
    Fdma,
    FullyDigitalZf,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Proposed,
        Scheme::Ideal,
        Scheme::TdmaZf,
        Scheme::Fdma,
        Scheme::FullyDigitalZf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Ideal => "ideal",
            Scheme::TdmaZf => "tdma-zf",
            Scheme::Fdma => "fdma",
            Scheme::FullyDigitalZf => "fully-digital-zf",
        }
    }

    /// Orthogonal multiple access reference.
    pub fn is_oma(self) -> bool {
        matches!(self, Scheme::TdmaZf | Scheme::Fdma)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Uniform per-user rate floor, bits/s/Hz.
    RateFloor,
    /// `P / sigma^2` in dB, applied through the noise power.
    SnrDb,
    NRfChains,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::RateFloor => "rate_floor",
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::NRfChains => "n_rf_chains",
        }
    }

    /// `base` with this variable set to `value`, validated.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut c = base.clone();
        match self {
            SweepVariable::RateFloor => c.set_uniform_rate_floor(value),
            SweepVariable::SnrDb => c.set_snr_db(value),
            SweepVariable::NRfChains => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(invalid("n_rf_chains", format!("not a positive integer: {value}")));
                }
                c.n_rf_chains = value as usize;
            }
        }
        c.validate()
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [SweepVariable::RateFloor, SweepVariable::SnrDb, SweepVariable::NRfChains]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown sweep variable `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    /// Ascending.
    pub values: Vec<f64>,
    pub n_realizations: usize,
    pub schemes: Vec<Scheme>,
}

impl SweepSpec {
    pub fn validate(self) -> Result<Self> {
        if self.values.is_empty() {
            return Err(invalid("values", "empty sweep"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "non-finite sweep value"));
        }
        if self.values.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("values", "sweep values must be sorted ascending"));
        }
        if self.n_realizations == 0 {
            return Err(invalid("n_realizations", "must be >= 1"));
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes", "no scheme selected"));
        }
        Ok(self)
    }
}

/// One scheme's result on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub asr: f64,
    pub ee: f64,
    pub feasible: bool,
    pub wall_ms: u64,
}

/// Everything computed for one channel realization.
#[derive(Debug, Clone)]
pub struct RealizationRun {
    pub seed: u64,
    pub channels: ChannelSet,
    /// `None` when grouping failed, in which case every outcome is zero.
    pub grouping: Option<Grouping>,
    pub proposed: Option<OptimizeResult>,
    pub ideal: Option<OptimizeResult>,
    /// In the order the schemes were requested.
    pub outcomes: Vec<SchemeOutcome>,
}

fn elapsed_ms(start: Instant, timing: bool) -> u64 {
    if timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

/// Runs `schemes` on the realization drawn from `seed`. With `timing` off
/// every `wall_ms` is zero so that output depends on the inputs only.
pub fn run_realization(config: &SystemConfig, seed: u64, schemes: &[Scheme], timing: bool) -> RealizationRun {
    let channels = generate_channels(config, &mut rng_stream(seed, CHANNEL_STREAM));
    let grouping = match group_users(&channels, config, &mut rng_stream(seed, GROUPING_STREAM)) {
        Ok(g) => g,
        Err(e) => {
            log::warn!("seed {seed}: grouping failed: {e}");
            let outcomes = schemes
                .iter()
                .map(|&scheme| SchemeOutcome {
                    scheme,
                    asr: 0.0,
                    ee: 0.0,
                    feasible: false,
                    wall_ms: 0,
                })
                .collect();
            return RealizationRun {
                seed,
                channels,
                grouping: None,
                proposed: None,
                ideal: None,
                outcomes,
            };
        }
    };

    let needs_design = schemes.iter().any(|s| matches!(s, Scheme::Proposed | Scheme::Fdma));
    let start = Instant::now();
    let proposed = needs_design.then(|| optimize(&channels, &grouping, config, seed, FitnessMode::Designed));
    let design_ms = elapsed_ms(start, timing);
    let start = Instant::now();
    let ideal = schemes
        .contains(&Scheme::Ideal)
        .then(|| optimize(&channels, &grouping, config, seed, FitnessMode::Ideal));
    let ideal_ms = elapsed_ms(start, timing);

    let outcomes = schemes
        .iter()
        .map(|&scheme| {
            let start = Instant::now();
            let (asr, ee, feasible) = match scheme {
                Scheme::Proposed => {
                    let p = proposed.as_ref().expect("design computed");
                    (p.asr(), p.ee(), p.feasible())
                }
                Scheme::Ideal => {
                    let p = ideal.as_ref().expect("ideal design computed");
                    (p.asr(), p.ee(), p.feasible())
                }
                Scheme::TdmaZf => {
                    let r = tdma_zf(&channels, &grouping, config);
                    (r.asr, r.ee, r.feasible)
                }
                Scheme::Fdma => match proposed.as_ref().and_then(|p| p.design.as_ref()) {
                    Some(d) => {
                        let r = fdma(&channels, &grouping, config, &d.beamformer.w);
                        (r.asr, r.ee, r.feasible)
                    }
                    None => (0.0, 0.0, false),
                },
                Scheme::FullyDigitalZf => {
                    let r = fully_digital_zf(&channels, config);
                    (r.asr, r.ee, r.feasible)
                }
            };
            let wall_ms = match scheme {
                Scheme::Proposed => design_ms,
                Scheme::Ideal => ideal_ms,
                _ => elapsed_ms(start, timing),
            };
            SchemeOutcome {
                scheme,
                asr,
                ee,
                feasible,
                wall_ms,
            }
        })
        .collect();

    RealizationRun {
        seed,
        channels,
        grouping: Some(grouping),
        proposed,
        ideal,
        outcomes,
    }
}

/// One line of the raw sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub realization: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub asr: f64,
    pub ee: f64,
    pub feasible: bool,
    pub wall_ms: u64,
}

fn rows_of(var: &str, value: f64, realization: usize, run: &RealizationRun) -> Vec<SweepRow> {
    run.outcomes
        .iter()
        .map(|o| SweepRow {
            sweep_var: var.to_string(),
            sweep_value: value,
            realization,
            seed: run.seed,
            scheme: o.scheme,
            asr: o.asr,
            ee: o.ee,
            feasible: o.feasible,
            wall_ms: o.wall_ms,
        })
        .collect()
}

/// Runs `n_realizations` of one scenario; rows carry [`NO_SWEEP`].
pub fn run_scenario(config: &SystemConfig, n_realizations: usize, schemes: &[Scheme], timing: bool) -> Vec<SweepRow> {
    (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let seed = realization_seed(config.seed, r);
            rows_of(NO_SWEEP, 0.0, r, &run_realization(config, seed, schemes, timing))
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Every sweep point times every realization times every scheme, ordered by
/// point, then realization, then requested scheme order.
pub fn run_sweep(spec: &SweepSpec, base: &SystemConfig, timing: bool) -> Result<Vec<SweepRow>> {
    let spec = spec.clone().validate()?;
    let configs: Vec<SystemConfig> = spec
        .values
        .iter()
        .map(|&v| spec.variable.apply(base, v))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (config, &value) in configs.iter().zip(&spec.values) {
        log::info!("{} = {value}", spec.variable);
        let point: Vec<Vec<SweepRow>> = (0..spec.n_realizations)
            .into_par_iter()
            .map(|r| {
                let seed = realization_seed(config.seed, r);
                let run = run_realization(config, seed, &spec.schemes, timing);
                rows_of(spec.variable.name(), value, r, &run)
            })
            .collect();
        rows.extend(point.into_iter().flatten());
    }
    Ok(rows)
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep_var.clone(),
            r.sweep_value.to_string(),
            r.realization.to_string(),
            r.seed.to_string(),
            r.scheme.to_string(),
            r.asr.to_string(),
            r.ee.to_string(),
            r.feasible.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a raw sweep table. Errors carry the 1-based line number.
pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(ROW_HEADER) {
        return Err(Error::MalformedCsv {
            row: 1,
            reason: format!("expected header {}", ROW_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| Error::MalformedCsv { row, reason };
        if rec.len() != ROW_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", ROW_HEADER.len(), rec.len())));
        }
        fn field<T: FromStr>(rec: &csv::StringRecord, i: usize) -> std::result::Result<T, String> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| format!("bad {} `{}`", ROW_HEADER[i], &rec[i]))
        }
        rows.push(SweepRow {
            sweep_var: rec[0].to_string(),
            sweep_value: field(&rec, 1).map_err(bad)?,
            realization: field(&rec, 2).map_err(bad)?,
            seed: field(&rec, 3).map_err(bad)?,
            scheme: rec[4].trim().parse().map_err(bad)?,
            asr: field(&rec, 5).map_err(bad)?,
            ee: field(&rec, 6).map_err(bad)?,
            feasible: field(&rec, 7).map_err(bad)?,
            wall_ms: field(&rec, 8).map_err(bad)?,
        });
    }
    Ok(rows)
}

/// Means over realizations at one (sweep point, scheme).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub n: usize,
    pub mean_asr: f64,
    pub mean_ee: f64,
    pub feasible_fraction: f64,
    /// Mean ASR minus the best OMA scheme's mean ASR at the same point, or
    /// zero when the point has no OMA scheme.
    pub gap_vs_oma: f64,
}

/// Aggregates raw rows by (sweep_var, sweep_value, scheme), keeping the
/// order of first appearance.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    struct Acc {
        key: (String, f64, Scheme),
        n: usize,
        asr: f64,
        ee: f64,
        feasible: usize,
    }
    let mut accs: Vec<Acc> = Vec::new();
    for r in rows {
        let pos = accs.iter().position(|a| {
            a.key.0 == r.sweep_var && a.key.1.to_bits() == r.sweep_value.to_bits() && a.key.2 == r.scheme
        });
        let a = match pos {
            Some(i) => &mut accs[i],
            None => {
                accs.push(Acc {
                    key: (r.sweep_var.clone(), r.sweep_value, r.scheme),
                    n: 0,
                    asr: 0.0,
                    ee: 0.0,
                    feasible: 0,
                });
                accs.last_mut().expect("just pushed")
            }
        };
        a.n += 1;
        a.asr += r.asr;
        a.ee += r.ee;
        a.feasible += usize::from(r.feasible);
    }
    let mut out: Vec<SummaryRow> = accs
        .iter()
        .map(|a| SummaryRow {
            sweep_var: a.key.0.clone(),
            sweep_value: a.key.1,
            scheme: a.key.2,
            n: a.n,
            mean_asr: a.asr / a.n as f64,
            mean_ee: a.ee / a.n as f64,
            feasible_fraction: a.feasible as f64 / a.n as f64,
            gap_vs_oma: 0.0,
        })
        .collect();
    let same_point = |a: &SummaryRow, b: &SummaryRow| {
        a.sweep_var == b.sweep_var && a.sweep_value.to_bits() == b.sweep_value.to_bits()
    };
    for i in 0..out.len() {
        let best_oma = out
            .iter()
            .filter(|o| same_point(o, &out[i]) && o.scheme.is_oma())
            .map(|o| o.mean_asr)
            .fold(f64::NEG_INFINITY, f64::max);
        if best_oma.is_finite() {
            out[i].gap_vs_oma = out[i].mean_asr - best_oma;
        }
    }
    out
}

pub fn summarize_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    Ok(summarize(&read_rows_csv(input)?))
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep_var.clone(),
            r.sweep_value.to_string(),
            r.scheme.to_string(),
            r.n.to_string(),
            r.mean_asr.to_string(),
            r.mean_ee.to_string(),
            r.feasible_fraction.to_string(),
            r.gap_vs_oma.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
