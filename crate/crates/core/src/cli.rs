//! Experiment configuration, execution and CSV/JSON output.
//!
//! A config file is TOML with four sections:
//!
//! ```toml
//! experiment = "ber_sweep"   # ber_sweep | convergence | csi_sweep | runtime_scaling | oracle_gap
//!
//! [system]
//! users = 20
//! antennas = 128
//! modulation = "qpsk"        # qpsk | qam16 | qam64
//! total_power = 1.0
//! channel_scale = "unit_component"
//!
//! [sweep]
//! snr_grid_db = [-5, 0, 5, 10, 15, 20]
//! precoders = ["admm", "zf_q", "zfi"]
//! trials = 200
//! symbol_vectors = 10
//! base_seed = 1
//!
//! [admm]
//! max_iters = 300
//!
//! [output]
//! path = "results"
//! ```
//!
//! Each run writes `<experiment>.csv` and `manifest.json` into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::AdmmConfig;
use crate::error::{Error, Result};
use crate::model::{Modulation, SystemConfig};
use crate::oracle::MAX_ORACLE_ANTENNAS;
use crate::sim::{
    self, convergence_trace, oracle_gap, runtime_scaling, worker_pool, BerReport, ChannelScale,
    CsiConvention, CsiError, ErrorModel, PrecoderKind, TrialSpec,
};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "ONEBIT_WORKERS";

/// Share of failed trials above which a run exits with [`EXIT_PRECODER_FAILURES`].
pub const MAX_FAILURE_RATE: f64 = 0.01;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PRECODER_FAILURES: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    BerSweep,
    Convergence,
    CsiSweep,
    RuntimeScaling,
    OracleGap,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::BerSweep => "ber_sweep",
            Experiment::Convergence => "convergence",
            Experiment::CsiSweep => "csi_sweep",
            Experiment::RuntimeScaling => "runtime_scaling",
            Experiment::OracleGap => "oracle_gap",
        }
    }

    /// CSV columns holding wall-clock measurements.
    pub fn timing_columns(self) -> &'static [&'static str] {
        match self {
            Experiment::RuntimeScaling => &["mean_solve_s", "mean_iter_s"],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub users: usize,
    #[serde(default)]
    pub antennas: Option<usize>,
    pub modulation: Modulation,
    #[serde(default = "default_power")]
    pub total_power: f64,
    #[serde(default)]
    pub channel_scale: ChannelScale,
}

fn default_power() -> f64 {
    1.0
}

fn default_trials() -> usize {
    1000
}

fn default_symbol_vectors() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub snr_grid_db: Vec<f64>,
    #[serde(default)]
    pub delta_grid: Vec<f64>,
    #[serde(default)]
    pub error_models: Vec<ErrorModel>,
    #[serde(default)]
    pub csi_convention: CsiConvention,
    #[serde(default)]
    pub precoders: Vec<PrecoderKind>,
    #[serde(default)]
    pub antennas: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_symbol_vectors")]
    pub symbol_vectors: usize,
    #[serde(default)]
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            path: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub system: SystemSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub admm: AdmmConfig,
    #[serde(default)]
    pub output: OutputSection,
}

fn field_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".into());
            field_error(&field, e.to_string().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| field_error("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// System for fixed-size experiments, with the noise set by each SNR point later.
    pub fn system(&self) -> Result<SystemConfig> {
        let antennas = self
            .system
            .antennas
            .ok_or_else(|| field_error("system.antennas", "required for this experiment"))?;
        SystemConfig::new(
            self.system.users,
            antennas,
            self.system.total_power,
            0.0,
            self.system.modulation,
        )
        .map_err(|e| field_error("system", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        if self.system.users == 0 {
            return Err(field_error("system.users", "must be positive"));
        }
        if !(self.system.total_power > 0.0 && self.system.total_power.is_finite()) {
            return Err(field_error("system.total_power", "must be positive"));
        }
        if s.trials < 1 {
            return Err(field_error("sweep.trials", "must be at least 1"));
        }
        if s.symbol_vectors < 1 {
            return Err(field_error("sweep.symbol_vectors", "must be at least 1"));
        }
        if s.snr_grid_db.iter().any(|x| !x.is_finite()) {
            return Err(field_error("sweep.snr_grid_db", "entries must be finite"));
        }
        self.admm.validate()?;
        let need_snr = || {
            if s.snr_grid_db.is_empty() {
                Err(field_error("sweep.snr_grid_db", "must not be empty"))
            } else {
                Ok(())
            }
        };
        let need_precoders = || {
            if s.precoders.is_empty() {
                Err(field_error("sweep.precoders", "must not be empty"))
            } else {
                Ok(())
            }
        };
        match self.experiment {
            Experiment::BerSweep => {
                need_snr()?;
                need_precoders()?;
                self.system()?;
            }
            Experiment::Convergence => {
                need_snr()?;
                self.system()?;
            }
            Experiment::CsiSweep => {
                need_snr()?;
                need_precoders()?;
                if s.delta_grid.is_empty() {
                    return Err(field_error("sweep.delta_grid", "must not be empty"));
                }
                if let Some(d) = s.delta_grid.iter().find(|d| !(0.0..=0.5).contains(*d)) {
                    return Err(field_error("sweep.delta_grid", format!("{d} is outside [0, 0.5]")));
                }
                if s.error_models.is_empty() {
                    return Err(field_error("sweep.error_models", "must not be empty"));
                }
                self.system()?;
            }
            Experiment::RuntimeScaling => {
                need_snr()?;
                if s.antennas.is_empty() {
                    return Err(field_error("sweep.antennas", "must not be empty"));
                }
                if let Some(r) = s.antennas.iter().find(|&&r| r < self.system.users) {
                    return Err(field_error("sweep.antennas", format!("{r} is below the user count")));
                }
            }
            Experiment::OracleGap => {
                need_snr()?;
                let sys = self.system()?;
                if sys.num_antennas > MAX_ORACLE_ANTENNAS {
                    return Err(field_error(
                        "system.antennas",
                        format!("exhaustive search supports at most {MAX_ORACLE_ANTENNAS}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// `0` lets the pool use every core.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub failure_rate: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    experiment: &'static str,
    version: &'static str,
    base_seed: u64,
    workers: usize,
    wall_time_s: f64,
    csv: String,
    timing_columns: &'static [&'static str],
    failed_trials: usize,
    config: &'a ExperimentConfig,
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn ber_rows(csv: &mut String, reports: &[BerReport], prefix: &str) {
    for r in reports {
        writeln!(
            csv,
            "{prefix}{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f(r.snr_db),
            r.precoder.name(),
            fmt_f(r.ber),
            fmt_f(r.ci_lo),
            fmt_f(r.ci_hi),
            r.trials,
            r.bit_errors,
            r.bits_sent,
            r.failed_trials,
            r.unconverged_trials,
            fmt_f(r.mean_iters)
        )
        .expect("writing to a String");
    }
}

const BER_COLUMNS: &str =
    "snr_db,precoder,ber,ci_lo,ci_hi,trials,bit_errors,bits_sent,failed_trials,unconverged_trials,mean_iters";

/// Produces the CSV body of an experiment and its failed-trial counts.
pub fn render(cfg: &ExperimentConfig, workers: usize) -> Result<(String, usize, usize)> {
    let pool = worker_pool(workers)?;
    pool.install(|| render_on_pool(cfg))
}

fn render_on_pool(cfg: &ExperimentConfig) -> Result<(String, usize, usize)> {
    let s = &cfg.sweep;
    let mut csv = String::new();
    let (mut failed, mut attempted) = (0usize, 0usize);
    let mut tally = |reports: &[BerReport]| {
        for r in reports {
            failed += r.failed_trials + r.unconverged_trials;
            attempted += r.failed_trials + r.trials;
        }
    };
    let spec_for = |sys: SystemConfig, precoder, snr_db, csi| TrialSpec {
        sys,
        precoder,
        snr_db,
        csi,
        seed: s.base_seed,
        trials: s.trials,
        num_symbol_vectors: s.symbol_vectors,
        admm: cfg.admm,
        channel_scale: cfg.system.channel_scale,
    };
    match cfg.experiment {
        Experiment::BerSweep => {
            let sys = cfg.system()?;
            csv.push_str(BER_COLUMNS);
            csv.push('\n');
            for &snr in &s.snr_grid_db {
                let reports = s
                    .precoders
                    .iter()
                    .map(|&p| sim::run_point(&spec_for(sys, p, snr, CsiError::perfect())))
                    .collect::<Result<Vec<_>>>()?;
                tally(&reports);
                ber_rows(&mut csv, &reports, "");
            }
        }
        Experiment::CsiSweep => {
            let sys = cfg.system()?;
            csv.push_str("error_model,delta,");
            csv.push_str(BER_COLUMNS);
            csv.push('\n');
            for &model in &s.error_models {
                for &delta in &s.delta_grid {
                    let csi = CsiError {
                        delta,
                        model,
                        convention: s.csi_convention,
                    };
                    for &snr in &s.snr_grid_db {
                        let reports = s
                            .precoders
                            .iter()
                            .map(|&p| sim::run_point(&spec_for(sys, p, snr, csi)))
                            .collect::<Result<Vec<_>>>()?;
                        tally(&reports);
                        ber_rows(&mut csv, &reports, &format!("{},{},", model.name(), fmt_f(delta)));
                    }
                }
            }
        }
        Experiment::Convergence => {
            let sys = cfg.system()?;
            csv.push_str("snr_db,iter,delta_v,delta_u,lagrangian,lambda\n");
            for &snr in &s.snr_grid_db {
                for row in convergence_trace(&sys, snr, s.base_seed, &cfg.admm, cfg.system.channel_scale)? {
                    writeln!(
                        csv,
                        "{},{},{},{},{},{}",
                        fmt_f(snr),
                        row.iter,
                        fmt_f(row.delta_v),
                        fmt_f(row.delta_u),
                        fmt_f(row.lagrangian),
                        fmt_f(row.lambda)
                    )
                    .expect("writing to a String");
                }
            }
        }
        Experiment::RuntimeScaling => {
            let template = SystemConfig::new(
                cfg.system.users,
                cfg.system.users,
                cfg.system.total_power,
                0.0,
                cfg.system.modulation,
            )?;
            csv.push_str("snr_db,R,mean_solve_s,mean_iters,mean_iter_s\n");
            for &snr in &s.snr_grid_db {
                let rows = runtime_scaling(
                    &template,
                    &s.antennas,
                    snr,
                    s.trials,
                    s.base_seed,
                    &cfg.admm,
                    cfg.system.channel_scale,
                )?;
                for row in rows {
                    writeln!(
                        csv,
                        "{},{},{},{},{}",
                        fmt_f(snr),
                        row.antennas,
                        fmt_f(row.mean_solve_s),
                        fmt_f(row.mean_iters),
                        fmt_f(row.mean_iter_s)
                    )
                    .expect("writing to a String");
                }
            }
        }
        Experiment::OracleGap => {
            let sys = cfg.system()?;
            csv.push_str("snr_db,instance,oracle,admm,zf_q,mrt_q\n");
            for &snr in &s.snr_grid_db {
                for row in oracle_gap(&sys, snr, s.trials, s.base_seed, &cfg.admm, cfg.system.channel_scale)? {
                    writeln!(
                        csv,
                        "{},{},{},{},{},{}",
                        fmt_f(snr),
                        row.instance,
                        fmt_f(row.oracle),
                        fmt_f(row.admm),
                        fmt_f(row.zf_q),
                        fmt_f(row.mrt_q)
                    )
                    .expect("writing to a String");
                }
            }
        }
    }
    Ok((csv, failed, attempted))
}

/// Worker count from the override, else the environment, else every core.
pub fn resolve_workers(requested: Option<usize>) -> Result<usize> {
    if let Some(w) = requested {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| field_error(WORKERS_ENV, format!("not a worker count: {v:?}"))),
        Err(_) => Ok(0),
    }
}

/// Runs a parsed config and writes its CSV and manifest.
pub fn execute(mut cfg: ExperimentConfig, overrides: &Overrides) -> Result<RunSummary> {
    if let Some(seed) = overrides.seed {
        cfg.sweep.base_seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.output.path = out.clone();
    }
    let workers = resolve_workers(overrides.workers)?;
    let start = Instant::now();
    let (csv, failed, attempted) = render(&cfg, workers)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    fs::create_dir_all(&cfg.output.path)?;
    let csv_name = format!("{}.csv", cfg.experiment.name());
    let csv_path = cfg.output.path.join(&csv_name);
    fs::write(&csv_path, csv)?;
    let manifest = Manifest {
        experiment: cfg.experiment.name(),
        version: env!("CARGO_PKG_VERSION"),
        base_seed: cfg.sweep.base_seed,
        workers,
        wall_time_s,
        csv: csv_name,
        timing_columns: cfg.experiment.timing_columns(),
        failed_trials: failed,
        config: &cfg,
    };
    let manifest_path = cfg.output.path.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidInput(format!("cannot serialise manifest: {e}")))?;
    fs::write(&manifest_path, json + "\n")?;
    Ok(RunSummary {
        csv_path,
        manifest_path,
        failure_rate: if attempted > 0 { failed as f64 / attempted as f64 } else { 0.0 },
    })
}

/// Full `run` subcommand: returns the process exit code and prints diagnostics to stderr.
pub fn run(config_path: &Path, overrides: &Overrides) -> i32 {
    let result = ExperimentConfig::load(config_path).and_then(|cfg| execute(cfg, overrides));
    match result {
        Ok(summary) if summary.failure_rate > MAX_FAILURE_RATE => {
            eprintln!(
                "error: {:.2}% of trials failed (limit {:.0}%); results written to {}",
                100.0 * summary.failure_rate,
                100.0 * MAX_FAILURE_RATE,
                summary.csv_path.display()
            );
            EXIT_PRECODER_FAILURES
        }
        Ok(summary) => {
            println!("wrote {}", summary.csv_path.display());
            println!("wrote {}", summary.manifest_path.display());
            EXIT_OK
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
