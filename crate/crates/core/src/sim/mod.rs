//! Monte Carlo BER engine.
//!
//! Every trial draws its own channel, CSI error, symbols and noise from a
//! ChaCha stream keyed by `(seed, trial_index)`, so the aggregate counts do
//! not depend on how trials are scheduled across workers. Precoders that
//! share a seed see the same channels, symbols and noise.

mod experiments;

pub use experiments::{
    convergence_trace, oracle_gap, runtime_scaling, ConvergenceRow, OracleGapRow, RuntimeRow,
};

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmConfig, AdmmPrecoder, PrecodeOutput};
use crate::baselines::{LinearKind, LinearPrecoder};
use crate::error::{Error, Result};
use crate::model::{genie_rho, ComplexChannel, Constellation, SystemConfig};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    Admm,
    ZfQ,
    MrtQ,
    Zfi,
}

impl PrecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            PrecoderKind::Admm => "admm",
            PrecoderKind::ZfQ => "zf_q",
            PrecoderKind::MrtQ => "mrt_q",
            PrecoderKind::Zfi => "zfi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorModel {
    None,
    Gaussian,
    Uniform,
}

impl ErrorModel {
    pub fn name(self) -> &'static str {
        match self {
            ErrorModel::None => "none",
            ErrorModel::Gaussian => "gaussian",
            ErrorModel::Uniform => "uniform",
        }
    }
}

/// How `δ` blends the true channel with the error matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiConvention {
    /// `Ĥ = (1 − δ)H + δΔH`; `δ = 0` is perfect CSI.
    #[default]
    Corrected,
    /// `Ĥ = δH + (1 − δ)ΔH`, kept for sensitivity checks.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiError {
    pub delta: f64,
    pub model: ErrorModel,
    #[serde(default)]
    pub convention: CsiConvention,
}

impl CsiError {
    pub fn perfect() -> Self {
        Self {
            delta: 0.0,
            model: ErrorModel::None,
            convention: CsiConvention::Corrected,
        }
    }
}

/// Per-component variance of the channel entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelScale {
    /// Re and Im each `N(0, 1)`, so `E|h|² = 2`.
    #[default]
    UnitComponent,
    /// Re and Im each `N(0, 1/2)`, so `E|h|² = 1`.
    UnitEntry,
}

impl ChannelScale {
    fn component_std(self) -> f64 {
        match self {
            ChannelScale::UnitComponent => 1.0,
            ChannelScale::UnitEntry => std::f64::consts::FRAC_1_SQRT_2,
        }
    }
}

/// One point of a BER sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub sys: SystemConfig,
    pub precoder: PrecoderKind,
    pub snr_db: f64,
    pub csi: CsiError,
    pub seed: u64,
    pub trials: usize,
    pub num_symbol_vectors: usize,
    pub admm: AdmmConfig,
    pub channel_scale: ChannelScale,
}

impl TrialSpec {
    pub fn new(sys: SystemConfig, precoder: PrecoderKind, snr_db: f64, seed: u64, trials: usize) -> Self {
        Self {
            sys,
            precoder,
            snr_db,
            csi: CsiError::perfect(),
            seed,
            trials,
            num_symbol_vectors: 10,
            admm: AdmmConfig::default(),
            channel_scale: ChannelScale::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sys.validate()?;
        self.admm.validate()?;
        check_delta(self.csi.delta)?;
        if self.trials == 0 || self.num_symbol_vectors == 0 {
            return Err(Error::InvalidInput(
                "trials and symbol vectors per trial must be positive".into(),
            ));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidInput(format!("SNR must be finite, got {}", self.snr_db)));
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..=0.5).contains(&delta) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("CSI factor must lie in [0, 0.5], got {delta}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerReport {
    pub snr_db: f64,
    pub precoder: PrecoderKind,
    pub bit_errors: u64,
    pub bits_sent: u64,
    pub ber: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub trials: usize,
    pub failed_trials: usize,
    /// Completed trials in which the ADMM precoder hit its iteration cap on some vector.
    pub unconverged_trials: usize,
    pub wall_time_s: f64,
    pub mean_iters: f64,
}

impl BerReport {
    pub fn failure_rate(&self) -> f64 {
        (self.failed_trials + self.unconverged_trials) as f64 / (self.trials + self.failed_trials).max(1) as f64
    }
}

/// Two-sided 95% Wilson score interval for `errors / n`.
pub fn wilson_interval(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    (lo, (centre + half).min(1.0))
}

/// Random stream for trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn draw_channel<R: Rng + ?Sized>(
    num_users: usize,
    num_antennas: usize,
    scale: ChannelScale,
    rng: &mut R,
) -> ComplexChannel {
    let std = scale.component_std();
    let h = DMatrix::from_fn(num_users, num_antennas, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(std * re, std * im)
    });
    ComplexChannel::new(h).expect("Gaussian draws are finite")
}

fn draw_error<R: Rng + ?Sized>(model: ErrorModel, rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    match model {
        ErrorModel::None => DMatrix::zeros(rows, cols),
        ErrorModel::Gaussian => {
            let n = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid std");
            DMatrix::from_fn(rows, cols, |_, _| C64::new(n.sample(rng), n.sample(rng)))
        }
        ErrorModel::Uniform => {
            let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
            let k = 1.0 / 3f64.sqrt();
            DMatrix::from_fn(rows, cols, |_, _| C64::new(k * u.sample(rng), k * u.sample(rng)))
        }
    }
}

/// Channel estimate seen by the precoder.
pub fn corrupt_csi<R: Rng + ?Sized>(
    h: &ComplexChannel,
    csi: &CsiError,
    rng: &mut R,
) -> Result<ComplexChannel> {
    check_delta(csi.delta)?;
    let (rows, cols) = h.entries().shape();
    let err = draw_error(csi.model, rows, cols, rng);
    if csi.model == ErrorModel::None || (csi.delta == 0.0 && csi.convention == CsiConvention::Corrected) {
        return Ok(h.clone());
    }
    let (keep, mix) = match csi.convention {
        CsiConvention::Corrected => (1.0 - csi.delta, csi.delta),
        CsiConvention::Literal => (csi.delta, 1.0 - csi.delta),
    };
    ComplexChannel::new(h.entries() * C64::new(keep, 0.0) + err * C64::new(mix, 0.0))
}

/// Nearest-point detection of `y / gain`, where `y ≈ gain·s`; returns labels and
/// the concatenated bits.
pub fn detect(y: &DVector<C64>, gain: f64, constellation: &Constellation) -> (Vec<usize>, Vec<u8>) {
    let labels: Vec<usize> = y.iter().map(|&yi| constellation.nearest(yi / gain)).collect();
    let bits = labels.iter().flat_map(|&l| constellation.bits(l)).collect();
    (labels, bits)
}

enum Precoder {
    Admm(Box<AdmmPrecoder>),
    Linear(LinearPrecoder),
    Infinite(LinearPrecoder),
}

impl Precoder {
    fn build(kind: PrecoderKind, estimate: ComplexChannel, sys: &SystemConfig, admm: &AdmmConfig) -> Result<Self> {
        Ok(match kind {
            PrecoderKind::Admm => Precoder::Admm(Box::new(AdmmPrecoder::new(estimate, *sys, *admm)?)),
            PrecoderKind::ZfQ => Precoder::Linear(LinearPrecoder::build(&estimate, LinearKind::Zf, sys)?),
            PrecoderKind::MrtQ => Precoder::Linear(LinearPrecoder::build(&estimate, LinearKind::Mrt, sys)?),
            PrecoderKind::Zfi => Precoder::Infinite(LinearPrecoder::build(&estimate, LinearKind::Zf, sys)?),
        })
    }

    /// Transmit vector, receiver scale, iteration count and convergence flag.
    fn precode(
        &self,
        estimate: &ComplexChannel,
        s: &DVector<C64>,
        sys: &SystemConfig,
    ) -> Result<(DVector<C64>, f64, usize, bool)> {
        match self {
            Precoder::Admm(p) => {
                let PrecodeOutput { z, rho, iters_used, converged, .. } = p.precode(s)?;
                Ok((z, rho, iters_used, converged))
            }
            Precoder::Linear(p) => {
                let out = p.precode_quantized(estimate, s, sys)?;
                Ok((out.z, out.rho, 0, true))
            }
            Precoder::Infinite(p) => {
                let z = p.precode_infinite(s)?;
                let rho = genie_rho(estimate, s, &z, sys.noise_variance);
                Ok((z, rho, 0, true))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    bit_errors: u64,
    bits: u64,
    iters: u64,
    vectors: u64,
    trials: usize,
    failed: usize,
    unconverged: usize,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            bit_errors: self.bit_errors + o.bit_errors,
            bits: self.bits + o.bits,
            iters: self.iters + o.iters,
            vectors: self.vectors + o.vectors,
            trials: self.trials + o.trials,
            failed: self.failed + o.failed,
            unconverged: self.unconverged + o.unconverged,
        }
    }
}

fn run_trial(spec: &TrialSpec, sys: &SystemConfig, constellation: &Constellation, index: usize) -> Tally {
    match try_trial(spec, sys, constellation, index) {
        Ok(t) => t,
        Err(_) => Tally {
            failed: 1,
            ..Tally::default()
        },
    }
}

fn try_trial(spec: &TrialSpec, sys: &SystemConfig, constellation: &Constellation, index: usize) -> Result<Tally> {
    let mut rng = trial_rng(spec.seed, index as u64);
    let (u, r) = (sys.num_users, sys.num_antennas);
    let h = draw_channel(u, r, spec.channel_scale, &mut rng);
    let estimate = corrupt_csi(&h, &spec.csi, &mut rng)?;
    let precoder = Precoder::build(spec.precoder, estimate.clone(), sys, &spec.admm)?;
    let noise_std = (sys.noise_variance / 2.0).sqrt();
    let mut tally = Tally {
        trials: 1,
        ..Tally::default()
    };
    for _ in 0..spec.num_symbol_vectors {
        let labels: Vec<usize> = (0..u).map(|_| rng.random_range(0..constellation.len())).collect();
        let s = DVector::from_fn(u, |i, _| constellation.point(labels[i]));
        let noise = DVector::from_fn(u, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(noise_std * re, noise_std * im)
        });
        let (z, rho, iters, converged) = precoder.precode(&estimate, &s, sys)?;
        if !converged {
            tally.unconverged = 1;
        }
        let y = h.apply(&z) + noise;
        // ρ scales the received signal back onto the symbols, so the receive gain is 1/ρ
        let (detected, _) = detect(&y, 1.0 / rho, constellation);
        tally.bit_errors += labels
            .iter()
            .zip(&detected)
            .map(|(&a, &b)| u64::from((a ^ b).count_ones()))
            .sum::<u64>();
        tally.bits += (u * constellation.bits_per_symbol()) as u64;
        tally.iters += iters as u64;
        tally.vectors += 1;
    }
    Ok(tally)
}

/// Runs one sweep point on the current rayon pool.
pub fn run_point(spec: &TrialSpec) -> Result<BerReport> {
    spec.validate()?;
    let sys = spec.sys.with_snr_db(spec.snr_db);
    let constellation = Constellation::new(sys.modulation);
    let start = Instant::now();
    let tally = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, &sys, &constellation, t))
        .reduce(Tally::default, Tally::merge);
    let (ci_lo, ci_hi) = wilson_interval(tally.bit_errors, tally.bits);
    Ok(BerReport {
        snr_db: spec.snr_db,
        precoder: spec.precoder,
        bit_errors: tally.bit_errors,
        bits_sent: tally.bits,
        ber: if tally.bits > 0 { tally.bit_errors as f64 / tally.bits as f64 } else { 0.0 },
        ci_lo,
        ci_hi,
        trials: tally.trials,
        failed_trials: tally.failed,
        unconverged_trials: tally.unconverged,
        wall_time_s: start.elapsed().as_secs_f64(),
        mean_iters: if tally.vectors > 0 { tally.iters as f64 / tally.vectors as f64 } else { 0.0 },
    })
}

/// Thread pool with `workers` threads; `0` lets rayon choose.
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
}

/// Runs every spec on a pool of `workers` threads.
pub fn run_sweep(specs: &[TrialSpec], workers: usize) -> Result<Vec<BerReport>> {
    let pool = worker_pool(workers)?;
    pool.install(|| specs.iter().map(run_point).collect())
}
