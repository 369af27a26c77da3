//! Non-BER experiments: convergence traces, runtime scaling and the gap to
//! the exhaustive optimum.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{draw_channel, trial_rng, ChannelScale};
use crate::admm::{AdmmConfig, AdmmPrecoder};
use crate::baselines::{LinearKind, LinearPrecoder};
use crate::error::Result;
use crate::model::{mmse_objective, optimal_rho, ComplexChannel, Constellation, SystemConfig};
use crate::oracle::exhaustive_min;
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub iter: usize,
    pub lambda: f64,
    pub delta_v: f64,
    pub delta_u: f64,
    pub lagrangian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeRow {
    pub antennas: usize,
    pub mean_solve_s: f64,
    pub mean_iters: f64,
    /// Iteration-loop time divided by iterations, factorization excluded.
    pub mean_iter_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleGapRow {
    pub instance: usize,
    pub oracle: f64,
    pub admm: f64,
    pub zf_q: f64,
    pub mrt_q: f64,
}

fn draw_symbols<R: Rng + ?Sized>(c: &Constellation, users: usize, rng: &mut R) -> DVector<C64> {
    DVector::from_fn(users, |_, _| c.point(rng.random_range(0..c.len())))
}

fn draw_instance(
    sys: &SystemConfig,
    scale: ChannelScale,
    seed: u64,
    index: usize,
) -> (ComplexChannel, DVector<C64>) {
    let mut rng = trial_rng(seed, index as u64);
    let h = draw_channel(sys.num_users, sys.num_antennas, scale, &mut rng);
    let s = draw_symbols(&Constellation::new(sys.modulation), sys.num_users, &mut rng);
    (h, s)
}

/// Iterate gaps and Lagrangian of one ADMM run on instance 0 of `seed`.
pub fn convergence_trace(
    sys: &SystemConfig,
    snr_db: f64,
    seed: u64,
    admm: &AdmmConfig,
    scale: ChannelScale,
) -> Result<Vec<ConvergenceRow>> {
    let sys = sys.with_snr_db(snr_db);
    let (h, s) = draw_instance(&sys, scale, seed, 0);
    let out = AdmmPrecoder::new(h, sys, *admm)?.precode(&s)?;
    Ok(out
        .gap_history
        .iter()
        .zip(&out.lagrangian_trace)
        .zip(&out.lambda_trace)
        .enumerate()
        .map(|(k, ((&(dv, du), &l), &lam))| ConvergenceRow {
            iter: k + 1,
            lambda: lam,
            delta_v: dv,
            delta_u: du,
            lagrangian: l,
        })
        .collect())
}

/// Sequential timing of the ADMM precoder for each antenna count.
pub fn runtime_scaling(
    sys: &SystemConfig,
    antennas: &[usize],
    snr_db: f64,
    trials: usize,
    seed: u64,
    admm: &AdmmConfig,
    scale: ChannelScale,
) -> Result<Vec<RuntimeRow>> {
    antennas
        .iter()
        .map(|&r| {
            let sys = SystemConfig::new(sys.num_users, r, sys.total_power, 0.0, sys.modulation)?
                .with_snr_db(snr_db);
            let (mut solve_s, mut loop_s, mut iters) = (0.0, 0.0, 0usize);
            for t in 0..trials {
                let (h, s) = draw_instance(&sys, scale, seed, t);
                let start = Instant::now();
                let pre = AdmmPrecoder::new(h, sys, *admm)?;
                let mid = Instant::now();
                let out = pre.precode(&s)?;
                let end = Instant::now();
                solve_s += (end - start).as_secs_f64();
                loop_s += (end - mid).as_secs_f64();
                iters += out.iters_used;
            }
            Ok(RuntimeRow {
                antennas: r,
                mean_solve_s: solve_s / trials as f64,
                mean_iters: iters as f64 / trials as f64,
                mean_iter_s: loop_s / iters.max(1) as f64,
            })
        })
        .collect()
}

/// MMSE objective of each precoder next to the exhaustive optimum, per instance.
pub fn oracle_gap(
    sys: &SystemConfig,
    snr_db: f64,
    trials: usize,
    seed: u64,
    admm: &AdmmConfig,
    scale: ChannelScale,
) -> Result<Vec<OracleGapRow>> {
    let sys = sys.with_snr_db(snr_db);
    let eps2 = sys.noise_variance;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let (h, s) = draw_instance(&sys, scale, seed, t);
            let objective = |z: &DVector<C64>| mmse_objective(&h, &s, z, optimal_rho(&h, &s, z, eps2), eps2);
            let oracle = exhaustive_min(&h, &s, &sys)?.objective;
            let admm_z = AdmmPrecoder::new(h.clone(), sys, *admm)?.precode(&s)?.z;
            let zf = LinearPrecoder::build(&h, LinearKind::Zf, &sys)?.precode_quantized(&h, &s, &sys)?.z;
            let mrt = LinearPrecoder::build(&h, LinearKind::Mrt, &sys)?.precode_quantized(&h, &s, &sys)?.z;
            Ok(OracleGapRow {
                instance: t,
                oracle,
                admm: objective(&admm_z),
                zf_q: objective(&zf),
                mrt_q: objective(&mrt),
            })
        })
        .collect()
}
