//! Exhaustive minimisation of `‖s − ρHz‖² + ρ²Uε²` over `z ∈ Ψ^R`, `ρ ≥ 0`.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{optimal_rho, mmse_objective, stack_vec, unstack_vec, ComplexChannel, SystemConfig};
use crate::C64;

/// Largest antenna count the enumeration accepts (4^10 candidates).
pub const MAX_ORACLE_ANTENNAS: usize = 10;

/// Sign bits enumerated sequentially inside one parallel chunk.
const CHUNK_BITS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub z_star: DVector<C64>,
    pub rho_star: f64,
    pub objective: f64,
    /// Winning sign pattern; bit `2R − 1 − j` set means stacked component `j` is negative.
    pub pattern: u64,
}

fn pattern_to_stacked(pattern: u64, n: usize, kappa: f64) -> DVector<f64> {
    DVector::from_fn(n, |j, _| {
        if pattern >> (n - 1 - j) & 1 == 1 {
            -kappa
        } else {
            kappa
        }
    })
}

fn objective_from(norm_s: f64, cross: f64, energy: f64) -> f64 {
    if cross > 0.0 && energy > 0.0 {
        norm_s - cross * cross / energy
    } else {
        norm_s
    }
}

/// Global minimiser by enumeration. Ties go to the smallest pattern index,
/// i.e. the lexicographically first sign vector with `+` ordered before `−`.
pub fn exhaustive_min(channel: &ComplexChannel, s: &DVector<C64>, sys: &SystemConfig) -> Result<OracleResult> {
    sys.validate()?;
    channel.check_dims(sys, s.len())?;
    let r = sys.num_antennas;
    if r > MAX_ORACLE_ANTENNAS {
        return Err(Error::OracleTooLarge {
            antennas: r,
            max: MAX_ORACLE_ANTENNAS,
        });
    }
    let n = 2 * r;
    let kappa = sys.quantizer().kappa;
    let h = channel.stacked();
    let s_t = stack_vec(s);
    let norm_s = s_t.norm_squared();
    let noise = s.len() as f64 * sys.noise_variance;

    let low_bits = n.min(CHUNK_BITS);
    let high_count = 1u64 << (n - low_bits);

    let (_, best) = (0..high_count)
        .into_par_iter()
        .map(|high| {
            let base = high << low_bits;
            let mut hz = h * pattern_to_stacked(base, n, kappa);
            let mut gray_low = 0u64;
            let score = |hz: &DVector<f64>| objective_from(norm_s, s_t.dot(hz), hz.norm_squared() + noise);
            let mut best = (score(&hz), base);
            for t in 1..(1u64 << low_bits) {
                let bit = t.trailing_zeros() as usize;
                gray_low ^= 1 << bit;
                let col = n - 1 - bit;
                // flipping one sign moves Hz by ±2κ times one column
                let step = if gray_low >> bit & 1 == 1 { -2.0 * kappa } else { 2.0 * kappa };
                hz.axpy(step, &h.column(col), 1.0);
                let cand = (score(&hz), base | gray_low);
                if cand.0 < best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                    best = cand;
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, u64::MAX),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );

    let z_star = unstack_vec(&pattern_to_stacked(best, n, kappa));
    let rho_star = optimal_rho(channel, s, &z_star, sys.noise_variance);
    let objective = mmse_objective(channel, s, &z_star, rho_star, sys.noise_variance);
    Ok(OracleResult {
        z_star,
        rho_star,
        objective,
        pattern: best,
    })
}
