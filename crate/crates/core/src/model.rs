//! Domain types shared by every precoder: system parameters, channels,
//! constellations, the 1-bit quantizer and the MMSE objective.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Sign with the tie broken towards `+1`, so quantized outputs never leave the alphabet.
#[inline]
pub fn sign_pos(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    #[serde(alias = "16qam")]
    Qam16,
    #[serde(alias = "64qam")]
    Qam64,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
            Modulation::Qam64 => "qam64",
        }
    }
}

/// Downlink system parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_users: usize,
    pub num_antennas: usize,
    /// Total transmit power `P_TX`.
    pub total_power: f64,
    /// Per-user receiver noise variance `ε²`.
    pub noise_variance: f64,
    pub modulation: Modulation,
}

impl SystemConfig {
    pub fn new(
        num_users: usize,
        num_antennas: usize,
        total_power: f64,
        noise_variance: f64,
        modulation: Modulation,
    ) -> Result<Self> {
        let sys = Self {
            num_users,
            num_antennas,
            total_power,
            noise_variance,
            modulation,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Unit transmit power and `ε² = 10^(-snr_db/10)`.
    pub fn from_snr_db(
        num_users: usize,
        num_antennas: usize,
        snr_db: f64,
        modulation: Modulation,
    ) -> Result<Self> {
        Self::new(
            num_users,
            num_antennas,
            1.0,
            noise_variance_for_snr(1.0, snr_db),
            modulation,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_antennas == 0 {
            return Err(Error::InvalidInput(
                "user and antenna counts must be positive".into(),
            ));
        }
        if self.num_users > self.num_antennas {
            return Err(Error::InvalidInput(format!(
                "overloaded downlink: U = {} > R = {}",
                self.num_users, self.num_antennas
            )));
        }
        if !(self.total_power.is_finite() && self.total_power > 0.0) {
            return Err(Error::InvalidInput(format!(
                "total power must be positive and finite, got {}",
                self.total_power
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise variance must be nonnegative and finite, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// `P_TX / ε²`; infinite in the noiseless case.
    pub fn snr(&self) -> f64 {
        self.total_power / self.noise_variance
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_variance = noise_variance_for_snr(self.total_power, snr_db);
        self
    }

    pub fn quantizer(&self) -> QuantizerParams {
        QuantizerParams::new(self.total_power, self.num_antennas)
    }
}

pub fn noise_variance_for_snr(total_power: f64, snr_db: f64) -> f64 {
    total_power * 10f64.powf(-snr_db / 10.0)
}

/// Output scale of the 1-bit DACs: every antenna emits `κ(±1 ± j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerParams {
    pub kappa: f64,
}

impl QuantizerParams {
    /// `κ = sqrt(P_TX / 2R)`, which puts exactly `P_TX` on the array.
    pub fn new(total_power: f64, num_antennas: usize) -> Self {
        Self {
            kappa: (total_power / (2.0 * num_antennas as f64)).sqrt(),
        }
    }

    pub fn alphabet(&self) -> [C64; 4] {
        let k = self.kappa;
        [
            C64::new(k, k),
            C64::new(k, -k),
            C64::new(-k, k),
            C64::new(-k, -k),
        ]
    }
}

/// Separate 1-bit quantization of the real and imaginary parts.
pub fn quantize_1bit(x: &DVector<C64>, kappa: f64) -> Result<DVector<C64>> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
    }
    ensure_finite_complex(x.iter(), "quantizer input")?;
    Ok(x.map(|xi| C64::new(kappa * sign_pos(xi.re), kappa * sign_pos(xi.im))))
}

/// Real-valued block form `[[Re H, -Im H], [Im H, Re H]]`.
pub fn stack_real(h: &DMatrix<C64>) -> Result<DMatrix<f64>> {
    ensure_finite_complex(h.iter(), "channel")?;
    let (rows, cols) = h.shape();
    Ok(DMatrix::from_fn(2 * rows, 2 * cols, |i, j| {
        let (bi, bj) = (i / rows, j / cols);
        let e = h[(i % rows, j % cols)];
        match (bi, bj) {
            (0, 0) | (1, 1) => e.re,
            (0, 1) => -e.im,
            _ => e.im,
        }
    }))
}

/// `[Re(v); Im(v)]`.
pub fn stack_vec(v: &DVector<C64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`stack_vec`]. Panics on odd length.
pub fn unstack_vec(v: &DVector<f64>) -> DVector<C64> {
    assert!(v.len().is_multiple_of(2), "stacked vector must have even length");
    let n = v.len() / 2;
    DVector::from_fn(n, |i, _| C64::new(v[i], v[i + n]))
}

fn ensure_finite_complex<'a>(mut it: impl Iterator<Item = &'a C64>, what: &str) -> Result<()> {
    if it.all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// A `U × R` downlink channel together with its real stacking.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexChannel {
    entries: DMatrix<C64>,
    stacked: DMatrix<f64>,
}

impl ComplexChannel {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        let stacked = stack_real(&entries)?;
        Ok(Self { entries, stacked })
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn stacked(&self) -> &DMatrix<f64> {
        &self.stacked
    }

    pub fn num_users(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_antennas(&self) -> usize {
        self.entries.ncols()
    }

    pub fn apply(&self, z: &DVector<C64>) -> DVector<C64> {
        &self.entries * z
    }

    pub(crate) fn check_dims(&self, sys: &SystemConfig, symbols: usize) -> Result<()> {
        if self.num_users() != sys.num_users {
            return Err(Error::DimensionMismatch {
                context: "channel rows vs users",
                expected: sys.num_users,
                actual: self.num_users(),
            });
        }
        if self.num_antennas() != sys.num_antennas {
            return Err(Error::DimensionMismatch {
                context: "channel columns vs antennas",
                expected: sys.num_antennas,
                actual: self.num_antennas(),
            });
        }
        if symbols != sys.num_users {
            return Err(Error::DimensionMismatch {
                context: "symbol vector length",
                expected: sys.num_users,
                actual: symbols,
            });
        }
        Ok(())
    }
}

/// Receiver scale minimising `‖s − ρHz‖² + ρ²Uε²` for a fixed `z`, clamped at zero.
pub fn optimal_rho(h: &ComplexChannel, s: &DVector<C64>, z: &DVector<C64>, noise_variance: f64) -> f64 {
    let hz = h.apply(z);
    let num = s.dotc(&hz).re;
    let den = hz.norm_squared() + s.len() as f64 * noise_variance;
    if num <= 0.0 || den <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// [`optimal_rho`] floored at the smallest positive `f64`, so a receiver can divide by it.
pub fn genie_rho(h: &ComplexChannel, s: &DVector<C64>, z: &DVector<C64>, noise_variance: f64) -> f64 {
    optimal_rho(h, s, z, noise_variance).max(f64::MIN_POSITIVE)
}

/// MMSE objective `‖s − ρHz‖² + ρ²Uε²`.
pub fn mmse_objective(
    h: &ComplexChannel,
    s: &DVector<C64>,
    z: &DVector<C64>,
    rho: f64,
    noise_variance: f64,
) -> f64 {
    let r = s - h.apply(z) * C64::new(rho, 0.0);
    r.norm_squared() + rho * rho * s.len() as f64 * noise_variance
}

/// Square Gray-coded QAM alphabet with unit average energy.
///
/// `points[label]` is the symbol carrying the bit pattern `label`, most
/// significant bit first; the upper half of the bits selects the in-phase
/// level and the lower half the quadrature level.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    modulation: Modulation,
    points: Vec<C64>,
    bits_per_symbol: usize,
    levels_per_axis: usize,
    scale: f64,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let bits_per_symbol = modulation.bits_per_symbol();
        let half = bits_per_symbol / 2;
        let levels = 1usize << half;
        // mean |p|² of the odd-integer grid is 2(L² − 1)/3
        let scale = 1.0 / (2.0 * ((levels * levels - 1) as f64) / 3.0).sqrt();
        let mut points = vec![C64::new(0.0, 0.0); levels * levels];
        for i in 0..levels {
            for q in 0..levels {
                let label = (gray(i) << half) | gray(q);
                points[label] = C64::new(Self::amplitude(i, levels), Self::amplitude(q, levels)) * scale;
            }
        }
        Self {
            modulation,
            points,
            bits_per_symbol,
            levels_per_axis: levels,
            scale,
        }
    }

    fn amplitude(index: usize, levels: usize) -> f64 {
        (2 * index) as f64 - (levels - 1) as f64
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, label: usize) -> C64 {
        self.points[label]
    }

    /// Bits of `label`, most significant first.
    pub fn bits(&self, label: usize) -> Vec<u8> {
        (0..self.bits_per_symbol)
            .rev()
            .map(|b| ((label >> b) & 1) as u8)
            .collect()
    }

    pub fn label_from_bits(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
    }

    fn slice_axis(&self, x: f64) -> usize {
        let l = self.levels_per_axis;
        let idx = ((x / self.scale + (l - 1) as f64) / 2.0).round();
        idx.clamp(0.0, (l - 1) as f64) as usize
    }

    /// Label of the nearest point. Square grids decouple, so each axis is sliced on its own.
    pub fn nearest(&self, y: C64) -> usize {
        let half = self.bits_per_symbol / 2;
        (gray(self.slice_axis(y.re)) << half) | gray(self.slice_axis(y.im))
    }
}

pub fn build_constellation(modulation: Modulation) -> Constellation {
    Constellation::new(modulation)
}
