//! Linear quantized precoders (MRT and ZF followed by the 1-bit DACs) and the
//! infinite-resolution ZF benchmark.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admm::PrecodeOutput;
use crate::error::{Error, Result};
use crate::model::{genie_rho, quantize_1bit, ComplexChannel, SystemConfig};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Mrt,
    Zf,
}

/// Smallest admissible ratio of extreme singular values for ZF.
pub const ZF_RANK_TOL: f64 = 1e-10;

/// `x = βPs` with `β²·tr(PPᴴ) = P_TX`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPrecoder {
    matrix: DMatrix<C64>,
    beta: f64,
    kind: LinearKind,
}

impl LinearPrecoder {
    pub fn build(channel: &ComplexChannel, kind: LinearKind, sys: &SystemConfig) -> Result<Self> {
        sys.validate()?;
        channel.check_dims(sys, sys.num_users)?;
        let h = channel.entries();
        let matrix = match kind {
            LinearKind::Mrt => h.adjoint(),
            LinearKind::Zf => {
                let sv = h.singular_values();
                let max = sv.max();
                let min = sv.min();
                if min.is_nan() || min <= ZF_RANK_TOL * max {
                    return Err(Error::RankDeficient {
                        condition: if min > 0.0 { max / min } else { f64::INFINITY },
                    });
                }
                let gram = h * h.adjoint();
                let inv = gram
                    .try_inverse()
                    .ok_or(Error::RankDeficient { condition: max / min })?;
                h.adjoint() * inv
            }
        };
        let trace: f64 = matrix.iter().map(|x| x.norm_sqr()).sum();
        if trace.is_nan() || trace <= 0.0 {
            return Err(Error::InvalidInput("precoding matrix is zero".into()));
        }
        Ok(Self {
            beta: (sys.total_power / trace).sqrt(),
            matrix,
            kind,
        })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> LinearKind {
        self.kind
    }

    /// Unquantized transmit vector `βPs`.
    pub fn transmit(&self, s: &DVector<C64>) -> DVector<C64> {
        &self.matrix * s * C64::new(self.beta, 0.0)
    }

    /// Diagonal of the Bussgang gain for the effective matrix `βP`.
    pub fn bussgang_gain(&self, total_power: f64) -> DVector<f64> {
        bussgang_gain(&(&self.matrix * C64::new(self.beta, 0.0)), total_power)
    }

    /// Quantizes `βPs` and reports both the genie scale and the Bussgang-model scale.
    pub fn precode_quantized(
        &self,
        channel: &ComplexChannel,
        s: &DVector<C64>,
        sys: &SystemConfig,
    ) -> Result<PrecodeOutput> {
        channel.check_dims(sys, s.len())?;
        let z = quantize_1bit(&self.transmit(s), sys.quantizer().kappa)?;
        let rho = genie_rho(channel, s, &z, sys.noise_variance);
        Ok(PrecodeOutput {
            rho,
            bussgang_rho: self.bussgang_rho(channel, sys.total_power),
            z,
            iters_used: 0,
            converged: true,
            gap_history: Vec::new(),
            lagrangian_trace: Vec::new(),
            lambda_trace: Vec::new(),
            lambda_target: 0.0,
            phi: 0.0,
        })
    }

    /// `1 / mean(Re diag(H·G·βP))`, the receiver scale implied by `z ≈ GβPs`.
    pub fn bussgang_rho(&self, channel: &ComplexChannel, total_power: f64) -> Option<f64> {
        let g = self.bussgang_gain(total_power);
        let gp = DMatrix::from_fn(self.matrix.nrows(), self.matrix.ncols(), |i, j| {
            self.matrix[(i, j)] * (g[i] * self.beta)
        });
        let eff = channel.entries() * gp;
        let n = eff.nrows();
        let mean = (0..n).map(|i| eff[(i, i)].re).sum::<f64>() / n as f64;
        (mean > 0.0 && mean.is_finite()).then(|| 1.0 / mean)
    }

    /// ZF with infinite-resolution DACs; meets the power budget only on average.
    pub fn precode_infinite(&self, s: &DVector<C64>) -> Result<DVector<C64>> {
        if self.kind != LinearKind::Zf {
            return Err(Error::InvalidInput(
                "the infinite-resolution benchmark is defined for ZF only".into(),
            ));
        }
        if s.len() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch {
                context: "symbol vector length",
                expected: self.matrix.ncols(),
                actual: s.len(),
            });
        }
        Ok(self.transmit(s))
    }
}

/// `sqrt(2P_TX/(πR))·diag(PPᴴ)^(-1/2)` for an `R × U` matrix `P`.
pub fn bussgang_gain(p: &DMatrix<C64>, total_power: f64) -> DVector<f64> {
    let r = p.nrows();
    let scale = (2.0 * total_power / (PI * r as f64)).sqrt();
    DVector::from_fn(r, |i, _| {
        let row: f64 = p.row(i).iter().map(|x| x.norm_sqr()).sum();
        scale / row.sqrt()
    })
}

pub fn build_linear(channel: &ComplexChannel, kind: LinearKind, sys: &SystemConfig) -> Result<LinearPrecoder> {
    LinearPrecoder::build(channel, kind, sys)
}
