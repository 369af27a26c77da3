//! ADMM precoder for the 1-bit MMSE problem.
//!
//! Writing `v = ρz` and stacking real and imaginary parts, the precoding
//! problem becomes
//!
//! ```text
//! minimize ‖s̃ − H̃ṽ‖² + c‖ṽ‖²   subject to ṽ ∈ Ω,
//! ```
//!
//! where `Ω` is the set of real vectors whose entries share one modulus and
//! `c = Uε²/P_TX`. Splitting `ṽ = u` gives the augmented Lagrangian
//!
//! ```text
//! L(ṽ, u, w) = ‖s̃ − H̃ṽ‖² + c‖ṽ‖² − ⟨w, ṽ − u⟩ + (λ/2)‖ṽ − u‖²
//! ```
//!
//! and every iteration runs, in order:
//!
//! 1. `u ← Π_Ω(ṽ − w/λ)` (closed-form constant-modulus projection),
//! 2. `ṽ ← [2H̃ᵀH̃ + (2c+λ)I]⁻¹(2H̃ᵀs̃ + λu + w)` through a cached SVD of `H̃`,
//! 3. `w ← w − λ(ṽ − u)`.
//!
//! With this order the dual iterate always equals `2(H̃ᵀH̃ + cI)ṽ − 2H̃ᵀs̃`,
//! which is what makes `L` monotone once `λ` exceeds [`lambda_target`].
//! The penalty starts at `λ̄ / divisor` and grows geometrically until it
//! reaches `λ̄`, after which it is held fixed. Stationary points do not
//! depend on `λ` once the signs of `u` have settled, so a run that has
//! already converged during warm-up is promoted straight to `λ̄`.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{genie_rho, sign_pos, stack_vec, unstack_vec, ComplexChannel, SystemConfig};
use crate::C64;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of matrix factorizations performed on the current thread.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.with(|c| c.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Continuation {
    pub lambda_init_divisor: f64,
    pub growth_factor: f64,
    /// Jump to `λ̄` as soon as both iterate gaps fall below tolerance during warm-up.
    pub promote_on_convergence: bool,
}

impl Default for Continuation {
    fn default() -> Self {
        Self {
            lambda_init_divisor: 256.0,
            growth_factor: 1.05,
            promote_on_convergence: true,
        }
    }
}

impl Continuation {
    /// No warm-up: `λ = λ̄` from the first iteration.
    pub fn fixed() -> Self {
        Self {
            lambda_init_divisor: 1.0,
            growth_factor: 2.0,
            promote_on_convergence: false,
        }
    }

    pub fn lambda_at(&self, target: f64, iter: usize) -> f64 {
        let exp = i32::try_from(iter).unwrap_or(i32::MAX);
        (target / self.lambda_init_divisor * self.growth_factor.powi(exp)).min(target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub continuation: Continuation,
    /// Multiplicative margin `η` that makes the penalty condition strict.
    pub margin: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            rel_tol: 1e-7,
            continuation: Continuation::default(),
            margin: 1e-3,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: format!("admm.{field}"),
                message,
            })
        };
        if self.max_iters < 1 {
            return bad("max_iters", "must be at least 1".into());
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return bad("rel_tol", format!("must be positive, got {}", self.rel_tol));
        }
        if self.continuation.growth_factor.is_nan() || self.continuation.growth_factor <= 1.0 {
            return bad(
                "continuation.growth_factor",
                format!("must exceed 1, got {}", self.continuation.growth_factor),
            );
        }
        if self.continuation.lambda_init_divisor.is_nan() || self.continuation.lambda_init_divisor < 1.0 {
            return bad(
                "continuation.lambda_init_divisor",
                format!("must be at least 1, got {}", self.continuation.lambda_init_divisor),
            );
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return bad("margin", format!("must be positive, got {}", self.margin));
        }
        Ok(())
    }
}

/// `c = Uε²/P_TX`.
pub fn reg_coefficient(num_users: usize, noise_variance: f64, total_power: f64) -> f64 {
    num_users as f64 * noise_variance / total_power
}

/// Smallest penalty for which the augmented Lagrangian is monotone, inflated by `1 + η`.
pub fn lambda_target(phi: f64, c: f64, margin: f64) -> f64 {
    let a = (c * c + 8.0 * (phi + c).powi(2)).sqrt() - c;
    (1.0 + margin) * a.max(8.0 * phi).max(8.0 * c)
}

/// Spectral data of `H̃ᵀH̃` kept for the whole solve.
///
/// Only the `2U` right singular vectors of `H̃` are stored; the remaining
/// `2R − 2U` eigenvalues are zero and their eigenspace is handled through
/// the complement projector `I − VVᵀ`.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    h_stacked: DMatrix<f64>,
    basis: DMatrix<f64>,
    sq_singular: DVector<f64>,
    phi: f64,
}

impl SpectralCache {
    pub fn new(h_stacked: &DMatrix<f64>) -> Self {
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        let svd = SVD::new(h_stacked.clone(), false, true);
        let v_t = svd.v_t.expect("SVD was asked for right singular vectors");
        let sq_singular = svd.singular_values.map(|s| s * s);
        let phi = sq_singular.iter().copied().fold(0.0, f64::max);
        Self {
            h_stacked: h_stacked.clone(),
            basis: v_t.transpose(),
            sq_singular,
            phi,
        }
    }

    pub fn from_channel(channel: &ComplexChannel) -> Self {
        Self::new(channel.stacked())
    }

    /// `eig_max(H̃ᵀH̃)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn h_stacked(&self) -> &DMatrix<f64> {
        &self.h_stacked
    }

    /// Right singular vectors of `H̃` as columns (`2R × min(2U, 2R)`).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// All `2R` eigenvalues of `H̃ᵀH̃`, zero-padded.
    pub fn eigenvalues(&self) -> DVector<f64> {
        let n = self.h_stacked.ncols();
        DVector::from_fn(n, |i, _| if i < self.sq_singular.len() { self.sq_singular[i] } else { 0.0 })
    }

    /// Full orthonormal eigenbasis of `H̃ᵀH̃` from a dense symmetric eigensolver.
    pub fn full_basis(&self) -> (DMatrix<f64>, DVector<f64>) {
        let gram = self.h_stacked.transpose() * &self.h_stacked;
        let eig = SymmetricEigen::new(gram);
        (eig.eigenvectors, eig.eigenvalues)
    }

    /// Solves `[2H̃ᵀH̃ + αI] x = d` for `α > 0`.
    pub fn solve_shifted(&self, d: &DVector<f64>, alpha: f64) -> DVector<f64> {
        // the complement of the range scales by 1/α; the range by 1/(2σ² + α)
        let coeffs = self.basis.tr_mul(d);
        let correction = DVector::from_fn(coeffs.len(), |i, _| {
            coeffs[i] / (2.0 * self.sq_singular[i] + alpha) - coeffs[i] / alpha
        });
        d / alpha + &self.basis * correction
    }
}

/// Closed-form `ṽ`-update.
pub fn v_update(
    cache: &SpectralCache,
    s_tilde: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    c: f64,
    lambda: f64,
) -> DVector<f64> {
    let rhs = cache.h_stacked.tr_mul(s_tilde) * 2.0;
    v_update_with_rhs(cache, &rhs, u, w, c, lambda)
}

fn v_update_with_rhs(
    cache: &SpectralCache,
    two_hts: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    c: f64,
    lambda: f64,
) -> DVector<f64> {
    let d = two_hts + u * lambda + w;
    cache.solve_shifted(&d, 2.0 * c + lambda)
}

/// Euclidean projection onto the constant-modulus set, `sign(ω)‖ω‖₁/n`.
///
/// `ω = 0` maps to the zero vector.
pub fn project_omega(omega: &DVector<f64>) -> DVector<f64> {
    let n = omega.len();
    if n == 0 {
        return omega.clone();
    }
    let first = omega[0].abs();
    let modulus = if omega.iter().all(|x| x.abs() == first) {
        first
    } else {
        omega.iter().map(|x| x.abs()).sum::<f64>() / n as f64
    };
    omega.map(|x| sign_pos(x) * modulus)
}

/// Augmented Lagrangian with `u` assumed feasible.
pub fn lagrangian(
    h_stacked: &DMatrix<f64>,
    s_tilde: &DVector<f64>,
    c: f64,
    v: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let resid = s_tilde - h_stacked * v;
    let split = v - u;
    resid.norm_squared() + c * v.norm_squared() - w.dot(&split) + 0.5 * lambda * split.norm_squared()
}

/// Computable surrogate for `dist(0, ∂L)`:
/// `‖2(H̃ᵀH̃ + cI)ṽ − 2H̃ᵀs̃ − w‖ + ‖ṽ − u‖`.
pub fn stationarity_residual(
    state: &AdmmState,
    h_stacked: &DMatrix<f64>,
    s_tilde: &DVector<f64>,
    c: f64,
) -> f64 {
    let hv = h_stacked * &state.v_tilde;
    let grad = h_stacked.tr_mul(&(hv - s_tilde)) * 2.0 + &state.v_tilde * (2.0 * c);
    (grad - &state.w).norm() + (&state.v_tilde - &state.u).norm()
}

fn relative_gap(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let diff = (new - old).norm();
    let scale = new.norm();
    if scale > 0.0 {
        diff / scale
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub v_tilde: DVector<f64>,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub lambda: f64,
    pub lagrangian: f64,
    pub iter: usize,
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub delta_v: f64,
    pub delta_u: f64,
    pub lagrangian: f64,
    pub lambda: f64,
    pub lambda_fixed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeOutput {
    /// Transmit vector in `Ψ^R`.
    pub z: DVector<C64>,
    /// Receiver scale used for detection.
    pub rho: f64,
    pub iters_used: usize,
    pub converged: bool,
    /// Relative iterate gaps `(Δṽ, Δu)` per iteration.
    pub gap_history: Vec<(f64, f64)>,
    pub lagrangian_trace: Vec<f64>,
    pub lambda_trace: Vec<f64>,
    pub lambda_target: f64,
    pub phi: f64,
    /// Bussgang-model receiver scale, reported by the linear precoders.
    pub bussgang_rho: Option<f64>,
}

impl PrecodeOutput {
    /// Index of the first iteration run at the target penalty.
    pub fn lambda_fixed_at(&self) -> Option<usize> {
        self.lambda_trace.iter().position(|&l| l >= self.lambda_target)
    }
}

/// ADMM precoder bound to one channel; reusable across symbol vectors.
#[derive(Debug, Clone)]
pub struct AdmmPrecoder {
    channel: ComplexChannel,
    sys: SystemConfig,
    cfg: AdmmConfig,
    cache: SpectralCache,
    c: f64,
    lambda_target: f64,
}

impl AdmmPrecoder {
    pub fn new(channel: ComplexChannel, sys: SystemConfig, cfg: AdmmConfig) -> Result<Self> {
        sys.validate()?;
        cfg.validate()?;
        channel.check_dims(&sys, sys.num_users)?;
        let cache = SpectralCache::from_channel(&channel);
        let c = reg_coefficient(sys.num_users, sys.noise_variance, sys.total_power);
        let lambda_target = lambda_target(cache.phi(), c, cfg.margin);
        Ok(Self {
            channel,
            sys,
            cfg,
            cache,
            c,
            lambda_target,
        })
    }

    pub fn channel(&self) -> &ComplexChannel {
        &self.channel
    }

    pub fn cache(&self) -> &SpectralCache {
        &self.cache
    }

    pub fn config(&self) -> &AdmmConfig {
        &self.cfg
    }

    pub fn reg_coefficient(&self) -> f64 {
        self.c
    }

    pub fn lambda_target(&self) -> f64 {
        self.lambda_target
    }

    /// Starts an iteration from the zero initial point.
    pub fn start(&self, s: &DVector<C64>) -> Result<AdmmRun<'_>> {
        self.channel.check_dims(&self.sys, s.len())?;
        if s.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
            return Err(Error::InvalidInput("symbol vector has non-finite entries".into()));
        }
        let n = 2 * self.sys.num_antennas;
        let s_tilde = stack_vec(s);
        let two_hts = self.cache.h_stacked.tr_mul(&s_tilde) * 2.0;
        let zero = DVector::zeros(n);
        let lagrangian = s_tilde.norm_squared();
        Ok(AdmmRun {
            pre: self,
            s_tilde,
            two_hts,
            state: AdmmState {
                v_tilde: zero.clone(),
                u: zero.clone(),
                w: zero,
                lambda: self.cfg.continuation.lambda_at(self.lambda_target, 0),
                lagrangian,
                iter: 0,
            },
            promoted: false,
        })
    }

    pub fn precode(&self, s: &DVector<C64>) -> Result<PrecodeOutput> {
        let mut run = self.start(s)?;
        let cap = self.cfg.max_iters;
        let mut gap_history = Vec::with_capacity(cap);
        let mut lagrangian_trace = Vec::with_capacity(cap);
        let mut lambda_trace = Vec::with_capacity(cap);
        let mut converged = false;
        while run.state.iter < cap {
            let info = run.step();
            gap_history.push((info.delta_v, info.delta_u));
            lagrangian_trace.push(info.lagrangian);
            lambda_trace.push(info.lambda);
            if info.lambda_fixed && info.delta_v < self.cfg.rel_tol && info.delta_u < self.cfg.rel_tol {
                converged = true;
                break;
            }
        }
        let z = self.round(&run.state.u);
        let rho = genie_rho(&self.channel, s, &z, self.sys.noise_variance);
        Ok(PrecodeOutput {
            z,
            rho,
            iters_used: run.state.iter,
            converged,
            gap_history,
            lagrangian_trace,
            lambda_trace,
            lambda_target: self.lambda_target,
            phi: self.cache.phi(),
            bussgang_rho: None,
        })
    }

    /// `ẑ = κ·sign(û)` folded back to complex form.
    pub fn round(&self, u: &DVector<f64>) -> DVector<C64> {
        let kappa = self.sys.quantizer().kappa;
        unstack_vec(&u.map(|x| kappa * sign_pos(x)))
    }
}

/// An in-progress ADMM iteration, exposed for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct AdmmRun<'a> {
    pre: &'a AdmmPrecoder,
    s_tilde: DVector<f64>,
    two_hts: DVector<f64>,
    state: AdmmState,
    promoted: bool,
}

impl AdmmRun<'_> {
    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn s_tilde(&self) -> &DVector<f64> {
        &self.s_tilde
    }

    pub fn step(&mut self) -> StepInfo {
        let pre = self.pre;
        let target = pre.lambda_target;
        let lambda = if self.promoted {
            target
        } else {
            pre.cfg.continuation.lambda_at(target, self.state.iter)
        };
        let st = &self.state;

        let u = project_omega(&(&st.v_tilde - &st.w / lambda));
        let v = v_update_with_rhs(&pre.cache, &self.two_hts, &u, &st.w, pre.c, lambda);
        let w = &st.w - (&v - &u) * lambda;

        let delta_v = relative_gap(&v, &st.v_tilde);
        let delta_u = relative_gap(&u, &st.u);
        let lagrangian = lagrangian(&pre.cache.h_stacked, &self.s_tilde, pre.c, &v, &u, &w, lambda);
        self.state = AdmmState {
            v_tilde: v,
            u,
            w,
            lambda,
            lagrangian,
            iter: st.iter + 1,
        };
        let tol = pre.cfg.rel_tol;
        if pre.cfg.continuation.promote_on_convergence && delta_v < tol && delta_u < tol {
            self.promoted = true;
        }
        StepInfo {
            delta_v,
            delta_u,
            lagrangian,
            lambda,
            lambda_fixed: lambda >= target,
        }
    }
}

/// Precodes one symbol vector from scratch.
pub fn solve(
    channel: &ComplexChannel,
    s: &DVector<C64>,
    sys: &SystemConfig,
    cfg: &AdmmConfig,
) -> Result<PrecodeOutput> {
    AdmmPrecoder::new(channel.clone(), *sys, *cfg)?.precode(s)
}
