//! Python bindings for the 1-bit precoding library.
//!
//! Complex vectors are Python lists of `complex`, channel matrices are lists
//! of rows, and results are returned as plain dictionaries.

use nalgebra::{DMatrix, DVector};
use onebit_precoder::admm::{self, Continuation};
use onebit_precoder::model::{self, QuantizerParams};
use onebit_precoder::sim::{worker_pool, CsiConvention, CsiError, ErrorModel};
use onebit_precoder::{
    AdmmConfig, ComplexChannel, Constellation, Error, LinearKind, LinearPrecoder, Modulation, PrecodeOutput,
    PrecoderKind, SystemConfig as CoreSystem, TrialSpec, C64,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_modulation(name: &str) -> PyResult<Modulation> {
    match name.to_ascii_lowercase().as_str() {
        "qpsk" => Ok(Modulation::Qpsk),
        "qam16" | "16qam" => Ok(Modulation::Qam16),
        "qam64" | "64qam" => Ok(Modulation::Qam64),
        other => Err(PyValueError::new_err(format!("unknown modulation {other:?}"))),
    }
}

fn parse_precoder(name: &str) -> PyResult<PrecoderKind> {
    match name {
        "admm" => Ok(PrecoderKind::Admm),
        "zf_q" => Ok(PrecoderKind::ZfQ),
        "mrt_q" => Ok(PrecoderKind::MrtQ),
        "zfi" => Ok(PrecoderKind::Zfi),
        other => Err(PyValueError::new_err(format!("unknown precoder {other:?}"))),
    }
}

fn parse_error_model(name: &str) -> PyResult<ErrorModel> {
    match name {
        "none" => Ok(ErrorModel::None),
        "gaussian" => Ok(ErrorModel::Gaussian),
        "uniform" => Ok(ErrorModel::Uniform),
        other => Err(PyValueError::new_err(format!("unknown error model {other:?}"))),
    }
}

fn to_matrix(rows: Vec<Vec<C64>>) -> PyResult<DMatrix<C64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("channel rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn to_channel(rows: Vec<Vec<C64>>) -> PyResult<ComplexChannel> {
    ComplexChannel::new(to_matrix(rows)?).map_err(py_err)
}

fn rows_of<T: Copy + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// System dimensions, power and noise.
#[pyclass(name = "SystemConfig", frozen, from_py_object)]
#[derive(Clone)]
struct PySystem {
    inner: CoreSystem,
}

#[pymethods]
impl PySystem {
    /// Exactly one of `snr_db` and `noise_variance` may be given; the default is 10 dB.
    #[new]
    #[pyo3(signature = (users, antennas, modulation="qpsk", total_power=1.0, snr_db=None, noise_variance=None))]
    fn new(
        users: usize,
        antennas: usize,
        modulation: &str,
        total_power: f64,
        snr_db: Option<f64>,
        noise_variance: Option<f64>,
    ) -> PyResult<Self> {
        let modulation = parse_modulation(modulation)?;
        let noise = match (snr_db, noise_variance) {
            (Some(_), Some(_)) => return Err(PyValueError::new_err("give snr_db or noise_variance, not both")),
            (_, Some(n)) => n,
            (snr, None) => model::noise_variance_for_snr(total_power, snr.unwrap_or(10.0)),
        };
        let inner = CoreSystem::new(users, antennas, total_power, noise, modulation).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn users(&self) -> usize {
        self.inner.num_users
    }

    #[getter]
    fn antennas(&self) -> usize {
        self.inner.num_antennas
    }

    #[getter]
    fn total_power(&self) -> f64 {
        self.inner.total_power
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise_variance
    }

    #[getter]
    fn modulation(&self) -> &'static str {
        self.inner.modulation.name()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.quantizer().kappa
    }

    fn with_snr_db(&self, snr_db: f64) -> Self {
        Self {
            inner: self.inner.with_snr_db(snr_db),
        }
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "SystemConfig(users={}, antennas={}, modulation={:?}, total_power={}, noise_variance={})",
            s.num_users,
            s.num_antennas,
            s.modulation.name(),
            s.total_power,
            s.noise_variance
        )
    }
}

fn admm_config(max_iters: usize, rel_tol: f64, fixed_penalty: bool) -> PyResult<AdmmConfig> {
    let cfg = AdmmConfig {
        max_iters,
        rel_tol,
        continuation: if fixed_penalty { Continuation::fixed() } else { Continuation::default() },
        ..AdmmConfig::default()
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

fn output_dict<'py>(py: Python<'py>, out: PrecodeOutput) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("z", out.z.iter().copied().collect::<Vec<C64>>())?;
    d.set_item("rho", out.rho)?;
    d.set_item("iters_used", out.iters_used)?;
    d.set_item("converged", out.converged)?;
    d.set_item("gap_history", out.gap_history.clone())?;
    d.set_item("lagrangian_trace", out.lagrangian_trace.clone())?;
    d.set_item("lambda_trace", out.lambda_trace.clone())?;
    d.set_item("lambda_target", out.lambda_target)?;
    d.set_item("phi", out.phi)?;
    d.set_item("bussgang_rho", out.bussgang_rho)?;
    Ok(d)
}

/// ADMM precoder bound to one channel.
#[pyclass(name = "AdmmPrecoder", frozen)]
struct PyAdmm {
    inner: onebit_precoder::AdmmPrecoder,
}

#[pymethods]
impl PyAdmm {
    #[new]
    #[pyo3(signature = (channel, system, max_iters=300, rel_tol=1e-7, fixed_penalty=false))]
    fn new(
        channel: Vec<Vec<C64>>,
        system: &PySystem,
        max_iters: usize,
        rel_tol: f64,
        fixed_penalty: bool,
    ) -> PyResult<Self> {
        let cfg = admm_config(max_iters, rel_tol, fixed_penalty)?;
        let inner = onebit_precoder::AdmmPrecoder::new(to_channel(channel)?, system.inner, cfg).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn lambda_target(&self) -> f64 {
        self.inner.lambda_target()
    }

    #[getter]
    fn reg_coefficient(&self) -> f64 {
        self.inner.reg_coefficient()
    }

    fn precode<'py>(&self, py: Python<'py>, symbols: Vec<C64>) -> PyResult<Bound<'py, PyDict>> {
        let out = self.inner.precode(&DVector::from_vec(symbols)).map_err(py_err)?;
        output_dict(py, out)
    }
}

/// Real stacking `[[Re, −Im], [Im, Re]]` of a complex matrix.
#[pyfunction]
fn stack_real(h: Vec<Vec<C64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows_of(&model::stack_real(&to_matrix(h)?).map_err(py_err)?))
}

#[pyfunction]
fn quantize_1bit(x: Vec<C64>, kappa: f64) -> PyResult<Vec<C64>> {
    let q = model::quantize_1bit(&DVector::from_vec(x), kappa).map_err(py_err)?;
    Ok(q.iter().copied().collect())
}

/// `κ = √(P_TX / 2R)`.
#[pyfunction]
fn quantizer_kappa(total_power: f64, antennas: usize) -> f64 {
    QuantizerParams::new(total_power, antennas).kappa
}

/// Constellation points indexed by their Gray label.
#[pyfunction]
fn build_constellation(modulation: &str) -> PyResult<Vec<C64>> {
    Ok(Constellation::new(parse_modulation(modulation)?).points().to_vec())
}

#[pyfunction]
fn reg_coefficient(users: usize, noise_variance: f64, total_power: f64) -> f64 {
    admm::reg_coefficient(users, noise_variance, total_power)
}

#[pyfunction]
#[pyo3(signature = (phi, c, margin=1e-3))]
fn lambda_target(phi: f64, c: f64, margin: f64) -> f64 {
    admm::lambda_target(phi, c, margin)
}

#[pyfunction]
fn project_omega(omega: Vec<f64>) -> Vec<f64> {
    admm::project_omega(&DVector::from_vec(omega)).iter().copied().collect()
}

#[pyfunction]
#[pyo3(signature = (channel, symbols, system, max_iters=300, rel_tol=1e-7, fixed_penalty=false))]
fn solve<'py>(
    py: Python<'py>,
    channel: Vec<Vec<C64>>,
    symbols: Vec<C64>,
    system: &PySystem,
    max_iters: usize,
    rel_tol: f64,
    fixed_penalty: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = admm_config(max_iters, rel_tol, fixed_penalty)?;
    let out = onebit_precoder::solve(&to_channel(channel)?, &DVector::from_vec(symbols), &system.inner, &cfg)
        .map_err(py_err)?;
    output_dict(py, out)
}

/// Quantized MRT/ZF (`kind` is `"mrt"` or `"zf"`), or unquantized ZF with `quantized=False`.
#[pyfunction]
#[pyo3(signature = (channel, symbols, system, kind="zf", quantized=true))]
fn linear_precode<'py>(
    py: Python<'py>,
    channel: Vec<Vec<C64>>,
    symbols: Vec<C64>,
    system: &PySystem,
    kind: &str,
    quantized: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = match kind {
        "zf" => LinearKind::Zf,
        "mrt" => LinearKind::Mrt,
        other => return Err(PyValueError::new_err(format!("unknown linear precoder {other:?}"))),
    };
    let h = to_channel(channel)?;
    let s = DVector::from_vec(symbols);
    let sys = &system.inner;
    let pre = LinearPrecoder::build(&h, kind, sys).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("beta", pre.beta())?;
    if quantized {
        let out = pre.precode_quantized(&h, &s, sys).map_err(py_err)?;
        d.set_item("z", out.z.iter().copied().collect::<Vec<C64>>())?;
        d.set_item("rho", out.rho)?;
        d.set_item("bussgang_rho", out.bussgang_rho)?;
    } else {
        let z = pre.precode_infinite(&s).map_err(py_err)?;
        d.set_item("rho", model::genie_rho(&h, &s, &z, sys.noise_variance))?;
        d.set_item("z", z.iter().copied().collect::<Vec<C64>>())?;
    }
    Ok(d)
}

/// Receiver-scaled MMSE objective `‖s − ρHz‖² + ρ²Uε²` at the optimal `ρ`.
#[pyfunction]
fn mmse_objective(channel: Vec<Vec<C64>>, symbols: Vec<C64>, z: Vec<C64>, noise_variance: f64) -> PyResult<f64> {
    let h = to_channel(channel)?;
    let (s, z) = (DVector::from_vec(symbols), DVector::from_vec(z));
    if s.len() != h.num_users() || z.len() != h.num_antennas() {
        return Err(PyValueError::new_err("symbol or transmit vector length does not match the channel"));
    }
    let rho = model::optimal_rho(&h, &s, &z, noise_variance);
    Ok(model::mmse_objective(&h, &s, &z, rho, noise_variance))
}

#[pyfunction]
fn exhaustive_min<'py>(
    py: Python<'py>,
    channel: Vec<Vec<C64>>,
    symbols: Vec<C64>,
    system: &PySystem,
) -> PyResult<Bound<'py, PyDict>> {
    let r = onebit_precoder::exhaustive_min(&to_channel(channel)?, &DVector::from_vec(symbols), &system.inner)
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("z", r.z_star.iter().copied().collect::<Vec<C64>>())?;
    d.set_item("rho", r.rho_star)?;
    d.set_item("objective", r.objective)?;
    d.set_item("pattern", r.pattern)?;
    Ok(d)
}

/// Monte Carlo BER at one operating point.
#[pyfunction]
#[pyo3(signature = (
    system, precoder, snr_db, seed, trials, symbol_vectors=10, delta=0.0,
    error_model="none", workers=0, max_iters=300
))]
#[allow(clippy::too_many_arguments)]
fn run_ber<'py>(
    py: Python<'py>,
    system: &PySystem,
    precoder: &str,
    snr_db: f64,
    seed: u64,
    trials: usize,
    symbol_vectors: usize,
    delta: f64,
    error_model: &str,
    workers: usize,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = TrialSpec {
        csi: CsiError {
            delta,
            model: parse_error_model(error_model)?,
            convention: CsiConvention::Corrected,
        },
        num_symbol_vectors: symbol_vectors,
        admm: AdmmConfig {
            max_iters,
            ..AdmmConfig::default()
        },
        ..TrialSpec::new(system.inner, parse_precoder(precoder)?, snr_db, seed, trials)
    };
    let pool = worker_pool(workers).map_err(py_err)?;
    let r = py
        .detach(|| pool.install(|| onebit_precoder::sim::run_point(&spec)))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("snr_db", r.snr_db)?;
    d.set_item("precoder", r.precoder.name())?;
    d.set_item("bit_errors", r.bit_errors)?;
    d.set_item("bits_sent", r.bits_sent)?;
    d.set_item("ber", r.ber)?;
    d.set_item("ci_lo", r.ci_lo)?;
    d.set_item("ci_hi", r.ci_hi)?;
    d.set_item("trials", r.trials)?;
    d.set_item("failed_trials", r.failed_trials)?;
    d.set_item("unconverged_trials", r.unconverged_trials)?;
    d.set_item("mean_iters", r.mean_iters)?;
    Ok(d)
}

#[pymodule]
fn onebit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyAdmm>()?;
    m.add_function(wrap_pyfunction!(stack_real, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_1bit, m)?)?;
    m.add_function(wrap_pyfunction!(quantizer_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(build_constellation, m)?)?;
    m.add_function(wrap_pyfunction!(reg_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_target, m)?)?;
    m.add_function(wrap_pyfunction!(project_omega, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(linear_precode, m)?)?;
    m.add_function(wrap_pyfunction!(mmse_objective, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_min, m)?)?;
    m.add_function(wrap_pyfunction!(run_ber, m)?)?;
    Ok(())
}
