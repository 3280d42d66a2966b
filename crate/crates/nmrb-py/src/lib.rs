//! Python bindings: noise processes, ASF engines, Monte-Carlo RB runs, and
//! curve analysis, mirroring the Rust API in a list/dict-friendly form.
//!
//! Matrices cross the boundary as nested lists of complex numbers (row
//! major); curves as lists of `(m, value)` or `(m, value, stderr)` tuples.

use std::collections::BTreeSet;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nmrb::asf::{self, ASFCurve, AsfPoint, CurveMeta, EngineKind};
use nmrb::channels;
use nmrb::core::{self, proj, CMat};
use nmrb::density::DensityOperator;
use nmrb::noise::{self, StepNoise};
use nmrb::rbsim;

fn to_py(e: nmrb::NmrbError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mat_from_py(rows: &[Vec<Complex64>]) -> PyResult<CMat> {
    let r = rows.len();
    if r == 0 || rows.iter().any(|row| row.len() != rows[0].len()) {
        return Err(PyValueError::new_err("matrix rows must be nonempty and equal length"));
    }
    Ok(CMat::from_fn(r, rows[0].len(), |i, j| rows[i][j]))
}

fn mat_to_py(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// A completely positive map given by Kraus operators.
#[pyclass(module = "nmrb_py")]
#[derive(Clone)]
struct KrausChannel {
    inner: channels::KrausChannel,
}

#[pymethods]
impl KrausChannel {
    #[new]
    fn new(kraus: Vec<Vec<Vec<Complex64>>>) -> PyResult<Self> {
        let ops: PyResult<Vec<CMat>> = kraus.iter().map(|k| mat_from_py(k)).collect();
        let ops = ops?;
        // classify the trace behaviour so downstream checks stay meaningful
        let inner = channels::KrausChannel::new(ops.clone(), channels::TpFlag::TracePreserving)
            .or_else(|_| channels::KrausChannel::new(ops.clone(), channels::TpFlag::TraceNonIncreasing))
            .or_else(|_| channels::KrausChannel::new(ops, channels::TpFlag::Unchecked))
            .map_err(to_py)?;
        Ok(KrausChannel { inner })
    }

    #[staticmethod]
    fn from_unitary(u: Vec<Vec<Complex64>>) -> PyResult<Self> {
        let inner = channels::KrausChannel::from_unitary(mat_from_py(&u)?).map_err(to_py)?;
        Ok(KrausChannel { inner })
    }

    #[staticmethod]
    fn identity(dim: usize) -> Self {
        KrausChannel { inner: channels::KrausChannel::identity(dim) }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn kraus(&self) -> Vec<Vec<Vec<Complex64>>> {
        self.inner.kraus.iter().map(mat_to_py).collect()
    }

    fn apply(&self, rho: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(mat_to_py(&self.inner.apply(&mat_from_py(&rho)?).map_err(to_py)?))
    }

    fn compose(&self, other: &KrausChannel) -> PyResult<Self> {
        Ok(KrausChannel { inner: self.inner.compose(&other.inner).map_err(to_py)? })
    }

    /// Noise strength p = (Σ_k |tr K_k|² − 1)/(d² − 1).
    fn noise_strength(&self) -> f64 {
        channels::noise_strength(&self.inner).p
    }

    fn __repr__(&self) -> String {
        format!("KrausChannel(dim={}, n_kraus={})", self.inner.dim, self.inner.kraus.len())
    }
}

/// An RB noise process: initial SE state, POVM element, and one noise
/// channel per time step.
#[pyclass(module = "nmrb_py")]
#[derive(Clone)]
struct NoiseProcess {
    inner: noise::NoiseProcess,
}

fn joint_unitary_process(h: &CMat, delta: f64, d_e: usize, model_id: &str) -> PyResult<NoiseProcess> {
    let u = core::hermitian_expm(h, delta).map_err(to_py)?;
    let inner = noise::NoiseProcess::time_independent(
        DensityOperator::ground(d_e, 2),
        proj(2, 0),
        StepNoise::Joint(channels::KrausChannel::from_unitary(u).map_err(to_py)?),
        model_id,
    )
    .map_err(to_py)?;
    Ok(NoiseProcess { inner })
}

#[pymethods]
impl NoiseProcess {
    /// H = J X₁X₂ + h_x ΣX + h_y ΣY on one environment and one system qubit.
    #[staticmethod]
    fn two_spin(j: f64, h_x: f64, h_y: f64, delta: f64) -> PyResult<Self> {
        joint_unitary_process(&noise::two_spin_hamiltonian(j, h_x, h_y), delta, 2, "two_spin")
    }

    /// H = J_x X₁X₂ + J_y Y₁Y₂.
    #[staticmethod]
    fn xx_spin(j_x: f64, j_y: f64, delta: f64) -> PyResult<Self> {
        joint_unitary_process(&noise::xx_spin_hamiltonian(j_x, j_y), delta, 2, "xx_spin")
    }

    /// Closed Ising chain; the system is one site, the rest the environment.
    #[staticmethod]
    fn ising_chain(n_sites: usize, j: f64, h_x: f64, h_y: f64, delta: f64) -> PyResult<Self> {
        let h = noise::ising_chain_hamiltonian(n_sites, j, h_x, h_y).map_err(to_py)?;
        joint_unitary_process(&h, delta, 1 << (n_sites - 1), &format!("ising_chain_{n_sites}"))
    }

    /// Memory-length-ℓ mixture of a joint unitary and an env-resetting
    /// Markovian branch.
    #[staticmethod]
    fn finite_memory(ell: usize, delta: f64, delta_m_factor: f64, j: f64, h_x: f64, h_y: f64) -> PyResult<Self> {
        let h = noise::two_spin_hamiltonian(j, h_x, h_y);
        let schedule = noise::finite_memory_schedule(ell, delta, delta_m_factor, &h, &proj(2, 0), 2, 2)
            .map_err(to_py)?;
        let inner = noise::NoiseProcess::new(
            DensityOperator::ground(2, 2),
            proj(2, 0),
            schedule,
            format!("finite_memory_{ell}"),
        )
        .map_err(to_py)?;
        Ok(NoiseProcess { inner })
    }

    /// Time-independent process from an explicit channel on S (d_e = 1) or
    /// on E⊗S.
    #[staticmethod]
    #[pyo3(signature = (channel, d_e=1))]
    fn from_channel(channel: &KrausChannel, d_e: usize) -> PyResult<Self> {
        let d_s = 2usize;
        let step = if channel.inner.dim == d_s {
            StepNoise::SystemOnly(channel.inner.clone())
        } else if channel.inner.dim == d_e * d_s {
            StepNoise::Joint(channel.inner.clone())
        } else {
            return Err(PyValueError::new_err(format!(
                "channel dim {} matches neither d_S = {d_s} nor d_E·d_S = {}",
                channel.inner.dim,
                d_e * d_s
            )));
        };
        let inner = noise::NoiseProcess::time_independent(
            DensityOperator::ground(d_e, d_s),
            proj(d_s, 0),
            step,
            "custom",
        )
        .map_err(to_py)?;
        Ok(NoiseProcess { inner })
    }

    /// The Markovianized counterpart: every step n ≤ m_max + 1 replaced by
    /// tr_E∘Λ_n(|0⟩⟨0|_E ⊗ ·).
    fn markovianized(&self, m_max: usize) -> PyResult<Self> {
        let inner = nmrb::config::markovianize_process(&self.inner, &proj(self.inner.d_e, 0), m_max)
            .map_err(to_py)?;
        Ok(NoiseProcess { inner })
    }

    /// The noise channel at step n, as a joint channel on E⊗S.
    fn step(&self, n: usize) -> PyResult<KrausChannel> {
        Ok(KrausChannel { inner: self.inner.step_joint(n).map_err(to_py)? })
    }

    #[getter]
    fn d_e(&self) -> usize {
        self.inner.d_e
    }

    #[getter]
    fn d_s(&self) -> usize {
        self.inner.d_s
    }

    #[getter]
    fn model_id(&self) -> String {
        self.inner.model_id.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "NoiseProcess(model_id={:?}, d_e={}, d_s={})",
            self.inner.model_id, self.inner.d_e, self.inner.d_s
        )
    }
}

/// Exact average sequence fidelity at sequence length m.
#[pyfunction]
fn asf_analytical(process: &NoiseProcess, m: usize) -> PyResult<f64> {
    asf::asf_analytical(&process.inner, m).map_err(to_py)
}

/// Exact ASF on a grid of sequence lengths: list of (m, value).
#[pyfunction]
fn asf_curve(process: &NoiseProcess, ms: Vec<usize>) -> PyResult<Vec<(usize, f64)>> {
    let curve = asf::asf_curve_analytical(&process.inner, &ms).map_err(to_py)?;
    Ok(curve.points.iter().map(|p| (p.m, p.value)).collect())
}

/// Exact ASF with the gates at `pattern` (1-based steps) fixed to identity.
#[pyfunction]
fn asf_with_identities(process: &NoiseProcess, m: usize, pattern: Vec<usize>) -> PyResult<f64> {
    let pattern: BTreeSet<usize> = pattern.into_iter().collect();
    asf::asf_with_identities(&process.inner, m, &pattern).map_err(to_py)
}

/// Brute-force average over all 24^m Clifford tuples (m ≤ 2).
#[pyfunction]
fn asf_oracle(process: &NoiseProcess, m: usize) -> PyResult<f64> {
    asf::asf_oracle_clifford_enum(&process.inner, m).map_err(to_py)
}

/// Monte-Carlo RB run: list of (m, mean, stderr).
#[pyfunction]
#[pyo3(signature = (process, ms, samples, seed, haar=false, fixed_ids=None, interleave_ids=None))]
fn run_rb(
    process: &NoiseProcess,
    ms: Vec<usize>,
    samples: usize,
    seed: u64,
    haar: bool,
    fixed_ids: Option<Vec<usize>>,
    interleave_ids: Option<usize>,
) -> PyResult<Vec<(usize, f64, Option<f64>)>> {
    let cfg = rbsim::RBRunConfig {
        m_values: ms,
        samples_per_m: samples,
        gate_source: if haar { rbsim::GateSource::Haar } else { rbsim::GateSource::Clifford24 },
        fixed_ids: fixed_ids.unwrap_or_default().into_iter().collect(),
        interleave_ids,
        seed,
    };
    let curve = rbsim::run_rb(&process.inner, &cfg).map_err(to_py)?;
    Ok(curve.points.iter().map(|p| (p.m, p.value, p.stderr)).collect())
}

fn curve_from_parts(ms: &[usize], values: &[f64], stderrs: Option<&[f64]>) -> PyResult<ASFCurve> {
    if ms.len() != values.len() || stderrs.is_some_and(|s| s.len() != ms.len()) {
        return Err(PyValueError::new_err("ms, values, stderrs must have equal length"));
    }
    let points: Vec<AsfPoint> = ms
        .iter()
        .zip(values)
        .enumerate()
        .map(|(i, (&m, &value))| AsfPoint { m, value, stderr: stderrs.map(|s| s[i]) })
        .collect();
    let meta = CurveMeta {
        engine: if stderrs.is_some() { EngineKind::MonteCarlo } else { EngineKind::Analytical },
        ..CurveMeta::analytical("python")
    };
    ASFCurve::new(points, meta).map_err(to_py)
}

/// Fit A·p^m + B; returns a dict with keys a, p, b, rms_residual,
/// max_residual, converged.
#[pyfunction]
#[pyo3(signature = (ms, values, stderrs=None, window=None))]
fn fit_exponential(
    py: Python<'_>,
    ms: Vec<usize>,
    values: Vec<f64>,
    stderrs: Option<Vec<f64>>,
    window: Option<(usize, usize)>,
) -> PyResult<Py<PyDict>> {
    let curve = curve_from_parts(&ms, &values, stderrs.as_deref())?;
    let fit = nmrb::analysis::fit_exponential(&curve, window).map_err(to_py)?;
    let out = PyDict::new_bound(py);
    out.set_item("a", fit.a)?;
    out.set_item("p", fit.p)?;
    out.set_item("b", fit.b)?;
    out.set_item("rms_residual", fit.rms_residual)?;
    out.set_item("max_residual", fit.max_residual)?;
    out.set_item("converged", fit.converged)?;
    Ok(out.into())
}

/// ℓ_q distance between a curve and a reference on the same m grid
/// (q = inf as float("inf")).
#[pyfunction]
fn rb_nonmarkovianity(ms: Vec<usize>, values: Vec<f64>, reference: Vec<f64>, q: f64) -> PyResult<f64> {
    let curve = curve_from_parts(&ms, &values, None)?;
    let reference = curve_from_parts(&ms, &reference, None)?;
    nmrb::analysis::rb_nonmarkovianity(&curve, &reference, q).map_err(to_py)
}

/// Average Markovian decay rate of classical Gaussian dephasing.
#[pyfunction]
fn dephasing_markovian_rate(sigma: f64) -> PyResult<f64> {
    noise::dephasing_markovian_rate(sigma).map_err(to_py)
}

/// Closed form (1 + 2e^{−2σ²})/3 of the same rate.
#[pyfunction]
fn dephasing_rate_closed_form(sigma: f64) -> f64 {
    noise::dephasing_rate_closed_form(sigma)
}

/// Shallow-pocket ASF at length m (constant τ); returns (value, in_range).
#[pyfunction]
fn shallow_pocket_asf(gamma: f64, tau: f64, m: usize) -> PyResult<(f64, bool)> {
    let taus = vec![tau; m + 1];
    noise::shallow_pocket_asf(gamma, &taus, m).map_err(to_py)
}

#[pymodule]
fn nmrb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<KrausChannel>()?;
    m.add_class::<NoiseProcess>()?;
    m.add_function(wrap_pyfunction!(asf_analytical, m)?)?;
    m.add_function(wrap_pyfunction!(asf_curve, m)?)?;
    m.add_function(wrap_pyfunction!(asf_with_identities, m)?)?;
    m.add_function(wrap_pyfunction!(asf_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(run_rb, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(rb_nonmarkovianity, m)?)?;
    m.add_function(wrap_pyfunction!(dephasing_markovian_rate, m)?)?;
    m.add_function(wrap_pyfunction!(dephasing_rate_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(shallow_pocket_asf, m)?)?;
    Ok(())
}
