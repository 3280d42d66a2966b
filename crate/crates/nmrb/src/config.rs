//! Configuration-driven experiment descriptions: one JSON document per run.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::asf::{ASFCurve, AsfPoint, CurveMeta, EngineKind};
use crate::analysis::BaselineConstraint;
use crate::channels::{markovianize, KrausChannelJson};
use crate::core::{self, proj, CMat};
use crate::density::{DensityOperator, MatrixJson};
use crate::error::{NmrbError, Result};
use crate::noise::{
    classical_dephasing_asf, finite_memory_schedule, ising_chain_hamiltonian, shallow_pocket_asf,
    two_spin_hamiltonian, xx_spin_hamiltonian, DephasingMode, NoiseProcess, SpamSpec, StepNoise,
};
use crate::rbsim::RBRunConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Joint SE unitary exp(−iδH) with H = J X₁X₂ + h_x ΣX + h_y ΣY.
    TwoSpin { j: f64, h_x: f64, h_y: f64, delta: f64 },
    /// Joint SE unitary with H = J_x X₁X₂ + J_y Y₁Y₂.
    XxSpin { j_x: f64, j_y: f64, delta: f64 },
    /// Closed Ising chain of n_sites qubits; the system is one site, the
    /// rest form the environment.
    IsingChain {
        n_sites: usize,
        j: f64,
        h_x: f64,
        h_y: f64,
        delta: f64,
    },
    /// Memory-length-ℓ mixture of a joint unitary and an env-resetting
    /// Markovian branch.
    FiniteMemory {
        ell: usize,
        delta: f64,
        delta_m_factor: f64,
        j: f64,
        h_x: f64,
        h_y: f64,
    },
    /// Classically-correlated Z-rotation noise; curve computed in closed
    /// form (no Monte-Carlo support).
    ClassicalDephasing { sigma: f64, mode: DephasingModeSpec },
    /// Cauchy-distributed dephasing; curve computed by quadrature.
    ShallowPocket { gamma: f64, tau: f64 },
    /// Explicit time-independent Kraus channel, acting on S (dim d_S) or on
    /// E⊗S (dim d_E·d_S).
    CustomKraus { channel: KrausChannelJson },
    Noiseless,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DephasingModeSpec {
    Markovian,
    Dc,
}

impl From<DephasingModeSpec> for DephasingMode {
    fn from(m: DephasingModeSpec) -> Self {
        match m {
            DephasingModeSpec::Markovian => DephasingMode::Markovian,
            DephasingModeSpec::Dc => DephasingMode::Dc,
        }
    }
}

/// Initial state: the ground state or an explicit density matrix on E⊗S.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(String),
    Matrix(MatrixJson),
}

/// POVM element on S: "proj0" or an explicit matrix.
pub type PovmSpec = StateSpec;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SpamConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prep: Option<KrausChannelJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meas_rotation: Option<f64>,
}

impl SpamConfig {
    pub fn to_spec(&self) -> Result<SpamSpec> {
        Ok(SpamSpec {
            prep: self.prep.as_ref().map(|p| p.to_channel()).transpose()?,
            meas_rotation: self.meas_rotation,
        })
    }
}

/// Norm order q, serialized as a number or the string "inf".
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QOrder(pub f64);

impl Serialize for QOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for QOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(QOrder(x)),
            Raw::Str(s) if s == "inf" => Ok(QOrder(f64::INFINITY)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("invalid q value {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AnalysisSpec {
    /// Inclusive m-window for the reference exponential fit; auto-selected
    /// from the curve tail when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_values: Option<Vec<QOrder>>,
    /// Largest number of fixed identities tried by the memory scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_k_max: Option<usize>,
    /// Largest sequence length probed by the identity-fixed scan curves
    /// (defaults to the last entry of the run's m grid).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_m_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interleave_depths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_constraint: Option<BaselineConstraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Output file stem; extensions are appended per artifact.
    pub path: String,
    pub format: OutputFormat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Number of environment qubits (d_E = 2^env_qubits).
    pub env_qubits: usize,
    /// Number of system qubits (d_S = 2^sys_qubits).
    pub sys_qubits: usize,
    pub rho0: StateSpec,
    pub povm: PovmSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spam: Option<SpamConfig>,
    pub run: RBRunConfig,
    pub engines: Vec<EngineKind>,
    /// Replace every step by its ε = |0⟩⟨0| Markovianization before running.
    #[serde(default)]
    pub markovianize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSpec>,
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NmrbError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| NmrbError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn d_e(&self) -> usize {
        1 << self.env_qubits
    }

    pub fn d_s(&self) -> usize {
        1 << self.sys_qubits
    }

    pub fn validate(&self) -> Result<()> {
        self.run
            .validate()
            .map_err(|e| NmrbError::Config(format!("run: {e}")))?;
        if self.engines.is_empty() {
            return Err(NmrbError::Config("engines must be nonempty".into()));
        }
        if self.sys_qubits != 1 {
            return Err(NmrbError::Config(
                "only single-qubit systems are supported (Clifford-24 gate set)".into(),
            ));
        }
        match &self.model {
            ModelSpec::TwoSpin { .. } | ModelSpec::XxSpin { .. } | ModelSpec::FiniteMemory { .. } => {
                if self.env_qubits != 1 {
                    return Err(NmrbError::Config(
                        "two-spin models require exactly one environment qubit".into(),
                    ));
                }
            }
            ModelSpec::IsingChain { n_sites, .. } => {
                if *n_sites < 2 || self.env_qubits != n_sites - 1 {
                    return Err(NmrbError::Config(
                        "ising_chain requires env_qubits = n_sites − 1 ≥ 1".into(),
                    ));
                }
            }
            ModelSpec::ClassicalDephasing { sigma, .. } => {
                if *sigma <= 0.0 {
                    return Err(NmrbError::Config("sigma must be > 0".into()));
                }
                if self.env_qubits != 0 {
                    return Err(NmrbError::Config(
                        "classical_dephasing has no quantum environment (env_qubits = 0)".into(),
                    ));
                }
            }
            ModelSpec::ShallowPocket { gamma, .. } => {
                if *gamma <= 0.0 {
                    return Err(NmrbError::Config("gamma must be > 0".into()));
                }
                if self.env_qubits != 0 {
                    return Err(NmrbError::Config(
                        "shallow_pocket has no quantum environment (env_qubits = 0)".into(),
                    ));
                }
            }
            ModelSpec::CustomKraus { channel } => {
                let ch = channel
                    .to_channel()
                    .map_err(|e| NmrbError::Config(format!("custom_kraus: {e}")))?;
                if ch.dim != self.d_s() && ch.dim != self.d_e() * self.d_s() {
                    return Err(NmrbError::Config(format!(
                        "custom_kraus dim {} matches neither d_S = {} nor d_E·d_S = {}",
                        ch.dim,
                        self.d_s(),
                        self.d_e() * self.d_s()
                    )));
                }
            }
            ModelSpec::Noiseless => {}
        }
        if self.is_direct_model() {
            if self.engines.iter().any(|e| *e != EngineKind::Analytical) {
                return Err(NmrbError::Config(
                    "closed-form models support only the analytical engine".into(),
                ));
            }
            if self.markovianize {
                return Err(NmrbError::Config(
                    "closed-form models cannot be Markovianized".into(),
                ));
            }
        }
        Ok(())
    }

    /// Models whose ASF comes from a closed form instead of a NoiseProcess.
    pub fn is_direct_model(&self) -> bool {
        matches!(
            self.model,
            ModelSpec::ClassicalDephasing { .. } | ModelSpec::ShallowPocket { .. }
        )
    }

    fn rho0_matrix(&self) -> Result<DensityOperator> {
        match &self.rho0 {
            StateSpec::Named(s) if s == "zeros" => Ok(DensityOperator::ground(self.d_e(), self.d_s())),
            StateSpec::Named(s) => Err(NmrbError::Config(format!("unknown rho0 spec {s:?}"))),
            StateSpec::Matrix(m) => DensityOperator::new(m.to_mat()?, self.d_e(), self.d_s()),
        }
    }

    fn povm_matrix(&self) -> Result<CMat> {
        match &self.povm {
            StateSpec::Named(s) if s == "proj0" => Ok(proj(self.d_s(), 0)),
            StateSpec::Named(s) => Err(NmrbError::Config(format!("unknown povm spec {s:?}"))),
            StateSpec::Matrix(m) => m.to_mat(),
        }
    }

    /// Realize the configured model as a NoiseProcess, with SPAM and the
    /// optional Markovianization applied. `m_max` bounds the step index for
    /// which time-dependent schedules must be materialized.
    pub fn build_process(&self, m_max: usize) -> Result<NoiseProcess> {
        if self.is_direct_model() {
            return Err(NmrbError::Config(
                "closed-form model has no NoiseProcess realization".into(),
            ));
        }
        let rho0 = self.rho0_matrix()?;
        let povm = self.povm_matrix()?;
        let (d_e, d_s) = (self.d_e(), self.d_s());
        let process = match &self.model {
            ModelSpec::TwoSpin { j, h_x, h_y, delta } => {
                let u = core::hermitian_expm(&two_spin_hamiltonian(*j, *h_x, *h_y), *delta)?;
                NoiseProcess::time_independent(
                    rho0,
                    povm,
                    StepNoise::Joint(crate::channels::KrausChannel::from_unitary(u)?),
                    "two_spin",
                )?
            }
            ModelSpec::XxSpin { j_x, j_y, delta } => {
                let u = core::hermitian_expm(&xx_spin_hamiltonian(*j_x, *j_y), *delta)?;
                NoiseProcess::time_independent(
                    rho0,
                    povm,
                    StepNoise::Joint(crate::channels::KrausChannel::from_unitary(u)?),
                    "xx_spin",
                )?
            }
            ModelSpec::IsingChain {
                n_sites,
                j,
                h_x,
                h_y,
                delta,
            } => {
                let h = ising_chain_hamiltonian(*n_sites, *j, *h_x, *h_y)?;
                let u = core::hermitian_expm(&h, *delta)?;
                NoiseProcess::time_independent(
                    rho0,
                    povm,
                    StepNoise::Joint(crate::channels::KrausChannel::from_unitary(u)?),
                    format!("ising_chain_{n_sites}"),
                )?
            }
            ModelSpec::FiniteMemory {
                ell,
                delta,
                delta_m_factor,
                j,
                h_x,
                h_y,
            } => {
                let h = two_spin_hamiltonian(*j, *h_x, *h_y);
                let schedule = finite_memory_schedule(
                    *ell,
                    *delta,
                    *delta_m_factor,
                    &h,
                    &proj(d_e, 0),
                    d_e,
                    d_s,
                )?;
                NoiseProcess::new(rho0, povm, schedule, format!("finite_memory_{ell}"))?
            }
            ModelSpec::CustomKraus { channel } => {
                let ch = channel.to_channel()?;
                let step = if ch.dim == d_s {
                    StepNoise::SystemOnly(ch)
                } else {
                    StepNoise::Joint(ch)
                };
                NoiseProcess::time_independent(rho0, povm, step, "custom_kraus")?
            }
            ModelSpec::Noiseless => NoiseProcess::time_independent(
                rho0,
                povm,
                StepNoise::SystemOnly(crate::channels::KrausChannel::identity(d_s)),
                "noiseless",
            )?,
            ModelSpec::ClassicalDephasing { .. } | ModelSpec::ShallowPocket { .. } => unreachable!(),
        };
        let process = match &self.spam {
            Some(spam) => crate::noise::apply_spam(&process, &spam.to_spec()?)?,
            None => process,
        };
        if self.markovianize {
            markovianize_process(&process, &proj(process.d_e, 0), m_max)
        } else {
            Ok(process)
        }
    }

    /// Closed-form curve for the direct models on the configured m grid.
    pub fn direct_curve(&self) -> Result<ASFCurve> {
        let ms = &self.run.m_values;
        let m_max = *ms.last().unwrap();
        let values: Vec<f64> = match &self.model {
            ModelSpec::ClassicalDephasing { sigma, mode } => {
                let all = classical_dephasing_asf(*sigma, m_max, (*mode).into())?;
                ms.iter().map(|&m| all[m - 1]).collect()
            }
            ModelSpec::ShallowPocket { gamma, tau } => {
                let taus = vec![*tau; m_max + 1];
                let vals: Result<Vec<f64>> = ms
                    .iter()
                    .map(|&m| shallow_pocket_asf(*gamma, &taus, m).map(|(v, _)| v))
                    .collect();
                vals?
            }
            _ => {
                return Err(NmrbError::Config(
                    "direct_curve is only defined for closed-form models".into(),
                ))
            }
        };
        let points = ms
            .iter()
            .zip(values)
            .map(|(&m, value)| AsfPoint {
                m,
                value,
                stderr: None,
            })
            .collect();
        ASFCurve::new(points, CurveMeta::analytical(self.model_id()))
    }

    pub fn model_id(&self) -> String {
        match &self.model {
            ModelSpec::TwoSpin { .. } => "two_spin".into(),
            ModelSpec::XxSpin { .. } => "xx_spin".into(),
            ModelSpec::IsingChain { n_sites, .. } => format!("ising_chain_{n_sites}"),
            ModelSpec::FiniteMemory { ell, .. } => format!("finite_memory_{ell}"),
            ModelSpec::ClassicalDephasing { .. } => "classical_dephasing".into(),
            ModelSpec::ShallowPocket { .. } => "shallow_pocket".into(),
            ModelSpec::CustomKraus { .. } => "custom_kraus".into(),
            ModelSpec::Noiseless => "noiseless".into(),
        }
    }
}

/// Replace every step n ≤ m_max + 1 by the system-only channel
/// tr_E∘Λ_n(ε⊗·) and drop the environment from the initial state.
pub fn markovianize_process(
    process: &NoiseProcess,
    eps: &CMat,
    m_max: usize,
) -> Result<NoiseProcess> {
    let (d_e, d_s) = (process.d_e, process.d_s);
    let steps: Result<Vec<_>> = (1..=m_max + 1)
        .map(|n| markovianize(&process.step_joint(n)?, eps, d_e, d_s))
        .collect();
    let steps = Arc::new(steps?);
    let rho_s = process.rho0.reduced_sys()?;
    let schedule: crate::noise::StepSchedule = Arc::new(move |n: usize| {
        let idx = n.min(steps.len()).saturating_sub(1);
        StepNoise::SystemOnly(steps[idx].clone())
    });
    NoiseProcess::new(
        DensityOperator::new(rho_s, 1, d_s)?,
        process.povm.clone(),
        schedule,
        format!("{}+markovianized", process.model_id),
    )
}
