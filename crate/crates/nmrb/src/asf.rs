//! Exact evaluation of the closed-form average sequence fidelity (ASF), its
//! Markovian limit, identity-fixed variants, and the finite-memory corollary
//! wrappers, plus the exhaustive Clifford-enumeration oracle.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{noise_strength, EnvSuperOp, EnvSuperOpKind, KrausChannel, TpFlag};
use crate::clifford::clifford_24;
use crate::core::{self, cr, identity, kron, CMat};
use crate::density::DensityOperator;
use crate::error::{NmrbError, Result};
use crate::noise::{NoiseProcess, StepNoise};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Analytical,
    MonteCarlo,
    Oracle,
    Markovianized,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsfPoint {
    pub m: usize,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveMeta {
    pub model_id: String,
    pub engine: EngineKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub identity_pattern: Vec<usize>,
}

impl CurveMeta {
    pub fn analytical(model_id: impl Into<String>) -> Self {
        CurveMeta {
            model_id: model_id.into(),
            engine: EngineKind::Analytical,
            seed: None,
            samples: None,
            identity_pattern: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ASFCurve {
    pub points: Vec<AsfPoint>,
    pub meta: CurveMeta,
}

impl ASFCurve {
    pub fn new(points: Vec<AsfPoint>, meta: CurveMeta) -> Result<Self> {
        if points.windows(2).any(|w| w[1].m <= w[0].m) {
            return Err(NmrbError::Invalid("curve m values must strictly increase".into()));
        }
        if points.iter().any(|p| !p.value.is_finite()) {
            return Err(NmrbError::Numeric("curve contains non-finite values".into()));
        }
        if matches!(meta.engine, EngineKind::Analytical | EngineKind::Markovianized)
            && points.iter().any(|p| p.stderr.is_some())
        {
            return Err(NmrbError::Invalid("analytical curves carry no stderr".into()));
        }
        Ok(ASFCurve { points, meta })
    }

    pub fn ms(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.m).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// F_m via the composed-map iteration: run the environment operator pair
/// (X, ε) through ($−Θ)/(d_S²−1) and Θ respectively, then close with Λ_{m+1}.
pub fn asf_analytical(process: &NoiseProcess, m: usize) -> Result<f64> {
    let (d_e, d_s) = (process.d_e, process.d_s);
    let rho_e = process.rho0.reduced_env()?;
    let i_s_norm = identity(d_s) * cr(1.0 / d_s as f64);
    let mut x = &process.rho0.matrix - kron(&rho_e, &i_s_norm);
    let mut eps = rho_e;
    let denom = cr(1.0 / ((d_s * d_s - 1) as f64));
    for n in 1..=m {
        let ch = process.step_joint(n)?;
        let theta_eps = crate::channels::theta_map(&ch, d_e, d_s, &eps)?;
        let op = EnvSuperOp::new(EnvSuperOpKind::DollarMinusTheta, ch, d_e, d_s)?;
        x = op.extend(&x)? * denom;
        eps = theta_eps;
    }
    let undo = process.step_joint(m + 1)?;
    let povm_se = kron(&identity(d_e), &process.povm);
    let b_term = undo.apply(&kron(&eps, &i_s_norm))?;
    let b = core::trace(&(&povm_se * &b_term)).re;
    if matches!(undo.tp_flag, TpFlag::TracePreserving) && !(-1e-9..=1.0 + 1e-9).contains(&b) {
        return Err(NmrbError::Numeric(format!(
            "asf_analytical: ℬ-term value {b} outside [0, 1] for TP noise"
        )));
    }
    let a_term = undo.apply(&x)?;
    let a = core::trace(&(&povm_se * &a_term)).re;
    Ok(a + b)
}

/// Evaluate a whole analytical curve (parallel over m).
pub fn asf_curve_analytical(process: &NoiseProcess, ms: &[usize]) -> Result<ASFCurve> {
    let values: Result<Vec<f64>> = ms.par_iter().map(|&m| asf_analytical(process, m)).collect();
    let points = ms
        .iter()
        .zip(values?)
        .map(|(&m, value)| AsfPoint { m, value, stderr: None })
        .collect();
    ASFCurve::new(points, CurveMeta::analytical(process.model_id.clone()))
}

/// Markovian closed form: F_m = (Π_{n≤m} p_n)·A + B.
pub fn asf_markovian(p_list: &[f64], a: f64, b: f64) -> Result<ASFCurve> {
    let mut points = Vec::with_capacity(p_list.len());
    let mut prod = 1.0;
    for (i, p) in p_list.iter().enumerate() {
        prod *= p;
        points.push(AsfPoint {
            m: i + 1,
            value: prod * a + b,
            stderr: None,
        });
    }
    ASFCurve::new(points, CurveMeta {
        engine: EngineKind::Markovianized,
        ..CurveMeta::analytical("markovian")
    })
}

/// ASF of the protocol variant where the gates at `fixed_ids` are the identity.
///
/// Noise at a fixed step composes with its neighbours: a run of fixed steps
/// following a randomized step folds into that step's effective channel; a run
/// of fixed steps before the first randomized step acts directly on the
/// initial state. The theorem evaluator then runs on the shortened schedule.
pub fn asf_with_identities(
    process: &NoiseProcess,
    m: usize,
    fixed_ids: &BTreeSet<usize>,
) -> Result<f64> {
    if fixed_ids.is_empty() {
        return asf_analytical(process, m);
    }
    if fixed_ids.iter().any(|&n| n < 1 || n > m) {
        return Err(NmrbError::Invalid("fixed_ids must lie in 1..=m".into()));
    }
    if fixed_ids.len() == m {
        return Err(NmrbError::Invalid(
            "all steps fixed to identity: no randomization left".into(),
        ));
    }
    let (d_e, d_s) = (process.d_e, process.d_s);

    // initial state absorbs any leading run of fixed steps
    let mut rho = process.rho0.matrix.clone();
    let mut n = 1usize;
    while fixed_ids.contains(&n) {
        rho = process.step_joint(n)?.apply(&rho)?;
        n += 1;
    }

    // each randomized step absorbs the fixed run that follows it
    let mut effective: Vec<KrausChannel> = Vec::new();
    while n <= m {
        let mut ch = process.step_joint(n)?;
        n += 1;
        while n <= m && fixed_ids.contains(&n) {
            ch = process.step_joint(n)?.compose(&ch)?;
            n += 1;
        }
        effective.push(ch);
    }
    let undo = process.step_joint(m + 1)?;
    let m_eff = effective.len();
    let steps: Arc<Vec<KrausChannel>> = Arc::new(effective);
    let undo = Arc::new(undo);
    let schedule: crate::noise::StepSchedule = Arc::new(move |j: usize| {
        if j <= m_eff {
            StepNoise::Joint(steps[j - 1].clone())
        } else {
            StepNoise::Joint((*undo).clone())
        }
    });
    let eff_process = NoiseProcess::new(
        DensityOperator::new(rho, d_e, d_s)?,
        process.povm.clone(),
        schedule,
        format!("{}(fixed)", process.model_id),
    )?;
    asf_analytical(&eff_process, m_eff)
}

fn markovian_p(process: &NoiseProcess, n: usize) -> Result<f64> {
    match process.step(n) {
        StepNoise::SystemOnly(ch) => Ok(noise_strength(&ch).p),
        _ => Err(NmrbError::Invalid(format!(
            "corollary structure mismatch: step {n} must be SystemOnly"
        ))),
    }
}

fn close_with_undo(
    process: &NoiseProcess,
    m: usize,
    x: &CMat,
    eps: &CMat,
) -> Result<(f64, f64)> {
    let (d_e, d_s) = (process.d_e, process.d_s);
    let undo = process.step_joint(m + 1)?;
    let povm_se = kron(&identity(d_e), &process.povm);
    let i_s_norm = identity(d_s) * cr(1.0 / d_s as f64);
    let a = core::trace(&(&povm_se * undo.apply(x)?)).re;
    let b = core::trace(&(&povm_se * undo.apply(&kron(eps, &i_s_norm))?)).re;
    Ok((a, b))
}

/// Corollary (Initial): joint noise on steps 1..ℓ, Markovian (system-only)
/// noise afterwards. The initial block folds into effective SPAM constants and
/// the tail contributes a plain product of noise strengths.
pub fn asf_corollary_initial(process: &NoiseProcess, ell: usize, m: usize) -> Result<f64> {
    if ell >= m {
        return Err(NmrbError::Invalid("corollary: need ell < m".into()));
    }
    let (d_e, d_s) = (process.d_e, process.d_s);
    let rho_e = process.rho0.reduced_env()?;
    let i_s_norm = identity(d_s) * cr(1.0 / d_s as f64);
    let mut x = &process.rho0.matrix - kron(&rho_e, &i_s_norm);
    let mut eps = rho_e;
    let denom = cr(1.0 / ((d_s * d_s - 1) as f64));
    for n in 1..=ell {
        let ch = match process.step(n) {
            StepNoise::Joint(ch) => ch,
            _ => {
                return Err(NmrbError::Invalid(format!(
                    "corollary structure mismatch: step {n} must be Joint"
                )))
            }
        };
        let theta_eps = crate::channels::theta_map(&ch, d_e, d_s, &eps)?;
        let op = EnvSuperOp::new(EnvSuperOpKind::DollarMinusTheta, ch, d_e, d_s)?;
        x = op.extend(&x)? * denom;
        eps = theta_eps;
    }
    let mut p_prod = 1.0;
    for n in ell + 1..=m {
        p_prod *= markovian_p(process, n)?;
    }
    let (a, b) = close_with_undo(process, m, &x, &eps)?;
    Ok(p_prod * a + b)
}

/// Corollary (Late): Markovian noise on steps 1..ℓ, joint noise afterwards.
pub fn asf_corollary_late(process: &NoiseProcess, ell: usize, m: usize) -> Result<f64> {
    if ell >= m {
        return Err(NmrbError::Invalid("corollary: need ell < m".into()));
    }
    let (d_e, d_s) = (process.d_e, process.d_s);
    let rho_e = process.rho0.reduced_env()?;
    let i_s_norm = identity(d_s) * cr(1.0 / d_s as f64);
    let mut p_prod = 1.0;
    for n in 1..=ell {
        p_prod *= markovian_p(process, n)?;
    }
    let mut x = (&process.rho0.matrix - kron(&rho_e, &i_s_norm)) * cr(p_prod);
    let mut eps = rho_e;
    let denom = cr(1.0 / ((d_s * d_s - 1) as f64));
    for n in ell + 1..=m {
        let ch = process.step_joint(n)?;
        let theta_eps = crate::channels::theta_map(&ch, d_e, d_s, &eps)?;
        let op = EnvSuperOpKind::DollarMinusTheta;
        let op = EnvSuperOp::new(op, ch, d_e, d_s)?;
        x = op.extend(&x)? * denom;
        eps = theta_eps;
    }
    let (a, b) = close_with_undo(process, m, &x, &eps)?;
    Ok(a + b)
}

/// Corollary (Blocks): Markovian noise everywhere except a reset-terminated
/// joint block at step ℓ ("intermittently non-Markovian").
pub fn asf_corollary_blocks(process: &NoiseProcess, ell: usize, m: usize) -> Result<f64> {
    if ell >= m {
        return Err(NmrbError::Invalid("corollary: need ell < m".into()));
    }
    let (d_e, d_s) = (process.d_e, process.d_s);
    let rho_e = process.rho0.reduced_env()?;
    let i_s_norm = identity(d_s) * cr(1.0 / d_s as f64);
    let mut p_prod = 1.0;
    for n in 1..ell {
        p_prod *= markovian_p(process, n)?;
    }
    let mut x = (&process.rho0.matrix - kron(&rho_e, &i_s_norm)) * cr(p_prod);
    let reset = match process.step(ell) {
        StepNoise::ResetAfter { ch, eps } => crate::channels::reset_after(&ch, &eps, d_e, d_s)?,
        _ => {
            return Err(NmrbError::Invalid(format!(
                "corollary structure mismatch: step {ell} must be ResetAfter"
            )))
        }
    };
    let theta_eps = crate::channels::theta_map(&reset, d_e, d_s, &rho_e)?;
    let op = EnvSuperOp::new(EnvSuperOpKind::DollarMinusTheta, reset, d_e, d_s)?;
    let denom = cr(1.0 / ((d_s * d_s - 1) as f64));
    x = op.extend(&x)? * denom;
    let eps = theta_eps;
    let mut p_tail = 1.0;
    for n in ell + 1..=m {
        p_tail *= markovian_p(process, n)?;
    }
    x *= cr(p_tail);
    let (a, b) = close_with_undo(process, m, &x, &eps)?;
    Ok(a + b)
}

/// Exact average over all 24^m Clifford tuples (m ≤ 2) by full enumeration.
pub fn asf_oracle_clifford_enum(process: &NoiseProcess, m: usize) -> Result<f64> {
    if process.d_s != 2 {
        return Err(NmrbError::Invalid("enumeration oracle requires a qubit system".into()));
    }
    if m == 0 || m > 2 {
        return Err(NmrbError::Invalid("enumeration oracle supports m ∈ {1, 2} only".into()));
    }
    let group = clifford_24();
    let total: Result<f64> = (0..group.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut acc = 0.0;
            if m == 1 {
                let gates = vec![group[i].clone()];
                acc += crate::rbsim::sequence_fidelity(process, &gates, 1)?;
            } else {
                for g2 in group {
                    let gates = vec![group[i].clone(), g2.clone()];
                    acc += crate::rbsim::sequence_fidelity(process, &gates, 2)?;
                }
            }
            Ok(acc)
        })
        .sum();
    Ok(total? / (group.len() as f64).powi(m as i32))
}
