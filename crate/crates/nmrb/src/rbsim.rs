//! Monte-Carlo execution of the 6-step RB protocol against a NoiseProcess,
//! with identity-fixing and identity-interleaving variants.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asf::{ASFCurve, AsfPoint, CurveMeta, EngineKind};
use crate::core::{self, haar_random_unitary, identity, kron, tol, CMat};
use crate::error::{NmrbError, Result};
use crate::noise::NoiseProcess;
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSource {
    Clifford24,
    Haar,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RBRunConfig {
    pub m_values: Vec<usize>,
    pub samples_per_m: usize,
    pub gate_source: GateSource,
    #[serde(default)]
    pub fixed_ids: BTreeSet<usize>,
    #[serde(default)]
    pub interleave_ids: Option<usize>,
    pub seed: u64,
}

impl RBRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_m == 0 {
            return Err(NmrbError::Invalid("samples_per_m must be ≥ 1".into()));
        }
        if self.m_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NmrbError::Invalid("m_values must strictly increase".into()));
        }
        if !self.fixed_ids.is_empty() && self.interleave_ids.is_some() {
            return Err(NmrbError::Invalid(
                "fixed_ids and interleave_ids are mutually exclusive".into(),
            ));
        }
        Ok(())
    }

    fn is_identity_step(&self, n: usize) -> bool {
        match self.interleave_ids {
            // k identities after every random gate: steps 1, k+2, 2k+3, … are random
            Some(k) => (n - 1) % (k + 1) != 0,
            None => self.fixed_ids.contains(&n),
        }
    }

    fn stream_tag(&self) -> u64 {
        self.interleave_ids.map(|k| k as u64 + 1).unwrap_or(0)
    }
}

/// Run one sequence: ρ → Λ_n∘(I_E⊗𝒢_n) for n = 1..m, undo gate, Λ_{m+1},
/// then read out tr[(I_E⊗𝓜)ρ].
pub fn sequence_fidelity(process: &NoiseProcess, gates: &[CMat], m: usize) -> Result<f64> {
    if gates.len() != m {
        return Err(NmrbError::Invalid(format!(
            "sequence_fidelity: got {} gates for m = {m}",
            gates.len()
        )));
    }
    let (d_e, d_s) = (process.d_e, process.d_s);
    let i_e = identity(d_e);
    for g in gates {
        if core::max_abs_diff(&(g.adjoint() * g), &identity(d_s)) > tol::UNITARY {
            return Err(NmrbError::Invalid("sequence_fidelity: non-unitary gate".into()));
        }
    }
    let mut rho = process.rho0.matrix.clone();
    let mut product = identity(d_s);
    for (n, g) in gates.iter().enumerate() {
        let u = kron(&i_e, g);
        rho = &u * rho * u.adjoint();
        rho = process.step_joint(n + 1)?.apply(&rho)?;
        product = g * product;
    }
    let undo = kron(&i_e, &product.adjoint());
    rho = &undo * rho * undo.adjoint();
    rho = process.step_joint(m + 1)?.apply(&rho)?;
    let povm_se = kron(&i_e, &process.povm);
    let f = core::trace(&(&povm_se * &rho)).re;
    if !(-1e-9..=1.0 + 1e-9).contains(&f) {
        return Err(NmrbError::Numeric(format!(
            "sequence_fidelity: value {f} outside [0, 1]"
        )));
    }
    Ok(f)
}

fn draw_gates<R: Rng>(
    cfg: &RBRunConfig,
    d_s: usize,
    m: usize,
    rng: &mut R,
) -> Vec<CMat> {
    let group = crate::clifford::clifford_24();
    (1..=m)
        .map(|n| {
            if cfg.is_identity_step(n) {
                identity(d_s)
            } else {
                match cfg.gate_source {
                    GateSource::Clifford24 => group[rng.gen_range(0..group.len())].clone(),
                    GateSource::Haar => haar_random_unitary(d_s, rng),
                }
            }
        })
        .collect()
}

/// Monte-Carlo ASF: per-m sample mean and standard error of the mean.
/// Fully deterministic given the seed; each (pattern, m, sample) triple gets
/// an independently derived RNG stream, so parallel order cannot matter.
pub fn run_rb(process: &NoiseProcess, cfg: &RBRunConfig) -> Result<ASFCurve> {
    cfg.validate()?;
    let seeded = SeededRng::new(cfg.seed);
    let tag = cfg.stream_tag();
    let points: Result<Vec<AsfPoint>> = cfg
        .m_values
        .par_iter()
        .map(|&m| -> Result<AsfPoint> {
            let values: Result<Vec<f64>> = (0..cfg.samples_per_m)
                .into_par_iter()
                .map(|i| -> Result<f64> {
                    let mut rng = seeded.stream(&[tag, m as u64, i as u64]);
                    let gates = draw_gates(cfg, process.d_s, m, &mut rng);
                    sequence_fidelity(process, &gates, m)
                })
                .collect();
            let values = values?;
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let stderr = if values.len() > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                Some((var / n).sqrt())
            } else {
                None
            };
            Ok(AsfPoint {
                m,
                value: mean,
                stderr,
            })
        })
        .collect();
    let mut identity_pattern: Vec<usize> = cfg.fixed_ids.iter().copied().collect();
    if let Some(k) = cfg.interleave_ids {
        // record the realized pattern for the largest m
        if let Some(&m_max) = cfg.m_values.last() {
            identity_pattern = (1..=m_max).filter(|&n| (n - 1) % (k + 1) != 0).collect();
        }
    }
    ASFCurve::new(
        points?,
        CurveMeta {
            model_id: process.model_id.clone(),
            engine: EngineKind::MonteCarlo,
            seed: Some(cfg.seed),
            samples: Some(cfg.samples_per_m),
            identity_pattern,
        },
    )
}

/// One Monte-Carlo curve per interleaving depth (k identities after every
/// random gate). Depth 0 reproduces the plain run.
///
/// Curves are indexed by the number of random gates m: the depth-k run uses
/// sequences of total length m·(k+1), so every curve probes the same number
/// of twirling gates while the noise between them compounds k+1-fold.
pub fn run_interleaved_identity_scan(
    process: &NoiseProcess,
    cfg: &RBRunConfig,
    depths: &[usize],
) -> Result<Vec<ASFCurve>> {
    depths
        .iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.fixed_ids.clear();
            c.interleave_ids = if k == 0 { None } else { Some(k) };
            c.m_values = cfg.m_values.iter().map(|&m| m * (k + 1)).collect();
            let curve = run_rb(process, &c)?;
            let points = curve
                .points
                .iter()
                .zip(&cfg.m_values)
                .map(|(p, &m)| AsfPoint { m, ..p.clone() })
                .collect();
            ASFCurve::new(points, curve.meta.clone())
        })
        .collect()
}
