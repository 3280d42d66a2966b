//! Noise-model constructors: the spin Hamiltonians, the finite-memory mixture
//! schedule, classical dephasing and shallow-pocket curves, and SPAM injection.

use std::sync::Arc;

use crate::channels::{embed_system, reset_after, KrausChannel, TpFlag};
use crate::core::{
    self, cr, gauss_hermite, gauss_legendre, identity, kron, pauli_x, pauli_y, tol, CMat,
};
use crate::density::DensityOperator;
use crate::error::{NmrbError, Result};

/// Per-time-step noise descriptor.
#[derive(Clone, Debug)]
pub enum StepNoise {
    /// A CP map acting jointly on E⊗S.
    Joint(KrausChannel),
    /// A CP map acting on S alone (environment spectates).
    SystemOnly(KrausChannel),
    /// An SE map followed by an environment reset: X ↦ ε ⊗ tr_E[Λ(X)].
    ResetAfter { ch: KrausChannel, eps: CMat },
}

impl StepNoise {
    /// Realization as a single joint channel on E⊗S.
    pub fn to_joint(&self, d_e: usize, d_s: usize) -> Result<KrausChannel> {
        match self {
            StepNoise::Joint(ch) => {
                if ch.dim != d_e * d_s {
                    return Err(NmrbError::Dimension("joint step channel dim mismatch".into()));
                }
                Ok(ch.clone())
            }
            StepNoise::SystemOnly(ch) => {
                if ch.dim != d_s {
                    return Err(NmrbError::Dimension("system-only step channel dim mismatch".into()));
                }
                embed_system(ch, d_e)
            }
            StepNoise::ResetAfter { ch, eps } => reset_after(ch, eps, d_e, d_s),
        }
    }
}

pub type StepSchedule = Arc<dyn Fn(usize) -> StepNoise + Send + Sync>;

/// A full noise process: initial SE state, per-step noise schedule (1-based,
/// including the undo step m+1), and the measurement POVM element on S.
#[derive(Clone)]
pub struct NoiseProcess {
    pub d_e: usize,
    pub d_s: usize,
    pub rho0: DensityOperator,
    pub povm: CMat,
    pub schedule: StepSchedule,
    pub model_id: String,
}

impl NoiseProcess {
    pub fn new(
        rho0: DensityOperator,
        povm: CMat,
        schedule: StepSchedule,
        model_id: impl Into<String>,
    ) -> Result<Self> {
        let (d_e, d_s) = (rho0.d_e, rho0.d_s);
        rho0.validate()?;
        if povm.nrows() != d_s || povm.ncols() != d_s {
            return Err(NmrbError::Dimension("povm must act on S".into()));
        }
        if !core::is_hermitian(&povm, tol::HERMITIAN) {
            return Err(NmrbError::Invalid("povm must be Hermitian".into()));
        }
        let (vals, _) = core::hermitian_eig(&povm)?;
        if vals.iter().any(|&w| w < -1e-10 || w > 1.0 + 1e-10) {
            return Err(NmrbError::Invalid("povm eigenvalues must lie in [0, 1]".into()));
        }
        Ok(NoiseProcess {
            d_e,
            d_s,
            rho0,
            povm,
            schedule,
            model_id: model_id.into(),
        })
    }

    /// Time-independent schedule from a single step.
    pub fn time_independent(
        rho0: DensityOperator,
        povm: CMat,
        step: StepNoise,
        model_id: impl Into<String>,
    ) -> Result<Self> {
        NoiseProcess::new(rho0, povm, Arc::new(move |_n| step.clone()), model_id)
    }

    pub fn step(&self, n: usize) -> StepNoise {
        (self.schedule)(n)
    }

    pub fn step_joint(&self, n: usize) -> Result<KrausChannel> {
        self.step(n).to_joint(self.d_e, self.d_s)
    }
}

/// H = J X₁X₂ + h_x(X₁+X₂) + h_y(Y₁+Y₂) on two qubits.
pub fn two_spin_hamiltonian(j: f64, h_x: f64, h_y: f64) -> CMat {
    let i2 = identity(2);
    let (x, y) = (pauli_x(), pauli_y());
    kron(&x, &x) * cr(j)
        + (kron(&x, &i2) + kron(&i2, &x)) * cr(h_x)
        + (kron(&y, &i2) + kron(&i2, &y)) * cr(h_y)
}

/// H = J_x X₁X₂ + J_y Y₁Y₂ on two qubits.
pub fn xx_spin_hamiltonian(j_x: f64, j_y: f64) -> CMat {
    let (x, y) = (pauli_x(), pauli_y());
    kron(&x, &x) * cr(j_x) + kron(&y, &y) * cr(j_y)
}

/// Closed Ising chain H = Σ_i (J/2 X_iX_{i+1} + h_x X_i + h_y Y_i) on
/// n_sites qubits, with site 0 the system qubit. The returned matrix is
/// permuted into the global E⊗S ordering (environment sites first, system
/// qubit last), so it can be fed straight to the joint-channel machinery.
pub fn ising_chain_hamiltonian(n_sites: usize, j: f64, h_x: f64, h_y: f64) -> Result<CMat> {
    if n_sites < 2 {
        return Err(NmrbError::Invalid("ising chain needs at least 2 sites".into()));
    }
    let dim = 1usize << n_sites;
    let op_at = |site: usize, p: &CMat| -> CMat {
        let mut m = identity(1);
        for k in 0..n_sites {
            let factor = if k == site { p.clone() } else { identity(2) };
            m = kron(&m, &factor);
        }
        m
    };
    let (x, y) = (pauli_x(), pauli_y());
    let mut h = CMat::zeros(dim, dim);
    for i in 0..n_sites {
        let nb = (i + 1) % n_sites;
        h += op_at(i, &x) * op_at(nb, &x) * cr(j / 2.0);
        h += op_at(i, &x) * cr(h_x);
        h += op_at(i, &y) * cr(h_y);
    }
    // permute site 0 (system) to the last tensor slot: E⊗S ordering
    let mut perm = CMat::zeros(dim, dim);
    for idx in 0..dim {
        let bits: Vec<usize> = (0..n_sites).map(|b| (idx >> (n_sites - 1 - b)) & 1).collect();
        let mut out = 0usize;
        for &b in bits.iter().skip(1) {
            out = (out << 1) | b;
        }
        out = (out << 1) | bits[0];
        perm[(out, idx)] = cr(1.0);
    }
    Ok(&perm * h * perm.transpose())
}

/// Finite-memory schedule: step n is the convex mixture
/// q_{n−ℓ}·Λ + (1−q_{n−ℓ})·Λ^(M)-branch with q_k = 1/(1+e^k).
///
/// Λ = exp(−iδH) acting jointly on SE; the Markovian branch is the reset
/// variant of the slower unitary exp(−i·factor·δ·H): X ↦ ε ⊗ tr_E[Λ_fac(X)].
/// The mixture is realized as one Kraus channel with √q-scaled operators.
pub fn finite_memory_schedule(
    ell: usize,
    delta: f64,
    delta_m_factor: f64,
    h: &CMat,
    eps: &CMat,
    d_e: usize,
    d_s: usize,
) -> Result<StepSchedule> {
    if ell < 1 {
        return Err(NmrbError::Invalid("finite_memory_schedule: ell must be ≥ 1".into()));
    }
    if delta <= 0.0 {
        return Err(NmrbError::Invalid("finite_memory_schedule: delta must be > 0".into()));
    }
    let lam_joint = core::hermitian_expm(h, delta)?;
    let lam_slow = core::hermitian_expm(h, delta_m_factor * delta)?;
    let markov_branch = reset_after(&KrausChannel::from_unitary(lam_slow)?, eps, d_e, d_s)?;
    let ell_i = ell as i64;
    Ok(Arc::new(move |n: usize| {
        let k = n as i64 - ell_i;
        let q = 1.0 / (1.0 + (k as f64).exp());
        let mut kraus = vec![&lam_joint * cr(q.sqrt())];
        let w = cr((1.0 - q).sqrt());
        for op in &markov_branch.kraus {
            kraus.push(op * w);
        }
        StepNoise::Joint(KrausChannel {
            kraus,
            dim: d_e * d_s,
            tp_flag: TpFlag::TracePreserving,
        })
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DephasingMode {
    /// Average the per-step rate first: F_m = P^m with P = E[p(δ)].
    Markovian,
    /// DC-correlated noise: F_m = E[p(δ)^m].
    Dc,
}

/// Closed form of the Markovian-mode average rate E[(4cos²δ−1)/3] under
/// δ ~ N(0, σ²).
pub fn dephasing_rate_closed_form(sigma: f64) -> f64 {
    (1.0 + 2.0 * (-2.0 * sigma * sigma).exp()) / 3.0
}

fn dephasing_quadrature(sigma: f64, m: u32, nodes: usize) -> f64 {
    // E[g(δ)] with δ ~ N(0,σ²): substitute δ = √2 σ t against weight e^{-t²}.
    let (ts, ws) = gauss_hermite(nodes);
    let norm = std::f64::consts::PI.sqrt();
    let mut acc = 0.0;
    for (t, w) in ts.iter().zip(&ws) {
        let delta = std::f64::consts::SQRT_2 * sigma * t;
        let p = (4.0 * delta.cos().powi(2) - 1.0) / 3.0;
        acc += w * p.powi(m as i32);
    }
    acc / norm
}

/// Classically-correlated dephasing ASF (Appendix-E style model).
/// Returns the curve values for m = 1..m_max.
pub fn classical_dephasing_asf(sigma: f64, m_max: usize, mode: DephasingMode) -> Result<Vec<f64>> {
    if sigma <= 0.0 {
        return Err(NmrbError::Invalid("classical_dephasing_asf: sigma must be > 0".into()));
    }
    let nodes = 64;
    let converged = |a: f64, b: f64| (a - b).abs() <= 1e-10;
    match mode {
        DephasingMode::Markovian => {
            let p1 = dephasing_quadrature(sigma, 1, nodes);
            let p2 = dephasing_quadrature(sigma, 1, nodes * 2);
            if !converged(p1, p2) {
                return Err(NmrbError::Numeric(
                    "dephasing quadrature did not converge under node doubling".into(),
                ));
            }
            Ok((1..=m_max).map(|m| p2.powi(m as i32)).collect())
        }
        DephasingMode::Dc => (1..=m_max as u32)
            .map(|m| {
                let a = dephasing_quadrature(sigma, m, nodes);
                let b = dephasing_quadrature(sigma, m, nodes * 2);
                if !converged(a, b) {
                    Err(NmrbError::Numeric(
                        "dephasing quadrature did not converge under node doubling".into(),
                    ))
                } else {
                    Ok(b)
                }
            })
            .collect(),
    }
}

/// Markovian-mode average rate at the given σ, via quadrature.
pub fn dephasing_markovian_rate(sigma: f64) -> Result<f64> {
    let a = dephasing_quadrature(sigma, 1, 64);
    let b = dephasing_quadrature(sigma, 1, 128);
    if (a - b).abs() > 1e-10 {
        return Err(NmrbError::Numeric("dephasing quadrature did not converge".into()));
    }
    Ok(b)
}

/// Shallow-pocket ASF: (γ/π) ∫ Π_n p_{τ_n}(x) / (x²+γ²) dx with
/// p_τ(x) = (4cos²(τx)−1)/3. Returns (value, p_in_range) where the flag
/// reports whether every factor stayed inside [0, 1] over the Cauchy
/// weight's effective support.
///
/// Each factor is the finite cosine sum (1 + 2cos(2τx))/3, so the product
/// expands into frequencies ω = Σ ±2τ_n and the Cauchy average is exact:
/// E[cos(ωx)] = e^{−γ|ω|}. A 512-node x = γ·tanθ Gauss–Legendre evaluation
/// cross-checks the result; the endpoint oscillation of that integrand
/// limits its own accuracy to ~1e-4, so the check tolerance is loose.
pub fn shallow_pocket_asf(gamma: f64, taus: &[f64], m: usize) -> Result<(f64, bool)> {
    if gamma <= 0.0 {
        return Err(NmrbError::Invalid("shallow_pocket_asf: gamma must be > 0".into()));
    }
    if taus.len() < m {
        return Err(NmrbError::Invalid("shallow_pocket_asf: need τ_n for every step".into()));
    }
    // frequency-domain expansion: (freq, coefficient) pairs, merged within
    // a relative tolerance so equal τ runs stay at 2n+1 terms
    let mut terms: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for &tau in taus.iter().take(m) {
        let mut next: Vec<(f64, f64)> = Vec::with_capacity(terms.len() * 3);
        for &(f, c) in &terms {
            next.push((f, c / 3.0));
            next.push((f + 2.0 * tau, c / 3.0));
            next.push((f - 2.0 * tau, c / 3.0));
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(next.len());
        for (f, c) in next {
            match merged.last_mut() {
                Some(last) if (f - last.0).abs() <= 1e-9 * (1.0 + f.abs()) => last.1 += c,
                _ => merged.push((f, c)),
            }
        }
        if merged.len() > 200_000 {
            return Err(NmrbError::Numeric(
                "shallow_pocket_asf: frequency expansion too large (too many distinct τ)".into(),
            ));
        }
        terms = merged;
    }
    let value: f64 = terms
        .iter()
        .map(|&(f, c)| c * (-gamma * f.abs()).exp())
        .sum();
    // cross-check + range flag on the tan-substitution quadrature grid
    let (ts, ws) = gauss_legendre(512);
    let mut acc = 0.0;
    let mut in_range = true;
    for (t, w) in ts.iter().zip(&ws) {
        let theta = t * std::f64::consts::FRAC_PI_2;
        let x = gamma * theta.tan();
        let mut prod = 1.0;
        for &tau in taus.iter().take(m) {
            let p = (4.0 * (tau * x).cos().powi(2) - 1.0) / 3.0;
            // range check over the weight's effective support (99.9% of the
            // Cauchy mass), not the measure-zero far tail
            if t.abs() <= 0.999 && !(-1e-12..=1.0 + 1e-12).contains(&p) {
                in_range = false;
            }
            prod *= p;
        }
        acc += w * std::f64::consts::FRAC_PI_2 * prod / std::f64::consts::PI;
    }
    if (acc - value).abs() > 2e-3 {
        return Err(NmrbError::Numeric(format!(
            "shallow_pocket_asf: quadrature cross-check {acc} disagrees with exact value {value}"
        )));
    }
    Ok((value, in_range))
}

/// State-preparation and measurement error description.
#[derive(Clone, Debug, Default)]
pub struct SpamSpec {
    /// Optional preparation channel, acting on SE (dim d_e·d_s) or on S alone.
    pub prep: Option<KrausChannel>,
    /// Optional measurement rotation angle Δ₂: 𝓜 ↦ R†𝓜R with R = exp(−iΔ₂Y).
    pub meas_rotation: Option<f64>,
}

/// Inject SPAM errors: rho0 ↦ prep(rho0), povm ↦ R†𝓜R.
pub fn apply_spam(process: &NoiseProcess, spam: &SpamSpec) -> Result<NoiseProcess> {
    let mut rho = process.rho0.matrix.clone();
    if let Some(prep) = &spam.prep {
        let prep_se = if prep.dim == process.d_s {
            embed_system(prep, process.d_e)?
        } else if prep.dim == process.d_e * process.d_s {
            prep.clone()
        } else {
            return Err(NmrbError::Dimension("spam prep channel dim matches neither S nor SE".into()));
        };
        rho = prep_se.apply(&rho)?;
    }
    let mut povm = process.povm.clone();
    if let Some(delta2) = spam.meas_rotation {
        let r = core::hermitian_expm(&pauli_y(), delta2)?;
        povm = r.adjoint() * povm * r;
    }
    NoiseProcess::new(
        DensityOperator::new(rho, process.d_e, process.d_s)?,
        povm,
        process.schedule.clone(),
        format!("{}+spam", process.model_id),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{approx_eq, c, proj};

    #[test]
    fn two_spin_matrix_entries() {
        let h = two_spin_hamiltonian(1.7, 1.47, -1.05);
        assert!(core::is_hermitian(&h, 1e-14));
        assert!((h[(0, 1)] - c(1.47, 1.05)).norm() < 1e-14);
        assert!((h[(0, 3)] - cr(1.7)).norm() < 1e-14);
        assert!((h[(1, 0)] - c(1.47, -1.05)).norm() < 1e-14);
        for i in 0..4 {
            assert!(h[(i, i)].norm() < 1e-14);
        }
        let zero = two_spin_hamiltonian(0.0, 0.0, 0.0);
        assert!(core::max_abs(&zero) < 1e-15);
        let xx = two_spin_hamiltonian(1.0, 0.0, 0.0);
        for (i, j) in [(0, 3), (1, 2), (2, 1), (3, 0)] {
            assert!((xx[(i, j)] - cr(1.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn xx_spin_matrix_entries() {
        let h = xx_spin_hamiltonian(1.2, -2.7);
        assert!((h[(0, 3)] - cr(3.9)).norm() < 1e-14);
        assert!((h[(1, 2)] - cr(-1.5)).norm() < 1e-14);
        let equal = xx_spin_hamiltonian(1.0, 1.0);
        assert!(equal[(0, 3)].norm() < 1e-14);
        assert!((equal[(1, 2)] - cr(2.0)).norm() < 1e-14);
    }

    #[test]
    fn ising_chain_reduces_to_two_spin() {
        // closed 2-site chain doubles the J/2 coupling: equals the two-spin H
        let a = ising_chain_hamiltonian(2, 1.7, 1.47, -1.05).unwrap();
        // two_spin is already in E⊗S-compatible ordering for 2 qubits since the
        // Hamiltonian is symmetric under swapping the sites
        let b = two_spin_hamiltonian(1.7, 1.47, -1.05);
        assert!(approx_eq(&a, &b, 1e-12));
    }

    #[test]
    fn finite_memory_schedule_limits() {
        let h = two_spin_hamiltonian(1.7, 1.47, -1.05);
        let eps = proj(2, 0);
        let sched = finite_memory_schedule(9, 0.039, 2.5, &h, &eps, 2, 2).unwrap();
        // n = ℓ: q = 0.5 exactly — joint branch weight √0.5
        if let StepNoise::Joint(ch) = sched(9) {
            let lam = core::hermitian_expm(&h, 0.039).unwrap();
            let expect = &lam * cr(0.5_f64.sqrt());
            assert!(approx_eq(&ch.kraus[0], &expect, 1e-12));
            ch.validate().unwrap();
        } else {
            panic!("expected joint step");
        }
        // n ≪ ℓ: Markovian weight < 1e-4
        if let StepNoise::Joint(ch) = sched(1) {
            let w: f64 = ch.kraus[1..]
                .iter()
                .map(|k| k.iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum();
            // Σ tr(k†k) over the reset branch is 4(1−q) ≈ 1.35e-3 at k=−8
            assert!(w < 2e-3);
        }
        // n ≫ ℓ: action equals the reset branch
        let far = sched(9 + 12).to_joint(2, 2).unwrap();
        let lam_slow = core::hermitian_expm(&h, 2.5 * 0.039).unwrap();
        let reset =
            reset_after(&KrausChannel::from_unitary(lam_slow).unwrap(), &eps, 2, 2).unwrap();
        let mut rng = crate::rng::SeededRng::new(5).root();
        for _ in 0..10 {
            let g = core::haar_random_unitary(4, &mut rng);
            let x = &g * proj(4, 0) * g.adjoint();
            assert!(approx_eq(&far.apply(&x).unwrap(), &reset.apply(&x).unwrap(), 1e-4));
        }
    }

    #[test]
    fn finite_memory_steps_are_tp() {
        let h = two_spin_hamiltonian(1.7, 1.47, -1.05);
        let sched = finite_memory_schedule(9, 0.039, 2.5, &h, &proj(2, 0), 2, 2).unwrap();
        for n in [1usize, 5, 9, 13, 30] {
            sched(n).to_joint(2, 2).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn dephasing_markovian_rate_matches_closed_form() {
        let sigma = 0.015;
        let p = dephasing_markovian_rate(sigma).unwrap();
        assert!((p - dephasing_rate_closed_form(sigma)).abs() < 1e-10);
        assert!((p - 0.9997).abs() < 5e-5);
    }

    #[test]
    fn dephasing_markovian_curve_is_exactly_exponential() {
        let curve = classical_dephasing_asf(0.015, 20, DephasingMode::Markovian).unwrap();
        for w in curve.windows(3) {
            let second_diff = (w[2].ln() - w[1].ln()) - (w[1].ln() - w[0].ln());
            assert!(second_diff.abs() < 1e-12);
        }
    }

    #[test]
    fn dephasing_dc_dominates_markovian() {
        // Jensen: E[p^m] ≥ (E[p])^m for p ∈ [0,1]
        let mark = classical_dephasing_asf(0.015, 30, DephasingMode::Markovian).unwrap();
        let dc = classical_dephasing_asf(0.015, 30, DephasingMode::Dc).unwrap();
        for (a, b) in dc.iter().zip(&mark) {
            assert!(a + 1e-12 >= *b);
        }
        // m=1 identical
        assert!((dc[0] - mark[0]).abs() < 1e-12);
    }

    #[test]
    fn shallow_pocket_trivial_and_convergent() {
        let taus = vec![0.0; 5];
        let (v, flag) = shallow_pocket_asf(0.05, &taus, 5).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        assert!(flag);
        let taus = vec![0.02; 10];
        let (v, flag) = shallow_pocket_asf(0.05, &taus, 10).unwrap();
        assert!(v > 0.9 && v <= 1.0 + 1e-9);
        assert!(flag);
    }

    #[test]
    fn shallow_pocket_small_tau_expansion() {
        // m = 1, small τ: over a window where τx ≪ 1 the true integrand and
        // its series expansion agree under the same truncated quadrature;
        // the exact value also matches the closed form (1 + 2e^{−2τγ})/3
        let gamma = 0.05;
        let tau = 0.01;
        let (v, flag) = shallow_pocket_asf(gamma, &[tau], 1).unwrap();
        assert!(flag);
        let closed = (1.0 + 2.0 * (-2.0 * tau * gamma).exp()) / 3.0;
        assert!((v - closed).abs() < 1e-14);
        let theta0 = (10.0_f64 / gamma).atan(); // x ≤ 10, so τx ≤ 0.1
        let (ts, ws) = gauss_legendre(512);
        let (mut truncated, mut series) = (0.0, 0.0);
        for (t, w) in ts.iter().zip(&ws) {
            let theta = t * theta0;
            let x = gamma * theta.tan();
            let tx = tau * x;
            let p_true = (4.0 * tx.cos().powi(2) - 1.0) / 3.0;
            let p_ser =
                1.0 - 4.0 * tx * tx / 3.0 + 4.0 * tx.powi(4) / 9.0 - 8.0 * tx.powi(6) / 135.0;
            truncated += w * theta0 * p_true / std::f64::consts::PI;
            series += w * theta0 * p_ser / std::f64::consts::PI;
        }
        assert!((truncated - series).abs() < 1e-6);
        // the truncation discards only ~0.3% of the Cauchy mass
        assert!((truncated - v).abs() < 1e-2);
    }

    #[test]
    fn spam_empty_is_identity() {
        let rho = DensityOperator::ground(2, 2);
        let proc = NoiseProcess::time_independent(
            rho,
            proj(2, 0),
            StepNoise::Joint(KrausChannel::identity(4)),
            "test",
        )
        .unwrap();
        let out = apply_spam(&proc, &SpamSpec::default()).unwrap();
        assert!(approx_eq(&out.rho0.matrix, &proc.rho0.matrix, 0.0));
        assert!(approx_eq(&out.povm, &proc.povm, 0.0));
    }

    #[test]
    fn spam_system_only_prep_keeps_product_form() {
        let rho = DensityOperator::ground(2, 2);
        let proc = NoiseProcess::time_independent(
            rho,
            proj(2, 0),
            StepNoise::Joint(KrausChannel::identity(4)),
            "test",
        )
        .unwrap();
        let gamma = 0.3;
        let rot = core::hermitian_expm(&pauli_x(), gamma).unwrap();
        let spam = SpamSpec {
            prep: Some(KrausChannel::from_unitary(rot).unwrap()),
            meas_rotation: Some(0.09321),
        };
        let out = apply_spam(&proc, &spam).unwrap();
        // product state stays product: rho = rho_E ⊗ rho_S exactly
        let re = out.rho0.reduced_env().unwrap();
        let rs = out.rho0.reduced_sys().unwrap();
        assert!(approx_eq(&out.rho0.matrix, &kron(&re, &rs), 1e-12));
        // rotated POVM still a valid effect
        let (vals, _) = core::hermitian_eig(&out.povm).unwrap();
        assert!(vals.iter().all(|&w| (-1e-10..=1.0 + 1e-10).contains(&w)));
    }
}
