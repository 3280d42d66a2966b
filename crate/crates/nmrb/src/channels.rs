//! Kraus-form CP maps, the environment-side superoperators ($_Λ, Θ_Λ),
//! Markovianization, noise strength, and the exact Clifford twirl.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clifford::clifford_24;
use crate::core::{
    self, cr, identity, kron, matrix_unit, partial_trace, tol, CMat, Subsystem, C_ZERO,
};
use crate::density::MatrixJson;
use crate::error::{NmrbError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TpFlag {
    TracePreserving,
    TraceNonIncreasing,
    Unchecked,
}

#[derive(Clone, Debug)]
pub struct KrausChannel {
    pub kraus: Vec<CMat>,
    pub dim: usize,
    pub tp_flag: TpFlag,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMat>, tp_flag: TpFlag) -> Result<Self> {
        if kraus.is_empty() {
            return Err(NmrbError::Invalid("channel needs at least one Kraus operator".into()));
        }
        let dim = kraus[0].nrows();
        if kraus.iter().any(|k| k.nrows() != dim || k.ncols() != dim) {
            return Err(NmrbError::Dimension(
                "all Kraus operators must be square with equal dimension".into(),
            ));
        }
        let ch = KrausChannel { kraus, dim, tp_flag };
        ch.validate()?;
        Ok(ch)
    }

    pub fn identity(dim: usize) -> Self {
        KrausChannel {
            kraus: vec![identity(dim)],
            dim,
            tp_flag: TpFlag::TracePreserving,
        }
    }

    pub fn from_unitary(u: CMat) -> Result<Self> {
        let dim = u.nrows();
        let err = core::max_abs_diff(&(u.adjoint() * &u), &identity(dim));
        if err > tol::UNITARY {
            return Err(NmrbError::Invalid(format!(
                "from_unitary: input deviates from unitarity by {err:.2e}"
            )));
        }
        KrausChannel::new(vec![u], TpFlag::TracePreserving)
    }

    pub fn validate(&self) -> Result<()> {
        let mut sum = CMat::zeros(self.dim, self.dim);
        for k in &self.kraus {
            sum += k.adjoint() * k;
        }
        match self.tp_flag {
            TpFlag::TracePreserving => {
                let err = core::max_abs_diff(&sum, &identity(self.dim));
                if err > tol::TP {
                    return Err(NmrbError::Invalid(format!(
                        "channel flagged trace-preserving but ‖Σλ†λ−I‖ = {err:.2e}"
                    )));
                }
            }
            TpFlag::TraceNonIncreasing => {
                let (vals, _) = core::hermitian_eig(&sum)?;
                let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max > 1.0 + tol::TP {
                    return Err(NmrbError::Invalid(format!(
                        "channel flagged trace-non-increasing but max eig(Σλ†λ) = {max}"
                    )));
                }
            }
            TpFlag::Unchecked => {}
        }
        Ok(())
    }

    /// Σ_μ λ_μ x λ_μ†
    pub fn apply(&self, x: &CMat) -> Result<CMat> {
        if x.nrows() != self.dim || x.ncols() != self.dim {
            return Err(NmrbError::Dimension(format!(
                "apply_channel: operand is {}x{}, channel dim {}",
                x.nrows(),
                x.ncols(),
                self.dim
            )));
        }
        let mut out = CMat::zeros(self.dim, self.dim);
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        Ok(out)
    }

    /// Row-major transfer matrix: vec(Λ(X)) = T vec(X).
    pub fn transfer(&self) -> CMat {
        let d2 = self.dim * self.dim;
        let mut t = CMat::zeros(d2, d2);
        for k in &self.kraus {
            t += kron(k, &k.map(|z| z.conj()));
        }
        t
    }

    /// Kraus operators recovered from a transfer matrix by reshuffling into the
    /// Choi matrix and eigendecomposing; eigenvalues below 1e-12 are dropped.
    pub fn from_transfer(t: &CMat, dim: usize, tp_flag: TpFlag) -> Result<Self> {
        let d2 = dim * dim;
        if t.nrows() != d2 || t.ncols() != d2 {
            return Err(NmrbError::Dimension("from_transfer: bad shape".into()));
        }
        let mut choi = CMat::zeros(d2, d2);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        choi[(i * dim + j, k * dim + l)] = t[(i * dim + k, j * dim + l)];
                    }
                }
            }
        }
        let choi = (&choi + choi.adjoint()) * cr(0.5);
        let eig = choi.symmetric_eigen();
        let mut kraus = Vec::new();
        for idx in 0..d2 {
            let w = eig.eigenvalues[idx];
            if w > 1e-12 {
                let scale = cr(w.sqrt());
                let mut k = CMat::zeros(dim, dim);
                for i in 0..dim {
                    for j in 0..dim {
                        k[(i, j)] = eig.eigenvectors[(i * dim + j, idx)] * scale;
                    }
                }
                kraus.push(k);
            }
        }
        if kraus.is_empty() {
            kraus.push(CMat::zeros(dim, dim));
        }
        Ok(KrausChannel { kraus, dim, tp_flag })
    }

    /// Composition `self ∘ other` (other acts first).
    pub fn compose(&self, other: &KrausChannel) -> Result<Self> {
        if self.dim != other.dim {
            return Err(NmrbError::Dimension("compose: dimension mismatch".into()));
        }
        let flag = match (self.tp_flag, other.tp_flag) {
            (TpFlag::TracePreserving, TpFlag::TracePreserving) => TpFlag::TracePreserving,
            _ => TpFlag::Unchecked,
        };
        // Direct Kraus products blow up exponentially along a schedule; go
        // through the transfer matrix and re-extract ≤ dim² operators.
        let t = self.transfer() * other.transfer();
        KrausChannel::from_transfer(&t, self.dim, flag)
    }

    /// Choi matrix (row-major double-index convention used by from_transfer).
    pub fn choi(&self) -> CMat {
        let d2 = self.dim * self.dim;
        let mut choi = CMat::zeros(d2, d2);
        for k in &self.kraus {
            let mut v = CMat::zeros(d2, 1);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    v[(i * self.dim + j, 0)] = k[(i, j)];
                }
            }
            choi += &v * v.adjoint();
        }
        choi
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KrausChannelJson {
    pub dim: usize,
    pub kraus: Vec<MatrixJson>,
    pub tp_flag: TpFlag,
}

impl KrausChannelJson {
    pub fn from_channel(ch: &KrausChannel) -> Self {
        KrausChannelJson {
            dim: ch.dim,
            kraus: ch.kraus.iter().map(MatrixJson::from_mat).collect(),
            tp_flag: ch.tp_flag,
        }
    }

    pub fn to_channel(&self) -> Result<KrausChannel> {
        let kraus: Result<Vec<CMat>> = self.kraus.iter().map(|m| m.to_mat()).collect();
        let ch = KrausChannel::new(kraus?, self.tp_flag)?;
        if ch.dim != self.dim {
            return Err(NmrbError::Dimension(format!(
                "channel json declares dim {} but operators are {}x{}",
                self.dim, ch.dim, ch.dim
            )));
        }
        Ok(ch)
    }
}

/// $_Λ(ε) = Σ_μ tr_S(λ_μ) ε tr_S(λ_μ)† for an SE channel.
pub fn dollar_map(ch: &KrausChannel, d_e: usize, d_s: usize, eps: &CMat) -> Result<CMat> {
    check_se(ch, d_e, d_s)?;
    check_env(eps, d_e)?;
    let mut out = CMat::zeros(d_e, d_e);
    for k in &ch.kraus {
        let t = partial_trace(k, d_e, d_s, Subsystem::Env)?;
        out += &t * eps * t.adjoint();
    }
    Ok(out)
}

/// Θ_Λ(ε) = tr_S[Λ(ε ⊗ I/d_S)].
pub fn theta_map(ch: &KrausChannel, d_e: usize, d_s: usize, eps: &CMat) -> Result<CMat> {
    check_se(ch, d_e, d_s)?;
    check_env(eps, d_e)?;
    let embedded = kron(eps, &(identity(d_s) * cr(1.0 / d_s as f64)));
    partial_trace(&ch.apply(&embedded)?, d_e, d_s, Subsystem::Env)
}

fn check_se(ch: &KrausChannel, d_e: usize, d_s: usize) -> Result<()> {
    if ch.dim != d_e * d_s {
        return Err(NmrbError::Dimension(format!(
            "expected SE channel of dim {}, got {}",
            d_e * d_s,
            ch.dim
        )));
    }
    Ok(())
}

fn check_env(eps: &CMat, d_e: usize) -> Result<()> {
    if eps.nrows() != d_e || eps.ncols() != d_e {
        return Err(NmrbError::Dimension(format!(
            "expected E operator of dim {}, got {}x{}",
            d_e,
            eps.nrows(),
            eps.ncols()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvSuperOpKind {
    Dollar,
    Theta,
    DollarMinusTheta,
}

/// An environment-side superoperator distilled from an SE channel.
#[derive(Clone, Debug)]
pub struct EnvSuperOp {
    pub kind: EnvSuperOpKind,
    pub source: KrausChannel,
    pub d_e: usize,
    pub d_s: usize,
}

impl EnvSuperOp {
    pub fn new(kind: EnvSuperOpKind, source: KrausChannel, d_e: usize, d_s: usize) -> Result<Self> {
        check_se(&source, d_e, d_s)?;
        Ok(EnvSuperOp { kind, source, d_e, d_s })
    }

    /// Action on an operator on E alone.
    pub fn apply(&self, eps: &CMat) -> Result<CMat> {
        match self.kind {
            EnvSuperOpKind::Dollar => dollar_map(&self.source, self.d_e, self.d_s, eps),
            EnvSuperOpKind::Theta => theta_map(&self.source, self.d_e, self.d_s, eps),
            EnvSuperOpKind::DollarMinusTheta => {
                let d = dollar_map(&self.source, self.d_e, self.d_s, eps)?;
                let t = theta_map(&self.source, self.d_e, self.d_s, eps)?;
                Ok(d - t)
            }
        }
    }

    /// Action on E⊗S with the S factor spectating.
    pub fn extend(&self, x: &CMat) -> Result<CMat> {
        let d = self.d_e * self.d_s;
        if x.nrows() != d || x.ncols() != d {
            return Err(NmrbError::Dimension("extend_env_superop: bad operand shape".into()));
        }
        match self.kind {
            EnvSuperOpKind::Dollar => {
                let mut out = CMat::zeros(d, d);
                for k in &self.source.kraus {
                    let t = partial_trace(k, self.d_e, self.d_s, Subsystem::Env)?;
                    let ts = kron(&t, &identity(self.d_s));
                    out += &ts * x * ts.adjoint();
                }
                Ok(out)
            }
            EnvSuperOpKind::Theta => self.extend_theta(x),
            EnvSuperOpKind::DollarMinusTheta => {
                let dollar = EnvSuperOp {
                    kind: EnvSuperOpKind::Dollar,
                    source: self.source.clone(),
                    d_e: self.d_e,
                    d_s: self.d_s,
                };
                let theta = EnvSuperOp {
                    kind: EnvSuperOpKind::Theta,
                    source: self.source.clone(),
                    d_e: self.d_e,
                    d_s: self.d_s,
                };
                Ok(dollar.extend(x)? - theta.extend(x)?)
            }
        }
    }

    /// Fresh-slot embedding: insert an S slot in state I/d_S between E and the
    /// spectator S, apply Λ⊗I on (E ⊗ S_fresh), then trace out the fresh slot.
    fn extend_theta(&self, x: &CMat) -> Result<CMat> {
        let (de, ds) = (self.d_e, self.d_s);
        let big = de * ds * ds; // index ((e, f), s) = (e*ds + f)*ds + s
        let mut y = CMat::zeros(big, big);
        let inv_ds = cr(1.0 / ds as f64);
        for e in 0..de {
            for ep in 0..de {
                for s in 0..ds {
                    for sp in 0..ds {
                        let v = x[(e * ds + s, ep * ds + sp)] * inv_ds;
                        if v != C_ZERO {
                            for f in 0..ds {
                                y[((e * ds + f) * ds + s, (ep * ds + f) * ds + sp)] += v;
                            }
                        }
                    }
                }
            }
        }
        let mut z = CMat::zeros(big, big);
        let i_s = identity(ds);
        for k in &self.source.kraus {
            let kk = kron(k, &i_s);
            z += &kk * &y * kk.adjoint();
        }
        // trace out the middle (fresh) slot
        let d = de * ds;
        let mut out = CMat::zeros(d, d);
        for e in 0..de {
            for ep in 0..de {
                for s in 0..ds {
                    for sp in 0..ds {
                        let mut acc = C_ZERO;
                        for f in 0..ds {
                            acc += z[((e * ds + f) * ds + s, (ep * ds + f) * ds + sp)];
                        }
                        out[(e * ds + s, ep * ds + sp)] = acc;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Markovianization Λ^(M)(σ) = tr_E[Λ(ε ⊗ σ)] as a Kraus channel on S.
///
/// ε is eigendecomposed first, so mixed environment states are handled by the
/// same Stinespring contraction ⟨e_i|λ_μ(|ψ_k⟩⊗·) with weight √w_k.
pub fn markovianize(ch: &KrausChannel, eps: &CMat, d_e: usize, d_s: usize) -> Result<KrausChannel> {
    check_se(ch, d_e, d_s)?;
    check_env(eps, d_e)?;
    if !core::is_hermitian(eps, tol::HERMITIAN) {
        return Err(NmrbError::Invalid("markovianize: ε must be Hermitian".into()));
    }
    let tr = core::trace(eps);
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(NmrbError::Invalid("markovianize: ε must have unit trace".into()));
    }
    let (vals, vecs) = core::hermitian_eig(eps)?;
    let mut kraus = Vec::new();
    for (k_idx, &w) in vals.iter().enumerate() {
        if w < tol::PSD_EIG {
            return Err(NmrbError::Invalid("markovianize: ε not positive semidefinite".into()));
        }
        if w <= 1e-12 {
            continue;
        }
        let sw = cr(w.sqrt());
        for lam in &ch.kraus {
            for i in 0..d_e {
                let mut op = CMat::zeros(d_s, d_s);
                for s in 0..d_s {
                    for t in 0..d_s {
                        let mut acc = C_ZERO;
                        for e in 0..d_e {
                            acc += lam[(i * d_s + s, e * d_s + t)] * vecs[(e, k_idx)];
                        }
                        op[(s, t)] = acc * sw;
                    }
                }
                kraus.push(op);
            }
        }
    }
    KrausChannel::new(kraus, ch.tp_flag)
}

/// Environment reset composed after an SE channel: X ↦ ε ⊗ tr_E[Λ(X)].
pub fn reset_after(ch: &KrausChannel, eps: &CMat, d_e: usize, d_s: usize) -> Result<KrausChannel> {
    check_se(ch, d_e, d_s)?;
    check_env(eps, d_e)?;
    let (vals, vecs) = core::hermitian_eig(eps)?;
    let i_s = identity(d_s);
    let mut kraus = Vec::new();
    for (k_idx, &w) in vals.iter().enumerate() {
        if w <= 1e-12 {
            continue;
        }
        let sw = cr(w.sqrt());
        for i in 0..d_e {
            // √w (|ψ_k><e_i| ⊗ I_S)
            let mut outer = CMat::zeros(d_e, d_e);
            for e in 0..d_e {
                outer[(e, i)] = vecs[(e, k_idx)] * sw;
            }
            let r = kron(&outer, &i_s);
            for lam in &ch.kraus {
                kraus.push(&r * lam);
            }
        }
    }
    KrausChannel::new(kraus, ch.tp_flag)
}

/// I_E ⊗ Λ embedding of a system-only channel.
pub fn embed_system(ch: &KrausChannel, d_e: usize) -> Result<KrausChannel> {
    let i_e = identity(d_e);
    let kraus = ch.kraus.iter().map(|k| kron(&i_e, k)).collect();
    KrausChannel::new(kraus, ch.tp_flag)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseStrength {
    pub p: f64,
    pub in_range: bool,
}

/// p = (tr[Λ] − 1)/(d² − 1) with tr[Λ] = Σ_μ |tr λ_μ|², for a system channel.
pub fn noise_strength(ch: &KrausChannel) -> NoiseStrength {
    let d = ch.dim as f64;
    let tr_l: f64 = ch.kraus.iter().map(|k| core::trace(k).norm_sqr()).sum();
    let p = (tr_l - 1.0) / (d * d - 1.0);
    NoiseStrength {
        p,
        in_range: (0.0..=1.0).contains(&p),
    }
}

/// Exact average (1/24) Σ_G G†Λ(G·G†)G fitted to the depolarizing form
/// 𝒟_p(X) = pX + (1−p) tr(X) I/d. Returns (p, max deviation from 𝒟_p).
pub fn clifford_twirl(ch: &KrausChannel) -> Result<(f64, f64)> {
    if ch.dim != 2 {
        return Err(NmrbError::Invalid("clifford_twirl: single-qubit channels only".into()));
    }
    let d = ch.dim;
    let d2 = d * d;
    let t_ch = ch.transfer();
    let mut t_avg = CMat::zeros(d2, d2);
    for g in clifford_24() {
        let tg = kron(g, &g.map(|z| z.conj()));
        let tgd = kron(&g.adjoint(), &g.transpose());
        t_avg += tgd * &t_ch * tg;
    }
    t_avg *= cr(1.0 / 24.0);
    // vec(I) projector part of the depolarizing transfer matrix
    let mut v = CMat::zeros(d2, 1);
    for i in 0..d {
        v[(i * d + i, 0)] = cr(1.0);
    }
    let t0 = (&v * v.adjoint()) * cr(1.0 / d as f64);
    let dir = identity(d2) - &t0;
    let num: Complex64 = dir
        .iter()
        .zip((t_avg.clone() - &t0).iter())
        .map(|(a, b)| a.conj() * b)
        .sum();
    let den: f64 = dir.iter().map(|z| z.norm_sqr()).sum();
    let p = num.re / den;
    let fitted = &dir * cr(p) + &t0;
    let residual = core::max_abs_diff(&t_avg, &fitted);
    Ok((p, residual))
}

/// Elementwise definition of $_Λ used as an independent oracle in tests:
/// $_Λ(ε) = Σ_{s,s'} tr_S-components evaluated by embedding matrix units.
pub fn dollar_map_elementwise(
    ch: &KrausChannel,
    d_e: usize,
    d_s: usize,
    eps: &CMat,
) -> Result<CMat> {
    check_se(ch, d_e, d_s)?;
    check_env(eps, d_e)?;
    // $_Λ(ε) = Σ_{s,s'} <s|_S-slice sums: build from Λ applied to ε⊗|s><s'|
    let mut out = CMat::zeros(d_e, d_e);
    for s in 0..d_s {
        for sp in 0..d_s {
            let embedded = kron(eps, &matrix_unit(d_s, s, sp));
            let mapped = ch.apply(&embedded)?;
            // take the (s, s') S-block trace-style contraction: Σ over the same
            // matrix unit on the output side
            for e in 0..d_e {
                for ep in 0..d_e {
                    out[(e, ep)] += mapped[(e * d_s + s, ep * d_s + sp)];
                }
            }
        }
    }
    Ok(out)
}
