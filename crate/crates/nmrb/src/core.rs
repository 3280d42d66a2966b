//! Dense complex linear algebra and sampling primitives for small (≤ 64×64)
//! operators, plus the global E⊗S index convention.
//!
//! Everything in this crate uses environment-first ordering: a joint index
//! on E⊗S is `e * d_s + s`. All partial traces and embeddings below assume it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{NmrbError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Named tolerance constants, referenced by tests and validators alike.
pub mod tol {
    pub const HERMITIAN: f64 = 1e-10;
    pub const TRACE: f64 = 1e-10;
    pub const PSD_EIG: f64 = -1e-10;
    pub const UNITARY: f64 = 1e-10;
    pub const TP: f64 = 1e-10;
    pub const ORACLE: f64 = 1e-10;
    pub const MARKOV_REDUCTION: f64 = 1e-11;
    pub const ELEMENTWISE: f64 = 1e-12;
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn zeros(r: usize, cols: usize) -> CMat {
    CMat::zeros(r, cols)
}

/// |i><j| on a d-dimensional space.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(d, d);
    m[(i, j)] = C_ONE;
    m
}

/// Projector |i><i|.
pub fn proj(d: usize, i: usize) -> CMat {
    matrix_unit(d, i, i)
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[C_ZERO, C_ONE, C_ONE, C_ZERO])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[C_ZERO, c(0.0, -1.0), c(0.0, 1.0), C_ZERO])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[C_ONE, C_ZERO, C_ZERO, cr(-1.0)])
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn trace(a: &CMat) -> Complex64 {
    let mut t = C_ZERO;
    for i in 0..a.nrows().min(a.ncols()) {
        t += a[(i, i)];
    }
    t
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn approx_eq(a: &CMat, b: &CMat, tolerance: f64) -> bool {
    a.shape() == b.shape() && max_abs_diff(a, b) <= tolerance
}

pub fn is_hermitian(a: &CMat, tolerance: f64) -> bool {
    a.is_square() && max_abs_diff(a, &a.adjoint()) <= tolerance
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    Env,
    Sys,
}

/// Partial trace of an operator on E⊗S, keeping the requested factor.
pub fn partial_trace(x: &CMat, d_e: usize, d_s: usize, keep: Subsystem) -> Result<CMat> {
    let d = d_e * d_s;
    if x.nrows() != d || x.ncols() != d {
        return Err(NmrbError::Dimension(format!(
            "partial_trace: operator is {}x{}, expected {}x{} (d_e={}, d_s={})",
            x.nrows(),
            x.ncols(),
            d,
            d,
            d_e,
            d_s
        )));
    }
    match keep {
        Subsystem::Sys => {
            let mut out = CMat::zeros(d_s, d_s);
            for s in 0..d_s {
                for t in 0..d_s {
                    let mut acc = C_ZERO;
                    for e in 0..d_e {
                        acc += x[(e * d_s + s, e * d_s + t)];
                    }
                    out[(s, t)] = acc;
                }
            }
            Ok(out)
        }
        Subsystem::Env => {
            let mut out = CMat::zeros(d_e, d_e);
            for e in 0..d_e {
                for f in 0..d_e {
                    let mut acc = C_ZERO;
                    for s in 0..d_s {
                        acc += x[(e * d_s + s, f * d_s + s)];
                    }
                    out[(e, f)] = acc;
                }
            }
            Ok(out)
        }
    }
}

/// Eigendecomposition of a Hermitian matrix: (eigenvalues ascending, unitary of columns).
pub fn hermitian_eig(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    if !is_hermitian(h, tol::HERMITIAN) {
        return Err(NmrbError::Numeric(
            "hermitian_eig: input is not Hermitian within 1e-10".into(),
        ));
    }
    // Symmetrize exactly so the decomposition sees a clean Hermitian input.
    let hs = (h + h.adjoint()) * cr(0.5);
    let eig = hs.symmetric_eigen();
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    Ok((vals, eig.eigenvectors))
}

/// exp(-i * scale * h) for Hermitian h, via eigendecomposition.
pub fn hermitian_expm(h: &CMat, scale: f64) -> Result<CMat> {
    let (vals, vecs) = hermitian_eig(h)?;
    let d = h.nrows();
    let mut diag = CMat::zeros(d, d);
    for (i, w) in vals.iter().enumerate() {
        let phase = -scale * w;
        diag[(i, i)] = c(phase.cos(), phase.sin());
    }
    let u = &vecs * diag * vecs.adjoint();
    let err = max_abs_diff(&(u.adjoint() * &u), &identity(d));
    if err > tol::UNITARY {
        return Err(NmrbError::Numeric(format!(
            "hermitian_expm: result deviates from unitarity by {err:.2e}"
        )));
    }
    Ok(u)
}

/// Haar-random unitary via a complex Ginibre matrix and phase-corrected QR.
pub fn haar_random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let mut g = CMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[(i, j)] = c(re, im);
        }
    }
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    // Fix the residual gauge freedom: multiply each column by the phase of the
    // corresponding R diagonal, otherwise the distribution is not Haar.
    let mut phases = CMat::zeros(d, d);
    for i in 0..d {
        let rii = r[(i, i)];
        phases[(i, i)] = if rii.norm() > 0.0 { rii / rii.norm() } else { C_ONE };
    }
    q * phases
}

/// Gauss–Hermite nodes/weights (weight e^{-t^2}) via Golub–Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jac[(k - 1, k)] = off;
        jac[(k, k - 1)] = off;
    }
    let eig = jac.symmetric_eigen();
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss–Legendre nodes/weights on [-1, 1] via Golub–Welsch.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let off = kf / ((2.0 * kf - 1.0) * (2.0 * kf + 1.0)).sqrt();
        jac[(k - 1, k)] = off;
        jac[(k, k - 1)] = off;
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], 2.0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn kron_identities() {
        let i2 = identity(2);
        assert!(approx_eq(&kron(&i2, &i2), &identity(4), 0.0));
        let zi = kron(&pauli_z(), &i2);
        let expect = CMat::from_diagonal(&CVec::from_vec(vec![
            cr(1.0),
            cr(1.0),
            cr(-1.0),
            cr(-1.0),
        ]));
        assert!(approx_eq(&zi, &expect, 0.0));
    }

    #[test]
    fn kron_matches_elementwise_definition() {
        let a = pauli_x();
        let b = pauli_z();
        let k = kron(&a, &b);
        for ia in 0..2 {
            for ja in 0..2 {
                for ib in 0..2 {
                    for jb in 0..2 {
                        let got = k[(ia * 2 + ib, ja * 2 + jb)];
                        let want = a[(ia, ja)] * b[(ib, jb)];
                        assert!((got - want).norm() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_product_state() {
        let rho_e = CMat::from_row_slice(2, 2, &[cr(0.7), c(0.1, 0.2), c(0.1, -0.2), cr(0.3)]);
        let rho_s = CMat::from_row_slice(2, 2, &[cr(0.6), c(0.0, 0.1), c(0.0, -0.1), cr(0.4)]);
        let joint = kron(&rho_e, &rho_s);
        let s = partial_trace(&joint, 2, 2, Subsystem::Sys).unwrap();
        let e = partial_trace(&joint, 2, 2, Subsystem::Env).unwrap();
        assert!(approx_eq(&s, &rho_s, 1e-14));
        assert!(approx_eq(&e, &rho_e, 1e-14));
    }

    #[test]
    fn partial_trace_bell_state() {
        let mut bell = CMat::zeros(4, 4);
        // (|00> + |11>)/sqrt(2) projector
        for (i, j) in [(0usize, 0usize), (0, 3), (3, 0), (3, 3)] {
            bell[(i, j)] = cr(0.5);
        }
        let s = partial_trace(&bell, 2, 2, Subsystem::Sys).unwrap();
        assert!(approx_eq(&s, &(identity(2) * cr(0.5)), 1e-14));
    }

    #[test]
    fn partial_trace_matches_index_sum() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let g = haar_random_unitary(4, &mut rng);
        let h = &g + g.adjoint();
        let s = partial_trace(&h, 2, 2, Subsystem::Sys).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let mut acc = C_ZERO;
                for e in 0..2 {
                    acc += h[(e * 2 + a, e * 2 + b)];
                }
                assert!((s[(a, b)] - acc).norm() < 1e-12);
            }
        }
        assert!((trace(&s) - trace(&h)).norm() < 1e-12);
    }

    #[test]
    fn expm_diagonal_case() {
        let u = hermitian_expm(&pauli_z(), std::f64::consts::PI).unwrap();
        assert!(approx_eq(&u, &(identity(2) * cr(-1.0)), 1e-12));
    }

    #[test]
    fn expm_matches_power_series() {
        let h = pauli_x() * cr(0.7) + pauli_y() * cr(0.3);
        let s = 0.05;
        let u = hermitian_expm(&h, s).unwrap();
        let mut series = identity(2);
        let mut term = identity(2);
        let a = &h * c(0.0, -s);
        for k in 1..30 {
            term = &term * &a * cr(1.0 / k as f64);
            series += &term;
        }
        assert!(approx_eq(&u, &series, 1e-9));
    }

    #[test]
    fn expm_additivity() {
        let h = pauli_x() * cr(1.3) + pauli_z() * cr(-0.4);
        let a = hermitian_expm(&h, 0.3).unwrap();
        let b = hermitian_expm(&h, 0.45).unwrap();
        let ab = hermitian_expm(&h, 0.75).unwrap();
        assert!(approx_eq(&(a * b), &ab, 1e-9));
    }

    #[test]
    fn haar_unitarity_and_first_moment() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let mut mean = CMat::zeros(2, 2);
        let n = 20000;
        for _ in 0..n {
            let u = haar_random_unitary(2, &mut rng);
            assert!(max_abs_diff(&(u.adjoint() * &u), &identity(2)) < tol::UNITARY);
            mean += &u * proj(2, 0) * u.adjoint();
        }
        mean *= cr(1.0 / n as f64);
        assert!(approx_eq(&mean, &(identity(2) * cr(0.5)), 0.01));
    }

    #[test]
    fn gauss_hermite_integrates_polynomials() {
        let (x, w) = gauss_hermite(64);
        let m0: f64 = w.iter().sum();
        assert!((m0 - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let m2: f64 = x.iter().zip(&w).map(|(t, w)| w * t * t).sum();
        assert!((m2 - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-11);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(32);
        let m0: f64 = w.iter().sum();
        assert!((m0 - 2.0).abs() < 1e-12);
        let m2: f64 = x.iter().zip(&w).map(|(t, w)| w * t * t).sum();
        assert!((m2 - 2.0 / 3.0).abs() < 1e-12);
    }
}
