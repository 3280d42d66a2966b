//! Density operators on E⊗S with an explicit dimension split.

use serde::{Deserialize, Serialize};

use crate::core::{self, tol, CMat, Subsystem};
use crate::error::{NmrbError, Result};

#[derive(Clone, Debug)]
pub struct DensityOperator {
    pub matrix: CMat,
    pub d_e: usize,
    pub d_s: usize,
}

impl DensityOperator {
    pub fn new(matrix: CMat, d_e: usize, d_s: usize) -> Result<Self> {
        let rho = DensityOperator { matrix, d_e, d_s };
        rho.validate()?;
        Ok(rho)
    }

    /// |0...0><0...0| on E⊗S.
    pub fn ground(d_e: usize, d_s: usize) -> Self {
        DensityOperator {
            matrix: core::proj(d_e * d_s, 0),
            d_e,
            d_s,
        }
    }

    pub fn dim(&self) -> usize {
        self.d_e * self.d_s
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.matrix.nrows() != d || self.matrix.ncols() != d {
            return Err(NmrbError::Dimension(format!(
                "density operator is {}x{}, expected {d}x{d}",
                self.matrix.nrows(),
                self.matrix.ncols()
            )));
        }
        if !core::is_hermitian(&self.matrix, tol::HERMITIAN) {
            return Err(NmrbError::Invalid("density operator not Hermitian within 1e-10".into()));
        }
        let tr = core::trace(&self.matrix);
        if (tr.re - 1.0).abs() > tol::TRACE || tr.im.abs() > tol::TRACE {
            return Err(NmrbError::Invalid(format!(
                "density operator trace {tr} differs from 1 beyond 1e-10"
            )));
        }
        let (vals, _) = core::hermitian_eig(&self.matrix)?;
        if vals.iter().any(|&w| w < tol::PSD_EIG) {
            return Err(NmrbError::Invalid(format!(
                "density operator min eigenvalue {:.3e} below -1e-10",
                vals.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(())
    }

    pub fn reduced_env(&self) -> Result<CMat> {
        core::partial_trace(&self.matrix, self.d_e, self.d_s, Subsystem::Env)
    }

    pub fn reduced_sys(&self) -> Result<CMat> {
        core::partial_trace(&self.matrix, self.d_e, self.d_s, Subsystem::Sys)
    }
}

/// Serialization helper: complex matrix as rows of [re, im] pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson(pub Vec<Vec<[f64; 2]>>);

impl MatrixJson {
    pub fn from_mat(m: &CMat) -> Self {
        MatrixJson(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }

    pub fn to_mat(&self) -> Result<CMat> {
        let rows = self.0.len();
        if rows == 0 {
            return Err(NmrbError::Invalid("empty matrix".into()));
        }
        let cols = self.0[0].len();
        if self.0.iter().any(|r| r.len() != cols) {
            return Err(NmrbError::Invalid("ragged matrix rows".into()));
        }
        let mut m = CMat::zeros(rows, cols);
        for (i, row) in self.0.iter().enumerate() {
            for (j, &[re, im]) in row.iter().enumerate() {
                m[(i, j)] = core::c(re, im);
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{cr, identity};

    #[test]
    fn ground_state_is_valid() {
        let rho = DensityOperator::ground(2, 2);
        rho.validate().unwrap();
        assert_eq!(rho.dim(), 4);
    }

    #[test]
    fn rejects_non_unit_trace() {
        let m = identity(4) * cr(0.5);
        assert!(DensityOperator::new(m, 2, 2).is_err());
    }

    #[test]
    fn matrix_json_round_trip() {
        let m = crate::core::pauli_y();
        let j = MatrixJson::from_mat(&m);
        let back = j.to_mat().unwrap();
        assert!(crate::core::approx_eq(&m, &back, 0.0));
    }
}
