//! Linear-Gaussian signal/observation model
//!
//! ```text
//! dX_t = A_t X_t dt + R₁^{1/2} dW_t
//! dY_t = C_t X_t dt + R₂^{1/2} dV_t
//! ```
//!
//! together with the Riccati drift matrix `S_t = C_tᵀ R₂⁻¹ C_t`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{linspace, MatrixFlow};
use crate::linalg::{norm2, Matrix, SpdMat, SymMat};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct SignalModel<T> {
    r1: usize,
    r2: usize,
    a: MatrixFlow<T>,
    c: MatrixFlow<T>,
    r1_cov: SpdMat<T>,
    r2_cov: SpdMat<T>,
    r2_inv: Matrix<T>,
    r1_sqrt: Matrix<T>,
    r2_sqrt: Matrix<T>,
    r2_inv_sqrt: Matrix<T>,
    time_invariant: bool,
}

/// Model matrices evaluated at one time.
#[derive(Clone, Debug, Serialize)]
pub struct ModelSnapshot<T> {
    pub t: T,
    pub a: Matrix<T>,
    pub c: Matrix<T>,
    pub s: Matrix<T>,
}

/// Uniform bounds of the model flows over a horizon, from a grid scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowBounds<T> {
    pub sup_a_norm: T,
    pub sup_s_norm: T,
    pub inf_s_min_eig: T,
}

impl<T: Real> SignalModel<T> {
    pub fn build(
        r1: usize,
        r2: usize,
        a: MatrixFlow<T>,
        c: MatrixFlow<T>,
        r1_cov: &Matrix<T>,
        r2_cov: &Matrix<T>,
    ) -> Result<Self> {
        if r1 == 0 || r2 == 0 {
            return Err(Error::Dimension(
                "state and observation dimensions must be positive".into(),
            ));
        }
        if a.shape() != (r1, r1) {
            return Err(Error::Dimension(format!(
                "A is {:?}, expected {r1}x{r1}",
                a.shape()
            )));
        }
        if c.shape() != (r2, r1) {
            return Err(Error::Dimension(format!(
                "C is {:?}, expected {r2}x{r1}",
                c.shape()
            )));
        }
        r1_cov.require_shape(r1, r1, "R1")?;
        r2_cov.require_shape(r2, r2, "R2")?;
        let r1_cov = SpdMat::certify_definite(SymMat::new(r1_cov)?, "R1")?;
        let r2_cov = SpdMat::certify_definite(SymMat::new(r2_cov)?, "R2")?;
        let r2_inv = r2_cov.inverse()?;
        let r1_sqrt = r1_cov.sqrt()?;
        let r2_sqrt = r2_cov.sqrt()?;
        let r2_inv_sqrt = r2_cov.inv_sqrt()?;
        let time_invariant = a.is_constant() && c.is_constant();
        Ok(Self {
            r1,
            r2,
            a,
            c,
            r1_cov,
            r2_cov,
            r2_inv,
            r1_sqrt,
            r2_sqrt,
            r2_inv_sqrt,
            time_invariant,
        })
    }

    /// Time-invariant model from constant matrices.
    pub fn time_invariant(
        a: Matrix<T>,
        c: Matrix<T>,
        r1_cov: Matrix<T>,
        r2_cov: Matrix<T>,
    ) -> Result<Self> {
        let (r1, r2) = (a.rows(), c.rows());
        Self::build(
            r1,
            r2,
            MatrixFlow::constant(a),
            MatrixFlow::constant(c),
            &r1_cov,
            &r2_cov,
        )
    }

    /// Scalar model `dX = aX dt + √r₁ dW`, `dY = cX dt + √r₂ dV`.
    pub fn scalar(a: T, c: T, r1_cov: T, r2_cov: T) -> Result<Self> {
        Self::time_invariant(
            Matrix::scalar(a),
            Matrix::scalar(c),
            Matrix::scalar(r1_cov),
            Matrix::scalar(r2_cov),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.r1
    }

    pub fn obs_dim(&self) -> usize {
        self.r2
    }

    pub fn is_time_invariant(&self) -> bool {
        self.time_invariant
    }

    pub fn a_flow(&self) -> &MatrixFlow<T> {
        &self.a
    }

    pub fn c_flow(&self) -> &MatrixFlow<T> {
        &self.c
    }

    pub fn r1_cov(&self) -> &SpdMat<T> {
        &self.r1_cov
    }

    pub fn r2_cov(&self) -> &SpdMat<T> {
        &self.r2_cov
    }

    pub fn r2_inv(&self) -> &Matrix<T> {
        &self.r2_inv
    }

    pub fn r1_sqrt(&self) -> &Matrix<T> {
        &self.r1_sqrt
    }

    pub fn r2_sqrt(&self) -> &Matrix<T> {
        &self.r2_sqrt
    }

    pub fn r2_inv_sqrt(&self) -> &Matrix<T> {
        &self.r2_inv_sqrt
    }

    pub fn a_at(&self, t: T) -> Result<Matrix<T>> {
        self.a.eval(t)
    }

    pub fn c_at(&self, t: T) -> Result<Matrix<T>> {
        self.c.eval(t)
    }

    /// `S_t = C_tᵀ R₂⁻¹ C_t`.
    pub fn s_at(&self, t: T) -> Result<Matrix<T>> {
        let c = self.c.eval(t)?;
        Ok(self.s_from_c(&c))
    }

    fn s_from_c(&self, c: &Matrix<T>) -> Matrix<T> {
        c.transpose().matmul(&self.r2_inv).matmul(c).sym_part()
    }

    pub fn snapshot(&self, t: T) -> Result<ModelSnapshot<T>> {
        if !(t >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "snapshot time must be non-negative, got {t}"
            )));
        }
        let a = self.a.eval(t)?;
        let c = self.c.eval(t)?;
        let s = self.s_from_c(&c);
        Ok(ModelSnapshot { t, a, c, s })
    }

    /// Grid scan of `sup‖A_t‖₂`, `sup‖S_t‖₂` and `inf λ_min(S_t)` on `[0, horizon]`.
    pub fn flow_bounds(&self, horizon: T, grid_n: usize) -> Result<FlowBounds<T>> {
        let times = if self.time_invariant {
            vec![T::zero()]
        } else {
            linspace(T::zero(), horizon, grid_n.max(2))
        };
        let mut b = FlowBounds {
            sup_a_norm: T::zero(),
            sup_s_norm: T::zero(),
            inf_s_min_eig: T::infinity(),
        };
        for t in times {
            let snap = self.snapshot(t)?;
            b.sup_a_norm = b.sup_a_norm.max(norm2(&snap.a));
            let s = SymMat::new(&snap.s)?.eigen()?;
            b.sup_s_norm = b.sup_s_norm.max(s.max().abs().max(s.min().abs()));
            b.inf_s_min_eig = b.inf_s_min_eig.min(s.min());
        }
        if !b.sup_a_norm.is_finite() || !b.sup_s_norm.is_finite() {
            return Err(Error::NonFinite(
                "model flows are unbounded on the horizon".into(),
            ));
        }
        Ok(b)
    }

    /// The same model with `R₁` replaced; used for parameter-monotonicity studies.
    pub fn with_r1(&self, r1_cov: &Matrix<T>) -> Result<Self> {
        Self::build(
            self.r1,
            self.r2,
            self.a.clone(),
            self.c.clone(),
            r1_cov,
            self.r2_cov.as_matrix(),
        )
    }

    /// The same model with `R₂` replaced.
    pub fn with_r2(&self, r2_cov: &Matrix<T>) -> Result<Self> {
        Self::build(
            self.r1,
            self.r2,
            self.a.clone(),
            self.c.clone(),
            self.r1_cov.as_matrix(),
            r2_cov,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_m0_has_unit_s() {
        let m = SignalModel::scalar(0.0, 1.0, 1.0, 1.0).unwrap();
        for t in [0.0, 1.0, 7.5] {
            assert_eq!(m.s_at(t).unwrap()[(0, 0)], 1.0);
        }
        let snap = m.snapshot(3.0).unwrap();
        assert_eq!(
            (snap.a[(0, 0)], snap.c[(0, 0)], snap.s[(0, 0)]),
            (0.0, 1.0, 1.0)
        );
        assert!(m.is_time_invariant());
    }

    #[test]
    fn unobserved_model_builds() {
        let m = SignalModel::scalar(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(m.s_at(0.0).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn partial_observation_s() {
        let m = SignalModel::time_invariant(
            Matrix::zeros(2, 2),
            Matrix::from_rows(&[[1.0, 0.0]]).unwrap(),
            Matrix::identity(2),
            Matrix::identity(1),
        )
        .unwrap();
        let s = m.s_at(0.0).unwrap();
        assert_eq!(s.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SignalModel::scalar(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(SignalModel::scalar(0.0, 1.0, 1.0, 0.0).is_err());
        let err = SignalModel::time_invariant(
            Matrix::zeros(2, 2),
            Matrix::from_rows(&[[1.0]]).unwrap(),
            Matrix::identity(2),
            Matrix::identity(1),
        );
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn time_varying_snapshot() {
        let a = MatrixFlow::closed_form(2, 2, |t: f64| Matrix::diag(&[t.sin(), t.sin()]));
        let c = MatrixFlow::constant(Matrix::identity(2));
        let m = SignalModel::build(2, 2, a, c, &Matrix::identity(2), &Matrix::identity(2)).unwrap();
        assert!(!m.is_time_invariant());
        assert_eq!(m.snapshot(0.0).unwrap().a.max_abs(), 0.0);
        assert!(m.snapshot(-1.0).is_err());
        let a1 = m.snapshot(1.3).unwrap();
        let a2 = m.snapshot(1.3).unwrap();
        assert_eq!(a1.a, a2.a);
    }
}
