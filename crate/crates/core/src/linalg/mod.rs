//! Dense real matrix kernel: symmetric/PSD wrappers, norms, log-norm, spectra, exponentials and
//! Loewner-order utilities.

mod decomp;
mod expm;
mod matrix;
mod schur;

pub use decomp::{inverse, norm2, rank, singular_values, solve, sym_eigen, Lu, SymEigen};
pub use expm::mat_exp;
pub use matrix::Matrix;
pub use schur::{eigenvalues, lyapunov, schur, CMatrix, Schur};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default PSD acceptance tolerance `1e-10·(1 + ‖M‖₂)`, floored at a few ulps for `f32`.
pub fn default_psd_tol<T: Real>(norm: T) -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(64.0)) * (T::one() + norm)
}

/// Symmetric matrix; symmetrized on construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SymMat<T> {
    m: Matrix<T>,
}

impl<T: Real> SymMat<T> {
    pub fn new(m: &Matrix<T>) -> Result<Self> {
        m.require_square()?;
        Ok(Self { m: m.sym_part() })
    }

    /// For matrices that are symmetric by construction up to round-off.
    pub(crate) fn from_sym_part(m: Matrix<T>) -> Self {
        Self { m: m.sym_part() }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: Matrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: Matrix::identity(n),
        }
    }

    pub fn scalar(x: T) -> Self {
        Self {
            m: Matrix::scalar(x),
        }
    }

    pub fn diag(d: &[T]) -> Self {
        Self { m: Matrix::diag(d) }
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.m
    }

    pub fn eigen(&self) -> Result<SymEigen<T>> {
        sym_eigen(&self.m)
    }

    pub fn min_eig(&self) -> T {
        self.eigen().map(|e| e.min()).unwrap_or_else(|_| T::nan())
    }

    pub fn max_eig(&self) -> T {
        self.eigen().map(|e| e.max()).unwrap_or_else(|_| T::nan())
    }

    /// Spectral norm, `max |λ|`.
    pub fn norm2(&self) -> T {
        self.eigen()
            .map(|e| e.min().abs().max(e.max().abs()))
            .unwrap_or_else(|_| T::nan())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            m: &self.m + &other.m,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            m: &self.m - &other.m,
        }
    }

    pub fn scale(&self, k: T) -> Self {
        Self { m: self.m.scale(k) }
    }

    /// `M X Mᵀ`.
    pub fn congruence(&self, mat: &Matrix<T>) -> Self {
        Self::from_sym_part(mat.congruence(&self.m))
    }

    pub fn inverse(&self) -> Result<Self> {
        Ok(Self::from_sym_part(inverse(&self.m)?))
    }
}

/// PSD matrix with the certificate it was accepted under.
#[derive(Clone, Debug, Serialize)]
pub struct SpdMat<T> {
    #[serde(rename = "matrix")]
    sym: SymMat<T>,
    min_eig: T,
    tol: T,
}

impl<T: Real> SpdMat<T> {
    /// Accepts `m` when `λ_min ≥ -psd_tol`.
    pub fn certify(m: SymMat<T>) -> Result<Self> {
        let e = m.eigen()?;
        let tol = default_psd_tol(e.min().abs().max(e.max().abs()));
        if e.min() < -tol {
            return Err(Error::NotPositiveDefinite {
                what: "matrix".into(),
                min_eig: e.min().as_f64(),
                tol: tol.as_f64(),
            });
        }
        Ok(Self {
            sym: m,
            min_eig: e.min(),
            tol,
        })
    }

    /// Accepts `m` only when `λ_min > psd_tol`.
    pub fn certify_definite(m: SymMat<T>, what: &str) -> Result<Self> {
        let e = m.eigen()?;
        let tol = default_psd_tol(e.min().abs().max(e.max().abs()));
        if e.min() <= tol {
            return Err(Error::NotPositiveDefinite {
                what: what.into(),
                min_eig: e.min().as_f64(),
                tol: tol.as_f64(),
            });
        }
        Ok(Self {
            sym: m,
            min_eig: e.min(),
            tol,
        })
    }

    /// Clamps eigenvalues in `[-psd_tol, 0)` to zero; more negative eigenvalues are an error
    /// carrying the time stamp `t`.
    pub fn clamped(m: SymMat<T>, t: T) -> Result<Self> {
        let e = m.eigen()?;
        let tol = default_psd_tol(e.min().abs().max(e.max().abs()));
        if e.min() < -tol {
            return Err(Error::PsdViolation {
                t: t.as_f64(),
                min_eig: e.min().as_f64(),
                tol: tol.as_f64(),
            });
        }
        if e.min() < T::zero() {
            let fixed = SymMat::from_sym_part(e.reconstruct(|x| x.max(T::zero())));
            return Ok(Self {
                sym: fixed,
                min_eig: T::zero(),
                tol,
            });
        }
        Ok(Self {
            sym: m,
            min_eig: e.min(),
            tol,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sym: SymMat::identity(n),
            min_eig: T::one(),
            tol: default_psd_tol(T::one()),
        }
    }

    pub fn sym(&self) -> &SymMat<T> {
        &self.sym
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        self.sym.as_matrix()
    }

    pub fn dim(&self) -> usize {
        self.sym.dim()
    }

    pub fn min_eig(&self) -> T {
        self.min_eig
    }

    pub fn psd_tol(&self) -> T {
        self.tol
    }

    pub fn is_definite(&self) -> bool {
        self.min_eig > self.tol
    }

    pub fn inverse(&self) -> Result<Matrix<T>> {
        if !self.is_definite() {
            return Err(Error::Singular(format!(
                "PSD matrix with λ_min = {:e}",
                self.min_eig.as_f64()
            )));
        }
        Ok(self.sym.eigen()?.reconstruct(|x| T::one() / x))
    }

    /// Symmetric square root `M^{1/2}`.
    pub fn sqrt(&self) -> Result<Matrix<T>> {
        Ok(self.sym.eigen()?.reconstruct(|x| x.max(T::zero()).sqrt()))
    }

    /// `M^{-1/2}`.
    pub fn inv_sqrt(&self) -> Result<Matrix<T>> {
        if !self.is_definite() {
            return Err(Error::Singular(
                "inverse square root of a singular PSD matrix".into(),
            ));
        }
        Ok(self.sym.eigen()?.reconstruct(|x| T::one() / x.sqrt()))
    }
}

/// `λ_max((A + Aᵀ)/2)`.
pub fn log_norm<T: Real>(a: &Matrix<T>) -> Result<T> {
    a.require_square()?;
    Ok(sym_eigen(a)?.max())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa<T: Real>(a: &Matrix<T>) -> Result<T> {
    a.require_square()?;
    Ok(eigenvalues(a)?
        .into_iter()
        .map(|z| z.re)
        .fold(T::neg_infinity(), T::max))
}

/// Two-sided estimate `lower ≤ ‖e^{tA}‖₂ ≤ schur_upper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpNormEstimate<T> {
    pub lower: T,
    pub schur_upper: T,
}

/// `e^{ς(A)t}` and `κ_Sch,t(T)·e^{ς(A)t}` with `κ_Sch,t(T) = Σ_{i≤r} (‖T‖₂ t)^i / i!`, `T` the
/// strictly upper triangular part of the Schur form of `A`.
pub fn exp_norm_estimate<T: Real>(a: &Matrix<T>, t: T) -> Result<ExpNormEstimate<T>> {
    let r = a.require_square()?;
    let sch = schur(a)?;
    let abscissa = sch
        .eigenvalues()
        .into_iter()
        .map(|z| z.re)
        .fold(T::neg_infinity(), T::max);
    let tn = sch.t.strict_upper().norm2() * t;
    let mut term = T::one();
    let mut kappa = T::one();
    for i in 1..=r {
        term = term * tn / T::from_usize_lossy(i);
        kappa += term;
    }
    let lower = (abscissa * t).exp();
    Ok(ExpNormEstimate {
        lower,
        schur_upper: kappa * lower,
    })
}

/// `x ≤ y` in the Loewner order, i.e. `λ_min(y - x) ≥ -tol`.
pub fn loewner_leq<T: Real>(x: &SymMat<T>, y: &SymMat<T>, tol: T) -> bool {
    assert_eq!(
        x.dim(),
        y.dim(),
        "Loewner comparison of different dimensions"
    );
    y.sub(x).min_eig() >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn log_norm_examples() {
        assert_eq!(log_norm(&Matrix::diag(&[-1.0, -2.0])).unwrap(), -1.0);
        assert_eq!(log_norm(&Matrix::<f64>::zeros(3, 3)).unwrap(), 0.0);
        assert!((log_norm(&m(&[&[0.0, 2.0], &[0.0, 0.0]])).unwrap() - 1.0).abs() < 1e-15);
        assert!(log_norm(&Matrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn spectral_abscissa_examples() {
        assert!((spectral_abscissa(&Matrix::diag(&[-1.0f64, -2.0])).unwrap() + 1.0).abs() < 1e-15);
        assert!(
            spectral_abscissa(&m(&[&[0.0, -1.0], &[1.0, 0.0]]))
                .unwrap()
                .abs()
                < 1e-15
        );
        assert!(
            (spectral_abscissa(&m(&[&[-1.0, 10.0], &[0.0, -2.0]])).unwrap() + 1.0).abs() < 1e-14
        );
    }

    #[test]
    fn exp_norm_estimate_examples() {
        let e = exp_norm_estimate(&Matrix::diag(&[-1.0]), 1.0).unwrap();
        assert!((e.lower - (-1f64).exp()).abs() < 1e-15);
        assert!((e.schur_upper - (-1f64).exp()).abs() < 1e-15);

        let e = exp_norm_estimate(&Matrix::<f64>::zeros(2, 2), 4.0).unwrap();
        assert_eq!((e.lower, e.schur_upper), (1.0, 1.0));

        let a = m(&[&[-1.0, 3.0], &[0.0, -1.0]]);
        let e = exp_norm_estimate(&a, 1.0).unwrap();
        let em1 = (-1f64).exp();
        assert!((e.lower - em1).abs() < 1e-14);
        assert!((e.schur_upper - em1 * (1.0 + 3.0 + 4.5)).abs() < 1e-12);
        let actual = norm2(&mat_exp(&a, 1.0).unwrap());
        assert!(e.lower <= actual && actual <= e.schur_upper);
    }

    #[test]
    fn loewner_examples() {
        let z = SymMat::zeros(2);
        let id = SymMat::identity(2);
        assert!(loewner_leq(&z, &id, 1e-12));
        assert!(!loewner_leq(&id, &z, 1e-12));
        assert!(!loewner_leq(
            &SymMat::diag(&[1.0, 3.0]),
            &SymMat::diag(&[2.0, 2.0]),
            1e-12
        ));
    }

    #[test]
    fn psd_certificates() {
        let near = SymMat::diag(&[1.0, -1e-13]);
        let c = SpdMat::clamped(near, 0.5).unwrap();
        assert_eq!(c.min_eig(), 0.0);
        assert!(!c.is_definite());
        let bad = SymMat::diag(&[1.0, -1e-3]);
        assert!(matches!(
            SpdMat::clamped(bad.clone(), 0.5),
            Err(Error::PsdViolation { .. })
        ));
        assert!(SpdMat::certify(bad).is_err());
        assert!(SpdMat::certify_definite(SymMat::diag(&[1.0, 0.0]), "R").is_err());
        let s = SpdMat::certify_definite(SymMat::diag(&[4.0, 9.0]), "R").unwrap();
        assert!((s.sqrt().unwrap() - Matrix::diag(&[2.0, 3.0])).max_abs() < 1e-15);
        assert!((s.inv_sqrt().unwrap() - Matrix::diag(&[0.5, 1.0 / 3.0])).max_abs() < 1e-15);
    }

    #[test]
    fn symmetrized_on_ingest() {
        let s = SymMat::new(&m(&[&[1.0, 2.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(s.as_matrix()[(0, 1)], 1.0);
        assert_eq!(s.as_matrix()[(1, 0)], 1.0);
    }
}
