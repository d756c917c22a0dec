//! Complex Schur form `A = Z T Zᴴ` of a real matrix via Householder-Hessenberg reduction and
//! single-shift QR, plus the triangular Lyapunov solver built on it.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{decomp, Matrix};
use crate::scalar::Real;

/// Square complex matrix, row-major. Internal to the Schur machinery.
#[derive(Clone, Debug)]
pub struct CMatrix<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::new(T::zero(), T::zero()); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_real(a: &Matrix<T>) -> Self {
        let n = a.rows();
        Self {
            n,
            data: a
                .as_slice()
                .iter()
                .map(|&x| Complex::new(x, T::zero()))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn real_part(&self) -> Matrix<T> {
        Matrix::from_fn(self.n, self.n, |i, j| self[(i, j)].re)
    }

    /// Strictly upper triangular part.
    pub fn strict_upper(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..=i {
                out[(i, j)] = Complex::new(T::zero(), T::zero());
            }
        }
        out
    }

    /// Spectral norm through the real embedding `[[X, -Y], [Y, X]]`.
    pub fn norm2(&self) -> T {
        let n = self.n;
        let emb = Matrix::from_fn(2 * n, 2 * n, |i, j| {
            let z = self[(i % n, j % n)];
            match (i < n, j < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        decomp::norm2(&emb)
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.n + j]
    }
}

/// `A = Z T Zᴴ` with `T` upper triangular and `Z` unitary.
#[derive(Clone, Debug)]
pub struct Schur<T> {
    pub z: CMatrix<T>,
    pub t: CMatrix<T>,
}

impl<T: Real> Schur<T> {
    pub fn eigenvalues(&self) -> Vec<Complex<T>> {
        (0..self.t.dim()).map(|i| self.t[(i, i)]).collect()
    }
}

/// Householder reduction to upper Hessenberg form, `A = Q H Qᵀ`.
fn hessenberg<T: Real>(a: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let n = a.rows();
    let mut h = a.clone();
    let mut q = Matrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let alpha_sq: T = (k + 1..n).map(|i| h[(i, k)] * h[(i, k)]).sum();
        if alpha_sq == T::zero() {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let alpha = if x0 >= T::zero() {
            -alpha_sq.sqrt()
        } else {
            alpha_sq.sqrt()
        };
        let mut v = vec![T::zero(); n];
        v[k + 1] = x0 - alpha;
        for i in k + 2..n {
            v[i] = h[(i, k)];
        }
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        // H <- (I - 2vvᵀ/vᵀv) H (I - 2vvᵀ/vᵀv)
        for j in 0..n {
            let dot: T = (k + 1..n).map(|i| v[i] * h[(i, j)]).sum();
            let f = two * dot / vnorm2;
            for i in k + 1..n {
                h[(i, j)] -= f * v[i];
            }
        }
        for i in 0..n {
            let dot: T = (k + 1..n).map(|j| h[(i, j)] * v[j]).sum();
            let f = two * dot / vnorm2;
            for j in k + 1..n {
                h[(i, j)] -= f * v[j];
            }
        }
        for i in 0..n {
            let dot: T = (k + 1..n).map(|j| q[(i, j)] * v[j]).sum();
            let f = two * dot / vnorm2;
            for j in k + 1..n {
                q[(i, j)] -= f * v[j];
            }
        }
        for i in k + 2..n {
            h[(i, k)] = T::zero();
        }
    }
    (q, h)
}

/// Rotation `G = [[c, s], [-s̄, c]]` with `G [x; y] = [r; 0]`.
fn givens<T: Real>(x: Complex<T>, y: Complex<T>) -> (T, Complex<T>) {
    let zero = Complex::new(T::zero(), T::zero());
    if y == zero {
        return (T::one(), zero);
    }
    if x == zero {
        return (T::zero(), y.conj() / Complex::new(y.norm(), T::zero()));
    }
    let ax = x.norm();
    let r = (ax * ax + y.norm_sqr()).sqrt();
    let c = ax / r;
    let s = (x / Complex::new(ax, T::zero())) * y.conj() / Complex::new(r, T::zero());
    (c, s)
}

/// Complex Schur decomposition of a real square matrix.
pub fn schur<T: Real>(a: &Matrix<T>) -> Result<Schur<T>> {
    let n = a.require_square()?;
    if !a.is_finite() {
        return Err(Error::NonFinite("Schur input".into()));
    }
    let (q, hr) = hessenberg(a);
    let mut h = CMatrix::from_real(&hr);
    let mut z = CMatrix::from_real(&q);
    let zero = Complex::new(T::zero(), T::zero());
    let eps = T::epsilon();
    let norm = a.frobenius_norm().max(T::min_positive_value());
    let max_iter = 60 * n.max(1);

    let mut hi = n.saturating_sub(1);
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        // locate the active unreduced block [l, hi]
        let mut l = hi;
        while l > 0 {
            let sub = h[(l, l - 1)].norm();
            let diag = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            let ref_scale = if diag == T::zero() { norm } else { diag };
            if sub <= eps * ref_scale {
                h[(l, l - 1)] = zero;
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if iter > max_iter || total > 100 * n * n.max(4) {
            return Err(Error::NoConvergence("complex Schur QR iteration".into()));
        }

        let a11 = h[(hi - 1, hi - 1)];
        let a12 = h[(hi - 1, hi)];
        let a21 = h[(hi, hi - 1)];
        let a22 = h[(hi, hi)];
        let mu = if iter % 11 == 10 {
            // exceptional shift
            a22 + Complex::new(h[(hi, hi - 1)].norm() * T::lit(1.5), T::zero())
        } else {
            let half = Complex::new(T::lit(0.5), T::zero());
            let m = (a11 + a22) * half;
            let d = (a11 - a22) * half;
            let disc = (d * d + a12 * a21).sqrt();
            let r1 = m + disc;
            let r2 = m - disc;
            if (r1 - a22).norm() <= (r2 - a22).norm() {
                r1
            } else {
                r2
            }
        };

        for k in l..hi {
            let (x, y) = if k == l {
                (h[(l, l)] - mu, h[(l + 1, l)])
            } else {
                (h[(k, k - 1)], h[(k + 1, k - 1)])
            };
            let (c, s) = givens(x, y);
            let cc = Complex::new(c, T::zero());
            let jstart = if k == l { l } else { k - 1 };
            for j in jstart..n {
                let p = h[(k, j)];
                let r = h[(k + 1, j)];
                h[(k, j)] = cc * p + s * r;
                h[(k + 1, j)] = -s.conj() * p + cc * r;
            }
            let iend = (k + 2).min(hi);
            for i in 0..=iend {
                let p = h[(i, k)];
                let r = h[(i, k + 1)];
                h[(i, k)] = p * cc + r * s.conj();
                h[(i, k + 1)] = -p * s + r * cc;
            }
            for i in 0..n {
                let p = z[(i, k)];
                let r = z[(i, k + 1)];
                z[(i, k)] = p * cc + r * s.conj();
                z[(i, k + 1)] = -p * s + r * cc;
            }
            if k > l {
                h[(k + 1, k - 1)] = zero;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = zero;
        }
    }
    Ok(Schur { z, t: h })
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues<T: Real>(a: &Matrix<T>) -> Result<Vec<Complex<T>>> {
    Ok(schur(a)?.eigenvalues())
}

/// Solves `A X + X Aᵀ + Q = 0` by Bartels-Stewart back-substitution on the complex Schur form
/// of `A`. Requires `λᵢ(A) + conj(λⱼ(A)) ≠ 0` for all pairs.
pub fn lyapunov<T: Real>(a: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.require_square()?;
    q.require_shape(n, n, "Lyapunov right-hand side")?;
    let sch = schur(a)?;
    let t = &sch.t;
    let zh = sch.z.adjoint();
    // T Y + Y Tᴴ = -Zᴴ Q Z
    let qt = zh.matmul(&CMatrix::from_real(q)).matmul(&sch.z);
    let mut y = CMatrix::zeros(n);
    let scale = a.frobenius_norm().max(T::one());
    for j in (0..n).rev() {
        let mut rhs: Vec<Complex<T>> = (0..n).map(|i| -qt[(i, j)]).collect();
        for k in j + 1..n {
            let f = t[(j, k)].conj();
            for (i, r) in rhs.iter_mut().enumerate() {
                *r -= f * y[(i, k)];
            }
        }
        let shift = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in i + 1..n {
                s -= t[(i, k)] * y[(k, j)];
            }
            let d = t[(i, i)] + shift;
            if d.norm() <= T::epsilon() * scale * T::lit(16.0) {
                return Err(Error::Singular(
                    "Lyapunov operator: eigenvalues sum to zero".into(),
                ));
            }
            y[(i, j)] = s / d;
        }
    }
    let x = sch.z.matmul(&y).matmul(&zh).real_part();
    Ok(x.sym_part())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(s: &Schur<f64>) -> Matrix<f64> {
        s.z.matmul(&s.t).matmul(&s.z.adjoint()).real_part()
    }

    #[test]
    fn schur_reconstructs_nonnormal() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-4.0, 0.5, 1.0], [0.3, -2.0, -1.0]]).unwrap();
        let s = schur(&a).unwrap();
        assert!((reconstruct(&s) - a).max_abs() < 1e-12);
        let tr: f64 = s.eigenvalues().iter().map(|z| z.re).sum();
        assert!((tr - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rotation_generator_has_imaginary_spectrum() {
        let a = Matrix::<f64>::from_rows(&[[0.0, -1.0], [1.0, 0.0]]).unwrap();
        let ev = eigenvalues(&a).unwrap();
        for z in ev {
            assert!(z.re.abs() < 1e-14);
            assert!((z.im.abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lyapunov_residual() {
        let a = Matrix::from_rows(&[[-1.0, 3.0], [0.0, -2.0]]).unwrap();
        let q = Matrix::identity(2);
        let x = lyapunov(&a, &q).unwrap();
        let res = &a * &x + &x * &a.transpose() + q;
        assert!(res.max_abs() < 1e-13);
    }

    #[test]
    fn lyapunov_rejects_singular_operator() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert!(lyapunov(&a, &Matrix::identity(2)).is_err());
    }
}
