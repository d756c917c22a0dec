//! Matrix exponential by scaling and squaring with diagonal Padé approximants (Higham 2005).

use crate::error::{Error, Result};
use crate::linalg::{decomp, Matrix};
use crate::scalar::Real;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA: [(f64, usize); 4] = [
    (1.495585217958292e-2, 3),
    (2.539_398_330_063_23e-1, 5),
    (9.504178996162932e-1, 7),
    (2.097847961257068, 9),
];
const THETA13: f64 = 5.371920351148152;

/// Largest ‖tA‖₁ accepted before the result is declared an overflow.
const MAX_SCALED_NORM: f64 = 700.0;

fn pade_low<T: Real>(a: &Matrix<T>, b: &[f64]) -> (Matrix<T>, Matrix<T>) {
    let n = a.rows();
    let a2 = a * a;
    let mut u = Matrix::identity(n).scale(T::lit(b[1]));
    let mut v = Matrix::identity(n).scale(T::lit(b[0]));
    let mut p = Matrix::identity(n);
    for k in 1..b.len() / 2 {
        p = &p * &a2;
        u += &p.scale(T::lit(b[2 * k + 1]));
        v += &p.scale(T::lit(b[2 * k]));
    }
    (a * &u, v)
}

fn pade13<T: Real>(a: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let n = a.rows();
    let b = |k: usize| T::lit(PADE13[k]);
    let id = Matrix::identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = a6.scale(b(13)) + a4.scale(b(11)) + a2.scale(b(9));
    let u = &a6 * &inner_u + a6.scale(b(7)) + a4.scale(b(5)) + a2.scale(b(3)) + id.scale(b(1));
    let inner_v = a6.scale(b(12)) + a4.scale(b(10)) + a2.scale(b(8));
    let v = &a6 * &inner_v + a6.scale(b(6)) + a4.scale(b(4)) + a2.scale(b(2)) + id.scale(b(0));
    (a * &u, v)
}

/// `e^{tA}`.
pub fn mat_exp<T: Real>(a: &Matrix<T>, t: T) -> Result<Matrix<T>> {
    let n = a.require_square()?;
    if !t.is_finite() || !a.is_finite() {
        return Err(Error::NonFinite("matrix exponential argument".into()));
    }
    let ta = a.scale(t);
    let norm = ta.norm_one().as_f64();
    if norm > MAX_SCALED_NORM * n as f64 {
        return Err(Error::Overflow(format!(
            "‖tA‖₁ = {norm:e} too large for the matrix exponential"
        )));
    }
    if norm == 0.0 {
        return Ok(Matrix::identity(n));
    }
    for &(theta, m) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&ta, coeffs);
            return finish(u, v, 0);
        }
    }
    let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
    let scaled = ta.scale(T::lit(2f64.powi(-s)));
    let (u, v) = pade13(&scaled);
    finish(u, v, s)
}

fn finish<T: Real>(u: Matrix<T>, v: Matrix<T>, squarings: i32) -> Result<Matrix<T>> {
    let num = &v + &u;
    let den = &v - &u;
    let mut r = decomp::solve(&den, &num)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !r.is_finite() {
        return Err(Error::Overflow("matrix exponential overflowed".into()));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_exponential() {
        for &x in &[-3.0f64, -0.01, 0.001, 0.5, 2.0, 20.0] {
            let e = mat_exp(&Matrix::scalar(x), 1.0).unwrap();
            assert!((e[(0, 0)] / x.exp() - 1.0).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn nilpotent_is_polynomial() {
        let a = Matrix::<f64>::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let e = mat_exp(&a, 3.0).unwrap();
        assert!((e[(0, 1)] - 3.0).abs() < 1e-14);
        assert!((e[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn overflow_reported() {
        let a = Matrix::from_rows(&[[1.0e6]]).unwrap();
        assert!(matches!(mat_exp(&a, 1.0), Err(Error::Overflow(_))));
    }
}
