//! Time-indexed matrix flows `u ↦ A_u` and their transition matrices.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMode {
    Constant,
    Tabulated,
    ClosedForm,
}

type Evaluator<T> = Arc<dyn Fn(T) -> Matrix<T> + Send + Sync>;

#[derive(Clone)]
enum FlowKind<T> {
    Constant(Matrix<T>),
    Tabulated {
        times: Vec<T>,
        values: Vec<Matrix<T>>,
    },
    ClosedForm(Evaluator<T>),
}

/// Deterministic matrix-valued function of time.
#[derive(Clone)]
pub struct MatrixFlow<T> {
    rows: usize,
    cols: usize,
    kind: FlowKind<T>,
}

impl<T: Real> MatrixFlow<T> {
    pub fn constant(m: Matrix<T>) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            kind: FlowKind::Constant(m),
        }
    }

    /// Piecewise-linear interpolation through strictly increasing nodes.
    pub fn tabulated(times: Vec<T>, values: Vec<Matrix<T>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "tabulated flow needs matching non-empty node lists ({} times, {} values)",
                times.len(),
                values.len()
            )));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "tabulated flow time nodes must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let (rows, cols) = values[0].shape();
        if values.iter().any(|v| v.shape() != (rows, cols)) {
            return Err(Error::Dimension(
                "tabulated flow values have differing shapes".into(),
            ));
        }
        if times.iter().any(|t| !t.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tabulated flow".into()));
        }
        Ok(Self {
            rows,
            cols,
            kind: FlowKind::Tabulated { times, values },
        })
    }

    pub fn closed_form(
        rows: usize,
        cols: usize,
        f: impl Fn(T) -> Matrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            rows,
            cols,
            kind: FlowKind::ClosedForm(Arc::new(f)),
        }
    }

    pub fn mode(&self) -> FlowMode {
        match self.kind {
            FlowKind::Constant(_) => FlowMode::Constant,
            FlowKind::Tabulated { .. } => FlowMode::Tabulated,
            FlowKind::ClosedForm(_) => FlowMode::ClosedForm,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, FlowKind::Constant(_))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Time range covered by a tabulated flow.
    pub fn range(&self) -> Option<(T, T)> {
        match &self.kind {
            FlowKind::Tabulated { times, .. } => Some((times[0], *times.last().unwrap())),
            _ => None,
        }
    }

    pub fn eval(&self, t: T) -> Result<Matrix<T>> {
        match &self.kind {
            FlowKind::Constant(m) => Ok(m.clone()),
            FlowKind::Tabulated { times, values } => {
                let (lo, hi) = (times[0], *times.last().unwrap());
                if !(t >= lo && t <= hi) {
                    return Err(Error::OutOfRange {
                        t: t.as_f64(),
                        lo: lo.as_f64(),
                        hi: hi.as_f64(),
                    });
                }
                let k = times.partition_point(|&x| x <= t);
                if k == times.len() {
                    return Ok(values[k - 1].clone());
                }
                let (t0, t1) = (times[k - 1], times[k]);
                let w = (t - t0) / (t1 - t0);
                Ok(values[k - 1].scale(T::one() - w) + values[k].scale(w))
            }
            FlowKind::ClosedForm(f) => {
                let m = f(t);
                if m.shape() != (self.rows, self.cols) {
                    return Err(Error::Dimension(format!(
                        "closed-form flow returned {:?}, declared {}x{}",
                        m.shape(),
                        self.rows,
                        self.cols
                    )));
                }
                if !m.is_finite() {
                    return Err(Error::NonFinite(format!("flow value at t = {t}")));
                }
                Ok(m)
            }
        }
    }

    /// `max ‖A_u‖₂` over `n` equispaced points of `[lo, hi]` (plus tabulation nodes inside).
    pub fn sup_norm(&self, lo: T, hi: T, n: usize) -> Result<T> {
        if let FlowKind::Constant(m) = &self.kind {
            return Ok(norm2(m));
        }
        let mut sup = T::zero();
        for t in linspace(lo, hi, n.max(2)) {
            sup = sup.max(norm2(&self.eval(t)?));
        }
        if let FlowKind::Tabulated { times, values } = &self.kind {
            for (t, v) in times.iter().zip(values) {
                if *t >= lo && *t <= hi {
                    sup = sup.max(norm2(v));
                }
            }
        }
        Ok(sup)
    }
}

impl<T: fmt::Debug> fmt::Debug for MatrixFlow<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FlowKind::Constant(m) => write!(f, "MatrixFlow::Constant({m:?})"),
            FlowKind::Tabulated { times, .. } => {
                write!(f, "MatrixFlow::Tabulated({} nodes)", times.len())
            }
            FlowKind::ClosedForm(_) => {
                write!(f, "MatrixFlow::ClosedForm({}x{})", self.rows, self.cols)
            }
        }
    }
}

pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n <= 1 {
        return vec![lo];
    }
    let d = (hi - lo) / T::from_usize_lossy(n - 1);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + d * T::from_usize_lossy(i)
            }
        })
        .collect()
}

/// Default number of RK4 steps on `[s, t]`: `max(64, ⌈32(t−s)(1+sup‖A_u‖₂)⌉)`.
pub fn default_transition_steps<T: Real>(span: T, sup_norm: T) -> usize {
    let n = (T::lit(32.0) * span * (T::one() + sup_norm))
        .ceil()
        .to_usize()
        .unwrap_or(usize::MAX);
    n.max(64)
}

/// One RK4 step of `E' = A(u) E` from `u` to `u + h`.
pub(crate) fn rk4_linear_step<T: Real>(
    e: &Matrix<T>,
    h: T,
    a0: &Matrix<T>,
    a_mid: &Matrix<T>,
    a1: &Matrix<T>,
) -> Matrix<T> {
    let half = T::lit(0.5);
    let k1 = a0 * e;
    let k2 = a_mid * &(e + &k1.scale(h * half));
    let k3 = a_mid * &(e + &k2.scale(h * half));
    let k4 = a1 * &(e + &k3.scale(h));
    let incr = k1 + k2.scale(T::lit(2.0)) + k3.scale(T::lit(2.0)) + k4;
    e + &incr.scale(h / T::lit(6.0))
}

/// Propagates `E' = G(u) E`, `E(s) = Id`, with `steps` RK4 steps from `s` to `t`.
pub fn propagate<T: Real>(
    generator: impl Fn(T) -> Result<Matrix<T>>,
    dim: usize,
    s: T,
    t: T,
    steps: usize,
) -> Result<Matrix<T>> {
    let mut e = Matrix::identity(dim);
    if t == s {
        return Ok(e);
    }
    let steps = steps.max(1);
    let h = (t - s) / T::from_usize_lossy(steps);
    let mut a0 = generator(s)?;
    for k in 0..steps {
        let u = s + h * T::from_usize_lossy(k);
        let u1 = if k + 1 == steps {
            t
        } else {
            s + h * T::from_usize_lossy(k + 1)
        };
        let a_mid = generator(u + h * T::lit(0.5))?;
        let a1 = generator(u1)?;
        e = rk4_linear_step(&e, h, &a0, &a_mid, &a1);
        a0 = a1;
    }
    if !e.is_finite() {
        return Err(Error::NonFinite(format!("transition matrix on [{s}, {t}]")));
    }
    Ok(e)
}

/// Transition matrix `𝓔_{s,t}(A)`: `∂_t 𝓔 = A_t 𝓔`, `𝓔_{s,s} = Id`, by fixed-step RK4.
/// `step = None` selects the default step rule.
pub fn transition_matrix<T: Real>(
    flow: &MatrixFlow<T>,
    s: T,
    t: T,
    step: Option<T>,
) -> Result<Matrix<T>> {
    let (rows, cols) = flow.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if !(s <= t) {
        return Err(Error::InvalidArgument(format!(
            "transition matrix needs s ≤ t (s = {s}, t = {t})"
        )));
    }
    if s == t {
        return Ok(Matrix::identity(rows));
    }
    let steps = match step {
        Some(h) if h > T::zero() => ((t - s) / h).ceil().to_usize().unwrap_or(1).max(1),
        Some(h) => {
            return Err(Error::InvalidArgument(format!(
                "step must be positive, got {h}"
            )))
        }
        None => default_transition_steps(t - s, flow.sup_norm(s, t, 17)?),
    };
    propagate(|u| flow.eval(u), rows, s, t, steps)
}
