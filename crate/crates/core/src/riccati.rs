//! Differential and algebraic Riccati equations, the closed-form auxiliary flows and Bucy's
//! two-sided bounds.
//!
//! The Riccati drift is `Ricc_t(Q) = A_t Q + Q A_tᵀ − Q S_t Q + R₁`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::linspace;
use crate::gramian::{gramian_set, transition_gramians};
use crate::linalg::{
    default_psd_tol, inverse, loewner_leq, lyapunov, norm2, spectral_abscissa, Matrix, SpdMat,
    SymMat,
};
use crate::model::SignalModel;
use crate::scalar::Real;

/// Nominal DRE step when none is given.
pub const DEFAULT_DRE_STEP: f64 = 0.01;
/// Minimum number of nominal intervals of a trajectory.
const MIN_INTERVALS: usize = 16;
/// Substeps are sized so that `h·(1 + ‖A‖ + 2‖X‖‖S‖) ≤ STIFF_CAP`.
const STIFF_CAP: f64 = 0.05;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Clone, Debug)]
struct Coeffs<T> {
    a: Matrix<T>,
    s: Matrix<T>,
}

fn drift_raw<T: Real>(c: &Coeffs<T>, r1: &Matrix<T>, q: &Matrix<T>) -> Matrix<T> {
    let aq = c.a.matmul(q);
    let qsq = q.matmul(&c.s).matmul(q).sym_part();
    let mut out = &aq + &aq.transpose();
    out -= &qsq;
    out += r1;
    out
}

/// `(φ', φ'')` at `x` for constant coefficients.
fn derivatives<T: Real>(c: &Coeffs<T>, r1: &Matrix<T>, x: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let d = drift_raw(c, r1, x);
    let ad = c.a.matmul(&d);
    let dsx = d.matmul(&c.s).matmul(x);
    let dd = (&ad + &ad.transpose()) - (&dsx + &dsx.transpose());
    (d, dd)
}

/// One classical RK4 step of length `h` from `x`, given coefficients at both ends and the midpoint.
fn rk4_step<T: Real>(
    c0: &Coeffs<T>,
    cm: &Coeffs<T>,
    c1: &Coeffs<T>,
    r1: &Matrix<T>,
    x: &Matrix<T>,
    h: T,
) -> Matrix<T> {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let k1 = drift_raw(c0, r1, x);
    let x2 = (x + &k1.scale(h * half)).sym_part();
    let k2 = drift_raw(cm, r1, &x2);
    let x3 = (x + &k2.scale(h * half)).sym_part();
    let k3 = drift_raw(cm, r1, &x3);
    let x4 = (x + &k3.scale(h)).sym_part();
    let k4 = drift_raw(c1, r1, &x4);
    let incr = k1 + k2.scale(two) + k3.scale(two) + k4;
    (x + &incr.scale(h / T::lit(6.0))).sym_part()
}

/// Evaluates `A_t`, `S_t`, caching them for time-invariant models.
struct CoeffSource<'a, T> {
    model: &'a SignalModel<T>,
    fixed: Option<(Coeffs<T>, T, T)>,
}

impl<'a, T: Real> CoeffSource<'a, T> {
    fn new(model: &'a SignalModel<T>) -> Result<Self> {
        let fixed = if model.is_time_invariant() {
            let c = Coeffs {
                a: model.a_at(T::zero())?,
                s: model.s_at(T::zero())?,
            };
            let (na, ns) = (norm2(&c.a), norm2(&c.s));
            Some((c, na, ns))
        } else {
            None
        };
        Ok(Self { model, fixed })
    }

    fn at(&self, t: T) -> Result<Coeffs<T>> {
        match &self.fixed {
            Some((c, _, _)) => Ok(c.clone()),
            None => Ok(Coeffs {
                a: self.model.a_at(t)?,
                s: self.model.s_at(t)?,
            }),
        }
    }

    fn norms(&self, t: T) -> Result<(T, T)> {
        match &self.fixed {
            Some((_, na, ns)) => Ok((*na, *ns)),
            None => {
                let c = self.at(t)?;
                Ok((norm2(&c.a), norm2(&c.s)))
            }
        }
    }
}

/// `Ricc_t(Q)`.
pub fn ricc_drift<T: Real>(model: &SignalModel<T>, t: T, q: &SymMat<T>) -> Result<SymMat<T>> {
    if q.dim() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "Q is {0}x{0}, model state dimension {1}",
            q.dim(),
            model.state_dim()
        )));
    }
    let c = Coeffs {
        a: model.a_at(t)?,
        s: model.s_at(t)?,
    };
    SymMat::new(&drift_raw(&c, model.r1_cov().as_matrix(), q.as_matrix()))
}

/// Solution `u ↦ φ_{s,u}(Q)` of the DRE on the RK4 step grid. Between nodes, time-invariant
/// models use quintic Hermite interpolation with exact derivatives; time-varying ones take one
/// RK4 step off the left node. Either way dense output keeps the integrator's accuracy.
#[derive(Clone, Debug)]
pub struct RiccatiTrajectory<T> {
    model: SignalModel<T>,
    grid: Vec<T>,
    values: Vec<SpdMat<T>>,
    /// First and second time derivatives at the nodes; time-invariant models only.
    derivs: Vec<(Matrix<T>, Matrix<T>)>,
    substeps: usize,
}

impl<T: Real> RiccatiTrajectory<T> {
    pub fn model(&self) -> &SignalModel<T> {
        &self.model
    }

    pub fn start(&self) -> T {
        self.grid[0]
    }

    pub fn end(&self) -> T {
        *self.grid.last().unwrap()
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn values(&self) -> &[SpdMat<T>] {
        &self.values
    }

    pub fn initial(&self) -> &SpdMat<T> {
        &self.values[0]
    }

    pub fn final_value(&self) -> &SpdMat<T> {
        self.values.last().unwrap()
    }

    /// Total number of RK4 steps taken, including stiffness subdivisions.
    pub fn rk4_steps(&self) -> usize {
        self.substeps
    }

    /// `φ_{s,t}(Q)` at any `t` in the trajectory range; exact node values at grid times.
    pub fn eval(&self, t: T) -> Result<Matrix<T>> {
        let (lo, hi) = (self.start(), self.end());
        let slack = T::epsilon() * T::lit(16.0) * (T::one() + hi.abs());
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::OutOfRange {
                t: t.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        let k = self.grid.partition_point(|&x| x <= t);
        if k == 0 {
            return Ok(self.values[0].as_matrix().clone());
        }
        if k == self.grid.len() || self.grid[k - 1] == t {
            return Ok(self.values[k - 1].as_matrix().clone());
        }
        let t0 = self.grid[k - 1];
        let h = t - t0;
        if !self.derivs.is_empty() {
            let (t1, one) = (self.grid[k], T::one());
            let w = t1 - t0;
            let th = h / w;
            let (th2, th3) = (th * th, th * th * th);
            let (th4, th5) = (th3 * th, th3 * th2);
            let lit = T::lit;
            let h0 = one - lit(10.0) * th3 + lit(15.0) * th4 - lit(6.0) * th5;
            let h1 = th - lit(6.0) * th3 + lit(8.0) * th4 - lit(3.0) * th5;
            let h2 = lit(0.5) * th2 - lit(1.5) * th3 + lit(1.5) * th4 - lit(0.5) * th5;
            let h3 = one - h0;
            let h4 = -lit(4.0) * th3 + lit(7.0) * th4 - lit(3.0) * th5;
            let h5 = lit(0.5) * th3 - th4 + lit(0.5) * th5;
            let ((d0, dd0), (d1, dd1)) = (&self.derivs[k - 1], &self.derivs[k]);
            let terms = [
                (self.values[k - 1].as_matrix(), h0),
                (d0, h1 * w),
                (dd0, h2 * w * w),
                (self.values[k].as_matrix(), h3),
                (d1, h4 * w),
                (dd1, h5 * w * w),
            ];
            let mut m = Matrix::zeros(d0.rows(), d0.cols());
            for (mat, c) in terms {
                for (o, &x) in m.as_mut_slice().iter_mut().zip(mat.as_slice()) {
                    *o += c * x;
                }
            }
            return Ok(m.sym_part());
        }
        let at = |u: T| -> Result<Coeffs<T>> {
            Ok(Coeffs {
                a: self.model.a_at(u)?,
                s: self.model.s_at(u)?,
            })
        };
        let r1 = self.model.r1_cov().as_matrix();
        Ok(rk4_step(
            &at(t0)?,
            &at(t0 + h * T::lit(0.5))?,
            &at(t)?,
            r1,
            self.values[k - 1].as_matrix(),
            h,
        ))
    }

    /// Whether [`Self::eval`] is a C² interpolant between nodes (time-invariant models).
    pub fn is_smooth(&self) -> bool {
        !self.derivs.is_empty()
    }

    pub fn eval_sym(&self, t: T) -> Result<SymMat<T>> {
        Ok(SymMat::from_sym_part(self.eval(t)?))
    }

    /// CSV rows: `t`, row-major entries, `λ_min`, `λ_max`.
    pub fn csv_rows(&self) -> Result<Vec<Vec<T>>> {
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(&t, v)| {
                let e = v.sym().eigen()?;
                let mut row = vec![t];
                row.extend_from_slice(v.as_matrix().as_slice());
                row.push(e.min());
                row.push(e.max());
                Ok(row)
            })
            .collect()
    }

    /// Header matching [`Self::csv_rows`].
    pub fn csv_header(&self) -> Vec<String> {
        let n = self.model.state_dim();
        let mut h = vec!["t".to_string()];
        for i in 0..n {
            for j in 0..n {
                h.push(format!("q{i}{j}"));
            }
        }
        h.push("lambda_min".into());
        h.push("lambda_max".into());
        h
    }
}

fn nominal_intervals<T: Real>(span: T, step: Option<T>) -> Result<usize> {
    match step {
        Some(h) if h > T::zero() && h.is_finite() => {
            Ok((span / h).ceil().to_usize().unwrap_or(1).max(1))
        }
        Some(h) => Err(Error::InvalidArgument(format!(
            "DRE step must be positive, got {h}"
        ))),
        None => Ok((span / T::lit(DEFAULT_DRE_STEP))
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(MIN_INTERVALS)),
    }
}

/// Integrates `∂_u φ = Ricc_u(φ)`, `φ_s = Q`, by RK4 on `[s, t]`. The nominal grid has step
/// `step` (default 0.01); nominal intervals are subdivided when `‖φ‖·‖S‖` makes them stiff.
pub fn integrate_dre<T: Real>(
    model: &SignalModel<T>,
    s: T,
    t: T,
    q: &SpdMat<T>,
    step: Option<T>,
) -> Result<RiccatiTrajectory<T>> {
    if !(s <= t) {
        return Err(Error::InvalidArgument(format!(
            "DRE interval needs s ≤ t (s = {s}, t = {t})"
        )));
    }
    if q.dim() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "Q is {0}x{0}, model state dimension {1}",
            q.dim(),
            model.state_dim()
        )));
    }
    let src = CoeffSource::new(model)?;
    let r1 = model.r1_cov().as_matrix();
    if s == t {
        return Ok(RiccatiTrajectory {
            model: model.clone(),
            derivs: Vec::new(),
            grid: vec![s],
            values: vec![q.clone()],
            substeps: 0,
        });
    }
    let n = nominal_intervals(t - s, step)?;
    let nominal = linspace(s, t, n + 1);
    // every RK4 substep becomes a node, so interpolation never spans a stiff stretch
    let mut grid = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    grid.push(s);
    values.push(q.clone());
    let mut x = q.as_matrix().clone();
    let mut substeps = 0;
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    for k in 0..n {
        let (t0, t1) = (nominal[k], nominal[k + 1]);
        let (na, ns) = src.norms(t0)?;
        let nx = values[values.len() - 1].sym().max_eig().abs();
        let cap = T::lit(STIFF_CAP) / (T::one() + na + two * nx * ns);
        let m = ((t1 - t0) / cap).ceil().to_usize().unwrap_or(1).max(1);
        let h = (t1 - t0) / T::from_usize_lossy(m);
        for j in 0..m {
            let u = t0 + h * T::from_usize_lossy(j);
            let u1 = if j + 1 == m { t1 } else { u + h };
            x = rk4_step(
                &src.at(u)?,
                &src.at(u + h * half)?,
                &src.at(u1)?,
                r1,
                &x,
                u1 - u,
            );
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("Riccati flow at t = {u1}")));
            }
            let node = SpdMat::clamped(SymMat::from_sym_part(x.clone()), u1)?;
            x = node.as_matrix().clone();
            values.push(node);
            grid.push(u1);
        }
        substeps += m;
    }
    let derivs = match &src.fixed {
        Some((c, _, _)) => values
            .iter()
            .map(|v| derivatives(c, r1, v.as_matrix()))
            .collect(),
        None => Vec::new(),
    };
    Ok(RiccatiTrajectory {
        model: model.clone(),
        derivs,
        grid,
        values,
        substeps,
    })
}

/// How the Newton–Kleinman iteration was started.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NewtonSeed<T> {
    /// Bass's construction `P₀ = W⁻¹` with `(Aᵀ + βI)W + W(Aᵀ + βI)ᵀ = 2S`.
    Bass { shift: T },
    /// `P₀ = γ·Id`.
    PoleShift { gamma: T },
    /// `P₀ = φ_T(R₁)`.
    DreBurnIn { time: T },
}

/// Stabilizing solution of `Ricc(P) = 0`.
#[derive(Clone, Debug, Serialize)]
pub struct ArePoint<T> {
    pub p: SpdMat<T>,
    /// `‖Ricc(P)‖_F`
    pub residual_norm: T,
    /// `ς(A − PS)`
    pub closed_loop_abscissa: T,
    pub iterations: usize,
    pub seed: NewtonSeed<T>,
}

/// `1e-11·(1 + ‖P‖₂)`, floored at a few hundred ulps for `f32`.
pub fn are_tolerance<T: Real>(p_norm: T) -> T {
    T::lit(1e-11).max(T::epsilon() * T::lit(256.0)) * (T::one() + p_norm)
}

fn bass_seed<T: Real>(a: &Matrix<T>, s: &Matrix<T>) -> Option<(Matrix<T>, T)> {
    let n = a.rows();
    let shift = T::one() + norm2(a);
    let stable = (a.transpose() + Matrix::identity(n).scale(shift)).scale(-T::one());
    let w = lyapunov(&stable, &s.scale(T::lit(2.0))).ok()?.sym_part();
    let p0 = SpdMat::certify_definite(SymMat::new(&w).ok()?, "Bass Gramian")
        .ok()?
        .inverse()
        .ok()?
        .sym_part();
    (p0.is_finite() && spectral_abscissa(&(a - &p0.matmul(s))).ok()? < T::zero())
        .then_some((p0, shift))
}

fn pole_shift_seed<T: Real>(a: &Matrix<T>, s: &Matrix<T>) -> Result<Option<T>> {
    let es = SymMat::new(s)?.eigen()?;
    let floor = default_psd_tol(es.max());
    let smallest_positive = es
        .values
        .iter()
        .copied()
        .filter(|&v| v > floor)
        .fold(T::infinity(), T::min);
    if !smallest_positive.is_finite() {
        return Ok(None);
    }
    let mut gamma = T::one() + norm2(a) / smallest_positive;
    // larger shifts only occur for rank-deficient S and wreck the Lyapunov conditioning
    for _ in 0..20 {
        let f = a - &s.scale(gamma);
        if spectral_abscissa(&f)? < T::zero() {
            return Ok(Some(gamma));
        }
        gamma *= T::lit(2.0);
    }
    Ok(None)
}

/// Stabilizing ARE solution by Newton–Kleinman; each step solves
/// `(A − P_k S) P + P (A − P_k S)ᵀ + P_k S P_k + R₁ = 0`.
pub fn solve_are<T: Real>(model: &SignalModel<T>) -> Result<ArePoint<T>> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidArgument(
            "the algebraic Riccati equation needs a time-invariant model".into(),
        ));
    }
    let n = model.state_dim();
    let a = model.a_at(T::zero())?;
    let s = model.s_at(T::zero())?;
    let r1 = model.r1_cov().as_matrix().clone();
    let coeffs = Coeffs {
        a: a.clone(),
        s: s.clone(),
    };

    let seed = match bass_seed(&a, &s) {
        Some((p0, shift)) => Some((p0, NewtonSeed::Bass { shift })),
        None => pole_shift_seed(&a, &s)?.map(|gamma| {
            (
                Matrix::identity(n).scale(gamma),
                NewtonSeed::PoleShift { gamma },
            )
        }),
    };
    let (mut p, seed) = match seed {
        Some(seeded) => seeded,
        None => {
            let sa = spectral_abscissa(&a)?.abs().max(T::lit(0.5));
            let chunk = T::lit(10.0) / sa;
            let mut x = model.r1_cov().clone();
            let mut elapsed = T::zero();
            let mut found = None;
            for _ in 0..20 {
                x = integrate_dre(model, T::zero(), chunk, &x, None)?
                    .final_value()
                    .clone();
                elapsed += chunk;
                if spectral_abscissa(&(&a - &x.as_matrix().matmul(&s)))? < T::zero() {
                    found = Some(x.as_matrix().clone());
                    break;
                }
            }
            match found {
                Some(p0) => (p0, NewtonSeed::DreBurnIn { time: elapsed }),
                None => {
                    return Err(Error::NoConvergence(
                        "stabilizing seed construction for the Newton–Kleinman iteration".into(),
                    ))
                }
            }
        }
    };

    let mut iterations = 0;
    let mut residual = drift_raw(&coeffs, &r1, &p).frobenius_norm();
    let mut prev_residual = T::infinity();
    while iterations < NEWTON_MAX_ITER {
        let tol = are_tolerance(norm2(&p));
        // Keep iterating while the residual still drops noticeably, even past the tolerance.
        if residual <= tol && !(residual < prev_residual * T::lit(0.5)) {
            break;
        }
        let f = &a - &p.matmul(&s);
        let q = &p.matmul(&s).matmul(&p) + &r1;
        let next = lyapunov(&f, &q)?.sym_part();
        if !next.is_finite() {
            return Err(Error::NonFinite("Newton–Kleinman iterate".into()));
        }
        p = next;
        iterations += 1;
        prev_residual = residual;
        residual = drift_raw(&coeffs, &r1, &p).frobenius_norm();
        if residual <= tol && residual >= prev_residual * T::lit(0.5) {
            break;
        }
    }
    let p_norm = norm2(&p);
    if residual > are_tolerance(p_norm) {
        return Err(Error::NoConvergence(format!(
            "Newton–Kleinman iteration (residual {:e} after {iterations} iterations)",
            residual.as_f64()
        )));
    }
    let closed_loop_abscissa = spectral_abscissa(&(&a - &p.matmul(&s)))?;
    if !(closed_loop_abscissa < T::zero()) {
        return Err(Error::NoConvergence(format!(
            "ARE solution is not stabilizing (ς(A − PS) = {})",
            closed_loop_abscissa
        )));
    }
    let p = SpdMat::certify(SymMat::from_sym_part(p))?;
    Ok(ArePoint {
        p,
        residual_norm: residual,
        closed_loop_abscissa,
        iterations,
        seed,
    })
}

/// Closed-form comparison flows.
#[derive(Clone, Debug)]
pub struct AuxFlows<T> {
    /// `φ^c_t(Q) = 𝓔_t Q 𝓔_tᵀ + 𝒞_t`
    pub phi_c: SymMat<T>,
    /// `φ^o_t(Q) = 𝓔_t (Q⁻¹ + 𝒪̄_t)⁻¹ 𝓔_tᵀ`
    pub phi_o: SymMat<T>,
    /// `φ^{−o}_t(Q⁻¹) = (𝓔_t Q⁻¹ 𝓔_tᵀ + 𝒞_t)⁻¹`
    pub phi_minus_o: SymMat<T>,
}

pub fn aux_flows<T: Real>(model: &SignalModel<T>, t: T, q: &SpdMat<T>) -> Result<AuxFlows<T>> {
    if !(t >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "auxiliary flows need t ≥ 0, got {t}"
        )));
    }
    let g = transition_gramians(model, t)?;
    let e = &g.transition;
    let q_inv = q.inverse()?;
    let phi_c = q.sym().congruence(e).add(&g.controllability);
    let inner = inverse(&(&q_inv + g.observability_bar.as_matrix()))?;
    let phi_o = SymMat::from_sym_part(e.congruence(&inner));
    let phi_minus_o = SymMat::from_sym_part(e.congruence(&q_inv))
        .add(&g.controllability)
        .inverse()?;
    Ok(AuxFlows {
        phi_c,
        phi_o,
        phi_minus_o,
    })
}

/// Bucy's uniform bounds `Λ_min ≤ φ_t(Q) ≤ Λ_max`, valid for `t ≥ υ`.
#[derive(Clone, Debug, Serialize)]
pub struct BucyBounds<T> {
    /// `(𝒪_υ(𝒞) + 𝒞_υ⁻¹)⁻¹`
    pub lambda_min_bound: SpdMat<T>,
    /// `𝒪_υ⁻¹ + 𝒞_υ(𝒪)`
    pub lambda_max_bound: SymMat<T>,
    pub upsilon: T,
}

impl<T: Real> BucyBounds<T> {
    /// Whether `Λ_min − tol ≤ X ≤ Λ_max + tol` in the Loewner order.
    pub fn contains(&self, x: &SymMat<T>, tol: T) -> bool {
        loewner_leq(self.lambda_min_bound.sym(), x, tol)
            && loewner_leq(x, &self.lambda_max_bound, tol)
    }
}

/// Bounds from the Gramians on the window `[0, υ]`; for time-invariant models these hold on
/// every window of length `υ`.
pub fn bucy_bounds<T: Real>(model: &SignalModel<T>, upsilon: T) -> Result<BucyBounds<T>> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidArgument(
            "matrix Bucy bounds need a time-invariant model; use the scalar spectrum interval of the Gramian report".into(),
        ));
    }
    let g = gramian_set(model, upsilon)?;
    let c_inv = g.controllability.inverse()?;
    let o_inv = g.observability.inverse()?;
    let lower_inv = g.o_of_c.as_matrix() + &c_inv;
    let lambda_min_bound =
        SpdMat::certify_definite(SymMat::new(&inverse(&lower_inv)?)?, "Λ_min bound")?;
    let lambda_max_bound = SymMat::new(&(&o_inv + g.c_of_o.as_matrix()))?;
    Ok(BucyBounds {
        lambda_min_bound,
        lambda_max_bound,
        upsilon,
    })
}

/// Frobenius residuals of `Ricc(Q₁) − Ricc(Q₂)` against its three polarized forms.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PolarizationResiduals<T> {
    pub residuals: [T; 3],
    /// `1 + ‖Ricc(Q₁)‖_F + ‖Ricc(Q₂)‖_F`, the size of the terms being compared.
    pub scale: T,
}

impl<T: Real> PolarizationResiduals<T> {
    pub fn max_relative(&self) -> T {
        self.residuals.iter().copied().fold(T::zero(), T::max) / self.scale
    }
}

pub fn verify_polarization<T: Real>(
    model: &SignalModel<T>,
    t: T,
    q1: &SymMat<T>,
    q2: &SymMat<T>,
) -> Result<PolarizationResiduals<T>> {
    let a = model.a_at(t)?;
    let s = model.s_at(t)?;
    let r1 = ricc_drift(model, t, q1)?;
    let r2 = ricc_drift(model, t, q2)?;
    let lhs = r1.as_matrix() - r2.as_matrix();
    let (q1, q2) = (q1.as_matrix(), q2.as_matrix());
    let d = q1 - q2;
    let f1 = &a - &q1.matmul(&s);
    let f2 = &a - &q2.matmul(&s);
    let fm = &a - &(q1 + q2).scale(T::lit(0.5)).matmul(&s);
    let form1 = f1.matmul(&d) + d.matmul(&f2.transpose());
    let form2 = fm.matmul(&d) + d.matmul(&fm.transpose());
    let form3 = f2.matmul(&d) + d.matmul(&f2.transpose()) - d.matmul(&s).matmul(&d);
    let res = |f: &Matrix<T>| (&lhs - f).frobenius_norm();
    Ok(PolarizationResiduals {
        residuals: [res(&form1), res(&form2), res(&form3)],
        scale: T::one() + r1.as_matrix().frobenius_norm() + r2.as_matrix().frobenius_norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m0() -> SignalModel<f64> {
        SignalModel::scalar(0.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn spd(x: f64) -> SpdMat<f64> {
        SpdMat::certify(SymMat::scalar(x)).unwrap()
    }

    #[test]
    fn drift_examples() {
        let m = m0();
        for (q, want) in [(1.0, 0.0), (0.0, 1.0), (2.0, -3.0)] {
            let d = ricc_drift(&m, 0.0, &SymMat::scalar(q)).unwrap();
            assert_eq!(d.as_matrix()[(0, 0)], want);
        }
    }

    #[test]
    fn m0_tanh_closed_form() {
        let traj = integrate_dre(&m0(), 0.0, 1.0, &spd(0.0), None).unwrap();
        assert!((traj.final_value().as_matrix()[(0, 0)] - 1f64.tanh()).abs() < 1e-8);
        // dense output between nodes
        let t: f64 = 0.123_456;
        let q = 0.5;
        let traj = integrate_dre(&m0(), 0.0, 1.0, &spd(q), None).unwrap();
        let exact = (q + t.tanh()) / (1.0 + q * t.tanh());
        assert!((traj.eval(t).unwrap()[(0, 0)] - exact).abs() < 1e-9);
    }

    #[test]
    fn initial_node_is_exact() {
        let q = spd(0.3);
        let traj = integrate_dre(&m0(), 2.0, 3.0, &q, None).unwrap();
        assert_eq!(traj.initial().as_matrix(), q.as_matrix());
        assert_eq!(traj.start(), 2.0);
        assert!(traj.eval(1.9).is_err());
    }

    #[test]
    fn unobserved_lyapunov_case() {
        let m = SignalModel::scalar(0.0, 0.0, 1.0, 1.0).unwrap();
        let traj = integrate_dre(&m, 0.0, 4.0, &spd(2.0), None).unwrap();
        assert!((traj.final_value().as_matrix()[(0, 0)] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn stiff_initial_condition() {
        let traj = integrate_dre(&m0(), 0.0, 1.0, &spd(1e3), None).unwrap();
        let exact = (1e3 + 1f64.tanh()) / (1.0 + 1e3 * 1f64.tanh());
        assert!((traj.final_value().as_matrix()[(0, 0)] - exact).abs() < 1e-8);
        assert!(traj.rk4_steps() > 100);
        assert_eq!(traj.rk4_steps() + 1, traj.grid().len());
        for t in linspace(0.0f64, 0.05, 501) {
            let th = t.tanh();
            let exact = (1e3 + th) / (1.0 + 1e3 * th);
            assert!(
                (traj.eval(t).unwrap()[(0, 0)] - exact).abs() < 1e-6 * exact,
                "t = {t}"
            );
        }
    }

    #[test]
    fn are_examples() {
        let p = solve_are(&m0()).unwrap();
        assert!((p.p.as_matrix()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((p.closed_loop_abscissa + 1.0).abs() < 1e-12);

        let m = SignalModel::scalar(1.0, 1.0, 1.0, 1.0).unwrap();
        let p = solve_are(&m).unwrap();
        assert!((p.p.as_matrix()[(0, 0)] - (1.0 + 2f64.sqrt())).abs() < 1e-12);

        let m = SignalModel::<f64>::time_invariant(
            Matrix::zeros(2, 2),
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::identity(2),
        )
        .unwrap();
        let p = solve_are(&m).unwrap();
        assert!((p.p.as_matrix() - &Matrix::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn are_with_partial_observation() {
        // double integrator observed through its position only
        let a = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let c = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let m =
            SignalModel::time_invariant(a, c, Matrix::identity(2), Matrix::identity(1)).unwrap();
        let p = solve_are(&m).unwrap();
        let drift = ricc_drift(&m, 0.0, p.p.sym()).unwrap();
        assert!(drift.as_matrix().frobenius_norm() <= are_tolerance(p.p.sym().norm2()));
        assert!(p.closed_loop_abscissa < 0.0);
    }

    #[test]
    fn aux_flow_examples() {
        let m = m0();
        for t in [0.0, 0.5, 2.0] {
            let f1 = aux_flows(&m, t, &spd(1.0)).unwrap();
            assert!((f1.phi_o.as_matrix()[(0, 0)] - 1.0 / (1.0 + t)).abs() < 1e-12);
            assert!((f1.phi_minus_o.as_matrix()[(0, 0)] - 1.0 / (1.0 + t)).abs() < 1e-12);
            let f2 = aux_flows(&m, t, &spd(2.0)).unwrap();
            assert!((f2.phi_c.as_matrix()[(0, 0)] - (2.0 + t)).abs() < 1e-12);
        }
    }

    #[test]
    fn m0_bucy_bounds() {
        let b = bucy_bounds(&m0(), 1.0).unwrap();
        assert!((b.lambda_min_bound.as_matrix()[(0, 0)] - 0.75).abs() < 1e-12);
        assert!((b.lambda_max_bound.as_matrix()[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
        assert!(b.contains(&SymMat::scalar(1.0), 0.0));
    }

    #[test]
    fn polarization_scalar() {
        let r =
            verify_polarization(&m0(), 0.0, &SymMat::scalar(2.0), &SymMat::scalar(1.0)).unwrap();
        assert!(r.residuals.iter().all(|&x| x == 0.0));
        let same =
            verify_polarization(&m0(), 0.0, &SymMat::scalar(2.0), &SymMat::scalar(2.0)).unwrap();
        assert_eq!(same.residuals, [0.0; 3]);
    }

    #[test]
    fn generic_over_f32() {
        let m = SignalModel::<f32>::scalar(0.0, 1.0, 1.0, 1.0).unwrap();
        let q = SpdMat::certify(SymMat::scalar(0.0f32)).unwrap();
        let traj = integrate_dre(&m, 0.0, 1.0, &q, None).unwrap();
        assert!((traj.final_value().as_matrix()[(0, 0)] - 1f32.tanh()).abs() < 1e-5);
        let p = solve_are(&m).unwrap();
        assert!((p.p.as_matrix()[(0, 0)] - 1.0).abs() < 1e-5);
    }
}
