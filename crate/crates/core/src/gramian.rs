//! Controllability/observability Gramians, the derived Gramians `𝒪_t(𝒞)`, `𝒞_t(𝒪)`, the
//! uniformity constants `ϖ±` and the Kalman rank tests.
//!
//! Integrals are evaluated by composite Simpson quadrature on a uniform grid, with one
//! Richardson step against the half-resolution Simpson sum on the same nodes. Transition
//! matrices are shared between grid nodes through the flow property
//! `𝓔_{r,t} = 𝓔_{r',t} 𝓔_{r,r'}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{linspace, propagate};
use crate::linalg::{inverse, mat_exp, norm2, rank, Matrix, SpdMat, SymMat};
use crate::model::{FlowBounds, SignalModel};
use crate::scalar::Real;

/// RK4 sub-steps per quadrature interval for time-varying drifts.
const SUBSTEPS: usize = 4;

/// Number of quadrature intervals on a span: `max(64, ⌈64·span·(1 + sup‖A‖₂)⌉)`, rounded up to a
/// multiple of 4.
pub fn quadrature_intervals<T: Real>(span: T, sup_a: T) -> usize {
    let n = (T::lit(64.0) * span * (T::one() + sup_a))
        .ceil()
        .to_usize()
        .unwrap_or(64)
        .max(64);
    n.div_ceil(4) * 4
}

/// Simpson on `n` intervals, corrected by one Richardson step against Simpson on `n/2`.
pub(crate) fn simpson_richardson<T: Real>(values: &[Matrix<T>], h: T) -> Matrix<T> {
    let n = values.len() - 1;
    debug_assert!(n.is_multiple_of(4) && n > 0);
    let (rows, cols) = values[0].shape();
    let mut fine = Matrix::zeros(rows, cols);
    let mut coarse = Matrix::zeros(rows, cols);
    for (k, v) in values.iter().enumerate() {
        let wf = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        fine += &v.scale(T::lit(wf));
        if k % 2 == 0 {
            let j = k / 2;
            let wc = if j == 0 || k == n {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            coarse += &v.scale(T::lit(wc));
        }
    }
    let fine = fine.scale(h / T::lit(3.0));
    let coarse = coarse.scale(T::lit(2.0) * h / T::lit(3.0));
    let corr = (&fine - &coarse).scale(T::one() / T::lit(15.0));
    fine + corr
}

/// Uniform grid on `[s, t]` with the per-interval transitions of `A`.
struct Grid<T> {
    nodes: Vec<T>,
    h: T,
    /// `𝓔_{r_k, r_{k+1}}`
    step: Vec<Matrix<T>>,
    step_inv: Vec<Matrix<T>>,
    /// `𝓔_{m_k, r_{k+1}}` with `m_k` the interval midpoint.
    half: Vec<Matrix<T>>,
    half_inv: Vec<Matrix<T>>,
    s_nodes: Vec<Matrix<T>>,
    s_mid: Vec<Matrix<T>>,
}

impl<T: Real> Grid<T> {
    fn new(model: &SignalModel<T>, s: T, t: T) -> Result<Self> {
        if !(s <= t) {
            return Err(Error::InvalidArgument(format!(
                "Gramian interval needs s ≤ t (s = {s}, t = {t})"
            )));
        }
        let dim = model.state_dim();
        let sup_a = model.a_flow().sup_norm(s, t, 17)?;
        let n = quadrature_intervals(t - s, sup_a);
        let nodes = linspace(s, t, n + 1);
        let h = (t - s) / T::from_usize_lossy(n);
        let half_h = h * T::lit(0.5);
        let (step, step_inv, half, half_inv) = if model.is_time_invariant() {
            let a = model.a_at(T::zero())?;
            let e = mat_exp(&a, h)?;
            let ei = mat_exp(&a, -h)?;
            let eh = mat_exp(&a, half_h)?;
            let ehi = mat_exp(&a, -half_h)?;
            (vec![e; n], vec![ei; n], vec![eh; n], vec![ehi; n])
        } else {
            let mut step = Vec::with_capacity(n);
            let mut half = Vec::with_capacity(n);
            for k in 0..n {
                let (r0, r1) = (nodes[k], nodes[k + 1]);
                let mid = r0 + half_h;
                let gen = |u: T| model.a_at(u);
                step.push(propagate(gen, dim, r0, r1, SUBSTEPS)?);
                half.push(propagate(gen, dim, mid, r1, SUBSTEPS / 2)?);
            }
            let step_inv = step.iter().map(inverse).collect::<Result<Vec<_>>>()?;
            let half_inv = half.iter().map(inverse).collect::<Result<Vec<_>>>()?;
            (step, step_inv, half, half_inv)
        };
        let s_nodes = nodes
            .iter()
            .map(|&r| model.s_at(r))
            .collect::<Result<Vec<_>>>()?;
        let s_mid = nodes[..n]
            .iter()
            .map(|&r| model.s_at(r + half_h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nodes,
            h,
            step,
            step_inv,
            half,
            half_inv,
            s_nodes,
            s_mid,
        })
    }

    fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `𝓔_{r_k, t}` for every node, `t` the right end.
    fn to_end(&self) -> Vec<Matrix<T>> {
        let n = self.n();
        let mut out = vec![Matrix::identity(self.step[0].rows()); n + 1];
        for k in (0..n).rev() {
            out[k] = &out[k + 1] * &self.step[k];
        }
        out
    }

    /// `𝓔_{r_k, t}⁻¹`.
    fn to_end_inv(&self) -> Vec<Matrix<T>> {
        let n = self.n();
        let mut out = vec![Matrix::identity(self.step[0].rows()); n + 1];
        for k in (0..n).rev() {
            out[k] = &self.step_inv[k] * &out[k + 1];
        }
        out
    }

    /// `𝓔_{s, r_k}` for every node, `s` the left end.
    fn transitions_from_start(&self) -> Vec<Matrix<T>> {
        let n = self.n();
        let mut out = vec![Matrix::identity(self.step[0].rows()); n + 1];
        for k in 0..n {
            out[k + 1] = &self.step[k] * &out[k];
        }
        out
    }

    /// `𝒞_{s, r_k}` at every node.
    fn cumulative_controllability(&self, r1: &Matrix<T>) -> Vec<Matrix<T>> {
        let n = self.n();
        let mut out = vec![Matrix::zeros(r1.rows(), r1.rows()); n + 1];
        let w = self.h / T::lit(6.0);
        for k in 0..n {
            let local = (self.step[k].congruence(r1)
                + self.half[k].congruence(r1).scale(T::lit(4.0))
                + r1.clone())
            .scale(w);
            out[k + 1] = (self.step[k].congruence(&out[k]) + local).sym_part();
        }
        out
    }

    /// `𝒪_{s, r_k}` at every node.
    fn cumulative_observability(&self) -> Vec<Matrix<T>> {
        let n = self.n();
        let dim = self.s_nodes[0].rows();
        let mut out = vec![Matrix::zeros(dim, dim); n + 1];
        let w = self.h / T::lit(6.0);
        for k in 0..n {
            let ei_t = self.step_inv[k].transpose();
            let hi_t = self.half_inv[k].transpose();
            let local = (ei_t.congruence(&self.s_nodes[k])
                + hi_t.congruence(&self.s_mid[k]).scale(T::lit(4.0))
                + self.s_nodes[k + 1].clone())
            .scale(w);
            out[k + 1] = (ei_t.congruence(&out[k]) + local).sym_part();
        }
        out
    }
}

fn controllability_integral<T: Real>(grid: &Grid<T>, r1: &Matrix<T>) -> Matrix<T> {
    let vals: Vec<_> = grid.to_end().iter().map(|e| e.congruence(r1)).collect();
    simpson_richardson(&vals, grid.h)
}

fn observability_integral<T: Real>(grid: &Grid<T>) -> Matrix<T> {
    let vals: Vec<_> = grid
        .to_end_inv()
        .iter()
        .zip(&grid.s_nodes)
        .map(|(ei, s)| ei.transpose().congruence(s))
        .collect();
    simpson_richardson(&vals, grid.h)
}

/// `𝒞_{s,t} = ∫ₛᵗ 𝓔_{r,t}(A) R₁ 𝓔_{r,t}(A)ᵀ dr`.
pub fn controllability_gramian<T: Real>(model: &SignalModel<T>, s: T, t: T) -> Result<SpdMat<T>> {
    if s == t {
        return SpdMat::certify(SymMat::zeros(model.state_dim()));
    }
    let grid = Grid::new(model, s, t)?;
    let c = controllability_integral(&grid, model.r1_cov().as_matrix());
    finite_psd(c, "controllability Gramian")
}

/// `𝒪_{s,t} = ∫ₛᵗ 𝓔_{r,t}(A)⁻ᵀ S_r 𝓔_{r,t}(A)⁻¹ dr`.
pub fn observability_gramian<T: Real>(model: &SignalModel<T>, s: T, t: T) -> Result<SpdMat<T>> {
    if s == t {
        return SpdMat::certify(SymMat::zeros(model.state_dim()));
    }
    let grid = Grid::new(model, s, t)?;
    finite_psd(observability_integral(&grid), "observability Gramian")
}

fn finite_psd<T: Real>(m: Matrix<T>, what: &str) -> Result<SpdMat<T>> {
    if !m.is_finite() {
        return Err(Error::NonFinite(what.into()));
    }
    SpdMat::certify(SymMat::new(&m)?)
}

/// `𝓔_t(A)`, `𝒞_t` and `𝒪̄_t = ∫₀ᵗ 𝓔_s(A)ᵀ S_s 𝓔_s(A) ds`, with no invertibility requirement.
#[derive(Clone, Debug)]
pub struct TransitionGramians<T> {
    pub transition: Matrix<T>,
    pub controllability: SymMat<T>,
    pub observability_bar: SymMat<T>,
}

pub fn transition_gramians<T: Real>(model: &SignalModel<T>, t: T) -> Result<TransitionGramians<T>> {
    let n = model.state_dim();
    if t == T::zero() {
        return Ok(TransitionGramians {
            transition: Matrix::identity(n),
            controllability: SymMat::zeros(n),
            observability_bar: SymMat::zeros(n),
        });
    }
    let grid = Grid::new(model, T::zero(), t)?;
    let c = controllability_integral(&grid, model.r1_cov().as_matrix());
    let transition = grid.transitions_from_start().pop().unwrap();
    let o = observability_integral(&grid);
    let o_bar = transition.transpose().congruence(&o);
    if !c.is_finite() || !o_bar.is_finite() {
        return Err(Error::NonFinite(format!("Gramians on [0, {t}]")));
    }
    Ok(TransitionGramians {
        transition,
        controllability: SymMat::from_sym_part(c),
        observability_bar: SymMat::from_sym_part(o_bar),
    })
}

/// All Gramian quantities on `[0, t]` computed from one quadrature grid.
#[derive(Clone, Debug)]
pub struct GramianSet<T> {
    pub t: T,
    /// `𝓔_t(A) = 𝓔_{0,t}(A)`
    pub transition: Matrix<T>,
    pub controllability: SpdMat<T>,
    pub observability: SpdMat<T>,
    /// `𝒪̄_t = 𝓔_t(A)ᵀ 𝒪_t 𝓔_t(A) = ∫₀ᵗ 𝓔_s(A)ᵀ S_s 𝓔_s(A) ds`
    pub observability_bar: SymMat<T>,
    pub o_of_c: SymMat<T>,
    pub c_of_o: SymMat<T>,
}

/// `𝒪_t(𝒞)` and `𝒞_t(𝒪)`.
#[derive(Clone, Debug)]
pub struct DerivedGramians<T> {
    pub o_of_c: SymMat<T>,
    pub c_of_o: SymMat<T>,
}

pub fn gramian_set<T: Real>(model: &SignalModel<T>, t: T) -> Result<GramianSet<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "derived Gramians need t > 0, got {t}"
        )));
    }
    let grid = Grid::new(model, T::zero(), t)?;
    let r1 = model.r1_cov().as_matrix();
    let to_end = grid.to_end();
    let to_end_inv = grid.to_end_inv();

    let c_t = finite_psd(
        controllability_integral(&grid, r1),
        "controllability Gramian",
    )?;
    let o_t = finite_psd(observability_integral(&grid), "observability Gramian")?;
    let c_inv = c_t
        .inverse()
        .map_err(|_| Error::Singular(format!("controllability Gramian 𝒞_t at t = {t}")))?;
    let o_inv = o_t
        .inverse()
        .map_err(|_| Error::Singular(format!("observability Gramian 𝒪_t at t = {t}")))?;

    let c_cum = grid.cumulative_controllability(r1);
    let o_cum = grid.cumulative_observability();

    let inner_c: Vec<_> = (0..=grid.n())
        .map(|k| {
            let cs = &c_cum[k];
            to_end[k].congruence(&cs.matmul(&grid.s_nodes[k]).matmul(cs))
        })
        .collect();
    let inner_o: Vec<_> = (0..=grid.n())
        .map(|k| {
            let os = &o_cum[k];
            to_end_inv[k]
                .transpose()
                .congruence(&os.matmul(r1).matmul(os))
        })
        .collect();
    let o_of_c = c_inv.congruence(&simpson_richardson(&inner_c, grid.h));
    let c_of_o = o_inv.congruence(&simpson_richardson(&inner_o, grid.h));

    let transition = grid.transitions_from_start().pop().unwrap();
    let observability_bar =
        SymMat::from_sym_part(transition.transpose().congruence(o_t.as_matrix()));
    Ok(GramianSet {
        t,
        transition,
        controllability: c_t,
        observability: o_t,
        observability_bar,
        o_of_c: SymMat::from_sym_part(o_of_c),
        c_of_o: SymMat::from_sym_part(c_of_o),
    })
}

/// `𝒪_t(𝒞) = 𝒞_t⁻¹[∫₀ᵗ 𝓔_{s,t} 𝒞_s S_s 𝒞_s 𝓔_{s,t}ᵀ ds]𝒞_t⁻¹` and
/// `𝒞_t(𝒪) = 𝒪_t⁻¹[∫₀ᵗ 𝓔_{s,t}⁻ᵀ 𝒪_s R₁ 𝒪_s 𝓔_{s,t}⁻¹ ds]𝒪_t⁻¹`.
pub fn derived_gramians<T: Real>(model: &SignalModel<T>, t: T) -> Result<DerivedGramians<T>> {
    let g = gramian_set(model, t)?;
    Ok(DerivedGramians {
        o_of_c: g.o_of_c,
        c_of_o: g.c_of_o,
    })
}

/// Uniform two-sided Gramian bounds over a time grid.
#[derive(Clone, Debug, Serialize)]
pub struct GramianReport<T> {
    pub upsilon: T,
    pub horizon: T,
    pub varpi_c_minus: T,
    pub varpi_c_plus: T,
    pub varpi_o_minus: T,
    pub varpi_o_plus: T,
    /// bounds of `𝒞_υ(𝒪)`
    pub varpi_c_o_minus: T,
    pub varpi_c_o_plus: T,
    /// bounds of `𝒪_υ(𝒞)`
    pub varpi_o_c_minus: T,
    pub varpi_o_c_plus: T,
    pub flow_bounds: FlowBounds<T>,
    pub grid: Vec<T>,
    pub certifiable: bool,
    pub issues: Vec<String>,
}

impl<T: Real> GramianReport<T> {
    /// `ϖ₊^o(𝒞) + 1/ϖ₋^c`, the reciprocal of the lower spectral bound on `φ_t(Q)`.
    pub fn lower_bound_inv(&self) -> T {
        self.varpi_o_c_plus + T::one() / self.varpi_c_minus
    }

    /// `ϖ₊^c(𝒪) + 1/ϖ₋^o`, the upper spectral bound on `φ_t(Q)`.
    pub fn upper_bound(&self) -> T {
        self.varpi_c_o_plus + T::one() / self.varpi_o_minus
    }

    /// `[(ϖ₊^o(𝒞)+1/ϖ₋^c)⁻¹, ϖ₊^c(𝒪)+1/ϖ₋^o]`.
    pub fn spectrum_interval(&self) -> (T, T) {
        (T::one() / self.lower_bound_inv(), self.upper_bound())
    }
}

fn positive_floor<T: Real>(plus: T) -> T {
    T::epsilon() * T::lit(100.0) * plus.max(T::one())
}

/// Scans `𝒞_{t,t+υ}`, `𝒪_{t,t+υ}` over `grid_n` points of `[0, horizon − υ]` and evaluates the
/// derived Gramians at `υ`. Non-certifiability is recorded in the report, not raised.
pub fn uniformity_constants<T: Real>(
    model: &SignalModel<T>,
    upsilon: T,
    horizon: T,
    grid_n: usize,
) -> Result<GramianReport<T>> {
    if !(upsilon > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "υ must be positive, got {upsilon}"
        )));
    }
    if !(horizon >= upsilon) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} shorter than υ = {upsilon}"
        )));
    }
    let grid = linspace(T::zero(), horizon - upsilon, grid_n.max(1));
    let windows: Vec<(T, T, T, T)> = grid
        .par_iter()
        .map(|&t| {
            let c = controllability_gramian(model, t, t + upsilon)?
                .sym()
                .eigen()?;
            let o = observability_gramian(model, t, t + upsilon)?
                .sym()
                .eigen()?;
            Ok((c.min(), c.max(), o.min(), o.max()))
        })
        .collect::<Result<Vec<_>>>()?;
    let fold = |f: fn(&(T, T, T, T)) -> T, init: T, pick: fn(T, T) -> T| {
        windows.iter().map(f).fold(init, pick)
    };
    let varpi_c_minus = fold(|w| w.0, T::infinity(), T::min);
    let varpi_c_plus = fold(|w| w.1, T::neg_infinity(), T::max);
    let varpi_o_minus = fold(|w| w.2, T::infinity(), T::min);
    let varpi_o_plus = fold(|w| w.3, T::neg_infinity(), T::max);

    let mut issues = Vec::new();
    if varpi_c_minus <= positive_floor(varpi_c_plus) {
        issues.push(format!(
            "controllability Gramian degenerate (ϖ₋^c = {varpi_c_minus:e})"
        ));
    }
    if varpi_o_minus <= positive_floor(varpi_o_plus) {
        issues.push(format!(
            "observability Gramian degenerate (ϖ₋^o = {varpi_o_minus:e})"
        ));
    }

    let nan = T::nan();
    let (mut co_minus, mut co_plus, mut oc_minus, mut oc_plus) = (nan, nan, nan, nan);
    if issues.is_empty() {
        match derived_gramians(model, upsilon) {
            Ok(d) => {
                let oc = d.o_of_c.eigen()?;
                let co = d.c_of_o.eigen()?;
                (oc_minus, oc_plus) = (oc.min(), oc.max());
                (co_minus, co_plus) = (co.min(), co.max());
                if oc_minus <= positive_floor(oc_plus) {
                    issues.push(format!("𝒪_υ(𝒞) degenerate (min eigenvalue {oc_minus:e})"));
                }
                if co_minus <= positive_floor(co_plus) {
                    issues.push(format!("𝒞_υ(𝒪) degenerate (min eigenvalue {co_minus:e})"));
                }
            }
            Err(e) => issues.push(format!("derived Gramians unavailable: {e}")),
        }
    }
    let flow_bounds = model.flow_bounds(horizon, grid_n)?;
    Ok(GramianReport {
        upsilon,
        horizon,
        varpi_c_minus,
        varpi_c_plus,
        varpi_o_minus,
        varpi_o_plus,
        varpi_c_o_minus: co_minus,
        varpi_c_o_plus: co_plus,
        varpi_o_c_minus: oc_minus,
        varpi_o_c_plus: oc_plus,
        flow_bounds,
        grid,
        certifiable: issues.is_empty(),
        issues,
    })
}

/// `(e^{2aυ} − 1)/(2a)`, continuous at `a = 0`.
pub fn scalar_controllability_factor<T: Real>(a: T, upsilon: T) -> T {
    let x = T::lit(2.0) * a * upsilon;
    if x.abs() < T::lit(1e-6) {
        // υ(1 + x/2 + x²/6 + x³/24)
        upsilon * (T::one() + x / T::lit(2.0) + x * x / T::lit(6.0) + x * x * x / T::lit(24.0))
    } else {
        x.exp_m1() / (T::lit(2.0) * a)
    }
}

/// `(1 − e^{−2aυ})/(2a)`, continuous at `a = 0`.
pub fn scalar_observability_factor<T: Real>(a: T, upsilon: T) -> T {
    scalar_controllability_factor(-a, upsilon)
}

/// Closed-form `ϖ` choices for a time-invariant model with diagonalizable `A` and real spectrum:
/// `(ϖ₋^c, ϖ₊^c, ϖ₋^o, ϖ₊^o)`. `None` when `A` has complex eigenvalues; callers then use the
/// eigenvalue bounds of the computed Gramians.
pub fn diagonalizable_varpi<T: Real>(
    model: &SignalModel<T>,
    upsilon: T,
) -> Result<Option<(T, T, T, T)>> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidArgument(
            "closed-form ϖ needs a time-invariant model".into(),
        ));
    }
    let a = model.a_at(T::zero())?;
    let spec = crate::linalg::eigenvalues(&a)?;
    let scale = norm2(&a).max(T::one());
    if spec.iter().any(|z| z.im.abs() > T::lit(1e-10) * scale) {
        return Ok(None);
    }
    let fc: Vec<T> = spec
        .iter()
        .map(|z| scalar_controllability_factor(z.re, upsilon))
        .collect();
    let fo: Vec<T> = spec
        .iter()
        .map(|z| scalar_observability_factor(z.re, upsilon))
        .collect();
    let min = |v: &[T]| v.iter().copied().fold(T::infinity(), T::min);
    let max = |v: &[T]| v.iter().copied().fold(T::neg_infinity(), T::max);
    let r1 = model.r1_cov().sym().eigen()?;
    let s = SymMat::new(&model.s_at(T::zero())?)?.eigen()?;
    Ok(Some((
        r1.min() * min(&fc),
        r1.max() * max(&fc),
        s.min() * min(&fo),
        s.max() * max(&fo),
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RankConditions {
    pub controllable: bool,
    pub observable: bool,
}

/// Kalman rank tests on `[R₁^{1/2}, AR₁^{1/2}, …]` and `[C; CA; …]`.
pub fn rank_conditions<T: Real>(model: &SignalModel<T>) -> Result<RankConditions> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidArgument(
            "rank conditions apply to time-invariant models only".into(),
        ));
    }
    let n = model.state_dim();
    let a = model.a_at(T::zero())?;
    let c = model.c_at(T::zero())?;
    let mut ctrl_blocks = vec![model.r1_sqrt().clone()];
    let mut obs_blocks = vec![c];
    for k in 1..n {
        ctrl_blocks.push(&a * &ctrl_blocks[k - 1]);
        obs_blocks.push(&obs_blocks[k - 1] * &a);
    }
    let ctrl = Matrix::hstack(&ctrl_blocks)?;
    let obs = Matrix::vstack(&obs_blocks)?;
    let rel = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
    let tol = |m: &Matrix<T>| T::from_usize_lossy(n) * norm2(m) * rel;
    Ok(RankConditions {
        controllable: rank(&ctrl, tol(&ctrl))? == n,
        observable: rank(&obs, tol(&obs))? == n,
    })
}
