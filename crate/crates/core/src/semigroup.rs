//! Kalman-Bucy semigroups `E_{s,t}(Q)`, `E_{s,t}(Q₁,Q₂)`, `E_{t|s}(Q)` and the explicit
//! stability constant ledger.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gramian::GramianReport;
use crate::linalg::{log_norm, lyapunov, norm2, Matrix, SpdMat, SymMat};
use crate::model::SignalModel;
use crate::riccati::{ArePoint, RiccatiTrajectory};
use crate::scalar::Real;

/// RK4 sub-steps are sized so that `h·(1 + ‖A_u − M_u S_u‖₁) ≤ SEMIGROUP_CAP`.
const SEMIGROUP_CAP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemigroupKind {
    /// `E_{s,t}(Q)`, closed loop `A_u − φ_u(Q) S_u`.
    Single,
    /// `E_{s,t}(Q₁,Q₂)`, closed loop `A_u − ½(φ_u(Q₁)+φ_u(Q₂)) S_u`.
    Pair,
    /// `E_{t|s}(Q)`, closed loop driven by the flow started at `s`.
    Conditioned,
}

#[derive(Clone, Debug)]
pub struct SemigroupOperator<T> {
    pub kind: SemigroupKind,
    pub s: T,
    pub t: T,
    pub value: Matrix<T>,
}

impl<T: Real> SemigroupOperator<T> {
    pub fn norm2(&self) -> T {
        norm2(&self.value)
    }
}

struct ClosedLoop<'a, T> {
    first: &'a RiccatiTrajectory<T>,
    second: Option<&'a RiccatiTrajectory<T>>,
    /// `(A, S)` for time-invariant models.
    fixed: Option<(Matrix<T>, Matrix<T>)>,
}

impl<'a, T: Real> ClosedLoop<'a, T> {
    fn new(
        first: &'a RiccatiTrajectory<T>,
        second: Option<&'a RiccatiTrajectory<T>>,
    ) -> Result<Self> {
        let m = first.model();
        let fixed = if m.is_time_invariant() {
            Some((m.a_at(T::zero())?, m.s_at(T::zero())?))
        } else {
            None
        };
        Ok(Self {
            first,
            second,
            fixed,
        })
    }

    fn model(&self) -> &SignalModel<T> {
        self.first.model()
    }

    fn gain(&self, u: T) -> Result<Matrix<T>> {
        let p = self.first.eval(u)?;
        Ok(match self.second {
            Some(other) => (p + other.eval(u)?).scale(T::lit(0.5)),
            None => p,
        })
    }

    fn generator(&self, u: T) -> Result<Matrix<T>> {
        if let Some((a, s)) = &self.fixed {
            return Ok(a - &self.gain(u)?.matmul(s));
        }
        let m = self.model();
        let a = m.a_at(u)?;
        let s = m.s_at(u)?;
        Ok(a - self.gain(u)?.matmul(&s))
    }

    fn range(&self) -> (T, T) {
        let (mut lo, mut hi) = (self.first.start(), self.first.end());
        if let Some(o) = self.second {
            lo = lo.max(o.start());
            hi = hi.min(o.end());
        }
        (lo, hi)
    }

    fn check_covered(&self, s: T, t: T) -> Result<()> {
        let (lo, hi) = self.range();
        for x in [s, t] {
            if !(x >= lo && x <= hi) {
                return Err(Error::OutOfRange {
                    t: x.as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Propagates `∂_t E = G_t E`, `E_s = Id`, recording `E_{s,t}` at each of `times` (ascending).
    fn propagate(&self, s: T, times: &[T]) -> Result<Vec<Matrix<T>>> {
        let n = self.model().state_dim();
        let Some(&last) = times.last() else {
            return Ok(Vec::new());
        };
        if times.windows(2).any(|w| w[1] < w[0]) || times[0] < s {
            return Err(Error::InvalidArgument(
                "semigroup sample times must be ascending and ≥ s".into(),
            ));
        }
        self.check_covered(s, last)?;
        // Break points: the requested times, plus trajectory nodes in (s, last) when the
        // interpolant between nodes is only continuous.
        let mut breaks: Vec<T> = Vec::new();
        for traj in std::iter::once(self.first).chain(self.second) {
            if !traj.is_smooth() {
                breaks.extend(traj.grid().iter().copied().filter(|&u| u > s && u < last));
            }
        }
        breaks.extend(times.iter().copied().filter(|&u| u > s));
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();

        let mut out = Vec::with_capacity(times.len());
        let mut e = Matrix::identity(n);
        let mut u = s;
        let mut next = 0;
        while next < times.len() && times[next] == s {
            out.push(e.clone());
            next += 1;
        }
        let mut g0 = self.generator(u)?;
        for &b in &breaks {
            let h_total = b - u;
            let m = (h_total * (T::one() + g0.norm_one()) / T::lit(SEMIGROUP_CAP))
                .ceil()
                .to_usize()
                .unwrap_or(1)
                .max(1);
            let h = h_total / T::from_usize_lossy(m);
            for j in 0..m {
                let u1 = if j + 1 == m { b } else { u + h };
                let gm = self.generator(u + h * T::lit(0.5))?;
                let g1 = self.generator(u1)?;
                e = crate::flow::rk4_linear_step(&e, u1 - u, &g0, &gm, &g1);
                g0 = g1;
                u = u1;
            }
            if !e.is_finite() {
                return Err(Error::NonFinite(format!("semigroup at t = {u}")));
            }
            while next < times.len() && times[next] == b {
                out.push(e.clone());
                next += 1;
            }
        }
        Ok(out)
    }
}

/// `E_{s,t}(Q)` from one trajectory, or `E_{s,t}(Q₁,Q₂)` when a second is given.
pub fn semigroup<T: Real>(
    traj1: &RiccatiTrajectory<T>,
    traj2: Option<&RiccatiTrajectory<T>>,
    s: T,
    t: T,
) -> Result<SemigroupOperator<T>> {
    if !(s <= t) {
        return Err(Error::InvalidArgument(format!(
            "semigroup needs s ≤ t (s = {s}, t = {t})"
        )));
    }
    if let Some(o) = traj2 {
        if o.model().state_dim() != traj1.model().state_dim() {
            return Err(Error::Dimension(
                "paired trajectories have different state dimensions".into(),
            ));
        }
    }
    let cl = ClosedLoop::new(traj1, traj2)?;
    let value = cl.propagate(s, &[t])?.pop().unwrap();
    let kind = if traj2.is_some() {
        SemigroupKind::Pair
    } else {
        SemigroupKind::Single
    };
    Ok(SemigroupOperator { kind, s, t, value })
}

/// `E_{t|s}(Q)` where `s` is the start of `traj`, i.e. `traj = φ_{s,·}(Q)`.
pub fn conditioned_semigroup<T: Real>(
    traj: &RiccatiTrajectory<T>,
    t: T,
) -> Result<SemigroupOperator<T>> {
    let mut op = semigroup(traj, None, traj.start(), t)?;
    op.kind = SemigroupKind::Conditioned;
    Ok(op)
}

/// `E_{s,t}` for every `t` in `times` from a single propagation.
pub fn semigroup_path<T: Real>(
    traj1: &RiccatiTrajectory<T>,
    traj2: Option<&RiccatiTrajectory<T>>,
    s: T,
    times: &[T],
) -> Result<Vec<Matrix<T>>> {
    ClosedLoop::new(traj1, traj2)?.propagate(s, times)
}

/// Bucy's decay parameters.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BucyRates<T> {
    /// `α` in ratio form: square root of the ratio of the two spectral bounds.
    pub alpha_ratio: T,
    /// `α_safe`: square root of their product, the constant the Gronwall argument delivers.
    pub alpha_safe: T,
    pub beta: T,
}

/// `α`, `α_safe` and `β` from a certifiable Gramian report.
pub fn bucy_alpha_beta<T: Real>(
    report: &GramianReport<T>,
    model: &SignalModel<T>,
) -> Result<BucyRates<T>> {
    if !report.certifiable {
        return Err(Error::NotCertifiable(report.issues.join("; ")));
    }
    let lo_inv = report.lower_bound_inv();
    let hi = report.upper_bound();
    let r1_min = model.r1_cov().sym().min_eig();
    let inf_s = report.flow_bounds.inf_s_min_eig.max(T::zero());
    let beta = (inf_s + r1_min / (hi * hi)) / (T::lit(2.0) * lo_inv);
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::NotCertifiable(format!(
            "Bucy rate β = {beta} is not positive"
        )));
    }
    Ok(BucyRates {
        alpha_ratio: (lo_inv / hi).sqrt(),
        alpha_safe: (lo_inv * hi).sqrt(),
        beta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayRoute {
    /// `ν = −μ(A − PS)`, `κ = 1`.
    LogNorm,
    /// `ν = 1/(2λ_max(T))`, `κ = √cond(T)` with `(A−PS)ᵀT + T(A−PS) = −Id`.
    Lyapunov,
}

/// `‖e^{t(A−PS)}‖₂ ≤ κ e^{−νt}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SteadyDecay<T> {
    pub nu: T,
    pub kappa: T,
    pub route: DecayRoute,
}

pub fn closed_loop_decay<T: Real>(f: &Matrix<T>) -> Result<SteadyDecay<T>> {
    let mu = log_norm(f)?;
    if mu < T::zero() {
        return Ok(SteadyDecay {
            nu: -mu,
            kappa: T::one(),
            route: DecayRoute::LogNorm,
        });
    }
    let t = SymMat::new(&lyapunov(&f.transpose(), &Matrix::identity(f.rows()))?)?;
    let e = t.eigen()?;
    if !(e.min() > T::zero()) {
        return Err(Error::NotCertifiable(
            "closed loop is not stable; no Lyapunov certificate".into(),
        ));
    }
    Ok(SteadyDecay {
        nu: T::one() / (T::lit(2.0) * e.max()),
        kappa: (e.max() / e.min()).sqrt(),
        route: DecayRoute::Lyapunov,
    })
}

pub fn steady_decay<T: Real>(model: &SignalModel<T>, are: &ArePoint<T>) -> Result<SteadyDecay<T>> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidArgument(
            "steady decay needs a time-invariant model".into(),
        ));
    }
    let f = model.a_at(T::zero())? - are.p.as_matrix().matmul(&model.s_at(T::zero())?);
    closed_loop_decay(&f)
}

/// Every explicit constant of the time-invariant stability theory, with its inputs.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityConstants<T> {
    pub upsilon: T,
    /// `α_safe`, used in every bound below.
    pub alpha: T,
    pub alpha_ratio: T,
    pub beta: T,
    pub nu: T,
    pub kappa: T,
    pub decay_route: DecayRoute,
    pub p: SpdMat<T>,
    pub p_norm: T,
    pub a_norm: T,
    pub s_norm: T,
    pub r1_norm: T,
    pub state_dim: usize,
    /// `ϖ₊^o(𝒞) + 1/ϖ₋^c`
    pub lower_bound_inv: T,
    /// `ϖ₊^c(𝒪) + 1/ϖ₋^o`
    pub upper_bound: T,
    /// How the Gramian constants behind this ledger were sampled.
    pub derived_from: String,
}

impl<T: Real> StabilityConstants<T> {
    fn dist(&self, q: &SymMat<T>) -> T {
        norm2(&(q.as_matrix() - self.p.as_matrix()))
    }

    /// `‖φ(Q)‖₂ ≤ ‖P‖₂ + κ²‖Q − P‖₂`.
    pub fn phi_norm_bound(&self, q: &SymMat<T>) -> T {
        self.p_norm + self.kappa * self.kappa * self.dist(q)
    }

    /// `ρ(Q) = (α∨1) exp[(β + ‖A‖ + ‖φ(Q)‖‖S‖)υ]`.
    pub fn rho(&self, q: &SymMat<T>) -> T {
        self.alpha.max(T::one())
            * ((self.beta + self.a_norm + self.phi_norm_bound(q) * self.s_norm) * self.upsilon)
                .exp()
    }

    /// `ρ(Q₁,Q₂) = ρ(Q₁)ρ(Q₂)`.
    pub fn rho_pair(&self, q1: &SymMat<T>, q2: &SymMat<T>) -> T {
        self.rho(q1) * self.rho(q2)
    }

    /// `κ_φ(Q) = κ² exp{(2β)⁻¹ ‖S‖ κ² ρ(P,Q) ‖Q−P‖}`.
    pub fn kappa_phi(&self, q: &SymMat<T>) -> T {
        let k2 = self.kappa * self.kappa;
        let rho_pq = self.rho(self.p.sym()) * self.rho(q);
        k2 * (self.s_norm * k2 * rho_pq * self.dist(q) / (T::lit(2.0) * self.beta)).exp()
    }

    /// `κ_E(Q) = κ exp(κ/(2ν) · κ_φ(Q) ‖S‖ ‖Q−P‖)`.
    pub fn kappa_e(&self, q: &SymMat<T>) -> T {
        self.kappa
            * (self.kappa / (T::lit(2.0) * self.nu)
                * self.kappa_phi(q)
                * self.s_norm
                * self.dist(q))
            .exp()
    }

    /// `κ_φ(Q₁,Q₂) = κ_E(Q₁) κ_E(Q₂)`.
    pub fn kappa_phi_pair(&self, q1: &SymMat<T>, q2: &SymMat<T>) -> T {
        self.kappa_e(q1) * self.kappa_e(q2)
    }

    /// `κ_E(Q₁,Q₂) = κ_E(Q₂) + κ_E(Q₂)² κ_φ(Q₁,Q₂) ‖S‖ / (2ν)`.
    pub fn kappa_e_pair(&self, q1: &SymMat<T>, q2: &SymMat<T>) -> T {
        let k2 = self.kappa_e(q2);
        k2 + k2 * k2 * self.kappa_phi_pair(q1, q2) * self.s_norm / (T::lit(2.0) * self.nu)
    }

    /// `σ(Q) = 2√2 κ_E(Q) [(‖φ(Q)‖²‖S‖ + ‖R₁‖) r₁/ν]^{1/2}`.
    pub fn sigma(&self, q: &SymMat<T>) -> T {
        let phi = self.phi_norm_bound(q);
        let r1 = T::from_usize_lossy(self.state_dim);
        T::lit(8.0).sqrt()
            * self.kappa_e(q)
            * ((phi * phi * self.s_norm + self.r1_norm) * r1 / self.nu).sqrt()
    }

    /// `χ₀(Q₁,Q₂) = κ_E(Q₁) κ_φ(Q₁,Q₂) / ν`.
    pub fn chi0(&self, q1: &SymMat<T>, q2: &SymMat<T>) -> T {
        self.kappa_e(q1) * self.kappa_phi_pair(q1, q2) / self.nu
    }

    /// `χ₁(Q) = ‖S‖ κ_E(Q) / 2`.
    pub fn chi1(&self, q: &SymMat<T>) -> T {
        self.s_norm * self.kappa_e(q) / T::lit(2.0)
    }

    /// `χ₂(Q) = ‖S‖ σ(Q) + 2√(2 r₁ ‖S‖ ν)`.
    pub fn chi2(&self, q: &SymMat<T>) -> T {
        let r1 = T::from_usize_lossy(self.state_dim);
        self.s_norm * self.sigma(q)
            + T::lit(2.0) * (T::lit(2.0) * r1 * self.s_norm * self.nu).sqrt()
    }

    /// All constants at one pair `(Q₁, Q₂)`, for reporting.
    pub fn evaluate(&self, q1: &SymMat<T>, q2: &SymMat<T>) -> ConstantsAt<T> {
        ConstantsAt {
            rho_q1: self.rho(q1),
            rho_q2: self.rho(q2),
            kappa_phi_q1: self.kappa_phi(q1),
            kappa_e_q1: self.kappa_e(q1),
            kappa_e_q2: self.kappa_e(q2),
            kappa_phi_pair: self.kappa_phi_pair(q1, q2),
            kappa_e_pair: self.kappa_e_pair(q1, q2),
            sigma_q1: self.sigma(q1),
            chi0: self.chi0(q1, q2),
            chi1_q2: self.chi1(q2),
            chi2_q1: self.chi2(q1),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConstantsAt<T> {
    pub rho_q1: T,
    pub rho_q2: T,
    pub kappa_phi_q1: T,
    pub kappa_e_q1: T,
    pub kappa_e_q2: T,
    pub kappa_phi_pair: T,
    pub kappa_e_pair: T,
    pub sigma_q1: T,
    pub chi0: T,
    pub chi1_q2: T,
    pub chi2_q1: T,
}

/// Assembles the constant ledger of a time-invariant model.
pub fn constants_ledger<T: Real>(
    model: &SignalModel<T>,
    report: &GramianReport<T>,
    are: &ArePoint<T>,
) -> Result<StabilityConstants<T>> {
    if !model.is_time_invariant() {
        return Err(Error::InvalidArgument(
            "the constant ledger needs a time-invariant model".into(),
        ));
    }
    let rates = bucy_alpha_beta(report, model)?;
    let decay = steady_decay(model, are)?;
    let fb = report.flow_bounds;
    Ok(StabilityConstants {
        upsilon: report.upsilon,
        alpha: rates.alpha_safe,
        alpha_ratio: rates.alpha_ratio,
        beta: rates.beta,
        nu: decay.nu,
        kappa: decay.kappa,
        decay_route: decay.route,
        p: are.p.clone(),
        p_norm: are.p.sym().norm2(),
        a_norm: fb.sup_a_norm,
        s_norm: fb.sup_s_norm,
        r1_norm: model.r1_cov().sym().norm2(),
        state_dim: model.state_dim(),
        lower_bound_inv: report.lower_bound_inv(),
        upper_bound: report.upper_bound(),
        derived_from: format!(
            "Gramian scan: υ = {}, horizon = {}, {} grid points",
            report.upsilon,
            report.horizon,
            report.grid.len()
        ),
    })
}

/// Least-squares fit `log y ≈ log c − r t`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit<T> {
    pub fitted_rate: T,
    pub fitted_prefactor: T,
    pub sample_times: Vec<T>,
    /// RMS residual of the fit in log space.
    pub residual: T,
}

pub fn fit_decay<T: Real>(samples: &[(T, T)], t_min: T) -> Result<DecayFit<T>> {
    let used: Vec<(T, T)> = samples
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_min)
        .collect();
    if used.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs ≥ 8 samples with t ≥ {t_min}, got {}",
            used.len()
        )));
    }
    if let Some(&(t, y)) = used.iter().find(|&&(_, y)| !(y > T::zero())) {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs positive norms (got {y} at t = {t})"
        )));
    }
    let n = T::from_usize_lossy(used.len());
    let mt = used.iter().map(|p| p.0).sum::<T>() / n;
    let ml = used.iter().map(|p| p.1.ln()).sum::<T>() / n;
    let sxx: T = used.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: T = used.iter().map(|p| (p.0 - mt) * (p.1.ln() - ml)).sum();
    if !(sxx > T::zero()) {
        return Err(Error::InvalidArgument(
            "decay fit needs distinct sample times".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ml - slope * mt;
    let rss: T = used
        .iter()
        .map(|p| (p.1.ln() - intercept - slope * p.0).powi(2))
        .sum();
    Ok(DecayFit {
        fitted_rate: -slope,
        fitted_prefactor: intercept.exp(),
        sample_times: used.iter().map(|p| p.0).collect(),
        residual: (rss / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::linspace;
    use crate::gramian::uniformity_constants;
    use crate::riccati::{integrate_dre, solve_are};

    fn m0() -> SignalModel<f64> {
        SignalModel::scalar(0.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn spd(x: f64) -> SpdMat<f64> {
        SpdMat::certify(SymMat::scalar(x)).unwrap()
    }

    #[test]
    fn m0_semigroup_at_fixed_point() {
        let traj = integrate_dre(&m0(), 0.0, 5.0, &spd(1.0), None).unwrap();
        let e = semigroup(&traj, None, 1.0, 4.0).unwrap();
        assert!((e.value[(0, 0)] - (-3f64).exp()).abs() < 1e-10);
        assert_eq!(
            semigroup(&traj, None, 2.0, 2.0).unwrap().value,
            Matrix::identity(1)
        );
    }

    #[test]
    fn m0_semigroup_from_zero_is_sech() {
        let traj = integrate_dre(&m0(), 0.0, 3.0, &spd(0.0), None).unwrap();
        let times = linspace(0.0, 3.0, 7);
        let path = semigroup_path(&traj, None, 0.0, &times).unwrap();
        for (t, e) in times.iter().zip(&path) {
            assert!(
                (e[(0, 0)] - 1.0 / t.cosh()).abs() < 1e-8,
                "t = {t}: {} vs {}",
                e[(0, 0)],
                1.0 / t.cosh()
            );
        }
        assert!(semigroup(&traj, None, 0.0, 3.5).is_err());
    }

    #[test]
    fn pair_semigroup_with_equal_inputs() {
        let traj = integrate_dre(&m0(), 0.0, 2.0, &spd(0.3), None).unwrap();
        let single = semigroup(&traj, None, 0.5, 2.0).unwrap();
        let pair = semigroup(&traj, Some(&traj), 0.5, 2.0).unwrap();
        assert_eq!(pair.kind, SemigroupKind::Pair);
        assert!((single.value - pair.value).max_abs() < 1e-14);
    }

    #[test]
    fn conditioned_matches_shifted() {
        let q = spd(0.2);
        let traj = integrate_dre(&m0(), 0.0, 3.0, &q, None).unwrap();
        let phi_s = SpdMat::certify(traj.eval_sym(1.0).unwrap()).unwrap();
        let cond = integrate_dre(&m0(), 1.0, 3.0, &phi_s, None).unwrap();
        let a = conditioned_semigroup(&cond, 3.0).unwrap();
        let b = semigroup(&traj, None, 1.0, 3.0).unwrap();
        assert!((a.value - b.value).max_abs() < 1e-8);
    }

    #[test]
    fn m0_rates_and_constants() {
        let m = m0();
        let report = uniformity_constants(&m, 1.0, 10.0, 129).unwrap();
        let rates = bucy_alpha_beta(&report, &m).unwrap();
        assert!((rates.alpha_ratio - 1.0).abs() < 1e-12);
        assert!((rates.alpha_safe - 4.0 / 3.0).abs() < 1e-12);
        assert!((rates.beta - 75.0 / 128.0).abs() < 1e-12);
        let are = solve_are(&m).unwrap();
        let c = constants_ledger(&m, &report, &are).unwrap();
        assert_eq!(c.decay_route, DecayRoute::LogNorm);
        assert!((c.nu - 1.0).abs() < 1e-12 && (c.kappa - 1.0).abs() < 1e-12);
        let p = are.p.sym().clone();
        assert!((c.kappa_e(&p) - 1.0).abs() < 1e-10);
        assert!((c.kappa_phi_pair(&p, &p) - 1.0).abs() < 1e-10);
        assert!((c.sigma(&p) - 4.0).abs() < 1e-10);
        assert!((c.chi1(&p) - 0.5).abs() < 1e-10);
        assert!((c.chi2(&p) - (4.0 + 2.0 * 2f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn unobserved_model_rates_not_certifiable() {
        let m = SignalModel::scalar(0.0, 0.0, 1.0, 1.0).unwrap();
        let report = uniformity_constants(&m, 1.0, 5.0, 9).unwrap();
        assert!(matches!(
            bucy_alpha_beta(&report, &m),
            Err(Error::NotCertifiable(_))
        ));
    }

    #[test]
    fn lyapunov_route_for_non_normal_closed_loop() {
        let f = Matrix::from_rows(&[[-1.0, 3.0], [0.0, -2.0]]).unwrap();
        assert!(log_norm(&f).unwrap() > 0.0);
        let d = closed_loop_decay(&f).unwrap();
        assert_eq!(d.route, DecayRoute::Lyapunov);
        assert!(d.nu > 0.0 && d.kappa > 1.0);
        for t in linspace(0.0f64, 10.0, 101) {
            let e = crate::linalg::mat_exp(&f, t).unwrap();
            assert!(norm2(&e) <= d.kappa * (-d.nu * t).exp() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn fit_decay_examples() {
        let s: Vec<(f64, f64)> = linspace(0.0f64, 5.0, 20)
            .into_iter()
            .map(|t| (t, (-t).exp()))
            .collect();
        assert!((fit_decay(&s, 0.0).unwrap().fitted_rate - 1.0).abs() < 1e-10);
        let s: Vec<(f64, f64)> = linspace(0.0f64, 2.0, 20)
            .into_iter()
            .map(|t| (t, 2.0 * (-3.0 * t).exp()))
            .collect();
        let f = fit_decay(&s, 0.0).unwrap();
        assert!((f.fitted_rate - 3.0).abs() < 1e-10 && (f.fitted_prefactor - 2.0).abs() < 1e-10);
        assert!(fit_decay(&s[..5], 0.0).is_err());
        let mut bad = s.clone();
        bad[3].1 = 0.0;
        assert!(fit_decay(&bad, 0.0).is_err());
    }

    #[test]
    fn sech_rate_approaches_one() {
        let s: Vec<(f64, f64)> = linspace(0.0f64, 12.0, 121)
            .into_iter()
            .map(|t| (t, 1.0 / t.cosh()))
            .collect();
        let early = fit_decay(&s, 0.0).unwrap().fitted_rate;
        let late = fit_decay(&s, 6.0).unwrap().fitted_rate;
        assert!((late - 1.0).abs() < (early - 1.0).abs());
        assert!((late - 1.0).abs() < 1e-4);
    }
}
