//! Grid certification of the Riccati and semigroup inequalities for a batch of initial
//! covariances.

use rayon::prelude::*;
use serde::Serialize;

use crate::check::{CheckRecord, Series};
use crate::error::{Error, Result};
use crate::flow::linspace;
use crate::linalg::{norm2, Matrix, SpdMat, SymMat};
use crate::model::SignalModel;
use crate::riccati::{integrate_dre, BucyBounds, RiccatiTrajectory};
use crate::scalar::Real;
use crate::semigroup::{fit_decay, semigroup_path, BucyRates, StabilityConstants};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CertifyOptions {
    /// Length of the sampled window after `υ`.
    pub window: f64,
    /// Sample count per window.
    pub samples: usize,
    /// Nominal DRE step; `None` for the default.
    pub dre_step: Option<f64>,
    /// Absolute Loewner slack for the Bucy bounds.
    pub loewner_tol: f64,
    /// Relative slack for the constant-ledger inequalities.
    pub rel_tol: f64,
    /// Fitted decay rates must reach `(1 − rate_slack)` of the certified rate.
    pub rate_slack: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            window: 10.0,
            samples: 41,
            dre_step: None,
            loewner_tol: 1e-6,
            rel_tol: 1e-8,
            rate_slack: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub checks: Vec<CheckRecord>,
    pub series: Vec<Series>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckRecord::acceptable)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `coef·factor`, with `0` when `factor = 0` even if `coef` overflowed.
fn scaled(coef: f64, factor: f64) -> f64 {
    if factor == 0.0 {
        0.0
    } else {
        coef * factor
    }
}

fn trajectories<T: Real>(
    model: &SignalModel<T>,
    qs: &[SpdMat<T>],
    end: T,
    step: Option<f64>,
) -> Result<Vec<RiccatiTrajectory<T>>> {
    qs.par_iter()
        .map(|q| integrate_dre(model, T::zero(), end, q, step.map(T::lit)))
        .collect()
}

/// Start times of the semigroup windows, on both sides of `υ`.
fn semigroup_starts(ups: f64) -> [f64; 5] {
    [0.0, 0.5 * ups, ups, ups + 1.0, ups + 3.0]
}

/// Riccati flows from each of `qs` on `[0, υ + 3 + window]`, long enough for both
/// [`certify_riccati_on`] and [`certify_semigroup_on`].
pub fn certification_trajectories<T: Real>(
    model: &SignalModel<T>,
    upsilon: T,
    qs: &[SpdMat<T>],
    opts: &CertifyOptions,
) -> Result<Vec<RiccatiTrajectory<T>>> {
    let s_max = semigroup_starts(upsilon.as_f64())
        .into_iter()
        .fold(0.0, f64::max);
    trajectories(model, qs, T::lit(s_max + opts.window), opts.dre_step)
}

fn require_span<T: Real>(trajs: &[RiccatiTrajectory<T>], end: T) -> Result<()> {
    match trajs
        .iter()
        .find(|t| t.start() != T::zero() || t.end() < end)
    {
        Some(t) => Err(Error::InvalidArgument(format!(
            "trajectory on [{}, {}] does not cover [0, {end}]",
            t.start(),
            t.end()
        ))),
        None => Ok(()),
    }
}

fn dist<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> f64 {
    norm2(&(a - b)).as_f64()
}

/// Bucy bounds on `[υ, υ + window]`, and with a constant ledger the contraction and
/// steady-state inequalities of the Riccati flow on `[0, υ + window]` plus the fitted
/// convergence rate towards `P`.
pub fn certify_riccati<T: Real>(
    model: &SignalModel<T>,
    bounds: &BucyBounds<T>,
    constants: Option<&StabilityConstants<T>>,
    qs: &[SpdMat<T>],
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let end = bounds.upsilon + T::lit(opts.window);
    let trajs = trajectories(model, qs, end, opts.dre_step)?;
    certify_riccati_on(bounds, constants, &trajs, opts)
}

/// [`certify_riccati`] on precomputed flows started at `t = 0`.
pub fn certify_riccati_on<T: Real>(
    bounds: &BucyBounds<T>,
    constants: Option<&StabilityConstants<T>>,
    trajs: &[RiccatiTrajectory<T>],
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let ups = bounds.upsilon;
    let end = ups + T::lit(opts.window);
    require_span(trajs, end)?;
    let qs: Vec<&SpdMat<T>> = trajs.iter().map(RiccatiTrajectory::initial).collect();
    let late = linspace(ups, end, opts.samples);
    let all = linspace(T::zero(), end, opts.samples);

    let mut bucy = CheckRecord::new(
        "bucy-bounds",
        "Λ_min ≤ φ_t(Q) ≤ Λ_max for t ≥ υ",
        0.0,
        opts.loewner_tol,
    );
    let mut containment = Series::new(
        "bucy-containment",
        &["loewner_excess", "lambda_min_phi", "lambda_max_phi"],
    );
    for (k, traj) in trajs.iter().enumerate() {
        for &t in &late {
            let phi = traj.eval_sym(t)?;
            let below = bounds.lambda_min_bound.sym().sub(&phi).max_eig();
            let above = phi.sub(&bounds.lambda_max_bound).max_eig();
            let excess = below.max(above).as_f64();
            bucy.record(excess, 0.0);
            if k == 0 {
                let e = phi.eigen()?;
                containment.push(
                    t.as_f64(),
                    vec![excess, e.min().as_f64(), e.max().as_f64()],
                    0.0,
                );
            }
        }
    }
    let mut checks = vec![bucy];
    let mut series = vec![containment];

    if let Some(c) = constants {
        let p = c.p.as_matrix();
        let (beta, nu) = (c.beta.as_f64(), c.nu.as_f64());
        let rel = opts.rel_tol;
        let mut rho = CheckRecord::new(
            "riccati-contraction-rho",
            "‖φ_t(Q₁)−φ_t(Q₂)‖ ≤ ρ(Q₁)ρ(Q₂)e^{−2βt}‖Q₁−Q₂‖",
            rel,
            1e-12,
        );
        let mut steady = CheckRecord::new(
            "steady-state-kappa-phi",
            "‖φ_t(Q)−P‖ ≤ κ_φ(Q)e^{−2νt}‖Q−P‖",
            rel,
            1e-12,
        );
        let mut lip = CheckRecord::new(
            "riccati-lipschitz-kappa-phi",
            "‖φ_t(Q₁)−φ_t(Q₂)‖ ≤ κ_φ(Q₁,Q₂)e^{−2νt}‖Q₁−Q₂‖",
            rel,
            1e-12,
        );
        let mut rate_beta = CheckRecord::new(
            "fixed-point-rate-beta",
            "fitted rate of ‖φ_t(Q)−P‖ ≥ 2β(1−slack)",
            0.0,
            0.0,
        );
        // a window fit may undershoot the asymptotic rate during transients; ν is reported only
        let mut rate_nu = CheckRecord::new(
            "fixed-point-rate-nu",
            "fitted rate of ‖φ_t(Q)−P‖ ≥ 2ν(1−slack)",
            0.0,
            0.0,
        )
        .logged_only();
        let mut steady_series = Series::new("phi-minus-p", &["norm"]);

        for (k, (traj, q)) in trajs.iter().zip(&qs).enumerate() {
            let q0 = dist(q.as_matrix(), p);
            let kphi = c.kappa_phi(q.sym()).as_f64();
            for &t in &all {
                let d = dist(&traj.eval(t)?, p);
                let bound = scaled(kphi * (-2.0 * nu * t.as_f64()).exp(), q0);
                steady.record(d, bound);
                if k == 0 {
                    steady_series.push(t.as_f64(), vec![d], bound);
                }
            }
            // fitted convergence rate towards P on the sampled window, above the round-off floor
            let floor = 1e-9 * (1.0 + c.p_norm.as_f64());
            let dense = linspace(ups, end, 4 * opts.samples);
            let samples: Vec<(f64, f64)> = dense
                .iter()
                .map(|&t| Ok((t.as_f64(), dist(&traj.eval(t)?, p))))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .take_while(|&(_, d)| d > floor)
                .collect();
            if let Ok(fit) = fit_decay(&samples, ups.as_f64()) {
                rate_beta.record(2.0 * beta * (1.0 - opts.rate_slack), fit.fitted_rate);
                rate_nu.record(2.0 * nu * (1.0 - opts.rate_slack), fit.fitted_rate);
            }
        }
        for pair in trajs.chunks_exact(2).zip(qs.chunks_exact(2)) {
            let ([t1, t2], [q1, q2]) = pair else {
                unreachable!()
            };
            let q12 = dist(q1.as_matrix(), q2.as_matrix());
            let rr = c.rho_pair(q1.sym(), q2.sym()).as_f64();
            let kp = c.kappa_phi_pair(q1.sym(), q2.sym()).as_f64();
            for &t in &all {
                let d = dist(&t1.eval(t)?, &t2.eval(t)?);
                let tf = t.as_f64();
                rho.record(d, scaled(rr * (-2.0 * beta * tf).exp(), q12));
                lip.record(d, scaled(kp * (-2.0 * nu * tf).exp(), q12));
            }
        }
        checks.extend([rho, steady, lip, rate_beta, rate_nu]);
        series.push(steady_series);
    }
    Ok(Certificate { checks, series })
}

/// Semigroup decay bounds on `t ∈ [s, s + window]` for start times `s` on both sides of `υ`.
/// `qs` are also paired consecutively for the Lipschitz bound on `Q ↦ E_{s,t}(Q)`.
pub fn certify_semigroup<T: Real>(
    model: &SignalModel<T>,
    rates: &BucyRates<T>,
    upsilon: T,
    constants: Option<&StabilityConstants<T>>,
    qs: &[SpdMat<T>],
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let trajs = certification_trajectories(model, upsilon, qs, opts)?;
    certify_semigroup_on(rates, upsilon, constants, &trajs, opts)
}

/// [`certify_semigroup`] on precomputed flows started at `t = 0`.
pub fn certify_semigroup_on<T: Real>(
    rates: &BucyRates<T>,
    upsilon: T,
    constants: Option<&StabilityConstants<T>>,
    trajs: &[RiccatiTrajectory<T>],
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let ups = upsilon.as_f64();
    let starts = semigroup_starts(ups);
    let s_max = starts.iter().copied().fold(0.0, f64::max);
    require_span(trajs, T::lit(s_max + opts.window))?;
    let qs: Vec<&SpdMat<T>> = trajs.iter().map(RiccatiTrajectory::initial).collect();
    let (alpha, alpha_ratio, beta) = (
        rates.alpha_safe.as_f64(),
        rates.alpha_ratio.as_f64(),
        rates.beta.as_f64(),
    );
    let rel = opts.rel_tol;

    let mut bucy = CheckRecord::new(
        "bucy-semigroup",
        "‖E_{s,t}(Q)‖ ≤ α_safe e^{−β(t−s)} for t ≥ s ≥ υ",
        rel,
        1e-12,
    );
    let mut ratio_form = CheckRecord::new(
        "bucy-semigroup-ratio-alpha",
        "‖E_{s,t}(Q)‖ ≤ α e^{−β(t−s)} (ratio-form α)",
        rel,
        1e-12,
    )
    .logged_only();
    let mut rho = CheckRecord::new(
        "semigroup-rho",
        "‖E_{s,t}(Q)‖ ≤ ρ(Q)e^{−β(t−s)} for t ≥ s ≥ 0",
        rel,
        1e-12,
    );
    let mut kappa_e = CheckRecord::new(
        "semigroup-kappa-e",
        "‖E_{s,t}(Q)‖ ≤ κ_E(Q)e^{−ν(t−s)}",
        rel,
        1e-12,
    );
    let mut lip = CheckRecord::new(
        "semigroup-lipschitz",
        "‖E_{s,t}(Q₂)−E_{s,t}(Q₁)‖ ≤ κ_E(Q₁,Q₂)e^{−ν(t−s)}‖Q₂−Q₁‖",
        rel,
        1e-12,
    );
    let mut decay_series = Series::new("semigroup-norm", &["norm"]);
    let mut fit_record = CheckRecord::new(
        "semigroup-fitted-rate",
        "fitted decay rate of ‖E_{υ,t}(Q)‖ ≥ β(1−slack)",
        0.0,
        0.0,
    )
    .logged_only();

    let mut paths: Vec<Vec<Vec<Matrix<T>>>> = Vec::with_capacity(trajs.len());
    for (k, (traj, q)) in trajs.iter().zip(&qs).enumerate() {
        let rho_q = constants.map(|c| c.rho(q.sym()).as_f64());
        let ke = constants.map(|c| c.kappa_e(q.sym()).as_f64());
        let mut per_start = Vec::with_capacity(starts.len());
        for &s in &starts {
            let times = linspace(T::lit(s), T::lit(s + opts.window), opts.samples);
            let path = semigroup_path(traj, None, T::lit(s), &times)?;
            let mut fit_samples = Vec::new();
            for (t, e) in times.iter().zip(&path) {
                let dt = t.as_f64() - s;
                let n = norm2(e).as_f64();
                if s >= ups {
                    bucy.record(n, alpha * (-beta * dt).exp());
                    ratio_form.record(n, alpha_ratio * (-beta * dt).exp());
                    if s == ups {
                        fit_samples.push((dt, n));
                    }
                }
                if let Some(r) = rho_q {
                    rho.record(n, r * (-beta * dt).exp());
                }
                if let (Some(c), Some(ke)) = (constants, ke) {
                    kappa_e.record(n, ke * (-c.nu.as_f64() * dt).exp());
                }
                if k == 0 && s == ups {
                    decay_series.push(t.as_f64(), vec![n], alpha * (-beta * dt).exp());
                }
            }
            let floor = 1e-12;
            let fit_samples: Vec<_> = fit_samples
                .into_iter()
                .take_while(|&(_, n)| n > floor)
                .collect();
            if let Ok(fit) = fit_decay(&fit_samples, 0.0) {
                fit_record.record(beta * (1.0 - opts.rate_slack), fit.fitted_rate);
            }
            per_start.push(path);
        }
        paths.push(per_start);
    }
    if let Some(c) = constants {
        let nu = c.nu.as_f64();
        for (pp, qq) in paths.chunks_exact(2).zip(qs.chunks_exact(2)) {
            let bound0 = scaled(
                c.kappa_e_pair(qq[0].sym(), qq[1].sym()).as_f64(),
                dist(qq[0].as_matrix(), qq[1].as_matrix()),
            );
            for (si, &s) in starts.iter().enumerate() {
                let times = linspace(s, s + opts.window, opts.samples);
                for (j, &t) in times.iter().enumerate() {
                    let d = dist(&pp[1][si][j], &pp[0][si][j]);
                    lip.record(d, bound0 * (-nu * (t - s)).exp());
                }
            }
        }
    }
    let mut checks = vec![bucy, ratio_form, fit_record];
    if constants.is_some() {
        checks.extend([rho, kappa_e, lip]);
    }
    Ok(Certificate {
        checks,
        series: vec![decay_series],
    })
}

/// Random PSD test covariances of a given dimension, including the extreme cases
/// `‖Q‖₂ = 10³` and `λ_min(Q) = 10⁻⁶`.
pub fn probe_covariances(
    dim: usize,
    count: usize,
    mut normal: impl FnMut() -> f64,
) -> Result<Vec<SpdMat<f64>>> {
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let g = Matrix::from_fn(dim, dim, |_, _| normal());
        let base = g.matmul(&g.transpose()).scale(1.0 / dim as f64);
        let e = SymMat::new(&base)?.eigen()?;
        let q = match k % 5 {
            // large norm
            0 => e.reconstruct(|x| 1e3 * x / e.max()),
            // nearly singular
            1 => e.reconstruct(|x| 1e-6 + (x - e.min())),
            // very small
            2 => e.reconstruct(|x| 1e-3 * x),
            _ => base.clone(),
        };
        out.push(SpdMat::certify(SymMat::new(&q)?)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gramian::uniformity_constants;
    use crate::riccati::{bucy_bounds, solve_are};
    use crate::semigroup::{bucy_alpha_beta, constants_ledger};

    #[test]
    fn m0_certifies() {
        let m = SignalModel::scalar(0.0, 1.0, 1.0, 1.0).unwrap();
        let report = uniformity_constants(&m, 1.0, 10.0, 129).unwrap();
        let are = solve_are(&m).unwrap();
        let c = constants_ledger(&m, &report, &are).unwrap();
        let b = bucy_bounds(&m, 1.0).unwrap();
        let qs: Vec<_> = [0.0, 1e-6, 0.5, 2.0, 1e3, 7.0]
            .iter()
            .map(|&x| SpdMat::certify(SymMat::scalar(x)).unwrap())
            .collect();
        let opts = CertifyOptions::default();
        let r = certify_riccati(&m, &b, Some(&c), &qs, &opts).unwrap();
        for chk in &r.checks {
            assert!(chk.passed(), "{chk:?}");
            assert!(chk.samples > 0, "{chk:?}");
        }
        let rates = bucy_alpha_beta(&report, &m).unwrap();
        let s = certify_semigroup(&m, &rates, 1.0, Some(&c), &qs, &opts).unwrap();
        assert!(s.passed(), "{:?}", s.checks);
    }

    #[test]
    fn probe_covariances_cover_extremes() {
        let mut k: f64 = 0.0;
        let qs = probe_covariances(3, 5, || {
            k += 0.7;
            k.sin()
        })
        .unwrap();
        assert!((qs[0].sym().norm2() - 1e3).abs() < 1e-9);
        assert!((qs[1].min_eig() - 1e-6).abs() < 1e-12);
    }
}
