//! End-to-end analysis of a model, and a seeded generator of random certifiable models.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gramian::{rank_conditions, uniformity_constants, GramianReport};
use crate::linalg::{Matrix, SpdMat, SymMat};
use crate::model::SignalModel;
use crate::riccati::{bucy_bounds, solve_are, ArePoint, BucyBounds};
use crate::semigroup::{bucy_alpha_beta, constants_ledger, BucyRates, StabilityConstants};
use crate::stochastic::{GaussianStream, NoiseBundle, NoiseKind};

/// Every deterministic quantity the certification routines need. The steady-state items are
/// present only for time-invariant models.
#[derive(Clone, Debug, Serialize)]
pub struct Analysis {
    #[serde(skip)]
    pub model: SignalModel<f64>,
    pub report: GramianReport<f64>,
    pub rates: BucyRates<f64>,
    pub are: Option<ArePoint<f64>>,
    pub bounds: Option<BucyBounds<f64>>,
    pub constants: Option<StabilityConstants<f64>>,
}

impl Analysis {
    pub fn upsilon(&self) -> f64 {
        self.report.upsilon
    }

    pub fn require_constants(&self) -> Result<&StabilityConstants<f64>> {
        self.constants.as_ref().ok_or_else(|| {
            Error::InvalidArgument("steady-state constants need a time-invariant model".into())
        })
    }
}

/// Gramian report on `[0, horizon]`, Bucy rates, and for time-invariant models the ARE
/// solution, matrix Bucy bounds and the constant ledger.
pub fn analyze(
    model: &SignalModel<f64>,
    upsilon: f64,
    horizon: f64,
    grid_n: usize,
) -> Result<Analysis> {
    let report = uniformity_constants(model, upsilon, horizon, grid_n)?;
    let rates = bucy_alpha_beta(&report, model)?;
    let (are, bounds, constants) = if model.is_time_invariant() {
        let are = solve_are(model)?;
        let bounds = bucy_bounds(model, upsilon)?;
        let constants = constants_ledger(model, &report, &are)?;
        (Some(are), Some(bounds), Some(constants))
    } else {
        (None, None, None)
    };
    Ok(Analysis {
        model: model.clone(),
        report,
        rates,
        are,
        bounds,
        constants,
    })
}

/// Standard normal draws addressed like simulation noise, under a dedicated stream kind.
pub fn normal_source(seed: u64, index: u64) -> impl FnMut() -> f64 {
    let noise = NoiseBundle {
        seed,
        step: 1.0,
        horizon: 0.0,
        silent: false,
    };
    let mut g: GaussianStream = noise.stream(index, NoiseKind::Init, (1 << 20) - 1);
    move || g.standard_normal()
}

/// Random time-invariant model: `A` with `N(0, 1/r₁)` entries, `C` with `N(0, 1)` entries, and
/// noise covariances `GGᵀ/r + εI`.
pub fn random_model(
    normal: &mut impl FnMut() -> f64,
    r1: usize,
    r2: usize,
) -> Result<SignalModel<f64>> {
    let scale = 1.0 / (r1 as f64).sqrt();
    let a = Matrix::from_fn(r1, r1, |_, _| scale * normal());
    let c = Matrix::from_fn(r2, r1, |_, _| normal());
    let cov = |dim: usize, floor: f64, normal: &mut dyn FnMut() -> f64| -> Result<Matrix<f64>> {
        let g = Matrix::from_fn(dim, dim, |_, _| normal());
        let m = g.matmul(&g.transpose()).scale(1.0 / dim as f64);
        Ok(&m + &Matrix::identity(dim).scale(floor))
    };
    let r1_cov = cov(r1, 0.2, normal)?;
    let r2_cov = cov(r2, 0.5, normal)?;
    SignalModel::time_invariant(a, c, r1_cov, r2_cov)
}

/// A random model that passed every certification precondition, with its analysis.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteModel {
    pub index: usize,
    /// Rejected draws before this one.
    pub rejected: usize,
    pub analysis: Analysis,
}

/// `count` random certifiable models with state dimensions cycling through `dims` and a single
/// observation channel for odd indices. Draws failing the rank conditions or the certification
/// pipeline are rejected and redrawn.
pub fn random_suite(
    seed: u64,
    count: usize,
    dims: &[usize],
    upsilon: f64,
) -> Result<Vec<SuiteModel>> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidArgument(
            "need at least one positive state dimension".into(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    let mut normal = normal_source(seed, 0);
    let mut rejected = 0;
    while out.len() < count {
        if rejected > 100 * count.max(1) {
            return Err(Error::NoConvergence(
                "random certifiable model search".into(),
            ));
        }
        let index = out.len();
        let r1 = dims[index % dims.len()];
        let r2 = if index % 2 == 1 {
            1
        } else {
            r1.div_ceil(2).max(1)
        };
        let accepted = random_model(&mut normal, r1, r2).and_then(|m| {
            let rank = rank_conditions(&m)?;
            if !(rank.controllable && rank.observable) {
                return Err(Error::NotCertifiable("rank conditions fail".into()));
            }
            let analysis = analyze(&m, upsilon, 4.0 * upsilon, 5)?;
            let c = analysis.require_constants()?;
            if !(c.rho(&SymMat::zeros(r1)).is_finite() && c.kappa_e(c.p.sym()).is_finite()) {
                return Err(Error::NotCertifiable("constants overflow".into()));
            }
            Ok(analysis)
        });
        match accepted {
            Ok(analysis) => {
                out.push(SuiteModel {
                    index,
                    rejected,
                    analysis,
                });
                rejected = 0;
            }
            Err(_) => rejected += 1,
        }
    }
    Ok(out)
}

/// Random PSD probes for a suite model, see [`crate::certify::probe_covariances`].
pub fn suite_covariances(
    seed: u64,
    model_index: usize,
    dim: usize,
    count: usize,
) -> Result<Vec<SpdMat<f64>>> {
    crate::certify::probe_covariances(dim, count, normal_source(seed, 1 + model_index as u64))
}
