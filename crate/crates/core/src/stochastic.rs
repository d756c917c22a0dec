//! Coupled simulation of the signal, the observations, the Kalman-Bucy filter and the
//! nonlinear Kalman-Bucy diffusion ensemble, with Monte Carlo checks of the filter
//! stability bounds.
//!
//! This layer is `f64` only. Coefficient schedules along the deterministic Riccati
//! trajectory are tabulated once per run, and each replica then advances with slice-level
//! matrix-vector products. Every Gaussian increment is addressed by `(seed, stream)`, with
//! the stream id built from the replica, the noise kind and the ensemble member. Results are
//! therefore independent of thread scheduling.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::check::{CheckRecord, Series};
use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix, SpdMat};
use crate::model::SignalModel;
use crate::riccati::RiccatiTrajectory;
use crate::semigroup::{semigroup_path, BucyRates, StabilityConstants};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 10.0;
pub const DEFAULT_N_MC: usize = 10_000;
pub const DEFAULT_N_ENSEMBLE: usize = 1_000;

/// Independent Brownian sources of the coupled system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Signal noise `W`.
    W,
    /// Observation noise `V`.
    V,
    /// Diffusion copy `W̄`, one per ensemble member.
    WBar,
    /// Diffusion copy `V̄`, one per ensemble member.
    VBar,
    /// Draws of the ensemble's initial law.
    Init,
}

impl NoiseKind {
    fn code(self) -> u64 {
        match self {
            NoiseKind::W => 0,
            NoiseKind::V => 1,
            NoiseKind::WBar => 2,
            NoiseKind::VBar => 3,
            NoiseKind::Init => 4,
        }
    }
}

/// ChaCha stream id: `replica << 24 | kind << 20 | member`.
pub fn stream_id(replica: u64, kind: NoiseKind, member: u32) -> u64 {
    debug_assert!(member < 1 << 20 && replica < 1 << 40);
    (replica << 24) | (kind.code() << 20) | u64::from(member)
}

/// Seeded source of Brownian increments on a uniform base grid.
#[derive(Clone, Debug, Serialize)]
pub struct NoiseBundle {
    pub seed: u64,
    /// Base step; simulations may run on multiples of it.
    pub step: f64,
    /// Simulated span after the start time.
    pub horizon: f64,
    /// Test switch forcing every increment to zero.
    pub silent: bool,
}

impl NoiseBundle {
    pub fn new(seed: u64, step: f64, horizon: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise step must be positive, got {step}"
            )));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise horizon must be non-negative, got {horizon}"
            )));
        }
        let b = Self {
            seed,
            step,
            horizon,
            silent: false,
        };
        grid_index(horizon, step).ok_or_else(|| {
            Error::InvalidArgument(format!("step {step} does not divide the horizon {horizon}"))
        })?;
        Ok(b)
    }

    pub fn silenced(mut self) -> Self {
        self.silent = true;
        self
    }

    /// Base steps covering the horizon.
    pub fn steps(&self) -> usize {
        grid_index(self.horizon, self.step).unwrap_or(0)
    }

    pub fn stream(&self, replica: u64, kind: NoiseKind, member: u32) -> GaussianStream {
        GaussianStream::new(
            self.seed,
            stream_id(replica, kind, member),
            self.step.sqrt(),
            self.silent,
        )
    }
}

/// `k` with `k·step = span` up to round-off, if it exists.
fn grid_index(span: f64, step: f64) -> Option<usize> {
    let k = (span / step).round();
    ((k * step - span).abs() <= 1e-9 * span.abs().max(1.0) && k >= 0.0).then_some(k as usize)
}

/// Standard normal variates by inverse CDF on 53-bit uniforms, so draws are reproducible
/// bit-for-bit on every platform.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    normal: Normal,
    scale: f64,
    silent: bool,
}

impl GaussianStream {
    fn new(seed: u64, stream: u64, scale: f64, silent: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            normal: Normal::new(0.0, 1.0).expect("standard normal"),
            scale,
            silent,
        }
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    /// Sum of `count` consecutive base increments, per component.
    pub fn fill_increment(&mut self, out: &mut [f64], count: usize) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.silent {
            return;
        }
        for _ in 0..count {
            for o in out.iter_mut() {
                *o += self.scale * self.standard_normal();
            }
        }
    }
}

/// Which process a check is run on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Filter,
    Diffusion,
}

/// Initial law of the diffusion ensemble, centred on the filter start `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleInit {
    /// Every member starts at `x`.
    Dirac,
    /// `N(x, Q)`.
    Gaussian,
    /// `x + Q^{1/2}u` with `u` uniform on `[−√3, √3]^{r₁}`: mean `x`, covariance `Q`.
    Uniform,
}

/// Replication metadata carried by every Monte Carlo result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Replication {
    pub seed: u64,
    pub step: f64,
    pub n_mc: usize,
}

// ---------------------------------------------------------------------------------------
// Coefficient schedules

/// Model coefficients on the simulation grid, row-major.
struct Schedule {
    n: usize,
    m: usize,
    h: f64,
    /// Base noise steps per simulation step.
    coarsen: usize,
    start: f64,
    steps: usize,
    a: Vec<f64>,
    c: Vec<f64>,
    varying: bool,
    r1s: Vec<f64>,
    r2s: Vec<f64>,
}

impl Schedule {
    fn build(
        model: &SignalModel<f64>,
        start: f64,
        noise: &NoiseBundle,
        coarsen: usize,
        steps: usize,
    ) -> Result<Self> {
        let (n, m) = (model.state_dim(), model.obs_dim());
        let h = noise.step * coarsen as f64;
        let varying = !model.is_time_invariant();
        let count = if varying { steps } else { 1 };
        let mut a = Vec::with_capacity(count * n * n);
        let mut c = Vec::with_capacity(count * m * n);
        for k in 0..count {
            let t = start + k as f64 * h;
            a.extend_from_slice(model.a_at(t)?.as_slice());
            c.extend_from_slice(model.c_at(t)?.as_slice());
        }
        Ok(Self {
            n,
            m,
            h,
            coarsen,
            start,
            steps,
            a,
            c,
            varying,
            r1s: model.r1_sqrt().as_slice().to_vec(),
            r2s: model.r2_sqrt().as_slice().to_vec(),
        })
    }

    fn a(&self, k: usize) -> &[f64] {
        let sz = self.n * self.n;
        if self.varying {
            &self.a[k * sz..(k + 1) * sz]
        } else {
            &self.a
        }
    }

    fn c(&self, k: usize) -> &[f64] {
        let sz = self.m * self.n;
        if self.varying {
            &self.c[k * sz..(k + 1) * sz]
        } else {
            &self.c
        }
    }

    fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.h
    }
}

/// Filter gains along one Riccati trajectory: `A − φS`, `φCᵀR₂⁻¹` and `φCᵀR₂^{−1/2}`.
struct Gains {
    f: Vec<f64>,
    gy: Vec<f64>,
    gv: Vec<f64>,
}

impl Gains {
    fn build(
        model: &SignalModel<f64>,
        traj: &RiccatiTrajectory<f64>,
        sched: &Schedule,
    ) -> Result<Self> {
        let (n, m) = (sched.n, sched.m);
        let end = sched.time(sched.steps.saturating_sub(1));
        if sched.start < traj.start() - 1e-12 || end > traj.end() + 1e-9 {
            return Err(Error::OutOfRange {
                t: end,
                lo: traj.start(),
                hi: traj.end(),
            });
        }
        let mut f = Vec::with_capacity(sched.steps * n * n);
        let mut gy = Vec::with_capacity(sched.steps * n * m);
        let mut gv = Vec::with_capacity(sched.steps * n * m);
        for k in 0..sched.steps {
            let t = sched.time(k).min(traj.end());
            let phi = traj.eval(t)?;
            let a = model.a_at(t)?;
            let s = model.s_at(t)?;
            let pct = phi.matmul(&model.c_at(t)?.transpose());
            f.extend_from_slice((&a - &phi.matmul(&s)).as_slice());
            gy.extend_from_slice(pct.matmul(model.r2_inv()).as_slice());
            gv.extend_from_slice(pct.matmul(model.r2_inv_sqrt()).as_slice());
        }
        Ok(Self { f, gy, gv })
    }

    fn f(&self, k: usize, n: usize) -> &[f64] {
        &self.f[k * n * n..(k + 1) * n * n]
    }

    fn gy(&self, k: usize, n: usize, m: usize) -> &[f64] {
        &self.gy[k * n * m..(k + 1) * n * m]
    }

    fn gv(&self, k: usize, n: usize, m: usize) -> &[f64] {
        &self.gv[k * n * m..(k + 1) * n * m]
    }
}

/// `out += scale · M v` for a row-major `rows × v.len()` matrix.
#[inline]
fn gemv_acc(out: &mut [f64], mat: &[f64], v: &[f64], scale: f64) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(mat.chunks_exact(cols)) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o += scale * acc;
    }
}

// ---------------------------------------------------------------------------------------
// Replica kernel

struct FilterState<'g> {
    gains: &'g Gains,
    psi: Vec<f64>,
    bars: Vec<Vec<f64>>,
}

struct ReplicaRun<'a> {
    sched: &'a Schedule,
    noise: &'a NoiseBundle,
    replica: u64,
}

impl ReplicaRun<'_> {
    /// Advances the signal and every filter for `upto` steps, calling `visit(k, x, filters)`
    /// at each step index listed in `record` (ascending) and `on_dy(k, dY)` after each step.
    fn run(
        &self,
        x: &mut [f64],
        filters: &mut [FilterState],
        upto: usize,
        record: &[usize],
        mut visit: impl FnMut(usize, &[f64], &[FilterState]),
        mut on_dy: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        let (n, m, h) = (self.sched.n, self.sched.m, self.sched.h);
        let coarsen = self.sched.coarsen;
        let members = filters.first().map_or(0, |f| f.bars.len());
        let mut w = self.noise.stream(self.replica, NoiseKind::W, 0);
        let mut v = self.noise.stream(self.replica, NoiseKind::V, 0);
        let mut wbar: Vec<_> = (0..members)
            .map(|j| self.noise.stream(self.replica, NoiseKind::WBar, j as u32))
            .collect();
        let mut vbar: Vec<_> = (0..members)
            .map(|j| self.noise.stream(self.replica, NoiseKind::VBar, j as u32))
            .collect();
        let (mut dw, mut dv, mut dy) = (vec![0.0; n], vec![0.0; m], vec![0.0; m]);
        let (mut dwb, mut dvb) = (vec![0.0; n], vec![0.0; m]);
        let mut xn = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut next = 0;

        for k in 0..=upto {
            while next < record.len() && record[next] == k {
                if !x.iter().all(|z| z.is_finite())
                    || filters.iter().any(|f| {
                        !f.psi
                            .iter()
                            .chain(f.bars.iter().flatten())
                            .all(|z| z.is_finite())
                    })
                {
                    return Err(Error::NonFinite(format!(
                        "simulated state at t = {}",
                        self.sched.time(k)
                    )));
                }
                visit(k, x, filters);
                next += 1;
            }
            if k == upto {
                break;
            }
            w.fill_increment(&mut dw, coarsen);
            v.fill_increment(&mut dv, coarsen);
            // dY = C X dt + R₂^{1/2} dV
            dy.iter_mut().for_each(|z| *z = 0.0);
            gemv_acc(&mut dy, self.sched.c(k), x, h);
            gemv_acc(&mut dy, &self.sched.r2s, &dv, 1.0);
            on_dy(k, &dy);
            // dX = A X dt + R₁^{1/2} dW
            xn.copy_from_slice(x);
            gemv_acc(&mut xn, self.sched.a(k), x, h);
            gemv_acc(&mut xn, &self.sched.r1s, &dw, 1.0);
            x.copy_from_slice(&xn);

            for f in filters.iter_mut() {
                let (fk, gy) = (f.gains.f(k, n), f.gains.gy(k, n, m));
                tmp.copy_from_slice(&f.psi);
                gemv_acc(&mut tmp, fk, &f.psi, h);
                gemv_acc(&mut tmp, gy, &dy, 1.0);
                f.psi.copy_from_slice(&tmp);
            }
            for j in 0..members {
                wbar[j].fill_increment(&mut dwb, coarsen);
                vbar[j].fill_increment(&mut dvb, coarsen);
                for f in filters.iter_mut() {
                    let (fk, gy, gv) = (f.gains.f(k, n), f.gains.gy(k, n, m), f.gains.gv(k, n, m));
                    let bar = &mut f.bars[j];
                    tmp.copy_from_slice(bar);
                    gemv_acc(&mut tmp, fk, bar, h);
                    gemv_acc(&mut tmp, gy, &dy, 1.0);
                    gemv_acc(&mut tmp, &self.sched.r1s, &dwb, 1.0);
                    gemv_acc(&mut tmp, gv, &dvb, -1.0);
                    bar.copy_from_slice(&tmp);
                }
            }
        }
        Ok(())
    }
}

/// Initial ensemble drawn from `init` with mean `x` and covariance `q`.
fn initial_members(
    noise: &NoiseBundle,
    replica: u64,
    init: EnsembleInit,
    x: &[f64],
    q_sqrt: &Matrix<f64>,
    count: usize,
) -> Vec<Vec<f64>> {
    let n = x.len();
    (0..count)
        .map(|j| {
            let mut member = x.to_vec();
            if init == EnsembleInit::Dirac {
                return member;
            }
            let mut g = GaussianStream::new(
                noise.seed,
                stream_id(replica, NoiseKind::Init, j as u32),
                1.0,
                false,
            );
            let z: Vec<f64> = (0..n)
                .map(|_| match init {
                    EnsembleInit::Uniform => 3f64.sqrt() * (2.0 * g.uniform() - 1.0),
                    _ => g.standard_normal(),
                })
                .collect();
            gemv_acc(&mut member, q_sqrt.as_slice(), &z, 1.0);
            member
        })
        .collect()
}

/// Simulation grid indices of absolute times `t_grid`.
fn record_indices(sched_start: f64, h: f64, t_grid: &[f64]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let k = grid_index(t - sched_start, h)
            .filter(|_| t >= sched_start - 1e-12)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "time {t} is not on the simulation grid of step {h}"
                ))
            })?;
        if out.last().is_some_and(|&p| k < p) {
            return Err(Error::InvalidArgument(
                "time grid must be non-decreasing".into(),
            ));
        }
        out.push(k);
    }
    Ok(out)
}

fn check_dims(model: &SignalModel<f64>, vs: &[&[f64]]) -> Result<()> {
    for v in vs {
        if v.len() != model.state_dim() {
            return Err(Error::Dimension(format!(
                "state vector of length {}, expected {}",
                v.len(),
                model.state_dim()
            )));
        }
    }
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Runs `n_mc` replicas in parallel; results come back in replica order.
fn replicas<R: Send>(n_mc: usize, f: impl Fn(u64) -> Result<R> + Sync) -> Result<Vec<R>> {
    (0..n_mc as u64).into_par_iter().map(&f).collect()
}

/// Shared setup of the conditional Monte Carlo checks: schedule from the trajectory start up
/// to the last requested time.
struct McSetup {
    sched: Schedule,
    record: Vec<usize>,
    upto: usize,
    times: Vec<f64>,
}

impl McSetup {
    fn new(
        model: &SignalModel<f64>,
        start: f64,
        t_grid: &[f64],
        noise: &NoiseBundle,
        coarsen: usize,
    ) -> Result<Self> {
        let h = noise.step * coarsen as f64;
        let record = record_indices(start, h, t_grid)?;
        let upto = record.last().copied().unwrap_or(0);
        if upto as f64 * h > noise.horizon + 1e-9 * noise.horizon.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "time grid reaches {} beyond the noise horizon {}",
                upto as f64 * h,
                noise.horizon
            )));
        }
        let sched = Schedule::build(model, start, noise, coarsen, upto.max(1))?;
        let times = record.iter().map(|&k| sched.time(k)).collect();
        Ok(Self {
            sched,
            record,
            upto,
            times,
        })
    }
}

fn mean_and_stderr(samples: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = samples.clone().count() as f64;
    let mean = samples.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        samples.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------------------
// Path bundles

/// One realization of the coupled system on the recorded grid.
#[derive(Clone, Debug, Serialize)]
pub struct CoupledPathBundle {
    pub times: Vec<f64>,
    /// Signal path `X_t`.
    pub x: Vec<Vec<f64>>,
    /// Observation increments on every simulation step.
    pub dy: Vec<Vec<f64>>,
    /// Filter path `ψ_t`.
    pub psi: Vec<Vec<f64>>,
    /// Diffusion paths, indexed `[member][time]`.
    pub psi_bar: Vec<Vec<Vec<f64>>>,
    /// Riccati values `φ_t(Q)` on the recorded grid.
    pub phi: Vec<Matrix<f64>>,
    pub replica: u64,
    pub replication: Replication,
}

impl CoupledPathBundle {
    /// Ensemble mean of the diffusion members at recorded index `i`.
    pub fn ensemble_mean(&self, i: usize) -> Vec<f64> {
        let n = self.psi.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; n];
        for member in &self.psi_bar {
            mean.iter_mut().zip(&member[i]).for_each(|(a, b)| *a += b);
        }
        let k = self.psi_bar.len().max(1) as f64;
        mean.iter_mut().for_each(|a| *a /= k);
        mean
    }

    /// Ensemble covariance (divisor `N`) of the diffusion members at recorded index `i`.
    pub fn ensemble_covariance(&self, i: usize) -> Matrix<f64> {
        let mean = self.ensemble_mean(i);
        let n = mean.len();
        let mut cov = Matrix::zeros(n, n);
        for member in &self.psi_bar {
            for r in 0..n {
                for c in 0..n {
                    cov[(r, c)] += (member[i][r] - mean[r]) * (member[i][c] - mean[c]);
                }
            }
        }
        cov.scale(1.0 / self.psi_bar.len().max(1) as f64)
    }

    pub fn series(&self) -> Series {
        let n = self.psi.first().map_or(0, Vec::len);
        let mut cols: Vec<String> = Vec::new();
        for name in ["x", "psi", "psi_bar_mean"] {
            cols.extend((0..n).map(|i| format!("{name}_{i}")));
        }
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut s = Series::new("paths", &col_refs);
        for (i, &t) in self.times.iter().enumerate() {
            let mut row = self.x[i].clone();
            row.extend(&self.psi[i]);
            row.extend(self.ensemble_mean(i));
            s.push(t, row, f64::NAN);
        }
        s
    }
}

/// Simulates one replica of the coupled system from the trajectory start `s = traj.start()`
/// with `X_s = x_signal`, `ψ_s = x_filter` and `Q = traj.initial()`, recording every
/// `record_every` simulation steps up to `s + noise.horizon`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    x_signal: &[f64],
    x_filter: &[f64],
    noise: &NoiseBundle,
    n_ensemble: usize,
    init: EnsembleInit,
    replica: u64,
    record_every: usize,
) -> Result<CoupledPathBundle> {
    simulate_coupled_coarse(
        model,
        traj,
        x_signal,
        x_filter,
        noise,
        1,
        n_ensemble,
        init,
        replica,
        record_every,
    )
}

/// [`simulate_coupled`] on the coarser step `coarsen · noise.step`, with increments summed
/// from the same base draws.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled_coarse(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    x_signal: &[f64],
    x_filter: &[f64],
    noise: &NoiseBundle,
    coarsen: usize,
    n_ensemble: usize,
    init: EnsembleInit,
    replica: u64,
    record_every: usize,
) -> Result<CoupledPathBundle> {
    check_dims(model, &[x_signal, x_filter])?;
    if coarsen == 0 || record_every == 0 || !noise.steps().is_multiple_of(coarsen) {
        return Err(Error::InvalidArgument(format!(
            "coarsening {coarsen} must divide the {} base steps and record_every must be positive",
            noise.steps()
        )));
    }
    let steps = noise.steps() / coarsen;
    let sched = Schedule::build(model, traj.start(), noise, coarsen, steps.max(1))?;
    let gains = Gains::build(model, traj, &sched)?;
    let mut record: Vec<usize> = (0..=steps).step_by(record_every).collect();
    if record.last() != Some(&steps) {
        record.push(steps);
    }
    let q_sqrt = traj.initial().sqrt()?;
    let mut filters = [FilterState {
        gains: &gains,
        psi: x_filter.to_vec(),
        bars: initial_members(noise, replica, init, x_filter, &q_sqrt, n_ensemble),
    }];
    let mut x = x_signal.to_vec();
    let mut out = CoupledPathBundle {
        times: Vec::new(),
        x: Vec::new(),
        dy: Vec::with_capacity(steps),
        psi: Vec::new(),
        psi_bar: vec![Vec::new(); n_ensemble],
        phi: Vec::new(),
        replica,
        replication: Replication {
            seed: noise.seed,
            step: sched.h,
            n_mc: 1,
        },
    };
    let run = ReplicaRun {
        sched: &sched,
        noise,
        replica,
    };
    let mut recorded = Vec::new();
    run.run(
        &mut x,
        &mut filters,
        steps,
        &record,
        |k, x, f| recorded.push((k, x.to_vec(), f[0].psi.clone(), f[0].bars.clone())),
        |_, dy| out.dy.push(dy.to_vec()),
    )?;
    for (k, x, psi, bars) in recorded {
        let t = sched.time(k);
        out.times.push(t);
        out.x.push(x);
        out.psi.push(psi);
        for (j, b) in bars.into_iter().enumerate() {
            out.psi_bar[j].push(b);
        }
        out.phi.push(traj.eval(t.min(traj.end()))?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------------------
// Conditional bias

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BiasPoint {
    pub t: f64,
    /// `‖𝔼(ψ_t − X_t | X_s)‖₂`, estimated.
    pub bias: f64,
    pub stderr: f64,
    /// `α_safe e^{−β(t−s)}‖x − X_s‖₂`.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BiasCheck {
    pub points: Vec<BiasPoint>,
    pub check: CheckRecord,
    pub replication: Replication,
}

/// Monte Carlo estimate of the conditional filter bias given `X_s = x_s` and `ψ_s = x`, at
/// absolute times `t_grid`, against the Bucy decay bound plus three standard errors.
#[allow(clippy::too_many_arguments)]
pub fn conditional_bias(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    rates: &BucyRates<f64>,
    x: &[f64],
    x_s: &[f64],
    t_grid: &[f64],
    n_mc: usize,
    noise: &NoiseBundle,
) -> Result<BiasCheck> {
    check_dims(model, &[x, x_s])?;
    let setup = McSetup::new(model, traj.start(), t_grid, noise, 1)?;
    let gains = Gains::build(model, traj, &setup.sched)?;
    let errors: Vec<Vec<Vec<f64>>> = replicas(n_mc, |r| {
        let mut x_sig = x_s.to_vec();
        let mut filters = [FilterState {
            gains: &gains,
            psi: x.to_vec(),
            bars: Vec::new(),
        }];
        let mut errs = Vec::with_capacity(setup.record.len());
        ReplicaRun {
            sched: &setup.sched,
            noise,
            replica: r,
        }
        .run(
            &mut x_sig,
            &mut filters,
            setup.upto,
            &setup.record,
            |_, xs, f| errs.push(f[0].psi.iter().zip(xs).map(|(p, q)| p - q).collect()),
            |_, _| {},
        )?;
        Ok(errs)
    })?;
    let d0 = dist(x, x_s);
    let mut check = CheckRecord::new(
        "filter-conditional-bias",
        "‖𝔼(ψ_{s,t}(x,Q) − X_t | X_s)‖ ≤ α_safe e^{−β(t−s)}‖x − X_s‖ + 3·stderr",
        0.0,
        0.0,
    );
    let mut points = Vec::with_capacity(setup.times.len());
    for (i, &t) in setup.times.iter().enumerate() {
        let n = x.len();
        let mut sq = 0.0;
        let mut var_sum = 0.0;
        for comp in 0..n {
            let (m, se) = mean_and_stderr(errors.iter().map(|e| e[i][comp]));
            sq += m * m;
            var_sum += se * se;
        }
        let (bias, stderr) = (sq.sqrt(), var_sum.sqrt());
        let bound = rates.alpha_safe * (-rates.beta * (t - traj.start())).exp() * d0;
        check.record(bias, bound + 3.0 * stderr);
        points.push(BiasPoint {
            t,
            bias,
            stderr,
            bound,
        });
    }
    Ok(BiasCheck {
        points,
        check,
        replication: Replication {
            seed: noise.seed,
            step: noise.step,
            n_mc,
        },
    })
}

// ---------------------------------------------------------------------------------------
// Fluctuation statistics

/// `(e²/√2)[½ + δ + √δ]σ²`.
pub fn event_threshold(delta: f64, sigma_q: f64) -> f64 {
    let e2 = std::f64::consts::E.powi(2);
    e2 / std::f64::consts::SQRT_2 * (0.5 + delta + delta.sqrt()) * sigma_q * sigma_q
}

/// Samples of `N_{s,t} = ψ_t − X_t − E_{s,t}(Q)(x − X_s)` (filter, or diffusion member 0
/// started at `x`), indexed `[replica][time]`.
#[allow(clippy::too_many_arguments)]
fn fluctuation_norms(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    x: &[f64],
    x_s: &[f64],
    setup: &McSetup,
    n_mc: usize,
    noise: &NoiseBundle,
    target: Target,
) -> Result<Vec<Vec<f64>>> {
    let gains = Gains::build(model, traj, &setup.sched)?;
    let e = semigroup_path(traj, None, traj.start(), &setup.times)?;
    let d0: Vec<f64> = x.iter().zip(x_s).map(|(a, b)| a - b).collect();
    let mean_err: Vec<Vec<f64>> = e.iter().map(|m| m.mul_vec(&d0)).collect();
    let members = usize::from(target == Target::Diffusion);
    replicas(n_mc, |r| {
        let mut x_sig = x_s.to_vec();
        let mut filters = [FilterState {
            gains: &gains,
            psi: x.to_vec(),
            bars: vec![x.to_vec(); members],
        }];
        let mut out = Vec::with_capacity(setup.record.len());
        let mut i = 0;
        ReplicaRun {
            sched: &setup.sched,
            noise,
            replica: r,
        }
        .run(
            &mut x_sig,
            &mut filters,
            setup.upto,
            &setup.record,
            |_, xs, f| {
                let est = match target {
                    Target::Filter => &f[0].psi,
                    Target::Diffusion => &f[0].bars[0],
                };
                let nrm = est
                    .iter()
                    .zip(xs)
                    .zip(&mean_err[i])
                    .map(|((p, q), m)| (p - q - m) * (p - q - m))
                    .sum::<f64>()
                    .sqrt();
                out.push(nrm);
                i += 1;
            },
            |_, _| {},
        )?;
        Ok(out)
    })
}

/// `σ(Q)` for models without a steady-state ledger: the semigroup envelope
/// `ρ(Q)e^{−β(t−s)}` stands in for `κ_E(Q)e^{−ν(t−s)}`, where
/// `ρ(Q) = (α_safe∨1) exp[(β + sup‖A‖ + sup‖φ(Q)‖ sup‖S‖)υ]`. Suprema are taken over the
/// trajectory range, `Q = traj.initial()`.
pub fn envelope_sigma(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    rates: &BucyRates<f64>,
    upsilon: f64,
) -> Result<f64> {
    let fb = model.flow_bounds(traj.end(), 257)?;
    let phi = traj
        .values()
        .iter()
        .map(|v| v.sym().max_eig())
        .fold(0.0, f64::max);
    let beta = rates.beta;
    if !(beta > 0.0) {
        return Err(Error::NotCertifiable(format!("β = {beta} is not positive")));
    }
    let rho =
        rates.alpha_safe.max(1.0) * ((beta + fb.sup_a_norm + phi * fb.sup_s_norm) * upsilon).exp();
    let r1 = model.state_dim() as f64;
    let r1_norm = model.r1_cov().sym().max_eig();
    let sigma = 8f64.sqrt() * rho * ((phi * phi * fb.sup_s_norm + r1_norm) * r1 / beta).sqrt();
    if !sigma.is_finite() {
        return Err(Error::NonFinite("envelope σ(Q) overflows".into()));
    }
    Ok(sigma)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EventCheckResult {
    pub target: Target,
    pub t: f64,
    pub delta: f64,
    pub sigma: f64,
    pub threshold: f64,
    pub violation_rate: f64,
    pub n_samples: usize,
    /// `e^{−δ}`.
    pub bound: f64,
    /// Binomial three-sigma slack.
    pub slack: f64,
    pub passed: bool,
    pub replication: Replication,
}

/// Violation rates of the fluctuation event at time `t` for every `δ` in `deltas`, sharing one
/// set of replicas. `sigma` is `σ(Q)` for `Q = traj.initial()`, from
/// [`StabilityConstants::sigma`] or [`envelope_sigma`].
#[allow(clippy::too_many_arguments)]
pub fn event_rates(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    sigma: f64,
    x: &[f64],
    x_s: &[f64],
    t: f64,
    deltas: &[f64],
    n_mc: usize,
    noise: &NoiseBundle,
    target: Target,
) -> Result<Vec<EventCheckResult>> {
    check_dims(model, &[x, x_s])?;
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "δ must be non-negative, got {d}"
        )));
    }
    let setup = McSetup::new(model, traj.start(), &[t], noise, 1)?;
    let norms = fluctuation_norms(model, traj, x, x_s, &setup, n_mc, noise, target)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "σ(Q) must be positive, got {sigma}"
        )));
    }
    let inflate = if target == Target::Diffusion {
        std::f64::consts::SQRT_2
    } else {
        1.0
    };
    Ok(deltas
        .iter()
        .map(|&delta| {
            let threshold = inflate * event_threshold(delta, sigma);
            let violations = norms.iter().filter(|v| v[0] > threshold).count();
            let rate = violations as f64 / n_mc as f64;
            let bound = (-delta).exp();
            let slack = 3.0 * (bound * (1.0 - bound) / n_mc as f64).sqrt();
            EventCheckResult {
                target,
                t: setup.times[0],
                delta,
                sigma,
                threshold,
                violation_rate: rate,
                n_samples: n_mc,
                bound,
                slack,
                passed: rate <= bound + slack,
                replication: Replication {
                    seed: noise.seed,
                    step: noise.step,
                    n_mc,
                },
            }
        })
        .collect())
}

/// Single-`δ` form of [`event_rates`].
#[allow(clippy::too_many_arguments)]
pub fn verify_event_probability(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    sigma: f64,
    x: &[f64],
    x_s: &[f64],
    t: f64,
    delta: f64,
    n_mc: usize,
    noise: &NoiseBundle,
    target: Target,
) -> Result<EventCheckResult> {
    Ok(event_rates(model, traj, sigma, x, x_s, t, &[delta], n_mc, noise, target)?.remove(0))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentPoint {
    pub t: f64,
    pub order: u32,
    /// `𝔼(‖·‖^{2n})^{1/n}` for moment checks, `𝔼(‖·‖^{2n})^{1/(2n)}` for contraction checks.
    pub measured: f64,
    /// `𝔼(‖·‖^{2n})^{1/(2n)}`.
    pub lp_norm: f64,
    pub bound: f64,
    /// Bound inflated by three standard errors of the underlying mean.
    pub bound_with_slack: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentCheck {
    pub target: Target,
    pub points: Vec<MomentPoint>,
    pub check: CheckRecord,
    pub replication: Replication,
}

/// Empirical `𝔼(v^{2n})` with its standard error, over replicas, at recorded index `i`.
fn power_moment(samples: &[Vec<f64>], i: usize, order: u32) -> (f64, f64) {
    mean_and_stderr(samples.iter().map(|v| v[i].powi(2 * order as i32)))
}

/// Conditional `L_{2n}` control of the fluctuation `N_{s,t}`: `𝔼(‖N‖^{2n})^{1/n} ≤ nσ²(Q)`
/// for the filter and `2nσ²(Q)` for the diffusion.
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_check(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    constants: &StabilityConstants<f64>,
    x: &[f64],
    x_s: &[f64],
    t_grid: &[f64],
    orders: &[u32],
    n_mc: usize,
    noise: &NoiseBundle,
    target: Target,
) -> Result<MomentCheck> {
    check_dims(model, &[x, x_s])?;
    if orders.contains(&0) {
        return Err(Error::InvalidArgument(
            "moment orders must be at least 1".into(),
        ));
    }
    let setup = McSetup::new(model, traj.start(), t_grid, noise, 1)?;
    let norms = fluctuation_norms(model, traj, x, x_s, &setup, n_mc, noise, target)?;
    let sigma2 = constants.sigma(traj.initial().sym()).powi(2);
    let factor = if target == Target::Diffusion {
        2.0
    } else {
        1.0
    };
    let name = match target {
        Target::Filter => "filter-moment-bound",
        Target::Diffusion => "diffusion-moment-bound",
    };
    let mut check = CheckRecord::new(
        name,
        "𝔼(‖N_{s,t}‖^{2n} | X_s)^{1/n} ≤ c·n·σ²(Q), c = 1 filter, 2 diffusion",
        0.0,
        0.0,
    );
    let mut points = Vec::new();
    for (i, &t) in setup.times.iter().enumerate() {
        for &order in orders {
            let (m, se) = power_moment(&norms, i, order);
            let nf = f64::from(order);
            let bound = factor * nf * sigma2;
            let with_slack = (bound.powf(nf) + 3.0 * se).powf(1.0 / nf);
            let measured = m.powf(1.0 / nf);
            check.record(measured, with_slack);
            points.push(MomentPoint {
                t,
                order,
                measured,
                lp_norm: m.powf(0.5 / nf),
                bound,
                bound_with_slack: with_slack,
            });
        }
    }
    Ok(MomentCheck {
        target,
        points,
        check,
        replication: Replication {
            seed: noise.seed,
            step: noise.step,
            n_mc,
        },
    })
}

/// Almost-sure local contraction: `𝔼(‖ψ(x₁,Q₁) − ψ(x₂,Q₂)‖^{2n} | X_s)^{1/(2n)}` against
/// `κ_E(Q₁)e^{−ν(t−s)}‖x₁−x₂‖ + c·e^{−ν(t−s)}χ₀(Q₁,Q₂){χ₁(Q₂)‖x₂−X_s‖ + √n χ₂(Q₁)}‖Q₁−Q₂‖`,
/// with `c = 1` for the filter and `√2` for the diffusion. Both processes share all noise.
#[allow(clippy::too_many_arguments)]
pub fn contraction_check(
    model: &SignalModel<f64>,
    traj1: &RiccatiTrajectory<f64>,
    traj2: &RiccatiTrajectory<f64>,
    constants: &StabilityConstants<f64>,
    x1: &[f64],
    x2: &[f64],
    x_s: &[f64],
    t_grid: &[f64],
    orders: &[u32],
    n_mc: usize,
    noise: &NoiseBundle,
    target: Target,
) -> Result<MomentCheck> {
    check_dims(model, &[x1, x2, x_s])?;
    if (traj1.start() - traj2.start()).abs() > 1e-12 {
        return Err(Error::InvalidArgument(
            "both trajectories must start at the same time".into(),
        ));
    }
    if orders.contains(&0) {
        return Err(Error::InvalidArgument(
            "moment orders must be at least 1".into(),
        ));
    }
    let s = traj1.start();
    let setup = McSetup::new(model, s, t_grid, noise, 1)?;
    let g1 = Gains::build(model, traj1, &setup.sched)?;
    let g2 = Gains::build(model, traj2, &setup.sched)?;
    let members = usize::from(target == Target::Diffusion);
    let diffs: Vec<Vec<f64>> = replicas(n_mc, |r| {
        let mut x_sig = x_s.to_vec();
        let mut filters = [
            FilterState {
                gains: &g1,
                psi: x1.to_vec(),
                bars: vec![x1.to_vec(); members],
            },
            FilterState {
                gains: &g2,
                psi: x2.to_vec(),
                bars: vec![x2.to_vec(); members],
            },
        ];
        let mut out = Vec::with_capacity(setup.record.len());
        ReplicaRun {
            sched: &setup.sched,
            noise,
            replica: r,
        }
        .run(
            &mut x_sig,
            &mut filters,
            setup.upto,
            &setup.record,
            |_, _, f| {
                out.push(match target {
                    Target::Filter => dist(&f[0].psi, &f[1].psi),
                    Target::Diffusion => dist(&f[0].bars[0], &f[1].bars[0]),
                })
            },
            |_, _| {},
        )?;
        Ok(out)
    })?;

    let (q1, q2) = (traj1.initial().sym(), traj2.initial().sym());
    let dq = q1.sub(q2).norm2();
    let ke = constants.kappa_e(q1);
    let chi0 = constants.chi0(q1, q2);
    let chi1 = constants.chi1(q2);
    let chi2 = constants.chi2(q1);
    let c = if target == Target::Diffusion {
        std::f64::consts::SQRT_2
    } else {
        1.0
    };
    let (dx, dxs) = (dist(x1, x2), dist(x2, x_s));
    let name = match target {
        Target::Filter => "filter-contraction",
        Target::Diffusion => "diffusion-contraction",
    };
    let mut check = CheckRecord::new(
        name,
        "𝔼(‖ψ(x₁,Q₁)−ψ(x₂,Q₂)‖^{2n}|X_s)^{1/2n} ≤ κ_E e^{−ν(t−s)}‖x₁−x₂‖ + c e^{−ν(t−s)}χ₀{χ₁‖x₂−X_s‖ + √n χ₂}‖Q₁−Q₂‖",
        0.0,
        1e-12,
    );
    let mut points = Vec::new();
    for (i, &t) in setup.times.iter().enumerate() {
        let decay = (-constants.nu * (t - s)).exp();
        for &order in orders {
            let nf = f64::from(order);
            let second = if dq == 0.0 {
                0.0
            } else {
                c * decay * chi0 * (chi1 * dxs + nf.sqrt() * chi2) * dq
            };
            let first = if dx == 0.0 { 0.0 } else { ke * decay * dx };
            let bound = first + second;
            let (m, se) = power_moment(&diffs, i, order);
            let with_slack = (bound.powf(2.0 * nf) + 3.0 * se).powf(0.5 / nf);
            let lp = m.powf(0.5 / nf);
            check.record(lp, with_slack);
            points.push(MomentPoint {
                t,
                order,
                measured: lp,
                lp_norm: lp,
                bound,
                bound_with_slack: with_slack,
            });
        }
    }
    Ok(MomentCheck {
        target,
        points,
        check,
        replication: Replication {
            seed: noise.seed,
            step: noise.step,
            n_mc,
        },
    })
}

// ---------------------------------------------------------------------------------------
// Ensemble consistency and integrator order

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnsembleErrorRow {
    pub n_ensemble: usize,
    /// RMS of `‖mean(ψ̄) − ψ‖₂` over replicas and grid times.
    pub mean_error: f64,
    /// RMS of `‖cov(ψ̄) − φ_t(Q)‖₂` over replicas and grid times.
    pub cov_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleConsistency {
    pub init: EnsembleInit,
    pub rows: Vec<EnsembleErrorRow>,
    /// Fitted `γ` in `error ∝ n^{−γ}`.
    pub mean_exponent: f64,
    pub cov_exponent: f64,
    pub replication: Replication,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Convergence of the ensemble mean and covariance of the diffusion to `ψ` and `φ_t(Q)` as
/// the ensemble grows, for an initial law with mean `x` and covariance `Q`.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_consistency(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    x: &[f64],
    x_s: &[f64],
    t_grid: &[f64],
    sizes: &[usize],
    n_replicas: usize,
    init: EnsembleInit,
    noise: &NoiseBundle,
) -> Result<EnsembleConsistency> {
    check_dims(model, &[x, x_s])?;
    if sizes.len() < 2 || sizes.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument(
            "need at least two ensemble sizes of at least 2".into(),
        ));
    }
    let setup = McSetup::new(model, traj.start(), t_grid, noise, 1)?;
    let gains = Gains::build(model, traj, &setup.sched)?;
    let q_sqrt = traj.initial().sqrt()?;
    let phis: Vec<Matrix<f64>> = setup
        .times
        .iter()
        .map(|&t| traj.eval(t))
        .collect::<Result<_>>()?;
    let nx = x.len();
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let per_rep: Vec<(f64, f64)> = (0..n_replicas as u64)
            .map(|r| {
                let bars = initial_members(noise, r, init, x, &q_sqrt, size);
                let mut filters = [FilterState {
                    gains: &gains,
                    psi: x.to_vec(),
                    bars,
                }];
                let mut x_sig = x_s.to_vec();
                let mut acc = (0.0, 0.0);
                let mut i = 0;
                ReplicaRun {
                    sched: &setup.sched,
                    noise,
                    replica: r,
                }
                .run(
                    &mut x_sig,
                    &mut filters,
                    setup.upto,
                    &setup.record,
                    |_, _, f| {
                        let mut mean = vec![0.0; nx];
                        for b in &f[0].bars {
                            mean.iter_mut()
                                .zip(b)
                                .for_each(|(a, v)| *a += v / size as f64);
                        }
                        let mut cov = Matrix::zeros(nx, nx);
                        for b in &f[0].bars {
                            for rr in 0..nx {
                                for cc in 0..nx {
                                    cov[(rr, cc)] +=
                                        (b[rr] - mean[rr]) * (b[cc] - mean[cc]) / size as f64;
                                }
                            }
                        }
                        let me = dist(&mean, &f[0].psi);
                        let ce = norm2(&(&cov - &phis[i]));
                        acc.0 += me * me;
                        acc.1 += ce * ce;
                        i += 1;
                    },
                    |_, _| {},
                )?;
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        let count = (n_replicas * setup.times.len()) as f64;
        let mean_error = (per_rep.iter().map(|p| p.0).sum::<f64>() / count).sqrt();
        let cov_error = (per_rep.iter().map(|p| p.1).sum::<f64>() / count).sqrt();
        rows.push(EnsembleErrorRow {
            n_ensemble: size,
            mean_error,
            cov_error,
        });
    }
    let mean_exponent = -loglog_slope(
        &rows
            .iter()
            .map(|r| (r.n_ensemble as f64, r.mean_error))
            .collect::<Vec<_>>(),
    );
    let cov_exponent = -loglog_slope(
        &rows
            .iter()
            .map(|r| (r.n_ensemble as f64, r.cov_error))
            .collect::<Vec<_>>(),
    );
    Ok(EnsembleConsistency {
        init,
        rows,
        mean_exponent,
        cov_exponent,
        replication: Replication {
            seed: noise.seed,
            step: noise.step,
            n_mc: n_replicas,
        },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StrongOrder {
    pub steps: Vec<f64>,
    /// RMS pathwise error at the horizon against the base-step reference.
    pub rms_errors: Vec<f64>,
    /// Fitted `γ` in `error ∝ h^γ`.
    pub exponent: f64,
    pub replication: Replication,
}

/// Pathwise RMS error at the horizon of the filter and one diffusion member on coarsened
/// grids, against the base-step simulation driven by the same increments.
pub fn strong_order(
    model: &SignalModel<f64>,
    traj: &RiccatiTrajectory<f64>,
    x: &[f64],
    x_s: &[f64],
    coarsenings: &[usize],
    n_mc: usize,
    noise: &NoiseBundle,
) -> Result<StrongOrder> {
    check_dims(model, &[x, x_s])?;
    let end_state = |coarsen: usize, r: u64| -> Result<Vec<f64>> {
        let b = simulate_coupled_coarse(
            model,
            traj,
            x_s,
            x,
            noise,
            coarsen,
            1,
            EnsembleInit::Dirac,
            r,
            usize::MAX,
        )?;
        let mut v = b.psi.last().cloned().unwrap_or_default();
        v.extend(b.psi_bar[0].last().cloned().unwrap_or_default());
        v.extend(b.x.last().cloned().unwrap_or_default());
        Ok(v)
    };
    let reference: Vec<Vec<f64>> = replicas(n_mc, |r| end_state(1, r))?;
    let mut steps = Vec::new();
    let mut rms_errors = Vec::new();
    for &c in coarsenings {
        let errs: Vec<f64> = replicas(n_mc, |r| {
            Ok(dist(&end_state(c, r)?, &reference[r as usize]).powi(2))
        })?;
        steps.push(noise.step * c as f64);
        rms_errors.push((errs.iter().sum::<f64>() / n_mc as f64).sqrt());
    }
    let exponent = loglog_slope(
        &steps
            .iter()
            .copied()
            .zip(rms_errors.iter().copied())
            .collect::<Vec<_>>(),
    );
    Ok(StrongOrder {
        steps,
        rms_errors,
        exponent,
        replication: Replication {
            seed: noise.seed,
            step: noise.step,
            n_mc,
        },
    })
}

/// `Q` as a dense matrix square root, exposed for callers drawing their own initial laws.
pub fn covariance_root(q: &SpdMat<f64>) -> Result<Matrix<f64>> {
    q.sqrt()
}
