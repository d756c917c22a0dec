//! One runner per sub-command. Every runner fills an [`Outcome`]; nothing touches the disk here.

use anyhow::{anyhow, Context, Result};
use clap::ValueEnum;
use kbstab::certify::{certify_riccati, certify_semigroup, probe_covariances, CertifyOptions};
use kbstab::check::{CheckRecord, Series};
use kbstab::flow::linspace;
use kbstab::gramian::{rank_conditions, uniformity_constants};
use kbstab::riccati::{are_tolerance, integrate_dre, solve_are, RiccatiTrajectory};
use kbstab::stochastic::{
    conditional_bias, contraction_check, ensemble_consistency, envelope_sigma, event_rates,
    moment_bound_check, simulate_coupled, MomentCheck, NoiseBundle, Replication, Target,
};
use kbstab::suite::{analyze, normal_source, Analysis};
use kbstab::{Error, Spd, Sym};
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Gramians,
    SolveAre,
    IntegrateDre,
    Bounds,
    Constants,
    CertifySemigroup,
    CertifyRiccati,
    Simulate,
    VerifyEvents,
    VerifyMoments,
    VerifyContraction,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gramians => "gramians",
            Command::SolveAre => "solve-are",
            Command::IntegrateDre => "integrate-dre",
            Command::Bounds => "bounds",
            Command::Constants => "constants",
            Command::CertifySemigroup => "certify-semigroup",
            Command::CertifyRiccati => "certify-riccati",
            Command::Simulate => "simulate",
            Command::VerifyEvents => "verify-events",
            Command::VerifyMoments => "verify-moments",
            Command::VerifyContraction => "verify-contraction",
            Command::Report => "report",
        }
    }

    fn needs_seed(self) -> bool {
        matches!(
            self,
            Command::Simulate
                | Command::VerifyEvents
                | Command::VerifyMoments
                | Command::VerifyContraction
        )
    }
}

/// Everything a run produces before it is written out.
#[derive(Debug, Default, Serialize)]
pub struct Outcome {
    pub checks: Vec<CheckRecord>,
    #[serde(skip)]
    pub series: Vec<Series>,
    pub replication: Option<Replication>,
    pub results: serde_json::Map<String, Value>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckRecord::acceptable)
    }

    fn put(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.results
            .insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }
}

/// Runs `command`; `seed` overrides the scenario's Monte Carlo seed.
pub fn run(scenario: &Scenario, command: Command, seed: Option<u64>) -> Result<Outcome> {
    let seed = seed.or(scenario.mc.seed);
    if command.needs_seed() && seed.is_none() {
        return Err(anyhow!(Error::InvalidArgument(format!(
            "`{}` needs a Monte Carlo seed: set `mc.seed` or pass --seed",
            command.name()
        ))));
    }
    let mut ctx = RunState::new(scenario, seed)?;
    let mut out = Outcome::default();
    match command {
        Command::Gramians => gramians(&mut ctx, &mut out),
        Command::SolveAre => solve(&mut ctx, &mut out),
        Command::IntegrateDre => dre(&mut ctx, &mut out),
        Command::Bounds => bounds(&mut ctx, &mut out),
        Command::Constants => constants(&mut ctx, &mut out),
        Command::CertifySemigroup => semigroup(&mut ctx, &mut out),
        Command::CertifyRiccati => riccati(&mut ctx, &mut out),
        Command::Simulate => simulate(&mut ctx, &mut out),
        Command::VerifyEvents => events(&mut ctx, &mut out),
        Command::VerifyMoments => moments(&mut ctx, &mut out),
        Command::VerifyContraction => contraction(&mut ctx, &mut out),
        Command::Report => report(&mut ctx, &mut out),
    }?;
    Ok(out)
}

/// Shared, lazily computed state of one run.
struct RunState<'a> {
    sc: &'a Scenario,
    seed: Option<u64>,
    model: kbstab::Model,
    analysis: Option<Analysis>,
}

impl<'a> RunState<'a> {
    fn new(sc: &'a Scenario, seed: Option<u64>) -> Result<Self> {
        let model = sc.model.build().context("building the signal model")?;
        Ok(Self {
            sc,
            seed,
            model,
            analysis: None,
        })
    }

    fn analysis(&mut self) -> Result<&Analysis> {
        if self.analysis.is_none() {
            let a = &self.sc.analysis;
            let an =
                analyze(&self.model, a.upsilon, a.horizon, a.grid).context("analysis stage")?;
            self.analysis = Some(an);
        }
        Ok(self.analysis.as_ref().expect("just computed"))
    }

    fn options(&self) -> CertifyOptions {
        let a = &self.sc.analysis;
        CertifyOptions {
            window: a.window,
            samples: a.samples,
            dre_step: a.dre_step,
            loewner_tol: a.loewner_tol,
            rel_tol: a.rel_tol,
            rate_slack: a.rate_slack,
        }
    }

    fn covariances(&self) -> Result<Vec<Spd>> {
        let a = &self.sc.analysis;
        if a.covariances.is_empty() {
            let n = self.model.state_dim();
            return Ok(probe_covariances(
                n,
                a.probe_count,
                normal_source(a.probe_seed, 1),
            )?);
        }
        a.covariances
            .iter()
            .map(|m| Ok(Spd::certify(Sym::new(m)?)?))
            .collect()
    }

    fn noise(&self) -> Result<NoiseBundle> {
        let seed = self
            .seed
            .ok_or_else(|| Error::InvalidArgument("Monte Carlo seed missing".into()))?;
        Ok(NoiseBundle::new(seed, self.sc.mc.step, self.sc.mc.horizon)?)
    }

    /// The filter covariance: `mc.q`, else the ARE solution.
    fn q(&mut self) -> Result<Spd> {
        if let Some(q) = &self.sc.mc.q {
            return Ok(Spd::certify(Sym::new(q)?)?);
        }
        match &self.analysis()?.are {
            Some(are) => Ok(are.p.clone()),
            None => Err(anyhow!(Error::InvalidArgument(
                "time-varying models need an explicit `mc.q`".into()
            ))),
        }
    }

    fn q2(&mut self) -> Result<Spd> {
        if let Some(q) = &self.sc.mc.q2 {
            return Ok(Spd::certify(Sym::new(q)?)?);
        }
        let q = self.q()?;
        Ok(Spd::certify(q.sym().scale(1.05))?)
    }

    fn trajectory(&self, q: &Spd) -> Result<RiccatiTrajectory<f64>> {
        integrate_dre(
            &self.model,
            0.0,
            self.sc.mc.horizon,
            q,
            self.sc.analysis.dre_step,
        )
        .context("Riccati stage")
    }

    fn mc_grid(&self) -> Vec<f64> {
        let k = self.sc.mc.grid_points;
        (1..=k)
            .map(|i| self.sc.mc.horizon * i as f64 / k as f64)
            .collect()
    }

    fn record_every(&self) -> usize {
        let steps = (self.sc.mc.horizon / self.sc.mc.step).round() as usize;
        (steps / 200).max(1)
    }
}

fn flag_check(name: &str, statement: &str, ok: bool) -> CheckRecord {
    let mut c = CheckRecord::new(name, statement, 0.0, 0.0);
    c.record(if ok { 0.0 } else { 1.0 }, 0.0);
    c
}

fn gramians(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let a = &ctx.sc.analysis;
    let report =
        uniformity_constants(&ctx.model, a.upsilon, a.horizon, a.grid).context("Gramian stage")?;
    out.checks.push(flag_check(
        "gramian-uniformity",
        "controllability and observability Gramians are uniformly positive definite and bounded on windows of length υ",
        report.certifiable,
    ));
    out.put("spectrum_interval", report.spectrum_interval())?;
    if ctx.model.is_time_invariant() {
        out.put("rank_conditions", rank_conditions(&ctx.model)?)?;
    }
    out.put("gramians", &report)
}

fn solve(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let are = solve_are(&ctx.model).context("ARE stage")?;
    let mut c = CheckRecord::new(
        "are-residual",
        "‖Ricc(P)‖_F ≤ 1e-11·(1 + ‖P‖₂) with A − PS stable",
        0.0,
        0.0,
    );
    c.record(are.residual_norm, are_tolerance(are.p.sym().norm2()));
    c.record(are.closed_loop_abscissa, 0.0);
    out.checks.push(c);
    out.put("are", are)
}

fn dre(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let horizon = ctx.sc.analysis.horizon;
    let mut summary = Vec::new();
    for (k, q) in ctx.covariances()?.iter().enumerate() {
        let tr = integrate_dre(&ctx.model, 0.0, horizon, q, ctx.sc.analysis.dre_step)
            .with_context(|| format!("Riccati stage, covariance {k}"))?;
        let header = tr.csv_header();
        let mut s = Series::new(
            &format!("dre-{k}"),
            &header[1..header.len()]
                .iter()
                .map(String::as_str)
                .collect::<Vec<_>>(),
        );
        for row in tr.csv_rows()? {
            s.push(row[0], row[1..].to_vec(), f64::NAN);
        }
        out.series.push(s);
        summary.push(json!({
            "index": k,
            "initial": tr.initial(),
            "final": tr.final_value(),
            "rk4_steps": tr.rk4_steps(),
        }));
    }
    out.put("trajectories", summary)
}

fn bounds(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let qs = ctx.covariances()?;
    let opts = ctx.options();
    let an = ctx.analysis()?.clone();
    out.put("spectrum_interval", an.report.spectrum_interval())?;
    out.put("rates", an.rates)?;
    match &an.bounds {
        Some(b) => {
            let cert =
                certify_riccati(&an.model, b, None, &qs, &opts).context("Bucy bound stage")?;
            out.put("bucy_bounds", b)?;
            out.checks.extend(cert.checks);
            out.series.extend(cert.series);
        }
        None => scalar_containment(&an, &qs, &opts, out)?,
    }
    Ok(())
}

/// For time-varying models: the spectrum of `φ_t(Q)` stays in the scalar interval for `t ≥ υ`.
fn scalar_containment(
    an: &Analysis,
    qs: &[Spd],
    opts: &CertifyOptions,
    out: &mut Outcome,
) -> Result<()> {
    let (lo, hi) = an.report.spectrum_interval();
    let ups = an.upsilon();
    let end = an.report.horizon.min(ups + opts.window);
    let mut c = CheckRecord::new(
        "bucy-spectrum",
        "λ(φ_t(Q)) ⊂ [Λ_min − tol, Λ_max + tol] for t ≥ υ",
        0.0,
        opts.loewner_tol,
    );
    let mut series = Series::new("bucy-spectrum", &["lambda_max", "lambda_min"]);
    for q in qs {
        let tr = integrate_dre(&an.model, 0.0, end, q, opts.dre_step).context("Riccati stage")?;
        for t in linspace(ups, end, opts.samples) {
            let e = tr.eval_sym(t)?.eigen()?;
            c.record(e.max(), hi);
            c.record(lo, e.min());
            series.push(t, vec![e.max(), e.min()], hi);
        }
    }
    out.checks.push(c);
    out.series.push(series);
    Ok(())
}

fn constants(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let an = ctx.analysis()?;
    let c = an.require_constants()?;
    let p = c.p.sym();
    out.put("constants", c)?;
    out.put("at_p", c.evaluate(p, p))?;
    out.put("sigma_p", c.sigma(p))?;
    let rates = an.rates;
    let mut check = CheckRecord::new("decay-rates-positive", "β > 0 and ν > 0", 0.0, 0.0);
    check.record(-rates.beta, 0.0);
    check.record(-c.nu, 0.0);
    out.checks.push(check);
    out.put("rates", rates)
}

fn semigroup(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let qs = ctx.covariances()?;
    let opts = ctx.options();
    let an = ctx.analysis()?;
    let cert = certify_semigroup(
        &an.model,
        &an.rates,
        an.upsilon(),
        an.constants.as_ref(),
        &qs,
        &opts,
    )
    .context("semigroup stage")?;
    out.put("rates", an.rates)?;
    out.checks.extend(cert.checks);
    out.series.extend(cert.series);
    Ok(())
}

fn riccati(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let qs = ctx.covariances()?;
    let opts = ctx.options();
    let an = ctx.analysis()?;
    let b = an.bounds.as_ref().ok_or_else(|| {
        Error::InvalidArgument(
            "certify-riccati needs a time-invariant model; use `bounds` for time-varying ones"
                .into(),
        )
    })?;
    let cert = certify_riccati(&an.model, b, an.constants.as_ref(), &qs, &opts)
        .context("Riccati certification stage")?;
    out.put("bucy_bounds", b)?;
    out.put("are", &an.are)?;
    out.checks.extend(cert.checks);
    out.series.extend(cert.series);
    Ok(())
}

fn simulate(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let sc = ctx.sc;
    let noise = ctx.noise()?;
    let q = ctx.q()?;
    let tr = ctx.trajectory(&q)?;
    let mc = &sc.mc;
    let paths = simulate_coupled(
        &ctx.model,
        &tr,
        &mc.x_s,
        &mc.x,
        &noise,
        mc.n_ensemble,
        mc.ensemble_init,
        0,
        ctx.record_every(),
    )
    .context("path simulation stage")?;
    out.series.push(paths.series());
    let rates = ctx.analysis()?.rates;
    let grid = ctx.mc_grid();
    let bias = conditional_bias(
        &ctx.model, &tr, &rates, &mc.x, &mc.x_s, &grid, mc.n_mc, &noise,
    )
    .context("conditional bias stage")?;
    let mut s = Series::new("conditional-bias", &["bias_plus_3se", "bias", "stderr"]);
    for p in &bias.points {
        s.push(
            p.t,
            vec![p.bias + 3.0 * p.stderr, p.bias, p.stderr],
            p.bound,
        );
    }
    out.series.push(s);
    out.checks.push(bias.check.clone());
    out.replication = Some(bias.replication);
    out.put("conditional_bias", &bias.points)?;
    out.put("ensemble_init", mc.ensemble_init)?;
    if mc.ensemble_sizes.len() >= 2 {
        let ens = ensemble_consistency(
            &ctx.model,
            &tr,
            &mc.x,
            &mc.x_s,
            &grid,
            &mc.ensemble_sizes,
            mc.ensemble_replicas,
            mc.ensemble_init,
            &noise,
        )
        .context("ensemble consistency stage")?;
        let mut s = Series::new("ensemble-consistency", &["mean_error", "cov_error"]);
        for r in &ens.rows {
            s.push(
                r.n_ensemble as f64,
                vec![r.mean_error, r.cov_error],
                f64::NAN,
            );
        }
        out.series.push(s);
        out.put("ensemble_consistency", ens)?;
    }
    Ok(())
}

const TARGETS: [Target; 2] = [Target::Filter, Target::Diffusion];

fn target_name(t: Target) -> &'static str {
    match t {
        Target::Filter => "filter",
        Target::Diffusion => "diffusion",
    }
}

fn events(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let sc = ctx.sc;
    let noise = ctx.noise()?;
    let q = ctx.q()?;
    let tr = ctx.trajectory(&q)?;
    let an = ctx.analysis()?;
    // time-varying models have no steady-state ledger; fall back to the ρ(Q), β envelope
    let (sigma, scale) = match &an.constants {
        Some(c) => (c.sigma(tr.initial().sym()), "steady-state"),
        None => (
            envelope_sigma(&an.model, &tr, &an.rates, an.upsilon())?,
            "envelope",
        ),
    };
    let mc = &sc.mc;
    let mut all = Vec::new();
    for target in TARGETS {
        let rows = event_rates(
            &an.model, &tr, sigma, &mc.x, &mc.x_s, mc.horizon, &mc.deltas, mc.n_mc, &noise, target,
        )
        .with_context(|| format!("{} event stage", target_name(target)))?;
        let mut check = CheckRecord::new(
            &format!("{}-event-probability", target_name(target)),
            "ℙ(‖fluctuation‖ > threshold(δ) | X_s) ≤ e^{−δ} + 3·binomial stderr",
            0.0,
            0.0,
        );
        for r in &rows {
            check.record(r.violation_rate, r.bound + r.slack);
        }
        out.checks.push(check);
        all.extend(rows);
    }
    out.replication = all.first().map(|r| r.replication);
    out.put("sigma", json!({ "value": sigma, "constants": scale }))?;
    out.put("events", all)
}

fn moment_series(name: &str, m: &MomentCheck) -> Series {
    let mut s = Series::new(name, &["lp_norm", "order", "measured", "bound_with_slack"]);
    for p in &m.points {
        s.push(
            p.t,
            vec![p.lp_norm, p.order as f64, p.measured, p.bound_with_slack],
            p.bound,
        );
    }
    s
}

fn moments(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let sc = ctx.sc;
    let noise = ctx.noise()?;
    let q = ctx.q()?;
    let tr = ctx.trajectory(&q)?;
    let grid = ctx.mc_grid();
    let an = ctx.analysis()?;
    let c = an.require_constants()?;
    let mc = &sc.mc;
    let mut results = Vec::new();
    for target in TARGETS {
        let m = moment_bound_check(
            &an.model,
            &tr,
            c,
            &mc.x,
            &mc.x_s,
            &grid,
            &mc.moment_orders,
            mc.n_mc,
            &noise,
            target,
        )
        .with_context(|| format!("{} moment stage", target_name(target)))?;
        out.series.push(moment_series(
            &format!("{}-moments", target_name(target)),
            &m,
        ));
        out.checks.push(m.check.clone());
        out.replication = Some(m.replication);
        results.push(m);
    }
    out.put("moments", results)
}

fn contraction(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    let sc = ctx.sc;
    let noise = ctx.noise()?;
    let (q1, q2) = (ctx.q()?, ctx.q2()?);
    let (tr1, tr2) = (ctx.trajectory(&q1)?, ctx.trajectory(&q2)?);
    let grid = ctx.mc_grid();
    let an = ctx.analysis()?;
    let c = an.require_constants()?;
    let mc = &sc.mc;
    let mut results = Vec::new();
    for target in TARGETS {
        let m = contraction_check(
            &an.model,
            &tr1,
            &tr2,
            c,
            &mc.x,
            &mc.x2,
            &mc.x_s,
            &grid,
            &mc.moment_orders,
            mc.n_mc,
            &noise,
            target,
        )
        .with_context(|| format!("{} contraction stage", target_name(target)))?;
        out.series.push(moment_series(
            &format!("{}-contraction", target_name(target)),
            &m,
        ));
        if m.points.iter().any(|p| !p.bound.is_finite()) {
            out.put(
                &format!("{}_contraction_note", target_name(target)),
                "bound overflows: Q₁ and Q₂ are too far from P",
            )?;
        }
        out.checks.push(m.check.clone());
        out.replication = Some(m.replication);
        results.push(m);
    }
    out.put("contraction", results)
}

/// Aggregate: every deterministic stage, plus the Monte Carlo stages when a seed is set.
/// Steady-state stages are skipped for time-varying models.
fn report(ctx: &mut RunState, out: &mut Outcome) -> Result<()> {
    type Stage = fn(&mut RunState, &mut Outcome) -> Result<()>;
    let invariant = ctx.model.is_time_invariant();
    let mut stages: Vec<(&str, Stage)> = vec![
        ("gramians", gramians),
        ("bounds", bounds),
        ("certify-semigroup", semigroup),
    ];
    if invariant {
        stages.extend([
            ("solve-are", solve as Stage),
            ("constants", constants),
            ("certify-riccati", riccati),
        ]);
    }
    if ctx.seed.is_some() {
        stages.extend([("simulate", simulate as Stage), ("verify-events", events)]);
        if invariant {
            stages.extend([
                ("verify-moments", moments as Stage),
                ("verify-contraction", contraction),
            ]);
        }
    }
    let mut sections = serde_json::Map::new();
    for (name, stage) in stages {
        let mut part = Outcome::default();
        stage(ctx, &mut part).with_context(|| format!("report stage `{name}`"))?;
        for c in &mut part.checks {
            c.name = format!("{name}/{}", c.name);
        }
        for s in &mut part.series {
            s.name = format!("{name}-{}", s.name);
        }
        out.checks.extend(part.checks);
        out.series.extend(part.series);
        out.replication = out.replication.or(part.replication);
        sections.insert(name.into(), Value::Object(part.results));
    }
    if ctx.seed.is_none() {
        sections.insert("monte-carlo".into(), json!("skipped: no seed"));
    }
    out.results = sections;
    Ok(())
}
