//! Scalar model `A = 0, C = R₁ = R₂ = 1` against closed forms derived here.

use kbstab::certify::{certify_riccati, certify_semigroup, CertifyOptions};
use kbstab::flow::linspace;
use kbstab::riccati::integrate_dre;
use kbstab::suite::analyze;
use kbstab::{Model, Spd, Sym};

fn m0() -> Model {
    Model::scalar(0.0, 1.0, 1.0, 1.0).unwrap()
}

/// Composite Simpson rule, independent of the crate's quadrature.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|k| f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

struct Oracle {
    lambda_min: f64,
    lambda_max: f64,
    alpha_ratio: f64,
    alpha_safe: f64,
    beta: f64,
}

/// With `A = 0` and `υ = 1`: `𝒞_s = s`, `𝒪_s = s`, and both derived Gramians are
/// `∫₀¹ s² ds` (the outer inverse Gramians equal one).
fn oracle() -> Oracle {
    let c = simpson(|_| 1.0, 0.0, 1.0, 64);
    let o = c;
    let o_of_c = simpson(|s| s * s, 0.0, 1.0, 64) / (c * c);
    let c_of_o = simpson(|s| s * s, 0.0, 1.0, 64) / (o * o);
    let lower_inv = o_of_c + 1.0 / c;
    let upper = c_of_o + 1.0 / o;
    let (s_min, r1_min) = (1.0, 1.0);
    Oracle {
        lambda_min: 1.0 / lower_inv,
        lambda_max: upper,
        alpha_ratio: (lower_inv / upper).sqrt(),
        alpha_safe: (lower_inv * upper).sqrt(),
        beta: (s_min + r1_min / (upper * upper)) / (2.0 * lower_inv),
    }
}

#[test]
fn riccati_flow_matches_tanh_formula() {
    let m = m0();
    for q in [0.0, 0.3, 1.0, 5.0, 1e3] {
        let traj =
            integrate_dre(&m, 0.0, 10.0, &Spd::certify(Sym::scalar(q)).unwrap(), None).unwrap();
        for t in linspace(0.0f64, 10.0, 201) {
            let th = t.tanh();
            let exact = (q + th) / (1.0 + q * th);
            let got = traj.eval(t).unwrap()[(0, 0)];
            assert!(
                (got - exact).abs() <= 1e-8 * (1.0 + exact),
                "q={q} t={t}: {got} vs {exact}"
            );
        }
    }
}

#[test]
fn pipeline_reproduces_scalar_constants() {
    let o = oracle();
    let an = analyze(&m0(), 1.0, 10.0, 17).unwrap();
    let (lo, hi) = an.report.spectrum_interval();
    assert!(
        (lo - o.lambda_min).abs() < 1e-9 && (hi - o.lambda_max).abs() < 1e-9,
        "{lo} {hi}"
    );
    assert!((o.lambda_min - 0.75).abs() < 1e-12 && (o.lambda_max - 4.0 / 3.0).abs() < 1e-12);
    assert!((an.rates.alpha_ratio - o.alpha_ratio).abs() < 1e-9);
    assert!((an.rates.alpha_safe - o.alpha_safe).abs() < 1e-9);
    assert!((an.rates.beta - o.beta).abs() < 1e-9);

    // P solves 2P·0 − P² + 1 = 0; A − PS = −1 gives ν = κ = 1.
    let are = an.are.as_ref().unwrap();
    assert!((are.p.sym().norm2() - 1.0).abs() < 1e-11);
    let c = an.constants.as_ref().unwrap();
    assert!((c.nu - 1.0).abs() < 1e-9 && (c.kappa - 1.0).abs() < 1e-9);
    let p = c.p.sym().clone();
    // σ(P) = 2√2·κ_E(P)·[(P²S + R₁)r₁/ν]^{1/2} with κ_E(P) = κ.
    let sigma = 2.0 * 2f64.sqrt() * ((1.0 + 1.0) * 1.0 / 1.0f64).sqrt();
    assert!((c.sigma(&p) - sigma).abs() < 1e-9);
    assert!((c.chi2(&p) - (sigma + 2.0 * 2f64.sqrt())).abs() < 1e-9);

    let b = an.bounds.as_ref().unwrap();
    assert!((b.lambda_min_bound.min_eig() - o.lambda_min).abs() < 1e-9);
    assert!((b.lambda_max_bound.max_eig() - o.lambda_max).abs() < 1e-9);
}

#[test]
fn scalar_certification_passes() {
    let an = analyze(&m0(), 1.0, 10.0, 17).unwrap();
    let qs: Vec<Spd> = [0.0, 1e-6, 0.5, 1.0, 3.0, 1e3]
        .iter()
        .map(|&q| Spd::certify(Sym::scalar(q)).unwrap())
        .collect();
    let opts = CertifyOptions::default();
    let r = certify_riccati(
        &an.model,
        an.bounds.as_ref().unwrap(),
        an.constants.as_ref(),
        &qs,
        &opts,
    )
    .unwrap();
    let s =
        certify_semigroup(&an.model, &an.rates, 1.0, an.constants.as_ref(), &qs, &opts).unwrap();
    assert!(r.passed(), "{:#?}", r.checks);
    assert!(s.passed(), "{:#?}", s.checks);
    // E_{s,t}(Q) = cosh s / cosh t from Q = 0: the limiting rate is 1 ≥ 2β·0.95 is checked on φ
    assert!(r.check("fixed-point-rate-beta").unwrap().samples > 0);
}
