//! Distribution checks against high-precision reference values, quadrature
//! and closed-form special cases.

mod common;

use common::quad::integrate;
use ggseason::distribution::DistParams;
use ggseason::special::{gamma_p, gamma_q};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, LogNormal, Weibull};

#[derive(Deserialize)]
struct DensityRow {
    x: f64,
    mu: f64,
    sigma: f64,
    nu: f64,
    log_density: f64,
    cdf: f64,
    sf: f64,
}

#[derive(Deserialize)]
struct GammaRow {
    a: f64,
    x: f64,
    p: f64,
    q: f64,
}

#[derive(Deserialize)]
struct MomentRow {
    k: u32,
    mu: f64,
    sigma: f64,
    nu: f64,
    /// `None` for an infinite moment.
    value: Option<f64>,
}

#[derive(Deserialize)]
struct Reference {
    density: Vec<DensityRow>,
    gamma: Vec<GammaRow>,
    moments: Vec<MomentRow>,
}

fn reference() -> Reference {
    let raw = include_str!("data/ggamma_reference.json");
    serde_json::from_str(raw).unwrap()
}

fn p(mu: f64, sigma: f64, nu: f64) -> DistParams {
    DistParams::new(mu, sigma, nu).unwrap()
}

/// Probability agreement: absolute 1e-12 and relative 1e-9 in the tail.
fn prob_close(got: f64, want: f64) -> bool {
    let d = (got - want).abs();
    d <= 1e-12 && (want < 1e-300 || d <= 1e-9 * want)
}

#[test]
fn log_density_matches_reference() {
    for r in reference().density {
        let got = p(r.mu, r.sigma, r.nu).log_density(r.x).unwrap();
        let tol = 1e-11 * r.log_density.abs().max(1.0);
        assert!((got - r.log_density).abs() <= tol, "{} {} {} {}: {got} vs {}", r.x, r.mu, r.sigma, r.nu, r.log_density);
    }
}

#[test]
fn cdf_matches_reference() {
    for r in reference().density {
        let (c, s) = p(r.mu, r.sigma, r.nu).cdf_sf(r.x).unwrap();
        assert!(prob_close(c, r.cdf), "cdf {} {} {} {}: {c:e} vs {:e}", r.x, r.mu, r.sigma, r.nu, r.cdf);
        assert!(prob_close(s, r.sf), "sf {} {} {} {}: {s:e} vs {:e}", r.x, r.mu, r.sigma, r.nu, r.sf);
    }
}

#[test]
fn incomplete_gamma_matches_reference() {
    for r in reference().gamma {
        let (gp, gq) = (gamma_p(r.a, r.x), gamma_q(r.a, r.x));
        assert!(prob_close(gp, r.p), "P({}, {}) = {gp:e} vs {:e}", r.a, r.x, r.p);
        assert!(prob_close(gq, r.q), "Q({}, {}) = {gq:e} vs {:e}", r.a, r.x, r.q);
    }
}

#[test]
fn moments_match_reference() {
    for r in reference().moments {
        let got = p(r.mu, r.sigma, r.nu).moment(r.k).value;
        match r.value {
            None => assert!(got.is_infinite()),
            Some(v) => assert!((got / v - 1.0).abs() < 1e-12, "{} {} {} k={}: {got} vs {v}", r.mu, r.sigma, r.nu, r.k),
        }
    }
}

#[test]
fn continuity_at_zero_shape() {
    // At x = μ the first-order ν-term vanishes, so the literal 1e-8 bound applies.
    let base = p(1.0, 1.0, 0.0).log_density(1.0).unwrap();
    for nu in [1e-6, -1e-6] {
        assert!((p(1.0, 1.0, nu).log_density(1.0).unwrap() - base).abs() < 1e-8);
    }
    // Elsewhere the jump is a genuine first-order change, −σw³ν/6; check the
    // midpoint across ±ν, which cancels it.
    for x in [0.5, 2.0] {
        let f0 = p(1.0, 1.0, 0.0).log_density(x).unwrap();
        let up = p(1.0, 1.0, 1e-6).log_density(x).unwrap();
        let dn = p(1.0, 1.0, -1e-6).log_density(x).unwrap();
        assert!((0.5 * (up + dn) - f0).abs() < 1e-8);
        let slope = -(x.ln()).powi(3) / 6.0;
        assert!(((up - dn) / 2e-6 - slope).abs() < 1e-6);
        let c0 = p(1.0, 1.0, 0.0).cdf(x).unwrap();
        let cu = p(1.0, 1.0, 1e-6).cdf(x).unwrap();
        let cd = p(1.0, 1.0, -1e-6).cdf(x).unwrap();
        assert!((0.5 * (cu + cd) - c0).abs() < 1e-8);
    }
}

fn fd_score(d: &DistParams, x: f64) -> [f64; 3] {
    let theta = [d.mu(), d.sigma(), d.nu()];
    let mut out = [0.0; 3];
    for k in 0..3 {
        let h = 1e-6 * (1.0 + theta[k].abs());
        let mut up = theta;
        up[k] += h;
        let mut dn = theta;
        dn[k] -= h;
        let fu = p(up[0], up[1], up[2]).log_density(x).unwrap();
        let fd = p(dn[0], dn[1], dn[2]).log_density(x).unwrap();
        out[k] = (fu - fd) / (2.0 * h);
    }
    out
}

#[test]
fn score_matches_finite_differences() {
    let mut count = 0;
    for nu in [-0.5, -1e-5, 0.0, 1e-5, 0.5] {
        for (mu, sigma) in [(1.0, 1.0), (3.0, 0.4), (0.2, 1.5), (10.0, 0.8)] {
            for r in [0.1, 0.7, 1.0, 1.6, 5.0] {
                let d = p(mu, sigma, nu);
                let x = mu * r;
                let an = d.score(x).unwrap();
                let num = fd_score(&d, x);
                for k in 0..3 {
                    assert!(
                        (an[k] - num[k]).abs() <= 1e-6 * an[k].abs().max(1.0),
                        "mu={mu} sigma={sigma} nu={nu} x={x} k={k}: {} vs {}",
                        an[k],
                        num[k]
                    );
                }
                count += 1;
            }
        }
    }
    assert_eq!(count, 100);
}

/// Integral of `g(x)·f(x)` over (0, ∞) on the log scale.
fn expect(d: &DistParams, g: impl Fn(f64) -> f64) -> f64 {
    let (mu, sigma) = (d.mu(), d.sigma());
    integrate(
        |w: f64| {
            let x = mu * (sigma * w).exp();
            g(x) * d.density(x).unwrap() * x * sigma
        },
        -250.0,
        250.0,
        1e-10,
    )
}

#[test]
fn density_integrates_to_one() {
    for mu in [0.5, 1.0, 10.0] {
        for sigma in [0.2, 1.0, 2.0] {
            for nu in [-1.0, -0.3, 0.0, 0.3, 1.0, 2.0] {
                let d = p(mu, sigma, nu);
                let total = expect(&d, |_| 1.0);
                assert!((total - 1.0).abs() < 1e-6, "{mu} {sigma} {nu}: {total}");
            }
        }
    }
}

#[test]
fn moments_match_quadrature() {
    for mu in [0.5, 1.0, 10.0] {
        for sigma in [0.2, 0.6, 1.0] {
            for nu in [-0.3, 0.0, 0.3, 1.0, 2.0] {
                let d = p(mu, sigma, nu);
                if d.tail_index() <= -0.45 {
                    continue;
                }
                let s = d.summary_stats();
                let m1 = expect(&d, |x| x);
                let m2 = expect(&d, |x| x * x);
                let sd = (m2 - m1 * m1).sqrt();
                assert!((s.mean / m1 - 1.0).abs() < 1e-6, "{mu} {sigma} {nu}: {} vs {m1}", s.mean);
                assert!((s.sd / sd - 1.0).abs() < 1e-6, "{mu} {sigma} {nu}: {} vs {sd}", s.sd);
            }
        }
    }
}

#[test]
fn infinite_moment_branch_is_exact() {
    // σ²ν = −1/k exactly
    assert!(p(1.0, 2.0, -0.25).moment(1).value.is_infinite());
    assert!(p(1.0, 1.0, -0.5).moment(2).value.is_infinite());
    assert!(p(1.0, 1.0, -0.499).moment(2).value.is_finite());
    assert!(p(1.0, 1.0, -0.5).moment(1).value.is_finite());
}

#[test]
fn special_case_reductions() {
    for x in [0.05, 0.4, 1.0, 2.3, 7.0] {
        // Exp(1)
        let d = p(1.0, 1.0, 1.0);
        assert!((d.log_density(x).unwrap() + x).abs() < 1e-10);
        assert!((d.cdf(x).unwrap() - (-(-x as f64).exp_m1())).abs() < 1e-10);
        // Gamma with shape ξ and rate ξ/μ
        for (mu, xi) in [(1.5, 0.5), (2.0, 3.0), (0.7, 20.0)] {
            let d = p(mu, 1.0 / f64::sqrt(xi), 1.0);
            let g = Gamma::new(xi, xi / mu).unwrap();
            assert!((d.log_density(x).unwrap() - g.ln_pdf(x)).abs() < 1e-10 * g.ln_pdf(x).abs().max(1.0));
        }
        // Weibull with shape ν and scale μ
        for (mu, nu) in [(1.0, 0.7), (2.5, 1.8), (0.8, 4.0)] {
            let d = p(mu, 1.0 / nu, nu);
            let w = Weibull::new(nu, mu).unwrap();
            assert!((d.log_density(x).unwrap() - w.ln_pdf(x)).abs() < 1e-10 * w.ln_pdf(x).abs().max(1.0));
            let z = (x / mu).powf(nu);
            assert!((d.cdf(x).unwrap() + (-z).exp_m1()).abs() < 1e-10);
        }
        // lognormal
        for (mu, sigma) in [(1.0, 1.0), (3.0, 0.25)] {
            let d = p(mu, sigma, 0.0);
            let l = LogNormal::new(f64::ln(mu), sigma).unwrap();
            assert!((d.log_density(x).unwrap() - l.ln_pdf(x)).abs() < 1e-10 * l.ln_pdf(x).abs().max(1.0));
            assert!((d.cdf(x).unwrap() - l.cdf(x)).abs() < 1e-10);
        }
    }
}

fn ks_distance(d: &DistParams, mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = d.cdf(x).unwrap();
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn samples_pass_ks() {
    let d = p(2.0, 0.5, -0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xs = d.sample(&mut rng, 100_000);
    assert!(ks_distance(&d, xs) < 1.628 / f64::sqrt(1e5));
}

fn params() -> impl Strategy<Value = DistParams> {
    (
        0.05f64..20.0,
        0.05f64..2.5,
        prop_oneof![-2.0f64..2.0, -1e-4f64..1e-4, Just(0.0)],
    )
        .prop_map(|(mu, sigma, nu)| p(mu, sigma, nu))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn quantile_inverts_cdf(d in params(), u in 1e-6f64..(1.0 - 1e-6)) {
        let x = d.quantile(u).unwrap();
        let (c, s) = d.cdf_sf(x).unwrap();
        let err = if u > 0.5 { (s - (1.0 - u)).abs() } else { (c - u).abs() };
        prop_assert!(err < 1e-10, "u={u} x={x} c={c}");
    }

    #[test]
    fn cdf_is_monotone_and_complementary(d in params(), a in -3.0f64..3.0, gap in 1e-3f64..2.0) {
        let x1 = d.mu() * (d.sigma() * a).exp();
        let x2 = x1 * (d.sigma() * gap).exp();
        let (c1, s1) = d.cdf_sf(x1).unwrap();
        let (c2, _) = d.cdf_sf(x2).unwrap();
        prop_assert!((c1 + s1 - 1.0).abs() < 1e-14);
        prop_assert!(c2 >= c1);
        prop_assert!(d.density(x1).unwrap() > 0.0 || c1 == 0.0 || c1 == 1.0);
    }

    #[test]
    fn infinite_moments_iff_tail_condition(d in params(), k in 1u32..4) {
        let inf = d.nu() != 0.0 && d.tail_index() <= -1.0 / k as f64;
        prop_assert_eq!(d.moment(k).value.is_infinite(), inf);
    }
}
