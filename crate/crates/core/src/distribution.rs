//! The extended generalized gamma family `GΓ(μ, σ, ν)`.
//!
//! With `w = ln(x/μ)/σ`, `λ = σν` and `ξ = λ⁻²` the log-density rearranges to
//!
//! ```text
//! ln f(x) = −ln σ − ½ln 2π − ln x − c(ξ) − (e^{λw} − 1 − λw)/λ²
//! ```
//!
//! where `c` is the Stirling remainder of `lnΓ`. Every term stays bounded as
//! `λ → 0`, so the lognormal member (`ν = 0`) is reached continuously and the
//! catastrophic cancellation of the textbook form never happens. Below
//! [`SERIES_THRESHOLD`] the same quantities are replaced by their fourth-order
//! expansion in `λ`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::special::{
    exprel, exprel2, exprel3k, gamma_pq_log_ratio, lgamma_correction, lgamma_correction_deriv,
    log1pmx, norm_cdf, norm_quantile, norm_sf, trigamma,
};

/// |σν| below which the log-density and score use the series expansion.
pub const SERIES_THRESHOLD: f64 = 1e-4;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const QUANTILE_MAX_ITER: usize = 100;

/// One day's marginal law: location `mu`, scale `sigma`, shape `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistParams {
    mu: f64,
    sigma: f64,
    nu: f64,
}

/// `E[X^k]`, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentResult {
    pub value: f64,
    pub order: u32,
}

impl MomentResult {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    /// `+∞` when the second moment does not exist.
    pub sd: f64,
    /// `σ²ν`; the k-th moment exists iff this exceeds `−1/k`.
    pub tail_index: f64,
}

/// Building blocks shared by the density, score and cdf.
struct Terms {
    /// Stirling remainder `c(ξ)` (0 in the lognormal limit).
    c: f64,
    /// `(e^{λw} − 1 − λw)/λ²`.
    g: f64,
}

struct TermDerivs {
    c: f64,
    g: f64,
    /// d c / d λ
    dc: f64,
    /// ∂g/∂w
    gw: f64,
    /// ∂g/∂λ
    gl: f64,
}

fn terms(w: f64, lam: f64) -> Terms {
    if lam.abs() < SERIES_THRESHOLD {
        let u = lam * w;
        let g = w * w * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u * (1.0 / 120.0 + u / 720.0))));
        Terms { c: lam * lam / 12.0, g }
    } else {
        let xi = 1.0 / (lam * lam);
        Terms {
            c: lgamma_correction(xi),
            g: w * w * exprel2(lam * w),
        }
    }
}

fn term_derivs(w: f64, lam: f64) -> TermDerivs {
    let u = lam * w;
    if lam.abs() < SERIES_THRESHOLD {
        let w2 = w * w;
        TermDerivs {
            c: lam * lam / 12.0,
            g: w2 * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u * (1.0 / 120.0 + u / 720.0)))),
            dc: lam / 6.0,
            gw: w * (1.0 + u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u / 120.0)))),
            gl: w2 * w * (1.0 / 6.0 + u * (1.0 / 12.0 + u * (1.0 / 40.0 + u * (1.0 / 180.0 + u / 1008.0)))),
        }
    } else {
        let xi = 1.0 / (lam * lam);
        TermDerivs {
            c: lgamma_correction(xi),
            g: w * w * exprel2(u),
            dc: -2.0 * lgamma_correction_deriv(xi) / (lam * lam * lam),
            gw: w * exprel(u),
            gl: w * w * w * exprel3k(u),
        }
    }
}

/// Log-density and the score with respect to the linear predictors
/// `(ln μ, ln σ, ν)`, from `ln x` and those predictors directly.
///
/// This is the hot path of the likelihood; it does no validation.
#[inline]
pub(crate) fn log_density_eta_score(ln_x: f64, ln_mu: f64, ln_sigma: f64, nu: f64) -> (f64, [f64; 3]) {
    let sigma = ln_sigma.exp();
    let w = (ln_x - ln_mu) / sigma;
    let lam = sigma * nu;
    let t = term_derivs(w, lam);
    let ll = -ln_sigma - LN_SQRT_2PI - ln_x - t.c - t.g;
    let shape = t.dc + t.gl;
    let s_mu = t.gw / sigma;
    let s_sigma = -1.0 + w * t.gw - lam * shape;
    let s_nu = -sigma * shape;
    (ll, [s_mu, s_sigma, s_nu])
}

#[inline]
pub(crate) fn log_density_eta(ln_x: f64, ln_mu: f64, ln_sigma: f64, nu: f64) -> f64 {
    let sigma = ln_sigma.exp();
    let w = (ln_x - ln_mu) / sigma;
    let t = terms(w, sigma * nu);
    -ln_sigma - LN_SQRT_2PI - ln_x - t.c - t.g
}

fn check_x(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("observation must be positive and finite, got {x}")))
    }
}

impl DistParams {
    pub fn new(mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("mu must be positive and finite, got {mu}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be positive and finite, got {sigma}")));
        }
        if !nu.is_finite() {
            return Err(Error::Domain(format!("nu must be finite, got {nu}")));
        }
        Ok(Self { mu, sigma, nu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `ξ = (σν)⁻²`; infinite for the lognormal member.
    pub fn xi(&self) -> f64 {
        1.0 / (self.sigma * self.nu).powi(2)
    }

    /// `z(x) = (x/μ)^ν`.
    pub fn z(&self, x: f64) -> f64 {
        (x / self.mu).powf(self.nu)
    }

    pub fn tail_index(&self) -> f64 {
        self.sigma * self.sigma * self.nu
    }

    fn standardize(&self, x: f64) -> f64 {
        (x / self.mu).ln() / self.sigma
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        let w = self.standardize(x);
        let t = terms(w, self.sigma * self.nu);
        Ok(-self.sigma.ln() - LN_SQRT_2PI - x.ln() - t.c - t.g)
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    /// Gradient of [`Self::log_density`] with respect to `(μ, σ, ν)`.
    pub fn score(&self, x: f64) -> Result<[f64; 3]> {
        check_x(x)?;
        let (_, s) = log_density_eta_score(x.ln(), self.mu.ln(), self.sigma.ln(), self.nu);
        Ok([s[0] / self.mu, s[1] / self.sigma, s[2]])
    }

    /// Returns `(F(x), 1 − F(x))`, each accurate in its own tail.
    pub fn cdf_sf(&self, x: f64) -> Result<(f64, f64)> {
        check_x(x)?;
        Ok(self.cdf_sf_std(self.standardize(x)))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_sf(x)?.0)
    }

    /// Survival function `1 − F(x)`.
    pub fn sf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_sf(x)?.1)
    }

    /// cdf and survival on the standardized log scale `w`.
    fn cdf_sf_std(&self, w: f64) -> (f64, f64) {
        let lam = self.sigma * self.nu;
        // Beyond this the shape overflows; the O(λ) correction is invisible.
        if lam.abs() < 1e-150 {
            return (norm_cdf(w), norm_sf(w));
        }
        let (p, q) = gamma_pq_log_ratio(1.0 / (lam * lam), lam * w);
        if self.nu > 0.0 {
            (p, q)
        } else {
            (q, p)
        }
    }

    /// Density of `W = ln(X/μ)/σ`.
    fn std_density(&self, w: f64) -> f64 {
        let t = terms(w, self.sigma * self.nu);
        (-t.c - t.g - LN_SQRT_2PI).exp()
    }

    /// Mean and standard deviation of `W = ln(X/μ)/σ`.
    fn log_moments(&self) -> (f64, f64) {
        let lam = self.sigma * self.nu;
        if lam == 0.0 {
            return (0.0, 1.0);
        }
        let xi = 1.0 / (lam * lam);
        // ψ(ξ) − ln ξ = c'(ξ) − 1/(2ξ); Var[ln Y] = ψ'(ξ) for Y ~ Gamma(ξ)
        let mean = (lgamma_correction_deriv(xi) - 0.5 / xi) / lam;
        let sd = (trigamma(xi) * xi).sqrt();
        (mean, sd)
    }

    /// Inverse cdf by safeguarded Newton iteration on the log scale.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {u}")));
        }
        // Solve in whichever tail keeps the target representable exactly.
        let upper = u > 0.5;
        let target = if upper { 1.0 - u } else { u };
        // Residual is increasing in w for both orientations.
        let resid = |w: f64| {
            let (c, s) = self.cdf_sf_std(w);
            if upper {
                target - s
            } else {
                c - target
            }
        };

        let (m, s) = self.log_moments();
        let w0 = m + s * norm_quantile(u);
        let step = s.max(1e-3);
        let mut lo = w0 - step;
        let mut hi = w0 + step;
        let mut r_lo = resid(lo);
        let mut width = step;
        let mut expansions = 0;
        while r_lo > 0.0 {
            width *= 2.0;
            hi = lo;
            lo -= width;
            r_lo = resid(lo);
            expansions += 1;
            if expansions > 2000 {
                return Err(Error::Domain(format!("quantile bracket failed at u={u}")));
            }
        }
        let mut r_hi = resid(hi);
        width = step;
        while r_hi < 0.0 {
            width *= 2.0;
            lo = hi;
            hi += width;
            r_hi = resid(hi);
            expansions += 1;
            if expansions > 2000 {
                return Err(Error::Domain(format!("quantile bracket failed at u={u}")));
            }
        }

        let mut w = w0.clamp(lo, hi);
        for _ in 0..QUANTILE_MAX_ITER {
            let r = resid(w);
            if r == 0.0 {
                break;
            }
            if r < 0.0 {
                lo = w;
            } else {
                hi = w;
            }
            let dens = self.std_density(w);
            let newton = w - r / dens;
            let next = if dens > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - w).abs() <= 1e-15 * (1.0 + w.abs()) || hi - lo <= 4e-16 * (1.0 + w.abs()) {
                w = next;
                break;
            }
            w = next;
        }
        Ok(self.mu * (self.sigma * w).exp())
    }

    /// k-th raw moment.
    pub fn moment(&self, k: u32) -> MomentResult {
        assert!(k >= 1, "moment order must be positive");
        let kf = k as f64;
        let value = if self.nu == 0.0 {
            self.mu.powi(k as i32) * (0.5 * kf * kf * self.sigma * self.sigma).exp()
        } else if self.tail_index() <= -1.0 / kf {
            f64::INFINITY
        } else {
            (kf * self.mu.ln() + self.ln_moment_ratio(kf)).exp()
        };
        MomentResult { value, order: k }
    }

    /// `ln(E[X^k]/μ^k)` for ν ≠ 0 inside the existence region.
    ///
    /// Equals `lnΓ(ξ + k/ν) − lnΓ(ξ) − (k/ν)ln ξ`, rearranged through the
    /// Stirling remainder so it stays exact as ν → 0.
    fn ln_moment_ratio(&self, k: f64) -> f64 {
        if self.nu == 0.0 {
            return 0.5 * k * k * self.sigma * self.sigma;
        }
        let lam = self.sigma * self.nu;
        let xi = 1.0 / (lam * lam);
        let t = k * self.tail_index();
        let c = k / self.nu;
        xi * log1pmx(t) + (c - 0.5) * t.ln_1p() + lgamma_correction(xi + c) - lgamma_correction(xi)
    }

    pub fn summary_stats(&self) -> SummaryStats {
        let tail_index = self.tail_index();
        let mean = self.moment(1).value;
        let sd = if self.nu != 0.0 && tail_index <= -0.5 {
            f64::INFINITY
        } else {
            let l1 = self.ln_moment_ratio(1.0);
            let l2 = self.ln_moment_ratio(2.0);
            mean * (l2 - 2.0 * l1).exp_m1().max(0.0).sqrt()
        };
        SummaryStats { mean, sd, tail_index }
    }

    /// `n` independent draws by inversion of uniforms.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    if let Ok(x) = self.quantile(u) {
                        break x;
                    }
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(mu: f64, sigma: f64, nu: f64) -> DistParams {
        DistParams::new(mu, sigma, nu).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(DistParams::new(0.0, 1.0, 0.0).is_err());
        assert!(DistParams::new(1.0, -1.0, 0.0).is_err());
        assert!(DistParams::new(1.0, 1.0, f64::NAN).is_err());
        assert!(p(1.0, 1.0, 0.0).log_density(0.0).is_err());
        assert!(p(1.0, 1.0, 0.0).cdf(-1.0).is_err());
    }

    #[test]
    fn density_examples() {
        assert!(close(p(1.0, 1.0, 1.0).log_density(1.0).unwrap(), -1.0, 1e-14));
        assert!(close(p(1.0, 1.0, 0.0).log_density(1.0).unwrap(), -0.918_938_533_204_672_8, 1e-15));
        assert!(close(p(1.0, 1.0, 1e-6).log_density(1.0).unwrap(), p(1.0, 1.0, 0.0).log_density(1.0).unwrap(), 1e-8));
    }

    #[test]
    fn cdf_examples() {
        assert!(close(p(1.0, 1.0, 1.0).cdf(1.0).unwrap(), 1.0 - (-1.0f64).exp(), 1e-14));
        assert!(close(p(1.0, 0.7, 0.0).cdf(1.0).unwrap(), 0.5, 1e-15));
        assert!(close(p(1.0, 1.0, -1.0).cdf(1.0).unwrap(), (-1.0f64).exp(), 1e-14));
        let (c, s) = p(2.0, 0.5, -0.4).cdf_sf(3.0).unwrap();
        assert!(close(c + s, 1.0, 1e-15));
    }

    #[test]
    fn quantile_examples() {
        assert!(close(p(3.0, 0.4, 0.0).quantile(0.5).unwrap(), 3.0, 1e-14));
        assert!(close(p(1.0, 1.0, 1.0).quantile(1.0 - (-1.0f64).exp()).unwrap(), 1.0, 1e-12));
        assert!(p(1.0, 1.0, 1.0).quantile(0.0).is_err());
        assert!(p(1.0, 1.0, 1.0).quantile(1.0).is_err());
    }

    #[test]
    fn score_examples() {
        let s = p(2.5, 0.8, 0.0).score(2.5).unwrap();
        assert!(s[0].abs() < 1e-15);
        let s = p(1.0, 1.0, 1.0).score(1.0).unwrap();
        assert!(s[0].abs() < 1e-15);
    }

    #[test]
    fn moment_examples() {
        assert!(close(p(1.0, 1.0, 0.0).moment(1).value, 0.5f64.exp(), 1e-14));
        assert!(close(p(1.0, 1.0, 1.0).moment(2).value, 2.0, 1e-13));
        assert_eq!(p(1.0, 2.0, -0.25).moment(1).value, f64::INFINITY);
        let st = p(1.0, 1.0, 0.0).summary_stats();
        assert!(close(st.mean, 0.5f64.exp(), 1e-14));
        assert!(close(st.sd, (1.0f64.exp().powi(2) - 1.0f64.exp()).sqrt(), 1e-13));
        assert_eq!(p(5.0, 1.0, -0.3).summary_stats().tail_index, -0.3);
        assert_eq!(p(1.0, 1.0, -0.5).summary_stats().sd, f64::INFINITY);
        assert!(p(1.0, 1.0, -0.49).summary_stats().sd.is_finite());
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(p(1.0, 1.0, 1.0).sample(&mut rng, 0).is_empty());
        let xs = p(1.0, 1.0, 1.0).sample(&mut rng, 200_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        // Both branches evaluated at |σν| straddling the threshold.
        for &x in &[0.2, 1.0, 3.0, 12.0] {
            for &sign in &[-1.0, 1.0] {
                let below = p(1.0, 1.0, sign * SERIES_THRESHOLD * 0.999_999);
                let above = p(1.0, 1.0, sign * SERIES_THRESHOLD * 1.000_001);
                let a = below.log_density(x).unwrap();
                let b = above.log_density(x).unwrap();
                // d ln f/dν = −σw³/6 at ν = 0
                let w = f64::ln(x);
                let drift = -w.powi(3) / 6.0 * (above.nu() - below.nu());
                assert!((b - a - drift).abs() < 1e-13, "x={x}: {a} vs {b}");
                let sa = below.score(x).unwrap();
                let sb = above.score(x).unwrap();
                for k in 0..3 {
                    assert!((sa[k] - sb[k]).abs() < 1e-9 * sa[k].abs().max(1.0), "x={x} k={k}");
                }
            }
        }
    }
}
