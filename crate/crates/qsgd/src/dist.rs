//! Sampling distributions with analytic CDFs, densities and quantiles.
//!
//! Only the four families the harness and the oracle need: uniform, normal,
//! Cauchy (location-scale) and beta. CDFs are analytic (the beta one through
//! the regularized incomplete beta); quantiles are closed-form where possible
//! and bracketed root finding on the CDF otherwise.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::special;

/// One of the supported sampling distributions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    /// Uniform on `[a, b]`.
    Uniform { a: f64, b: f64 },
    /// Normal with mean and standard deviation.
    Normal { mean: f64, sd: f64 },
    /// Cauchy with location and scale.
    Cauchy { location: f64, scale: f64 },
    /// Beta with positive shapes.
    Beta { alpha: f64, beta: f64 },
}

impl Distribution {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParameter(format!(
                "uniform requires a < b, got [{a}, {b}]"
            )));
        }
        Ok(Self::Uniform { a, b })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "normal requires sd > 0, got ({mean}, {sd})"
            )));
        }
        Ok(Self::Normal { mean, sd })
    }

    pub fn cauchy(location: f64, scale: f64) -> Result<Self> {
        if !(location.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cauchy requires scale > 0, got ({location}, {scale})"
            )));
        }
        Ok(Self::Cauchy { location, scale })
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta requires positive shapes, got ({alpha}, {beta})"
            )));
        }
        Ok(Self::Beta { alpha, beta })
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Self::Normal { mean, sd } => special::normal_cdf((x - mean) / sd),
            Self::Cauchy { location, scale } => {
                0.5 + ((x - location) / scale).atan() / std::f64::consts::PI
            }
            Self::Beta { alpha, beta } => special::beta_inc(alpha, beta, x.clamp(0.0, 1.0)),
        }
    }

    /// Probability density function.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { a, b } => {
                if x >= a && x <= b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Self::Normal { mean, sd } => special::normal_pdf((x - mean) / sd) / sd,
            Self::Cauchy { location, scale } => {
                let z = (x - location) / scale;
                1.0 / (std::f64::consts::PI * scale * (1.0 + z * z))
            }
            Self::Beta { alpha, beta } => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                // endpoint in x^(α−1): 0 for α > 1, 1 for α = 1, diverges otherwise
                let lo = match x {
                    x if x > 0.0 => (alpha - 1.0) * x.ln(),
                    _ if alpha > 1.0 => f64::NEG_INFINITY,
                    _ if alpha == 1.0 => 0.0,
                    _ => f64::INFINITY,
                };
                let hi = match 1.0 - x {
                    y if y > 0.0 => (beta - 1.0) * y.ln(),
                    _ if beta > 1.0 => f64::NEG_INFINITY,
                    _ if beta == 1.0 => 0.0,
                    _ => f64::INFINITY,
                };
                (lo + hi - special::ln_beta(alpha, beta)).exp()
            }
        }
    }

    /// Quantile function for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile level must lie in (0,1), got {p}"
            )));
        }
        Ok(match *self {
            Self::Uniform { a, b } => a + p * (b - a),
            Self::Normal { mean, sd } => mean + sd * special::normal_quantile(p),
            Self::Cauchy { location, scale } => {
                location + scale * (std::f64::consts::PI * (p - 0.5)).tan()
            }
            Self::Beta { .. } => self.quantile_by_bisection(p),
        })
    }

    /// Bracketed bisection on the CDF, tolerance 1e-10 in x.
    fn quantile_by_bisection(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Draw one sample.
    pub fn sample(&self, rng: &mut SplitMix64) -> f64 {
        match *self {
            Self::Uniform { a, b } => a + (b - a) * rng.next_open01(),
            Self::Normal { mean, sd } => mean + sd * standard_normal(rng),
            Self::Cauchy { location, scale } => {
                location + scale * (std::f64::consts::PI * (rng.next_open01() - 0.5)).tan()
            }
            Self::Beta { alpha, beta } => {
                let x = gamma_sample(alpha, rng);
                let y = gamma_sample(beta, rng);
                x / (x + y)
            }
        }
    }
}

/// Standard normal via the polar (Marsaglia) method.
fn standard_normal(rng: &mut SplitMix64) -> f64 {
    loop {
        let u = 2.0 * rng.next_open01() - 1.0;
        let v = 2.0 * rng.next_open01() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Shape-only gamma variate, Marsaglia–Tsang squeeze-rejection.
///
/// For shape < 1 the usual boost `Gamma(a) = Gamma(a+1) · U^{1/a}` applies.
fn gamma_sample(shape: f64, rng: &mut SplitMix64) -> f64 {
    if shape < 1.0 {
        let boost = rng.next_open01().powf(1.0 / shape);
        return gamma_sample(shape + 1.0, rng) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.next_open01();
        if u < 1.0 - 0.0331 * x.powi(4) {
            return d * v;
        }
        if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Uniform { a, b } => write!(f, "uniform:{a},{b}"),
            Self::Normal { mean, sd } => write!(f, "normal:{mean},{sd}"),
            Self::Cauchy { location, scale } => write!(f, "cauchy:{location},{scale}"),
            Self::Beta { alpha, beta } => write!(f, "beta:{alpha},{beta}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    /// Parses `name:p1,p2`, e.g. `beta:2,3` or `cauchy:0,2`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse distribution {s:?}"));
        let (name, params) = s.split_once(':').ok_or_else(bad)?;
        let mut it = params.split(',').map(|t| t.trim().parse::<f64>());
        let p1 = it.next().ok_or_else(bad)?.map_err(|_| bad())?;
        let p2 = it.next().ok_or_else(bad)?.map_err(|_| bad())?;
        if it.next().is_some() {
            return Err(bad());
        }
        match name.trim().to_ascii_lowercase().as_str() {
            "uniform" => Self::uniform(p1, p2),
            "normal" => Self::normal(p1, p2),
            "cauchy" => Self::cauchy(p1, p2),
            "beta" => Self::beta(p1, p2),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<Distribution> {
        vec![
            Distribution::uniform(0.0, 1.0).unwrap(),
            Distribution::normal(0.0, 1.0).unwrap(),
            Distribution::cauchy(0.0, 2.0).unwrap(),
            Distribution::beta(2.0, 3.0).unwrap(),
        ]
    }

    #[test]
    fn cauchy_three_quarter_quantile_is_two() {
        let d = Distribution::cauchy(0.0, 2.0).unwrap();
        assert!((d.quantile(0.75).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn beta_cdf_matches_polynomial() {
        let d = Distribution::beta(2.0, 3.0).unwrap();
        assert!((d.cdf(0.5) - 0.6875).abs() < 1e-12);
        for i in 1..100 {
            let x = i as f64 / 100.0;
            let poly = 6.0 * x.powi(2) - 8.0 * x.powi(3) + 3.0 * x.powi(4);
            assert!((d.cdf(x) - poly).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_density_at_upper_quartile() {
        // x* solves 6x²−8x³+3x⁴ = 3/4; pdf there is 12x*(1−x*)².
        let d = Distribution::beta(2.0, 3.0).unwrap();
        let x = d.quantile(0.75).unwrap();
        let expected = 12.0 * x * (1.0 - x) * (1.0 - x);
        assert!((d.pdf(x) - expected).abs() < 1e-9);
        assert!((d.pdf(x) - 1.359).abs() < 1e-3);
    }

    #[test]
    fn uniform_median() {
        let d = Distribution::uniform(0.0, 1.0).unwrap();
        assert_eq!(d.quantile(0.5).unwrap(), 0.5);
    }

    #[test]
    fn quantile_cdf_round_trip() {
        let mut rng = SplitMix64::new(11);
        for d in all() {
            for _ in 0..1000 {
                // central 99% of mass
                let p = 0.005 + 0.99 * rng.next_open01();
                let x = d.quantile(p).unwrap();
                let q = d.quantile(d.cdf(x)).unwrap();
                assert!(
                    (q - x).abs() < 1e-8 * (1.0 + x.abs()),
                    "{d}: x={x} round-tripped to {q}"
                );
            }
        }
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        let mut rng = SplitMix64::new(12);
        for d in all() {
            for _ in 0..200 {
                let p = 0.01 + 0.98 * rng.next_open01();
                let x = d.quantile(p).unwrap();
                let h = 1e-5;
                let numeric = (d.cdf(x + h) - d.cdf(x - h)) / (2.0 * h);
                assert!(
                    (numeric - d.pdf(x)).abs() < 1e-6,
                    "{d} at {x}: numeric {numeric} vs pdf {}",
                    d.pdf(x)
                );
            }
        }
    }

    #[test]
    fn sampler_matches_cdf_in_ks_distance() {
        for d in all() {
            let mut rng = SplitMix64::new(99);
            let n = 1_000_000;
            let mut xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut ks: f64 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let c = d.cdf(x);
                ks = ks
                    .max((c - i as f64 / n as f64).abs())
                    .max((c - (i + 1) as f64 / n as f64).abs());
            }
            // 99% band of the one-sample KS statistic at n = 1e6 is ~0.0016
            assert!(ks < 0.002, "{d}: ks = {ks}");
        }
    }

    #[test]
    fn sampling_is_deterministic_under_fixed_seed() {
        for d in all() {
            let mut a = SplitMix64::new(5);
            let mut b = SplitMix64::new(5);
            for _ in 0..1000 {
                assert_eq!(d.sample(&mut a).to_bits(), d.sample(&mut b).to_bits());
            }
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(Distribution::uniform(1.0, 1.0).is_err());
        assert!(Distribution::normal(0.0, 0.0).is_err());
        assert!(Distribution::cauchy(0.0, -1.0).is_err());
        assert!(Distribution::beta(0.0, 3.0).is_err());
        assert!(Distribution::uniform(0.0, 1.0)
            .unwrap()
            .quantile(0.0)
            .is_err());
    }

    #[test]
    fn parses_cli_syntax() {
        assert_eq!(
            "beta:2,3".parse::<Distribution>().unwrap(),
            Distribution::beta(2.0, 3.0).unwrap()
        );
        assert_eq!(
            "cauchy:0,2".parse::<Distribution>().unwrap(),
            Distribution::cauchy(0.0, 2.0).unwrap()
        );
        assert!("beta:2".parse::<Distribution>().is_err());
        assert!("pareto:1,1".parse::<Distribution>().is_err());
    }
}
