//! Chi-square distribution functions built on the regularized incomplete gamma function.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularized lower incomplete gamma function P(a, x).
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma function Q(a, x) = 1 − P(a, x).
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Chi-square distribution with `df` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquared {
    df: f64,
}

impl ChiSquared {
    pub fn new(df: f64) -> Result<Self> {
        if !(df.is_finite() && df > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "degrees of freedom must be positive, got {df}"
            )));
        }
        Ok(Self { df })
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let k = 0.5 * self.df;
        ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        regularized_gamma_p(0.5 * self.df, 0.5 * x)
    }

    fn sf(&self, x: f64) -> f64 {
        regularized_gamma_q(0.5 * self.df, 0.5 * x)
    }

    /// Inverse CDF for `prob` strictly inside (0, 1).
    ///
    /// Newton iteration on the CDF, safeguarded by a shrinking bisection
    /// bracket. Upper-tail probabilities are inverted through the survival
    /// function to keep relative accuracy near 1.
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::InvalidProbability(prob));
        }
        let upper = prob > 0.5;
        let target = if upper { 1.0 - prob } else { prob };
        // residual is monotone increasing in x in both branches
        let residual = |x: f64| {
            if upper {
                target - self.sf(x)
            } else {
                self.cdf(x) - target
            }
        };

        let mut lo = 0.0_f64;
        let mut hi = self.df.max(1.0);
        while residual(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        let mut x = self.df.clamp(lo, hi);
        if x <= lo || x >= hi {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let r = residual(x);
            if r == 0.0 {
                return Ok(x);
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let slope = self.pdf(x);
            let mut next = if slope > 0.0 { x - r / slope } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }
}

/// P(χ²_df ≤ x).
pub fn chi2_cdf(x: f64, df: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "chi-square argument must be nonnegative, got {x}"
        )));
    }
    Ok(ChiSquared::new(df)?.cdf(x))
}

/// The `prob`-quantile of χ²_df.
pub fn chi2_quantile(prob: f64, df: f64) -> Result<f64> {
    ChiSquared::new(df)?.quantile(prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn cdf_at_zero() {
        for df in [0.5, 1.0, 3.0, 40.0] {
            assert_eq!(chi2_cdf(0.0, df).unwrap(), 0.0);
        }
    }

    #[test]
    fn cdf_rejects_negative() {
        assert!(chi2_cdf(-1.0, 3.0).is_err());
    }

    #[test]
    fn cdf_two_df_closed_form() {
        // χ²₂ is exponential with mean 2
        for x in [0.1, 1.0, 4.0, 20.0] {
            let exact = 1.0 - (-x / 2.0_f64).exp();
            assert!((chi2_cdf(x, 2.0).unwrap() - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn ninety_fifth_percentile_ten_df() {
        assert!((chi2_cdf(18.307, 10.0).unwrap() - 0.95).abs() < 1e-4);
    }

    #[test]
    fn quantile_rejects_endpoints() {
        assert!(chi2_quantile(0.0, 3.0).is_err());
        assert!(chi2_quantile(1.0, 3.0).is_err());
        assert!(chi2_quantile(0.5, 0.0).is_err());
    }

    #[test]
    fn quantile_table_values() {
        assert!((chi2_quantile(0.95, 10.0).unwrap().sqrt() - 4.278672).abs() < 1e-4);
        assert!((chi2_quantile(0.80, 40.0).unwrap().sqrt() - 6.875212).abs() < 1e-4);
    }

    #[test]
    fn median_one_df() {
        // χ²₁ median = (Φ⁻¹(0.75))² = 0.45493642311957...
        assert!((chi2_quantile(0.5, 1.0).unwrap() - 0.454_936_423_119_572_7).abs() < 1e-12);
    }

    // Composite Simpson rule on the density; independent of the gamma-function route.
    fn integrate_pdf(df: f64, upper: f64) -> f64 {
        let dist = ChiSquared::new(df).unwrap();
        // substitute x = u² so the integrand stays bounded at the origin for df = 1
        let f = |u: f64| 2.0 * u * dist.pdf(u * u);
        let b = upper.sqrt();
        let m = 20_000;
        let h = b / m as f64;
        // the df = 1 integrand has a finite nonzero limit at the origin
        let mut s = f(1e-150) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn cdf_at_mean_matches_quadrature() {
        for df in [1.0, 2.0, 5.0, 10.0, 40.0, 100.0] {
            let oracle = integrate_pdf(df, df);
            let got = chi2_cdf(df, df).unwrap();
            assert!(got > 0.5 && got < 0.7, "df={df}: {got}");
            assert!((got - oracle).abs() < 1e-7, "df={df}: {got} vs {oracle}");
        }
    }

    #[test]
    fn round_trip_grid() {
        for df in [1.0, 2.0, 5.0, 10.0, 40.0, 99.0] {
            for q in [0.01, 0.25, 0.5, 0.95, 0.99] {
                let x = chi2_quantile(q, df).unwrap();
                let back = chi2_cdf(x, df).unwrap();
                assert!(((back - q) / q).abs() < 1e-8, "df={df} q={q}: {back}");
            }
        }
    }
}
