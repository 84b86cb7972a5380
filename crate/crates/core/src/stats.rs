//! Special functions: log-gamma, the regularized incomplete gamma function and
//! the chi-square quantile obtained by inverting it.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection formula.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
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
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

pub fn chi2_cdf(df: usize, x: f64) -> f64 {
    gamma_p(df as f64 / 2.0, x / 2.0)
}

fn chi2_pdf(df: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = df as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Quantile of the chi-square distribution with `df` degrees of freedom.
///
/// Solves `P(df/2, x/2) = p` by bracketing followed by safeguarded Newton steps.
pub fn chi2_quantile(df: usize, p: f64) -> f64 {
    assert!(df >= 1, "chi-square needs at least one degree of freedom");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut lo = 0.0;
    let mut hi = (df as f64).max(1.0);
    while chi2_cdf(df, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(df, x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = chi2_pdf(df, x);
        let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let converged = (next - x).abs() <= 1e-14 * x.abs().max(1e-300);
        x = next;
        if converged || (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    x
}

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-13);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn df2_quantile_is_closed_form() {
        let x = chi2_quantile(2, 0.9);
        let exact = -2.0 * 0.1f64.ln();
        assert!((x - exact).abs() / exact < 1e-10, "{x} vs {exact}");
    }

    #[test]
    fn df1_quantile() {
        assert!((chi2_quantile(1, 0.9) - 2.705_543_454_095_404).abs() < 1e-9);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for df in [1, 2, 3, 5, 10, 25, 88] {
            for p in [0.01, 0.1, 0.5, 0.8, 0.9, 0.95, 0.999] {
                let x = chi2_quantile(df, p);
                assert!((chi2_cdf(df, x) - p).abs() < 1e-12, "df={df} p={p}");
            }
        }
    }

    #[test]
    fn quantile_monotone_in_p() {
        for df in 1..40 {
            assert!(chi2_quantile(df, 0.95) > chi2_quantile(df, 0.90));
        }
    }
}
