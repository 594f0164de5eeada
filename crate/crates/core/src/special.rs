//! Beta, incomplete Beta, binomial tail and Beta-distribution primitives.
//!
//! Everything here is a pure function of its arguments. Shapes are expected
//! to stay below ~1e4, which is all the coverage bounds ever need.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// Lanczos coefficients for g = 7, nine terms.
const LANCZOS_G: f64 = 7.0;
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

/// Term summation is used for the binomial tail up to this many trials;
/// above it the regularized incomplete Beta identity takes over.
pub const DIRECT_SUM_MAX_N: u64 = 60;

const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Trial count, threshold and success probability of a binomial upper tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialTailParams {
    n: u64,
    k: u64,
    p: f64,
}

impl BinomialTailParams {
    pub fn new(n: u64, k: u64, p: f64) -> Result<Self, SpecialError> {
        if n == 0 {
            return Err(SpecialError::Domain("binomial tail needs n >= 1".into()));
        }
        if k > n + 1 {
            return Err(SpecialError::Domain(format!(
                "threshold k = {k} outside [0, n + 1] for n = {n}"
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(SpecialError::Domain(format!(
                "success probability {p} outside [0, 1]"
            )));
        }
        Ok(Self { n, k, p })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Shapes of a Beta distribution, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    r: f64,
    s: f64,
}

impl BetaParams {
    pub fn new(r: f64, s: f64) -> Result<Self, SpecialError> {
        if !(r > 0.0 && s > 0.0 && r.is_finite() && s.is_finite()) {
            return Err(SpecialError::Domain(format!(
                "Beta shapes must be finite and positive, got ({r}, {s})"
            )));
        }
        Ok(Self { r, s })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn mean(&self) -> f64 {
        self.r / (self.r + self.s)
    }
}

/// ln Γ(x) for x > 0 (Lanczos, with reflection below 1/2).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
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

/// ln B(r, s) = ln Γ(r) + ln Γ(s) − ln Γ(r + s).
pub fn ln_beta(r: f64, s: f64) -> Result<f64, SpecialError> {
    BetaParams::new(r, s)?;
    Ok(ln_beta_unchecked(r, s))
}

pub(crate) fn ln_beta_unchecked(r: f64, s: f64) -> f64 {
    ln_gamma(r) + ln_gamma(s) - ln_gamma(r + s)
}

/// ln C(n, i).
pub fn ln_choose(n: u64, i: u64) -> f64 {
    debug_assert!(i <= n);
    if i == 0 || i == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(i as f64 + 1.0) - ln_gamma((n - i) as f64 + 1.0)
}

/// Upper binomial tail F_k(p) = P(Binomial(n, p) ≥ k).
pub fn binomial_tail(params: BinomialTailParams) -> f64 {
    binomial_tail_unchecked(params.n, params.k, params.p)
}

pub(crate) fn binomial_tail_unchecked(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    if n <= DIRECT_SUM_MAX_N {
        binomial_tail_direct(n, k, p)
    } else {
        regularized_unchecked(p, k as f64, (n - k + 1) as f64)
    }
}

/// Kahan-compensated summation of the tail terms.
fn binomial_tail_direct(n: u64, k: u64, p: f64) -> f64 {
    let lp = p.ln();
    let lq = (-p).ln_1p();
    let mut sum = 0.0;
    let mut comp = 0.0;
    for i in k..=n {
        let term = (ln_choose(n, i) + i as f64 * lp + (n - i) as f64 * lq).exp();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum.clamp(0.0, 1.0)
}

/// Non-regularized incomplete Beta integral ∫₀ᶻ x^{r−1}(1−x)^{s−1} dx.
pub fn incomplete_beta(z: f64, params: BetaParams) -> Result<f64, SpecialError> {
    check_unit(z)?;
    Ok(incomplete_beta_unchecked(z, params.r, params.s))
}

pub(crate) fn incomplete_beta_unchecked(z: f64, r: f64, s: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let full = ln_beta_unchecked(r, s).exp();
    if z >= 1.0 {
        return full;
    }
    if z <= (r + 1.0) / (r + s + 2.0) {
        (r * z.ln() + s * (-z).ln_1p()).exp() * beta_cf(z, r, s) / r
    } else {
        let w = 1.0 - z;
        let tail = (s * w.ln() + r * z.ln()).exp() * beta_cf(w, s, r) / s;
        (full - tail).max(0.0)
    }
}

/// Regularized incomplete Beta I_z(r, s), i.e. the Beta(r, s) CDF.
pub fn beta_cdf(z: f64, params: BetaParams) -> Result<f64, SpecialError> {
    check_unit(z)?;
    Ok(regularized_unchecked(z, params.r, params.s))
}

pub(crate) fn regularized_unchecked(z: f64, r: f64, s: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let ln_front = r * z.ln() + s * (-z).ln_1p() - ln_beta_unchecked(r, s);
    let v = if z <= (r + 1.0) / (r + s + 2.0) {
        ln_front.exp() * beta_cf(z, r, s) / r
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - z, s, r) / s
    };
    v.clamp(0.0, 1.0)
}

/// Continued fraction for the incomplete Beta (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Inverse of [`beta_cdf`] by bisection on [0, 1].
pub fn beta_quantile(q: f64, params: BetaParams) -> Result<f64, SpecialError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(SpecialError::Domain(format!(
            "quantile level {q} must lie strictly inside (0, 1)"
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if regularized_unchecked(mid, params.r, params.s) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let flo = regularized_unchecked(lo, params.r, params.s);
    let fhi = regularized_unchecked(hi, params.r, params.s);
    Ok(if (q - flo).abs() <= (fhi - q).abs() {
        lo
    } else {
        hi
    })
}

fn check_unit(z: f64) -> Result<(), SpecialError> {
    if !(0.0..=1.0).contains(&z) {
        return Err(SpecialError::Domain(format!("argument {z} outside [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(r: f64, s: f64) -> BetaParams {
        BetaParams::new(r, s).unwrap()
    }

    #[test]
    fn ln_beta_small_cases() {
        assert!(ln_beta(1.0, 1.0).unwrap().abs() < 1e-14);
        let v = ln_beta(2.0, 3.0).unwrap();
        assert!((v - (1.0f64 / 12.0).ln()).abs() < 1e-13);
    }

    #[test]
    fn ln_beta_matches_exact_factorial_ratio() {
        // Γ(46)Γ(5)/Γ(51) = 4! / (46·47·48·49·50), exact in integers.
        let denom: u128 = 46 * 47 * 48 * 49 * 50;
        let exact = (24.0f64).ln() - (denom as f64).ln();
        let v = ln_beta(46.0, 5.0).unwrap();
        assert!(((v - exact) / exact).abs() < 1e-12, "{v} vs {exact}");
    }

    #[test]
    fn ln_beta_rejects_nonpositive() {
        assert!(ln_beta(0.0, 1.0).is_err());
        assert!(ln_beta(1.0, -2.0).is_err());
    }

    #[test]
    fn binomial_tail_edges() {
        let t = |n, k, p| binomial_tail(BinomialTailParams::new(n, k, p).unwrap());
        assert_eq!(t(30, 0, 0.3), 1.0);
        assert_eq!(t(30, 5, 0.0), 0.0);
        assert_eq!(t(30, 31, 0.7), 0.0);
        assert_eq!(t(30, 30, 1.0), 1.0);
        assert!(BinomialTailParams::new(30, 32, 0.5).is_err());
        assert!(BinomialTailParams::new(30, 3, 1.5).is_err());
    }

    #[test]
    fn binomial_tail_rational_sum() {
        // Σ_{i=4}^{10} C(10,i) 0.7^i 0.3^{10−i} with p = 7/10 as exact integers over 10^10.
        let choose =
            |n: u128, k: u128| -> u128 { (0..k).fold(1, |acc, j| acc * (n - j) / (j + 1)) };
        let num: u128 = (4..=10u32)
            .map(|i| choose(10, i as u128) * 7u128.pow(i) * 3u128.pow(10 - i))
            .sum();
        let exact = num as f64 / 1e10;
        let v = binomial_tail(BinomialTailParams::new(10, 4, 0.7).unwrap());
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn incomplete_beta_cases() {
        let full = incomplete_beta(1.0, bp(2.0, 3.0)).unwrap();
        assert!((full - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(incomplete_beta(0.0, bp(2.5, 0.7)).unwrap(), 0.0);
        // ∫₀^½ x²(1−x) dx = z³/3 − z⁴/4 at z = ½.
        let v = incomplete_beta(0.5, bp(3.0, 2.0)).unwrap();
        let exact = 0.125 / 3.0 - 0.0625 / 4.0;
        assert!(((v - exact) / exact).abs() < 1e-12);
        assert!(incomplete_beta(1.2, bp(1.0, 1.0)).is_err());
        assert!(beta_cdf(-0.1, bp(1.0, 1.0)).is_err());
    }

    #[test]
    fn beta_cdf_cases() {
        assert_eq!(beta_cdf(1.0, bp(46.0, 5.0)).unwrap(), 1.0);
        assert!((beta_cdf(0.5, bp(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn beta_quantile_cases() {
        assert!((beta_quantile(0.5, bp(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-12);
        assert!(beta_quantile(0.0, bp(1.0, 1.0)).is_err());
        assert!(beta_quantile(1.0, bp(1.0, 1.0)).is_err());
        let p = bp(46.0, 5.0);
        let z0 = 0.87;
        let q = beta_cdf(z0, p).unwrap();
        assert!((beta_quantile(q, p).unwrap() - z0).abs() < 1e-8);
    }

    #[test]
    fn large_shape_ln_beta() {
        // B(N, 1) = 1/N.
        let v = ln_beta(1e4, 1.0).unwrap();
        let exact = -(1e4f64).ln();
        assert!(((v - exact) / exact).abs() < 1e-11, "{v} vs {exact}");
    }
}
