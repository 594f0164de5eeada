use conformal_region::special::{
    beta_cdf, beta_quantile, binomial_tail, incomplete_beta, ln_beta, ln_gamma, BetaParams,
    BinomialTailParams,
};
use proptest::prelude::*;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF};

/// `P(Bin(n, p) ≥ k)` summed term by term.
fn direct_tail(n: u64, k: u64, p: f64) -> f64 {
    let mut total = 0.0;
    for i in k..=n {
        let mut c = 1.0f64;
        for j in 0..i {
            c = c * (n - j) as f64 / (j + 1) as f64;
        }
        total += c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
    }
    total
}

#[test]
fn tail_agrees_with_statrs() {
    for n in [1u64, 5, 30, 100, 400] {
        for p in [0.01, 0.3, 0.5, 0.9, 0.999] {
            let bin = Binomial::new(p, n).unwrap();
            for k in 1..=n {
                let ours = binomial_tail(BinomialTailParams::new(n, k, p).unwrap());
                let theirs = bin.sf(k - 1);
                assert!(
                    (ours - theirs).abs() < 1e-9,
                    "n={n} k={k} p={p}: {ours} vs {theirs}"
                );
            }
        }
    }
}

#[test]
fn beta_cdf_agrees_with_statrs() {
    for (r, s) in [
        (0.5, 0.5),
        (1.0, 3.0),
        (46.0, 5.0),
        (90.0, 11.0),
        (2.5, 40.0),
    ] {
        let beta = statrs::distribution::Beta::new(r, s).unwrap();
        for i in 0..=50 {
            let z = i as f64 / 50.0;
            let ours = beta_cdf(z, BetaParams::new(r, s).unwrap()).unwrap();
            assert!((ours - beta.cdf(z)).abs() < 1e-10, "r={r} s={s} z={z}");
        }
    }
}

#[test]
fn ln_gamma_agrees_with_statrs() {
    for i in 1..400 {
        let x = i as f64 * 0.37;
        assert!(
            (ln_gamma(x) - statrs::function::gamma::ln_gamma(x)).abs()
                < 1e-10 * (1.0 + x.ln().abs() * x)
        );
    }
}

proptest! {
    #[test]
    fn tail_matches_direct_sum(n in prop::sample::select(vec![5u64, 30, 100]), kf in 0.0f64..1.0, p in 0.0f64..1.0) {
        let k = ((n + 1) as f64 * kf).floor() as u64;
        let ours = binomial_tail(BinomialTailParams::new(n, k, p).unwrap());
        prop_assert!((ours - direct_tail(n, k, p)).abs() < 1e-9);
    }

    #[test]
    fn tail_is_monotone(n in 1u64..200, kf in 0.0f64..1.0, p in 0.0f64..1.0, dp in 0.0f64..0.1) {
        let k = (n as f64 * kf).floor() as u64;
        let f = |k, p| binomial_tail(BinomialTailParams::new(n, k, p).unwrap());
        prop_assert!(f(k + 1, p) <= f(k, p) + 1e-15);
        prop_assert!(f(k, p) <= f(k, (p + dp).min(1.0)) + 1e-12);
    }

    #[test]
    fn tail_is_a_beta_cdf(n in 1u64..300, kf in 0.0f64..1.0, p in 0.001f64..0.999) {
        let k = 1 + (n as f64 * kf).floor().min((n - 1) as f64) as u64;
        let ours = binomial_tail(BinomialTailParams::new(n, k, p).unwrap());
        let via_beta = beta_cdf(p, BetaParams::new(k as f64, (n - k + 1) as f64).unwrap()).unwrap();
        prop_assert!((ours - via_beta).abs() < 1e-9);
    }

    #[test]
    fn quantile_round_trips(r in 0.5f64..120.0, s in 0.5f64..120.0, q in 0.001f64..0.999) {
        let b = BetaParams::new(r, s).unwrap();
        let z = beta_quantile(q, b).unwrap();
        prop_assert!((0.0..=1.0).contains(&z));
        prop_assert!((beta_cdf(z, b).unwrap() - q).abs() < 1e-8);
    }
}

#[test]
fn unregularized_integral_scales_the_cdf() {
    for (r, s) in [(2.0, 3.0), (46.0, 5.0), (0.7, 1.9)] {
        let b = BetaParams::new(r, s).unwrap();
        for z in [0.1, 0.5, 0.93] {
            let expected = beta_cdf(z, b).unwrap() * ln_beta(r, s).unwrap().exp();
            assert!(
                (incomplete_beta(z, b).unwrap() - expected).abs() <= 1e-12 * expected.max(1e-300)
            );
        }
    }
}
