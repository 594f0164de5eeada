//! Binomial tails and Beta quantiles used by the coverage bounds.

use conformal_region::special::{
    beta_cdf, beta_quantile, binomial_tail, BetaParams, BinomialTailParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 30;
    println!("k  P(Bin({n}, 0.9) >= k)");
    for k in [20, 24, 27, 30] {
        let tail = binomial_tail(BinomialTailParams::new(n, k, 0.9)?);
        println!("{k:<2} {tail:.10}");
    }

    let beta = BetaParams::new(46.0, 5.0)?;
    for q in [0.05, 0.5, 0.95] {
        let z = beta_quantile(q, beta)?;
        println!(
            "Beta(46, 5) quantile {q}: {z:.8} (cdf back {:.3e})",
            beta_cdf(z, beta)? - q
        );
    }
    Ok(())
}
