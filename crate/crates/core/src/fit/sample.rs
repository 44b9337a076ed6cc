//! Synthetic samplers for the fitted families.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use super::special::hurwitz_zeta;

/// Continuous power law by inverse CDF: `x = xmin · u^{−1/(α−1)}`.
pub fn power_law<R: Rng + ?Sized>(n: usize, alpha: f64, xmin: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| xmin * (1.0 - rng.random::<f64>()).powf(-1.0 / (alpha - 1.0)))
        .collect()
}

/// Discrete power law, exact: inverts `P(X ≥ x) = ζ(α, x)/ζ(α, xmin)` by
/// bracketing and bisection.
pub fn power_law_discrete<R: Rng + ?Sized>(n: usize, alpha: f64, xmin: u64, rng: &mut R) -> Vec<f64> {
    let z0 = hurwitz_zeta(alpha, xmin as f64);
    let ccdf = |x: u64| hurwitz_zeta(alpha, x as f64) / z0;
    (0..n)
        .map(|_| {
            let u = 1.0 - rng.random::<f64>();
            // largest x with ccdf(x) >= u
            let (mut lo, mut hi) = (xmin, xmin + 1);
            while ccdf(hi) >= u {
                lo = hi;
                hi = hi.saturating_mul(2);
            }
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if ccdf(mid) >= u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo as f64
        })
        .collect()
}

pub fn lognormal<R: Rng + ?Sized>(n: usize, mu: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let d = LogNormal::new(mu, sigma).expect("sigma > 0");
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Power law with exponential cutoff by rejection from a power-law
/// envelope (needs `alpha > 1`).
pub fn plec<R: Rng + ?Sized>(n: usize, alpha: f64, lambda: f64, xmin: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = xmin * (1.0 - rng.random::<f64>()).powf(-1.0 / (alpha - 1.0));
        if rng.random::<f64>() < (-lambda * (x - xmin)).exp() {
            out.push(x);
        }
    }
    out
}

/// Weibull with density `∝ x^{β−1} e^{−(λx)^β}` by inverse CDF.
pub fn weibull<R: Rng + ?Sized>(n: usize, lambda: f64, beta: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| (-(1.0 - rng.random::<f64>()).ln()).powf(1.0 / beta) / lambda)
        .collect()
}
