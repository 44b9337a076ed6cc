//! Special functions and quadrature used by the likelihoods.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// Bernoulli numbers B_2 .. B_16.
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Hurwitz zeta `ζ(s, q) = Σ_{k≥0} (q+k)^{-s}` for `s > 1`, `q > 0`, by
/// Euler–Maclaurin summation after a direct head.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    assert!(s > 1.0 && q > 0.0);
    const N: usize = 12;
    let mut sum = 0.0;
    for k in 0..N {
        sum += (q + k as f64).powf(-s);
    }
    let a = q + N as f64;
    sum += a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // rising factorial s(s+1)...(s+2j-2) over (2j)!
    let mut coef = s;
    let mut fact = 2.0;
    let mut pow = a.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        let term = b / fact * coef * pow;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        let j2 = 2.0 * (j as f64 + 1.0);
        coef *= (s + j2 - 1.0) * (s + j2);
        fact *= (j2 + 1.0) * (j2 + 2.0);
        pow /= a * a;
    }
    sum
}

/// `ln erfc(z)`, accurate far into the upper tail.
pub fn ln_erfc(z: f64) -> f64 {
    if z < 25.0 {
        statrs::function::erf::erfc(z).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / (2.0 * z2) + 3.0 / (4.0 * z2 * z2) - 15.0 / (8.0 * z2 * z2 * z2);
        -z2 - (z * std::f64::consts::PI.sqrt()).ln() + series.ln()
    }
}

fn gl16() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(16.try_into().unwrap()))
}

fn gl8() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(8.try_into().unwrap()))
}

const MAX_PANELS: usize = 5000;

/// `∫_a^b exp(log_f(x)) dx` for `0 < a < b ≤ ∞`, integrating in `t = ln x`
/// over unit panels. For an infinite upper limit panels are added until
/// they stop contributing past the integrand's peak.
pub fn log_space_integral(log_f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let g = |t: f64| {
        let v = log_f(t.exp()) + t;
        if v.is_nan() {
            0.0
        } else {
            v.exp()
        }
    };
    let (ta, tb) = (a.ln(), b.ln());
    if tb.is_finite() && tb - ta < 0.1 {
        return gl8().integrate(ta, tb, g);
    }
    let mut total = 0.0;
    let mut t = ta;
    for _ in 0..MAX_PANELS {
        let end = if tb.is_finite() { (t + 1.0).min(tb) } else { t + 1.0 };
        let part = gl16().integrate(t, end, g);
        total += part;
        if tb.is_finite() && end >= tb {
            break;
        }
        if !tb.is_finite() && part <= 1e-17 * total && g(end) <= g(t) {
            break;
        }
        t = end;
    }
    total
}
