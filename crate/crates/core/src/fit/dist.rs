//! Tail-truncated distributions: normalization, log-density and CDF.

use std::f64::consts::PI;

use super::special::{hurwitz_zeta, ln_erfc, log_space_integral};
use super::Family;

/// Terms summed directly before switching to Euler–Maclaurin.
const HEAD: u64 = 256;

/// A family with fixed parameters, truncated to `[xmin, ∞)`.
#[derive(Debug, Clone)]
pub struct Dist {
    pub family: Family,
    pub p: [f64; 2],
    pub xmin: f64,
    pub discrete: bool,
    /// `log_f(xmin)`; relative quantities are scaled by `e^{-shift}`.
    shift: f64,
    /// ln of the normalizer.
    pub log_z: f64,
}

impl Dist {
    /// `None` when the parameters do not give a normalizable tail.
    pub fn new(family: Family, p: [f64; 2], xmin: f64, discrete: bool) -> Option<Dist> {
        let ok = match family {
            Family::PowerLaw => p[0] > 1.0,
            Family::LogNormal => p[1] > 0.0,
            Family::Plec => p[1] > 0.0,
            Family::StretchedExp => p[0] > 0.0 && p[1] > 0.0,
        };
        if !ok || !p.iter().all(|v| v.is_finite()) || xmin <= 0.0 {
            return None;
        }
        let mut d = Dist {
            family,
            p,
            xmin,
            discrete,
            shift: 0.0,
            log_z: 0.0,
        };
        d.shift = d.log_f(xmin);
        d.log_z = if discrete {
            if family == Family::PowerLaw {
                hurwitz_zeta(p[0], xmin).ln()
            } else {
                d.shift + d.sum_rel(xmin as u64, None).ln()
            }
        } else {
            match d.log_int_from(xmin) {
                Some(v) => v,
                None => d.shift + d.int_rel(xmin, f64::INFINITY).ln(),
            }
        };
        d.log_z.is_finite().then_some(d)
    }

    /// Unnormalized log density.
    pub fn log_f(&self, x: f64) -> f64 {
        let [a, b] = self.p;
        let lx = x.ln();
        match self.family {
            Family::PowerLaw => -a * lx,
            Family::LogNormal => -lx - (lx - a).powi(2) / (2.0 * b * b),
            Family::Plec => -a * lx - b * x,
            // p = [λ, β]
            Family::StretchedExp => (b - 1.0) * lx - (a * x).powf(b),
        }
    }

    fn dlog_f(&self, x: f64) -> f64 {
        let [a, b] = self.p;
        match self.family {
            Family::PowerLaw => -a / x,
            Family::LogNormal => -1.0 / x - (x.ln() - a) / (b * b * x),
            Family::Plec => -a / x - b,
            Family::StretchedExp => (b - 1.0) / x - b * a.powf(b) * x.powf(b - 1.0),
        }
    }

    /// Closed-form `ln ∫_c^∞ f` where available.
    fn log_int_from(&self, c: f64) -> Option<f64> {
        let [a, b] = self.p;
        match self.family {
            Family::PowerLaw => Some((1.0 - a) * c.ln() - (a - 1.0).ln()),
            Family::LogNormal => {
                let z = (c.ln() - a) / (b * std::f64::consts::SQRT_2);
                Some((b * (2.0 * PI).sqrt()).ln() + (0.5f64).ln() + ln_erfc(z))
            }
            Family::StretchedExp => Some(-(a * c).powf(b) - b.ln() - b * a.ln()),
            Family::Plec => None,
        }
    }

    /// `∫_lo^hi f · e^{-shift}`.
    fn int_rel(&self, lo: f64, hi: f64) -> f64 {
        if let (Some(a), true) = (self.log_int_from(lo), hi.is_infinite()) {
            return (a - self.shift).exp();
        }
        if let (Some(a), Some(b)) = (self.log_int_from(lo), self.log_int_from(hi)) {
            return (a - self.shift).exp() - (b - self.shift).exp();
        }
        log_space_integral(|x| self.log_f(x) - self.shift, lo, hi)
    }

    fn f_rel(&self, x: f64) -> f64 {
        (self.log_f(x) - self.shift).exp()
    }

    /// `Σ_{k=lo}^{hi-1} f(k) · e^{-shift}`; `hi = None` sums to infinity.
    fn sum_rel(&self, lo: u64, hi: Option<u64>) -> f64 {
        let head_end = match hi {
            Some(h) if h - lo <= 2 * HEAD => h,
            _ => lo + HEAD,
        };
        let mut s: f64 = (lo..head_end).map(|k| self.f_rel(k as f64)).sum();
        if Some(head_end) == hi {
            return s;
        }
        // Euler–Maclaurin: Σ_{c}^{h-1} f ≈ ∫_c^h f + (f(c) − f(h))/2 + (f'(h) − f'(c))/12
        let c = head_end as f64;
        let fc = self.f_rel(c);
        let dfc = fc * self.dlog_f(c);
        let (hf, fh, dfh) = match hi {
            Some(h) => {
                let h = h as f64;
                let fh = self.f_rel(h);
                (h, fh, fh * self.dlog_f(h))
            }
            None => (f64::INFINITY, 0.0, 0.0),
        };
        s += self.int_rel(c, hf) + 0.5 * (fc - fh) + (dfh - dfc) / 12.0;
        s
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        self.log_f(x) - self.log_z
    }

    /// `P(X ≤ x)` at each of the sorted distinct tail values, and for
    /// discrete data also `P(X ≤ x−1)`.
    pub fn cdf_at(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut upper = Vec::with_capacity(values.len());
        let mut lower = Vec::with_capacity(values.len());
        if self.discrete {
            let scale = (self.shift - self.log_z).exp();
            let mut acc = 0.0;
            let mut next = self.xmin as u64;
            for &v in values {
                let k = v as u64;
                acc += self.sum_rel(next, Some(k)) * scale;
                lower.push(acc.min(1.0));
                acc += self.f_rel(k as f64) * scale;
                upper.push(acc.min(1.0));
                next = k + 1;
            }
            return (upper, lower);
        }
        match self.family {
            Family::Plec => {
                let scale = (self.shift - self.log_z).exp();
                let mut acc = 0.0;
                let mut prev = self.xmin;
                for &v in values {
                    if v > prev {
                        acc += self.int_rel(prev, v) * scale;
                    }
                    upper.push(acc.min(1.0));
                    prev = v;
                }
            }
            _ => {
                for &v in values {
                    let s = self.log_int_from(v).unwrap() - self.log_z;
                    upper.push((1.0 - s.exp()).clamp(0.0, 1.0));
                }
            }
        }
        lower.clone_from(&upper);
        (upper, lower)
    }
}
