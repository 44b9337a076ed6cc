//! Two-sample KS, Spearman, Jaccard and min-max normalization.

use std::collections::BTreeSet;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} points")]
    TooFew(usize),
    #[error("constant input; correlation undefined")]
    ConstantInput,
    #[error("both sets empty")]
    BothEmpty,
    #[error("non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsOutcome {
    #[serde(rename = "D")]
    pub d: f64,
    pub p: f64,
    pub n1: usize,
    pub n2: usize,
}

fn sorted(v: &[f64]) -> Result<Vec<f64>, StatsError> {
    if v.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(s)
}

/// Largest gap between the two empirical CDFs, evaluated after each pooled
/// distinct value.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = a[i].min(b[j]);
        while i < n1 && a[i] <= x {
            i += 1;
        }
        while j < n2 && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    // once one side is exhausted its CDF is 1; the gap only shrinks from here
    // but the first step after exhaustion may still be the largest
    if i < n1 || j < n2 {
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    Ok(d)
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // series converges too slowly and Q is 1 to double precision here
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200u32 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_2samp(a: &[f64], b: &[f64]) -> Result<KsOutcome, StatsError> {
    let d = ks_statistic(a, b)?;
    let (n1, n2) = (a.len(), b.len());
    let en = (n1 * n2) as f64 / (n1 + n2) as f64;
    let p = if d == 0.0 { 1.0 } else { kolmogorov_sf(en.sqrt() * d) };
    Ok(KsOutcome { d, p, n1, n2 })
}

/// Ranks starting at 1, ties receiving the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew(3));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y))?;
    let n = x.len();
    let df = (n - 2) as f64;
    let p = if (1.0 - rho * rho) <= 0.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
    };
    Ok(Correlation { rho, p, n })
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64, StatsError> {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Err(StatsError::BothEmpty);
    }
    Ok(inter as f64 / union as f64)
}

/// Min-max scaling to [0,1]; constant input maps to 0.5.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - min) / span } else { 0.5 })
        .collect()
}
