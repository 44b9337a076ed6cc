//! Maximum-likelihood fits of heavy-tailed families with a KS-optimal
//! lower cutoff, and likelihood-ratio model comparison.

mod dist;
pub mod sample;
pub mod special;

pub use dist::Dist;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::brent::BrentOpt;
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_SAMPLES: usize = 50;
pub const MIN_TAIL: usize = 10;
pub const MAX_XMIN_CANDIDATES: usize = 100;
pub const DEFAULT_P_THRESHOLD: f64 = 0.1;
/// KS distance above which a best fit is flagged as poor.
pub const KS_FLAG: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("tail is degenerate (all samples equal)")]
    DegenerateTail,
    #[error("samples must be positive and finite")]
    NonPositive,
    #[error("discrete samples must be integers")]
    NonInteger,
    #[error("{0:?} did not converge at any candidate xmin")]
    NoConvergence(Family),
    #[error("common tail has fewer than {MIN_TAIL} samples")]
    EmptyCommonTail,
    #[error("bad sample on line {line}: {text:?}")]
    Parse { line: usize, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "PL")]
    PowerLaw,
    #[serde(rename = "LN")]
    LogNormal,
    #[serde(rename = "PLEC")]
    Plec,
    #[serde(rename = "SE")]
    StretchedExp,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::PowerLaw,
        Family::LogNormal,
        Family::Plec,
        Family::StretchedExp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Family::PowerLaw => "PL",
            Family::LogNormal => "LN",
            Family::Plec => "PLEC",
            Family::StretchedExp => "SE",
        }
    }

    pub fn param_names(self) -> [&'static str; 2] {
        match self {
            Family::PowerLaw => ["alpha", ""],
            Family::LogNormal => ["mu", "sigma"],
            Family::Plec => ["alpha", "lambda"],
            Family::StretchedExp => ["lambda", "beta"],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PL" | "POWERLAW" | "POWER_LAW" => Ok(Family::PowerLaw),
            "LN" | "LOGNORMAL" => Ok(Family::LogNormal),
            "PLEC" | "TRUNCATED_POWER_LAW" => Ok(Family::Plec),
            "SE" | "STRETCHED_EXPONENTIAL" | "WEIBULL" => Ok(Family::StretchedExp),
            _ => Err(format!("unknown family {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub family: Family,
    pub params: BTreeMap<&'static str, f64>,
    #[serde(skip)]
    pub raw: [f64; 2],
    pub xmin: f64,
    pub ks_distance: f64,
    pub loglik: f64,
    pub n_tail: usize,
    pub discrete: bool,
}

impl FitResult {
    fn new(family: Family, raw: [f64; 2], xmin: f64, ks: f64, loglik: f64, n_tail: usize, discrete: bool) -> Self {
        let names = family.param_names();
        let params = names
            .iter()
            .zip(raw)
            .filter(|(n, _)| !n.is_empty())
            .map(|(n, v)| (*n, v))
            .collect();
        FitResult {
            family,
            params,
            raw,
            xmin,
            ks_distance: ks,
            loglik,
            n_tail,
            discrete,
        }
    }

    pub fn dist(&self) -> Dist {
        Dist::new(self.family, self.raw, self.xmin, self.discrete).expect("fitted parameters are valid")
    }
}

/// Sorted samples with suffix sums, so every tail's sufficient statistics
/// are O(1) lookups.
struct Prepared {
    xs: Vec<f64>,
    distinct: Vec<f64>,
    /// Index into `xs` of the first occurrence of each distinct value.
    first: Vec<usize>,
    s_ln: Vec<f64>,
    s_ln2: Vec<f64>,
    s_x: Vec<f64>,
    discrete: bool,
}

impl Prepared {
    fn new(samples: &[f64], discrete: bool) -> Result<Self, FitError> {
        if samples.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(FitError::NonPositive);
        }
        if discrete && samples.iter().any(|x| x.fract() != 0.0) {
            return Err(FitError::NonInteger);
        }
        let mut xs = samples.to_vec();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len();
        let mut s_ln = vec![0.0; n + 1];
        let mut s_ln2 = vec![0.0; n + 1];
        let mut s_x = vec![0.0; n + 1];
        for i in (0..n).rev() {
            let l = xs[i].ln();
            s_ln[i] = s_ln[i + 1] + l;
            s_ln2[i] = s_ln2[i + 1] + l * l;
            s_x[i] = s_x[i + 1] + xs[i];
        }
        let mut distinct = Vec::new();
        let mut first = Vec::new();
        for (i, &x) in xs.iter().enumerate() {
            if distinct.last() != Some(&x) {
                distinct.push(x);
                first.push(i);
            }
        }
        Ok(Prepared {
            xs,
            distinct,
            first,
            s_ln,
            s_ln2,
            s_x,
            discrete,
        })
    }

    fn tail_start(&self, xmin: f64) -> usize {
        self.xs.partition_point(|&x| x < xmin)
    }

    /// Candidate cutoffs: distinct values leaving at least `MIN_TAIL`
    /// samples, thinned to evenly spaced picks.
    fn candidates(&self) -> Vec<f64> {
        let n = self.xs.len();
        let ok: Vec<f64> = self
            .distinct
            .iter()
            .zip(&self.first)
            .filter(|&(_, &i)| n - i >= MIN_TAIL)
            .map(|(&v, _)| v)
            .collect();
        if ok.len() <= MAX_XMIN_CANDIDATES {
            return ok;
        }
        let m = MAX_XMIN_CANDIDATES;
        (0..m).map(|k| ok[k * (ok.len() - 1) / (m - 1)]).collect()
    }
}

struct Tail<'a> {
    prep: &'a Prepared,
    start: usize,
    xmin: f64,
}

impl Tail<'_> {
    fn xs(&self) -> &[f64] {
        &self.prep.xs[self.start..]
    }

    fn n(&self) -> f64 {
        (self.prep.xs.len() - self.start) as f64
    }

    fn sum_ln(&self) -> f64 {
        self.prep.s_ln[self.start]
    }

    fn sum_of_log_f(&self, d: &Dist) -> f64 {
        let (s1, s2, sx) = (
            self.prep.s_ln[self.start],
            self.prep.s_ln2[self.start],
            self.prep.s_x[self.start],
        );
        let n = self.n();
        let [a, b] = d.p;
        match d.family {
            Family::PowerLaw => -a * s1,
            Family::LogNormal => -s1 - (s2 - 2.0 * a * s1 + n * a * a) / (2.0 * b * b),
            Family::Plec => -a * s1 - b * sx,
            Family::StretchedExp => (b - 1.0) * s1 - a.powf(b) * self.xs().iter().map(|x| x.powf(b)).sum::<f64>(),
        }
    }

    fn loglik(&self, d: &Dist) -> f64 {
        self.sum_of_log_f(d) - self.n() * d.log_z
    }

    /// Exact sup-distance between the empirical and model CDFs on the tail.
    fn ks(&self, d: &Dist) -> f64 {
        let xs = self.xs();
        let n = xs.len() as f64;
        let mut values = Vec::new();
        let mut counts = Vec::new();
        for &x in xs {
            if values.last() == Some(&x) {
                *counts.last_mut().unwrap() += 1;
            } else {
                values.push(x);
                counts.push(1usize);
            }
        }
        let (upper, lower) = d.cdf_at(&values);
        let mut seen = 0usize;
        let mut best: f64 = 0.0;
        for i in 0..values.len() {
            let before = seen as f64 / n;
            seen += counts[i];
            let after = seen as f64 / n;
            best = best.max((upper[i] - after).abs()).max((lower[i] - before).abs());
        }
        best
    }
}

struct Objective<'a> {
    tail: &'a Tail<'a>,
    family: Family,
    map: fn(&[f64]) -> [f64; 2],
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, ArgminError> {
        Ok(neg_loglik(self.tail, self.family, (self.map)(p)))
    }
}

fn neg_loglik(tail: &Tail, family: Family, p: [f64; 2]) -> f64 {
    match Dist::new(family, p, tail.xmin, tail.prep.discrete) {
        Some(d) => {
            let v = -tail.loglik(&d);
            if v.is_finite() {
                v
            } else {
                f64::MAX
            }
        }
        None => f64::MAX,
    }
}

struct Scalar<F: Fn(f64) -> f64>(F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, p: &f64) -> Result<f64, ArgminError> {
        Ok((self.0)(*p))
    }
}

fn minimize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Option<f64> {
    let res = Executor::new(Scalar(f), BrentOpt::new(lo, hi))
        .configure(|s| s.max_iters(200))
        .run()
        .ok()?;
    res.state().get_best_param().copied()
}

fn nelder_mead(obj: Objective, starts: &[[f64; 2]]) -> Option<(Vec<f64>, f64)> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let simplex = vec![
            vec![s[0], s[1]],
            vec![s[0] + 0.3, s[1]],
            vec![s[0], s[1] + 0.3],
        ];
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-10).ok()?;
        let run = Executor::new(
            Objective {
                tail: obj.tail,
                family: obj.family,
                map: obj.map,
            },
            solver,
        )
        .configure(|st| st.max_iters(600))
        .run();
        if let Ok(r) = run {
            let st = r.state();
            if let Some(p) = st.get_best_param() {
                let c = st.get_best_cost();
                if c < f64::MAX && best.as_ref().is_none_or(|b| c < b.1) {
                    best = Some((p.clone(), c));
                }
            }
        }
    }
    best
}

/// Closed-form continuous power-law exponent.
fn pl_alpha_continuous(tail: &Tail) -> Option<f64> {
    let denom = tail.sum_ln() - tail.n() * tail.xmin.ln();
    (denom > 0.0).then(|| 1.0 + tail.n() / denom)
}

/// MLE parameters at a fixed cutoff.
fn fit_params(tail: &Tail, family: Family) -> Option<[f64; 2]> {
    let discrete = tail.prep.discrete;
    let n = tail.n();
    let xs = tail.xs();
    let mean_ln = tail.sum_ln() / n;
    match family {
        Family::PowerLaw => {
            if !discrete {
                return pl_alpha_continuous(tail).map(|a| [a, 0.0]);
            }
            let a = minimize_1d(|a| neg_loglik(tail, family, [a, 0.0]), 1.000_001, 20.0)?;
            Some([a, 0.0])
        }
        Family::LogNormal => {
            let var = (tail.prep.s_ln2[tail.start] / n - mean_ln * mean_ln).max(1e-6);
            let obj = Objective {
                tail,
                family,
                map: |p| [p[0], p[1].exp()],
            };
            let (p, _) = nelder_mead(obj, &[[mean_ln, 0.5 * var.ln()], [tail.xmin.ln(), 0.5 * var.ln() + 0.7]])?;
            Some([p[0], p[1].exp()])
        }
        Family::Plec => {
            let a0 = pl_alpha_continuous(tail).unwrap_or(2.0).min(5.0);
            let mean = tail.prep.s_x[tail.start] / n;
            let obj = Objective {
                tail,
                family,
                map: |p| [p[0], p[1].exp()],
            };
            let (p, _) = nelder_mead(obj, &[[a0, (0.1 / mean).ln()], [1.0, (1.0 / mean).ln()]])?;
            Some([p[0], p[1].exp()])
        }
        Family::StretchedExp => {
            // continuous: λ^β has a closed form given β, leaving a 1-D search
            let profile = |b: f64| {
                let xm = tail.xmin.powf(b);
                let s: f64 = xs.iter().map(|x| x.powf(b) - xm).sum();
                (s > 0.0).then(|| (n / s).powf(1.0 / b))
            };
            let lb = minimize_1d(
                |lb| match profile(lb.exp()) {
                    Some(l) => neg_loglik(tail, family, [l, lb.exp()]),
                    None => f64::MAX,
                },
                (0.01f64).ln(),
                (10.0f64).ln(),
            )?;
            let b = lb.exp();
            let l = profile(b)?;
            if !discrete {
                return Some([l, b]);
            }
            let obj = Objective {
                tail,
                family,
                map: |p| [p[0].exp(), p[1].exp()],
            };
            let (p, _) = nelder_mead(obj, &[[l.ln(), b.ln()]])?;
            Some([p[0].exp(), p[1].exp()])
        }
    }
}

fn fit_on_tail(tail: &Tail, family: Family) -> Option<FitResult> {
    let p = fit_params(tail, family)?;
    let d = Dist::new(family, p, tail.xmin, tail.prep.discrete)?;
    let ll = tail.loglik(&d);
    if !ll.is_finite() {
        return None;
    }
    Some(FitResult::new(
        family,
        p,
        tail.xmin,
        tail.ks(&d),
        ll,
        tail.xs().len(),
        tail.prep.discrete,
    ))
}

fn check_size(samples: &[f64]) -> Result<(), FitError> {
    if samples.len() < MIN_SAMPLES {
        return Err(FitError::TooFewSamples {
            need: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    Ok(())
}

/// Fits `family` at every candidate cutoff and keeps the fit with the
/// smallest KS distance (ties: smaller cutoff).
pub fn fit(samples: &[f64], family: Family, discrete: bool) -> Result<FitResult, FitError> {
    check_size(samples)?;
    let prep = Prepared::new(samples, discrete)?;
    fit_prepared(&prep, family)
}

fn fit_prepared(prep: &Prepared, family: Family) -> Result<FitResult, FitError> {
    if prep.distinct.len() < 2 {
        return Err(FitError::DegenerateTail);
    }
    let cands = prep.candidates();
    let fits: Vec<Option<FitResult>> = cands
        .par_iter()
        .map(|&xmin| {
            let tail = Tail {
                prep,
                start: prep.tail_start(xmin),
                xmin,
            };
            // a tail of one repeated value carries no shape information
            if tail.xs()[0] == *tail.xs().last().unwrap() {
                return None;
            }
            fit_on_tail(&tail, family)
        })
        .collect();
    let mut best: Option<FitResult> = None;
    for f in fits.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| f.ks_distance < b.ks_distance) {
            best = Some(f);
        }
    }
    best.ok_or(FitError::NoConvergence(family))
}

/// Fit at a fixed cutoff.
pub fn fit_at(samples: &[f64], family: Family, discrete: bool, xmin: f64) -> Result<FitResult, FitError> {
    let prep = Prepared::new(samples, discrete)?;
    fit_at_prepared(&prep, family, xmin)
}

fn fit_at_prepared(prep: &Prepared, family: Family, xmin: f64) -> Result<FitResult, FitError> {
    let tail = Tail {
        prep,
        start: prep.tail_start(xmin),
        xmin,
    };
    if tail.xs().len() < MIN_TAIL {
        return Err(FitError::EmptyCommonTail);
    }
    fit_on_tail(&tail, family).ok_or(FitError::NoConvergence(family))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub a: Family,
    pub b: Family,
    /// Log-likelihood ratio `Σ ln p_a − ln p_b` on the common tail.
    #[serde(rename = "R")]
    pub r: f64,
    pub p: f64,
    pub xmin: f64,
    pub n_tail: usize,
    pub winner: Option<Family>,
}

/// Normalized log-likelihood ratio test on the tail above the larger of
/// the two cutoffs, both families refitted there.
pub fn compare(samples: &[f64], a: &FitResult, b: &FitResult, p_threshold: f64) -> Result<Comparison, FitError> {
    let prep = Prepared::new(samples, a.discrete)?;
    compare_prepared(&prep, a, b, p_threshold)
}

fn compare_prepared(prep: &Prepared, a: &FitResult, b: &FitResult, p_threshold: f64) -> Result<Comparison, FitError> {
    let xmin = a.xmin.max(b.xmin);
    let fa = if a.xmin == xmin { a.clone() } else { fit_at_prepared(prep, a.family, xmin)? };
    let fb = if b.xmin == xmin { b.clone() } else { fit_at_prepared(prep, b.family, xmin)? };
    let (da, db) = (fa.dist(), fb.dist());
    let tail = &prep.xs[prep.tail_start(xmin)..];
    if tail.len() < MIN_TAIL {
        return Err(FitError::EmptyCommonTail);
    }
    let diffs: Vec<f64> = tail.iter().map(|&x| da.log_pdf(x) - db.log_pdf(x)).collect();
    let n = diffs.len() as f64;
    let r: f64 = diffs.iter().sum();
    let mean = r / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let p = if var > 0.0 {
        statrs::function::erf::erfc(r.abs() / (2.0 * n * var).sqrt())
    } else {
        1.0
    };
    let winner = if p < p_threshold && r > 0.0 {
        Some(a.family)
    } else if p < p_threshold && r < 0.0 {
        Some(b.family)
    } else {
        None
    };
    Ok(Comparison {
        a: a.family,
        b: b.family,
        r,
        p,
        xmin,
        n_tail: tail.len(),
        winner,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestFit {
    pub family: Family,
    /// False when no pairwise comparison was decided.
    pub decided: bool,
    /// The chosen fit's KS distance exceeds [`KS_FLAG`].
    pub high_ks: bool,
    pub wins: BTreeMap<Family, usize>,
    pub fits: Vec<FitResult>,
    pub comparisons: Vec<Comparison>,
}

/// Fits all families, compares every pair, and picks the family with the
/// most decided wins (ties: lowest KS distance).
pub fn best_fit(samples: &[f64], discrete: bool, p_threshold: f64) -> Result<BestFit, FitError> {
    check_size(samples)?;
    let prep = Prepared::new(samples, discrete)?;
    let results: Vec<Result<FitResult, FitError>> =
        Family::ALL.iter().map(|&f| fit_prepared(&prep, f)).collect();
    if let Some(Err(FitError::DegenerateTail)) = results.first() {
        return Err(FitError::DegenerateTail);
    }
    let fits: Vec<FitResult> = results.into_iter().filter_map(Result::ok).collect();
    if fits.is_empty() {
        return Err(FitError::NoConvergence(Family::PowerLaw));
    }
    let mut wins: BTreeMap<Family, usize> = fits.iter().map(|f| (f.family, 0)).collect();
    let mut comparisons = Vec::new();
    for i in 0..fits.len() {
        for j in i + 1..fits.len() {
            if let Ok(c) = compare_prepared(&prep, &fits[i], &fits[j], p_threshold) {
                if let Some(w) = c.winner {
                    *wins.get_mut(&w).unwrap() += 1;
                }
                comparisons.push(c);
            }
        }
    }
    let best = fits
        .iter()
        .max_by(|x, y| {
            wins[&x.family]
                .cmp(&wins[&y.family])
                .then(y.ks_distance.partial_cmp(&x.ks_distance).unwrap())
        })
        .unwrap();
    Ok(BestFit {
        family: best.family,
        decided: wins.values().any(|&w| w > 0),
        high_ks: best.ks_distance > KS_FLAG,
        wins,
        comparisons,
        fits,
    })
}

/// Share of inputs labelled with each family, plus an `undecided` column.
pub fn tally(results: &[BestFit]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = Family::ALL
        .iter()
        .map(|f| (f.label().to_string(), 0.0))
        .collect();
    out.insert("undecided".into(), 0.0);
    if results.is_empty() {
        return out;
    }
    let unit = 100.0 / results.len() as f64;
    for r in results {
        let key = if r.decided { r.family.label() } else { "undecided" };
        *out.get_mut(key).unwrap() += unit;
    }
    out
}

/// One sample per line; blank lines and `#` comments are skipped.
pub fn parse_samples(text: &str) -> Result<Vec<f64>, FitError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| FitError::Parse {
                line: i + 1,
                text: l.to_string(),
            })
        })
        .collect()
}
