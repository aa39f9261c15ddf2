//! Exact brute-force answers on small instances: histogram enumeration,
//! exact error rates, exact MGFs and binomial tails.

use crate::distmodel::{Histogram, ProbabilityVector};
use crate::error::{LabError, Result};
use crate::numeric::{binomial_ln_pmf, ln_factorial, log_sum_exp};
use crate::statistics::{rescaled_value, statistic_value, Decision, StatisticKind, TesterSpec};

/// Hard cap on the number of compositions visited.
pub const ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedOutcome {
    pub hist: Histogram,
    pub prob: f64,
}

/// C(n+m−1, m−1), saturating at `cap + 1`.
pub fn composition_count(n: usize, m: usize, cap: u128) -> u128 {
    if m == 0 {
        return (n == 0) as u128;
    }
    let k = (m - 1).min(n) as u128;
    let top = (n + m - 1) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (top - i) / (i + 1);
        if c > cap {
            return cap + 1;
        }
    }
    c
}

fn check_size(n: usize, m: usize) -> Result<()> {
    let c = composition_count(n, m, ENUMERATION_CAP);
    if c > ENUMERATION_CAP {
        return Err(LabError::TooLarge(format!(
            "C({}, {}) compositions exceed the cap of {ENUMERATION_CAP}",
            n + m - 1,
            m - 1
        )));
    }
    Ok(())
}

/// Visits every composition of `n` into `m` parts in decreasing
/// lexicographic order.
pub fn for_each_composition<F: FnMut(&[usize])>(n: usize, m: usize, mut f: F) {
    if m == 0 {
        return;
    }
    let mut c = vec![0usize; m];
    c[0] = n;
    loop {
        f(&c);
        if m == 1 {
            return;
        }
        let Some(i) = (0..m - 1).rev().find(|&i| c[i] > 0) else { return };
        let t = c[m - 1];
        c[m - 1] = 0;
        c[i] -= 1;
        c[i + 1] = t + 1;
    }
}

/// Log multinomial probability with tables prepared once.
struct LogPmf {
    ln_p: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl LogPmf {
    fn new(p: &ProbabilityVector, n: usize) -> Self {
        Self {
            ln_p: p.probs().iter().map(|x| x.ln()).collect(),
            ln_fact: (0..=n).map(ln_factorial).collect(),
        }
    }

    fn eval(&self, counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        let mut s = self.ln_fact[n];
        for (j, &k) in counts.iter().enumerate() {
            if k > 0 {
                if self.ln_p[j] == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                s += k as f64 * self.ln_p[j] - self.ln_fact[k];
            }
        }
        s
    }
}

pub fn histogram_pmf(p: &ProbabilityVector, hist: &Histogram) -> f64 {
    if hist.m() != p.m() {
        return 0.0;
    }
    LogPmf::new(p, hist.n).eval(&hist.counts).exp()
}

/// Visits each histogram of `n` draws from `p` with its probability.
pub fn for_each_weighted<F: FnMut(&[usize], f64)>(p: &ProbabilityVector, n: usize, mut f: F) -> Result<()> {
    check_size(n, p.m())?;
    let lp = LogPmf::new(p, n);
    for_each_composition(n, p.m(), |c| f(c, lp.eval(c).exp()));
    Ok(())
}

pub fn enumerate_histograms(p: &ProbabilityVector, n: usize) -> Result<Vec<WeightedOutcome>> {
    let mut out = Vec::new();
    for_each_weighted(p, n, |c, prob| out.push(WeightedOutcome { hist: Histogram { counts: c.to_vec(), n }, prob }))?;
    Ok(out)
}

/// Exact (δ₋, δ₊) for an arbitrary decision rule.
pub fn exact_error_rates_by<D>(
    p: &ProbabilityVector,
    q: &ProbabilityVector,
    n: usize,
    mut decide: D,
) -> Result<(f64, f64)>
where
    D: FnMut(&Histogram) -> Result<Decision>,
{
    if p.m() != q.m() {
        return Err(crate::error::invalid("p and q must have the same length"));
    }
    check_size(n, p.m())?;
    let (lp, lq) = (LogPmf::new(p, n), LogPmf::new(q, n));
    let (mut dm, mut dp) = (Kahan::default(), Kahan::default());
    let mut hist = Histogram { counts: vec![0; p.m()], n };
    let mut err = None;
    for_each_composition(n, p.m(), |c| {
        if err.is_some() {
            return;
        }
        hist.counts.copy_from_slice(c);
        match decide(&hist) {
            Ok(Decision::NonUniform) => dm.add(lp.eval(c).exp()),
            Ok(Decision::Uniform) => dp.add(lq.eval(c).exp()),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok((dm.value(), dp.value())),
    }
}

#[derive(Default)]
struct Kahan {
    s: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// δ₋ = Pr_p[reject], δ₊ = Pr_q[accept].
pub fn exact_error_rates(spec: &TesterSpec, p: &ProbabilityVector, q: &ProbabilityVector) -> Result<(f64, f64)> {
    if p.m() != spec.m {
        return Err(crate::error::invalid("distribution length differs from the tester's m"));
    }
    exact_error_rates_by(p, q, spec.n, |h| crate::statistics::decide(spec, h))
}

/// Streaming log-sum-exp.
#[derive(Default)]
struct Lse {
    max: f64,
    sum: f64,
    started: bool,
}

impl Lse {
    fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if !self.started {
            self.max = x;
            self.sum = 1.0;
            self.started = true;
        } else if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    fn value(&self) -> f64 {
        if self.started {
            self.max + self.sum.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

fn log_mgf_of<G: FnMut(&Histogram) -> Result<f64>>(p: &ProbabilityVector, n: usize, mut g: G) -> Result<f64> {
    check_size(n, p.m())?;
    let lp = LogPmf::new(p, n);
    let mut acc = Lse::default();
    let mut hist = Histogram { counts: vec![0; p.m()], n };
    let mut err = None;
    for_each_composition(n, p.m(), |c| {
        if err.is_some() {
            return;
        }
        hist.counts.copy_from_slice(c);
        match g(&hist) {
            Ok(v) => acc.push(lp.eval(c) + v),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(acc.value()),
    }
}

/// E[exp(θ·S̃)] under `p`.
pub fn exact_mgf(kind: &StatisticKind, p: &ProbabilityVector, n: usize, m: usize, epsilon: f64, theta: f64) -> Result<f64> {
    exact_log_mgf(kind, p, n, m, epsilon, theta).map(f64::exp)
}

pub fn exact_log_mgf(kind: &StatisticKind, p: &ProbabilityVector, n: usize, m: usize, epsilon: f64, theta: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    log_mgf_of(p, n, |h| {
        let s = statistic_value(kind, h, n, m)?;
        Ok(theta * rescaled_value(kind, s, n, m, epsilon)?)
    })
}

/// E[exp(t·S)] on the raw scale.
pub fn exact_raw_mgf(kind: &StatisticKind, p: &ProbabilityVector, n: usize, t: f64) -> Result<f64> {
    let m = p.m();
    log_mgf_of(p, n, |h| Ok(t * statistic_value(kind, h, n, m)?)).map(f64::exp)
}

/// Exact (mean, variance) of `S = Σ f(Y_j)` for a table `f` over 0..=n.
pub fn exact_moments(f: &[f64], p: &ProbabilityVector, n: usize) -> Result<(f64, f64)> {
    if f.len() < n + 1 {
        return Err(crate::error::invalid("f table shorter than n + 1"));
    }
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut vals = Vec::new();
    for_each_weighted(p, n, |c, w| {
        let s: f64 = c.iter().map(|&k| f[k]).sum();
        s0 += w;
        s1 += w * s;
        vals.push((w, s));
    })?;
    let mean = s1 / s0;
    for (w, s) in vals {
        s2 += w * (s - mean) * (s - mean);
    }
    Ok((mean, s2 / s0))
}

/// Pr[X ≥ k] for X ~ Binomial(n, p), summed in log space. NaN for p outside [0, 1].
pub fn exact_binomial_tail(n: usize, p: f64, k: usize) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let terms: Vec<f64> = (k..=n).map(|j| binomial_ln_pmf(n, p, j)).collect();
    log_sum_exp(&terms).exp().min(1.0)
}
