//! Separable statistics `S = Σ_j f(Y_j)`, their rescaled forms, default
//! thresholds, Huber β selection and the accept/reject rule.

use crate::distmodel::Histogram;
use crate::error::{invalid, LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum StatisticKind {
    Collisions,
    Squared,
    Tv,
    EmptyBins,
    Singletons,
    Huber { beta: f64 },
    /// `f(k) = table[k]`.
    Custom(Vec<f64>),
}

impl StatisticKind {
    pub fn name(&self) -> &'static str {
        match self {
            StatisticKind::Collisions => "collisions",
            StatisticKind::Squared => "squared",
            StatisticKind::Tv => "tv",
            StatisticKind::EmptyBins => "empty_bins",
            StatisticKind::Singletons => "singletons",
            StatisticKind::Huber { .. } => "huber",
            StatisticKind::Custom(_) => "custom",
        }
    }

    /// Huber with β = 0 is treated as TV everywhere.
    pub fn resolved(&self) -> &StatisticKind {
        match self {
            StatisticKind::Huber { beta } if *beta == 0.0 => &StatisticKind::Tv,
            k => k,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            StatisticKind::Huber { beta } => Some(*beta),
            _ => None,
        }
    }

    /// `f(k)` for a single bin count.
    pub fn term(&self, k: usize, n: usize, m: usize) -> Result<f64> {
        let lam = n as f64 / m as f64;
        let kf = k as f64;
        Ok(match self.resolved() {
            StatisticKind::Collisions => kf * (kf - 1.0) / 2.0,
            StatisticKind::Squared => (kf - lam) * (kf - lam),
            StatisticKind::Tv => (kf - lam).abs(),
            StatisticKind::EmptyBins => (k == 0) as u8 as f64,
            StatisticKind::Singletons => (k == 1) as u8 as f64,
            StatisticKind::Huber { beta } => huber_loss(kf - lam, *beta),
            StatisticKind::Custom(t) => *t
                .get(k)
                .ok_or_else(|| invalid(format!("custom table has no entry for count {k}")))?,
        })
    }

    /// `f` tabulated over `0..=n`.
    pub fn table(&self, n: usize, m: usize) -> Result<Vec<f64>> {
        (0..=n).map(|k| self.term(k, n, m)).collect()
    }

    fn validate(&self) -> Result<()> {
        if let StatisticKind::Huber { beta } = self {
            if !(*beta >= 0.0) {
                return Err(invalid(format!("Huber beta = {beta} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// `x²` inside `|x| < β`, `2β|x| − β²` outside.
pub fn huber_loss(x: f64, beta: f64) -> f64 {
    let a = x.abs();
    if a < beta {
        x * x
    } else {
        2.0 * beta * a - beta * beta
    }
}

fn check_dims(hist: &Histogram, n: usize, m: usize) -> Result<()> {
    if hist.n != n || hist.m() != m {
        return Err(invalid(format!(
            "histogram has n = {}, m = {}; expected n = {n}, m = {m}",
            hist.n,
            hist.m()
        )));
    }
    Ok(())
}

pub fn statistic_value(kind: &StatisticKind, hist: &Histogram, n: usize, m: usize) -> Result<f64> {
    check_dims(hist, n, m)?;
    kind.validate()?;
    let c = &hist.counts;
    Ok(match kind.resolved() {
        StatisticKind::Collisions => {
            c.iter().map(|&k| (k as u128 * k.saturating_sub(1) as u128) / 2).sum::<u128>() as f64
        }
        // integer forms keep the affine identities exact
        StatisticKind::Squared => {
            let sq: u128 = c.iter().map(|&k| (k as u128) * (k as u128)).sum();
            let num = m as i128 * sq as i128 - (n as i128) * (n as i128);
            num as f64 / m as f64
        }
        StatisticKind::Tv => {
            let s: u128 = c.iter().map(|&k| (m as i128 * k as i128 - n as i128).unsigned_abs()).sum();
            s as f64 / m as f64
        }
        StatisticKind::EmptyBins => c.iter().filter(|&&k| k == 0).count() as f64,
        StatisticKind::Singletons => c.iter().filter(|&&k| k == 1).count() as f64,
        StatisticKind::Huber { beta } => {
            let lam = n as f64 / m as f64;
            c.iter().map(|&k| huber_loss(k as f64 - lam, *beta)).sum()
        }
        StatisticKind::Custom(t) => {
            if t.len() < n + 1 {
                return Err(invalid(format!("custom table length {} < n + 1 = {}", t.len(), n + 1)));
            }
            c.iter().map(|&k| t[k]).sum()
        }
    })
}

/// Multiplier `m/(n²ε²)` of the quadratic-family rescaling.
fn scale(n: usize, m: usize, epsilon: f64) -> f64 {
    m as f64 / ((n as f64).powi(2) * epsilon * epsilon)
}

pub fn rescaled_value(kind: &StatisticKind, s: f64, n: usize, m: usize, epsilon: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("rescaling needs n >= 1"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("rescaling needs epsilon > 0, got {epsilon}")));
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok(match kind.resolved() {
        StatisticKind::Squared | StatisticKind::Huber { .. } => scale(n, m, epsilon) * (s - nf),
        StatisticKind::Collisions => {
            let sq = 2.0 * s + nf - nf * nf / mf;
            scale(n, m, epsilon) * (sq - nf)
        }
        StatisticKind::EmptyBins => scale(n, m, epsilon) * (s - mf * (-nf / mf).exp()),
        StatisticKind::Tv | StatisticKind::Singletons | StatisticKind::Custom(_) => s,
    })
}

pub fn default_threshold(kind: &StatisticKind, n: usize, m: usize, _epsilon: f64) -> Result<f64> {
    match kind.resolved() {
        StatisticKind::Squared | StatisticKind::Collisions | StatisticKind::Huber { .. } => Ok(2.0),
        StatisticKind::EmptyBins => Ok((-(n as f64) / m as f64).exp()),
        k => Err(LabError::Unsupported(format!("no default threshold for the {} statistic", k.name()))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDiagnostics {
    /// Δ actually used.
    pub delta: f64,
    /// Δ = nε²/m was ≥ 1 and got clamped to 1/e.
    pub delta_clamped: bool,
    /// `(β²ε²)³ ≤ Δ²` at these parameters.
    pub third_moment_ok: bool,
}

/// β = K·(ln(1/Δ) + √((n/m)·ln(1/Δ))) with Δ = nε²/m.
pub fn default_beta(n: usize, m: usize, epsilon: f64, k: f64) -> Result<(f64, BetaDiagnostics)> {
    if !(k > 0.0) {
        return Err(invalid(format!("K = {k} must be positive")));
    }
    if n == 0 || m == 0 || !(epsilon > 0.0) {
        return Err(invalid("default_beta needs n, m >= 1 and epsilon > 0"));
    }
    let lam = n as f64 / m as f64;
    let mut delta = lam * epsilon * epsilon;
    let clamped = delta >= 1.0;
    if clamped {
        delta = (-1.0f64).exp();
    }
    let l = (1.0 / delta).ln();
    let beta = k * (l + (lam * l).sqrt());
    let third = (beta * beta * epsilon * epsilon).powi(3) <= delta * delta;
    Ok((beta, BetaDiagnostics { delta, delta_clamped: clamped, third_moment_ok: third }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Uniform,
    NonUniform,
}

/// A statistic with its threshold on the rescaled scale. Ties reject.
#[derive(Debug, Clone, PartialEq)]
pub struct TesterSpec {
    pub kind: StatisticKind,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub threshold: f64,
}

impl TesterSpec {
    /// `threshold` may be ±∞ (always reject / always accept) but not NaN.
    pub fn new(kind: StatisticKind, n: usize, m: usize, epsilon: f64, threshold: f64) -> Result<Self> {
        kind.validate()?;
        if n == 0 || m == 0 {
            return Err(invalid("tester needs n, m >= 1"));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("epsilon = {epsilon} must lie in (0, 1)")));
        }
        if threshold.is_nan() {
            return Err(invalid("threshold is NaN"));
        }
        if let StatisticKind::Custom(t) = &kind {
            if t.len() != n + 1 {
                return Err(invalid(format!("custom table length {} != n + 1 = {}", t.len(), n + 1)));
            }
        }
        Ok(Self { kind, n, m, epsilon, threshold })
    }

    pub fn with_default_threshold(kind: StatisticKind, n: usize, m: usize, epsilon: f64) -> Result<Self> {
        let t = default_threshold(&kind, n, m, epsilon)?;
        Self::new(kind, n, m, epsilon, t)
    }

    /// Threshold given on the raw `S` scale.
    pub fn with_raw_threshold(kind: StatisticKind, n: usize, m: usize, epsilon: f64, raw: f64) -> Result<Self> {
        let t = rescaled_value(&kind, raw, n, m, epsilon)?;
        Self::new(kind, n, m, epsilon, t)
    }

    pub fn rescaled(&self, hist: &Histogram) -> Result<f64> {
        let s = statistic_value(&self.kind, hist, self.n, self.m)?;
        rescaled_value(&self.kind, s, self.n, self.m, self.epsilon)
    }

    pub fn decide_rescaled(&self, s_tilde: f64) -> Decision {
        if s_tilde < self.threshold {
            Decision::Uniform
        } else {
            Decision::NonUniform
        }
    }
}

pub fn decide(spec: &TesterSpec, hist: &Histogram) -> Result<Decision> {
    Ok(spec.decide_rescaled(spec.rescaled(hist)?))
}

/// Uniform iff the empirical distribution is within ε/2 of uniform in TV.
pub fn superlinear_tv_decide(hist: &Histogram, n: usize, m: usize, epsilon: f64) -> Result<Decision> {
    check_dims(hist, n, m)?;
    if n == 0 {
        return Err(invalid("superlinear TV test needs n >= 1"));
    }
    // TV·2nm = Σ|mY − n|, exact in integers
    let lhs: u128 = hist
        .counts
        .iter()
        .map(|&k| (m as i128 * k as i128 - n as i128).unsigned_abs())
        .sum();
    let rhs = epsilon * n as f64 * m as f64;
    Ok(if (lhs as f64) < rhs { Decision::Uniform } else { Decision::NonUniform })
}
