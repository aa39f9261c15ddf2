//! Closed-form rate functions and error exponents, tester constants,
//! Gaussian sample-size calculators, regime flags and lower-bound formulas.

use crate::error::{invalid, LabError, Result};
use crate::statistics::StatisticKind;

fn out_of_domain(msg: impl Into<String>) -> LabError {
    LabError::OutOfDomain(msg.into())
}

/// `e^α − 1 − α` without cancellation at small α.
pub fn expm1_minus_x(a: f64) -> f64 {
    if a.abs() < 1e-3 {
        let a2 = a * a;
        a2 * (0.5 + a * (1.0 / 6.0 + a * (1.0 / 24.0 + a * (1.0 / 120.0 + a / 720.0))))
    } else {
        a.exp_m1() - a
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(out_of_domain(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    Ok(())
}

/// Uniform-side rate of the quadratic-family statistics: `τ²/4`.
pub fn rate_uniform_sublinear(tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(out_of_domain(format!("tau = {tau} must be positive")));
    }
    Ok(tau * tau / 4.0)
}

/// Alternative-side rate, valid for `0 ≤ τ < 1/(γ(1−γ))`.
pub fn rate_alternative_sublinear(tau: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let g = gamma * (gamma - 1.0);
    if !(tau >= 0.0 && tau < -1.0 / g) {
        return Err(out_of_domain(format!("tau = {tau} outside [0, 1/(gamma(1-gamma)))")));
    }
    let num = tau * g + 1.0;
    Ok(num * num / (4.0 * g * g))
}

/// Uniform-side rate of the empty-bins statistic at `α = n/m`.
pub fn rate_uniform_empty(tau: f64, alpha: f64) -> Result<f64> {
    if !(tau > 0.0) || !(alpha > 0.0) {
        return Err(out_of_domain(format!("need tau > 0 and alpha > 0; got {tau}, {alpha}")));
    }
    Ok(tau * tau * alpha * alpha * (2.0 * alpha).exp() / (2.0 * expm1_minus_x(alpha)))
}

/// Alternative-side rate of the empty-bins statistic, valid for
/// `0 ≤ τ < e^{−α}/(2γ(1−γ))`.
pub fn rate_alternative_empty(tau: f64, alpha: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(alpha > 0.0) {
        return Err(out_of_domain(format!("alpha = {alpha} must be positive")));
    }
    let g = gamma * (gamma - 1.0);
    let bound = (-alpha).exp() / (2.0 * gamma * (1.0 - gamma));
    if !(tau >= 0.0 && tau < bound) {
        return Err(out_of_domain(format!("tau = {tau} outside [0, {bound})")));
    }
    let num = 2.0 * tau * alpha.exp() * g + 1.0;
    Ok(alpha * alpha * num * num / (8.0 * expm1_minus_x(alpha) * g * g))
}

/// Threshold, heavy-set fraction and `α = n/m` for one rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateQuery {
    pub tau: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl RateQuery {
    pub fn new(tau: f64, gamma: f64, alpha: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(out_of_domain(format!("alpha = {alpha} must be finite and nonnegative")));
        }
        if tau.is_nan() {
            return Err(out_of_domain("tau is NaN"));
        }
        Ok(Self { tau, gamma, alpha })
    }

    /// `(uniform, alternative)` rates of the quadratic-family statistics.
    pub fn sublinear(&self) -> Result<(f64, f64)> {
        Ok((rate_uniform_sublinear(self.tau)?, rate_alternative_sublinear(self.tau, self.gamma)?))
    }

    /// `(uniform, alternative)` rates of the empty-bins statistic.
    pub fn empty_bins(&self) -> Result<(f64, f64)> {
        Ok((rate_uniform_empty(self.tau, self.alpha)?, rate_alternative_empty(self.tau, self.alpha, self.gamma)?))
    }
}

/// Balanced exponent at the default threshold.
pub fn error_exponent(kind: &StatisticKind, alpha: f64) -> Result<f64> {
    match kind.resolved() {
        StatisticKind::Huber { .. } | StatisticKind::Squared | StatisticKind::Collisions => Ok(1.0),
        StatisticKind::EmptyBins | StatisticKind::Tv => {
            if !(alpha > 0.0) {
                return Err(out_of_domain(format!("alpha = {alpha} must be positive")));
            }
            Ok(alpha * alpha / (2.0 * expm1_minus_x(alpha)))
        }
        k => Err(out_of_domain(format!("no error exponent for the {} statistic", k.name()))),
    }
}

/// Exponents of both sides at the default threshold, with the sample-size constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentReport {
    pub tau: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub c: f64,
    pub constant: f64,
}

pub fn exponent_report(kind: &StatisticKind, alpha: f64, gamma: f64) -> Result<ExponentReport> {
    let (tau, c_minus, c_plus, constant) = match kind.resolved() {
        StatisticKind::Huber { .. } | StatisticKind::Squared | StatisticKind::Collisions => {
            (2.0, rate_uniform_sublinear(2.0)?, rate_alternative_sublinear(2.0, gamma)?, 1.0)
        }
        StatisticKind::EmptyBins | StatisticKind::Tv => {
            let tau = (-alpha).exp();
            (tau, rate_uniform_empty(tau, alpha)?, rate_alternative_empty(tau, alpha, gamma)?, tv_sample_constant(alpha)?)
        }
        k => return Err(out_of_domain(format!("no exponent report for the {} statistic", k.name()))),
    };
    Ok(ExponentReport { tau, c_plus, c_minus, c: c_plus.min(c_minus), constant })
}

/// Sample-size multiplier of the TV/empty-bins tester relative to the quadratic ones.
pub fn tv_sample_constant(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(out_of_domain(format!("alpha = {alpha} must be positive")));
    }
    Ok((2.0 * expm1_minus_x(alpha)).sqrt() / alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSizeKind {
    Huber,
    Squared,
    Tv,
    Superlinear,
}

impl std::str::FromStr for SampleSizeKind {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "huber" => Ok(Self::Huber),
            "squared" | "collisions" => Ok(Self::Squared),
            "tv" | "empty_bins" => Ok(Self::Tv),
            "superlinear" | "superlinear_tv" => Ok(Self::Superlinear),
            _ => Err(invalid(format!("unknown sample-size kind '{s}'"))),
        }
    }
}

const TV_TOL: f64 = 1e-6;
const TV_MAX_ITER: usize = 200;

pub fn sample_size(m: usize, epsilon: f64, delta_minus: f64, delta_plus: f64, kind: SampleSizeKind) -> Result<u64> {
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    for d in [delta_minus, delta_plus] {
        if !(d > 0.0 && d < 1.0) {
            return Err(invalid(format!("delta = {d} must lie in (0, 1)")));
        }
    }
    let mf = m as f64;
    let quad = mf.sqrt() / (epsilon * epsilon)
        * ((1.0 / delta_plus).ln().sqrt() + (1.0 / delta_minus).ln().sqrt())
        / 2.0;
    let n = match kind {
        SampleSizeKind::Huber | SampleSizeKind::Squared => quad,
        SampleSizeKind::Superlinear => 2.0 * (1.0 / delta_minus.max(delta_plus)).ln() / (epsilon * epsilon),
        SampleSizeKind::Tv => {
            let mut n = quad;
            let mut converged = false;
            for _ in 0..TV_MAX_ITER {
                let next = 0.5 * (n + tv_sample_constant(n / mf)? * quad);
                let done = (next - n).abs() <= TV_TOL * next;
                n = next;
                if done {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(LabError::OutOfValidity("TV sample-size iteration did not converge".into()));
            }
            if n > mf {
                return Err(LabError::OutOfValidity(format!(
                    "TV sample size {n:.1} exceeds m = {m}; the TV formula holds only for n <= m"
                )));
            }
            n
        }
    };
    // absorb rounding noise before the ceiling
    Ok((n * (1.0 - 1e-12)).ceil() as u64)
}

/// Gaussian prediction of the error probability from the normalized variance.
pub fn gaussian_delta(nvar: f64) -> f64 {
    (-1.0 / (8.0 * nvar)).exp()
}

/// Leading-order normalized variance of a tester.
pub fn nvar_closed_form(kind: &StatisticKind, n: usize, m: usize, epsilon: f64) -> Result<f64> {
    if n == 0 || m == 0 || !(epsilon > 0.0) {
        return Err(out_of_domain("need n, m >= 1 and epsilon > 0"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let base = mf / (nf * nf * epsilon.powi(4));
    match kind.resolved() {
        StatisticKind::Huber { .. } | StatisticKind::Squared | StatisticKind::Collisions => Ok(base / 8.0),
        StatisticKind::EmptyBins | StatisticKind::Tv => {
            let a = nf / mf;
            Ok(expm1_minus_x(a) / (4.0 * a * a) * base)
        }
        k => Err(out_of_domain(format!("no closed-form normalized variance for the {} statistic", k.name()))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeLabel {
    Superlinear,
    Sublinear,
    /// Within a factor 10 of `n/m = 1/ε²`.
    Transition,
    ImpossibleLeaning,
}

impl RegimeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeLabel::Superlinear => "superlinear",
            RegimeLabel::Sublinear => "sublinear",
            RegimeLabel::Transition => "transition",
            RegimeLabel::ImpossibleLeaning => "impossible-leaning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub label: RegimeLabel,
    /// `n²ε⁴/m`.
    pub x_axis: f64,
    pub huber_theorem_applicable: bool,
    pub collisions_window: bool,
    pub paninski_fails: bool,
    pub peebles_regime: bool,
}

/// Margin used for every "much less than" comparison.
pub const REGIME_MARGIN: f64 = 10.0;
/// Stand-in for the unspecified constant in `m ≥ C·ln n`.
pub const LOG_CONSTANT: f64 = 30.0;

pub fn regime(n: usize, m: usize, epsilon: f64, delta: f64) -> RegimeReport {
    let (nf, mf) = (n as f64, m as f64);
    let ratio = nf / mf;
    let inv = 1.0 / (epsilon * epsilon);
    let x = nf * nf * epsilon.powi(4) / mf;
    let label = if x < 1.0 / REGIME_MARGIN {
        RegimeLabel::ImpossibleLeaning
    } else if ratio >= REGIME_MARGIN * inv {
        RegimeLabel::Superlinear
    } else if ratio <= inv / REGIME_MARGIN {
        RegimeLabel::Sublinear
    } else {
        RegimeLabel::Transition
    };
    let ln_n = nf.ln();
    let ln_d = (1.0 / delta).ln();
    RegimeReport {
        label,
        x_axis: x,
        huber_theorem_applicable: ratio <= inv / REGIME_MARGIN && mf >= LOG_CONSTANT * ln_n,
        collisions_window: ln_n <= ln_d && ln_d <= nf.powf(1.0 / 13.0),
        paninski_fails: nf >= 48.0 * mf * mf.ln(),
        peebles_regime: epsilon >= ln_n.powf(0.25) / nf.powf(0.125),
    }
}

/// Natural-log exponent of the collisions-tester failure floor.
pub fn peebles_bound(n: usize, m: usize) -> Result<f64> {
    if n < 2 || m < 2 {
        return Err(invalid("peebles_bound needs n, m >= 2"));
    }
    Ok(-(4.0 * n as f64 / (m as f64).sqrt()) * (n as f64).ln())
}
