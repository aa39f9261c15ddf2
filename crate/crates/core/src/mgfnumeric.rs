//! Poissonized moment generating functions and depoissonization by
//! trapezoid quadrature of the Cauchy contour integral
//! `E_n[X] = n!/(2πi) ∮ e^λ λ^{−n−1} G(λ) dλ`, `G(λ)` the Poisson(λ) expectation.

use num_complex::Complex64;

use crate::distmodel::{flat_alternative, uniform, ProbabilityVector};
use crate::error::{invalid, LabError, Result};
use crate::numeric::{ln_factorial, log_sum_exp};
use crate::oracle::{composition_count, exact_log_mgf};
use crate::statistics::{huber_loss, rescaled_value, StatisticKind};

pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
/// Relative change under node doubling that counts as non-convergence.
pub const QUADRATURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub lambda0: f64,
    pub nodes: usize,
}

impl ContourSpec {
    pub fn new(lambda0: f64, nodes: usize) -> Result<Self> {
        if !(lambda0 > 0.0) || !lambda0.is_finite() {
            return Err(invalid(format!("lambda0 = {lambda0} must be positive")));
        }
        if nodes < 16 || !nodes.is_multiple_of(2) {
            return Err(invalid(format!("nodes = {nodes} must be even and at least 16")));
        }
        Ok(Self { lambda0, nodes })
    }

    /// `λ₀ = n`, `max(256, 8n)` nodes.
    pub fn default_for(n: usize) -> Self {
        let nodes = (8 * n).max(256);
        Self { lambda0: n.max(1) as f64, nodes: nodes + nodes % 2 }
    }
}

/// `f(k)` with an explicit center for the centered kinds.
fn term_at(kind: &StatisticKind, k: usize, center: f64) -> Result<f64> {
    let kf = k as f64;
    Ok(match kind.resolved() {
        StatisticKind::Collisions => kf * (kf - 1.0) / 2.0,
        StatisticKind::Squared => (kf - center) * (kf - center),
        StatisticKind::Tv => (kf - center).abs(),
        StatisticKind::EmptyBins => (k == 0) as u8 as f64,
        StatisticKind::Singletons => (k == 1) as u8 as f64,
        StatisticKind::Huber { beta } => huber_loss(kf - center, *beta),
        StatisticKind::Custom(_) => {
            return Err(invalid("custom tables are defined only up to n; no Poisson MGF"));
        }
    })
}

fn grows_quadratically(kind: &StatisticKind) -> bool {
    matches!(kind.resolved(), StatisticKind::Squared | StatisticKind::Collisions)
}

/// `E[exp(θ·f(Z))]` for `Z ~ Poisson(λ)`.
pub fn poisson_term_mgf(kind: &StatisticKind, theta_eff: f64, lam_nu: f64, center: f64, tail_tol: f64) -> Result<f64> {
    poisson_term_log_mgf(kind, theta_eff, lam_nu, center, tail_tol, None).map(f64::exp)
}

/// `E[exp(θ·f(Z))·1{f(Z) ≤ cap}]`.
pub fn poisson_term_mgf_conditioned(
    kind: &StatisticKind,
    theta_eff: f64,
    lam_nu: f64,
    center: f64,
    cap: f64,
    tail_tol: f64,
) -> Result<f64> {
    poisson_term_log_mgf(kind, theta_eff, lam_nu, center, tail_tol, Some(cap)).map(f64::exp)
}

fn poisson_term_log_mgf(
    kind: &StatisticKind,
    theta: f64,
    lam: f64,
    center: f64,
    tail_tol: f64,
    cap: Option<f64>,
) -> Result<f64> {
    if !(lam >= 0.0) {
        return Err(invalid(format!("Poisson mean {lam} must be nonnegative")));
    }
    if theta == 0.0 && cap.is_none() {
        return Ok(0.0);
    }
    if lam == 0.0 {
        let f0 = term_at(kind, 0, center)?;
        return Ok(match cap {
            Some(c) if f0 > c => f64::NEG_INFINITY,
            _ => theta * f0,
        });
    }
    if cap.is_none() {
        if matches!(kind.resolved(), StatisticKind::EmptyBins) {
            let e = (-lam).exp();
            return Ok((e * theta.exp() - e + 1.0).ln());
        }
        if grows_quadratically(kind) && theta > 0.0 {
            return Err(LabError::DivergentMgf(format!(
                "the {} term MGF diverges for theta > 0; use the conditioned form",
                kind.name()
            )));
        }
    }

    let ln_lam = lam.ln();
    let ln_tol = tail_tol.ln();
    let max_k = (20.0 * (lam + 60.0 * lam.sqrt() + 500.0)) as usize;
    let mut logs: Vec<f64> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=max_k {
        let f = term_at(kind, k, center)?;
        let lp = -lam + k as f64 * ln_lam - ln_factorial(k);
        let capped = cap.is_some_and(|c| f > c);
        let v = if capped { f64::NEG_INFINITY } else { lp + theta * f };
        logs.push(v);
        if k as f64 > lam + 1.0 {
            if capped && k as f64 > center && grows_quadratically(kind) {
                return Ok(log_sum_exp(&logs));
            }
            // past the mode with geometric decay the remainder is below the last summand
            if lp <= ln_tol && (capped || v - prev < -std::f64::consts::LN_2) {
                let total = log_sum_exp(&logs);
                if capped || v <= total + ln_tol {
                    return Ok(total);
                }
            }
        }
        prev = v;
    }
    Err(LabError::DivergentMgf(format!("{} term series did not settle by k = {max_k}", kind.name())))
}

/// `S̃ = slope·S + intercept` for the kind's rescaling.
pub fn rescale_affine(kind: &StatisticKind, n: usize, m: usize, epsilon: f64) -> Result<(f64, f64)> {
    let b = rescaled_value(kind, 0.0, n, m, epsilon)?;
    let a = rescaled_value(kind, 1.0, n, m, epsilon)? - b;
    Ok((a, b))
}

/// `E[exp(θ·S̃)]` with independent `Z_j ~ Poisson(λ·p_j)`, rescaled with `n`.
pub fn poissonized_mgf(
    kind: &StatisticKind,
    theta: f64,
    p: &ProbabilityVector,
    n: usize,
    m: usize,
    epsilon: f64,
    lambda: f64,
) -> Result<f64> {
    poissonized_log_mgf(kind, theta, p, n, m, epsilon, lambda, None).map(f64::exp)
}

/// Log of the Poissonized MGF; with `cap`, every factor carries `1{f(Z_j) ≤ cap}`.
#[allow(clippy::too_many_arguments)]
pub fn poissonized_log_mgf(
    kind: &StatisticKind,
    theta: f64,
    p: &ProbabilityVector,
    n: usize,
    m: usize,
    epsilon: f64,
    lambda: f64,
    cap: Option<f64>,
) -> Result<f64> {
    if p.m() != m {
        return Err(invalid("distribution length differs from m"));
    }
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda = {lambda} must be positive")));
    }
    let (a, b) = rescale_affine(kind, n, m, epsilon)?;
    let center = n as f64 / m as f64;
    let mut total = theta * b;
    for (pj, count) in grouped(p.probs()) {
        let t = poisson_term_log_mgf(kind, theta * a, lambda * pj, center, DEFAULT_TAIL_TOL, cap)?;
        total += count as f64 * t;
    }
    Ok(total)
}

/// Distinct probabilities with multiplicities.
fn grouped(probs: &[f64]) -> Vec<(f64, usize)> {
    let mut v = probs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<(f64, usize)> = Vec::new();
    for x in v {
        match out.last_mut() {
            Some((y, c)) if *y == x => *c += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

/// Trapezoid rule with `nodes` points, returning the real part.
fn contour_trapezoid<F: Fn(Complex64) -> Complex64>(log_g: &F, n: usize, lambda0: f64, nodes: usize) -> f64 {
    let pre = ln_factorial(n) - n as f64 * lambda0.ln();
    let logs: Vec<Complex64> = (0..nodes)
        .map(|j| {
            let psi = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / nodes as f64;
            let lam = Complex64::from_polar(lambda0, psi);
            Complex64::new(pre, -(n as f64) * psi) + lam + log_g(lam)
        })
        .collect();
    let scale = logs.iter().map(|z| z.re).filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if scale == f64::NEG_INFINITY {
        return 0.0;
    }
    let (mut re, mut comp) = (0.0f64, 0.0f64);
    for z in &logs {
        let x = (z - scale).exp().re;
        let t = re + x;
        comp += if re.abs() >= x.abs() { (re - t) + x } else { (x - t) + re };
        re = t;
    }
    (re + comp) / nodes as f64 * scale.exp()
}

/// Exact-`n` expectation from the log Poisson expectation `ln G(λ)`.
pub fn depoissonize<F: Fn(Complex64) -> Complex64>(log_g: F, n: usize, spec: &ContourSpec) -> Result<f64> {
    let a = contour_trapezoid(&log_g, n, spec.lambda0, spec.nodes);
    let b = contour_trapezoid(&log_g, n, spec.lambda0, 2 * spec.nodes);
    if !b.is_finite() || (a - b).abs() > QUADRATURE_TOL * b.abs().max(f64::MIN_POSITIVE) {
        return Err(LabError::QuadratureFailure(format!(
            "doubling nodes {} -> {} moved the result {a} -> {b}",
            spec.nodes,
            2 * spec.nodes
        )));
    }
    Ok(b)
}

/// Same as [`depoissonize`] without the doubling check.
pub fn depoissonize_raw<F: Fn(Complex64) -> Complex64>(log_g: F, n: usize, spec: &ContourSpec) -> f64 {
    contour_trapezoid(&log_g, n, spec.lambda0, spec.nodes)
}

/// `ln G(λ)` for `E[exp(θ·S̃)]`. Per-bin series are cut at `k = n`, which
/// leaves the `λ^n` coefficient unchanged and keeps every factor entire.
pub fn separable_log_generating(
    kind: &StatisticKind,
    theta: f64,
    p: &ProbabilityVector,
    n: usize,
    m: usize,
    epsilon: f64,
) -> Result<impl Fn(Complex64) -> Complex64> {
    if p.m() != m {
        return Err(invalid("distribution length differs from m"));
    }
    let (a, b) = rescale_affine(kind, n, m, epsilon)?;
    let center = n as f64 / m as f64;
    let ln_w: Vec<f64> = (0..=n)
        .map(|k| Ok(theta * a * term_at(kind, k, center)? - ln_factorial(k)))
        .collect::<Result<_>>()?;
    let groups: Vec<(f64, f64, Vec<Complex64>)> = grouped(p.probs())
        .into_iter()
        .map(|(pj, c)| {
            // coefficients of the polynomial in λ, scaled by the largest
            let lc: Vec<f64> = ln_w.iter().enumerate().map(|(k, w)| w + crate::numeric::xlogy(k as f64, pj)).collect();
            let mx = lc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let coef = lc.iter().map(|x| Complex64::new((x - mx).exp(), 0.0)).collect();
            let mut coef: Vec<Complex64> = coef;
            coef.push(Complex64::new(mx, 0.0));
            (pj, c as f64, coef)
        })
        .collect();
    let shift = theta * b;
    Ok(move |lam: Complex64| {
        let mut acc = Complex64::new(shift, 0.0);
        for (pj, c, coef) in &groups {
            let (poly, mx) = coef.split_at(coef.len() - 1);
            let mut h = Complex64::new(0.0, 0.0);
            for ck in poly.iter().rev() {
                h = h * lam + ck;
            }
            acc += (h.ln() + mx[0].re - lam * *pj) * *c;
        }
        acc
    })
}

/// Depoissonized `E[exp(θ·S̃)]` for a built-in kind.
pub fn depoissonized_mgf(
    kind: &StatisticKind,
    theta: f64,
    p: &ProbabilityVector,
    n: usize,
    m: usize,
    epsilon: f64,
    spec: &ContourSpec,
) -> Result<f64> {
    let g = separable_log_generating(kind, theta, p, n, m, epsilon)?;
    depoissonize(g, n, spec)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitDist {
    Uniform,
    Flat { gamma: f64 },
}

/// `(m/(n²ε⁴))·ln E[exp((n²ε⁴/m)·θ·S̃)]`.
pub fn limiting_logmgf_estimate(
    kind: &StatisticKind,
    dist: LimitDist,
    theta: f64,
    n: usize,
    m: usize,
    epsilon: f64,
) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    let p = match dist {
        LimitDist::Uniform => uniform(m)?,
        LimitDist::Flat { gamma } => flat_alternative(m, epsilon, gamma)?.to_vector(),
    };
    let t = (n as f64).powi(2) * epsilon.powi(4) / m as f64;
    let ln_e = if composition_count(n, m, 1_000_000) <= 1_000_000 {
        exact_log_mgf(kind, &p, n, m, epsilon, t * theta)?
    } else {
        let v = depoissonized_mgf(kind, t * theta, &p, n, m, epsilon, &ContourSpec::default_for(n))?;
        if !(v > 0.0) {
            return Err(LabError::QuadratureFailure(format!("non-positive MGF estimate {v}")));
        }
        v.ln()
    };
    Ok(ln_e / t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_mgf, for_each_weighted};
    use crate::statistics::statistic_value;

    #[test]
    fn contour_spec_validation() {
        assert!(ContourSpec::new(1.0, 8).is_err());
        assert!(ContourSpec::new(1.0, 17).is_err());
        assert!(ContourSpec::new(0.0, 32).is_err());
        let d = ContourSpec::default_for(100);
        assert_eq!((d.lambda0, d.nodes), (100.0, 800));
        assert_eq!(ContourSpec::default_for(3).nodes, 256);
    }

    #[test]
    fn term_mgf_examples() {
        let e = poisson_term_mgf(&StatisticKind::EmptyBins, 2f64.ln(), 1.0, 1.0, DEFAULT_TAIL_TOL).unwrap();
        assert!((e - (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((e - 1.367879).abs() < 1e-6);
        for kind in [StatisticKind::Squared, StatisticKind::Tv, StatisticKind::Huber { beta: 2.0 }, StatisticKind::Singletons] {
            assert_eq!(poisson_term_mgf(&kind, 0.0, 3.0, 1.0, DEFAULT_TAIL_TOL).unwrap(), 1.0);
        }
        let h = poisson_term_mgf(&StatisticKind::Huber { beta: 10.0 }, 1e-4, 1.0, 1.0, DEFAULT_TAIL_TOL).unwrap();
        assert!((h - 1.0001).abs() < 1e-7, "{h}");
    }

    #[test]
    fn term_mgf_divergence_and_series() {
        assert!(matches!(
            poisson_term_mgf(&StatisticKind::Squared, 0.1, 2.0, 2.0, DEFAULT_TAIL_TOL),
            Err(LabError::DivergentMgf(_))
        ));
        let s = poisson_term_mgf(&StatisticKind::Squared, -0.3, 2.0, 2.0, DEFAULT_TAIL_TOL).unwrap();
        // direct summation oracle
        let mut want = 0.0;
        for k in 0..200usize {
            let lp = -2.0 + k as f64 * 2f64.ln() - ln_factorial(k);
            want += (lp - 0.3 * (k as f64 - 2.0).powi(2)).exp();
        }
        assert!((s - want).abs() < 1e-13);
        let c = poisson_term_mgf_conditioned(&StatisticKind::Squared, 0.1, 2.0, 2.0, 30.0, DEFAULT_TAIL_TOL).unwrap();
        let mut want = 0.0;
        for k in 0..200usize {
            let f = (k as f64 - 2.0).powi(2);
            if f <= 30.0 {
                want += (-2.0 + k as f64 * 2f64.ln() - ln_factorial(k) + 0.1 * f).exp();
            }
        }
        assert!((c - want).abs() < 1e-12 * want);
    }

    #[test]
    fn empty_closed_form_matches_series() {
        for lam in [0.1, 1.0, 3.7, 20.0] {
            for th in [-2.0, -0.1, 0.3, 1.5] {
                let closed = poisson_term_mgf(&StatisticKind::EmptyBins, th, lam, 0.0, DEFAULT_TAIL_TOL).unwrap();
                let series = poisson_term_mgf_conditioned(&StatisticKind::EmptyBins, th, lam, 0.0, 10.0, DEFAULT_TAIL_TOL).unwrap();
                assert!((closed - series).abs() < 1e-12, "{lam} {th}: {closed} vs {series}");
            }
        }
    }

    #[test]
    fn poissonized_examples() {
        let u = uniform(5).unwrap();
        assert_eq!(poissonized_mgf(&StatisticKind::Squared, 0.0, &u, 5, 5, 0.3, 5.0).unwrap(), 1.0);
        // empty bins: closed-form product against factor-wise series
        let th = 0.2;
        let closed = poissonized_mgf(&StatisticKind::EmptyBins, th, &u, 5, 5, 0.3, 5.0).unwrap();
        let (a, b) = rescale_affine(&StatisticKind::EmptyBins, 5, 5, 0.3).unwrap();
        let one = poisson_term_mgf_conditioned(&StatisticKind::EmptyBins, th * a, 1.0, 1.0, 10.0, DEFAULT_TAIL_TOL).unwrap();
        let by_series = (th * b).exp() * one.powi(5);
        assert!((closed - by_series).abs() < 1e-12 * closed);
    }

    #[test]
    fn poissonized_matches_conditioning_on_total() {
        let (n, m, eps, th) = (2usize, 2usize, 0.4, 0.005);
        let kind = StatisticKind::Huber { beta: 50.0 };
        let u = uniform(m).unwrap();
        let got = poissonized_mgf(&kind, th, &u, n, m, eps, n as f64).unwrap();
        let (a, b) = rescale_affine(&kind, n, m, eps).unwrap();
        let center = n as f64 / m as f64;
        let mut want = 0.0;
        for total in 0..80usize {
            let pk = (-(n as f64) + total as f64 * (n as f64).ln() - ln_factorial(total)).exp();
            let mut inner = 0.0;
            for_each_weighted(&u, total, |c, w| {
                let s: f64 = c.iter().map(|&k| huber_loss(k as f64 - center, 50.0)).sum();
                inner += w * (th * (a * s + b)).exp();
            })
            .unwrap();
            want += pk * inner;
        }
        assert!((got - want).abs() < 1e-8 * want, "{got} vs {want}");
    }

    #[test]
    fn depoissonize_constant() {
        for n in [1usize, 5, 20] {
            let v = depoissonize(|_| Complex64::new(0.0, 0.0), n, &ContourSpec::default_for(n)).unwrap();
            assert!((v - 1.0).abs() < 1e-10, "{n}: {v}");
        }
    }

    #[test]
    fn depoissonize_empty_power() {
        let g = |lam: Complex64| 2.0 * (Complex64::new(1.0, 0.0) + (-lam / 2.0).exp()).ln();
        let v = depoissonize(g, 2, &ContourSpec::default_for(2)).unwrap();
        assert!((v - 1.5).abs() < 1e-8, "{v}");
    }

    #[test]
    fn depoissonize_matches_oracle() {
        let p = uniform(3).unwrap();
        let (n, m, eps) = (6, 3, 0.4);
        for kind in [StatisticKind::Squared, StatisticKind::Huber { beta: 1.5 }, StatisticKind::EmptyBins, StatisticKind::Collisions] {
            for th in [-0.2, 0.05, 0.2] {
                let want = exact_mgf(&kind, &p, n, m, eps, th).unwrap();
                let spec = ContourSpec::default_for(n);
                let got = depoissonized_mgf(&kind, th, &p, n, m, eps, &spec).unwrap();
                assert!((got - want).abs() <= 1e-6 * want, "{kind:?} {th}: {got} vs {want}");
                let twice = depoissonize_raw(separable_log_generating(&kind, th, &p, n, m, eps).unwrap(), n, &ContourSpec { nodes: 2 * spec.nodes, ..spec });
                let once = depoissonize_raw(separable_log_generating(&kind, th, &p, n, m, eps).unwrap(), n, &spec);
                assert!((twice - once).abs() <= 1e-8 * once.abs());
            }
        }
    }

    #[test]
    fn depoissonize_nonuniform_matches_oracle() {
        let p = ProbabilityVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let kind = StatisticKind::Tv;
        let want = exact_mgf(&kind, &p, 7, 3, 0.3, 0.4).unwrap();
        let got = depoissonized_mgf(&kind, 0.4, &p, 7, 3, 0.3, &ContourSpec::default_for(7)).unwrap();
        assert!((got - want).abs() < 1e-9 * want);
    }

    #[test]
    fn poissonization_inflates_variance() {
        let (n, m, eps) = (8usize, 8usize, 0.3);
        let kind = StatisticKind::Squared;
        let u = uniform(m).unwrap();
        let h = 1e-3;
        let cap = Some(400.0);
        let pz = |t: f64| poissonized_log_mgf(&kind, t, &u, n, m, eps, n as f64, cap).unwrap();
        let ex = |t: f64| crate::oracle::exact_log_mgf(&kind, &u, n, m, eps, t).unwrap();
        let d2p = (pz(h) - 2.0 * pz(0.0) + pz(-h)) / (h * h);
        let d2e = (ex(h) - 2.0 * ex(0.0) + ex(-h)) / (h * h);
        assert!(d2p > d2e, "{d2p} vs {d2e}");
    }

    #[test]
    fn limiting_estimates() {
        assert_eq!(limiting_logmgf_estimate(&StatisticKind::Squared, LimitDist::Uniform, 0.0, 40, 40, 0.3).unwrap(), 0.0);
        let th = 0.5;
        let u = limiting_logmgf_estimate(&StatisticKind::Squared, LimitDist::Uniform, th, 40, 40, 0.3).unwrap();
        // frozen from an independent dynamic program over per-bin counts
        assert!((u - 0.122_397_121_477_373).abs() < 1e-9, "{u}");
        // exact-n sampling has E[S̃] = −1/(nε²); the band holds for the centered part
        let mean = -1.0 / (40.0 * 0.09);
        assert!((0.5..=2.0).contains(&((u - th * mean) / (th * th))), "{u}");
        let th = 0.25;
        let a = limiting_logmgf_estimate(&StatisticKind::Squared, LimitDist::Flat { gamma: 0.5 }, th, 40, 40, 0.3).unwrap();
        let b = limiting_logmgf_estimate(&StatisticKind::Squared, LimitDist::Uniform, th, 40, 40, 0.3).unwrap();
        assert!((a - 1.019_048_804_794_589).abs() < 1e-9, "{a}");
        assert!((0.5..=2.0).contains(&((a - b) / (4.0 * th))), "{a} {b}");
    }

    #[test]
    fn limiting_uses_oracle_when_small() {
        let v = limiting_logmgf_estimate(&StatisticKind::Squared, LimitDist::Uniform, 0.3, 6, 3, 0.4).unwrap();
        let t = 36.0 * 0.4f64.powi(4) / 3.0;
        let want = exact_mgf(&StatisticKind::Squared, &uniform(3).unwrap(), 6, 3, 0.4, t * 0.3).unwrap().ln() / t;
        assert!((v - want).abs() < 1e-12);
        let _ = statistic_value;
    }
}
