//! Small numeric helpers shared across modules.

use statrs::function::factorial;

pub fn ln_factorial(k: usize) -> f64 {
    factorial::ln_factorial(k as u64)
}

pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    factorial::ln_binomial(n as u64, k as u64)
}

/// ln Bin(n, p, k), exact at the p ∈ {0, 1} endpoints.
pub fn binomial_ln_pmf(n: usize, p: f64, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let a = xlogy(k as f64, p);
    let b = xlogy((n - k) as f64, 1.0 - p);
    ln_choose(n, k) + a + b
}

/// Bin(n, p, ·) as a vector over 0..=n.
pub fn binomial_pmf_vec(n: usize, p: f64) -> Vec<f64> {
    (0..=n).map(|k| binomial_ln_pmf(n, p, k).exp()).collect()
}

/// x·ln y with the 0·ln 0 = 0 convention.
pub fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// ln Σ exp(xᵢ), stable; −∞ for an empty or all −∞ input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    if mx == f64::INFINITY {
        return mx;
    }
    mx + xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Neumaier-compensated sum.
pub fn fsum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    fsum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Least-squares slope of y against x.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
