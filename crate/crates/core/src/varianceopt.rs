//! Per-bin marginals, the pairwise covariance matrix `Q`, normalized
//! variance of separable statistics, and the equality-constrained QP for the
//! variance-optimal `f`.
//!
//! Conventions: `Var_p[Σ f(Y_j)] = m·fᵀQf`, and the normalized variance is
//! `m·fᵀQf / (m·d·f)²` with `d` the constraint direction of the target.
//! `d` is always tilted by `p̄⊙(a + b·k)` so that `Σd = Σd·k = 0`. This is a
//! no-op for `q̄`. For `q′`, whose mean is not `n/m`, it makes the gap
//! invariant under adding constant and linear terms to `f`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, LabError, Result};
use crate::numeric::{binomial_pmf_vec, dot, fsum};

/// Pmf of a single bin count over `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMarginal {
    pub probs: Vec<f64>,
}

impl BinMarginal {
    pub fn total(&self) -> f64 {
        fsum(self.probs.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Qbar,
    Qprime,
}

impl std::str::FromStr for Target {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qbar" => Ok(Target::Qbar),
            "qprime" => Ok(Target::Qprime),
            _ => Err(invalid(format!("unknown target '{s}' (expected qbar or qprime)"))),
        }
    }
}

pub fn pbar(n: usize, m: usize) -> Result<BinMarginal> {
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    Ok(BinMarginal { probs: binomial_pmf_vec(n, 1.0 / m as f64) })
}

pub fn qbar(n: usize, m: usize, epsilon: f64) -> Result<BinMarginal> {
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    if !(0.0..=0.5).contains(&epsilon) || (1.0 + 2.0 * epsilon) / m as f64 > 1.0 {
        return Err(invalid(format!("need 0 <= epsilon <= 1/2 and (1+2eps)/m <= 1; eps = {epsilon}, m = {m}")));
    }
    let hi = binomial_pmf_vec(n, (1.0 + 2.0 * epsilon) / m as f64);
    let lo = binomial_pmf_vec(n, (1.0 - 2.0 * epsilon) / m as f64);
    Ok(BinMarginal { probs: hi.iter().zip(&lo).map(|(a, b)| 0.5 * (a + b)).collect() })
}

/// `α_k = (k − λ)² − k + λ/m` with `λ = n/m`.
pub fn alpha_vector(n: usize, m: usize) -> Vec<f64> {
    let lam = n as f64 / m as f64;
    (0..=n)
        .map(|k| {
            let k = k as f64;
            (k - lam) * (k - lam) - k + lam / m as f64
        })
        .collect()
}

/// `q′_k = p̄_k(1 + 2ε²α_k)`.
pub fn qprime(n: usize, m: usize, epsilon: f64) -> Result<BinMarginal> {
    let p = pbar(n, m)?;
    let a = alpha_vector(n, m);
    let e2 = 2.0 * epsilon * epsilon;
    if a.iter().any(|x| 1.0 + e2 * x < 0.0) {
        return Err(invalid(format!("q' has negative entries at epsilon = {epsilon}")));
    }
    Ok(BinMarginal { probs: p.probs.iter().zip(&a).map(|(pk, ak)| pk * (1.0 + e2 * ak)).collect() })
}

/// `Q_{k,k′} = δ_{kk′}p̄_k + (m−1)p̄_k p̄_{k′|k} − m p̄_k p̄_{k′}`,
/// `p̄_{k′|k} = Bin(n−k, 1/(m−1), k′)`.
pub fn build_q(n: usize, m: usize) -> Result<DMatrix<f64>> {
    if m < 2 {
        return Err(invalid("Q needs m >= 2"));
    }
    let p = pbar(n, m)?.probs;
    let mf = m as f64;
    let mut q = DMatrix::zeros(n + 1, n + 1);
    for k in 0..=n {
        let cond = binomial_pmf_vec(n - k, 1.0 / (mf - 1.0));
        for kp in 0..=n {
            let c = cond.get(kp).copied().unwrap_or(0.0);
            q[(k, kp)] = (mf - 1.0) * p[k] * c - mf * p[k] * p[kp];
        }
        q[(k, k)] += p[k];
    }
    // the joint law is symmetric; remove rounding asymmetry
    let qt = q.transpose();
    Ok((q + qt) * 0.5)
}

/// Exact variance of `Σ_j f(Y_j)` under uniform `p`.
pub fn variance_via_q(f: &[f64], n: usize, m: usize) -> Result<f64> {
    let q = build_q(n, m)?;
    let fv = table(f, n)?;
    Ok(m as f64 * fv.dot(&(&q * &fv)))
}

fn table(f: &[f64], n: usize) -> Result<DVector<f64>> {
    if f.len() != n + 1 {
        return Err(invalid(format!("f table has length {}, expected {}", f.len(), n + 1)));
    }
    Ok(DVector::from_column_slice(f))
}

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub q: DMatrix<f64>,
    /// Constraint direction, orthogonal to constants and `k`.
    pub d: DVector<f64>,
    pub pbar: Vec<f64>,
}

impl QuadraticProgram {
    pub fn new(n: usize, m: usize, epsilon: f64, target: Target) -> Result<Self> {
        let q = build_q(n, m)?;
        let p = pbar(n, m)?.probs;
        let t = match target {
            Target::Qbar => qbar(n, m, epsilon)?,
            Target::Qprime => qprime(n, m, epsilon)?,
        };
        let raw: Vec<f64> = t.probs.iter().zip(&p).map(|(a, b)| a - b).collect();
        let d = tilt(&raw, &p);
        Ok(Self { n, m, epsilon, q, d: DVector::from_vec(d), pbar: p })
    }

    pub fn variance(&self, f: &[f64]) -> Result<f64> {
        let fv = table(f, self.n)?;
        Ok(self.m as f64 * fv.dot(&(&self.q * &fv)))
    }

    /// `E_target[S] − E_p[S]`.
    pub fn gap(&self, f: &[f64]) -> Result<f64> {
        table(f, self.n)?;
        Ok(self.m as f64 * dot(self.d.as_slice(), f))
    }

    pub fn nvar(&self, f: &[f64]) -> Result<f64> {
        let g = self.gap(f)?;
        let scale = self.m as f64 * self.d.norm() * f.iter().map(|x| x * x).sum::<f64>().sqrt();
        if g.abs() <= 1e-13 * scale || g == 0.0 {
            return Err(LabError::DegenerateStatistic("zero expected gap between hypotheses".into()));
        }
        Ok(self.variance(f)? / (g * g))
    }

    /// Minimizes `fᵀQf` subject to `d·f = 1/m`. Returns `(f*, nvar(f*))`.
    pub fn min_nvar(&self) -> Result<(Vec<f64>, f64)> {
        // scale by p̄^{-1/2} so the tail bins are not swamped by the cutoff
        let floor = 1e-200 * self.pbar.iter().copied().fold(0.0, f64::max);
        let support: Vec<usize> = (0..=self.n).filter(|&k| self.pbar[k] > floor).collect();
        let s: Vec<f64> = support.iter().map(|&k| self.pbar[k].sqrt()).collect();
        let r = support.len();
        let qs = DMatrix::from_fn(r, r, |i, j| self.q[(support[i], support[j])] / (s[i] * s[j]));
        let ds = DVector::from_fn(r, |i, _| self.d[support[i]] / s[i]);

        let eig = SymmetricEigen::new(qs);
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let cut = 1e-12 * lmax;
        let mut g = DVector::zeros(r);
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam.abs() > cut {
                let v = eig.eigenvectors.column(i);
                g += v * (v.dot(&ds) / lam);
            }
        }
        let quad = ds.dot(&g);
        if !(quad > 0.0) || !quad.is_finite() {
            return Err(LabError::DegenerateStatistic("constraint direction lies in the kernel of Q".into()));
        }
        let c = 1.0 / (self.m as f64 * quad);
        let mut f = vec![0.0; self.n + 1];
        for (i, &k) in support.iter().enumerate() {
            f[k] = c * g[i] / s[i];
        }
        Ok((f, 1.0 / (self.m as f64 * quad)))
    }
}

/// Removes the `p̄`-weighted constant and linear components of `raw`.
fn tilt(raw: &[f64], p: &[f64]) -> Vec<f64> {
    let k: Vec<f64> = (0..raw.len()).map(|i| i as f64).collect();
    let s0 = fsum(p.iter().copied());
    let s1 = dot(p, &k);
    let s2 = fsum(p.iter().zip(&k).map(|(a, b)| a * b * b));
    let r0 = fsum(raw.iter().copied());
    let r1 = dot(raw, &k);
    let det = s0 * s2 - s1 * s1;
    let (a, b) = if det.abs() > 1e-300 {
        ((r0 * s2 - r1 * s1) / det, (s0 * r1 - s1 * r0) / det)
    } else {
        (r0 / s0, 0.0)
    };
    raw.iter().zip(p).zip(&k).map(|((r, pk), kk)| r - pk * (a + b * kk)).collect()
}

pub fn nvar(f: &[f64], n: usize, m: usize, epsilon: f64, target: Target) -> Result<f64> {
    QuadraticProgram::new(n, m, epsilon, target)?.nvar(f)
}

pub fn min_nvar(n: usize, m: usize, epsilon: f64, target: Target) -> Result<(Vec<f64>, f64)> {
    QuadraticProgram::new(n, m, epsilon, target)?.min_nvar()
}

/// `k²` over `0..=n`.
pub fn quadratic_table(n: usize) -> Vec<f64> {
    (0..=n).map(|k| (k * k) as f64).collect()
}

/// Relative residual of `Q·k² ∝ p̄⊙α`: `min_a ‖Qk² − a·p̄⊙α‖ / ‖Qk²‖`.
pub fn kkt_residual_quadratic(n: usize, m: usize) -> Result<f64> {
    let q = build_q(n, m)?;
    let v = &q * DVector::from_vec(quadratic_table(n));
    let p = pbar(n, m)?.probs;
    let w = DVector::from_iterator(n + 1, p.iter().zip(alpha_vector(n, m)).map(|(a, b)| a * b));
    let vn = v.norm();
    if vn == 0.0 {
        return Ok(0.0);
    }
    let ww = w.dot(&w);
    let a = if ww > 0.0 { v.dot(&w) / ww } else { 0.0 };
    Ok((v - w * a).norm() / vn)
}
