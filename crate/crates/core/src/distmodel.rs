//! Distributions over `[m]`, flat two-level alternatives, majorization and
//! flattening, and multinomial histogram sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{invalid, Result};
use crate::numeric::fsum;

const SUM_TOL: f64 = 1e-12;
const MAJOR_TOL: f64 = 1e-12;

/// A probability vector over `m` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("probability vector must have at least one entry"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("probabilities must be finite and nonnegative"));
        }
        let s = fsum(probs.iter().copied());
        if (s - 1.0).abs() > SUM_TOL {
            return Err(invalid(format!("probabilities sum to {s}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let s = fsum(w.iter().copied());
        if !(s > 0.0) || !s.is_finite() {
            return Err(invalid("weights must have a positive finite sum"));
        }
        Self::new(w.iter().map(|x| x / s).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn m(&self) -> usize {
        self.probs.len()
    }
}

/// Uniform distribution on `m` bins.
pub fn uniform(m: usize) -> Result<ProbabilityVector> {
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    Ok(ProbabilityVector { probs: vec![1.0 / m as f64; m] })
}

/// Two-level alternative: the first `l` bins are heavy, the rest light.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatFamily {
    pub m: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub l: usize,
}

impl FlatFamily {
    pub fn heavy(&self) -> f64 {
        1.0 / self.m as f64 + self.epsilon / self.l as f64
    }

    pub fn light(&self) -> f64 {
        1.0 / self.m as f64 - self.epsilon / (self.m - self.l) as f64
    }

    pub fn to_vector(&self) -> ProbabilityVector {
        let (h, lo) = (self.heavy(), self.light().max(0.0));
        let probs = (0..self.m).map(|j| if j < self.l { h } else { lo }).collect();
        ProbabilityVector { probs }
    }
}

pub fn flat_alternative(m: usize, epsilon: f64, gamma: f64) -> Result<FlatFamily> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    let l = (gamma * m as f64).round();
    if l < 1.0 || l > m as f64 - 1.0 {
        return Err(invalid(format!("round(gamma*m) = {l} outside [1, m-1] for m = {m}")));
    }
    let fam = FlatFamily { m, epsilon, gamma, l: l as usize };
    if epsilon > 1.0 - gamma + 1e-15 || fam.light() < -1e-15 {
        return Err(invalid(format!(
            "epsilon = {epsilon} too large for gamma = {gamma} (light mass would be negative)"
        )));
    }
    Ok(fam)
}

/// Total variation distance to uniform.
pub fn tv_to_uniform(p: &ProbabilityVector) -> f64 {
    let u = 1.0 / p.m() as f64;
    fsum(p.probs.iter().filter(|&&x| x > u).map(|x| x - u))
}

/// Averages `p` over a heavy set and its complement, giving a γ-skewed flat
/// vector majorized by `p`.
pub fn flatten(p: &ProbabilityVector, gamma: f64) -> Result<ProbabilityVector> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(invalid(format!("gamma = {gamma} must lie in (0, 1/2)")));
    }
    let m = p.m();
    let u = 1.0 / m as f64;
    let lo = gamma * m as f64;
    let hi = (1.0 - gamma) * m as f64;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p.probs[b].total_cmp(&p.probs[a]));
    let t = p.probs.iter().filter(|&&x| x > u).count();

    let size = if t as f64 >= lo - 1e-9 && t as f64 <= hi + 1e-9 {
        t
    } else if (t as f64) < lo {
        (lo - 1e-9).ceil() as usize
    } else {
        (hi + 1e-9).floor() as usize
    };
    if (size as f64) < lo - 1e-9 || (size as f64) > hi + 1e-9 || size == 0 || size >= m {
        return Err(invalid(format!("no gamma-skewed split of {m} bins exists for gamma = {gamma}")));
    }

    // when |T| is in range the top-|T| coordinates are exactly T
    let heavy = &order[..size];
    let light = &order[size..];
    let avg = |idx: &[usize]| fsum(idx.iter().map(|&i| p.probs[i])) / idx.len() as f64;
    let (a, b) = (avg(heavy), avg(light));
    let mut out = vec![0.0; m];
    for &i in heavy {
        out[i] = a;
    }
    for &i in light {
        out[i] = b;
    }
    Ok(ProbabilityVector { probs: out })
}

/// Whether `p` majorizes `q`.
pub fn majorizes(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<bool> {
    if p.m() != q.m() {
        return Err(invalid("majorization needs equal lengths"));
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    };
    let (ps, qs) = (sorted(&p.probs), sorted(&q.probs));
    let (mut sp, mut sq) = (0.0, 0.0);
    for (a, b) in ps.iter().zip(&qs) {
        sp += a;
        sq += b;
        if sp < sq - MAJOR_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Bin counts of `n` samples.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Histogram {
    pub counts: Vec<usize>,
    pub n: usize,
}

impl Histogram {
    pub fn new(counts: Vec<usize>) -> Self {
        let n = counts.iter().sum();
        Self { counts, n }
    }

    pub fn m(&self) -> usize {
        self.counts.len()
    }
}

/// Precomputed conditional probabilities for the binomial chain.
#[derive(Debug, Clone)]
pub struct HistogramSampler {
    cond: Vec<f64>,
}

impl HistogramSampler {
    pub fn new(p: &ProbabilityVector) -> Self {
        let m = p.m();
        let mut cond = vec![0.0; m];
        let mut tail = 0.0;
        let mut comp = 0.0;
        for j in (0..m).rev() {
            // compensated suffix sum
            let y = p.probs[j] - comp;
            let t = tail + y;
            comp = (t - tail) - y;
            tail = t;
            cond[j] = if tail > 0.0 { (p.probs[j] / tail).clamp(0.0, 1.0) } else { 0.0 };
        }
        cond[m - 1] = 1.0;
        Self { cond }
    }

    pub fn m(&self) -> usize {
        self.cond.len()
    }

    /// Fills `counts` (length m) with one multinomial draw.
    pub fn sample_into<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, counts: &mut [usize]) {
        let mut remaining = n as u64;
        for (j, c) in counts.iter_mut().enumerate() {
            if remaining == 0 {
                *c = 0;
                continue;
            }
            let pj = self.cond[j];
            let k = if pj >= 1.0 {
                remaining
            } else if pj <= 0.0 {
                0
            } else {
                Binomial::new(remaining, pj).expect("valid binomial").sample(rng)
            };
            *c = k as usize;
            remaining -= k;
        }
    }
}

/// One multinomial(n, p) histogram, deterministic in `seed`.
pub fn sample_histogram(p: &ProbabilityVector, n: usize, seed: u64) -> Histogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0; p.m()];
    HistogramSampler::new(p).sample_into(n, &mut rng, &mut counts);
    Histogram { counts, n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn uniform_vectors() {
        assert_eq!(uniform(4).unwrap().probs(), &[0.25; 4]);
        assert_eq!(uniform(1).unwrap().probs(), &[1.0]);
        assert_eq!(tv_to_uniform(&uniform(7).unwrap()), 0.0);
        assert!(uniform(0).is_err());
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
        assert!(ProbabilityVector::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn flat_examples() {
        let f = flat_alternative(2, 0.2, 0.5).unwrap();
        assert!(close(f.to_vector().probs(), &[0.7, 0.3], 1e-15));
        let f = flat_alternative(4, 0.1, 0.5).unwrap();
        assert!(close(f.to_vector().probs(), &[0.3, 0.3, 0.2, 0.2], 1e-15));
        assert!((tv_to_uniform(&f.to_vector()) - 0.1).abs() < 1e-12);
        let f = flat_alternative(4, 0.1, 0.25).unwrap();
        let l = 0.25 - 0.1 / 3.0;
        assert!(close(f.to_vector().probs(), &[0.35, l, l, l], 1e-15));
    }

    #[test]
    fn flat_errors() {
        assert!(flat_alternative(4, 0.8, 0.5).is_err());
        assert!(flat_alternative(4, 0.1, 0.05).is_err());
        assert!(flat_alternative(4, 0.1, 0.95).is_err());
        assert!(flat_alternative(1, 0.1, 0.5).is_err());
        assert!(flat_alternative(4, 0.0, 0.5).is_err());
    }

    #[test]
    fn tv_of_two_point() {
        assert!((tv_to_uniform(&pv(&[0.7, 0.3])) - 0.2).abs() < 1e-15);
        assert_eq!(tv_to_uniform(&uniform(5).unwrap()), 0.0);
    }

    #[test]
    fn flatten_examples() {
        let out = flatten(&pv(&[0.5, 0.3, 0.2]), 1.0 / 3.0).unwrap();
        assert!(close(out.probs(), &[0.5, 0.25, 0.25], 1e-15));
        assert!((tv_to_uniform(&out) - 1.0 / 6.0).abs() < 1e-12);

        let out = flatten(&pv(&[0.7, 0.2, 0.1]), 1.0 / 3.0).unwrap();
        assert!(close(out.probs(), &[0.7, 0.15, 0.15], 1e-15));
        assert!((tv_to_uniform(&out) - 0.7 + 1.0 / 3.0).abs() < 1e-12);

        let flat = pv(&[0.5, 0.25, 0.25]);
        assert!(close(flatten(&flat, 1.0 / 3.0).unwrap().probs(), flat.probs(), 1e-15));

        assert!(flatten(&flat, 0.5).is_err());
        assert!(flatten(&flat, 0.0).is_err());
    }

    #[test]
    fn flatten_uses_top_coordinates_when_t_small() {
        // |T| = 1 < γm = 2: the top two coordinates form the heavy set
        let p = pv(&[0.4, 0.2, 0.2, 0.1, 0.1]);
        let out = flatten(&p, 0.4).unwrap();
        let l = 0.4 / 3.0;
        assert!(close(out.probs(), &[0.3, 0.3, l, l, l], 1e-15));
        assert!(majorizes(&p, &out).unwrap());
    }

    #[test]
    fn majorization_examples() {
        let p = pv(&[0.5, 0.3, 0.2]);
        assert!(majorizes(&p, &pv(&[0.5, 0.25, 0.25])).unwrap());
        assert!(majorizes(&p, &p).unwrap());
        assert!(!majorizes(&uniform(3).unwrap(), &p).unwrap());
        assert!(majorizes(&p, &uniform(2).unwrap()).is_err());
    }

    #[test]
    fn sample_edge_cases() {
        let h = sample_histogram(&uniform(5).unwrap(), 0, 1);
        assert_eq!(h.counts, vec![0; 5]);
        let h = sample_histogram(&uniform(1).unwrap(), 7, 1);
        assert_eq!(h.counts, vec![7]);
        let p = pv(&[0.3, 0.0, 0.7]);
        for s in 0..50 {
            let h = sample_histogram(&p, 20, s);
            assert_eq!(h.counts[1], 0);
            assert_eq!(h.counts.iter().sum::<usize>(), 20);
        }
    }

    #[test]
    fn sample_deterministic() {
        let p = uniform(10).unwrap();
        assert_eq!(sample_histogram(&p, 50, 9), sample_histogram(&p, 50, 9));
        assert_ne!(sample_histogram(&p, 50, 9), sample_histogram(&p, 50, 10));
    }

    #[test]
    fn sample_mean_of_first_bin() {
        let p = uniform(10).unwrap();
        let trials = 100_000u64;
        let total: usize = (0..trials).map(|s| sample_histogram(&p, 100, s).counts[0]).sum();
        let mean = total as f64 / trials as f64;
        let tol = 4.0 * (100.0 * 0.1 * 0.9 / trials as f64).sqrt();
        assert!((mean - 10.0).abs() < tol, "mean {mean}");
    }

    #[test]
    fn first_bin_marginal_chi_square() {
        // bin-0 marginal against Binomial(n, p0) at the 1e-6 level
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = pv(&[0.15, 0.35, 0.5]);
        let n = 12;
        let draws = 10_000u64;
        let mut obs = vec![0f64; n + 1];
        for s in 0..draws {
            obs[sample_histogram(&p, n, 1000 + s).counts[0]] += 1.0;
        }
        let pmf = crate::numeric::binomial_pmf_vec(n, 0.15);
        // pool cells with expected count < 5 into the tail
        let mut cells: Vec<(f64, f64)> = Vec::new();
        let (mut eo, mut ee) = (0.0, 0.0);
        for k in 0..=n {
            eo += obs[k];
            ee += pmf[k] * draws as f64;
            if ee >= 5.0 && pmf[k + 1..].iter().sum::<f64>() * draws as f64 >= 5.0 {
                cells.push((eo, ee));
                eo = 0.0;
                ee = 0.0;
            }
        }
        cells.push((eo, ee));
        let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
        let df = (cells.len() - 1) as f64;
        let pval = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
        assert!(pval > 1e-6, "chi2 {stat} df {df} p {pval}");
    }

    fn arb_pv() -> impl Strategy<Value = ProbabilityVector> {
        prop::collection::vec(0.0f64..1.0, 2..24).prop_filter_map("zero mass", |w| {
            ProbabilityVector::from_weights(&w).ok()
        })
    }

    proptest! {
        #[test]
        fn flatten_majorized_and_tv_sandwich(p in arb_pv(), g in 0.01f64..0.49) {
            if let Ok(out) = flatten(&p, g) {
                prop_assert!(majorizes(&p, &out).unwrap());
                let (a, b) = (tv_to_uniform(&p), tv_to_uniform(&out));
                prop_assert!(b <= a + 1e-12);
                prop_assert!((1.0 - g) * a <= b + 1e-12);
                let mut vals: Vec<f64> = out.probs().to_vec();
                vals.sort_by(|x, y| x.total_cmp(y));
                vals.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
                prop_assert!(vals.len() <= 2);
            }
        }

        #[test]
        fn samples_sum_to_n(p in arb_pv(), n in 0usize..500, seed in any::<u64>()) {
            let h = sample_histogram(&p, n, seed);
            prop_assert_eq!(h.counts.iter().sum::<usize>(), n);
            prop_assert_eq!(h.m(), p.m());
        }

        #[test]
        fn flat_tv_is_epsilon(m in 2usize..200, g in 0.05f64..0.95, e in 0.001f64..0.999) {
            if let Ok(f) = flat_alternative(m, e, g) {
                let v = f.to_vector();
                prop_assert!((tv_to_uniform(&v) - e).abs() < 1e-12);
                prop_assert!(f.light() >= -1e-15);
                let mut vals: Vec<f64> = v.probs().to_vec();
                vals.dedup();
                prop_assert_eq!(vals.len(), 2);
            }
        }

        #[test]
        fn flat_half_is_one_pm_two_eps(half in 1usize..100, e in 0.001f64..0.5) {
            let m = 2 * half;
            let v = flat_alternative(m, e, 0.5).unwrap().to_vector();
            let mf = m as f64;
            for (j, x) in v.probs().iter().enumerate() {
                let want = if j < half { (1.0 + 2.0 * e) / mf } else { (1.0 - 2.0 * e) / mf };
                prop_assert!((x - want).abs() < 1e-15);
            }
        }
    }
}
