//! Seeded, worker-count independent Monte Carlo estimates of the two error
//! probabilities, and the two standard experiments.
//!
//! Trial `i` draws its histogram from `ChaCha8Rng` seeded with
//! `trial_seed(master, i)`; counts are merged as integers, so the split of
//! trials across threads never changes a result. All testers run on the same
//! histogram per trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distmodel::{flat_alternative, uniform, Histogram, HistogramSampler, ProbabilityVector};
use crate::error::{invalid, Result};
use crate::statistics::{
    decide, default_beta, default_threshold, superlinear_tv_decide, Decision, StatisticKind, TesterSpec,
};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Two-sided 99.9% normal quantile.
pub const Z999: f64 = 3.290_526_731_491_926;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Samples from the uniform distribution; a reject is a failure.
    Uniform,
    /// Samples from the alternative; an accept is a failure.
    Alternative,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Uniform => "uniform",
            Side::Alternative => "alternative",
        }
    }

    fn is_failure(self, d: Decision) -> bool {
        match self {
            Side::Uniform => d == Decision::NonUniform,
            Side::Alternative => d == Decision::Uniform,
        }
    }
}

/// A decision rule evaluated on one histogram.
#[derive(Debug, Clone, PartialEq)]
pub enum Tester {
    Separable(TesterSpec),
    SuperlinearTv { n: usize, m: usize, epsilon: f64 },
}

impl Tester {
    pub fn n(&self) -> usize {
        match self {
            Tester::Separable(s) => s.n,
            Tester::SuperlinearTv { n, .. } => *n,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Tester::Separable(s) => s.m,
            Tester::SuperlinearTv { m, .. } => *m,
        }
    }

    pub fn decide(&self, hist: &Histogram) -> Result<Decision> {
        match self {
            Tester::Separable(s) => decide(s, hist),
            Tester::SuperlinearTv { n, m, epsilon } => superlinear_tv_decide(hist, *n, *m, *epsilon),
        }
    }

    /// Threshold on the tester's own scale; ε/2 in TV for the superlinear rule.
    pub fn threshold(&self) -> f64 {
        match self {
            Tester::Separable(s) => s.threshold,
            Tester::SuperlinearTv { epsilon, .. } => epsilon / 2.0,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            Tester::Separable(s) => s.kind.beta(),
            Tester::SuperlinearTv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub failures: u64,
    pub trials: u64,
    pub delta_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl ErrorEstimate {
    pub fn new(failures: u64, trials: u64, seed: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(failures, trials, Z95);
        Self { failures, trials, delta_hat: failures as f64 / trials as f64, ci_low, ci_high, seed }
    }

    /// Band at another confidence level.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        wilson_interval(self.failures, self.trials, z)
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(failures: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let nt = trials as f64;
    let ph = failures as f64 / nt;
    let z2 = z * z;
    let denom = 1.0 + z2 / nt;
    let center = (ph + z2 / (2.0 * nt)) / denom;
    let half = z * (ph * (1.0 - ph) / nt + z2 / (4.0 * nt * nt)).sqrt() / denom;
    let lo = if failures == 0 { 0.0 } else { (center - half).clamp(0.0, ph) };
    let hi = if failures == trials { 1.0 } else { (center + half).clamp(ph, 1.0) };
    (lo, hi)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Failure counts of each tester over `trials` shared histograms from `dist`.
pub fn count_failures(
    testers: &[Tester],
    dist: &ProbabilityVector,
    side: Side,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<u64>> {
    let Some(first) = testers.first() else {
        return Ok(Vec::new());
    };
    let (n, m) = (first.n(), first.m());
    if testers.iter().any(|t| t.n() != n || t.m() != m) {
        return Err(invalid("testers sharing histograms must agree on n and m"));
    }
    if dist.m() != m {
        return Err(invalid(format!("distribution has {} bins, testers expect {m}", dist.m())));
    }
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if workers == 0 {
        return Err(invalid("workers must be at least 1"));
    }
    // surface dimension errors before going parallel
    let probe = Histogram { counts: { let mut c = vec![0; m]; c[0] = n; c }, n };
    for t in testers {
        t.decide(&probe)?;
    }

    let sampler = HistogramSampler::new(dist);
    let k = testers.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        (0..trials)
            .into_par_iter()
            .try_fold(
                || (Histogram { counts: vec![0; m], n }, vec![0u64; k]),
                |(mut hist, mut fails), i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(master_seed, i));
                    sampler.sample_into(n, &mut rng, &mut hist.counts);
                    for (f, t) in fails.iter_mut().zip(testers) {
                        *f += side.is_failure(t.decide(&hist)?) as u64;
                    }
                    Ok((hist, fails))
                },
            )
            .map(|r| r.map(|(_, f)| f))
            .try_reduce(
                || vec![0u64; k],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            )
    })
}

pub fn estimate_error(
    tester: &Tester,
    dist: &ProbabilityVector,
    side: Side,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<ErrorEstimate> {
    let f = count_failures(std::slice::from_ref(tester), dist, side, trials, master_seed, workers)?;
    Ok(ErrorEstimate::new(f[0], trials, master_seed))
}

/// One tester against a fixed pair of distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub tester: Tester,
    pub dist_p: ProbabilityVector,
    pub dist_q: ProbabilityVector,
    pub trials: u64,
    pub master_seed: u64,
    pub workers: usize,
}

impl ExperimentConfig {
    /// `(uniform-side, alternative-side)` estimates. The two sides use
    /// distinct derived seeds.
    pub fn run(&self) -> Result<(ErrorEstimate, ErrorEstimate)> {
        let s0 = trial_seed(self.master_seed, 0);
        let s1 = trial_seed(self.master_seed, 1);
        Ok((
            estimate_error(&self.tester, &self.dist_p, Side::Uniform, self.trials, s0, self.workers)?,
            estimate_error(&self.tester, &self.dist_q, Side::Alternative, self.trials, s1, self.workers)?,
        ))
    }
}

/// Tester description as it appears in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TesterChoice {
    pub kind: String,
    /// Huber β; default from `default_beta` with constant `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Threshold on the rescaled scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
}

/// Constant in the default Huber β.
pub const DEFAULT_BETA_K: f64 = 2.0;

impl TesterChoice {
    pub fn named(kind: &str) -> Self {
        Self { kind: kind.to_string(), beta: None, threshold: None, k: None }
    }

    /// Builds the tester for one grid point. `tv` is the empty-bins form
    /// (an affine image of TV when `n ≤ m`) and the superlinear rule above `m`.
    pub fn build(&self, n: usize, m: usize, epsilon: f64) -> Result<Tester> {
        let kind = match self.kind.as_str() {
            "collisions" => StatisticKind::Collisions,
            "squared" => StatisticKind::Squared,
            "empty_bins" | "empty" => StatisticKind::EmptyBins,
            "singletons" => StatisticKind::Singletons,
            "tv" if n > m => {
                if self.threshold.is_some() {
                    return Err(invalid("the superlinear TV rule has a fixed threshold"));
                }
                return Ok(Tester::SuperlinearTv { n, m, epsilon });
            }
            "tv" => StatisticKind::EmptyBins,
            "raw_tv" => StatisticKind::Tv,
            "superlinear_tv" => return Ok(Tester::SuperlinearTv { n, m, epsilon }),
            "huber" => {
                let beta = match self.beta {
                    Some(b) => b,
                    None => default_beta(n, m, epsilon, self.k.unwrap_or(DEFAULT_BETA_K))?.0,
                };
                StatisticKind::Huber { beta }
            }
            other => return Err(invalid(format!("unknown tester kind '{other}'"))),
        };
        let tau = match self.threshold {
            Some(t) => t,
            None => default_threshold(&kind, n, m, epsilon)?,
        };
        Ok(Tester::Separable(TesterSpec::new(kind, n, m, epsilon, tau)?))
    }
}

/// One output row per (tester, grid point, side).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub tester: String,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub side: Side,
    pub trials: u64,
    pub failures: u64,
    pub delta_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub threshold: f64,
    pub beta: Option<f64>,
    pub x_axis: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
}

/// `ε = 0.7·n^{−1/8.1}` with `m = n`.
pub fn figure_epsilon(n: usize) -> f64 {
    0.7 * (n as f64).powf(-1.0 / 8.1)
}

pub fn x_axis(n: usize, m: usize, epsilon: f64) -> f64 {
    (n as f64).powi(2) * epsilon.powi(4) / m as f64
}

/// Runs every tester on every grid point against uniform and `flat(ε, γ)`.
pub fn run_grid(
    testers: &[TesterChoice],
    grid: &[GridPoint],
    gamma: f64,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<ExperimentRow>> {
    let mut rows = Vec::new();
    for (gi, pt) in grid.iter().enumerate() {
        let built: Vec<Tester> = testers.iter().map(|t| t.build(pt.n, pt.m, pt.epsilon)).collect::<Result<_>>()?;
        let q = flat_alternative(pt.m, pt.epsilon, gamma)?.to_vector();
        let p = uniform(pt.m)?;
        for (si, (side, dist)) in [(Side::Uniform, &p), (Side::Alternative, &q)].into_iter().enumerate() {
            let seed = trial_seed(master_seed, ((gi as u64) << 1) | si as u64);
            let fails = count_failures(&built, dist, side, trials, seed, workers)?;
            for ((choice, t), f) in testers.iter().zip(&built).zip(fails) {
                let e = ErrorEstimate::new(f, trials, seed);
                rows.push(ExperimentRow {
                    tester: choice.kind.clone(),
                    n: pt.n,
                    m: pt.m,
                    epsilon: pt.epsilon,
                    gamma,
                    side,
                    trials,
                    failures: f,
                    delta_hat: e.delta_hat,
                    ci_low: e.ci_low,
                    ci_high: e.ci_high,
                    threshold: t.threshold(),
                    beta: t.beta(),
                    x_axis: x_axis(pt.n, pt.m, pt.epsilon),
                    seed,
                });
            }
        }
    }
    Ok(rows)
}

/// `m = n = 10⁴`, `ε = 1/8`, TV and collisions with default thresholds.
pub fn reproduce_intro(trials: u64, master_seed: u64, workers: usize) -> Result<Vec<ExperimentRow>> {
    let testers = [TesterChoice::named("tv"), TesterChoice::named("collisions")];
    run_grid(&testers, &[GridPoint { n: 10_000, m: 10_000, epsilon: 0.125 }], 0.5, trials, master_seed, workers)
}

/// `n = m`, `ε = 0.7·n^{−1/8.1}`: collisions, TV and Huber (default β, τ = 2).
pub fn reproduce_figure(n_values: &[usize], trials: u64, master_seed: u64, workers: usize) -> Result<Vec<ExperimentRow>> {
    if let Some(&n) = n_values.iter().find(|&&n| !(100..=2000).contains(&n)) {
        return Err(invalid(format!("figure grid value n = {n} outside [100, 2000]")));
    }
    let testers = [TesterChoice::named("collisions"), TesterChoice::named("tv"), TesterChoice::named("huber")];
    let grid: Vec<GridPoint> = n_values.iter().map(|&n| GridPoint { n, m: n, epsilon: figure_epsilon(n) }).collect();
    run_grid(&testers, &grid, 0.5, trials, master_seed, workers)
}

/// `max(δ̂₊, δ̂₋)` per tester, in first-seen order.
pub fn max_failure_by_tester(rows: &[ExperimentRow]) -> Vec<(String, ExperimentRow)> {
    let mut out: Vec<(String, ExperimentRow)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(k, _)| *k == r.tester) {
            Some((_, best)) if r.delta_hat > best.delta_hat => *best = r.clone(),
            Some(_) => {}
            None => out.push((r.tester.clone(), r.clone())),
        }
    }
    out
}
