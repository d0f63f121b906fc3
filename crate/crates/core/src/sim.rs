//! Monte-Carlo estimates of failure curves.
//!
//! A trial is one query: draw the corruption rate τ, draw the number K of
//! unacceptable hypotheses, draw the oracle rank j of the reranker's pick,
//! and fail iff j lands among the K worst ranks.

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution};
use rayon::prelude::*;

use crate::curve::{CurvePoint, FailureCurve, DEFAULT_CI_LEVEL};
use crate::error::{Error, Result};
use crate::laws::GeneratorSpec;
use crate::rank::{Permutation, RerankerSpec, TopOneMarginals};
use crate::rng::StreamFamily;

/// Largest n accepted by the full-permutation sampler.
pub const PERMUTATION_MAX_N: usize = 64;

/// Default cap on trials · Σn.
pub const DEFAULT_BUDGET: u64 = 100_000_000_000;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub generator: GeneratorSpec,
    pub reranker: RerankerSpec,
    pub n_grid: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
    pub ci_level: f64,
    pub budget: u64,
}

impl SimConfig {
    pub fn new(generator: GeneratorSpec, reranker: RerankerSpec, n_grid: Vec<u64>, trials: u64, seed: u64) -> Self {
        Self { generator, reranker, n_grid, trials, seed, ci_level: DEFAULT_CI_LEVEL, budget: DEFAULT_BUDGET }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.reranker.validate()?;
        validate_grid(&self.n_grid)?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::invalid(format!("ci_level must lie in (0, 1), got {}", self.ci_level)));
        }
        let work = self
            .n_grid
            .iter()
            .try_fold(0u64, |acc, &n| acc.checked_add(n))
            .and_then(|s| s.checked_mul(self.trials));
        match work {
            Some(w) if w <= self.budget => Ok(()),
            _ => Err(Error::ResourceLimit(format!(
                "trials x sum(n) exceeds the budget of {}",
                self.budget
            ))),
        }
    }
}

pub(crate) fn validate_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::invalid("N grid is empty"));
    }
    if n_grid[0] == 0 {
        return Err(Error::invalid("N grid values must be >= 1"));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("N grid must be strictly increasing"));
    }
    Ok(())
}

/// Inverse-CDF sampler over oracle ranks.
#[derive(Debug, Clone)]
pub struct Top1Sampler {
    /// `tail[i]` = Σ_{j > i} η_j (0-based), with `tail[n] = 0`.
    tail: Vec<f64>,
}

impl Top1Sampler {
    pub fn new(marginals: &TopOneMarginals) -> Self {
        let mut tail = marginals.suffix_masses();
        tail.reverse();
        Self { tail }
    }

    /// 1-based oracle rank of the pick.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.tail[0];
        self.tail.partition_point(|&t| t > u)
    }
}

pub fn sample_top1_index<R: Rng + ?Sized>(marginals: &TopOneMarginals, rng: &mut R) -> usize {
    Top1Sampler::new(marginals).sample(rng)
}

/// Exact Mallows sample around the identity by repeated insertion: item i
/// goes d places from the end of the current list with probability ∝ e^{-λd}.
pub fn sample_mallows_permutation<R: Rng + ?Sized>(lambda: f64, n: usize, rng: &mut R) -> Result<Permutation> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid(format!("Mallows lambda must be >= 0, got {lambda}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if n > PERMUTATION_MAX_N {
        return Err(Error::ResourceLimit(format!(
            "permutation sampling limited to n <= {PERMUTATION_MAX_N}, got {n}"
        )));
    }
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for item in 0..n {
        let slots = item + 1;
        let u: f64 = rng.random();
        let d = if lambda == 0.0 {
            (u * slots as f64) as usize
        } else if lambda.is_infinite() {
            0
        } else {
            let mass = -(-lambda * slots as f64).exp_m1();
            ((-u * mass).ln_1p() / -lambda) as usize
        };
        order.insert(item - d.min(item), item);
    }
    Permutation::from_ordering(&order)
}

enum TauSource {
    Fixed(f64),
    Beta(Beta<f64>),
}

impl TauSource {
    fn new(generator: &GeneratorSpec) -> Result<Self> {
        Ok(match *generator {
            GeneratorSpec::Independent { epsilon } => TauSource::Fixed(epsilon),
            GeneratorSpec::BetaCoupled { alpha, beta } => TauSource::Beta(
                Beta::new(alpha, beta).map_err(|e| Error::invalid(format!("Beta({alpha}, {beta}): {e}")))?,
            ),
        })
    }

    /// Number of unacceptable hypotheses among n.
    fn draw_k<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> u64 {
        let tau = match self {
            TauSource::Fixed(e) => *e,
            TauSource::Beta(b) => b.sample(rng),
        };
        if tau <= 0.0 {
            0
        } else if tau >= 1.0 {
            n
        } else {
            Binomial::new(n, tau).expect("tau in (0, 1)").sample(rng)
        }
    }
}

fn count_failures(trials: u64, trial_fails: impl Fn(u64) -> bool + Sync) -> u64 {
    (0..trials).into_par_iter().filter(|&t| trial_fails(t)).count() as u64
}

pub fn simulate_curve(config: &SimConfig) -> Result<FailureCurve> {
    config.validate()?;
    let tau = TauSource::new(&config.generator)?;
    let mut points = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let sampler = Top1Sampler::new(&config.reranker.marginals(n as usize)?);
        let streams = StreamFamily::new(config.seed, n);
        let failures = count_failures(config.trials, |t| {
            let mut rng = streams.at(t);
            let k = tau.draw_k(n, &mut rng);
            k > 0 && sampler.sample(&mut rng) as u64 > n - k
        });
        points.push(CurvePoint::estimated(n, failures as f64, config.trials, config.ci_level)?);
    }
    FailureCurve::new(points)
}

/// Same protocol as [`simulate_curve`] with a Mallows reranker, but each
/// trial samples a whole permutation and takes its top item.
pub fn simulate_mallows_permutations(
    generator: &GeneratorSpec,
    lambda: f64,
    n_grid: &[u64],
    trials: u64,
    seed: u64,
    ci_level: f64,
) -> Result<FailureCurve> {
    generator.validate()?;
    validate_grid(n_grid)?;
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    if *n_grid.last().expect("non-empty") as usize > PERMUTATION_MAX_N {
        return Err(Error::ResourceLimit(format!(
            "permutation sampling limited to n <= {PERMUTATION_MAX_N}"
        )));
    }
    let tau = TauSource::new(generator)?;
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let streams = StreamFamily::new(seed, n | 1 << 63);
        let failures = count_failures(trials, |t| {
            let mut rng = streams.at(t);
            let k = tau.draw_k(n, &mut rng);
            let pi = sample_mallows_permutation(lambda, n as usize, &mut rng).expect("validated");
            k > 0 && pi.top() as u64 >= n - k
        });
        points.push(CurvePoint::estimated(n, failures as f64, trials, ci_level)?);
    }
    FailureCurve::new(points)
}
