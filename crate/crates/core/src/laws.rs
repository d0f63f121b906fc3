//! Closed-form failure probabilities P_err(N) of generator-reranker systems.
//!
//! Every law is returned as a [`LogProb`]; curves span hundreds of decades,
//! so all sums are carried in log space.

use crate::error::{Error, Result};
use crate::rank::TopOneMarginals;
use crate::special::{ln_1m_exp, ln_binom_pmf, ln_gamma, log_sum_exp};

/// Natural log of a probability.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    /// Values in (0, 1e-12] are rounding slack and clamp to 0.
    pub fn from_ln(value: f64) -> Self {
        debug_assert!(!value.is_nan() && value <= 1e-12, "log-probability {value} > 0");
        LogProb(value.min(0.0))
    }

    pub fn from_prob(p: f64) -> Self {
        debug_assert!((0.0..=1.0 + 1e-12).contains(&p), "probability {p} outside [0, 1]");
        LogProb(p.ln().min(0.0))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn log10(self) -> f64 {
        self.0 / std::f64::consts::LN_10
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }
}

/// How the generator corrupts hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorSpec {
    /// Each hypothesis is unacceptable independently with probability ε.
    Independent { epsilon: f64 },
    /// A per-query corruption rate τ ~ Beta(α, β) is shared by all hypotheses.
    BetaCoupled { alpha: f64, beta: f64 },
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GeneratorSpec::Independent { epsilon } => check_epsilon(epsilon),
            GeneratorSpec::BetaCoupled { alpha, beta } => check_beta_params(alpha, beta),
        }
    }

    /// Marginal probability that a single hypothesis is unacceptable.
    pub fn mean_error(&self) -> f64 {
        match *self {
            GeneratorSpec::Independent { epsilon } => epsilon,
            GeneratorSpec::BetaCoupled { alpha, beta } => alpha / (alpha + beta),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(())
}

fn check_beta_params(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!(
            "Beta parameters must be positive and finite, got alpha={alpha}, beta={beta}"
        )));
    }
    Ok(())
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Perfect reranker, independent hypotheses: ε^N.
pub fn p_err_perfect_indep(epsilon: f64, n: u64) -> Result<LogProb> {
    check_epsilon(epsilon)?;
    check_n(n)?;
    Ok(match epsilon {
        0.0 => LogProb::ZERO,
        1.0 => LogProb::ONE,
        e => LogProb::from_ln(n as f64 * e.ln()),
    })
}

/// Uniformly random reranker: ε for every N.
pub fn p_err_random(epsilon: f64) -> Result<LogProb> {
    check_epsilon(epsilon)?;
    Ok(LogProb::from_prob(epsilon))
}

/// Any reranker with marginals η, independent hypotheses:
/// Σ_K C(N,K) ε^K (1-ε)^{N-K} Σ_{j>N-K} η_j, summed exactly in log space.
pub fn p_err_generic_indep(epsilon: f64, marginals: &TopOneMarginals) -> Result<LogProb> {
    check_epsilon(epsilon)?;
    if epsilon == 0.0 {
        return Ok(LogProb::ZERO);
    }
    if epsilon == 1.0 {
        return Ok(LogProb::ONE);
    }
    let n = marginals.len() as u64;
    let suffix = marginals.suffix_masses();
    let terms: Vec<f64> = (1..=n)
        .filter(|&k| suffix[k as usize] > 0.0)
        .map(|k| ln_binom_pmf(k, n, epsilon) + suffix[k as usize].ln())
        .collect();
    Ok(LogProb::from_ln(log_sum_exp(&terms)))
}

/// A = e^{-λ}(1-ε) + ε, the asymptotic per-hypothesis decay factor of the
/// Mallows law.
pub fn mallows_rate(epsilon: f64, lambda: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_lambda(lambda)?;
    Ok((-lambda).exp() * (1.0 - epsilon) + epsilon)
}

/// Mallows reranker, independent hypotheses, in closed form:
/// ε if λ = 0, else (A^N - e^{-λN}) / (1 - e^{-λN}).
pub fn p_err_mallows_indep(epsilon: f64, lambda: f64, n: u64) -> Result<LogProb> {
    check_epsilon(epsilon)?;
    check_lambda(lambda)?;
    check_n(n)?;
    if epsilon == 0.0 {
        return Ok(LogProb::ZERO);
    }
    if epsilon == 1.0 {
        return Ok(LogProb::ONE);
    }
    if lambda == 0.0 {
        return Ok(LogProb::from_prob(epsilon));
    }
    let nf = n as f64;
    // ln A = ln(1 - (1 - e^{-λ})(1 - ε))
    let ln_rate = ((-lambda).exp_m1() * (1.0 - epsilon)).ln_1p();
    let ln_ratio = -lambda - ln_rate;
    let value = nf * ln_rate + ln_1m_exp(nf * ln_ratio) - ln_1m_exp(-lambda * nf);
    Ok(LogProb::from_ln(value))
}

/// Closed form for η_j ∝ N - j + 1: (ε(1-ε) + Nε² + ε) / (N + 1).
pub fn polynomial_r1_closed_form(epsilon: f64, n: u64) -> Result<LogProb> {
    check_epsilon(epsilon)?;
    check_n(n)?;
    let nf = n as f64;
    let p = (epsilon * (1.0 - epsilon) + nf * epsilon * epsilon + epsilon) / (nf + 1.0);
    Ok(LogProb::from_prob(p.min(1.0)))
}

/// ε^{r+1}, the large-N floor of the polynomial reranker.
pub fn polynomial_asymptote(epsilon: f64, r: u32) -> Result<f64> {
    check_epsilon(epsilon)?;
    if r == 0 {
        return Err(Error::invalid("polynomial exponent r must be >= 1"));
    }
    Ok(epsilon.powi(r as i32 + 1))
}

/// Perfect reranker, Beta-coupled hypotheses: E[τ^N] = Π (α+i-1)/(α+β+i-1).
pub fn p_err_perfect_beta(alpha: f64, beta: f64, n: u64) -> Result<LogProb> {
    check_beta_params(alpha, beta)?;
    check_n(n)?;
    let ln = (1..=n).map(|i| perfect_beta_log_factor(alpha, beta, i)).sum();
    Ok(LogProb::from_ln(ln))
}

#[inline]
fn perfect_beta_log_factor(alpha: f64, beta: f64, i: u64) -> f64 {
    (-beta / (alpha + beta + (i - 1) as f64)).ln_1p()
}

/// ln P_err for N = 1..=n_max under a perfect reranker and Beta coupling,
/// accumulated incrementally.
pub fn perfect_beta_log_curve(alpha: f64, beta: f64, n_max: u64) -> Result<Vec<f64>> {
    check_beta_params(alpha, beta)?;
    let mut acc = 0.0;
    Ok((1..=n_max)
        .map(|i| {
            acc += perfect_beta_log_factor(alpha, beta, i);
            acc
        })
        .collect())
}

/// Running log rising factorials for the Beta-binomial pmf, shared across
/// every N up to `n_max`.
#[derive(Debug, Clone)]
pub struct BetaBinomialTable {
    ln_rise_alpha: Vec<f64>,
    ln_rise_beta: Vec<f64>,
    ln_rise_sum: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl BetaBinomialTable {
    pub fn new(alpha: f64, beta: f64, n_max: u64) -> Result<Self> {
        check_beta_params(alpha, beta)?;
        let rising = |base: f64| {
            let mut out = Vec::with_capacity(n_max as usize + 1);
            let mut acc = 0.0;
            out.push(0.0);
            for i in 0..n_max {
                acc += (base + i as f64).ln();
                out.push(acc);
            }
            out
        };
        Ok(Self {
            ln_rise_alpha: rising(alpha),
            ln_rise_beta: rising(beta),
            ln_rise_sum: rising(alpha + beta),
            ln_fact: (0..=n_max).map(|i| ln_gamma(i as f64 + 1.0)).collect(),
        })
    }

    pub fn n_max(&self) -> u64 {
        (self.ln_fact.len() - 1) as u64
    }

    /// ln P(K = k | N = n).
    pub fn ln_pmf(&self, n: u64, k: u64) -> f64 {
        let (n, k) = (n as usize, k as usize);
        self.ln_fact[n] - self.ln_fact[k] - self.ln_fact[n - k] + self.ln_rise_alpha[k]
            + self.ln_rise_beta[n - k]
            - self.ln_rise_sum[n]
    }

    /// Σ_K BetaBin(K; N) Σ_{j>N-K} η_j in log space, N = marginals.len().
    pub fn p_err(&self, marginals: &TopOneMarginals) -> Result<LogProb> {
        let n = marginals.len() as u64;
        if n > self.n_max() {
            return Err(Error::invalid(format!(
                "Beta-binomial table built for N <= {}, asked for {n}",
                self.n_max()
            )));
        }
        let suffix = marginals.suffix_masses();
        let terms: Vec<f64> = (1..=n)
            .filter(|&k| suffix[k as usize] > 0.0)
            .map(|k| self.ln_pmf(n, k) + suffix[k as usize].ln())
            .collect();
        Ok(LogProb::from_ln(log_sum_exp(&terms)))
    }
}

/// Beta-binomial pmf C(n,k) (α)_k (β)_{n-k} / (α+β)_n.
pub fn beta_binomial_pmf(alpha: f64, beta: f64, n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds n = {n}")));
    }
    Ok(BetaBinomialTable::new(alpha, beta, n)?.ln_pmf(n, k).exp())
}

/// Any reranker with marginals η, Beta-coupled hypotheses.
pub fn p_err_generic_beta(alpha: f64, beta: f64, marginals: &TopOneMarginals) -> Result<LogProb> {
    BetaBinomialTable::new(alpha, beta, marginals.len() as u64)?.p_err(marginals)
}

/// Two-sided power-law bracket on the perfect-reranker Beta law, valid for
/// β ∈ (0, 1): Γ(α+β)/Γ(α) · ((α+β+N)^{-β}, (α+β+N-1)^{-β}).
pub fn gautschi_bounds(alpha: f64, beta: f64, n: u64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("Gautschi bracket needs beta in (0, 1), got {beta}")));
    }
    check_beta_params(alpha, beta)?;
    check_n(n)?;
    let ln_c = ln_gamma(alpha + beta) - ln_gamma(alpha);
    let x = alpha + beta + n as f64;
    let low = (ln_c - beta * x.ln()).exp();
    let high = (ln_c - beta * (x - 1.0).ln()).exp();
    Ok((low, high))
}

/// β such that the Beta(α, β) mean equals ε: β = (1/ε - 1)α.
pub fn beta_from_mean(epsilon: f64, alpha: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    Ok((1.0 / epsilon - 1.0) * alpha)
}
