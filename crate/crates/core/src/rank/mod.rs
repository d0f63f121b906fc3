//! Reranker models expressed through their top-1 marginals.
//!
//! `eta[j]` (0-based here) is the probability that the reranker's chosen
//! hypothesis has oracle rank `j + 1`. The oracle ranking is always the
//! identity; callers relabel hypotheses to express any other ground truth.

mod entmax;
mod mallows;
mod permutation;

pub use entmax::{entmax, zipf_mandelbrot_top1_marginals, SOFTMAX_GAMMA_TOL};
pub use mallows::{
    brute_force_mallows, brute_force_mallows_marginals, mallows_partition, mallows_top1_marginals,
    BruteForceMallows, BRUTE_FORCE_MAX_N,
};
pub use permutation::{kendall_tau_distance, Permutation};

use crate::error::{Error, Result};
use crate::special::compensated_sum;

const MASS_TOL: f64 = 1e-10;

/// Largest n accepted by [`polynomial_top1_marginals`].
pub const POLYNOMIAL_MAX_N: usize = 1_000_000;
/// Largest exponent accepted by [`polynomial_top1_marginals`].
pub const POLYNOMIAL_MAX_R: u32 = 8;

/// Probability vector over oracle ranks of the reranker's top pick.
#[derive(Debug, Clone, PartialEq)]
pub struct TopOneMarginals {
    eta: Vec<f64>,
}

impl TopOneMarginals {
    /// Validates non-negativity and unit mass (within 1e-10).
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::invalid("marginals must have at least one entry"));
        }
        if eta.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("marginals must be finite and non-negative"));
        }
        let total = compensated_sum(eta.iter().copied());
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("marginals sum to {total}, expected 1")));
        }
        Ok(Self { eta })
    }

    pub(crate) fn from_vec_unchecked(eta: Vec<f64>) -> Self {
        debug_assert!(!eta.is_empty());
        Self { eta }
    }

    pub fn perfect(n: usize) -> Self {
        let mut eta = vec![0.0; n];
        eta[0] = 1.0;
        Self { eta }
    }

    pub fn uniform(n: usize) -> Self {
        Self { eta: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.eta
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.eta
    }

    /// `s[k]` = mass on the last `k` oracle ranks, for k = 0..=n, accumulated
    /// from the tail so small tail masses keep their relative precision.
    pub fn suffix_masses(&self) -> Vec<f64> {
        let n = self.eta.len();
        let mut s = vec![0.0; n + 1];
        for k in 1..=n {
            s[k] = s[k - 1] + self.eta[n - k];
        }
        s
    }
}

/// Σ_{j = N-k+1..N} η_j: the chance of picking one of the k worst hypotheses.
pub fn suffix_mass(marginals: &TopOneMarginals, k: usize) -> Result<f64> {
    let n = marginals.len();
    if k > n {
        return Err(Error::invalid(format!("suffix length {k} exceeds N = {n}")));
    }
    Ok(marginals.eta[n - k..].iter().rev().sum())
}

/// η_j ∝ (n - j + 1)^r.
pub fn polynomial_top1_marginals(r: u32, n: usize) -> Result<TopOneMarginals> {
    if r == 0 {
        return Err(Error::invalid("polynomial exponent r must be >= 1"));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if n > POLYNOMIAL_MAX_N || r > POLYNOMIAL_MAX_R {
        return Err(Error::invalid(format!(
            "polynomial marginals limited to n <= {POLYNOMIAL_MAX_N}, r <= {POLYNOMIAL_MAX_R}"
        )));
    }
    // Weights are scaled by n^-r; every k^r is then exact to one rounding and
    // the compensated total carries ~2x double precision.
    let scale = n as f64;
    let weights: Vec<f64> = (1..=n).map(|k| (k as f64 / scale).powi(r as i32)).collect();
    let total = compensated_sum(weights.iter().copied());
    let eta = weights.iter().rev().map(|w| w / total).collect();
    Ok(TopOneMarginals { eta })
}

/// Which reranker family to use, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum RerankerSpec {
    Perfect,
    Random,
    /// λ >= 0; `f64::INFINITY` is the perfect limit.
    Mallows { lambda: f64 },
    /// λ > 0, γ ∈ (0, 1].
    ZipfMandelbrot { lambda: f64, gamma: f64 },
    /// η_j ∝ (N - j + 1)^r, r >= 1.
    Polynomial { r: u32 },
    /// Fixed marginals, valid only for N equal to their length.
    Explicit(TopOneMarginals),
}

impl RerankerSpec {
    /// Mallows reranker from e^{-λ} ∈ [0, 1]; 0 is the perfect reranker.
    pub fn mallows_from_e_neg_lambda(e_neg_lambda: f64) -> Result<Self> {
        Ok(RerankerSpec::Mallows { lambda: lambda_from_e_neg(e_neg_lambda)? })
    }

    /// Zipf-Mandelbrot reranker from e^{-λ} ∈ [0, 1).
    pub fn zipf_from_e_neg_lambda(e_neg_lambda: f64, gamma: f64) -> Result<Self> {
        let spec = RerankerSpec::ZipfMandelbrot { lambda: lambda_from_e_neg(e_neg_lambda)?, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RerankerSpec::Perfect | RerankerSpec::Random | RerankerSpec::Explicit(_) => Ok(()),
            RerankerSpec::Mallows { lambda } => {
                if lambda.is_nan() || lambda < 0.0 {
                    Err(Error::invalid(format!("Mallows lambda must be >= 0, got {lambda}")))
                } else {
                    Ok(())
                }
            }
            RerankerSpec::ZipfMandelbrot { lambda, gamma } => {
                if lambda.is_nan() || lambda <= 0.0 {
                    Err(Error::invalid(format!("Zipf-Mandelbrot lambda must be > 0, got {lambda}")))
                } else if !(gamma > 0.0 && gamma <= 1.0) {
                    Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")))
                } else {
                    Ok(())
                }
            }
            RerankerSpec::Polynomial { r } => {
                if r == 0 {
                    Err(Error::invalid("polynomial exponent r must be >= 1"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Top-1 marginals for `n` hypotheses.
    pub fn marginals(&self, n: usize) -> Result<TopOneMarginals> {
        if n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        match self {
            RerankerSpec::Perfect => Ok(TopOneMarginals::perfect(n)),
            RerankerSpec::Random => Ok(TopOneMarginals::uniform(n)),
            RerankerSpec::Mallows { lambda } => mallows_top1_marginals(*lambda, n),
            RerankerSpec::ZipfMandelbrot { lambda, gamma } => {
                zipf_mandelbrot_top1_marginals(*lambda, *gamma, n)
            }
            RerankerSpec::Polynomial { r } => polynomial_top1_marginals(*r, n),
            RerankerSpec::Explicit(m) => {
                if m.len() == n {
                    Ok(m.clone())
                } else {
                    Err(Error::invalid(format!(
                        "explicit marginals have length {}, cannot evaluate at N = {n}",
                        m.len()
                    )))
                }
            }
        }
    }
}

fn lambda_from_e_neg(e_neg_lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e_neg_lambda) {
        return Err(Error::invalid(format!("e^-lambda must lie in [0, 1], got {e_neg_lambda}")));
    }
    Ok(if e_neg_lambda == 0.0 { f64::INFINITY } else { -e_neg_lambda.ln() })
}
