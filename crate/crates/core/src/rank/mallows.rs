use super::permutation::{for_each_permutation, kendall_tau_distance, Permutation};
use super::TopOneMarginals;
use crate::error::{Error, Result};

/// Largest n accepted by the factorial-time enumeration.
pub const BRUTE_FORCE_MAX_N: usize = 8;

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid(format!("Mallows lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Z(λ) = Π_{j=1..n} (1 - e^{-λj}) / (1 - e^{-λ}), which is n! at λ = 0.
pub fn mallows_partition(lambda: f64, n: usize) -> Result<f64> {
    check_lambda(lambda)?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if lambda == 0.0 {
        return Ok((1..=n).map(|j| j as f64).product());
    }
    if lambda.is_infinite() {
        return Ok(1.0);
    }
    let denom = -(-lambda).exp_m1();
    Ok((1..=n).map(|j| -(-lambda * j as f64).exp_m1() / denom).product())
}

/// η_j = e^{-λ(j-1)} / Σ_r e^{-λ(r-1)}, the top-1 marginals of a Mallows
/// reranker around the identity ranking.
pub fn mallows_top1_marginals(lambda: f64, n: usize) -> Result<TopOneMarginals> {
    check_lambda(lambda)?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if lambda == 0.0 {
        return Ok(TopOneMarginals::uniform(n));
    }
    if lambda.is_infinite() {
        return Ok(TopOneMarginals::perfect(n));
    }
    // η_1 = (1 - e^{-λ}) / (1 - e^{-λn}); later entries scale geometrically.
    let ln_head = (-(-lambda).exp_m1()).ln() - (-(-lambda * n as f64).exp_m1()).ln();
    let eta = (0..n).map(|j| (ln_head - lambda * j as f64).exp()).collect();
    Ok(TopOneMarginals::from_vec_unchecked(eta))
}

/// Result of enumerating every permutation under a Mallows model.
#[derive(Debug, Clone)]
pub struct BruteForceMallows {
    pub marginals: TopOneMarginals,
    /// Σ_π e^{-λ d(π, id)}.
    pub partition: f64,
}

/// Enumerate all n! rankings, weight each by e^{-λ d(π, id)} and accumulate
/// mass on the oracle rank of the top pick. Refuses n > 8.
pub fn brute_force_mallows(lambda: f64, n: usize) -> Result<BruteForceMallows> {
    check_lambda(lambda)?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::ResourceLimit(format!(
            "brute-force enumeration limited to n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }
    let identity = Permutation::identity(n);
    let mut mass = vec![0.0f64; n];
    let mut total = 0.0f64;
    for_each_permutation(n, |ranks| {
        let pi = Permutation::new(ranks.to_vec()).expect("enumerated permutation");
        let d = kendall_tau_distance(&pi, &identity).expect("same length");
        let w = (-lambda * d as f64).exp();
        mass[pi.top()] += w;
        total += w;
    });
    let eta = mass.into_iter().map(|m| m / total).collect();
    Ok(BruteForceMallows {
        marginals: TopOneMarginals::from_vec_unchecked(eta),
        partition: total,
    })
}

pub fn brute_force_mallows_marginals(lambda: f64, n: usize) -> Result<TopOneMarginals> {
    brute_force_mallows(lambda, n).map(|b| b.marginals)
}
