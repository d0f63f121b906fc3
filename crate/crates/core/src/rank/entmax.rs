//! γ-entmax for γ ∈ (0, 1] and the Zipf-Mandelbrot marginals built on it.
//!
//! For γ < 1 the map is `[1 + (γ-1)(z - τ)]^{1/(γ-1)}` with τ chosen so the
//! output sums to one. Writing c = 1 - γ and p = 1/c, each entry is
//! `(1 + c(τ - z_i))^{-p}`, finite and positive on τ > max(z) - 1/c and
//! strictly decreasing in τ there, so bisection always converges.

use super::{mallows_top1_marginals, TopOneMarginals};
use crate::error::{Error, Result};

/// |γ - 1| below this is treated as softmax.
pub const SOFTMAX_GAMMA_TOL: f64 = 1e-6;
const SUM_TOL: f64 = 1e-12;
const MAX_ITERS: usize = 200;

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(())
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Threshold-parameterised entmax on scores already shifted so max = 0.
struct Shifted<'a> {
    scores: &'a [f64],
    c: f64,
    p: f64,
}

impl Shifted<'_> {
    fn entry(&self, tau: f64, z: f64) -> f64 {
        (-self.p * (self.c * (tau - z)).ln_1p()).exp()
    }

    fn total(&self, tau: f64) -> f64 {
        self.scores.iter().map(|&z| self.entry(tau, z)).sum()
    }
}

/// Returns the probabilities and the threshold τ in the caller's score
/// coordinates (NaN on the softmax branch, where no threshold exists).
pub(crate) fn entmax_with_threshold(scores: &[f64], gamma: f64) -> Result<(Vec<f64>, f64)> {
    check_gamma(gamma)?;
    if scores.is_empty() {
        return Err(Error::invalid("entmax needs at least one score"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("entmax scores must be finite"));
    }
    if (gamma - 1.0).abs() < SOFTMAX_GAMMA_TOL {
        return Ok((softmax(scores), f64::NAN));
    }

    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = scores.iter().map(|s| s - max).collect();
    let c = 1.0 - gamma;
    let f = Shifted { scores: &shifted, c, p: 1.0 / c };

    // Bisect until the bracket collapses to adjacent doubles, which keeps τ
    // independent of the order the scores are summed in.
    // At τ = 0 the top entry alone equals 1. At τ = hi every entry is <= 1/n.
    let mut lo = 0.0f64;
    let mut hi = ((shifted.len() as f64).ln() * c).exp_m1() / c;
    let mut expansions = 0;
    while f.total(hi) > 1.0 {
        if expansions == 64 {
            return Err(Error::Internal("entmax threshold bisection failed to bracket".into()));
        }
        lo = hi;
        hi = 2.0 * hi + 1.0;
        expansions += 1;
    }
    if f.total(lo) < 1.0 {
        return Err(Error::Internal("entmax threshold bisection failed to bracket".into()));
    }

    let mut tau = 0.5 * (lo + hi);
    for _ in 0..MAX_ITERS {
        tau = 0.5 * (lo + hi);
        if tau <= lo || tau >= hi {
            break;
        }
        if f.total(tau) > 1.0 {
            lo = tau;
        } else {
            hi = tau;
        }
    }
    let probs: Vec<f64> = shifted.iter().map(|&z| f.entry(tau, z)).collect();
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::Internal(format!(
            "entmax bisection stalled with total mass {total}"
        )));
    }
    Ok((probs.into_iter().map(|v| v / total).collect(), tau + max))
}

/// γ-entmax of `scores`; softmax when γ is within 1e-6 of 1.
pub fn entmax(scores: &[f64], gamma: f64) -> Result<Vec<f64>> {
    entmax_with_threshold(scores, gamma).map(|(p, _)| p)
}

/// η = γ-entmax(-λ·(0, 1, …, n-1)).
///
/// For γ < 1 the result is the Zipf-Mandelbrot law η_j = b^{-p} (a + j)^{-p}
/// with p = 1/(1-γ), b = λ/p and a = (p + τ)/λ - 1, where τ is the entmax
/// threshold. The softmax limit γ → 1 is exactly the Mallows marginal.
pub fn zipf_mandelbrot_top1_marginals(lambda: f64, gamma: f64, n: usize) -> Result<TopOneMarginals> {
    zipf_with_threshold(lambda, gamma, n).map(|(m, _)| m)
}

pub(crate) fn zipf_with_threshold(
    lambda: f64,
    gamma: f64,
    n: usize,
) -> Result<(TopOneMarginals, f64)> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::invalid(format!("Zipf-Mandelbrot lambda must be > 0, got {lambda}")));
    }
    check_gamma(gamma)?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if lambda.is_infinite() {
        return Ok((TopOneMarginals::perfect(n), f64::NAN));
    }
    if (gamma - 1.0).abs() < SOFTMAX_GAMMA_TOL {
        return Ok((mallows_top1_marginals(lambda, n)?, f64::NAN));
    }
    let scores: Vec<f64> = (0..n).map(|j| -lambda * j as f64).collect();
    let (eta, tau) = entmax_with_threshold(&scores, gamma)?;
    Ok((TopOneMarginals::from_vec_unchecked(eta), tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // tests/oracles/golden.py: 50-digit bisection of entmax((0, -1), 0.5).
    const GOLDEN_TAU: f64 = 0.453_326_252_719_055_655_538_409_2;
    const GOLDEN_PAIR: [f64; 2] = [0.664_583_231_213_374_658_750_167_4, 0.335_416_768_786_625_341_249_832_6];

    #[test]
    fn uniform_scores_give_uniform() {
        for &g in &[0.1, 0.5, 0.9, 1.0] {
            let p = entmax(&[3.0; 5], g).unwrap();
            for v in p {
                assert!((v - 0.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_branch() {
        let p = entmax(&[0.0, -(2f64.ln())], 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn half_gamma_golden_pair() {
        let (p, tau) = entmax_with_threshold(&[0.0, -1.0], 0.5).unwrap();
        assert!((p[0] - GOLDEN_PAIR[0]).abs() < 1e-12);
        assert!((p[1] - GOLDEN_PAIR[1]).abs() < 1e-12);
        assert!((tau - GOLDEN_TAU).abs() < 1e-10);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        let soft = (-1f64).exp() / (1.0 + (-1f64).exp());
        assert!(p[0] > p[1] && p[1] > soft);
    }

    #[test]
    fn golden_pair_independent_newton_check() {
        // u = 1 + τ/2 solves u^{-2} + (u + 1/2)^{-2} = 1.
        let mut u = 1.2f64;
        for _ in 0..50 {
            let g = u.powi(-2) + (u + 0.5).powi(-2) - 1.0;
            let dg = -2.0 * u.powi(-3) - 2.0 * (u + 0.5).powi(-3);
            u -= g / dg;
        }
        assert!((u.powi(-2) - GOLDEN_PAIR[0]).abs() < 1e-15);
    }

    #[test]
    fn zipf_recovers_softmax_near_one() {
        let z = zipf_mandelbrot_top1_marginals(1.0, 0.999_999, 10).unwrap();
        let m = mallows_top1_marginals(1.0, 10).unwrap();
        for (a, b) in z.as_slice().iter().zip(m.as_slice()) {
            assert!((a - b).abs() < 1e-5);
        }
        let exact = zipf_mandelbrot_top1_marginals(1.3, 1.0, 10).unwrap();
        assert_eq!(exact.as_slice(), mallows_top1_marginals(1.3, 10).unwrap().as_slice());
    }

    #[test]
    fn zipf_follows_power_law() {
        for &(lambda, gamma, n) in &[(1.0, 0.5, 2usize), (0.5, 0.2, 50), (3.0, 0.8, 20), (0.01, 0.01, 100)] {
            let (m, tau) = zipf_with_threshold(lambda, gamma, n).unwrap();
            let p = 1.0 / (1.0 - gamma);
            let b = lambda / p;
            let a = (p + tau) / lambda - 1.0;
            for (j, &eta) in m.as_slice().iter().enumerate() {
                let law = (-p * (b.ln() + (a + (j + 1) as f64).ln())).exp();
                assert!(((eta - law) / law).abs() < 1e-9, "λ={lambda} γ={gamma} j={j}");
            }
        }
        let (m, tau) = zipf_with_threshold(1.0, 0.5, 2).unwrap();
        assert!((m.as_slice()[0] - GOLDEN_PAIR[0]).abs() < 1e-12);
        // a = (p + τ)/λ - 1 with p = 2, λ = 1
        assert!(((2.0 + tau) - 1.0 - 1.453_326_252_719_055_655_5).abs() < 1e-10);
    }

    #[test]
    fn zipf_invariant_instance() {
        let m = zipf_mandelbrot_top1_marginals(0.5, 0.2, 50).unwrap();
        let s: f64 = m.as_slice().iter().sum();
        assert!((s - 1.0).abs() < 1e-10);
        assert!(m.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn zipf_tail_is_heavier_than_mallows() {
        for &lambda in &[0.1, 1.0, 5.0, 40.0] {
            for n in 3..12 {
                let m = mallows_top1_marginals(lambda, n).unwrap();
                for &g in &[0.2, 0.5, 0.8] {
                    let z = zipf_mandelbrot_top1_marginals(lambda, g, n).unwrap();
                    assert!(z.as_slice()[n - 1] > m.as_slice()[n - 1]);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(entmax(&[], 0.5).is_err());
        assert!(entmax(&[f64::NAN], 0.5).is_err());
        assert!(entmax(&[0.0], 0.0).is_err());
        assert!(entmax(&[0.0], 1.5).is_err());
        assert!(zipf_mandelbrot_top1_marginals(0.0, 0.5, 3).is_err());
    }

    proptest! {
        #[test]
        fn sums_to_one_shift_invariant_and_equivariant(
            scores in proptest::collection::vec(-20.0f64..20.0, 1..30),
            gamma in 0.01f64..1.0,
            shift in -50.0f64..50.0,
            rot in 0usize..30,
        ) {
            let p = entmax(&scores, gamma).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-10);
            prop_assert!(p.iter().all(|&v| v > 0.0));

            let moved: Vec<f64> = scores.iter().map(|v| v + shift).collect();
            let q = entmax(&moved, gamma).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-10);
            }

            let k = rot % scores.len();
            let mut rotated = scores.clone();
            rotated.rotate_left(k);
            let r = entmax(&rotated, gamma).unwrap();
            let mut expect = p.clone();
            expect.rotate_left(k);
            for (a, b) in r.iter().zip(&expect) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
