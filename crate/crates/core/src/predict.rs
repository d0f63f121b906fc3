//! Evaluate a law over N and invert it for a target failure probability.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{CurvePoint, FailureCurve};
use crate::error::{Error, Result};
use crate::laws::{
    p_err_generic_beta, p_err_generic_indep, p_err_mallows_indep, p_err_perfect_beta,
    p_err_perfect_indep, p_err_random, GeneratorSpec, LogProb,
};
use crate::rank::RerankerSpec;
use crate::sim::validate_grid;

pub const DEFAULT_N_CAP: u64 = 100_000;

/// P_err(n) for one (generator, reranker) pair.
pub fn evaluate_point(generator: &GeneratorSpec, reranker: &RerankerSpec, n: u64) -> Result<LogProb> {
    generator.validate()?;
    reranker.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    match (*generator, reranker) {
        (GeneratorSpec::Independent { epsilon }, RerankerSpec::Perfect) => p_err_perfect_indep(epsilon, n),
        (GeneratorSpec::Independent { epsilon }, RerankerSpec::Random) => p_err_random(epsilon),
        (GeneratorSpec::Independent { epsilon }, RerankerSpec::Mallows { lambda }) => {
            p_err_mallows_indep(epsilon, *lambda, n)
        }
        (GeneratorSpec::BetaCoupled { alpha, beta }, RerankerSpec::Perfect) => p_err_perfect_beta(alpha, beta, n),
        (g @ GeneratorSpec::BetaCoupled { .. }, RerankerSpec::Random) => Ok(LogProb::from_prob(g.mean_error())),
        (GeneratorSpec::Independent { epsilon }, r) => p_err_generic_indep(epsilon, &r.marginals(n as usize)?),
        (GeneratorSpec::BetaCoupled { alpha, beta }, r) => {
            p_err_generic_beta(alpha, beta, &r.marginals(n as usize)?)
        }
    }
}

pub fn evaluate_law(generator: &GeneratorSpec, reranker: &RerankerSpec, n_grid: &[u64]) -> Result<FailureCurve> {
    validate_grid(n_grid)?;
    let points = n_grid
        .par_iter()
        .map(|&n| evaluate_point(generator, reranker, n).map(|p| CurvePoint::analytic(n, p)))
        .collect::<Result<Vec<_>>>()?;
    FailureCurve::new(points)
}

#[derive(Debug, Clone)]
pub struct LawQuery {
    pub generator: GeneratorSpec,
    pub reranker: RerankerSpec,
    pub target: f64,
    pub n_cap: u64,
}

impl LawQuery {
    pub fn new(generator: GeneratorSpec, reranker: RerankerSpec, target: f64) -> Self {
        Self { generator, reranker, target, n_cap: DEFAULT_N_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinN {
    Reachable { n: u64, p_err: LogProb },
    NotReachable { n_cap: u64, p_err_at_cap: LogProb },
}

/// Wire form: `{"reachable", "n", "p_err_at_n", "n_cap"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub reachable: bool,
    pub n: Option<u64>,
    pub p_err_at_n: f64,
    pub n_cap: u64,
}

impl MinN {
    pub fn report(&self, n_cap: u64) -> PredictReport {
        match *self {
            MinN::Reachable { n, p_err } => {
                PredictReport { reachable: true, n: Some(n), p_err_at_n: p_err.prob(), n_cap }
            }
            MinN::NotReachable { n_cap, p_err_at_cap } => {
                PredictReport { reachable: false, n: None, p_err_at_n: p_err_at_cap.prob(), n_cap }
            }
        }
    }
}

struct Probe<'a> {
    query: &'a LawQuery,
    seen: BTreeMap<u64, f64>,
}

impl Probe<'_> {
    fn ln_p(&mut self, n: u64) -> Result<f64> {
        if let Some(&v) = self.seen.get(&n) {
            return Ok(v);
        }
        let v = evaluate_point(&self.query.generator, &self.query.reranker, n)?.ln();
        self.seen.insert(n, v);
        Ok(v)
    }

    /// Largest probed n up to which the probes are non-increasing, or None
    /// when every probe is consistent.
    fn last_monotone_probe(&self) -> Option<u64> {
        let mut prev: Option<(u64, f64)> = None;
        for (&n, &v) in &self.seen {
            if let Some((pn, pv)) = prev {
                if v > pv + 1e-12 * pv.abs().max(1.0) {
                    return Some(pn);
                }
            }
            prev = Some((n, v));
        }
        None
    }
}

/// Smallest n ≤ n_cap with P_err(n) ≤ target.
pub fn min_n_for_target(query: &LawQuery) -> Result<MinN> {
    if !(query.target > 0.0 && query.target < 1.0) {
        return Err(Error::invalid(format!("target must lie in (0, 1), got {}", query.target)));
    }
    if query.n_cap == 0 {
        return Err(Error::invalid("n_cap must be >= 1"));
    }
    let ln_target = query.target.ln();
    let cap = query.n_cap;
    let mut probe = Probe { query, seen: BTreeMap::new() };

    let found = search(&mut probe, ln_target, cap)?;
    let answer = match probe.last_monotone_probe() {
        None => found,
        Some(start) => linear_scan(&mut probe, ln_target, start + 1, cap)?,
    };
    Ok(match answer {
        Some(n) => MinN::Reachable { n, p_err: LogProb::from_ln(probe.ln_p(n)?) },
        None => MinN::NotReachable { n_cap: cap, p_err_at_cap: LogProb::from_ln(probe.ln_p(cap)?) },
    })
}

fn search(probe: &mut Probe, ln_target: f64, cap: u64) -> Result<Option<u64>> {
    if probe.ln_p(1)? <= ln_target {
        return Ok(Some(1));
    }
    let mut lo = 1;
    let mut hi = 2.min(cap);
    while probe.ln_p(hi)? > ln_target {
        if hi == cap {
            return Ok(None);
        }
        lo = hi;
        hi = hi.saturating_mul(2).min(cap);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe.ln_p(mid)? <= ln_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

fn linear_scan(probe: &mut Probe, ln_target: f64, from: u64, cap: u64) -> Result<Option<u64>> {
    for n in from..=cap {
        if probe.ln_p(n)? <= ln_target {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(curve: &FailureCurve) -> Vec<f64> {
        curve.points().iter().map(|p| p.failure_rate).collect()
    }

    #[test]
    fn evaluate_examples() {
        let indep = GeneratorSpec::Independent { epsilon: 0.3 };
        let r = rates(&evaluate_law(&indep, &RerankerSpec::Perfect, &[1, 2, 3]).unwrap());
        for (a, b) in r.iter().zip([0.3, 0.09, 0.027]) {
            assert!((a - b).abs() < 1e-15);
        }
        let r = rates(&evaluate_law(&indep, &RerankerSpec::Random, &[1, 10, 100]).unwrap());
        assert!(r.iter().all(|v| (v - 0.3).abs() < 1e-15));
        let beta = GeneratorSpec::BetaCoupled { alpha: 1.0, beta: 1.0 };
        let r = rates(&evaluate_law(&beta, &RerankerSpec::Perfect, &[1, 2, 3]).unwrap());
        for (a, b) in r.iter().zip([0.5, 1.0 / 3.0, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn specialised_routes_agree_with_generic_sums() {
        let beta = GeneratorSpec::BetaCoupled { alpha: 0.4, beta: 0.9 };
        let m = RerankerSpec::Random.marginals(12).unwrap();
        let generic = p_err_generic_beta(0.4, 0.9, &m).unwrap();
        let routed = evaluate_point(&beta, &RerankerSpec::Random, 12).unwrap();
        assert!((generic.prob() - routed.prob()).abs() < 1e-12);
    }

    fn expect_reachable(q: &LawQuery) -> u64 {
        match min_n_for_target(q).unwrap() {
            MinN::Reachable { n, .. } => n,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn min_n_examples() {
        let indep = GeneratorSpec::Independent { epsilon: 0.3 };
        assert_eq!(expect_reachable(&LawQuery::new(indep, RerankerSpec::Perfect, 1e-3)), 6);
        let beta = GeneratorSpec::BetaCoupled { alpha: 1.0, beta: 1.0 };
        assert_eq!(expect_reachable(&LawQuery::new(beta, RerankerSpec::Perfect, 0.01)), 99);
        let q = LawQuery { n_cap: 1000, ..LawQuery::new(indep, RerankerSpec::Random, 0.1) };
        let res = min_n_for_target(&q).unwrap();
        assert!(matches!(res, MinN::NotReachable { n_cap: 1000, .. }));
        let rep = res.report(q.n_cap);
        assert_eq!(
            serde_json::to_string(&rep).unwrap(),
            r#"{"reachable":false,"n":null,"p_err_at_n":0.3,"n_cap":1000}"#
        );
    }

    #[test]
    fn min_n_edge_cases() {
        let indep = GeneratorSpec::Independent { epsilon: 0.3 };
        assert_eq!(expect_reachable(&LawQuery::new(indep, RerankerSpec::Perfect, 0.5)), 1);
        let q = LawQuery { n_cap: 5, ..LawQuery::new(indep, RerankerSpec::Perfect, 1e-3) };
        assert!(matches!(min_n_for_target(&q).unwrap(), MinN::NotReachable { n_cap: 5, .. }));
        let q = LawQuery { n_cap: 6, ..LawQuery::new(indep, RerankerSpec::Perfect, 1e-3) };
        assert_eq!(expect_reachable(&q), 6);
        assert!(min_n_for_target(&LawQuery::new(indep, RerankerSpec::Perfect, 1.0)).is_err());
        assert!(min_n_for_target(&LawQuery::new(indep, RerankerSpec::Perfect, 0.0)).is_err());
    }

    #[test]
    fn non_monotone_probes_trigger_linear_scan() {
        let query = LawQuery::new(GeneratorSpec::Independent { epsilon: 0.3 }, RerankerSpec::Perfect, 0.1);
        let mut probe = Probe { query: &query, seen: BTreeMap::new() };
        probe.seen.extend([(1, -1.0), (2, -2.0), (4, -1.5), (8, -3.0)]);
        assert_eq!(probe.last_monotone_probe(), Some(2));
        probe.seen.insert(4, -2.5);
        assert_eq!(probe.last_monotone_probe(), None);
    }
}
