//! Replay reranking strategies on recorded hypotheses to get empirical
//! failure curves.

mod io;
mod select;

pub use io::{
    load_dataset, read_dataset, read_json_lines, EmpiricalDataset, HypothesisRecord, UtilityMatrix, UtilityMode,
};
pub use select::{select_by_score, select_majority_vote, select_mbr, select_mbr_with, select_oracle};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{CurvePoint, FailureCurve, DEFAULT_CI_LEVEL};
use crate::error::{Error, Result};
use crate::laws::GeneratorSpec;
use crate::rng::{substream, StreamFamily};
use crate::sim::validate_grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Oracle,
    Majority,
    Mbr,
    Score,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Strategy::Oracle),
            "majority" => Ok(Strategy::Majority),
            "mbr" => Ok(Strategy::Mbr),
            "score" => Ok(Strategy::Score),
            _ => Err(Error::invalid(format!("unknown strategy `{s}` (oracle|majority|mbr|score)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsampling {
    /// The first n hypotheses in generation order.
    Prefix,
    /// `samples` random size-n subsets per query, drawn without replacement.
    Bootstrap { samples: u32, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalOptions {
    pub mbr_include_self: bool,
    pub ci_level: f64,
}

impl Default for EmpiricalOptions {
    fn default() -> Self {
        Self { mbr_include_self: false, ci_level: DEFAULT_CI_LEVEL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCoverage {
    pub n: u64,
    pub queries_used: usize,
    /// Queries with fewer than n hypotheses.
    pub queries_dropped: usize,
}

/// How an empirical curve was built; written next to the curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMetadata {
    pub strategy: Strategy,
    pub subsampling: String,
    pub bootstrap_samples: Option<u32>,
    pub seed: Option<u64>,
    pub mbr_include_self: bool,
    pub threshold: Option<f64>,
    pub n_queries: usize,
    /// Each query contributes one outcome per n (averaged over subsets in
    /// bootstrap mode); all queries are pooled with equal weight.
    pub pooling: String,
    pub points: Vec<PointCoverage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCurve {
    pub curve: FailureCurve,
    pub metadata: EmpiricalMetadata,
}

/// Selected position within `subset`'s query, or None when the strategy
/// abstains (majority vote with nothing executed).
fn choose(
    dataset: &EmpiricalDataset,
    id: &str,
    records: &[HypothesisRecord],
    strategy: Strategy,
    subset: &[usize],
    include_self: bool,
) -> Result<Option<usize>> {
    match strategy {
        Strategy::Oracle => select::oracle_in(records, subset).map(Some),
        Strategy::Score => select::score_in(records, subset).map(Some),
        Strategy::Majority => Ok(select::majority_in(records, subset)),
        Strategy::Mbr => {
            let m = dataset
                .utilities
                .as_ref()
                .and_then(|u| u.get(id))
                .ok_or_else(|| Error::validation(format!("query `{id}` has no utility matrix for MBR")))?;
            Ok(Some(select::mbr_in(m, subset, include_self)))
        }
    }
}

fn fails(records: &[HypothesisRecord], pick: Option<usize>) -> bool {
    pick.is_none_or(|i| records[i].acceptable != Some(true))
}

pub fn empirical_failure_curve(
    dataset: &EmpiricalDataset,
    strategy: Strategy,
    n_grid: &[u64],
    subsampling: Subsampling,
    options: &EmpiricalOptions,
) -> Result<EmpiricalCurve> {
    validate_grid(n_grid)?;
    if strategy == Strategy::Mbr && dataset.utilities.is_none() {
        return Err(Error::validation("MBR needs a utilities file"));
    }
    if let Subsampling::Bootstrap { samples: 0, .. } = subsampling {
        return Err(Error::invalid("bootstrap needs at least one sample"));
    }
    let queries: Vec<(usize, &String, &Vec<HypothesisRecord>)> =
        dataset.queries.iter().enumerate().map(|(q, (id, r))| (q, id, r)).collect();

    let mut points = Vec::with_capacity(n_grid.len());
    let mut coverage = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let size = n as usize;
        let eligible: Vec<_> = queries.iter().filter(|(_, _, r)| r.len() >= size).collect();
        let per_query = |&&(q, id, records): &&(usize, &String, &Vec<HypothesisRecord>)| -> Result<u64> {
            match subsampling {
                Subsampling::Prefix => {
                    let subset: Vec<usize> = (0..size).collect();
                    let pick = choose(dataset, id, records, strategy, &subset, options.mbr_include_self)?;
                    Ok(fails(records, pick) as u64)
                }
                Subsampling::Bootstrap { samples, seed } => {
                    let mut rng = substream(seed, n, q as u64);
                    let mut failures = 0;
                    for _ in 0..samples {
                        let mut subset = sample(&mut rng, records.len(), size).into_vec();
                        subset.sort_unstable();
                        let pick = choose(dataset, id, records, strategy, &subset, options.mbr_include_self)?;
                        failures += fails(records, pick) as u64;
                    }
                    Ok(failures)
                }
            }
        };
        let counts = eligible.par_iter().map(per_query).collect::<Result<Vec<u64>>>()?;
        coverage.push(PointCoverage {
            n,
            queries_used: eligible.len(),
            queries_dropped: queries.len() - eligible.len(),
        });
        if eligible.is_empty() {
            continue;
        }
        let total: u64 = counts.iter().sum();
        let failures = match subsampling {
            Subsampling::Prefix => total as f64,
            Subsampling::Bootstrap { samples, .. } => total as f64 / samples as f64,
        };
        points.push(CurvePoint::estimated(n, failures, eligible.len() as u64, options.ci_level)?);
    }

    let (name, samples, seed) = match subsampling {
        Subsampling::Prefix => ("prefix", None, None),
        Subsampling::Bootstrap { samples, seed } => ("bootstrap", Some(samples), Some(seed)),
    };
    Ok(EmpiricalCurve {
        curve: FailureCurve::new(points)?,
        metadata: EmpiricalMetadata {
            strategy,
            subsampling: name.into(),
            bootstrap_samples: samples,
            seed,
            mbr_include_self: options.mbr_include_self,
            threshold: dataset.threshold,
            n_queries: queries.len(),
            pooling: "per-query outcomes pooled with equal weight".into(),
            points: coverage,
        },
    })
}

/// Synthetic records: per query τ is drawn from the generator and each
/// hypothesis is acceptable with probability 1 - τ. Rerank scores are
/// uniform noise.
pub fn sample_dataset(generator: &GeneratorSpec, n_queries: usize, n_hypotheses: usize, seed: u64) -> Result<EmpiricalDataset> {
    generator.validate()?;
    let beta = match *generator {
        GeneratorSpec::BetaCoupled { alpha, beta } => {
            Some(Beta::new(alpha, beta).map_err(|e| Error::invalid(e.to_string()))?)
        }
        GeneratorSpec::Independent { .. } => None,
    };
    let streams = StreamFamily::new(seed, 0);
    let records: Vec<HypothesisRecord> = (0..n_queries)
        .into_par_iter()
        .flat_map_iter(|q| {
            let mut rng = streams.at(q as u64);
            let tau = match (&beta, generator) {
                (Some(b), _) => b.sample(&mut rng),
                (None, GeneratorSpec::Independent { epsilon }) => *epsilon,
                (None, _) => unreachable!(),
            };
            (0..n_hypotheses)
                .map(|i| HypothesisRecord {
                    query_id: format!("q{q:06}"),
                    hyp_index: i as u64,
                    acceptable: Some(rng.random::<f64>() >= tau),
                    rerank_score: Some(rng.random()),
                    oracle_score: None,
                    exec_result: None,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    EmpiricalDataset::from_parts(records, None, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags_query(id: &str, flags: &[bool]) -> Vec<HypothesisRecord> {
        flags
            .iter()
            .enumerate()
            .map(|(i, &f)| HypothesisRecord {
                query_id: id.into(),
                hyp_index: i as u64,
                acceptable: Some(f),
                rerank_score: Some(i as f64),
                oracle_score: None,
                exec_result: None,
            })
            .collect()
    }

    fn rates(c: &EmpiricalCurve) -> Vec<f64> {
        c.curve.points().iter().map(|p| p.failure_rate).collect()
    }

    #[test]
    fn first_acceptable_at_index_two() {
        let ds = EmpiricalDataset::from_parts(flags_query("q", &[false, false, true]), None, None).unwrap();
        let c = empirical_failure_curve(&ds, Strategy::Oracle, &[1, 2, 3], Subsampling::Prefix, &Default::default()).unwrap();
        assert_eq!(rates(&c), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn acceptable_first_record_never_fails() {
        let mut recs = flags_query("a", &[true, false, false]);
        recs.extend(flags_query("b", &[true, true, false]));
        let ds = EmpiricalDataset::from_parts(recs, None, None).unwrap();
        let c = empirical_failure_curve(&ds, Strategy::Oracle, &[1, 2, 3], Subsampling::Prefix, &Default::default()).unwrap();
        assert!(rates(&c).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn short_queries_are_dropped_and_counted() {
        let mut recs = flags_query("a", &[false, true]);
        recs.extend(flags_query("b", &[false, false, false]));
        let ds = EmpiricalDataset::from_parts(recs, None, None).unwrap();
        let c = empirical_failure_curve(&ds, Strategy::Score, &[1, 2, 3], Subsampling::Prefix, &Default::default()).unwrap();
        assert_eq!(rates(&c), vec![1.0, 0.5, 1.0]);
        assert_eq!(c.metadata.points[2], PointCoverage { n: 3, queries_used: 1, queries_dropped: 1 });
        assert_eq!(c.curve.points()[2].trials, 1);
    }

    #[test]
    fn majority_abstention_is_a_failure() {
        let recs = flags_query("q", &[true, true]);
        let ds = EmpiricalDataset::from_parts(recs, None, None).unwrap();
        let c = empirical_failure_curve(&ds, Strategy::Majority, &[2], Subsampling::Prefix, &Default::default()).unwrap();
        assert_eq!(rates(&c), vec![1.0]);
    }

    #[test]
    fn mbr_requires_utilities() {
        let ds = EmpiricalDataset::from_parts(flags_query("q", &[true]), None, None).unwrap();
        assert!(empirical_failure_curve(&ds, Strategy::Mbr, &[1], Subsampling::Prefix, &Default::default()).is_err());
    }

    #[test]
    fn bootstrap_is_seeded_and_exact_at_full_size() {
        let ds = sample_dataset(&GeneratorSpec::Independent { epsilon: 0.4 }, 300, 6, 3).unwrap();
        let opts = EmpiricalOptions::default();
        let boot = |seed| {
            empirical_failure_curve(&ds, Strategy::Oracle, &[1, 3, 6], Subsampling::Bootstrap { samples: 20, seed }, &opts)
                .unwrap()
        };
        assert_eq!(boot(1), boot(1));
        assert_ne!(boot(1).curve, boot(2).curve);
        let prefix = empirical_failure_curve(&ds, Strategy::Oracle, &[6], Subsampling::Prefix, &opts).unwrap();
        let b = boot(1);
        assert_eq!(b.curve.points()[2].failure_rate, prefix.curve.points()[0].failure_rate);
        assert_eq!(b.metadata.bootstrap_samples, Some(20));
    }

    #[test]
    fn sampled_dataset_is_reproducible() {
        let g = GeneratorSpec::BetaCoupled { alpha: 1.0, beta: 2.0 };
        assert_eq!(sample_dataset(&g, 50, 4, 9).unwrap(), sample_dataset(&g, 50, 4, 9).unwrap());
    }
}
