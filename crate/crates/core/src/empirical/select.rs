//! Reranking strategies. Each picks one hypothesis out of a subset of a
//! query's records; every tie goes to the lowest hyp_index.

use std::collections::HashMap;

use super::io::{HypothesisRecord, UtilityMatrix, UtilityMode};
use crate::error::{Error, Result};

/// Majority vote over execution results. Returns a position in `records`,
/// or None when no hypothesis produced a result.
pub fn select_majority_vote(records: &[HypothesisRecord]) -> Option<usize> {
    majority_in(records, &(0..records.len()).collect::<Vec<_>>())
}

/// MBR over the leading `prefix_n × prefix_n` block, self-pairs excluded.
pub fn select_mbr(matrix: &UtilityMatrix, prefix_n: usize) -> Result<usize> {
    select_mbr_with(matrix, prefix_n, false)
}

pub fn select_mbr_with(matrix: &UtilityMatrix, prefix_n: usize, include_self: bool) -> Result<usize> {
    if prefix_n == 0 || prefix_n > matrix.len() {
        return Err(Error::invalid(format!(
            "MBR prefix {prefix_n} outside 1..={} for query `{}`",
            matrix.len(),
            matrix.query_id
        )));
    }
    Ok(mbr_in(matrix, &(0..prefix_n).collect::<Vec<_>>(), include_self))
}

pub fn select_by_score(records: &[HypothesisRecord]) -> Result<usize> {
    score_in(records, &(0..records.len()).collect::<Vec<_>>())
}

/// Highest oracle score or, with only flags, the first acceptable record
/// (position 0 when none is acceptable).
pub fn select_oracle(records: &[HypothesisRecord]) -> Result<usize> {
    oracle_in(records, &(0..records.len()).collect::<Vec<_>>())
}

pub(crate) fn majority_in(records: &[HypothesisRecord], subset: &[usize]) -> Option<usize> {
    // class -> (votes, first position)
    let mut classes: HashMap<&str, (usize, usize)> = HashMap::new();
    for &i in subset {
        if let Some(result) = records[i].exec_result.as_deref().filter(|s| !s.is_empty()) {
            classes.entry(result).or_insert((0, i)).0 += 1;
        }
    }
    classes
        .into_values()
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, first)| first)
}

pub(crate) fn mbr_in(matrix: &UtilityMatrix, subset: &[usize], include_self: bool) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for &i in subset {
        let row = &matrix.values[i];
        let score: f64 = subset.iter().filter(|&&j| include_self || j != i).map(|&j| row[j]).sum();
        let better = match (best, matrix.mode) {
            (None, _) => true,
            (Some((_, b)), UtilityMode::Utility) => score > b,
            (Some((_, b)), UtilityMode::Loss) => score < b,
        };
        if better {
            best = Some((i, score));
        }
    }
    best.expect("non-empty subset").0
}

fn argmax_first(subset: &[usize], value: impl Fn(usize) -> f64) -> usize {
    let mut best = subset[0];
    for &i in &subset[1..] {
        if value(i) > value(best) {
            best = i;
        }
    }
    best
}

pub(crate) fn score_in(records: &[HypothesisRecord], subset: &[usize]) -> Result<usize> {
    if subset.is_empty() {
        return Err(Error::invalid("cannot select from an empty set of hypotheses"));
    }
    if let Some(&i) = subset.iter().find(|&&i| records[i].rerank_score.is_none()) {
        return Err(Error::validation(format!(
            "query `{}` hypothesis {} has no rerank_score",
            records[i].query_id, records[i].hyp_index
        )));
    }
    Ok(argmax_first(subset, |i| records[i].rerank_score.expect("checked")))
}

pub(crate) fn oracle_in(records: &[HypothesisRecord], subset: &[usize]) -> Result<usize> {
    if subset.is_empty() {
        return Err(Error::invalid("cannot select from an empty set of hypotheses"));
    }
    if subset.iter().all(|&i| records[i].oracle_score.is_some()) {
        return Ok(argmax_first(subset, |i| records[i].oracle_score.expect("checked")));
    }
    if subset.iter().all(|&i| records[i].acceptable.is_some()) {
        return Ok(subset.iter().copied().find(|&i| records[i].acceptable == Some(true)).unwrap_or(subset[0]));
    }
    Err(Error::validation(format!(
        "query `{}`: oracle selection needs oracle_score on every hypothesis or acceptable flags",
        records[subset[0]].query_id
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(n: usize) -> Vec<HypothesisRecord> {
        (0..n)
            .map(|i| HypothesisRecord {
                query_id: "q".into(),
                hyp_index: i as u64,
                acceptable: None,
                rerank_score: None,
                oracle_score: None,
                exec_result: None,
            })
            .collect()
    }

    fn with_exec(results: &[Option<&str>]) -> Vec<HypothesisRecord> {
        let mut r = recs(results.len());
        for (rec, e) in r.iter_mut().zip(results) {
            rec.exec_result = e.map(String::from);
        }
        r
    }

    #[test]
    fn majority_examples() {
        assert_eq!(select_majority_vote(&with_exec(&[Some("a"), Some("a"), Some("b")])), Some(0));
        assert_eq!(select_majority_vote(&with_exec(&[None, None])), None);
        assert_eq!(select_majority_vote(&with_exec(&[Some("b"), Some("a"), Some("a"), Some("b")])), Some(0));
    }

    #[test]
    fn majority_ignores_failed_executions() {
        assert_eq!(select_majority_vote(&with_exec(&[None, Some(""), Some("x"), Some("y"), Some("y")])), Some(3));
        assert_eq!(select_majority_vote(&with_exec(&[Some(""), Some("x")])), Some(1));
    }

    fn matrix(mode: UtilityMode, values: Vec<Vec<f64>>) -> UtilityMatrix {
        UtilityMatrix { query_id: "q".into(), mode, values }
    }

    #[test]
    fn mbr_examples() {
        let m = matrix(UtilityMode::Utility, vec![vec![5.0]]);
        assert_eq!(select_mbr(&m, 1).unwrap(), 0);
        let m = matrix(UtilityMode::Loss, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(select_mbr(&m, 2).unwrap(), 0);
        // Row sums without the diagonal: 2.1, 2.5, 1.9.
        let m = matrix(
            UtilityMode::Utility,
            vec![vec![9.0, 1.0, 1.1], vec![1.2, 9.0, 1.3], vec![0.9, 1.0, 9.0]],
        );
        assert_eq!(select_mbr(&m, 3).unwrap(), 1);
        assert!(select_mbr(&m, 0).is_err());
        assert!(select_mbr(&m, 4).is_err());
    }

    #[test]
    fn mbr_self_term_and_prefix() {
        let m = matrix(
            UtilityMode::Utility,
            vec![vec![0.0, 1.0, 0.0], vec![0.5, 3.0, 0.0], vec![5.0, 5.0, 0.0]],
        );
        assert_eq!(select_mbr(&m, 2).unwrap(), 0);
        assert_eq!(select_mbr_with(&m, 2, true).unwrap(), 1);
        assert_eq!(select_mbr(&m, 3).unwrap(), 2);
    }

    fn with_scores(scores: &[f64]) -> Vec<HypothesisRecord> {
        let mut r = recs(scores.len());
        for (rec, &s) in r.iter_mut().zip(scores) {
            rec.rerank_score = Some(s);
        }
        r
    }

    #[test]
    fn score_examples() {
        assert_eq!(select_by_score(&with_scores(&[0.4])).unwrap(), 0);
        assert_eq!(select_by_score(&with_scores(&[0.2, 0.9, 0.9])).unwrap(), 1);
        assert_eq!(select_by_score(&with_scores(&[0.5, 0.5, 0.5])).unwrap(), 0);
        let mut r = with_scores(&[0.2, 0.9]);
        r[1].rerank_score = None;
        assert!(matches!(select_by_score(&r), Err(Error::Validation(_))));
    }

    #[test]
    fn oracle_examples() {
        let mut r = recs(3);
        for (rec, s) in r.iter_mut().zip([0.8, 0.95, 0.9]) {
            rec.oracle_score = Some(s);
        }
        assert_eq!(select_oracle(&r).unwrap(), 1);

        let mut r = recs(3);
        for (rec, f) in r.iter_mut().zip([false, true, true]) {
            rec.acceptable = Some(f);
        }
        assert_eq!(select_oracle(&r).unwrap(), 1);
        for rec in r.iter_mut() {
            rec.acceptable = Some(false);
        }
        assert_eq!(select_oracle(&r).unwrap(), 0);
        assert!(matches!(select_oracle(&recs(2)), Err(Error::Validation(_))));
    }

    #[test]
    fn subset_selection_uses_positions() {
        let r = with_scores(&[0.9, 0.1, 0.5, 0.5]);
        assert_eq!(score_in(&r, &[1, 2, 3]).unwrap(), 2);
        let m = matrix(UtilityMode::Loss, vec![vec![0.0; 4]; 4]);
        assert_eq!(mbr_in(&m, &[1, 3], false), 1);
    }
}
