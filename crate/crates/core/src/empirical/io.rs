use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One generated hypothesis for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub query_id: String,
    pub hyp_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_result: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityMode {
    Utility,
    Loss,
}

/// Pairwise scores for one query; `values[i][j]` judges candidate i against j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityMatrix {
    pub query_id: String,
    pub mode: UtilityMode,
    pub values: Vec<Vec<f64>>,
}

impl UtilityMatrix {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self) -> std::result::Result<(), String> {
        let n = self.values.len();
        if let Some(row) = self.values.iter().position(|r| r.len() != n) {
            return Err(format!("utility matrix is not square (row {row})"));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err("utility matrix has non-finite entries".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmpiricalDataset {
    /// Records per query, ordered by `hyp_index`; every `acceptable` is set.
    pub queries: BTreeMap<String, Vec<HypothesisRecord>>,
    pub utilities: Option<BTreeMap<String, UtilityMatrix>>,
    pub threshold: Option<f64>,
}

impl EmpiricalDataset {
    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn min_hypotheses(&self) -> usize {
        self.queries.values().map(Vec::len).min().unwrap_or(0)
    }

    /// Validates and normalises raw records: groups by query, sorts by
    /// hyp_index and derives missing flags from `oracle_score >= threshold`.
    pub fn from_parts(
        records: Vec<HypothesisRecord>,
        utilities: Option<Vec<UtilityMatrix>>,
        threshold: Option<f64>,
    ) -> Result<Self> {
        if let Some(t) = threshold {
            if !t.is_finite() {
                return Err(Error::invalid(format!("threshold must be finite, got {t}")));
            }
        }
        let mut queries: BTreeMap<String, Vec<HypothesisRecord>> = BTreeMap::new();
        for r in records {
            queries.entry(r.query_id.clone()).or_default().push(r);
        }
        let mut problems: Vec<String> = Vec::new();
        for (id, recs) in queries.iter_mut() {
            if let Err(msg) = normalise_query(recs, threshold) {
                problems.push(format!("query `{id}`: {msg}"));
            }
        }
        let utilities = match utilities {
            None => None,
            Some(list) => {
                let mut map = BTreeMap::new();
                for m in list {
                    let problem = match queries.get(&m.query_id) {
                        _ if map.contains_key(&m.query_id) => Some("duplicate utility matrix".to_string()),
                        None => Some("utility matrix for a query with no records".to_string()),
                        Some(recs) => m.check().err().or_else(|| {
                            (m.len() != recs.len()).then(|| {
                                format!("utility matrix is {}x{} but the query has {} hypotheses", m.len(), m.len(), recs.len())
                            })
                        }),
                    };
                    match problem {
                        Some(msg) => problems.push(format!("query `{}`: {msg}", m.query_id)),
                        None => {
                            map.insert(m.query_id.clone(), m);
                        }
                    }
                }
                Some(map)
            }
        };
        if !problems.is_empty() {
            return Err(Error::validation(format!(
                "{} invalid quer{}:\n  {}",
                problems.len(),
                if problems.len() == 1 { "y" } else { "ies" },
                problems.join("\n  ")
            )));
        }
        Ok(Self { queries, utilities, threshold })
    }

    pub fn write_records<W: Write>(&self, mut w: W) -> Result<()> {
        for r in self.queries.values().flatten() {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_utilities<W: Write>(&self, mut w: W) -> Result<()> {
        for m in self.utilities.iter().flat_map(|u| u.values()) {
            serde_json::to_writer(&mut w, m)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

fn normalise_query(recs: &mut [HypothesisRecord], threshold: Option<f64>) -> std::result::Result<(), String> {
    recs.sort_by_key(|r| r.hyp_index);
    for (i, r) in recs.iter().enumerate() {
        if r.hyp_index != i as u64 {
            return Err(if i > 0 && recs[i - 1].hyp_index == r.hyp_index {
                format!("hyp_index {} appears more than once", r.hyp_index)
            } else {
                format!("hyp_index values are not contiguous from 0 (missing {i})")
            });
        }
    }
    for r in recs.iter_mut() {
        for (name, v) in [("rerank_score", r.rerank_score), ("oracle_score", r.oracle_score)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(format!("hypothesis {}: {name} is not finite", r.hyp_index));
            }
        }
        if r.acceptable.is_none() {
            match (r.oracle_score, threshold) {
                (Some(s), Some(t)) => r.acceptable = Some(s >= t),
                _ => {
                    return Err(format!(
                        "hypothesis {}: no `acceptable` flag and no oracle_score with a threshold",
                        r.hyp_index
                    ))
                }
            }
        }
    }
    Ok(())
}

/// Parse JSON lines, skipping blank lines. Errors carry 1-based line numbers.
pub fn read_json_lines<T, R>(reader: R) -> Result<Vec<T>>
where
    T: serde::de::DeserializeOwned,
    R: Read,
{
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        out.push(value);
    }
    Ok(out)
}

pub fn read_dataset<R1: Read, R2: Read>(records: R1, utilities: Option<R2>, threshold: Option<f64>) -> Result<EmpiricalDataset> {
    let records = read_json_lines(records)?;
    let utilities = utilities.map(read_json_lines).transpose()?;
    EmpiricalDataset::from_parts(records, utilities, threshold)
}

pub fn load_dataset(
    records_path: impl AsRef<Path>,
    utilities_path: Option<&Path>,
    threshold: Option<f64>,
) -> Result<EmpiricalDataset> {
    let records = std::fs::File::open(records_path)?;
    let utilities = utilities_path.map(std::fs::File::open).transpose()?;
    read_dataset(records, utilities, threshold)
}
