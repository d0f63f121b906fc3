//! Failure curves: one failure rate per N, optionally with a confidence
//! interval, and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::laws::LogProb;

pub const CSV_HEADER: [&str; 6] =
    ["n", "failure_rate", "trials", "ci_low", "ci_high", "log10_failure_rate"];

pub const DEFAULT_CI_LEVEL: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub n: u64,
    pub failure_rate: f64,
    /// Number of contributions behind the estimate; 0 for analytic points.
    pub trials: u64,
    pub ci: Option<(f64, f64)>,
    /// Kept separately so analytic values below f64's range survive.
    pub log10_failure_rate: f64,
}

impl CurvePoint {
    pub fn analytic(n: u64, p: LogProb) -> Self {
        Self { n, failure_rate: p.prob(), trials: 0, ci: None, log10_failure_rate: p.log10() }
    }

    /// `failures` may be fractional (bootstrap averages).
    pub fn estimated(n: u64, failures: f64, trials: u64, ci_level: f64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::invalid(format!("no trials behind the point at n = {n}")));
        }
        let rate = failures / trials as f64;
        Ok(Self {
            n,
            failure_rate: rate,
            trials,
            ci: Some(wilson_interval(rate, trials, ci_level)?),
            log10_failure_rate: rate.log10(),
        })
    }

    /// Natural log of the failure rate, taken from the log column.
    pub fn ln_failure_rate(&self) -> f64 {
        self.log10_failure_rate * std::f64::consts::LN_10
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FailureCurve {
    points: Vec<CurvePoint>,
}

impl FailureCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if p.n == 0 {
                return Err(Error::validation("curve point with n = 0"));
            }
            if i > 0 && points[i - 1].n >= p.n {
                return Err(Error::validation(format!(
                    "n must be strictly increasing, got {} after {}",
                    p.n,
                    points[i - 1].n
                )));
            }
            if !(0.0..=1.0).contains(&p.failure_rate) {
                return Err(Error::validation(format!(
                    "failure rate {} at n = {} outside [0, 1]",
                    p.failure_rate, p.n
                )));
            }
            if let Some((lo, hi)) = p.ci {
                if !(0.0 <= lo && lo <= p.failure_rate && p.failure_rate <= hi && hi <= 1.0) {
                    return Err(Error::validation(format!(
                        "interval [{lo}, {hi}] does not bracket {} at n = {}",
                        p.failure_rate, p.n
                    )));
                }
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ns(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.n).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for p in &self.points {
            let (lo, hi) = match p.ci {
                Some((lo, hi)) => (fmt_f64(lo), fmt_f64(hi)),
                None => (String::new(), String::new()),
            };
            out.write_record([
                p.n.to_string(),
                fmt_f64(p.failure_rate),
                p.trials.to_string(),
                lo,
                hi,
                fmt_f64(p.log10_failure_rate),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the columns by name; `log10_failure_rate` is optional and
    /// recomputed from `failure_rate` when absent.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| {
            col(name).ok_or_else(|| Error::validation(format!("curve CSV lacks a `{name}` column")))
        };
        let (i_n, i_rate, i_trials) = (need("n")?, need("failure_rate")?, need("trials")?);
        let (i_lo, i_hi, i_log) = (col("ci_low"), col("ci_high"), col("log10_failure_rate"));

        let mut points = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let line = row + 2;
            let field = |i: usize| record.get(i).unwrap_or("").trim();
            let parse_err = |what: &str, v: &str| Error::Parse {
                line,
                message: format!("bad {what} `{v}`"),
            };
            let n: u64 = field(i_n).parse().map_err(|_| parse_err("n", field(i_n)))?;
            let rate = parse_f64(field(i_rate)).ok_or_else(|| parse_err("failure_rate", field(i_rate)))?;
            let trials: u64 =
                field(i_trials).parse().map_err(|_| parse_err("trials", field(i_trials)))?;
            let opt = |i: Option<usize>, what: &str| -> Result<Option<f64>> {
                match i.map(field) {
                    None | Some("") => Ok(None),
                    Some(v) => parse_f64(v).map(Some).ok_or_else(|| parse_err(what, v)),
                }
            };
            let ci = match (opt(i_lo, "ci_low")?, opt(i_hi, "ci_high")?) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                (None, None) => None,
                _ => {
                    return Err(Error::Parse { line, message: "only one interval bound given".into() })
                }
            };
            let log10 = opt(i_log, "log10_failure_rate")?.unwrap_or_else(|| rate.log10());
            points.push(CurvePoint { n, failure_rate: rate, trials, ci, log10_failure_rate: log10 });
        }
        Self::new(points)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| !v.is_nan())
}

/// Shortest decimal that parses back to the same f64. Exponent notation
/// outside [1e-5, 1e16) keeps tiny rates readable.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Two-sided Wilson score interval for a binomial proportion.
pub fn wilson_interval(rate: f64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if trials == 0 {
        return Err(Error::invalid("Wilson interval needs at least one trial"));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("proportion {rate} outside [0, 1]")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let n = trials as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (rate + z2 / (2.0 * n)) / denom;
    let half = z / denom * (rate * (1.0 - rate) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = (center - half).max(0.0).min(rate);
    let hi = (center + half).min(1.0).max(rate);
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // statsmodels proportion_confint(10, 100, 0.05, "wilson").
        let (lo, hi) = wilson_interval(0.1, 100, 0.95).unwrap();
        assert!((lo - 0.055_229_137_060_675_1).abs() < 1e-12, "{lo}");
        assert!((hi - 0.174_365_661_504_913_5).abs() < 1e-12, "{hi}");
        let (lo, hi) = wilson_interval(0.0, 50, 0.99).unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.15);
        let (lo, hi) = wilson_interval(1.0, 50, 0.99).unwrap();
        assert_eq!(hi, 1.0);
        assert!(lo < 1.0);
        assert!(wilson_interval(0.5, 0, 0.99).is_err());
        assert!(wilson_interval(0.5, 10, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let curve = FailureCurve::new(vec![
            CurvePoint::analytic(1, LogProb::from_prob(0.3)),
            CurvePoint::analytic(700, LogProb::from_ln(-700.0 * 0.3f64.ln().abs())),
            CurvePoint::estimated(800, 3.0, 1_000_000, 0.99).unwrap(),
            CurvePoint::estimated(900, 0.0, 1_000_000, 0.99).unwrap(),
        ])
        .unwrap();
        let text = curve.to_csv_string();
        assert!(text.starts_with("n,failure_rate,trials,ci_low,ci_high,log10_failure_rate\n"));
        let back = FailureCurve::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, curve);
        assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn reads_curves_without_log_column() {
        let text = "n,failure_rate,trials,ci_low,ci_high\n1,0.5,10,0.2,0.8\n2,0.25,0,,\n";
        let curve = FailureCurve::read_csv(text.as_bytes()).unwrap();
        assert_eq!(curve.points()[1].ci, None);
        assert!((curve.points()[1].log10_failure_rate - 0.25f64.log10()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_curves() {
        let dup = "n,failure_rate,trials\n2,0.5,10\n2,0.4,10\n";
        assert!(FailureCurve::read_csv(dup.as_bytes()).is_err());
        let bad = "n,failure_rate,trials\n1,zero,10\n";
        assert!(matches!(FailureCurve::read_csv(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let missing = "n,trials\n1,10\n";
        assert!(FailureCurve::read_csv(missing.as_bytes()).is_err());
        let p = CurvePoint { n: 1, failure_rate: 0.5, trials: 1, ci: Some((0.6, 0.9)), log10_failure_rate: 0.0 };
        assert!(FailureCurve::new(vec![p]).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, 1.0, 0.3, 2.43e-3, 1e-300, 5e-324, 123456.789, -1e-7, f64::NEG_INFINITY] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(1e-300), "1e-300");
    }
}
