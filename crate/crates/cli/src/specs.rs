//! Shell-friendly spec strings for generators, rerankers and N grids.

use std::path::{Path, PathBuf};

use rerank_core::fit::LawParams;
use rerank_core::laws::GeneratorSpec;
use rerank_core::rank::{RerankerSpec, TopOneMarginals};

/// Reranker as given on the command line. Explicit marginals are loaded
/// later so that file errors are reported as runtime failures.
#[derive(Debug, Clone)]
pub enum RerankerArg {
    Spec(RerankerSpec),
    Explicit(PathBuf),
}

impl RerankerArg {
    pub fn resolve(&self) -> rerank_core::Result<RerankerSpec> {
        match self {
            RerankerArg::Spec(s) => Ok(s.clone()),
            RerankerArg::Explicit(path) => Ok(RerankerSpec::Explicit(load_explicit(path)?)),
        }
    }
}

fn split_params(s: &str, want: usize) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != want {
        return Err(format!("expected {want} comma-separated number(s), got `{s}`"));
    }
    parts.iter().map(|p| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}"))).collect()
}

pub fn parse_generator(s: &str) -> Result<GeneratorSpec, String> {
    let (kind, rest) = s.split_once(':').ok_or_else(|| format!("generator `{s}`: expected indep:<eps> or beta:<alpha>,<beta>"))?;
    let spec = match kind {
        "indep" => GeneratorSpec::Independent { epsilon: split_params(rest, 1)?[0] },
        "beta" => {
            let p = split_params(rest, 2)?;
            GeneratorSpec::BetaCoupled { alpha: p[0], beta: p[1] }
        }
        _ => return Err(format!("unknown generator kind `{kind}` (indep|beta)")),
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

pub fn parse_reranker(s: &str) -> Result<RerankerArg, String> {
    let (kind, rest) = match s.split_once(':') {
        Some((k, r)) => (k, Some(r)),
        None => (s, None),
    };
    let no_args = |spec: RerankerSpec| match rest {
        None => Ok(RerankerArg::Spec(spec)),
        Some(_) => Err(format!("reranker `{kind}` takes no parameters")),
    };
    let args = || rest.ok_or_else(|| format!("reranker `{kind}` needs parameters"));
    let spec = match kind {
        "perfect" => return no_args(RerankerSpec::Perfect),
        "random" => return no_args(RerankerSpec::Random),
        "mallows" => RerankerSpec::mallows_from_e_neg_lambda(split_params(args()?, 1)?[0]),
        "zipf" => {
            let p = split_params(args()?, 2)?;
            RerankerSpec::zipf_from_e_neg_lambda(p[0], p[1])
        }
        "poly" => {
            let r = args()?;
            let r: u32 = r.trim().parse().map_err(|e| format!("poly exponent `{r}`: {e}"))?;
            Ok(RerankerSpec::Polynomial { r })
        }
        "explicit" => return Ok(RerankerArg::Explicit(PathBuf::from(args()?))),
        _ => return Err(format!("unknown reranker kind `{kind}` (perfect|random|mallows|zipf|poly|explicit)")),
    }
    .map_err(|e| e.to_string())?;
    spec.validate().map_err(|e| e.to_string())?;
    Ok(RerankerArg::Spec(spec))
}

/// Grid of N values, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<u64>);

/// `a..b` (inclusive) or a comma list whose items may themselves be ranges.
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let int = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("`{t}`: {e}"));
    let mut grid = Vec::new();
    for item in s.split(',') {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (int(a)?, int(b)?);
                if a > b {
                    return Err(format!("empty range `{item}`"));
                }
                grid.extend(a..=b);
            }
            None => grid.push(int(item)?),
        }
    }
    if grid.first() == Some(&0) {
        return Err("N values must be >= 1".into());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format!("N grid `{s}` must be strictly increasing"));
    }
    Ok(Grid(grid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsample {
    Prefix,
    Bootstrap(u32),
}

pub fn parse_subsample(s: &str) -> Result<Subsample, String> {
    match s.split_once(':') {
        None if s == "prefix" => Ok(Subsample::Prefix),
        Some(("bootstrap", b)) => match b.trim().parse::<u32>() {
            Ok(0) => Err("bootstrap needs at least one sample".into()),
            Ok(b) => Ok(Subsample::Bootstrap(b)),
            Err(e) => Err(format!("bootstrap sample count `{b}`: {e}")),
        },
        _ => Err(format!("subsampling `{s}`: expected prefix or bootstrap:<B>")),
    }
}

/// Reads the `eta` column of a CSV file.
pub fn load_explicit(path: &Path) -> rerank_core::Result<TopOneMarginals> {
    let mut reader = csv::Reader::from_path(path)?;
    let col = reader
        .headers()?
        .iter()
        .position(|h| h.trim() == "eta")
        .ok_or_else(|| rerank_core::Error::Parse { line: 1, message: format!("{}: no `eta` column", path.display()) })?;
    let mut eta = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let field = row.get(col).unwrap_or("").trim();
        let v = field
            .parse::<f64>()
            .map_err(|e| rerank_core::Error::Parse { line: i + 2, message: format!("eta `{field}`: {e}") })?;
        eta.push(v);
    }
    TopOneMarginals::new(eta)
}

/// The generator and reranker a fitted law stands for. A zero e^{-λ} is
/// the perfect reranker.
pub fn law_from_params(p: &LawParams) -> rerank_core::Result<(GeneratorSpec, RerankerSpec)> {
    let generator = GeneratorSpec::BetaCoupled { alpha: p.alpha, beta: p.beta };
    generator.validate()?;
    let reranker = if p.e_neg_lambda == 0.0 {
        RerankerSpec::Perfect
    } else {
        RerankerSpec::zipf_from_e_neg_lambda(p.e_neg_lambda, p.gamma)?
    };
    Ok((generator, reranker))
}
