mod specs;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rerank_core::curve::{fmt_f64, FailureCurve, DEFAULT_CI_LEVEL};
use rerank_core::empirical::{empirical_failure_curve, load_dataset, EmpiricalOptions, Strategy, Subsampling};
use rerank_core::fit::{fit_law, FitOptions, LawParams};
use rerank_core::laws::GeneratorSpec;
use rerank_core::predict::{evaluate_law, min_n_for_target, LawQuery, DEFAULT_N_CAP};
use rerank_core::rank::RerankerSpec;
use rerank_core::sim::{simulate_curve, simulate_mallows_permutations, SimConfig};

use specs::{law_from_params, parse_generator, parse_grid, parse_reranker, parse_subsample, Grid, RerankerArg, Subsample};

const SUBCOMMANDS: [&str; 6] = ["curve", "simulate", "empirical", "fit", "predict", "marginals"];

/// Failure-probability laws for generator-reranker systems.
#[derive(Debug, Parser)]
#[command(name = "rerank", version, args_override_self = true)]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Report failures as a JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON object of flag defaults, keyed by long flag name; command-line flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic failure curve as CSV.
    Curve {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, value_parser = parse_grid)]
        n: Grid,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monte-Carlo failure curve as CSV.
    Simulate {
        #[arg(long, value_parser = parse_generator)]
        generator: GeneratorSpec,
        #[arg(long, value_parser = parse_reranker)]
        reranker: RerankerArg,
        #[arg(long, value_parser = parse_grid)]
        n: Grid,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = DEFAULT_CI_LEVEL)]
        ci_level: f64,
        /// Sample full Mallows permutations instead of top-1 marginals (N <= 64).
        #[arg(long)]
        permutations: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Failure curve of a reranking strategy replayed on JSONL records.
    Empirical {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        utilities: Option<PathBuf>,
        #[arg(long, default_value = "oracle", value_parser = parse_strategy)]
        strategy: Strategy,
        /// prefix or bootstrap:<B>.
        #[arg(long, default_value = "prefix", value_parser = parse_subsample)]
        subsample: Subsample,
        /// Records with oracle_score >= threshold count as acceptable.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        mbr_include_self: bool,
        #[arg(long, value_parser = parse_grid)]
        n: Grid,
        #[arg(long, default_value_t = DEFAULT_CI_LEVEL)]
        ci_level: f64,
        /// Curve CSV; metadata goes to <output>.meta.json.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Two-stage fit of a perfect-reranker curve and an optional imperfect one.
    Fit {
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        imperfect: Option<PathBuf>,
        #[arg(long)]
        weight_by_trials: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Smallest N whose failure probability reaches a target.
    Predict {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = DEFAULT_N_CAP)]
        n_cap: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Top-1 marginals of a reranker as CSV (`j,eta`).
    Marginals {
        #[arg(long, value_parser = parse_reranker)]
        reranker: RerankerArg,
        #[arg(long)]
        n: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// A law given by spec strings, by fitted parameters, or by both (the
/// spec strings override the matching half of the fit).
#[derive(Debug, Args)]
struct LawArgs {
    #[arg(long, value_parser = parse_generator)]
    generator: Option<GeneratorSpec>,
    #[arg(long, value_parser = parse_reranker)]
    reranker: Option<RerankerArg>,
    /// FitReport or parameter JSON with alpha, beta, gamma, e_neg_lambda.
    #[arg(long)]
    params: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: rerank_core::Error| e.to_string())
}

enum Failure {
    Usage(String),
    Run(rerank_core::Error),
}

impl From<rerank_core::Error> for Failure {
    fn from(e: rerank_core::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl LawArgs {
    fn resolve(&self) -> Result<(GeneratorSpec, RerankerSpec), Failure> {
        let fitted = match &self.params {
            Some(path) => {
                let params: LawParams = serde_json::from_reader(io::BufReader::new(File::open(path)?))
                    .map_err(rerank_core::Error::from)?;
                Some(law_from_params(&params)?)
            }
            None => None,
        };
        let generator = match (self.generator, &fitted) {
            (Some(g), _) => g,
            (None, Some((g, _))) => *g,
            (None, None) => return Err(Failure::Usage("need --generator or --params".into())),
        };
        let reranker = match (&self.reranker, fitted) {
            (Some(r), _) => r.resolve()?,
            (None, Some((_, r))) => r,
            (None, None) => return Err(Failure::Usage("need --reranker or --params".into())),
        };
        Ok((generator, reranker))
    }
}

fn open_output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let mut w = open_output(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_curve(path: Option<&Path>, curve: &FailureCurve) -> Result<(), Failure> {
    let mut w = open_output(path)?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn meta_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| rerank_core::Error::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Curve { law, n, output } => {
            let (g, r) = law.resolve()?;
            write_curve(output.as_deref(), &evaluate_law(&g, &r, &n.0)?)
        }
        Command::Simulate { generator, reranker, n, trials, ci_level, permutations, output } => {
            let reranker = reranker.resolve()?;
            let curve = if permutations {
                let RerankerSpec::Mallows { lambda } = reranker else {
                    return Err(Failure::Usage("--permutations needs a mallows reranker".into()));
                };
                simulate_mallows_permutations(&generator, lambda, &n.0, trials, cli.seed, ci_level)?
            } else {
                let mut cfg = SimConfig::new(generator, reranker, n.0, trials, cli.seed);
                cfg.ci_level = ci_level;
                simulate_curve(&cfg)?
            };
            write_curve(output.as_deref(), &curve)
        }
        Command::Empirical {
            records,
            utilities,
            strategy,
            subsample,
            threshold,
            mbr_include_self,
            n,
            ci_level,
            output,
        } => {
            let dataset = load_dataset(&records, utilities.as_deref(), threshold)?;
            let subsampling = match subsample {
                Subsample::Prefix => Subsampling::Prefix,
                Subsample::Bootstrap(samples) => Subsampling::Bootstrap { samples, seed: cli.seed },
            };
            let options = EmpiricalOptions { mbr_include_self, ci_level };
            let result = empirical_failure_curve(&dataset, strategy, &n.0, subsampling, &options)?;
            write_curve(output.as_deref(), &result.curve)?;
            let meta = serde_json::to_string_pretty(&result.metadata).map_err(rerank_core::Error::from)? + "\n";
            match output {
                Some(out) => std::fs::write(meta_path(&out), meta)?,
                None => eprint!("{meta}"),
            }
            Ok(())
        }
        Command::Fit { oracle, imperfect, weight_by_trials, output } => {
            let oracle = FailureCurve::load_csv(&oracle)?;
            let imperfect = imperfect.map(FailureCurve::load_csv).transpose()?;
            let report = fit_law(&oracle, imperfect.as_ref(), &FitOptions { weight_by_trials })?;
            write_text(output.as_deref(), &(report.to_json() + "\n"))
        }
        Command::Predict { law, target, n_cap, output } => {
            let (generator, reranker) = law.resolve()?;
            let query = LawQuery { generator, reranker, target, n_cap };
            let report = min_n_for_target(&query)?.report(n_cap);
            let json = serde_json::to_string_pretty(&report).map_err(rerank_core::Error::from)?;
            write_text(output.as_deref(), &(json + "\n"))
        }
        Command::Marginals { reranker, n, output } => {
            let eta = reranker.resolve()?.marginals(n)?;
            let mut text = String::from("j,eta\n");
            for (j, v) in eta.as_slice().iter().enumerate() {
                text.push_str(&format!("{},{}\n", j + 1, fmt_f64(*v)));
            }
            write_text(output.as_deref(), &text)
        }
    }
}

/// Flag tokens for a `--config` object, in key order.
fn config_tokens(path: &Path) -> Result<Vec<OsString>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
    let serde_json::Value::Object(map) = value else {
        return Err(format!("config {} must hold a JSON object", path.display()));
    };
    let mut tokens = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            _ => Err(format!("config key `{key}`: expected a string or number")),
        };
        match &v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => tokens.push(flag.into()),
            serde_json::Value::Array(items) => {
                let items = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
                tokens.push(flag.into());
                tokens.push(items.join(",").into());
            }
            other => {
                tokens.push(flag.into());
                tokens.push(scalar(other)?.into());
            }
        }
    }
    Ok(tokens)
}

/// Splices `--config` defaults in right after the subcommand name so that
/// explicit flags, which come later, override them.
fn expand_config(mut args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut config = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--config" {
            if i + 1 >= args.len() {
                return Err("--config needs a path".into());
            }
            config = Some(PathBuf::from(args.remove(i + 1)));
            args.remove(i);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = config else { return Ok(args) };
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .ok_or("--config needs a subcommand")?;
    let tokens = config_tokens(&path)?;
    args.splice(at + 1..at + 1, tokens);
    Ok(args)
}

fn report(json: bool, kind: &str, message: &str) {
    if json {
        eprintln!("{}", serde_json::json!({ "error": { "kind": kind, "message": message } }));
    } else {
        eprintln!("error: {message}");
    }
}

fn main() -> ExitCode {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let json = raw.iter().any(|a| a == "--json-errors");
    let args = match expand_config(raw) {
        Ok(a) => a,
        Err(msg) => {
            report(json, "usage", &msg);
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if json && e.use_stderr() {
                report(true, "usage", e.to_string().trim_end());
                return ExitCode::from(2);
            }
            // Prints help/version to stdout (exit 0) or the usage error to stderr (exit 2).
            e.exit();
        }
    };
    let json = cli.json_errors;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            report(json, "usage", &msg);
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            report(json, e.kind(), &e.to_string());
            ExitCode::from(1)
        }
    }
}
