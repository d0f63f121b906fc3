//! Two-stage fit of a reranking law to failure curves: (α, β) from the
//! perfect-reranker curve, then (γ, e^{-λ}) from an imperfect one with
//! (α, β) held fixed.

mod lm;

pub use lm::{least_squares, least_squares_with, LeastSquaresResult, LmOptions};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{CurvePoint, FailureCurve};
use crate::error::{Error, Result};
use crate::laws::{perfect_beta_log_curve, BetaBinomialTable};
use crate::rank::zipf_mandelbrot_top1_marginals;

pub const STAGE1_ALPHA_STARTS: [f64; 4] = [0.05, 0.1, 0.5, 1.0];
pub const STAGE1_BETA_STARTS: [f64; 4] = [0.1, 0.3, 0.5, 1.0];
pub const STAGE1_BOUNDS: [(f64, f64); 2] = [(1e-4, 1e2), (1e-4, 1e2)];

pub const STAGE2_GAMMA_STARTS: [f64; 4] = [0.01, 0.2, 0.5, 0.99];
pub const STAGE2_E_NEG_LAMBDA_STARTS: [f64; 4] = [0.001, 0.01, 0.1, 0.5];
pub const STAGE2_BOUNDS: [(f64, f64); 2] = [(1e-3, 1.0), (1e-6, 1.0 - 1e-6)];

/// Fraction of a bounded range treated as touching the bound.
const BOUNDARY_FRACTION: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub e_neg_lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    /// Weight each log residual by sqrt(trials); analytic points get weight 1.
    pub weight_by_trials: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_points_used: usize,
    pub n_points_dropped: usize,
    pub multistart_best_index: usize,
    /// Names of parameters that ended on a bound, e.g. `"e_neg_lambda:lower"`.
    pub boundary_hits: Vec<String>,
}

/// One multistart run.
#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub initial: [f64; 2],
    pub solution: [f64; 2],
    pub residual_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageFit {
    pub params: [f64; 2],
    pub report: StageReport,
    pub starts: Vec<StartOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub alpha: f64,
    pub beta: f64,
    /// 1 when stage 2 was not run.
    pub gamma: f64,
    /// 0 (perfect reranker) when stage 2 was not run.
    pub e_neg_lambda: f64,
    pub stage1: StageReport,
    pub stage2: Option<StageReport>,
    /// Winning start of the last stage that ran.
    pub multistart_best_index: usize,
}

impl FitReport {
    pub fn params(&self) -> LawParams {
        LawParams { alpha: self.alpha, beta: self.beta, gamma: self.gamma, e_neg_lambda: self.e_neg_lambda }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Points with a positive failure rate, as (n, ln rate, weight).
struct Target {
    points: Vec<(u64, f64, f64)>,
    dropped: usize,
}

impl Target {
    fn new(curve: &FailureCurve, options: &FitOptions) -> Result<Self> {
        let usable: Vec<&CurvePoint> = curve.points().iter().filter(|p| p.failure_rate > 0.0 || p.log10_failure_rate.is_finite()).collect();
        let dropped = curve.len() - usable.len();
        if usable.len() < 2 {
            return Err(Error::Underdetermined(format!(
                "need at least 2 points with a positive failure rate, have {}",
                usable.len()
            )));
        }
        let points = usable
            .iter()
            .map(|p| {
                let w = if options.weight_by_trials && p.trials > 0 { (p.trials as f64).sqrt() } else { 1.0 };
                (p.n, p.ln_failure_rate(), w)
            })
            .collect();
        Ok(Self { points, dropped })
    }

    fn n_max(&self) -> u64 {
        self.points.last().map_or(0, |p| p.0)
    }
}

/// Weighted log residuals log P_model(n_i) - log f_i for a perfect reranker.
pub fn stage1_residuals(curve: &FailureCurve, alpha: f64, beta: f64, options: &FitOptions) -> Result<Vec<f64>> {
    let target = Target::new(curve, options)?;
    Ok(perfect_residuals(&target, alpha, beta))
}

fn perfect_residuals(target: &Target, alpha: f64, beta: f64) -> Vec<f64> {
    match perfect_beta_log_curve(alpha, beta, target.n_max()) {
        Ok(model) => target.points.iter().map(|&(n, ln_f, w)| w * (model[n as usize - 1] - ln_f)).collect(),
        Err(_) => vec![f64::NAN; target.points.len()],
    }
}

fn imperfect_residuals(target: &Target, table: &BetaBinomialTable, gamma: f64, e_neg_lambda: f64) -> Vec<f64> {
    let lambda = -e_neg_lambda.ln();
    target
        .points
        .iter()
        .map(|&(n, ln_f, w)| {
            let model = zipf_mandelbrot_top1_marginals(lambda, gamma, n as usize).and_then(|m| table.p_err(&m));
            match model {
                Ok(p) => w * (p.ln() - ln_f),
                Err(_) => f64::NAN,
            }
        })
        .collect()
}

fn boundary_hits(names: [&str; 2], values: [f64; 2], bounds: [(f64, f64); 2]) -> Vec<String> {
    let mut hits = Vec::new();
    for i in 0..2 {
        let (lo, hi) = bounds[i];
        let tol = BOUNDARY_FRACTION * (hi - lo);
        if values[i] - lo <= tol {
            hits.push(format!("{}:lower", names[i]));
        } else if hi - values[i] <= tol {
            hits.push(format!("{}:upper", names[i]));
        }
    }
    hits
}

fn multistart<F>(
    residuals: F,
    starts: Vec<[f64; 2]>,
    bounds: [(f64, f64); 2],
    names: [&str; 2],
    target: &Target,
) -> Result<StageFit>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let lower = [bounds[0].0, bounds[1].0];
    let upper = [bounds[0].1, bounds[1].1];
    let runs: Vec<Result<LeastSquaresResult>> =
        starts.par_iter().map(|x0| least_squares(&residuals, x0, &lower, &upper)).collect();

    let mut outcomes = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, &LeastSquaresResult)> = None;
    let mut last_err = None;
    for (i, run) in runs.iter().enumerate() {
        match run {
            Ok(res) => {
                outcomes.push(StartOutcome {
                    initial: starts[i],
                    solution: [res.solution[0], res.solution[1]],
                    residual_norm: res.residual_norm,
                    converged: res.converged,
                });
                if best.is_none_or(|(_, b)| res.residual_norm < b.residual_norm) {
                    best = Some((i, res));
                }
            }
            Err(e) => last_err = Some(e.to_string()),
        }
    }
    let (index, res) = best.ok_or_else(|| {
        Error::Fit(format!("every multistart failed: {}", last_err.unwrap_or_default()))
    })?;
    let params = [res.solution[0], res.solution[1]];
    Ok(StageFit {
        params,
        report: StageReport {
            residual_norm: res.residual_norm,
            iterations: res.iterations,
            converged: res.converged,
            n_points_used: target.points.len(),
            n_points_dropped: target.dropped,
            multistart_best_index: index,
            boundary_hits: boundary_hits(names, params, bounds),
        },
        starts: outcomes,
    })
}

fn grid(a: &[f64], b: &[f64]) -> Vec<[f64; 2]> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| [x, y])).collect()
}

/// Fit (α, β) to the perfect-reranker curve. `params` is `[alpha, beta]`.
pub fn fit_stage1(oracle_curve: &FailureCurve, options: &FitOptions) -> Result<StageFit> {
    let target = Target::new(oracle_curve, options)?;
    multistart(
        |x| perfect_residuals(&target, x[0], x[1]),
        grid(&STAGE1_ALPHA_STARTS, &STAGE1_BETA_STARTS),
        STAGE1_BOUNDS,
        ["alpha", "beta"],
        &target,
    )
}

/// Fit (γ, e^{-λ}) with (α, β) frozen. `params` is `[gamma, e_neg_lambda]`.
pub fn fit_stage2(imperfect_curve: &FailureCurve, alpha: f64, beta: f64, options: &FitOptions) -> Result<StageFit> {
    let target = Target::new(imperfect_curve, options)?;
    let table = BetaBinomialTable::new(alpha, beta, target.n_max())?;
    multistart(
        |x| imperfect_residuals(&target, &table, x[0], x[1]),
        grid(&STAGE2_GAMMA_STARTS, &STAGE2_E_NEG_LAMBDA_STARTS),
        STAGE2_BOUNDS,
        ["gamma", "e_neg_lambda"],
        &target,
    )
}

pub fn fit_law(oracle_curve: &FailureCurve, imperfect_curve: Option<&FailureCurve>, options: &FitOptions) -> Result<FitReport> {
    let s1 = fit_stage1(oracle_curve, options)?;
    let [alpha, beta] = s1.params;
    let Some(curve) = imperfect_curve else {
        return Ok(FitReport {
            alpha,
            beta,
            gamma: 1.0,
            e_neg_lambda: 0.0,
            multistart_best_index: s1.report.multistart_best_index,
            stage1: s1.report,
            stage2: None,
        });
    };
    let s2 = fit_stage2(curve, alpha, beta, options)?;
    let [gamma, e_neg_lambda] = s2.params;
    Ok(FitReport {
        alpha,
        beta,
        gamma,
        e_neg_lambda,
        multistart_best_index: s2.report.multistart_best_index,
        stage1: s1.report,
        stage2: Some(s2.report),
    })
}
