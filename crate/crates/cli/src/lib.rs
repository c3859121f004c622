#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! File formats, run configuration and subcommand bodies for the `stein`
//! binary.

pub mod config;
pub mod error;
pub mod io;
pub mod spec;

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use stein_core::discrepancy::DiscrepancyReport;
use stein_core::operators::SteinOperator;
use stein_core::solver::solve_stein;
use stein_core::{
    construct_diffusion_coefficients, independence_test, sample_scenario, simulate_sde, JointSampleSet,
    OperatorChoice, Scenario, TargetDistribution, TestFunction, Verdict,
};

pub use config::RunConfig;
pub use error::CliError;
pub use spec::TargetSpec;

/// Points in the coefficient and solution tables.
pub const GRID_POINTS: usize = 512;

/// Probabilities `(i + 1/2) / 512` mapped through the target quantile.
pub fn quantile_grid(target: &TargetDistribution) -> Vec<f64> {
    (0..GRID_POINTS)
        .map(|i| target.quantile((i as f64 + 0.5) / GRID_POINTS as f64))
        .collect()
}

/// `(x, a(x), b(x))` rows.
pub fn construct_table(target: &TargetDistribution, theta: f64) -> Result<Vec<[f64; 3]>, CliError> {
    let c = construct_diffusion_coefficients(target, theta)?;
    quantile_grid(target)
        .into_iter()
        .map(|x| {
            let (a, b) = c.eval(x)?;
            Ok([x, a, b])
        })
        .collect()
}

/// Right-hand side of the Stein equation for `solve`.
#[derive(Debug, Clone)]
pub enum TestSpec {
    Indicator { lo: f64, hi: f64 },
    Expression(String),
}

impl TestSpec {
    pub fn build(&self, target: &TargetDistribution) -> Result<TestFunction, CliError> {
        match self {
            TestSpec::Indicator { lo, hi } => {
                if !(lo < hi) {
                    return Err(CliError::new("INVALID_ARGUMENT", format!("need lo < hi, got ({lo}, {hi}]")));
                }
                Ok(TestFunction::indicator(*lo, *hi))
            }
            TestSpec::Expression(e) => {
                let f = spec::compile_expression(e)?;
                Ok(TestFunction::new(e.clone(), target.support(), move |x| f(x)))
            }
        }
    }
}

pub fn operator_for(target: &TargetDistribution, choice: OperatorChoice, theta: f64) -> Result<SteinOperator, CliError> {
    let gaussian = match choice {
        OperatorChoice::Gaussian => true,
        OperatorChoice::Diffusion => false,
        OperatorChoice::Auto => target.is_standard_normal(),
    };
    Ok(if gaussian {
        SteinOperator::gaussian(Arc::new(target.clone()))?
    } else {
        SteinOperator::diffusion(construct_diffusion_coefficients(target, theta)?)
    })
}

/// `(x, h, f, f', 𝒩f)` rows of the certified solution.
pub fn solve_table(op: &SteinOperator, h: &TestFunction) -> Result<Vec<[f64; 5]>, CliError> {
    let sol = solve_stein(op, h, None)?;
    quantile_grid(op.target())
        .into_iter()
        .map(|x| {
            let (f, df) = sol.jet(x)?;
            Ok([x, h.value(x), f, df, sol.apply_operator(x)?])
        })
        .collect()
}

/// Report JSON: the estimator output followed by the effective config.
#[derive(Debug, Serialize)]
pub struct TestReport<'a> {
    #[serde(flatten)]
    pub report: &'a DiscrepancyReport,
    pub n: usize,
    pub seed: u64,
    pub config: &'a RunConfig,
}

pub fn run_test(samples: &JointSampleSet, cfg: &RunConfig) -> Result<DiscrepancyReport, CliError> {
    let target = cfg.target.build()?;
    Ok(independence_test(samples, &target, &cfg.test_config())?)
}

pub fn report_json(report: &DiscrepancyReport, n: usize, cfg: &RunConfig) -> Result<String, CliError> {
    let out = TestReport {
        report,
        n,
        seed: cfg.seed,
        config: cfg,
    };
    let mut s = serde_json::to_string_pretty(&out).map_err(|e| CliError::new("INTERNAL", e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn exit_code(v: Verdict) -> u8 {
    match v {
        Verdict::Consistent => 0,
        Verdict::Inconsistent => 1,
        Verdict::Inconclusive => 3,
    }
}

/// Simulated path values labelled with their path index.
pub fn run_simulate(cfg: &RunConfig) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let target = cfg.target.build()?;
    let sim = cfg.sim_config();
    sim.validate(target.support())
        .map_err(|e| CliError::new("SIM_CONFIG", e.to_string()))?;
    let coeffs = construct_diffusion_coefficients(&target, cfg.theta())?;
    let xs = simulate_sde(&coeffs, &sim)?;
    let ys = sim
        .path_lengths()
        .into_iter()
        .enumerate()
        .flat_map(|(p, len)| std::iter::repeat(p as f64).take(len))
        .collect();
    Ok((xs, ys))
}

pub fn run_scenario(scenario: &Scenario, n: usize, seed: u64) -> Result<JointSampleSet, CliError> {
    Ok(sample_scenario(scenario, n, seed)?)
}

pub fn read_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = io::read_text(p)?;
            RunConfig::from_json(&text)
        }
    }
}
