#![allow(clippy::neg_cmp_op_on_partial_ord)]
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stein_cli::io::{csv_table, emit, read_samples, samples_csv};
use stein_cli::{
    construct_table, exit_code, operator_for, read_config, report_json, run_scenario, run_simulate, run_test,
    solve_table, CliError, RunConfig, TargetSpec, TestSpec,
};
use stein_core::discrepancy::DiscrepancyKind;
use stein_core::{OperatorChoice, Scenario};

#[derive(Parser, Debug)]
#[command(name = "stein", version, about = "Stein-operator tools for target laws and joint independence")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Ptv,
    Tv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OperatorArg {
    Auto,
    Gaussian,
    Diffusion,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate x, a(x), b(x) on a 512-point quantile grid.
    Construct {
        /// Target spec file; the config's target when absent.
        target: Option<PathBuf>,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Tabulate the certified Stein solution for an indicator or formula.
    Solve {
        target: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value = "-inf")]
        lo: f64,
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        hi: f64,
        /// Bounded test function of x, instead of the indicator of (lo, hi].
        #[arg(long, conflicts_with_all = ["lo", "hi"])]
        expr: Option<String>,
        #[arg(long, value_enum, default_value = "auto")]
        operator: OperatorArg,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Test the samples against "X ~ target and X independent of Y".
    Test {
        /// CSV with columns x,y.
        samples: PathBuf,
        /// Target spec file overriding the config's target.
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Simulate the diffusion whose stationary law is the target.
    Simulate {
        target: Option<PathBuf>,
        #[arg(long)]
        n_out: Option<usize>,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Draw samples from a named joint law.
    Scenario {
        /// independent-null, mean-shift, sign-coupled, correlated-gaussian or countable-mixture.
        name: Option<String>,
        /// Positional parameters, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Vec<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("STEIN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::new("ENV", format!("STEIN_THREADS must be a non-negative integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new("ENV", e.to_string()))
}

fn load_target(cfg: &mut RunConfig, path: Option<&Path>) -> Result<(), CliError> {
    if let Some(p) = path {
        cfg.target = TargetSpec::load(p)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, CliError> {
    init_threads()?;
    let mut cfg = read_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = Some(o);
    }
    if let Some(m) = cli.mode {
        cfg.mode = match m {
            Mode::Ptv => DiscrepancyKind::Ptv,
            Mode::Tv => DiscrepancyKind::Tv,
        };
    }
    if let Some(a) = cli.alpha {
        cfg.alpha = a;
    }
    match cli.command {
        Command::Construct { target, theta } => {
            load_target(&mut cfg, target.as_deref())?;
            cfg.theta = theta.or(cfg.theta);
            cfg.validate()?;
            let t = cfg.target.build()?;
            let rows = construct_table(&t, cfg.theta())?;
            emit(cfg.out.as_deref(), &csv_table(["x", "a", "b"], rows))?;
            Ok(0)
        }
        Command::Solve {
            target,
            lo,
            hi,
            expr,
            operator,
            theta,
        } => {
            load_target(&mut cfg, target.as_deref())?;
            cfg.theta = theta.or(cfg.theta);
            cfg.operator = match operator {
                OperatorArg::Auto => OperatorChoice::Auto,
                OperatorArg::Gaussian => OperatorChoice::Gaussian,
                OperatorArg::Diffusion => OperatorChoice::Diffusion,
            };
            cfg.validate()?;
            let t = cfg.target.build()?;
            let op = operator_for(&t, cfg.operator, cfg.theta())?;
            let h = match expr {
                Some(e) => TestSpec::Expression(e),
                None => TestSpec::Indicator { lo, hi },
            }
            .build(&t)?;
            let rows = solve_table(&op, &h)?;
            emit(cfg.out.as_deref(), &csv_table(["x", "h", "f", "df", "stein"], rows))?;
            Ok(0)
        }
        Command::Test { samples, target } => {
            load_target(&mut cfg, target.as_deref())?;
            cfg.validate()?;
            let s = read_samples(&samples)?;
            let report = run_test(&s, &cfg)?;
            emit(cfg.out.as_deref(), &report_json(&report, s.n(), &cfg)?)?;
            Ok(exit_code(report.verdict))
        }
        Command::Simulate { target, n_out, paths } => {
            load_target(&mut cfg, target.as_deref())?;
            if n_out.is_some() || paths.is_some() {
                let mut sim = cfg.sim.unwrap_or_default();
                sim.n_out = n_out.unwrap_or(sim.n_out);
                sim.paths = paths.unwrap_or(sim.paths);
                cfg.sim = Some(sim);
            }
            cfg.validate()?;
            let (xs, ys) = run_simulate(&cfg)?;
            emit(cfg.out.as_deref(), &samples_csv(&xs, &ys))?;
            Ok(0)
        }
        Command::Scenario { name, params, n } => {
            if let Some(name) = name {
                cfg.scenario = Some(Scenario::from_name(&name, &params)?);
            } else if !params.is_empty() {
                return Err(CliError::new("INVALID_ARGUMENT", "--params needs a scenario name"));
            }
            cfg.n = n.unwrap_or(cfg.n);
            cfg.validate()?;
            let scenario = cfg
                .scenario
                .clone()
                .ok_or_else(|| CliError::new("INVALID_ARGUMENT", "no scenario named on the command line or in the config"))?;
            let s = run_scenario(&scenario, cfg.n, cfg.seed)?;
            emit(cfg.out.as_deref(), &samples_csv(s.xs(), s.ys()))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::new("USAGE", e.render().to_string().trim_end()).to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
