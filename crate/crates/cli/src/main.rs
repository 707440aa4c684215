use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use cglab::experiment::{
    compare, solve, write_compare_outputs, write_outputs, ExperimentConfig, ProblemSource, RhsSource,
};
use cglab::verify::{run_suite, Suite};
use cglab::{CriteriaSet, Family, GinsburgExponent, RoundingModel};

/// Exit status for invalid arguments or configuration.
const EXIT_USAGE: u8 = 1;
/// Exit status when a verification suite reports failures.
const EXIT_SUITE_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "cglab", version, about = "Instrumented conjugate gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write its trace, report and plot columns.
    ///
    /// Exits 0 when a stopping criterion fired, 2 when the iteration cap
    /// was reached and 3 on breakdown.
    Solve(ProblemArgs),
    /// Solve one problem under several precisions.
    Compare {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Comma-separated precisions, at least two (e.g. double,p:24).
        #[arg(long, value_delimiter = ',')]
        precisions: Vec<String>,
    },
    /// Run a canned verification suite and print a JSON summary.
    Verify {
        /// oracle, monotonicity or theorem5
        suite: String,
    },
}

#[derive(Args)]
struct ProblemArgs {
    /// JSON experiment config; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator spec, e.g. diag-geometric:1e8:100.
    #[arg(long, conflicts_with = "matrix")]
    gen: Option<String>,
    /// Matrix Market file holding a real symmetric matrix.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Right-hand side for --matrix: ones, unit-solution or a vector file.
    #[arg(long)]
    rhs: Option<String>,
    /// double or p:<bits>
    #[arg(long)]
    precision: Option<String>,
    /// Comma-separated: ginsburg, stagnation, relres:<tol>, collapse.
    #[arg(long)]
    criteria: Option<String>,
    /// 2k/n or (k/n)^2
    #[arg(long)]
    ginsburg_exponent: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    true_residual_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    plot_cols: Option<Vec<String>>,
}

const DEFAULT_MAX_ITERS: usize = 1000;

fn parse_field<T>(field: &str, value: &str) -> Result<T, String>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("field `{field}`: {e}"))
}

impl ProblemArgs {
    fn config(&self) -> Result<ExperimentConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
            None => {
                let problem = self.problem_source()?.ok_or_else(|| {
                    "field `problem`: one of --gen or --matrix is required (or --config)".to_string()
                })?;
                ExperimentConfig::new(problem, RoundingModel::Double, CriteriaSet::none(), DEFAULT_MAX_ITERS)
            }
        };
        if self.config.is_some() {
            if let Some(problem) = self.problem_source()? {
                cfg.problem = problem;
            }
        }
        if let Some(p) = &self.precision {
            cfg.precision = parse_field("precision", p)?;
        }
        if let Some(c) = &self.criteria {
            cfg.criteria = parse_field("criteria", c)?;
        }
        if let Some(g) = &self.ginsburg_exponent {
            cfg.ginsburg_exponent = parse_field::<GinsburgExponent>("ginsburg_exponent", g)?;
        }
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        if let Some(t) = self.true_residual_every {
            cfg.true_residual_every = t;
        }
        cfg.apply_seed_env().map_err(|e| e.to_string())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let outs = &mut cfg.outputs;
        if self.trace.is_some() {
            outs.trace.clone_from(&self.trace);
        }
        if self.report.is_some() {
            outs.report.clone_from(&self.report);
        }
        if self.plot.is_some() {
            outs.plot.clone_from(&self.plot);
        }
        if let Some(cols) = &self.plot_cols {
            outs.plot_cols.clone_from(cols);
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    fn problem_source(&self) -> Result<Option<ProblemSource>, String> {
        match (&self.gen, &self.matrix) {
            (Some(g), _) => {
                if self.rhs.is_some() {
                    return Err("field `rhs`: only valid with --matrix".into());
                }
                Ok(Some(ProblemSource::Generated {
                    generator: parse_field::<Family>("gen", g)?,
                }))
            }
            (None, Some(m)) => {
                let rhs = match &self.rhs {
                    Some(r) => parse_field::<RhsSource>("rhs", r)?,
                    None => RhsSource::UnitSolution,
                };
                Ok(Some(ProblemSource::MatrixMarket { matrix: m.clone(), rhs }))
            }
            (None, None) if self.rhs.is_some() => Err("field `rhs`: requires --matrix".into()),
            (None, None) => Ok(None),
        }
    }
}

fn cmd_solve(args: &ProblemArgs) -> Result<u8, String> {
    let cfg = args.config()?;
    let outcome = solve(&cfg).map_err(|e| e.to_string())?;
    write_outputs(&cfg.outputs, &outcome).map_err(|e| e.to_string())?;
    let r = &outcome.report;
    let floor = r
        .floor
        .estimate
        .as_ref()
        .map_or_else(|| "n/a".to_string(), |f| format!("{:e}", f.floor_norm));
    let crossover = r.gap.crossover.map_or_else(|| "none".to_string(), |k| k.to_string());
    println!(
        "verdict={} stop={} snorm={:e} rnorm={:e} floor={floor} crossover={crossover}",
        r.verdict.verdict.kind,
        r.verdict.stop_index,
        outcome.run.trace.last().map_or(f64::NAN, |t| t.snorm),
        outcome.run.trace.last().map_or(f64::NAN, |t| t.rnorm),
    );
    if r.verdict.verdict.kind == cglab::VerdictKind::Breakdown {
        eprintln!(
            "breakdown at iteration {}: matrix not positive definite or numerical breakdown",
            r.verdict.verdict.fired_at
        );
    }
    Ok(outcome.exit_code() as u8)
}

fn cmd_compare(args: &ProblemArgs, precisions: &[String]) -> Result<u8, String> {
    let cfg = args.config()?;
    let models = precisions
        .iter()
        .map(|p| parse_field::<RoundingModel>("precisions", p))
        .collect::<Result<Vec<_>, _>>()?;
    let (report, outcomes) = compare(&cfg, &models).map_err(|e| e.to_string())?;
    write_compare_outputs(&cfg.outputs, &report, &outcomes).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&report.rows).expect("rows serialize"));
    Ok(0)
}

fn cmd_verify(suite: &str) -> Result<u8, String> {
    let suite: Suite = suite.parse().map_err(|e: cglab::Error| e.to_string())?;
    let summary = run_suite(suite);
    println!("{}", summary.to_json());
    Ok(if summary.passed { 0 } else { EXIT_SUITE_FAILED })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Compare { problem, precisions } => cmd_compare(problem, precisions),
        Command::Verify { suite } => cmd_verify(suite),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
