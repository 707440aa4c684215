//! Reproducible experiment runs: configuration, solve, analysis report and
//! multi-precision comparison.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    audit_residual_ratio, estimate_floor, gap_report, scan_trace, FloorEstimate, GapReport,
    MonotonicityReport, RatioAudit,
};
use crate::cg::{run_cg_with, CgProblem, CgRunResult, RunOptions};
use crate::criteria::{CriteriaSet, GinsburgExponent, StoppingVerdict, VerdictKind};
use crate::error::{Error, Result};
use crate::io::{read_matrix_market, read_vector_market, write_plot_columns, write_trace, TRACE_COLUMNS};
use crate::linalg::{norm2, DenseVector, SpectralInfo};
use crate::par::map_runs;
use crate::problems::{generate, Family, GeneratorSpec};
use crate::rounding::RoundingModel;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "CGLAB_SEED";

/// How the right-hand side of a Matrix Market problem is obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RhsSource {
    /// `b = (1, …, 1)`; no reference solution.
    Ones,
    /// `x* = (1, …, 1)` and `b = A x*` accumulated in double-double.
    UnitSolution,
    /// A Matrix Market `array real general` vector file.
    File(PathBuf),
}

impl FromStr for RhsSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "" => Err(Error::usage("field `rhs`: empty value")),
            "ones" => Ok(RhsSource::Ones),
            "unit-solution" => Ok(RhsSource::UnitSolution),
            path => Ok(RhsSource::File(PathBuf::from(path))),
        }
    }
}

impl fmt::Display for RhsSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhsSource::Ones => f.write_str("ones"),
            RhsSource::UnitSolution => f.write_str("unit-solution"),
            RhsSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl TryFrom<String> for RhsSource {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RhsSource> for String {
    fn from(r: RhsSource) -> String {
        r.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSource {
    Generated { generator: Family },
    MatrixMarket { matrix: PathBuf, rhs: RhsSource },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub plot_cols: Vec<String>,
}

fn default_cadence() -> usize {
    1
}

/// Everything needed to reproduce a run. Round-trips through JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub precision: RoundingModel,
    pub criteria: CriteriaSet,
    #[serde(default)]
    pub ginsburg_exponent: GinsburgExponent,
    pub max_iters: usize,
    #[serde(default = "default_cadence")]
    pub true_residual_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: OutputPaths,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSource, precision: RoundingModel, criteria: CriteriaSet, max_iters: usize) -> Self {
        ExperimentConfig {
            problem,
            precision,
            criteria,
            ginsburg_exponent: GinsburgExponent::default(),
            max_iters,
            true_residual_every: 1,
            seed: 0,
            outputs: OutputPaths::default(),
        }
    }

    pub fn generated(family: Family, precision: RoundingModel, criteria: CriteriaSet, max_iters: usize) -> Self {
        Self::new(ProblemSource::Generated { generator: family }, precision, criteria, max_iters)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Rejects configurations that cannot run; the message names the field.
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::usage("field `max_iters`: must be at least 1"));
        }
        if self.true_residual_every == 0 {
            return Err(Error::usage("field `true_residual_every`: must be at least 1"));
        }
        if let ProblemSource::Generated { generator } = &self.problem {
            if generator.order() == 0 {
                return Err(Error::usage("field `problem.generator`: order must be positive"));
            }
        }
        let outs = &self.outputs;
        if outs.plot.is_some() && outs.plot_cols.is_empty() {
            return Err(Error::usage("field `outputs.plot_cols`: required when a plot file is set"));
        }
        if let Some(bad) = outs.plot_cols.iter().find(|c| !TRACE_COLUMNS.contains(&c.as_str())) {
            return Err(Error::usage(format!(
                "field `outputs.plot_cols`: unknown column {bad:?} (expected one of {})",
                TRACE_COLUMNS.join(",")
            )));
        }
        Ok(())
    }

    /// Applies [`SEED_ENV`] when it is set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Some(seed) = seed_from_env()? {
            self.seed = seed;
        }
        Ok(())
    }

    pub fn criteria_set(&self) -> CriteriaSet {
        self.criteria.clone().with_ginsburg_exponent(self.ginsburg_exponent)
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            max_iters: self.max_iters,
            true_residual_every: self.true_residual_every,
        }
    }
}

pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::usage(format!("{SEED_ENV}: expected an unsigned integer, got {v:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::usage(format!("{SEED_ENV}: {e}"))),
    }
}

/// A loaded problem plus whatever is known about its spectrum.
#[derive(Clone, Debug)]
pub struct LoadedProblem {
    pub problem: CgProblem,
    pub spectrum: Option<SpectralInfo>,
}

pub fn load_problem(config: &ExperimentConfig) -> Result<LoadedProblem> {
    match &config.problem {
        ProblemSource::Generated { generator } => {
            let g = generate(GeneratorSpec::new(*generator, config.seed))?;
            Ok(LoadedProblem {
                problem: g.problem,
                spectrum: g.spectrum,
            })
        }
        ProblemSource::MatrixMarket { matrix, rhs } => {
            let a = read_matrix_market(matrix)?;
            let n = a.order();
            let problem = match rhs {
                RhsSource::Ones => CgProblem::from_rhs(a, DenseVector::filled(n, 1.0)?, None)?,
                RhsSource::UnitSolution => {
                    let xstar = DenseVector::filled(n, 1.0)?;
                    let b = DenseVector::new(a.apply_extended(xstar.as_slice()))?;
                    CgProblem::from_rhs(a, b, Some(xstar))?
                }
                RhsSource::File(p) => {
                    let b = read_vector_market(p)?;
                    if b.len() != n {
                        return Err(Error::usage(format!(
                            "field `rhs`: vector has {} entries, matrix order is {n}",
                            b.len()
                        )));
                    }
                    CgProblem::from_rhs(a, b, None)?
                }
            };
            let spectrum = problem.matrix.known_spectrum();
            Ok(LoadedProblem { problem, spectrum })
        }
    }
}

/// Runs CG; a breakdown is turned into its partial result.
pub fn run_problem(problem: &CgProblem, model: RoundingModel, config: &ExperimentConfig) -> Result<CgRunResult> {
    match run_cg_with(problem, model, &config.criteria_set(), config.run_options()) {
        Ok(r) => Ok(r),
        Err(Error::Breakdown { partial, .. }) => Ok(*partial),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProblemSection {
    pub source: String,
    pub order: usize,
    pub nnz: usize,
    pub spectrum: Option<SpectralInfo>,
    pub bnorm: f64,
    pub has_reference_solution: bool,
    /// The exact configuration that produced this report.
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecisionSection {
    pub model: RoundingModel,
    pub bits: u32,
    pub eps_m: f64,
}

impl From<RoundingModel> for PrecisionSection {
    fn from(m: RoundingModel) -> Self {
        PrecisionSection {
            model: m,
            bits: m.bits(),
            eps_m: m.eps_m(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriteriaSection {
    pub active: CriteriaSet,
    pub ginsburg_exponent: GinsburgExponent,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerdictSection {
    #[serde(flatten)]
    pub verdict: StoppingVerdict,
    pub stop_index: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FloorSection {
    pub available: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(flatten)]
    pub estimate: Option<FloorEstimate>,
}

/// Full analysis of one run, serialized as the report document.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub problem: ProblemSection,
    pub precision: PrecisionSection,
    pub criteria: CriteriaSection,
    pub verdict: VerdictSection,
    pub monotonicity: Vec<MonotonicityReport>,
    pub floor: FloorSection,
    pub ratio_audit: RatioAudit,
    pub gap: GapReport,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn analyze(config: &ExperimentConfig, loaded: &LoadedProblem, run: &CgRunResult) -> Report {
    let problem = &loaded.problem;
    let eps = run.model.eps_m();
    let floor = match estimate_floor(problem, run) {
        Ok(est) => FloorSection {
            available: true,
            reason: None,
            estimate: Some(est),
        },
        Err(e) => FloorSection {
            available: false,
            reason: Some(e.to_string()),
            estimate: None,
        },
    };
    let source = match &config.problem {
        ProblemSource::Generated { generator } => generator.to_string(),
        ProblemSource::MatrixMarket { matrix, .. } => matrix.display().to_string(),
    };
    Report {
        problem: ProblemSection {
            source,
            order: problem.order(),
            nnz: problem.matrix.nnz(),
            spectrum: loaded.spectrum,
            bnorm: norm2(problem.rhs.as_slice()),
            has_reference_solution: problem.reference_solution.is_some(),
            config: config.clone(),
        },
        precision: run.model.into(),
        criteria: CriteriaSection {
            active: config.criteria.clone(),
            ginsburg_exponent: config.ginsburg_exponent,
        },
        verdict: VerdictSection {
            verdict: run.verdict.clone(),
            stop_index: run.stop_index,
        },
        monotonicity: scan_trace(&run.trace, eps),
        floor,
        ratio_audit: audit_residual_ratio(&run.trace, eps),
        gap: gap_report(&run.trace),
    }
}

/// Process exit status for a verdict: 0 when a criterion stopped the run,
/// 2 when the iteration cap was reached, 3 on breakdown.
pub fn exit_code(kind: VerdictKind) -> i32 {
    match kind {
        VerdictKind::Exhausted => 2,
        VerdictKind::Breakdown => 3,
        _ => 0,
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub run: CgRunResult,
    pub report: Report,
}

impl SolveOutcome {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.run.verdict.kind)
    }
}

/// Runs and analyzes a configuration without writing any file.
pub fn solve(config: &ExperimentConfig) -> Result<SolveOutcome> {
    config.validate()?;
    let loaded = load_problem(config)?;
    let run = run_problem(&loaded.problem, config.precision, config)?;
    let report = analyze(config, &loaded, &run);
    Ok(SolveOutcome { run, report })
}

/// Writes the trace, report and plot files named in the configuration.
pub fn write_outputs(outputs: &OutputPaths, outcome: &SolveOutcome) -> Result<()> {
    if let Some(p) = &outputs.trace {
        write_trace(&outcome.run.trace, p)?;
    }
    if let Some(p) = &outputs.report {
        std::fs::write(p, outcome.report.to_json()).map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = &outputs.plot {
        write_plot_columns(&outcome.run.trace, &outputs.plot_cols, p)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub precision: RoundingModel,
    pub eps_m: f64,
    pub verdict: VerdictKind,
    pub stop_index: usize,
    pub floor_norm: Option<f64>,
    pub stagnation_index: Option<usize>,
    pub crossover: Option<usize>,
    /// `floor_norm` divided by the first row's `floor_norm`.
    pub floor_ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub config: ExperimentConfig,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Solves one problem under several precisions, concurrently when the
/// `parallel` feature is on. The problem is built once from the config and
/// seed, so every row sees the same matrix and right-hand side.
pub fn compare(config: &ExperimentConfig, precisions: &[RoundingModel]) -> Result<(CompareReport, Vec<SolveOutcome>)> {
    if precisions.len() < 2 {
        return Err(Error::usage(format!(
            "field `precisions`: need at least 2, got {}",
            precisions.len()
        )));
    }
    config.validate()?;
    let loaded = load_problem(config)?;
    let outcomes = map_runs(precisions, |&m| -> Result<SolveOutcome> {
        let mut cfg = config.clone();
        cfg.precision = m;
        let run = run_problem(&loaded.problem, m, &cfg)?;
        let report = analyze(&cfg, &loaded, &run);
        Ok(SolveOutcome { run, report })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let floors: Vec<Option<&FloorEstimate>> =
        outcomes.iter().map(|o| o.report.floor.estimate.as_ref()).collect();
    let base = floors[0].map(|f| f.floor_norm);
    let rows = outcomes
        .iter()
        .zip(&floors)
        .map(|(o, f)| CompareRow {
            precision: o.run.model,
            eps_m: o.run.model.eps_m(),
            verdict: o.run.verdict.kind,
            stop_index: o.run.stop_index,
            floor_norm: f.map(|f| f.floor_norm),
            stagnation_index: f.map(|f| f.stagnation_index),
            crossover: o.report.gap.crossover,
            floor_ratio: match (f, base) {
                (Some(f), Some(b)) if b > 0.0 => Some(f.floor_norm / b),
                _ => None,
            },
        })
        .collect();
    Ok((
        CompareReport {
            config: config.clone(),
            rows,
        },
        outcomes,
    ))
}

/// `dir/name.ext` becomes `dir/name.<index>.ext`.
pub fn indexed_path(path: &Path, index: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{index}"),
    };
    path.with_file_name(name)
}

/// Per-precision traces go to indexed copies of the trace and plot paths;
/// the consolidated report replaces the single-run report.
pub fn write_compare_outputs(outputs: &OutputPaths, report: &CompareReport, outcomes: &[SolveOutcome]) -> Result<()> {
    for (i, o) in outcomes.iter().enumerate() {
        let per_run = OutputPaths {
            trace: outputs.trace.as_deref().map(|p| indexed_path(p, i)),
            report: None,
            plot: outputs.plot.as_deref().map(|p| indexed_path(p, i)),
            plot_cols: outputs.plot_cols.clone(),
        };
        write_outputs(&per_run, o)?;
    }
    if let Some(p) = &outputs.report {
        std::fs::write(p, report.to_json()).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::generated(
            Family::DiagGeometric { kappa: 1e4, n: 30 },
            RoundingModel::Double,
            "relres:1e-10".parse().unwrap(),
            200,
        )
    }

    #[test]
    fn config_json_round_trip() {
        let mut c = small_config();
        c.ginsburg_exponent = GinsburgExponent::KOverNSquared;
        c.seed = 99;
        c.outputs.trace = Some("t.csv".into());
        c.outputs.plot_cols = vec!["k".into(), "rnorm".into()];
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);

        let mm = ExperimentConfig::new(
            ProblemSource::MatrixMarket {
                matrix: "m.mtx".into(),
                rhs: RhsSource::UnitSolution,
            },
            RoundingModel::simulated(24).unwrap(),
            CriteriaSet::none(),
            10,
        );
        assert_eq!(ExperimentConfig::from_json(&mm.to_json()).unwrap(), mm);
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = small_config();
        c.max_iters = 0;
        assert!(c.validate().unwrap_err().to_string().contains("max_iters"));
        let mut c = small_config();
        c.outputs.plot = Some("p.csv".into());
        assert!(c.validate().unwrap_err().to_string().contains("plot_cols"));
        c.outputs.plot_cols = vec!["nope".into()];
        assert!(c.validate().unwrap_err().to_string().contains("plot_cols"));
        let err = ExperimentConfig::from_json(r#"{"problem":{"kind":"generated","generator":"diag-geometric:10:5"},"precision":"p:99","criteria":"","max_iters":5}"#)
            .unwrap_err();
        assert!(err.to_string().contains("config"));
    }

    #[test]
    fn report_has_exactly_the_documented_sections() {
        let out = solve(&small_config()).unwrap();
        assert_eq!(out.run.verdict.kind, VerdictKind::Relres);
        assert_eq!(out.exit_code(), 0);
        let v: serde_json::Value = serde_json::from_str(&out.report.to_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = vec![
            "problem", "precision", "criteria", "verdict", "monotonicity", "floor", "ratio_audit", "gap",
        ];
        expected.sort();
        let mut keys_sorted = keys.clone();
        keys_sorted.sort();
        assert_eq!(keys_sorted, expected);
        let embedded: ExperimentConfig = serde_json::from_value(v["problem"]["config"].clone()).unwrap();
        assert_eq!(embedded, small_config());
    }

    #[test]
    fn exhausted_maps_to_exit_two() {
        let mut c = small_config();
        c.criteria = CriteriaSet::none();
        c.max_iters = 3;
        assert_eq!(solve(&c).unwrap().exit_code(), 2);
        assert_eq!(exit_code(VerdictKind::Breakdown), 3);
        assert_eq!(exit_code(VerdictKind::Stagnation), 0);
    }

    #[test]
    fn compare_needs_two_precisions() {
        assert!(compare(&small_config(), &[RoundingModel::Double]).is_err());
        let (rep, outs) = compare(&small_config(), &[RoundingModel::Double, RoundingModel::Double]).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(outs[0].run.trace, outs[1].run.trace);
    }

    #[test]
    fn indexed_paths() {
        assert_eq!(indexed_path(Path::new("out/t.csv"), 1), PathBuf::from("out/t.1.csv"));
        assert_eq!(indexed_path(Path::new("trace"), 0), PathBuf::from("trace.0"));
    }
}
