//! The `igdebias` command line.
//!
//! Stages hand off through files: `analyze` writes a report, `plan` a plan
//! file, `rewrite` the debiased dataset plus an audit log. `verify` and
//! `report` recompute everything from the datasets they are given.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::backends::{BackendConfig, BackendKind};
use crate::corpus::{load_dataset, write_dataset, Dataset, Provenance, RecordSchema, Task};
use crate::features::{extract_all, Extractor, FeatureConfig, NegationLexicon};
use crate::infogain::{default_epsilon, goal_check, tabulate, FeatureReport};
use crate::intervene::{
    debias_with_plans, FeatureSummary, InterveneError, JsonlAudit, PipelineOptions, RewriteContext,
    DEFAULT_MAX_RETRIES, DEFAULT_MAX_ROUNDS,
};
use crate::planner::{plan, InterventionPlan, PlanError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_GOAL_UNMET: u8 = 3;

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn config(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        let code = match e {
            PlanError::Infeasible { .. } => EXIT_INFEASIBLE,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<InterveneError> for CliError {
    fn from(e: InterveneError) -> Self {
        match e {
            InterveneError::Plan(p) => p.into(),
            other => Self::config(other),
        }
    }
}

/// Every setting a command reads. Persisted as TOML with `--config`;
/// flags given on the command line take precedence over the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub audit: Option<PathBuf>,
    pub epsilon: Option<u64>,
    pub seed: u64,
    pub max_retries: u32,
    pub max_rounds: u32,
    pub concurrency: usize,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: None,
            schema: None,
            features: None,
            lexicon: None,
            plan: None,
            report: None,
            audit: None,
            epsilon: None,
            seed: 0,
            max_retries: DEFAULT_MAX_RETRIES,
            max_rounds: DEFAULT_MAX_ROUNDS,
            concurrency: 1,
            backend: BackendConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    fn require<'a>(&self, field: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        field
            .as_deref()
            .ok_or_else(|| CliError::config(format!("missing --{flag}")))
    }

    fn schema(&self) -> Result<RecordSchema, CliError> {
        match &self.schema {
            Some(p) => RecordSchema::load(p).map_err(CliError::config),
            None => Ok(RecordSchema::default()),
        }
    }

    fn feature_config(&self) -> Result<FeatureConfig, CliError> {
        match &self.features {
            Some(p) => FeatureConfig::load(p).map_err(CliError::config),
            None => Ok(FeatureConfig::default()),
        }
    }

    fn lexicon(&self) -> Result<NegationLexicon, CliError> {
        match &self.lexicon {
            Some(p) => NegationLexicon::load(p).map_err(CliError::config),
            None => Ok(NegationLexicon::default()),
        }
    }

    fn dataset(&self, path: &Path) -> Result<Dataset, CliError> {
        load_dataset(path, &self.schema()?).map_err(CliError::config)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "igdebias",
    version,
    about = "Measure and remove feature-answer dependence in instruction data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write per-feature dependence reports for a dataset.
    Analyze(Flags),
    /// Compute minimal rewrite plans and write them to --plan.
    Plan(Flags),
    /// Rewrite the dataset (from --plan if given) and write --output.
    Rewrite(Flags),
    /// Exit 0 iff every feature of --output (or --input) meets its goal.
    Verify(Flags),
    /// Compare --input and --output feature by feature.
    Report(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run config; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Field-name mapping for the record files (TOML).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Feature definitions (TOML); defaults to the bundled set.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Negation word list, one word per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Where to write the JSON report; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Audit log path; defaults to `<output>.audit.jsonl`.
    #[arg(long)]
    pub audit: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_rounds: Option<u32>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Mock backend: sample ids whose rewrites always fail (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub mock_fail_ids: Vec<String>,
    /// Mock backend: per-attempt failure probability.
    #[arg(long)]
    pub mock_fail_rate: Option<f64>,
    /// Also write the merged run config to this path.
    #[arg(long)]
    pub save_config: Option<PathBuf>,
}

impl Flags {
    /// The config file (if any) with explicit flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = Some(v.clone());
                }
            )*};
        }
        set!(input, output, schema, features, lexicon, plan, report, audit, epsilon);
        if let Some(v) = self.seed {
            cfg.seed = v;
            cfg.backend.mock.seed = v;
        }
        if let Some(v) = self.max_retries {
            cfg.max_retries = v;
        }
        if let Some(v) = self.max_rounds {
            cfg.max_rounds = v;
        }
        if let Some(v) = self.concurrency {
            cfg.concurrency = v;
        }
        if let Some(v) = self.backend {
            cfg.backend.kind = v;
        }
        if let Some(v) = &self.model {
            cfg.backend.model = Some(v.clone());
        }
        if let Some(v) = &self.endpoint {
            cfg.backend.endpoint = Some(v.clone());
        }
        if !self.mock_fail_ids.is_empty() {
            cfg.backend.mock.fail_ids = self.mock_fail_ids.iter().cloned().collect();
        }
        if let Some(v) = self.mock_fail_rate {
            cfg.backend.mock.failure_rate = v;
        }
        if cfg.max_retries == 0 {
            return Err(CliError::config("--max-retries must be at least 1"));
        }
        Ok(cfg)
    }
}

/// Per-feature dependence report for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub samples: usize,
    pub features: Vec<FeatureReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub plans: Vec<InterventionPlan>,
}

/// Before/after comparison for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDelta {
    pub task: Task,
    pub feature: String,
    pub epsilon: u64,
    pub ig_before: f64,
    pub ig_after: f64,
    pub ig_delta: f64,
    pub max_imbalance_before: u64,
    pub max_imbalance_after: u64,
    pub goal_met_before: bool,
    pub goal_met_after: bool,
    pub rewritten: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub samples: usize,
    /// Samples per task with no configured feature, copied unchanged.
    pub uncovered: BTreeMap<Task, usize>,
    pub features: Vec<FeatureDelta>,
}

/// Written next to the dataset by `rewrite`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteReport {
    pub samples: usize,
    /// Samples per task with no configured feature, copied unchanged.
    pub uncovered: BTreeMap<Task, usize>,
    pub goal_met: bool,
    pub features: Vec<FeatureSummary>,
}

fn uncovered(ds: &Dataset, features: &FeatureConfig) -> BTreeMap<Task, usize> {
    let mut out = BTreeMap::new();
    for s in ds.samples().iter().filter(|s| !features.covers(s.task)) {
        *out.entry(s.task).or_insert(0) += 1;
    }
    out
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::config)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::config(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(CliError::config),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

struct Loaded {
    features: FeatureConfig,
    lexicon: NegationLexicon,
    backend: std::sync::Arc<dyn crate::backends::Backend>,
}

fn load_common(cfg: &RunConfig) -> Result<Loaded, CliError> {
    Ok(Loaded {
        features: cfg.feature_config()?,
        lexicon: cfg.lexicon()?,
        backend: cfg.backend.build().map_err(CliError::config)?,
    })
}

fn extracted(cfg: &RunConfig, path: &Path, l: &Loaded) -> Result<Dataset, CliError> {
    let ds = cfg.dataset(path)?;
    let extractor = Extractor::new(&l.lexicon, l.backend.as_ref());
    extract_all(&ds, &l.features, &extractor).map_err(CliError::config)
}

fn reports(ds: &Dataset, l: &Loaded, epsilon: Option<u64>) -> Result<Vec<FeatureReport>, CliError> {
    let mut out = Vec::new();
    for spec in l.features.specs() {
        if ds.samples_for(spec.task).next().is_none() {
            continue;
        }
        let t = tabulate(ds, spec).map_err(CliError::config)?;
        let eps = epsilon.unwrap_or_else(|| default_epsilon(&t));
        out.push(FeatureReport {
            task: spec.task,
            feature: spec.name.clone(),
            report: goal_check(&t, eps).map_err(CliError::config)?,
        });
    }
    Ok(out)
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<u8, CliError> {
    let l = load_common(cfg)?;
    let ds = extracted(cfg, cfg.require(&cfg.input, "input")?, &l)?;
    let report = AnalysisReport {
        samples: ds.len(),
        features: reports(&ds, &l, cfg.epsilon)?,
    };
    write_json(&report, cfg.report.as_deref())?;
    Ok(EXIT_OK)
}

pub fn cmd_plan(cfg: &RunConfig) -> Result<u8, CliError> {
    let l = load_common(cfg)?;
    let ds = extracted(cfg, cfg.require(&cfg.input, "input")?, &l)?;
    let mut plans = Vec::new();
    for spec in l.features.specs() {
        if ds.samples_for(spec.task).next().is_none() {
            continue;
        }
        let t = tabulate(&ds, spec).map_err(CliError::config)?;
        let eps = cfg.epsilon.unwrap_or_else(|| default_epsilon(&t));
        match plan(&t, spec, eps, cfg.seed) {
            Ok(p) => plans.push(p),
            Err(PlanError::Degenerate(name)) => eprintln!("skipping `{name}`: single-valued feature"),
            Err(e) => return Err(e.into()),
        }
    }
    write_json(&PlanFile { plans }, Some(cfg.require(&cfg.plan, "plan")?))?;
    Ok(EXIT_OK)
}

pub fn cmd_rewrite(cfg: &RunConfig) -> Result<u8, CliError> {
    let l = load_common(cfg)?;
    let input = cfg.require(&cfg.input, "input")?;
    let output = cfg.require(&cfg.output, "output")?;
    let ds = cfg.dataset(input)?;
    let plans = match &cfg.plan {
        Some(p) => read_json::<PlanFile>(p)?.plans,
        None => Vec::new(),
    };
    let audit_path = cfg
        .audit
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.audit.jsonl", output.display())));
    let audit =
        JsonlAudit::create(&audit_path).map_err(|e| CliError::config(format!("{}: {e}", audit_path.display())))?;
    let mut ctx = RewriteContext::new(l.backend.as_ref(), &l.lexicon, &l.features);
    ctx.max_retries = cfg.max_retries;
    ctx.concurrency = cfg.concurrency.max(1);
    let opts = PipelineOptions {
        epsilon: cfg.epsilon,
        max_rounds: cfg.max_rounds,
        seed: cfg.seed,
    };
    let out = debias_with_plans(&ds, &ctx, &opts, &plans, &audit)?;
    write_dataset(&out.dataset, output).map_err(CliError::config)?;
    if let Some(report) = &cfg.report {
        let summary = RewriteReport {
            samples: out.dataset.len(),
            uncovered: uncovered(&out.dataset, &l.features),
            goal_met: out.goal_met(),
            features: out.summaries.clone(),
        };
        write_json(&summary, Some(report))?;
    }
    for s in &out.summaries {
        eprintln!(
            "{}/{}: IG {:.4} -> {:.4} bits, max imbalance {} -> {} (ε = {}), {} rewritten, {} failed",
            s.task,
            s.feature,
            s.before.ig,
            s.after.ig,
            s.before.max_imbalance,
            s.after.max_imbalance,
            s.epsilon,
            s.rewritten,
            s.failed
        );
    }
    Ok(if out.goal_met() { EXIT_OK } else { EXIT_GOAL_UNMET })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<u8, CliError> {
    let l = load_common(cfg)?;
    let path = match (&cfg.output, &cfg.input) {
        (Some(p), _) | (None, Some(p)) => p.as_path(),
        (None, None) => return Err(CliError::config("missing --output")),
    };
    let ds = extracted(cfg, path, &l)?;
    let features = reports(&ds, &l, cfg.epsilon)?;
    let ok = features.iter().all(|f| f.report.goal_met);
    for f in &features {
        eprintln!(
            "{}/{}: max imbalance {} (ε = {}), IG {:.6} bits: {}",
            f.task,
            f.feature,
            f.report.max_imbalance,
            f.report.epsilon,
            f.report.ig,
            if f.report.goal_met { "ok" } else { "NOT MET" }
        );
    }
    if let Some(report) = &cfg.report {
        write_json(
            &AnalysisReport {
                samples: ds.len(),
                features,
            },
            Some(report),
        )?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_GOAL_UNMET })
}

pub fn cmd_report(cfg: &RunConfig) -> Result<u8, CliError> {
    let l = load_common(cfg)?;
    let before_ds = extracted(cfg, cfg.require(&cfg.input, "input")?, &l)?;
    let after_ds = extracted(cfg, cfg.require(&cfg.output, "output")?, &l)?;
    let before = reports(&before_ds, &l, cfg.epsilon)?;
    let mut counts: BTreeMap<Task, (u64, u64)> = BTreeMap::new();
    for s in after_ds.samples() {
        let entry = counts.entry(s.task).or_default();
        match s.provenance {
            Provenance::Rewritten => entry.0 += 1,
            Provenance::RewriteFailed => entry.1 += 1,
            Provenance::Original => {}
        }
    }
    let mut features = Vec::new();
    for b in before {
        let spec = l
            .features
            .get(b.task, &b.feature)
            .expect("reports come from configured specs");
        let eps = b.report.epsilon;
        let after = goal_check(&tabulate(&after_ds, spec).map_err(CliError::config)?, eps).map_err(CliError::config)?;
        let (rewritten, failed) = counts.get(&b.task).copied().unwrap_or_default();
        features.push(FeatureDelta {
            task: b.task,
            feature: b.feature,
            epsilon: eps,
            ig_before: b.report.ig,
            ig_after: after.ig,
            ig_delta: after.ig - b.report.ig,
            max_imbalance_before: b.report.max_imbalance,
            max_imbalance_after: after.max_imbalance,
            goal_met_before: b.report.goal_met,
            goal_met_after: after.goal_met,
            rewritten,
            failed,
        });
    }
    let report = ComparisonReport {
        samples: after_ds.len(),
        uncovered: uncovered(&after_ds, &l.features),
        features,
    };
    write_json(&report, cfg.report.as_deref())?;
    Ok(EXIT_OK)
}

type CommandFn = fn(&RunConfig) -> Result<u8, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (flags, cmd): (&Flags, CommandFn) = match &cli.command {
        Command::Analyze(f) => (f, cmd_analyze),
        Command::Plan(f) => (f, cmd_plan),
        Command::Rewrite(f) => (f, cmd_rewrite),
        Command::Verify(f) => (f, cmd_verify),
        Command::Report(f) => (f, cmd_report),
    };
    let result = flags.resolve().and_then(|cfg| {
        if let Some(path) = &flags.save_config {
            std::fs::write(path, cfg.to_toml()).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        }
        cmd(&cfg)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
