//! Executing plans: rewrite, re-check, retry, assemble.
//!
//! Each selected sample is sent to the backend with its target value. The
//! candidate text is re-extracted locally and accepted only if it carries
//! the target value and, for independent features, the original answer
//! class. A sample that fails every attempt keeps its original text and is
//! marked `rewrite_failed`.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{parse_rewrite, rewrite_prompt, Backend, BackendError};
use crate::corpus::{Dataset, Provenance, Sample, Task};
use crate::features::{
    extract_all, Coupling, Exemplar, Extractor, ExtractorKind, FeatureConfig, FeatureError, FeatureSpec,
    NegationLexicon, OverlapSide, SegmentMarkers,
};
use crate::infogain::{default_epsilon, goal_check, max_imbalance, tabulate, BiasReport, InfoGainError};
use crate::planner::{plan, replan_residual, verify_plan, InterventionPlan, PlanError};

pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_MAX_ROUNDS: u32 = 2;

#[derive(Debug, Error)]
pub enum InterveneError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(#[source] BackendError),
    #[error("plan does not match the dataset: {0}")]
    PlanMismatch(String),
    #[error("no feature `{feature}` configured for task {task}")]
    UnknownFeature { task: Task, feature: String },
    #[error("max_retries must be at least 1")]
    InvalidRetries,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Table(#[from] InfoGainError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("audit log: {0}")]
    Audit(#[source] io::Error),
}

impl InterveneError {
    fn from_feature(e: FeatureError) -> Self {
        match e {
            FeatureError::OracleUnavailable(b) => Self::BackendUnavailable(b),
            FeatureError::Sample { id, source } => match *source {
                FeatureError::OracleUnavailable(b) => Self::BackendUnavailable(b),
                other => Self::Feature(FeatureError::Sample {
                    id,
                    source: Box::new(other),
                }),
            },
            other => Self::Feature(other),
        }
    }
}

/// Everything a backend needs to perform `do(B = target_value)` on one
/// sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRequest {
    pub sample: Sample,
    pub feature: String,
    pub extractor: ExtractorKind,
    pub coupling: Coupling,
    pub source_value: String,
    pub target_value: String,
    pub source_answer_class: String,
    pub target_answer_class: String,
    pub exemplars: Vec<Exemplar>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<SegmentMarkers>,
    #[serde(default)]
    pub overlap_denominator: OverlapSide,
    /// Raw-value interval of the target bin, for binned features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_range: Option<(f64, f64)>,
}

impl RewriteRequest {
    pub fn new(
        sample: Sample,
        spec: &FeatureSpec,
        source_value: &str,
        target_value: &str,
        source_answer_class: &str,
        target_answer_class: &str,
    ) -> Self {
        Self {
            sample,
            feature: spec.name.clone(),
            extractor: spec.extractor,
            coupling: spec.coupling,
            source_value: source_value.to_string(),
            target_value: target_value.to_string(),
            source_answer_class: source_answer_class.to_string(),
            target_answer_class: target_answer_class.to_string(),
            exemplars: spec.exemplars_for(source_value, target_value),
            segments: spec.segments.clone(),
            overlap_denominator: spec.overlap_denominator,
            target_range: spec.bin_range(target_value),
        }
    }

    /// SHA-256 of the assembled prompt, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(rewrite_prompt(self).as_bytes()))
    }
}

/// One attempt's local verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub attempt: u32,
    /// Feature value extracted from the candidate, if extraction worked.
    pub value: Option<String>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "sample")]
pub enum RewriteResult {
    Success(Sample),
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteOutcome {
    pub request: RewriteRequest,
    pub result: RewriteResult,
    pub attempts: u32,
    pub trace: Vec<TraceEntry>,
}

impl RewriteOutcome {
    pub fn succeeded(&self) -> bool {
        matches!(self.result, RewriteResult::Success(_))
    }

    pub fn sample_id(&self) -> &str {
        &self.request.sample.id
    }
}

/// Shared inputs for executing rewrites.
#[derive(Clone, Copy)]
pub struct RewriteContext<'a> {
    pub backend: &'a dyn Backend,
    pub lexicon: &'a NegationLexicon,
    pub features: &'a FeatureConfig,
    pub max_retries: u32,
    /// Rewrites in flight at once.
    pub concurrency: usize,
}

impl<'a> RewriteContext<'a> {
    pub fn new(backend: &'a dyn Backend, lexicon: &'a NegationLexicon, features: &'a FeatureConfig) -> Self {
        Self {
            backend,
            lexicon,
            features,
            max_retries: DEFAULT_MAX_RETRIES,
            concurrency: 1,
        }
    }

    pub fn extractor(&self) -> Extractor<'a> {
        Extractor::new(self.lexicon, self.backend)
    }
}

enum Check {
    Pass(Sample),
    Fail { value: Option<String>, note: String },
}

fn check_candidate(
    original: &Sample,
    candidate: &Sample,
    spec: &FeatureSpec,
    target: &str,
    extractor: &Extractor<'_>,
    task_specs: &[FeatureSpec],
) -> Result<Check, InterveneError> {
    let value = match extractor.extract(candidate, spec) {
        Ok(v) => v,
        Err(FeatureError::OracleUnavailable(e)) => return Err(InterveneError::BackendUnavailable(e)),
        Err(e) => {
            return Ok(Check::Fail {
                value: None,
                note: e.to_string(),
            })
        }
    };
    if value.value != target {
        return Ok(Check::Fail {
            value: Some(value.value),
            note: "feature value differs from target".into(),
        });
    }
    if spec.coupling == Coupling::Independent {
        let before = spec.answer_class(original, &value.value).ok();
        let after = spec.answer_class(candidate, &value.value).ok();
        if before.is_none() || before != after {
            return Ok(Check::Fail {
                value: Some(value.value),
                note: "answer class changed".into(),
            });
        }
    }
    match extractor.extract_sample(candidate, task_specs) {
        Ok(s) => Ok(Check::Pass(s)),
        Err(FeatureError::OracleUnavailable(e)) => Err(InterveneError::BackendUnavailable(e)),
        Err(e) => Ok(Check::Fail {
            value: Some(value.value),
            note: e.to_string(),
        }),
    }
}

/// True iff `rewritten` carries `target` for `spec` and, when the feature
/// is independent of the answer, keeps the original's answer class.
pub fn verify_rewrite(
    original: &Sample,
    rewritten: &Sample,
    spec: &FeatureSpec,
    target: &str,
    extractor: &Extractor<'_>,
) -> bool {
    if original.id != rewritten.id || original.task != rewritten.task {
        return false;
    }
    matches!(
        check_candidate(original, rewritten, spec, target, extractor, std::slice::from_ref(spec)),
        Ok(Check::Pass(_))
    )
}

fn rewrite_one(
    req: RewriteRequest,
    spec: &FeatureSpec,
    task_specs: &[FeatureSpec],
    ctx: &RewriteContext<'_>,
) -> Result<RewriteOutcome, InterveneError> {
    let extractor = ctx.extractor();
    let original = &req.sample;
    let mut trace = Vec::new();
    for attempt in 1..=ctx.max_retries {
        let text = match ctx.backend.rewrite(&req, attempt) {
            Ok(t) => t,
            Err(BackendError::EmptyCompletion) => {
                trace.push(TraceEntry {
                    attempt,
                    value: None,
                    passed: false,
                    note: Some("empty completion".into()),
                });
                continue;
            }
            Err(e) => return Err(InterveneError::BackendUnavailable(e)),
        };
        let parsed = parse_rewrite(&text, &original.answer);
        let mut candidate = original.clone();
        candidate.instruction = parsed.instruction;
        candidate.answer = parsed.answer;
        match check_candidate(original, &candidate, spec, &req.target_value, &extractor, task_specs)? {
            Check::Pass(mut sample) => {
                trace.push(TraceEntry {
                    attempt,
                    value: Some(req.target_value.clone()),
                    passed: true,
                    note: None,
                });
                sample.provenance = Provenance::Rewritten;
                sample.attempts = attempt;
                return Ok(RewriteOutcome {
                    request: req,
                    result: RewriteResult::Success(sample),
                    attempts: attempt,
                    trace,
                });
            }
            Check::Fail { value, note } => trace.push(TraceEntry {
                attempt,
                value,
                passed: false,
                note: Some(note),
            }),
        }
    }
    Ok(RewriteOutcome {
        request: req,
        result: RewriteResult::Failed,
        attempts: ctx.max_retries,
        trace,
    })
}

fn requests_for(ds: &Dataset, p: &InterventionPlan, spec: &FeatureSpec) -> Result<Vec<RewriteRequest>, InterveneError> {
    let mut out = Vec::new();
    for flow in &p.flows {
        if flow.sample_ids.len() as u64 != flow.amount {
            return Err(InterveneError::PlanMismatch(format!(
                "flow {} -> {} selects {} samples for amount {}",
                flow.value_from,
                flow.value_to,
                flow.sample_ids.len(),
                flow.amount
            )));
        }
        for id in &flow.sample_ids {
            let sample = ds
                .get(id)
                .ok_or_else(|| InterveneError::PlanMismatch(format!("sample `{id}` is not in the dataset")))?;
            out.push(RewriteRequest::new(
                sample.clone(),
                spec,
                &flow.value_from,
                &flow.value_to,
                &flow.answer_class_from,
                &flow.answer_class_to,
            ));
        }
    }
    Ok(out)
}

/// Runs every rewrite of `p` against `ds`, which must carry extracted
/// feature values matching the plan's source table.
///
/// Returns the dataset with rewritten samples swapped in and failed ones
/// marked, plus one outcome per selected sample in plan order.
pub fn execute_plan(
    ds: &Dataset,
    p: &InterventionPlan,
    ctx: &RewriteContext<'_>,
) -> Result<(Dataset, Vec<RewriteOutcome>), InterveneError> {
    if ctx.max_retries == 0 {
        return Err(InterveneError::InvalidRetries);
    }
    let spec = ctx
        .features
        .get(p.task, &p.feature)
        .ok_or_else(|| InterveneError::UnknownFeature {
            task: p.task,
            feature: p.feature.clone(),
        })?;
    let table = tabulate(ds, spec)?;
    if table != p.source_table {
        return Err(InterveneError::PlanMismatch(
            "dataset table differs from the plan's source table".into(),
        ));
    }
    if !verify_plan(&table, p, p.effective_epsilon) {
        return Err(InterveneError::PlanMismatch(
            "plan does not verify against the dataset".into(),
        ));
    }
    let requests = requests_for(ds, p, spec)?;
    let task_specs: Vec<FeatureSpec> = ctx.features.for_task(p.task).cloned().collect();
    let outcomes = run_requests(requests, spec, &task_specs, ctx)?;

    let replacements = outcomes.iter().map(|o| match &o.result {
        RewriteResult::Success(s) => s.clone(),
        RewriteResult::Failed => {
            let mut s = o.request.sample.clone();
            s.provenance = Provenance::RewriteFailed;
            s.attempts = o.attempts;
            s
        }
    });
    Ok((ds.with_replacements(replacements), outcomes))
}

fn run_requests(
    requests: Vec<RewriteRequest>,
    spec: &FeatureSpec,
    task_specs: &[FeatureSpec],
    ctx: &RewriteContext<'_>,
) -> Result<Vec<RewriteOutcome>, InterveneError> {
    let workers = ctx.concurrency.clamp(1, requests.len().max(1));
    if workers == 1 {
        return requests
            .into_iter()
            .map(|r| rewrite_one(r, spec, task_specs, ctx))
            .collect();
    }
    let queue: Vec<Mutex<Option<RewriteRequest>>> = requests.into_iter().map(|r| Mutex::new(Some(r))).collect();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel();
    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (queue, next, stop) = (&queue, &next, &stop);
            scope.spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(slot) = queue.get(i) else { break };
                    let req = slot
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .take()
                        .expect("each slot is taken once");
                    let result = rewrite_one(req, spec, task_specs, ctx);
                    if result.is_err() {
                        stop.store(true, Ordering::Relaxed);
                    }
                    let _ = tx.send((i, result));
                }
            });
        }
    });
    drop(tx);
    let mut results: Vec<(usize, Result<RewriteOutcome, InterveneError>)> = rx.into_iter().collect();
    results.sort_by_key(|(i, _)| *i);
    results.into_iter().map(|(_, r)| r).collect()
}

/// What happened to one sample, as written to the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Rewritten,
    RewriteFailed,
    /// Rewritten, then discarded with the rest of a round that raised the
    /// imbalance.
    RolledBack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub round: u32,
    pub task: Task,
    pub feature: String,
    pub sample_id: String,
    pub source_value: String,
    pub target_value: String,
    pub request_digest: String,
    pub attempts: u32,
    pub verdicts: Vec<TraceEntry>,
    pub disposition: Disposition,
    pub timestamp: String,
}

impl AuditRecord {
    pub fn from_outcome(round: u32, task: Task, o: &RewriteOutcome) -> Self {
        Self {
            round,
            task,
            feature: o.request.feature.clone(),
            sample_id: o.request.sample.id.clone(),
            source_value: o.request.source_value.clone(),
            target_value: o.request.target_value.clone(),
            request_digest: o.request.digest(),
            attempts: o.attempts,
            verdicts: o.trace.clone(),
            disposition: if o.succeeded() {
                Disposition::Rewritten
            } else {
                Disposition::RewriteFailed
            },
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }
}

/// Append-only destination for audit records. Writes are serialized by
/// the implementation.
pub trait AuditSink: Send + Sync {
    fn record(&self, rec: &AuditRecord) -> io::Result<()>;

    fn flush(&self) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps records in memory.
#[derive(Debug, Default)]
pub struct MemoryAudit {
    records: Mutex<Vec<AuditRecord>>,
}

impl MemoryAudit {
    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl AuditSink for MemoryAudit {
    fn record(&self, rec: &AuditRecord) -> io::Result<()> {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).push(rec.clone());
        Ok(())
    }
}

/// One JSON object per line.
#[derive(Debug)]
pub struct JsonlAudit {
    out: Mutex<BufWriter<File>>,
}

impl JsonlAudit {
    /// Truncates `path`.
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self {
            out: Mutex::new(BufWriter::new(File::create(path)?)),
        })
    }

    pub fn append(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl AuditSink for JsonlAudit {
    fn record(&self, rec: &AuditRecord) -> io::Result<()> {
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")?;
        // keep the log complete even if a later step aborts
        out.flush()
    }

    fn flush(&self) -> io::Result<()> {
        self.out.lock().unwrap_or_else(|e| e.into_inner()).flush()
    }
}

/// Discards records.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullAudit;

impl AuditSink for NullAudit {
    fn record(&self, _: &AuditRecord) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// `None` uses the per-table default.
    pub epsilon: Option<u64>,
    pub max_rounds: u32,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    /// 0 is the initial pass; later rounds work on the residual.
    pub round: u32,
    pub plan_cost: u64,
    pub rewritten: u64,
    pub failed: u64,
    pub best_effort: bool,
    pub max_imbalance_after: u64,
    pub rolled_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub task: Task,
    pub feature: String,
    pub epsilon: u64,
    pub before: BiasReport,
    pub after: BiasReport,
    pub rounds: Vec<RoundSummary>,
    pub rewritten: u64,
    pub failed: u64,
    /// The feature has a single value, so there was nothing to rewrite.
    #[serde(default)]
    pub degenerate: bool,
}

impl FeatureSummary {
    pub fn ig_delta(&self) -> f64 {
        self.after.ig - self.before.ig
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub dataset: Dataset,
    pub summaries: Vec<FeatureSummary>,
    pub plans: Vec<InterventionPlan>,
}

impl PipelineOutput {
    pub fn goal_met(&self) -> bool {
        self.summaries.iter().all(|s| s.after.goal_met)
    }
}

/// Extracts, measures, plans and rewrites every configured feature, then
/// re-plans over residual imbalance for up to `max_rounds` rounds.
///
/// Rounds whose result would raise the imbalance are rolled back (their
/// failed samples stay frozen). Samples of tasks without a configured
/// feature pass through untouched.
pub fn debias_pipeline(
    ds: &Dataset,
    ctx: &RewriteContext<'_>,
    opts: &PipelineOptions,
    audit: &dyn AuditSink,
) -> Result<PipelineOutput, InterveneError> {
    debias_with_plans(ds, ctx, opts, &[], audit)
}

/// Like [`debias_pipeline`], but starts each (task, feature) from a
/// previously computed plan when `initial` has one, using that plan's ε.
pub fn debias_with_plans(
    ds: &Dataset,
    ctx: &RewriteContext<'_>,
    opts: &PipelineOptions,
    initial: &[InterventionPlan],
    audit: &dyn AuditSink,
) -> Result<PipelineOutput, InterveneError> {
    let extractor = ctx.extractor();
    let mut current = extract_all(ds, ctx.features, &extractor).map_err(InterveneError::from_feature)?;
    let mut summaries = Vec::new();
    let mut plans = Vec::new();
    let mut tasks = HashSet::new();
    for spec in ctx.features.specs() {
        if current.samples_for(spec.task).next().is_none() {
            continue;
        }
        tasks.insert(spec.task);
        let given = initial.iter().find(|p| p.task == spec.task && p.feature == spec.name);
        let (next, summary, feature_plans) = debias_feature(&current, spec, ctx, opts, given, audit)?;
        current = next;
        summaries.push(summary);
        plans.extend(feature_plans);
    }
    audit.flush().map_err(InterveneError::Audit)?;
    // restore the inputs' feature maps for passthrough samples
    let passthrough = ds.samples().iter().filter(|s| !tasks.contains(&s.task)).cloned();
    let dataset = current.with_replacements(passthrough);
    Ok(PipelineOutput {
        dataset,
        summaries,
        plans,
    })
}

type FeatureRun = (Dataset, FeatureSummary, Vec<InterventionPlan>);

fn debias_feature(
    ds: &Dataset,
    spec: &FeatureSpec,
    ctx: &RewriteContext<'_>,
    opts: &PipelineOptions,
    given: Option<&InterventionPlan>,
    audit: &dyn AuditSink,
) -> Result<FeatureRun, InterveneError> {
    let table = tabulate(ds, spec)?;
    let epsilon = match given {
        Some(p) => p.epsilon,
        None => opts.epsilon.unwrap_or_else(|| default_epsilon(&table)),
    };
    let before = goal_check(&table, epsilon)?;
    let mut summary = FeatureSummary {
        task: spec.task,
        feature: spec.name.clone(),
        epsilon,
        before: before.clone(),
        after: before.clone(),
        rounds: Vec::new(),
        rewritten: 0,
        failed: 0,
        degenerate: false,
    };
    if before.goal_met {
        return Ok((ds.clone(), summary, Vec::new()));
    }
    let computed = match given {
        Some(p) => Ok(p.clone()),
        None => plan(&table, spec, epsilon, opts.seed),
    };
    let first = match computed {
        Ok(p) => p,
        Err(PlanError::Degenerate(_)) => {
            summary.degenerate = true;
            return Ok((ds.clone(), summary, Vec::new()));
        }
        Err(e) => return Err(e.into()),
    };

    let mut current = ds.clone();
    let mut frozen: HashSet<String> = HashSet::new();
    let mut plans = Vec::new();
    let mut pending = Some(first);
    let mut round = 0;
    while let Some(p) = pending.take() {
        if p.is_empty() {
            break;
        }
        let imbalance_before = max_imbalance(&tabulate(&current, spec)?);
        let (next, outcomes) = execute_plan(&current, &p, ctx)?;
        let after_table = tabulate(&next, spec)?;
        let rolled_back = max_imbalance(&after_table) > imbalance_before;
        for o in &outcomes {
            let mut rec = AuditRecord::from_outcome(round, spec.task, o);
            if rolled_back && o.succeeded() {
                rec.disposition = Disposition::RolledBack;
            }
            audit.record(&rec).map_err(InterveneError::Audit)?;
        }
        let failed: Vec<&RewriteOutcome> = outcomes.iter().filter(|o| !o.succeeded()).collect();
        frozen.extend(failed.iter().map(|o| o.sample_id().to_string()));
        let rewritten = (outcomes.len() - failed.len()) as u64;
        if rolled_back {
            // keep the failure markers, discard the rewrites
            let marks = failed.iter().map(|o| {
                let mut s = current
                    .get(o.sample_id())
                    .expect("outcome ids come from the dataset")
                    .clone();
                s.provenance = Provenance::RewriteFailed;
                s.attempts = o.attempts;
                s
            });
            current = current.with_replacements(marks.collect::<Vec<_>>());
        } else {
            current = next;
            summary.rewritten += rewritten;
        }
        summary.failed += failed.len() as u64;
        summary.rounds.push(RoundSummary {
            round,
            plan_cost: p.cost,
            rewritten: if rolled_back { 0 } else { rewritten },
            failed: failed.len() as u64,
            best_effort: p.best_effort,
            max_imbalance_after: max_imbalance(&tabulate(&current, spec)?),
            rolled_back,
        });
        plans.push(p);

        if round >= opts.max_rounds {
            break;
        }
        round += 1;
        let residual = tabulate(&current, spec)?;
        if goal_check(&residual, epsilon)?.goal_met {
            break;
        }
        let seed = opts.seed.wrapping_add(u64::from(round));
        pending = Some(replan_residual(&residual, spec, epsilon, &frozen, seed));
    }
    summary.after = goal_check(&tabulate(&current, spec)?, epsilon)?;
    Ok((current, summary, plans))
}

/// Failure count by task and feature, for reports.
pub fn failure_counts(summaries: &[FeatureSummary]) -> BTreeMap<String, u64> {
    summaries
        .iter()
        .map(|s| (format!("{}/{}", s.task, s.feature), s.failed))
        .collect()
}
