use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backends::Backends;
use super::config::{NerSource, RunConfig};
use super::dataset::{load_dataset, DatasetItem};
use super::record::{compute_metrics, Branch, BranchRecord, MetricSettings, RunRecord, Status};
use crate::a2c::{run_a2c, SelectionCounts};
use crate::agreement::{build_matrix, MatrixBuild, Oracle, ScorerEntityExtractor};
use crate::analysis::{compare_runs, render_comparison, ComparisonRow};
use crate::backend::{CallCache, NliLabel, Role, ScoreRequest, ScoreTask, Transcript};
use crate::generation::{generate_context_variations, generate_temperature_variations, VariationOutcome};
use crate::metrics::{AnswerSet, EntityExtractor, HeuristicEntityExtractor, Metric, MetricReport, MetricsError};

pub const RECORDS: &str = "records.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const SUMMARY_TEXT: &str = "summary.txt";
pub const COMPARE: &str = "compare.json";
pub const COMPARE_TEXT: &str = "compare.txt";
pub const TIMING: &str = "timing.json";
pub const CACHE: &str = "cache.db";

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub limit: Option<usize>,
    pub seed: Option<u64>,
    pub cache: Option<PathBuf>,
    pub mock_fixtures: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunOptions {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(limit) = self.limit {
            cfg.dataset.limit = Some(limit);
        }
        if self.seed.is_some() {
            cfg.variation.seed = self.seed;
        }
        if let Some(dir) = &self.output {
            cfg.output.dir = dir.clone();
        }
    }
}

pub fn metric_settings(cfg: &RunConfig) -> MetricSettings {
    let o = &cfg.oracles;
    MetricSettings {
        symmetrization: o.symmetrization,
        cluster_on: o.cluster_on,
        cluster_threshold: o.cluster_threshold,
        binarize: o.binarize,
        accuracy_cutoff: o.accuracy_cutoff,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionTotals {
    pub empty_answers: usize,
    pub failed_pairs: usize,
    pub unparseable_judgments: usize,
    pub vacuous_ner_pairs: usize,
    pub conditional_undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMean {
    pub metric: Metric,
    pub mean: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub branch: Branch,
    pub questions: usize,
    pub metrics: Vec<MetricMean>,
    pub exclusions: ExclusionTotals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selections: Option<SelectionCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub settings: MetricSettings,
    pub questions: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub failed_ids: Vec<String>,
    pub branches: Vec<BranchSummary>,
    pub calls: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2c_calls: Option<BTreeMap<String, usize>>,
}

impl Summary {
    pub fn branch(&self, b: Branch) -> Option<&BranchSummary> {
        self.branches.iter().find(|s| s.branch == b)
    }

    pub fn mean(&self, b: Branch, metric: Metric) -> Option<f64> {
        self.branch(b)?.metrics.iter().find(|m| m.metric == metric)?.mean
    }
}

fn add_calls(into: &mut BTreeMap<String, usize>, from: &BTreeMap<String, usize>) {
    for (k, v) in from {
        *into.entry(k.clone()).or_default() += v;
    }
}

fn branch_reports(records: &[RunRecord], b: Branch) -> Vec<&MetricReport> {
    records
        .iter()
        .filter(|r| r.status == Status::Ok)
        .filter_map(|r| r.branch(b))
        .map(|br| &br.report)
        .collect()
}

pub fn summarize(records: &[RunRecord], settings: &MetricSettings) -> Summary {
    let failed_ids: Vec<String> = records
        .iter()
        .filter(|r| r.status == Status::Failed)
        .map(|r| r.question_id.clone())
        .collect();
    let mut branches = Vec::new();
    for b in Branch::ALL {
        let reports = branch_reports(records, b);
        if reports.is_empty() {
            continue;
        }
        let metrics = Metric::ALL
            .into_iter()
            .map(|metric| {
                let (mean, n) = MetricReport::mean_of(reports.iter().copied(), metric);
                MetricMean { metric, mean, n }
            })
            .collect();
        let mut ex = ExclusionTotals::default();
        for r in &reports {
            let e = &r.exclusions;
            ex.empty_answers += e.empty_answers;
            ex.failed_pairs += e.failed_pairs;
            ex.unparseable_judgments += e.unparseable_judgments;
            ex.vacuous_ner_pairs += e.vacuous_ner_pairs;
            ex.conditional_undefined += usize::from(e.conditional_undefined);
        }
        let mut selections: Option<SelectionCounts> = None;
        for br in records.iter().filter(|r| r.status == Status::Ok).filter_map(|r| r.branch(b)) {
            if let Some(c) = br.selection_counts {
                let s = selections.get_or_insert_with(SelectionCounts::default);
                s.selected += c.selected;
                s.dont_know += c.dont_know;
                s.parse_failures += c.parse_failures;
                s.backend_errors += c.backend_errors;
            }
        }
        branches.push(BranchSummary {
            branch: b,
            questions: reports.len(),
            metrics,
            exclusions: ex,
            selections,
        });
    }
    let mut calls = BTreeMap::new();
    let mut a2c_calls: Option<BTreeMap<String, usize>> = None;
    for r in records {
        add_calls(&mut calls, &r.calls);
        if let Some(c) = &r.a2c_calls {
            add_calls(a2c_calls.get_or_insert_with(BTreeMap::new), c);
        }
    }
    Summary {
        settings: settings.clone(),
        questions: records.len(),
        succeeded: records.len() - failed_ids.len(),
        failed: failed_ids.len(),
        failed_ids,
        branches,
        calls,
        a2c_calls,
    }
}

pub fn render_summary(s: &Summary) -> String {
    let mut out = format!(
        "questions: {} ({} ok, {} failed)\n{:<14}",
        s.questions, s.succeeded, s.failed, "metric"
    );
    for b in &s.branches {
        let _ = write!(out, " {:>16}", b.branch.name());
    }
    out.push('\n');
    for metric in Metric::ALL {
        let _ = write!(out, "{:<14}", metric.name());
        for b in &s.branches {
            let cell = b
                .metrics
                .iter()
                .find(|m| m.metric == metric)
                .and_then(|m| m.mean)
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " {cell:>16}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchComparison {
    pub branch: Branch,
    pub rows: Vec<ComparisonRow>,
}

/// Before/after tables for each branch that went through Ask-to-Choose.
pub fn compare_records(records: &[RunRecord]) -> anyhow::Result<Vec<BranchComparison>> {
    let mut out = Vec::new();
    for after in [Branch::A2cContext, Branch::A2cTemperature] {
        let before = after.before().expect("a2c branch");
        let pairs: Vec<(&MetricReport, &MetricReport)> = records
            .iter()
            .filter(|r| r.status == Status::Ok)
            .filter_map(|r| Some((&r.branch(before)?.report, &r.branch(after)?.report)))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let (b, a): (Vec<MetricReport>, Vec<MetricReport>) =
            pairs.into_iter().map(|(b, a)| (b.clone(), a.clone())).unzip();
        out.push(BranchComparison {
            branch: before,
            rows: compare_runs(&b, &a)?,
        });
    }
    Ok(out)
}

pub fn render_comparisons(c: &[BranchComparison]) -> String {
    c.iter()
        .map(|bc| render_comparison(&format!("{} (before -> after A2C)", bc.branch.name()), &bc.rows))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

pub fn records_bytes(records: &[RunRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("serializable");
        out.push(b'\n');
    }
    out
}

pub fn read_records(dir: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let path = dir.join(RECORDS);
    let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn read_summary(dir: &Path) -> anyhow::Result<Summary> {
    let path = dir.join(SUMMARY);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

struct Scoring<'a> {
    cfg: &'a RunConfig,
    backends: &'a Backends,
    settings: MetricSettings,
}

#[derive(Default)]
struct ScoreCalls {
    judge: usize,
    scorer: usize,
}

impl Scoring<'_> {
    fn oracles(&self) -> Vec<Oracle<'_>> {
        let o = &self.cfg.oracles;
        let mut list = vec![Oracle::ExactMatch];
        if let Some(s) = self.backends.scorer.as_deref() {
            if o.paraphrase {
                list.push(Oracle::Paraphrase(s));
            }
            if o.nli {
                list.push(Oracle::Nli(s, NliLabel::Entail));
                list.push(Oracle::Nli(s, NliLabel::Contra));
            }
        }
        if let (true, Some(j)) = (o.judge, self.backends.judge.as_deref()) {
            list.push(Oracle::LlmJudge(j));
        }
        list
    }

    fn entities(&self, answers: &AnswerSet, calls: &mut ScoreCalls, notes: &mut Vec<String>) -> Option<Vec<Vec<String>>> {
        let scorer_extractor;
        let extractor: &dyn EntityExtractor = match (self.cfg.oracles.ner, self.backends.scorer.as_deref()) {
            (NerSource::Off, _) => return None,
            (NerSource::Scorer, Some(s)) => {
                scorer_extractor = ScorerEntityExtractor { scorer: s };
                &scorer_extractor
            }
            _ => &HeuristicEntityExtractor,
        };
        let scored = self.cfg.oracles.ner == NerSource::Scorer;
        let mut out = Vec::new();
        for text in answers.texts() {
            calls.scorer += usize::from(scored);
            match extractor.extract(text) {
                Ok(e) => out.push(e),
                Err(e) => {
                    notes.push(format!("ner: {e}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn bleurt(&self, answers: &AnswerSet, refs: &[String], calls: &mut ScoreCalls, notes: &mut Vec<String>) -> Option<Vec<f64>> {
        let scorer = self.backends.scorer.as_deref().filter(|_| self.cfg.oracles.bleurt)?;
        let mut out = Vec::new();
        for text in answers.texts() {
            let mut best = f64::NEG_INFINITY;
            for r in refs {
                calls.scorer += 1;
                match scorer.score(&ScoreRequest::pair(ScoreTask::Bleurt, text, r)).map(|resp| resp.score()) {
                    Ok(Some(s)) => best = best.max(s),
                    Ok(None) => {
                        notes.push("bleurt: response without score".into());
                        return None;
                    }
                    Err(e) => {
                        notes.push(format!("bleurt: {e}"));
                        return None;
                    }
                }
            }
            out.push(best);
        }
        Some(out)
    }

    fn branch(
        &self,
        question_id: &str,
        branch: Branch,
        variation: VariationOutcome,
        refs: &[String],
        calls: &mut ScoreCalls,
    ) -> Result<BranchRecord, MetricsError> {
        let answers = variation.answers;
        let mut matrices: Vec<MatrixBuild> = Vec::new();
        for oracle in self.oracles() {
            let build = build_matrix(&answers, oracle, self.settings.symmetrization)?;
            match oracle {
                Oracle::LlmJudge(_) => calls.judge += build.calls,
                Oracle::ExactMatch => {}
                _ => calls.scorer += build.calls,
            }
            matrices.push(build);
        }
        let mut notes = Vec::new();
        let entities = self.entities(&answers, calls, &mut notes);
        let bleurt = refs_nonempty(refs).and_then(|r| self.bleurt(&answers, r, calls, &mut notes));
        let (report, partition) = compute_metrics(
            question_id,
            &answers,
            &matrices,
            entities.as_deref(),
            bleurt.as_deref(),
            variation.empty_answers,
            refs,
            &self.settings,
        )?;
        Ok(BranchRecord {
            branch,
            answers,
            paraphrases: variation.paraphrases,
            failures: variation.failures,
            empty_answers: variation.empty_answers,
            matrices,
            entities,
            bleurt,
            notes,
            selection_counts: None,
            partition,
            report,
        })
    }
}

fn refs_nonempty(refs: &[String]) -> Option<&[String]> {
    (!refs.is_empty()).then_some(refs)
}

fn role_counts(transcript: &Transcript, from: usize) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for e in &transcript.exchanges[from..] {
        *out.entry(e.role.name().to_string()).or_default() += 1;
    }
    out
}

fn process_question(item: &DatasetItem, scoring: &Scoring<'_>, with_a2c: bool) -> RunRecord {
    let cfg = scoring.cfg;
    let b = scoring.backends;
    let mut transcript = Transcript::new();
    let mut record = RunRecord {
        question_id: item.id.clone(),
        question: item.question.clone(),
        best_answer: item.best_answer.clone(),
        correct_answers: item.correct_answers.clone(),
        status: Status::Ok,
        error: None,
        branches: Vec::new(),
        calls: BTreeMap::new(),
        a2c_calls: None,
        transcript: Transcript::new(),
    };
    let context = generate_context_variations(&item.id, &item.question, &cfg.variation, &*b.aux, &*b.main, &mut transcript);
    let temperature = generate_temperature_variations(&item.id, &item.question, &cfg.variation, &*b.main, &mut transcript);
    let mut calls = role_counts(&transcript, 0);
    let fail = |mut record: RunRecord, transcript: Transcript, calls, error: String| {
        log::warn!("{}: {error}", record.question_id);
        record.status = Status::Failed;
        record.error = Some(error);
        record.calls = calls;
        record.transcript = transcript;
        record
    };
    let (context, temperature) = match (context, temperature) {
        (Ok(c), Ok(t)) => (c, t),
        (c, t) => {
            let errors: Vec<String> = [c.err().map(|e| format!("context: {e}")), t.err().map(|e| format!("temperature: {e}"))]
                .into_iter()
                .flatten()
                .collect();
            return fail(record, transcript, calls, errors.join("; "));
        }
    };
    let refs = item.references();
    let mut score_calls = ScoreCalls::default();
    let pre_c = context.answers.clone();
    let pre_t = temperature.answers.clone();
    for (branch, variation) in [(Branch::Context, context), (Branch::Temperature, temperature)] {
        match scoring.branch(&item.id, branch, variation, &refs, &mut score_calls) {
            Ok(br) => record.branches.push(br),
            Err(e) => return fail(record, transcript, calls, format!("{branch}: {e}")),
        }
    }

    if with_a2c && cfg.a2c.enabled {
        let mark = transcript.exchanges.len();
        let outcome = run_a2c(&item.question, &pre_c, &pre_t, &cfg.variation, &cfg.a2c, &*b.main, &*b.aux, &mut transcript);
        record.a2c_calls = Some(role_counts(&transcript, mark));
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => return fail(record, transcript, calls, format!("a2c: {e}")),
        };
        for (branch, answers, counts) in [
            (Branch::A2cContext, outcome.context, outcome.context_counts),
            (Branch::A2cTemperature, outcome.temperature, outcome.temperature_counts),
        ] {
            let variation = VariationOutcome {
                answers,
                paraphrases: Vec::new(),
                failures: Vec::new(),
                empty_answers: 0,
            };
            match scoring.branch(&item.id, branch, variation, &refs, &mut score_calls) {
                Ok(mut br) => {
                    br.selection_counts = Some(counts);
                    record.branches.push(br);
                }
                Err(e) => return fail(record, transcript, calls, format!("{branch}: {e}")),
            }
        }
    }
    if b.judge.is_some() {
        calls.insert(Role::Judge.name().into(), score_calls.judge);
    }
    if b.scorer.is_some() {
        calls.insert(Role::Scorer.name().into(), score_calls.scorer);
    }
    record.calls = calls;
    record.transcript = transcript;
    record
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    total_secs: f64,
    cache_hits: usize,
    cache_misses: usize,
    questions: Vec<QuestionTiming>,
}

#[derive(Debug, Clone, Serialize)]
struct QuestionTiming {
    question_id: String,
    secs: f64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
    pub comparisons: Option<Vec<BranchComparison>>,
    /// More questions failed than the configured fraction allows.
    pub too_many_failures: bool,
}

/// Runs the evaluation (and Ask-to-Choose when `with_a2c`) and writes the
/// run directory.
pub fn run(mut cfg: RunConfig, opts: &RunOptions, with_a2c: bool) -> anyhow::Result<RunOutcome> {
    opts.apply(&mut cfg);
    cfg.validate().map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
    std::fs::create_dir_all(&cfg.output.dir).with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let cache_path = opts.cache.clone().unwrap_or_else(|| cfg.output.dir.join(CACHE));
    let cache = Arc::new(CallCache::open(&cache_path).with_context(|| format!("opening cache {}", cache_path.display()))?);
    let backends = Backends::build(&cfg, cache, opts.mock_fixtures.as_deref())?;
    run_with_backends(&cfg, &backends, with_a2c)
}

/// Same as [`run`] with backends supplied by the caller; `cfg` is used as is.
pub fn run_with_backends(cfg: &RunConfig, backends: &Backends, with_a2c: bool) -> anyhow::Result<RunOutcome> {
    let started = Instant::now();
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let dataset = load_dataset(&cfg.dataset.path)?;
    let mut items = dataset.items;
    if let Some(limit) = cfg.dataset.limit {
        items.truncate(limit);
    }
    log::info!("{} questions from {}", items.len(), cfg.dataset.path.display());

    let scoring = Scoring {
        cfg,
        backends,
        settings: metric_settings(cfg),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.output.workers)
        .build()
        .context("building worker pool")?;
    let results: Vec<(RunRecord, Duration)> = pool.install(|| {
        items
            .par_iter()
            .map(|item| {
                let t = Instant::now();
                let r = process_question(item, &scoring, with_a2c);
                log::info!("{} done ({:?})", item.id, r.status);
                (r, t.elapsed())
            })
            .collect()
    });
    let (records, durations): (Vec<RunRecord>, Vec<Duration>) = results.into_iter().unzip();

    std::fs::write(dir.join(RECORDS), records_bytes(&records))?;
    let summary = summarize(&records, &scoring.settings);
    std::fs::write(dir.join(SUMMARY), to_json_bytes(&summary))?;
    std::fs::write(dir.join(SUMMARY_TEXT), render_summary(&summary))?;

    let comparisons = if with_a2c && cfg.a2c.enabled {
        let c = compare_records(&records)?;
        std::fs::write(dir.join(COMPARE), to_json_bytes(&c))?;
        std::fs::write(dir.join(COMPARE_TEXT), render_comparisons(&c))?;
        Some(c)
    } else {
        for stale in [COMPARE, COMPARE_TEXT] {
            let p = dir.join(stale);
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
        None
    };

    let stats = backends.cache_stats();
    let timing = Timing {
        total_secs: started.elapsed().as_secs_f64(),
        cache_hits: stats.hits,
        cache_misses: stats.misses,
        questions: records
            .iter()
            .zip(&durations)
            .map(|(r, d)| QuestionTiming {
                question_id: r.question_id.clone(),
                secs: d.as_secs_f64(),
            })
            .collect(),
    };
    std::fs::write(dir.join(TIMING), to_json_bytes(&timing))?;

    let too_many_failures =
        !records.is_empty() && summary.failed as f64 / records.len() as f64 > cfg.output.max_failure_fraction;
    Ok(RunOutcome {
        dir,
        summary,
        comparisons,
        too_many_failures,
    })
}

#[derive(Debug, Default)]
pub struct CheckOutcome {
    pub mismatches: Vec<String>,
}

/// Recomputes every report from the stored raw data and compares the result
/// with the run directory's summary (and comparison, when present).
pub fn check_run(dir: &Path) -> anyhow::Result<CheckOutcome> {
    let records = read_records(dir)?;
    let stored = read_summary(dir)?;
    let settings = stored.settings.clone();
    let mut out = CheckOutcome::default();
    let mut recomputed = records.clone();
    for r in recomputed.iter_mut().filter(|r| r.status == Status::Ok) {
        let refs = r.references();
        let qid = r.question_id.clone();
        for br in &mut r.branches {
            let (report, partition) = br.recompute(&qid, &refs, &settings)?;
            if report != br.report {
                out.mismatches.push(format!("{qid} {}: report differs", br.branch));
            }
            if partition != br.partition {
                out.mismatches.push(format!("{qid} {}: partition differs", br.branch));
            }
            br.report = report;
            br.partition = partition;
        }
    }
    let summary_bytes = to_json_bytes(&summarize(&recomputed, &settings));
    if summary_bytes != std::fs::read(dir.join(SUMMARY))? {
        out.mismatches.push(format!("{SUMMARY} differs from recomputed summary"));
    }
    let compare_path = dir.join(COMPARE);
    if compare_path.exists() && to_json_bytes(&compare_records(&recomputed)?) != std::fs::read(&compare_path)? {
        out.mismatches.push(format!("{COMPARE} differs from recomputed comparison"));
    }
    Ok(out)
}

/// Text report of a finished run.
pub fn report_text(dir: &Path) -> anyhow::Result<String> {
    let summary = read_summary(dir)?;
    let mut out = render_summary(&summary);
    let compare_path = dir.join(COMPARE);
    if compare_path.exists() {
        let c: Vec<BranchComparison> = serde_json::from_str(&std::fs::read_to_string(&compare_path)?)?;
        out.push('\n');
        out.push_str(&render_comparisons(&c));
    }
    Ok(out)
}

pub fn ensure_run_dir(dir: &Path) -> anyhow::Result<()> {
    if !dir.join(RECORDS).exists() {
        bail!("{} is not a run directory (no {RECORDS})", dir.display());
    }
    Ok(())
}
