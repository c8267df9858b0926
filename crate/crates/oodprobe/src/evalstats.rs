//! Experiment execution and statistics.
//!
//! A [`Condition`] fixes task, polarity, control tier, backend, prompt
//! variant, and shot count. Running one walks every topic: build the trial,
//! render the prompt(s), complete, parse, record. Trials are functions of
//! the experiment seed alone, so any two conditions compare the same test
//! items prediction-for-prediction, and McNemar's test applies directly.
//!
//! Refusals and unparseable answers never drop items: the affected test
//! items score as incorrect and carry a flag in the prediction record, so
//! reported accuracies stay survivorship-free.
//!
//! Topic-level trials within a condition run in parallel under the
//! `parallel` feature; aggregation is a deterministic reduction ordered by
//! topic index.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::corpus::{DocumentSet, Genre};
use crate::gateway::{
    parse_label_list_partial, BackendSpec, ClassLabel, Gateway, GatewayError,
};
use crate::promptkit::{
    apply_ablation, paraphrase_prompt, render_detection_prompt, render_genre_prompt,
    ControlLevel, PromptBundle, PromptError, Variant, CRITERIA_SLOT,
};
use crate::splitter::{
    assemble_trial, build_domain_split, rank_by_genre, sample_genre_pair, Polarity, SplitError,
    TaskKind, Trial,
};
use crate::synthgen::{build_detection_dataset, DetectionParams, SynthError};
use crate::topics::TopicMixture;

/// Version tag of the canonical prompt templates, recorded in run metadata.
pub const TEMPLATE_VERSION: &str = "templates-v1";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("condition produced no predictions")]
    EmptyResult,
    #[error("results are not paired: prediction keys differ")]
    UnpairedResults,
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("configuration error: {0}")]
    Config(GatewayError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub task: TaskKind,
    pub polarity: Polarity,
    pub control_level: ControlLevel,
    pub backend_id: String,
    pub variant: Variant,
    pub n_shots: usize,
}

impl Condition {
    pub fn new(
        task: TaskKind,
        polarity: Polarity,
        control_level: ControlLevel,
        backend_id: &str,
    ) -> Condition {
        Condition {
            task,
            polarity,
            control_level,
            backend_id: backend_id.to_string(),
            variant: Variant::Canonical,
            n_shots: 5,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Condition {
        self.variant = variant;
        self
    }

    pub fn with_shots(mut self, n_shots: usize) -> Condition {
        self.n_shots = n_shots;
        self
    }

    /// Stable identifier used in reports and significance tables.
    pub fn key(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}/{}shot",
            self.task.as_str(),
            self.backend_id,
            self.polarity.as_str(),
            self.control_level.as_str(),
            self.variant.as_string(),
            self.n_shots
        )
    }

    fn sort_key(&self) -> (String, String, u8, u8, String, usize) {
        (
            self.task.as_str().to_string(),
            self.backend_id.clone(),
            match self.polarity {
                Polarity::OnTopic => 0,
                Polarity::OffTopic => 1,
            },
            match self.control_level {
                ControlLevel::Basic => 0,
                ControlLevel::Simple => 1,
                ControlLevel::Detailed => 2,
            },
            self.variant.as_string(),
            self.n_shots,
        )
    }
}

/// The paper-shaped default grid: on-topic basic plus the three off-topic
/// control tiers.
pub fn table_grid(task: TaskKind, backend_id: &str) -> Vec<Condition> {
    vec![
        Condition::new(task, Polarity::OnTopic, ControlLevel::Basic, backend_id),
        Condition::new(task, Polarity::OffTopic, ControlLevel::Basic, backend_id),
        Condition::new(task, Polarity::OffTopic, ControlLevel::Simple, backend_id),
        Condition::new(task, Polarity::OffTopic, ControlLevel::Detailed, backend_id),
    ]
}

/// One scored test item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub topic_index: usize,
    pub item_id: String,
    pub gold: ClassLabel,
    pub predicted: Option<ClassLabel>,
    pub correct: bool,
    /// Why the item was force-scored incorrect, when it was.
    pub flagged: Option<String>,
    pub raw_digest: String,
}

/// All predictions of one condition, ordered by topic then test position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub predictions: Vec<PredictionRecord>,
}

impl ConditionResult {
    pub fn n_total(&self) -> usize {
        self.predictions.len()
    }

    pub fn n_correct(&self) -> usize {
        self.predictions.iter().filter(|p| p.correct).count()
    }
}

/// Accuracy in percent (exact; round at the formatting boundary).
pub fn accuracy(result: &ConditionResult) -> Result<f64, EvalError> {
    if result.predictions.is_empty() {
        return Err(EvalError::EmptyResult);
    }
    Ok(100.0 * result.n_correct() as f64 / result.n_total() as f64)
}

/// Half-up rounding to one decimal, matching the report format.
pub fn round_1dp(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}

/// McNemar test outcome over paired predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarOutcome {
    /// Items the first condition got right and the second wrong.
    pub b_count: usize,
    /// Items the second condition got right and the first wrong.
    pub c_count: usize,
    pub p_value: f64,
    pub method: String,
}

/// Exact two-sided binomial tail: `2 * P(X <= min(b, c))` for
/// `X ~ Binomial(b + c, 1/2)`, capped at 1.
fn exact_binomial_p(b: usize, c: usize) -> f64 {
    let n = b + c;
    let m = b.min(c);
    // term = C(n, k) / 2^n, built incrementally; exact in f64 for n <= 25.
    let mut term = 0.5f64.powi(n as i32);
    let mut tail = term;
    for k in 0..m {
        term = term * (n - k) as f64 / (k + 1) as f64;
        tail += term;
    }
    (2.0 * tail).min(1.0)
}

/// Upper tail of the chi-square distribution with one degree of freedom.
fn chi_square_1df_sf(x: f64) -> f64 {
    statrs::function::erf::erfc((x / 2.0).sqrt())
}

/// McNemar's test between two conditions over identical prediction keys.
///
/// Small discordant counts (`b + c <= 25`) use the exact two-sided binomial
/// tail; larger ones the continuity-corrected chi-square statistic
/// `(|b - c| - 1)^2 / (b + c)`. The method used is recorded.
pub fn mcnemar_test(a: &ConditionResult, b: &ConditionResult) -> Result<McNemarOutcome, EvalError> {
    let key = |p: &PredictionRecord| (p.topic_index, p.item_id.clone());
    let map_a: BTreeMap<_, bool> = a.predictions.iter().map(|p| (key(p), p.correct)).collect();
    let map_b: BTreeMap<_, bool> = b.predictions.iter().map(|p| (key(p), p.correct)).collect();
    if map_a.len() != a.predictions.len()
        || map_b.len() != b.predictions.len()
        || !map_a.keys().eq(map_b.keys())
    {
        return Err(EvalError::UnpairedResults);
    }
    let mut b_count = 0usize;
    let mut c_count = 0usize;
    for (item, &a_correct) in &map_a {
        let b_correct = map_b[item];
        match (a_correct, b_correct) {
            (true, false) => b_count += 1,
            (false, true) => c_count += 1,
            _ => {}
        }
    }
    let n = b_count + c_count;
    let (p_value, method) = if n == 0 {
        (1.0, "degenerate".to_string())
    } else if n <= 25 {
        (exact_binomial_p(b_count, c_count), "exact-binomial".to_string())
    } else {
        let diff = b_count.abs_diff(c_count) as f64;
        let x = (diff - 1.0).powi(2) / n as f64;
        (chi_square_1df_sf(x), "chi-square-cc".to_string())
    };
    Ok(McNemarOutcome {
        b_count,
        c_count,
        p_value,
        method,
    })
}

/// Everything a condition run needs, owned by the caller.
pub struct Experiment<'a> {
    pub docs: &'a DocumentSet,
    pub mixtures: &'a [TopicMixture],
    pub gateway: &'a Gateway,
    pub backends: BTreeMap<String, BackendSpec>,
    /// Backend used to reword prompts for paraphrase variants.
    pub paraphraser: Option<BackendSpec>,
    /// Generator backend for the detection task.
    pub generator: Option<BackendSpec>,
    pub n_topics: usize,
    pub n_test: usize,
    pub n_example_pool: usize,
    pub n_test_pool: usize,
    pub seed: u64,
}

impl<'a> Experiment<'a> {
    fn backend(&self, id: &str) -> Result<&BackendSpec, EvalError> {
        self.backends
            .get(id)
            .ok_or_else(|| EvalError::Config(GatewayError::UnknownBackend(id.to_string())))
    }

    /// The trial of one (condition, topic); a pure function of the
    /// experiment seed except for cached generator output.
    pub fn trial(&self, cond: &Condition, topic: usize) -> Result<Trial, EvalError> {
        match cond.task {
            TaskKind::Genre => {
                let rankings = rank_by_genre(self.docs, self.mixtures, topic)?;
                let split = build_domain_split(
                    &rankings,
                    self.n_example_pool,
                    self.n_test_pool,
                    cond.polarity,
                    topic,
                )?;
                let pair = sample_genre_pair(topic, &Genre::ALL, self.seed);
                Ok(assemble_trial(
                    self.docs,
                    &split,
                    &pair,
                    TaskKind::Genre,
                    cond.n_shots,
                    self.n_test,
                    self.seed,
                )?)
            }
            TaskKind::Detection => {
                let generator = self.generator.as_ref().ok_or_else(|| {
                    EvalError::Config(GatewayError::UnknownBackend(
                        "no generator backend configured for the detection task".to_string(),
                    ))
                })?;
                let params = DetectionParams {
                    n_shots: cond.n_shots,
                    n_test: self.n_test,
                    n_example_pool: self.n_example_pool,
                    n_test_pool: self.n_test_pool,
                    seed: self.seed,
                };
                let (_, trial) = build_detection_dataset(
                    self.docs,
                    self.mixtures,
                    self.gateway,
                    generator,
                    topic,
                    cond.polarity,
                    &params,
                )?;
                Ok(trial)
            }
        }
    }

    fn render(&self, cond: &Condition, trial: &Trial) -> Result<PromptBundle, EvalError> {
        let canonical = match cond.task {
            TaskKind::Genre => render_genre_prompt(trial, cond.control_level)?,
            TaskKind::Detection => render_detection_prompt(trial, cond.control_level)?,
        };
        match cond.variant {
            Variant::Canonical => Ok(canonical),
            Variant::Ablation(kind) => Ok(apply_ablation(&canonical, kind)?),
            Variant::Paraphrase(run) => {
                let paraphraser = self.paraphraser.as_ref().ok_or_else(|| {
                    EvalError::Config(GatewayError::UnknownBackend(
                        "no paraphrase backend configured".to_string(),
                    ))
                })?;
                Ok(paraphrase_prompt(&canonical, self.gateway, paraphraser, run)?)
            }
        }
    }

    /// Classifies one trial, returning its prediction records. Per-item
    /// failures (refusal, parse gaps) are flagged, not propagated.
    fn classify_trial(
        &self,
        cond: &Condition,
        trial: &Trial,
    ) -> Result<Vec<PredictionRecord>, EvalError> {
        let backend = self.backend(&cond.backend_id)?;
        let bundle = self.render(cond, trial)?;
        let texts = bundle.stage_texts();

        // Two-stage genre flow: criteria first, then classification with
        // the criteria spliced in. Detection is single-stage.
        let classification_prompt = if texts.len() == 2 {
            match self.gateway.complete(backend, &texts[0]) {
                Ok(stage1) => texts[1].replace(CRITERIA_SLOT, &stage1.raw_text),
                Err(err) => return Ok(self.flag_all(trial, &err)?),
            }
        } else {
            texts[0].clone()
        };

        let completion = match self.gateway.complete(backend, &classification_prompt) {
            Ok(c) => c,
            Err(err) => return Ok(self.flag_all(trial, &err)?),
        };
        let labels = parse_label_list_partial(&completion.raw_text, trial.test_items.len());
        let records = trial
            .test_items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let predicted = labels.get(&(i + 1)).copied();
                let correct = predicted == Some(item.gold);
                let flagged = if predicted.is_none() {
                    Some("unparsed".to_string())
                } else {
                    None
                };
                PredictionRecord {
                    topic_index: trial.topic_index,
                    item_id: item.item_id.clone(),
                    gold: item.gold,
                    predicted,
                    correct,
                    flagged,
                    raw_digest: completion.request_digest.clone(),
                }
            })
            .collect();
        Ok(records)
    }

    /// Configuration-level failures abort; item-level ones get flagged.
    fn flag_all(
        &self,
        trial: &Trial,
        err: &GatewayError,
    ) -> Result<Vec<PredictionRecord>, EvalError> {
        let reason = match err {
            GatewayError::BackendRefusal { .. } => "refusal".to_string(),
            GatewayError::RateLimited { .. } => "rate-limited".to_string(),
            GatewayError::NetworkError { .. } => "network-error".to_string(),
            GatewayError::Protocol { .. } => "protocol-error".to_string(),
            GatewayError::AuthMissing { backend, var } => {
                return Err(EvalError::Config(GatewayError::AuthMissing {
                    backend: backend.clone(),
                    var: var.clone(),
                }))
            }
            GatewayError::UnknownBackend(id) => {
                return Err(EvalError::Config(GatewayError::UnknownBackend(id.clone())))
            }
            GatewayError::Offline(id) => {
                return Err(EvalError::Config(GatewayError::Offline(id.clone())))
            }
            GatewayError::CacheIo(e) => {
                return Err(EvalError::Config(GatewayError::NetworkError {
                    backend: "cache".to_string(),
                    detail: e.to_string(),
                }))
            }
        };
        log::warn!("trial t{:02} flagged: {err}", trial.topic_index);
        Ok(trial
            .test_items
            .iter()
            .map(|item| PredictionRecord {
                topic_index: trial.topic_index,
                item_id: item.item_id.clone(),
                gold: item.gold,
                predicted: None,
                correct: false,
                flagged: Some(reason.clone()),
                raw_digest: String::new(),
            })
            .collect())
    }

    fn run_topic(&self, cond: &Condition, topic: usize) -> Result<Vec<PredictionRecord>, EvalError> {
        let trial = self.trial(cond, topic)?;
        self.classify_trial(cond, &trial)
    }

    /// Runs every topic of one condition; parallel across topics under the
    /// `parallel` feature with a deterministic ordered reduction.
    pub fn run_condition(&self, cond: &Condition) -> Result<ConditionResult, EvalError> {
        let topics: Vec<usize> = (0..self.n_topics).collect();
        #[cfg(feature = "parallel")]
        let per_topic: Result<Vec<Vec<PredictionRecord>>, EvalError> = topics
            .par_iter()
            .map(|&t| self.run_topic(cond, t))
            .collect();
        #[cfg(not(feature = "parallel"))]
        let per_topic: Result<Vec<Vec<PredictionRecord>>, EvalError> =
            topics.iter().map(|&t| self.run_topic(cond, t)).collect();
        let predictions: Vec<PredictionRecord> = per_topic?.into_iter().flatten().collect();
        if predictions.is_empty() {
            return Err(EvalError::EmptyResult);
        }
        Ok(ConditionResult {
            condition: cond.clone(),
            predictions,
        })
    }

    /// Sequential twin of [`run_condition`], always available; benchmarked
    /// against the parallel path.
    pub fn run_condition_seq(&self, cond: &Condition) -> Result<ConditionResult, EvalError> {
        let mut predictions = Vec::new();
        for topic in 0..self.n_topics {
            predictions.extend(self.run_topic(cond, topic)?);
        }
        if predictions.is_empty() {
            return Err(EvalError::EmptyResult);
        }
        Ok(ConditionResult {
            condition: cond.clone(),
            predictions,
        })
    }

    /// Accuracy per shot count for the given conditions; test items are
    /// identical across shot counts by trial construction.
    pub fn shot_sweep(
        &self,
        base_conditions: &[Condition],
        shots: &[usize],
    ) -> Result<Vec<SweepRow>, EvalError> {
        let mut rows = Vec::new();
        for cond in base_conditions {
            for &n_shots in shots {
                let run = cond.clone().with_shots(n_shots);
                let result = self.run_condition(&run)?;
                rows.push(SweepRow {
                    condition_key: cond.key(),
                    n_shots,
                    n: result.n_total(),
                    accuracy: round_1dp(accuracy(&result)?),
                });
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub condition_key: String,
    pub n_shots: usize,
    pub n: usize,
    pub accuracy: f64,
}

/// Row of the condition summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub task: TaskKind,
    pub backend_id: String,
    pub polarity: Polarity,
    pub control_level: ControlLevel,
    pub variant: String,
    pub n_shots: usize,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub cond_a: String,
    pub cond_b: String,
    pub b: usize,
    pub c: usize,
    pub p: f64,
    pub method: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub model_digest: String,
    pub template_version: String,
    pub backend_ids: Vec<String>,
}

/// Per-condition accuracies, significance table, sweep rows, and the raw
/// predictions they were computed from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub summaries: Vec<ConditionSummary>,
    pub significance: Vec<SignificanceRow>,
    pub sweep: Vec<SweepRow>,
    pub metadata: RunMetadata,
    pub results: Vec<ConditionResult>,
}

impl ExperimentReport {
    /// Builds the report from raw results: summaries sorted canonically,
    /// all within-(task, backend) condition pairs tested for significance.
    pub fn from_results(
        mut results: Vec<ConditionResult>,
        sweep: Vec<SweepRow>,
        metadata: RunMetadata,
    ) -> Result<ExperimentReport, EvalError> {
        results.sort_by_key(|r| r.condition.sort_key());
        let mut summaries = Vec::with_capacity(results.len());
        for result in &results {
            summaries.push(ConditionSummary {
                task: result.condition.task,
                backend_id: result.condition.backend_id.clone(),
                polarity: result.condition.polarity,
                control_level: result.condition.control_level,
                variant: result.condition.variant.as_string(),
                n_shots: result.condition.n_shots,
                n: result.n_total(),
                correct: result.n_correct(),
                accuracy: round_1dp(accuracy(result)?),
            });
        }

        let mut significance = Vec::new();
        let groups: BTreeSet<(String, String)> = results
            .iter()
            .map(|r| (r.condition.task.as_str().to_string(), r.condition.backend_id.clone()))
            .collect();
        for (task, backend) in groups {
            let members: Vec<&ConditionResult> = results
                .iter()
                .filter(|r| {
                    r.condition.task.as_str() == task && r.condition.backend_id == backend
                })
                .collect();
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    if let Ok(outcome) = mcnemar_test(members[i], members[j]) {
                        significance.push(SignificanceRow {
                            cond_a: members[i].condition.key(),
                            cond_b: members[j].condition.key(),
                            b: outcome.b_count,
                            c: outcome.c_count,
                            p: outcome.p_value,
                            method: outcome.method,
                        });
                    }
                }
            }
        }

        Ok(ExperimentReport {
            summaries,
            significance,
            sweep,
            metadata,
            results,
        })
    }
}

/// Prediction line of `predictions.jsonl`.
#[derive(Debug, Serialize)]
struct PredictionLine<'a> {
    condition: String,
    task: &'a str,
    backend: &'a str,
    polarity: &'a str,
    control: &'a str,
    variant: String,
    shots: usize,
    topic_index: usize,
    item_id: &'a str,
    gold: ClassLabel,
    predicted: Option<ClassLabel>,
    correct: bool,
    flagged: &'a Option<String>,
    raw_digest: &'a str,
}

/// Writes `report.md`, `report.csv`, `predictions.jsonl`, and
/// `significance.csv` (plus `sweep.csv` when a sweep ran) with fully
/// deterministic content and ordering.
pub fn emit_report(report: &ExperimentReport, out_dir: &Path) -> Result<(), EvalError> {
    fs::create_dir_all(out_dir)?;

    // report.csv
    let mut csv = String::from("task,backend,polarity,control,variant,shots,n,accuracy\n");
    for s in &report.summaries {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{:.1}",
            s.task.as_str(),
            s.backend_id,
            s.polarity.as_str(),
            s.control_level.as_str(),
            s.variant,
            s.n_shots,
            s.n,
            s.accuracy
        )
        .expect("write to string");
    }
    fs::write(out_dir.join("report.csv"), csv)?;

    // significance.csv
    let mut sig = String::from("cond_a,cond_b,b,c,p,method\n");
    for row in &report.significance {
        writeln!(
            sig,
            "{},{},{},{},{:.10},{}",
            row.cond_a, row.cond_b, row.b, row.c, row.p, row.method
        )
        .expect("write to string");
    }
    fs::write(out_dir.join("significance.csv"), sig)?;

    // sweep.csv (only when a sweep ran)
    if !report.sweep.is_empty() {
        let mut sweep = String::from("condition,shots,n,accuracy\n");
        for row in &report.sweep {
            writeln!(sweep, "{},{},{},{:.1}", row.condition_key, row.n_shots, row.n, row.accuracy)
                .expect("write to string");
        }
        fs::write(out_dir.join("sweep.csv"), sweep)?;
    }

    // predictions.jsonl
    let mut lines = String::new();
    for result in &report.results {
        let c = &result.condition;
        for p in &result.predictions {
            let line = PredictionLine {
                condition: c.key(),
                task: c.task.as_str(),
                backend: &c.backend_id,
                polarity: c.polarity.as_str(),
                control: c.control_level.as_str(),
                variant: c.variant.as_string(),
                shots: c.n_shots,
                topic_index: p.topic_index,
                item_id: &p.item_id,
                gold: p.gold,
                predicted: p.predicted,
                correct: p.correct,
                flagged: &p.flagged,
                raw_digest: &p.raw_digest,
            };
            lines.push_str(&serde_json::to_string(&line).expect("serializable"));
            lines.push('\n');
        }
    }
    fs::write(out_dir.join("predictions.jsonl"), lines)?;

    // report.md: one accuracy table per task mirroring the four-column
    // layout (on-topic basic | off-topic basic / simple / detailed).
    fs::write(out_dir.join("report.md"), render_markdown(report))?;
    Ok(())
}

fn render_markdown(report: &ExperimentReport) -> String {
    let mut md = String::from("# Experiment report\n");
    let canonical_five_shot = |s: &ConditionSummary| s.variant == "canonical" && s.n_shots == 5;

    for task in [TaskKind::Genre, TaskKind::Detection] {
        let rows: BTreeSet<String> = report
            .summaries
            .iter()
            .filter(|s| s.task == task && canonical_five_shot(s))
            .map(|s| s.backend_id.clone())
            .collect();
        if rows.is_empty() {
            continue;
        }
        let title = match task {
            TaskKind::Genre => "Genre Classification",
            TaskKind::Detection => "Generated Text Detection",
        };
        md.push_str(&format!("\n## {title}\n\n"));
        md.push_str("| Model | on-topic basic | off-topic basic | off-topic simple control | off-topic detailed control |\n");
        md.push_str("|---|---|---|---|---|\n");
        for backend in rows {
            let cell = |polarity: Polarity, control: ControlLevel| -> String {
                report
                    .summaries
                    .iter()
                    .find(|s| {
                        s.task == task
                            && s.backend_id == backend
                            && s.polarity == polarity
                            && s.control_level == control
                            && canonical_five_shot(s)
                    })
                    .map(|s| format!("{:.1}", s.accuracy))
                    .unwrap_or_else(|| "-".to_string())
            };
            md.push_str(&format!(
                "| {backend} | {} | {} | {} | {} |\n",
                cell(Polarity::OnTopic, ControlLevel::Basic),
                cell(Polarity::OffTopic, ControlLevel::Basic),
                cell(Polarity::OffTopic, ControlLevel::Simple),
                cell(Polarity::OffTopic, ControlLevel::Detailed),
            ));
        }
    }

    // Variant table (ablations and paraphrases), when present.
    let variants: Vec<&ConditionSummary> = report
        .summaries
        .iter()
        .filter(|s| s.variant != "canonical")
        .collect();
    if !variants.is_empty() {
        md.push_str("\n## Prompt variants\n\n");
        md.push_str("| Condition | Variant | Accuracy |\n|---|---|---|\n");
        for s in variants {
            md.push_str(&format!(
                "| {}/{}/{}/{} | {} | {:.1} |\n",
                s.task.as_str(),
                s.backend_id,
                s.polarity.as_str(),
                s.control_level.as_str(),
                s.variant,
                s.accuracy
            ));
        }
    }

    if !report.sweep.is_empty() {
        md.push_str("\n## Shot sweep\n\n| Condition | Shots | Accuracy |\n|---|---|---|\n");
        for row in &report.sweep {
            md.push_str(&format!(
                "| {} | {} | {:.1} |\n",
                row.condition_key, row.n_shots, row.accuracy
            ));
        }
    }

    md.push_str(&format!(
        "\n## Run metadata\n\n- seed: {}\n- model digest: {}\n- templates: {}\n- backends: {}\n",
        report.metadata.seed,
        if report.metadata.model_digest.is_empty() { "-" } else { &report.metadata.model_digest },
        report.metadata.template_version,
        report.metadata.backend_ids.join(", ")
    ));
    md
}
