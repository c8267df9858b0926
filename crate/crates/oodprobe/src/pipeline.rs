//! Config-driven stage orchestration behind the CLI.
//!
//! Stages run in dependency order, each writing its artifacts under the
//! output directory and never mutating what an earlier stage produced:
//!
//! ```text
//! ingest        -> manifest.json
//! train-topics  -> model.tm          (reused when params match)
//! score         -> mixtures.jsonl
//! split         -> splits.jsonl
//! synth         -> detection/t{NN}_{polarity}.jsonl   (detection task only)
//! run           -> results_main.json
//! ablate        -> results_ablate.json                (on demand)
//! sweep         -> sweep_rows.json                    (on demand)
//! report        -> report.md, report.csv, predictions.jsonl, significance.csv
//! replay        -> re-runs `run` from cache and verifies stored results
//! ```
//!
//! Reruns are idempotent given the completion cache: identical seeds and
//! cache contents reproduce byte-identical reports.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, ExperimentConfig};
use crate::corpus::{self, DocumentSet};
use crate::evalstats::{
    accuracy, emit_report, round_1dp, table_grid, Condition, ConditionResult, EvalError,
    Experiment, ExperimentReport, RunMetadata, SweepRow, TEMPLATE_VERSION,
};
use crate::gateway::Gateway;
use crate::promptkit::{AblationKind, ControlLevel, Variant};
use crate::splitter::{
    build_domain_split, rank_by_genre, sample_genre_pair, GenrePair, Polarity, TaskKind,
};
use crate::synthgen::{build_detection_dataset, save_dataset, DetectionParams};
use crate::topics::{
    build_vocabulary, load_model, save_model, score_documents, train_topic_model, InferParams,
    TopicMixture, TopicModel, TrainParams,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Topics(#[from] crate::topics::TopicsError),
    #[error(transparent)]
    Split(#[from] crate::splitter::SplitError),
    #[error(transparent)]
    Synth(#[from] crate::synthgen::SynthError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
}

impl PipelineError {
    /// CLI exit code: 1 for configuration problems, 2 for everything that
    /// happens after validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Pipeline stages, in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    TrainTopics,
    Score,
    Split,
    Synth,
    Run,
    Ablate,
    Sweep,
    Report,
    Replay,
}

impl Stage {
    pub const NAMES: [&'static str; 10] = [
        "ingest",
        "train-topics",
        "score",
        "split",
        "synth",
        "run",
        "ablate",
        "sweep",
        "report",
        "replay",
    ];
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Stage, String> {
        Ok(match s {
            "ingest" => Stage::Ingest,
            "train-topics" => Stage::TrainTopics,
            "score" => Stage::Score,
            "split" => Stage::Split,
            "synth" => Stage::Synth,
            "run" => Stage::Run,
            "ablate" => Stage::Ablate,
            "sweep" => Stage::Sweep,
            "report" => Stage::Report,
            "replay" => Stage::Replay,
            other => return Err(format!("unknown stage {other:?}; one of {:?}", Stage::NAMES)),
        })
    }
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub exit_code: i32,
    pub flagged_items: usize,
}

struct Paths {
    manifest: PathBuf,
    model: PathBuf,
    mixtures: PathBuf,
    splits: PathBuf,
    detection_dir: PathBuf,
    results_main: PathBuf,
    results_ablate: PathBuf,
    sweep_rows: PathBuf,
}

impl Paths {
    fn new(out_dir: &Path) -> Paths {
        Paths {
            manifest: out_dir.join("manifest.json"),
            model: out_dir.join("model.tm"),
            mixtures: out_dir.join("mixtures.jsonl"),
            splits: out_dir.join("splits.jsonl"),
            detection_dir: out_dir.join("detection"),
            results_main: out_dir.join("results_main.json"),
            results_ablate: out_dir.join("results_ablate.json"),
            sweep_rows: out_dir.join("sweep_rows.json"),
        }
    }
}

pub struct Pipeline {
    config: ExperimentConfig,
    paths: Paths,
    gateway: Gateway,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Result<Pipeline, PipelineError> {
        fs::create_dir_all(&config.output.dir)?;
        let gateway = Gateway::new(&config.output.cache_dir).offline(config.output.offline);
        let paths = Paths::new(&config.output.dir);
        Ok(Pipeline {
            config,
            paths,
            gateway,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    fn stage_ingest(&self) -> Result<DocumentSet, PipelineError> {
        let docs = corpus::ingest(&self.config.corpus.path)?;
        fs::write(
            &self.paths.manifest,
            serde_json::to_string_pretty(docs.manifest()).expect("serializable"),
        )?;
        log::info!("ingested {} documents", docs.len());
        Ok(docs)
    }

    fn load_docs(&self) -> Result<DocumentSet, PipelineError> {
        corpus::ingest(&self.config.corpus.path).map_err(PipelineError::from)
    }

    fn train_params(&self) -> TrainParams {
        TrainParams {
            k: self.config.topics.k,
            alpha: self.config.alpha(),
            beta: self.config.topics.beta,
            n_iters: self.config.topics.train_iters,
            seed: self.config.seed,
        }
    }

    fn stage_train(&self, docs: &DocumentSet) -> Result<TopicModel, PipelineError> {
        if let Some(path) = &self.config.topics.model_path {
            log::info!("loading topic model from {}", path.display());
            return Ok(load_model(path)?);
        }
        let params = self.train_params();
        if self.paths.model.exists() {
            let existing = load_model(&self.paths.model)?;
            if existing.k == params.k
                && existing.seed == params.seed
                && existing.trained_iters == params.n_iters
                && existing.alpha.to_bits() == params.alpha.to_bits()
                && existing.beta.to_bits() == params.beta.to_bits()
            {
                log::info!("reusing trained model {}", self.paths.model.display());
                return Ok(existing);
            }
        }
        let stopwords = self.config.stopwords()?;
        let vocabulary = build_vocabulary(docs, self.config.topics.min_doc_freq, &stopwords)?;
        log::info!(
            "training {}-topic model over {} terms, {} iterations",
            params.k,
            vocabulary.len(),
            params.n_iters
        );
        let model = train_topic_model(docs, &vocabulary, &params)?;
        save_model(&model, &self.paths.model)?;
        Ok(model)
    }

    fn load_trained(&self) -> Result<TopicModel, PipelineError> {
        if let Some(path) = &self.config.topics.model_path {
            return Ok(load_model(path)?);
        }
        if !self.paths.model.exists() {
            return Err(PipelineError::Artifact(format!(
                "no model at {}; run the train-topics stage first",
                self.paths.model.display()
            )));
        }
        Ok(load_model(&self.paths.model)?)
    }

    fn stage_score(
        &self,
        model: &TopicModel,
        docs: &DocumentSet,
    ) -> Result<Vec<TopicMixture>, PipelineError> {
        let params = InferParams {
            n_iters: self.config.topics.infer_iters,
            burn_in: self.config.topics.burn_in,
            seed: crate::derive_seed(self.config.seed, &["score"]),
        };
        let mixtures = score_documents(model, docs, &params);
        let mut out = String::new();
        for mixture in &mixtures {
            out.push_str(&serde_json::to_string(mixture).expect("serializable"));
            out.push('\n');
        }
        fs::write(&self.paths.mixtures, out)?;
        log::info!("scored {} documents", mixtures.len());
        Ok(mixtures)
    }

    fn load_mixtures(&self) -> Result<Vec<TopicMixture>, PipelineError> {
        if !self.paths.mixtures.exists() {
            return Err(PipelineError::Artifact(format!(
                "no mixtures at {}; run the score stage first",
                self.paths.mixtures.display()
            )));
        }
        let reader = BufReader::new(fs::File::open(&self.paths.mixtures)?);
        let mut mixtures = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            mixtures.push(
                serde_json::from_str(&line)
                    .map_err(|e| PipelineError::Artifact(format!("bad mixture line: {e}")))?,
            );
        }
        Ok(mixtures)
    }

    /// Split manifest line: everything needed to replay a trial exactly.
    fn stage_split(
        &self,
        docs: &DocumentSet,
        mixtures: &[TopicMixture],
    ) -> Result<(), PipelineError> {
        #[derive(Serialize)]
        struct SplitLine<'a> {
            topic_index: usize,
            polarity: Polarity,
            pair: GenrePair,
            split: &'a crate::splitter::DomainSplit,
        }
        let mut out = fs::File::create(&self.paths.splits)?;
        for topic in 0..self.config.topics.k {
            let rankings = rank_by_genre(docs, mixtures, topic)?;
            let pair = sample_genre_pair(topic, &crate::corpus::Genre::ALL, self.config.seed);
            for polarity in [Polarity::OnTopic, Polarity::OffTopic] {
                let split = build_domain_split(
                    &rankings,
                    self.config.splits.example_pool,
                    self.config.splits.test_pool,
                    polarity,
                    topic,
                )?;
                let line = SplitLine {
                    topic_index: topic,
                    polarity,
                    pair,
                    split: &split,
                };
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&line).expect("serializable")
                )?;
            }
        }
        log::info!("wrote split manifest for {} topics", self.config.topics.k);
        Ok(())
    }

    fn stage_synth(
        &self,
        docs: &DocumentSet,
        mixtures: &[TopicMixture],
    ) -> Result<(), PipelineError> {
        let generator_id = self.config.experiment.generator.as_ref().ok_or_else(|| {
            ConfigError::Invalid {
                field: "experiment.generator".into(),
                detail: "detection task needs a generator backend".into(),
            }
        })?;
        let generator = self.config.resolve_backend(generator_id)?;
        fs::create_dir_all(&self.paths.detection_dir)?;
        let params = DetectionParams {
            n_shots: self.config.experiment.shots,
            n_test: self.config.experiment.n_test,
            n_example_pool: self.config.splits.example_pool,
            n_test_pool: self.config.splits.test_pool,
            seed: self.config.seed,
        };
        for topic in 0..self.config.topics.k {
            for polarity in [Polarity::OnTopic, Polarity::OffTopic] {
                let (dataset, _) = build_detection_dataset(
                    docs,
                    mixtures,
                    &self.gateway,
                    &generator,
                    topic,
                    polarity,
                    &params,
                )?;
                let file = self
                    .paths
                    .detection_dir
                    .join(format!("t{topic:02}_{}.jsonl", polarity.as_str()));
                save_dataset(&dataset, &file)?;
            }
        }
        log::info!("synthesized detection datasets for {} topics", self.config.topics.k);
        Ok(())
    }

    fn experiment<'a>(
        &'a self,
        docs: &'a DocumentSet,
        mixtures: &'a [TopicMixture],
    ) -> Result<Experiment<'a>, PipelineError> {
        let backends = self.config.all_backends()?;
        let paraphraser = self
            .config
            .experiment
            .paraphraser
            .as_ref()
            .map(|id| self.config.resolve_backend(id))
            .transpose()?;
        let generator = self
            .config
            .experiment
            .generator
            .as_ref()
            .map(|id| self.config.resolve_backend(id))
            .transpose()?;
        Ok(Experiment {
            docs,
            mixtures,
            gateway: &self.gateway,
            backends,
            paraphraser,
            generator,
            n_topics: self.config.topics.k,
            n_test: self.config.experiment.n_test,
            n_example_pool: self.config.splits.example_pool,
            n_test_pool: self.config.splits.test_pool,
            seed: self.config.seed,
        })
    }

    fn main_grid(&self) -> Result<Vec<Condition>, PipelineError> {
        let mut grid = Vec::new();
        for task in self.config.tasks()? {
            for backend in &self.config.experiment.backends {
                for condition in table_grid(task, backend) {
                    grid.push(condition.with_shots(self.config.experiment.shots));
                }
            }
        }
        Ok(grid)
    }

    fn stage_run(
        &self,
        docs: &DocumentSet,
        mixtures: &[TopicMixture],
    ) -> Result<Vec<ConditionResult>, PipelineError> {
        let experiment = self.experiment(docs, mixtures)?;
        let mut results = Vec::new();
        for condition in self.main_grid()? {
            log::info!("running condition {}", condition.key());
            let result = experiment.run_condition(&condition)?;
            log::info!(
                "  accuracy {:.1} over {} predictions",
                round_1dp(accuracy(&result)?),
                result.n_total()
            );
            results.push(result);
        }
        fs::write(
            &self.paths.results_main,
            serde_json::to_string_pretty(&results).expect("serializable"),
        )?;
        Ok(results)
    }

    /// The variant grid mirroring the ablation table: three ablations of
    /// the detailed prompt plus three paraphrase runs each of the detailed
    /// and baseline prompts, all off-topic genre classification.
    fn ablate_grid(&self) -> Vec<Condition> {
        let mut grid = Vec::new();
        for backend in &self.config.experiment.backends {
            let detailed = Condition::new(
                TaskKind::Genre,
                Polarity::OffTopic,
                ControlLevel::Detailed,
                backend,
            )
            .with_shots(self.config.experiment.shots);
            for kind in AblationKind::ALL {
                grid.push(detailed.clone().with_variant(Variant::Ablation(kind)));
            }
            for run in 1..=3u8 {
                grid.push(detailed.clone().with_variant(Variant::Paraphrase(run)));
            }
            let basic = Condition::new(
                TaskKind::Genre,
                Polarity::OffTopic,
                ControlLevel::Basic,
                backend,
            )
            .with_shots(self.config.experiment.shots);
            for run in 1..=3u8 {
                grid.push(basic.clone().with_variant(Variant::Paraphrase(run)));
            }
        }
        grid
    }

    fn stage_ablate(
        &self,
        docs: &DocumentSet,
        mixtures: &[TopicMixture],
    ) -> Result<Vec<ConditionResult>, PipelineError> {
        let experiment = self.experiment(docs, mixtures)?;
        let mut results = Vec::new();
        for condition in self.ablate_grid() {
            log::info!("running variant condition {}", condition.key());
            results.push(experiment.run_condition(&condition)?);
        }
        fs::write(
            &self.paths.results_ablate,
            serde_json::to_string_pretty(&results).expect("serializable"),
        )?;
        Ok(results)
    }

    fn stage_sweep(
        &self,
        docs: &DocumentSet,
        mixtures: &[TopicMixture],
    ) -> Result<Vec<SweepRow>, PipelineError> {
        let experiment = self.experiment(docs, mixtures)?;
        let mut base = Vec::new();
        for task in self.config.tasks()? {
            for backend in &self.config.experiment.backends {
                base.push(Condition::new(task, Polarity::OffTopic, ControlLevel::Basic, backend));
                base.push(Condition::new(
                    task,
                    Polarity::OffTopic,
                    ControlLevel::Detailed,
                    backend,
                ));
            }
        }
        let rows = experiment.shot_sweep(&base, &self.config.experiment.sweep_shots)?;
        fs::write(
            &self.paths.sweep_rows,
            serde_json::to_string_pretty(&rows).expect("serializable"),
        )?;
        Ok(rows)
    }

    fn load_results(&self, path: &Path) -> Result<Vec<ConditionResult>, PipelineError> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Artifact(format!("bad results file {}: {e}", path.display())))
    }

    fn stage_report(&self) -> Result<usize, PipelineError> {
        let mut results = self.load_results(&self.paths.results_main)?;
        if results.is_empty() {
            return Err(PipelineError::Artifact(
                "no results to report; run the run stage first".to_string(),
            ));
        }
        results.extend(self.load_results(&self.paths.results_ablate)?);
        let sweep: Vec<SweepRow> = if self.paths.sweep_rows.exists() {
            serde_json::from_str(&fs::read_to_string(&self.paths.sweep_rows)?)
                .map_err(|e| PipelineError::Artifact(format!("bad sweep file: {e}")))?
        } else {
            Vec::new()
        };
        let flagged = results
            .iter()
            .flat_map(|r| &r.predictions)
            .filter(|p| p.flagged.is_some())
            .count();
        let model_digest = if self.paths.model.exists() {
            let bytes = fs::read(&self.paths.model)?;
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            hasher
                .finalize()
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect()
        } else {
            String::new()
        };
        let metadata = RunMetadata {
            seed: self.config.seed,
            model_digest,
            template_version: TEMPLATE_VERSION.to_string(),
            backend_ids: self.config.experiment.backends.clone(),
        };
        let report = ExperimentReport::from_results(results, sweep, metadata)?;
        emit_report(&report, &self.config.output.dir)?;
        log::info!("report written to {}", self.config.output.dir.display());
        Ok(flagged)
    }

    fn stage_replay(&self) -> Result<(), PipelineError> {
        let stored = self.load_results(&self.paths.results_main)?;
        if stored.is_empty() {
            return Err(PipelineError::Artifact(
                "nothing to replay; run the run stage first".to_string(),
            ));
        }
        let docs = self.load_docs()?;
        let mixtures = self.load_mixtures()?;
        let experiment = self.experiment(&docs, &mixtures)?;
        for old in &stored {
            let new = experiment.run_condition(&old.condition)?;
            if new.predictions != old.predictions {
                return Err(PipelineError::ReplayMismatch(old.condition.key()));
            }
        }
        log::info!("replay reproduced {} conditions exactly", stored.len());
        Ok(())
    }

    /// Runs one stage, loading prerequisite artifacts from the output
    /// directory.
    pub fn run_stage(&self, stage: Stage) -> Result<PipelineOutcome, PipelineError> {
        let mut flagged = 0usize;
        match stage {
            Stage::Ingest => {
                self.stage_ingest()?;
            }
            Stage::TrainTopics => {
                let docs = self.load_docs()?;
                self.stage_train(&docs)?;
            }
            Stage::Score => {
                let docs = self.load_docs()?;
                let model = self.load_trained()?;
                self.stage_score(&model, &docs)?;
            }
            Stage::Split => {
                let docs = self.load_docs()?;
                let mixtures = self.load_mixtures()?;
                self.stage_split(&docs, &mixtures)?;
            }
            Stage::Synth => {
                let docs = self.load_docs()?;
                let mixtures = self.load_mixtures()?;
                self.stage_synth(&docs, &mixtures)?;
            }
            Stage::Run => {
                let docs = self.load_docs()?;
                let mixtures = self.load_mixtures()?;
                self.stage_run(&docs, &mixtures)?;
            }
            Stage::Ablate => {
                let docs = self.load_docs()?;
                let mixtures = self.load_mixtures()?;
                self.stage_ablate(&docs, &mixtures)?;
            }
            Stage::Sweep => {
                let docs = self.load_docs()?;
                let mixtures = self.load_mixtures()?;
                self.stage_sweep(&docs, &mixtures)?;
            }
            Stage::Report => {
                flagged = self.stage_report()?;
            }
            Stage::Replay => {
                self.stage_replay()?;
            }
        }
        Ok(PipelineOutcome {
            exit_code: if flagged > 0 { 2 } else { 0 },
            flagged_items: flagged,
        })
    }

    /// The full pipeline in dependency order; `synth` runs only when the
    /// detection task is configured.
    pub fn run_all(&self) -> Result<PipelineOutcome, PipelineError> {
        let docs = self.stage_ingest()?;
        let model = self.stage_train(&docs)?;
        let mixtures = self.stage_score(&model, &docs)?;
        self.stage_split(&docs, &mixtures)?;
        if self.config.tasks()?.contains(&TaskKind::Detection) {
            self.stage_synth(&docs, &mixtures)?;
        }
        self.stage_run(&docs, &mixtures)?;
        let flagged = self.stage_report()?;
        Ok(PipelineOutcome {
            exit_code: if flagged > 0 { 2 } else { 0 },
            flagged_items: flagged,
        })
    }
}

/// Convenience entry point: load config, apply overrides, run.
pub fn run_pipeline(
    config_path: &Path,
    stage: Option<Stage>,
    seed_override: Option<u64>,
    offline_override: bool,
    out_override: Option<PathBuf>,
) -> Result<PipelineOutcome, PipelineError> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if offline_override {
        config.output.offline = true;
    }
    if let Some(out) = out_override {
        config.output.dir = out;
    }
    let pipeline = Pipeline::new(config)?;
    match stage {
        Some(stage) => pipeline.run_stage(stage),
        None => pipeline.run_all(),
    }
}
