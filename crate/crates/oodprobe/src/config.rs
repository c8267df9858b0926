//! Experiment configuration: one TOML file drives every pipeline stage.
//!
//! ```toml
//! seed = 42                       # required; no implicit entropy
//!
//! [corpus]
//! path = "fixtures/corpus.jsonl"
//!
//! [topics]
//! k = 25
//! train_iters = 1000
//! infer_iters = 200
//! burn_in = 100
//! min_doc_freq = 5
//! # stopwords = "fixtures/stopwords.txt"   # built-in list if omitted
//!
//! [splits]
//! example_pool = 20
//! test_pool = 20
//!
//! [experiment]
//! tasks = ["genre", "detection"]
//! backends = ["stub:style_oracle"]
//! shots = 5
//! n_test = 10
//! sweep_shots = [1, 2, 3, 4, 5]
//! paraphraser = "stub:echo_paraphrase"
//! generator = "stub:reverser"
//!
//! [output]
//! dir = "out"
//! cache_dir = "cache"
//! offline = true
//!
//! [[backend_specs]]               # optional overrides for live backends
//! backend_id = "live:gpt-4o"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! auth_env_var = "OODPROBE_OPENAI_KEY"
//! protocol = "open_ai_chat"
//! model = "gpt-4o"
//! temperature = 0.0
//! max_output_tokens = 1024
//! ```
//!
//! Stub ids (`stub:style_oracle`, `stub:topic_biased_oracle`,
//! `stub:reverser`, `stub:echo_paraphrase`) resolve without a spec;
//! `live:<model>` ids get endpoint and auth defaults by vendor.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gateway::{builtin_stub_spec, default_live_spec, BackendSpec, Decoding, Protocol};
use crate::splitter::TaskKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field {field}: {detail}")]
    Invalid { field: String, detail: String },
}

fn invalid(field: &str, detail: String) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        detail,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicsSection {
    pub k: usize,
    /// Defaults to 50 / k.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub train_iters: usize,
    pub infer_iters: usize,
    pub burn_in: usize,
    pub min_doc_freq: usize,
    pub stopwords: Option<PathBuf>,
    /// Reuse an already-trained model file instead of training.
    pub model_path: Option<PathBuf>,
}

impl Default for TopicsSection {
    fn default() -> TopicsSection {
        TopicsSection {
            k: 25,
            alpha: None,
            beta: 0.01,
            train_iters: 1000,
            infer_iters: 200,
            burn_in: 100,
            min_doc_freq: 5,
            stopwords: None,
            model_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitsSection {
    pub example_pool: usize,
    pub test_pool: usize,
}

impl Default for SplitsSection {
    fn default() -> SplitsSection {
        SplitsSection {
            example_pool: crate::splitter::DEFAULT_POOL,
            test_pool: crate::splitter::DEFAULT_POOL,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    pub tasks: Vec<String>,
    pub backends: Vec<String>,
    pub shots: usize,
    pub n_test: usize,
    pub sweep_shots: Vec<usize>,
    pub paraphraser: Option<String>,
    pub generator: Option<String>,
}

impl Default for ExperimentSection {
    fn default() -> ExperimentSection {
        ExperimentSection {
            tasks: vec!["genre".to_string()],
            backends: vec!["stub:style_oracle".to_string()],
            shots: 5,
            n_test: 10,
            sweep_shots: vec![1, 2, 3, 4, 5],
            paraphraser: Some("stub:echo_paraphrase".to_string()),
            generator: Some("stub:reverser".to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub cache_dir: PathBuf,
    pub offline: bool,
}

impl Default for OutputSection {
    fn default() -> OutputSection {
        OutputSection {
            dir: PathBuf::from("out"),
            cache_dir: PathBuf::from("cache"),
            offline: true,
        }
    }
}

/// Explicit backend spec entry (flattened decoding for TOML ergonomics).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendSpecEntry {
    pub backend_id: String,
    pub endpoint: String,
    pub auth_env_var: Option<String>,
    pub protocol: Protocol,
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
}

fn default_max_tokens() -> u32 {
    1024
}

impl BackendSpecEntry {
    fn to_spec(&self) -> BackendSpec {
        BackendSpec {
            backend_id: self.backend_id.clone(),
            endpoint: self.endpoint.clone(),
            auth_env_var: self.auth_env_var.clone(),
            protocol: self.protocol,
            model: self.model.clone(),
            decoding: Decoding {
                temperature: self.temperature,
                max_output_tokens: self.max_output_tokens,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Root seed; every random draw in the run derives from it.
    pub seed: u64,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub topics: TopicsSection,
    #[serde(default)]
    pub splits: SplitsSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub backend_specs: Vec<BackendSpecEntry>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let config: ExperimentConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn alpha(&self) -> f64 {
        self.topics.alpha.unwrap_or(50.0 / self.topics.k as f64)
    }

    pub fn tasks(&self) -> Result<Vec<TaskKind>, ConfigError> {
        self.experiment
            .tasks
            .iter()
            .map(|t| match t.as_str() {
                "genre" => Ok(TaskKind::Genre),
                "detection" => Ok(TaskKind::Detection),
                other => Err(invalid(
                    "experiment.tasks",
                    format!("unknown task {other:?}; expected \"genre\" or \"detection\""),
                )),
            })
            .collect()
    }

    /// Resolves a backend id: explicit spec entry, built-in stub, or a
    /// vendor default for `live:` ids.
    pub fn resolve_backend(&self, id: &str) -> Result<BackendSpec, ConfigError> {
        if let Some(entry) = self.backend_specs.iter().find(|e| e.backend_id == id) {
            return Ok(entry.to_spec());
        }
        if let Some(spec) = builtin_stub_spec(id) {
            return Ok(spec);
        }
        if let Some(spec) = default_live_spec(id) {
            return Ok(spec);
        }
        Err(invalid(
            "experiment.backends",
            format!("backend {id:?} has no spec (not a built-in stub, not live:<model>)"),
        ))
    }

    /// All backends the run touches: classifiers, paraphraser, generator.
    pub fn all_backends(&self) -> Result<BTreeMap<String, BackendSpec>, ConfigError> {
        let mut map = BTreeMap::new();
        let mut ids: Vec<&String> = self.experiment.backends.iter().collect();
        if let Some(p) = &self.experiment.paraphraser {
            ids.push(p);
        }
        if let Some(g) = &self.experiment.generator {
            ids.push(g);
        }
        for id in ids {
            map.insert(id.clone(), self.resolve_backend(id)?);
        }
        Ok(map)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.experiment.backends.is_empty() {
            return Err(invalid("experiment.backends", "at least one backend required".into()));
        }
        if self.topics.k == 0 {
            return Err(invalid("topics.k", "topic count must be positive".into()));
        }
        if self.experiment.n_test % 2 != 0 {
            return Err(invalid(
                "experiment.n_test",
                format!("{} is odd; balanced test sets need an even count", self.experiment.n_test),
            ));
        }
        if self.experiment.shots == 0 || self.experiment.shots > self.splits.example_pool {
            return Err(invalid(
                "experiment.shots",
                format!(
                    "{} shots cannot be drawn from example pools of {}",
                    self.experiment.shots, self.splits.example_pool
                ),
            ));
        }
        if self.experiment.n_test / 2 > self.splits.test_pool {
            return Err(invalid(
                "experiment.n_test",
                format!(
                    "{} test items per class cannot be drawn from test pools of {}",
                    self.experiment.n_test / 2,
                    self.splits.test_pool
                ),
            ));
        }
        self.tasks()?;
        let backends = self.all_backends()?;
        for (id, spec) in &backends {
            if !spec.is_stub() {
                if self.output.offline {
                    return Err(invalid(
                        "output.offline",
                        format!("offline mode forbids live backend {id}"),
                    ));
                }
                // Validation-first: fail before any stage runs or any
                // network call happens.
                if let Some(var) = &spec.auth_env_var {
                    if std::env::var(var).map(|v| v.is_empty()).unwrap_or(true) {
                        return Err(invalid(
                            "experiment.backends",
                            format!("backend {id} requires env var {var}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// The stopword set: configured file or the built-in frozen list.
    pub fn stopwords(&self) -> Result<std::collections::HashSet<String>, ConfigError> {
        match &self.topics.stopwords {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.display().to_string(),
                    source,
                })?;
                Ok(text.split_whitespace().map(|s| s.to_string()).collect())
            }
            None => Ok(crate::fixture::stopword_list().into_iter().collect()),
        }
    }
}
