//! Harness for quantifying and mitigating the out-of-domain (OOD) gap of
//! in-context-learning classifiers on non-topical tasks.
//!
//! The pipeline: ingest a genre-annotated corpus, train a latent topic model
//! over it, rank documents per topic, carve on-topic/off-topic example pools
//! with shared on-topic test sets, render tiered indicator-control prompts,
//! score them through a classification backend (live API or deterministic
//! local stub), and report accuracies with exact paired significance tests.
//!
//! Modules map one-to-one onto pipeline stages:
//!
//! - [`corpus`]: document loading, validation, windowed excerpts
//! - [`topics`]: collapsed-Gibbs LDA training, inference, keywords
//! - [`splitter`]: topic rankings, domain splits, balanced trials
//! - [`promptkit`]: three control tiers of prompts, ablations, paraphrases
//! - [`gateway`]: backend access with caching, retries, label parsing
//! - [`synthgen`]: generated-text detection dataset synthesis
//! - [`evalstats`]: condition runner, accuracy, McNemar, shot sweeps, reports
//! - [`config`] + [`pipeline`]: config-driven stage orchestration for the CLI
//!
//! With the default `parallel` feature, per-document scoring and per-topic
//! trial execution fan out through rayon; without it every code path runs
//! sequentially with identical results.

pub mod config;
pub mod corpus;
pub mod evalstats;
pub mod fixture;
pub mod gateway;
pub mod pipeline;
pub mod promptkit;
pub mod splitter;
pub mod synthgen;
pub mod topics;

mod seeding;

pub use seeding::derive_seed;
