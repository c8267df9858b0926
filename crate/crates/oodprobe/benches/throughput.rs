//! Parallel vs sequential throughput on the two data-parallel hot paths:
//! corpus scoring (per-document topic inference) and condition execution
//! (per-topic trials). With the default `parallel` feature the dispatching
//! entry points fan out through rayon; the `*_seq` twins always run on one
//! thread, so one bench run shows both sides.
//!
//! ```bash
//! cargo bench -p oodprobe                          # rayon core
//! cargo bench -p oodprobe --no-default-features    # sequential core
//! ```

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use oodprobe::corpus::DocumentSet;
use oodprobe::evalstats::{Condition, Experiment};
use oodprobe::fixture::{fixture_corpus, FIXTURE_SEED};
use oodprobe::gateway::{BackendSpec, Gateway};
use oodprobe::promptkit::ControlLevel;
use oodprobe::splitter::{Polarity, TaskKind};
use oodprobe::topics::{
    build_vocabulary, score_documents, score_documents_seq, train_topic_model, InferParams,
    TopicMixture, TopicModel, TrainParams,
};

struct BenchCtx {
    docs: DocumentSet,
    model: TopicModel,
    mixtures: Vec<TopicMixture>,
}

fn build_ctx() -> BenchCtx {
    let docs = fixture_corpus(FIXTURE_SEED);
    let stopwords = oodprobe::fixture::stopword_list().into_iter().collect();
    let vocabulary = build_vocabulary(&docs, 5, &stopwords).expect("vocabulary");
    let params = TrainParams::new(25, FIXTURE_SEED).with_iters(60);
    let model = train_topic_model(&docs, &vocabulary, &params).expect("train");
    let mixtures = score_documents(&model, &docs, &InferParams::new(FIXTURE_SEED));
    BenchCtx {
        docs,
        model,
        mixtures,
    }
}

fn bench_scoring(c: &mut Criterion) {
    let ctx = build_ctx();
    let params = InferParams {
        n_iters: 40,
        burn_in: 20,
        seed: 1,
    };
    let mut group = c.benchmark_group("score_documents");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("dispatch", "600 docs"), |b| {
        b.iter(|| score_documents(&ctx.model, &ctx.docs, &params))
    });
    group.bench_function(BenchmarkId::new("sequential", "600 docs"), |b| {
        b.iter(|| score_documents_seq(&ctx.model, &ctx.docs, &params))
    });
    group.finish();
}

fn bench_condition(c: &mut Criterion) {
    let ctx = build_ctx();
    let cache = tempfile::tempdir().expect("tempdir");
    let gateway = Gateway::new(cache.path());
    let mut backends = BTreeMap::new();
    backends.insert(
        "stub:style_oracle".to_string(),
        BackendSpec::stub("stub:style_oracle"),
    );
    let experiment = Experiment {
        docs: &ctx.docs,
        mixtures: &ctx.mixtures,
        gateway: &gateway,
        backends,
        paraphraser: None,
        generator: Some(BackendSpec::stub("stub:reverser")),
        n_topics: 25,
        n_test: 10,
        n_example_pool: 5,
        n_test_pool: 5,
        seed: 3,
    };
    let condition = Condition::new(
        TaskKind::Genre,
        Polarity::OffTopic,
        ControlLevel::Basic,
        "stub:style_oracle",
    );
    let mut group = c.benchmark_group("run_condition");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("dispatch", "25 topics"), |b| {
        b.iter(|| experiment.run_condition(&condition).expect("run"))
    });
    group.bench_function(BenchmarkId::new("sequential", "25 topics"), |b| {
        b.iter(|| experiment.run_condition_seq(&condition).expect("run"))
    });
    group.finish();
}

criterion_group!(benches, bench_scoring, bench_condition);
criterion_main!(benches);
