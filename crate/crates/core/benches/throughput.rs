use std::time::Duration;

use absa_core::corpus::Vocabulary;
use absa_core::evaluation::evaluate_model;
use absa_core::exec::ExecMode;
use absa_core::model::{ModelConfig, ModelState};
use absa_core::synthetic::random_record;
use absa_core::training::{batch_gradients, prepare};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

// A batch of 50 sentences of up to 30 tokens, default model dimensions.
fn setup() -> (Vocabulary, ModelState<f32>, Vec<absa_core::corpus::SentenceRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let records: Vec<_> = (0..50).map(|_| random_record(30, &mut rng)).collect();
    let config = ModelConfig::default();
    let vocab = Vocabulary::build(&records, config.inverse_relations);
    let state = ModelState::new(config, &vocab, None, None, &mut rng).unwrap();
    (vocab, state, records)
}

fn bench_batch_gradients(c: &mut Criterion) {
    let (vocab, state, records) = setup();
    let examples = prepare(&records, &vocab).unwrap();
    let batch: Vec<_> = examples.iter().collect();
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| batch_gradients(&state, &batch, Some(1), mode).unwrap())
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let (vocab, state, records) = setup();
    let mut group = c.benchmark_group("evaluate_model");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| evaluate_model(&state, &vocab, &records, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_batch_gradients, bench_evaluate);
criterion_main!(benches);
