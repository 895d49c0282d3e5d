use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rcvae_bench::{desk_model, desk_samples};
use rcvae_core::dataio::split;
use rcvae_core::embedviz::{cluster, tsne_2d, TsneConfig};
use rcvae_core::hpo::{BoState, SearchSpace, Trial};
use rcvae_core::model::InitScheme;
use rcvae_core::numcore::streams;
use rcvae_core::trainer::{batch_gradients, draw_noise, feature_matrix, train, TrainInputs};
use rcvae_core::{Ablation, LabelVocab, Matrix, RcvaeParams, Rng, ScalerParams, SplitSpec, TrainConfig};

fn model_passes(c: &mut Criterion) {
    let (samples, layout) = desk_samples(4, 20, 8, 0).expect("fixture");
    let model = desk_model(layout, 16);
    let vocab = LabelVocab::build(samples.iter().map(|s| &s.label)).expect("vocab");
    let mut rng = Rng::seed_from(0).substream(streams::INIT);
    let params = RcvaeParams::init(model, vocab.len(), InitScheme::NearIdentity, &mut rng).expect("init");
    let batch = &samples[..32];
    let x = feature_matrix(batch).expect("features");
    let idx: Vec<usize> = batch.iter().map(|s| vocab.index_of(&s.label).expect("label")).collect();
    let eps = draw_noise(&mut rng, model.latent_dim, batch.len());

    c.bench_function("forward_batch_32_16_layers", |b| {
        b.iter(|| params.forward_batch(black_box(&x), &idx, &eps, &Ablation::NONE).expect("forward"))
    });
    c.bench_function("gradients_batch_32_16_layers", |b| {
        b.iter(|| batch_gradients(&params, black_box(&x), &idx, &eps, &Ablation::NONE).expect("backward"))
    });
}

fn training_epoch(c: &mut Criterion) {
    let (samples, layout) = desk_samples(8, 20, 8, 0).expect("fixture");
    let (train_set, val_set, _) = split(&samples, &SplitSpec { seed: 0, n_cycles: 20 }).expect("split");
    let inputs = TrainInputs {
        train: &train_set,
        val: &val_set,
        scaler: ScalerParams::new([(0.0, 1.0); 4]).expect("scaler"),
        layout,
    };
    let cfg = TrainConfig {
        max_epochs: 1,
        patience: 0,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one_epoch_8_batteries_4_layers", |b| {
        b.iter(|| train(&inputs, desk_model(layout, 4), &cfg).expect("train"))
    });
    group.finish();
}

fn embedding_analysis(c: &mut Criterion) {
    let mut rng = Rng::seed_from(0);
    let table = Matrix::from_vec(100, 32, rng.normal_sample(100 * 32)).expect("table");
    let cfg = TsneConfig {
        iterations: 300,
        ..TsneConfig::default()
    };
    let mut group = c.benchmark_group("embedviz");
    group.sample_size(10);
    group.bench_function("tsne_100x32_300_iters", |b| b.iter(|| tsne_2d(black_box(&table), &cfg).expect("tsne")));
    let points = tsne_2d(&table, &cfg).expect("tsne").points;
    group.bench_function("kmeans_100_k6", |b| b.iter(|| cluster(black_box(&points), 6, 0).expect("kmeans")));
    group.finish();
}

fn hpo_suggest(c: &mut Criterion) {
    let space = SearchSpace::rcvae();
    let mut state = BoState::new(space).expect("state");
    let mut rng = Rng::seed_from(0).substream(streams::HPO);
    for _ in 0..20 {
        let point = state.suggest(&mut rng).expect("suggest");
        let objective = point.iter().map(|v| v.ln_1p()).sum::<f64>();
        state.observe(Trial::ok(point, objective)).expect("observe");
    }
    c.bench_function("bo_suggest_after_20_trials", |b| {
        b.iter_batched(
            || (state.clone(), rng.clone()),
            |(mut s, mut r)| s.suggest(&mut r).expect("suggest"),
            criterion::BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, model_passes, training_epoch, embedding_analysis, hpo_suggest);
criterion_main!(benches);
