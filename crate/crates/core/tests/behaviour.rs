use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhokit::inlp::{LossBench, ProjectionStack};
use rhokit::pipeline::{run_ladder, PipelineConfig};
use rhokit::sgns::{
    eval_loss, refit_output_layer, train_sgns, train_sgns_with_stats, EmbeddingSet, Objective, RefitConfig, SgnsConfig,
};
use rhokit::synth::{desk_corpus, GrammarConfig};

fn topics(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut topic = 0;
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.1 {
                topic = 1 - topic;
            }
            format!("{}{}", ["a", "b"][topic], rng.random_range(0..20))
        })
        .collect()
}

fn config() -> SgnsConfig {
    SgnsConfig { dim: 20, epochs: 5, min_count: 1, subsample_t: 1e-2, ..SgnsConfig::default() }
}

fn cosine(m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let (a, b) = (m.row(i), m.row(j));
    a.dot(&b) / (a.norm() * b.norm())
}

#[test]
fn topic_words_cluster() {
    let emb = train_sgns(&topics(50_000, 1), &config()).unwrap();
    let (mut intra, mut cross) = (Vec::new(), Vec::new());
    for i in 0..emb.len() {
        for j in i + 1..emb.len() {
            let same = emb.vocab[i].as_bytes()[0] == emb.vocab[j].as_bytes()[0];
            let c = cosine(&emb.input_vectors, i, j);
            if same { intra.push(c) } else { cross.push(c) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&intra) > mean(&cross) + 0.2, "intra {} cross {}", mean(&intra), mean(&cross));
}

#[test]
fn training_beats_random_vectors() {
    let tokens = topics(60_000, 2);
    let (train, held) = tokens.split_at(50_000);
    let (emb, stats) = train_sgns_with_stats(train, &config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut random = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-0.5..0.5) / c as f64);
    let (v, d) = (emb.len(), emb.dim());
    let untrained =
        EmbeddingSet::new(emb.vocab.clone(), random(v, d), random(v, d), DVector::zeros(v), emb.unigram_counts.clone())
            .unwrap();
    let trained_loss = eval_loss(&emb, held, Objective::FullSoftmax, 5, 5).unwrap().nats_per_prediction;
    let random_loss = eval_loss(&untrained, held, Objective::FullSoftmax, 5, 5).unwrap().nats_per_prediction;
    assert!(trained_loss < random_loss, "{trained_loss} vs {random_loss}");

    // epoch losses may wobble by 5% but not rise
    for pair in stats.epoch_losses.windows(2) {
        assert!(pair[1] <= pair[0] * 1.05, "{:?}", stats.epoch_losses);
    }
    assert!(stats.epoch_losses.last() < stats.epoch_losses.first());
}

#[test]
fn refit_keeps_inputs_and_beats_uniform() {
    let tokens = topics(30_000, 4);
    let emb = train_sgns(&tokens[..25_000], &config()).unwrap();
    let fit = refit_output_layer(&emb, &emb.input_vectors, &tokens[..25_000], &RefitConfig::default()).unwrap();
    assert_eq!(fit.embeddings.input_vectors, emb.input_vectors);
    let loss = eval_loss(&fit.embeddings, &tokens[25_000..], Objective::FullSoftmax, 5, 0).unwrap().nats_per_prediction;
    assert!(loss <= (emb.len() as f64).ln() + 0.1, "{loss}");
}

#[test]
fn identity_filter_costs_nothing() {
    let tokens = topics(30_000, 5);
    let emb = train_sgns(&tokens[..25_000], &config()).unwrap();
    let bench = LossBench::new(emb, &tokens[..25_000], &tokens[25_000..], RefitConfig::default()).unwrap();
    assert_eq!(bench.delta_for(&ProjectionStack::identity(20)).unwrap(), 0.0);
    let mut stack = ProjectionStack::identity(20);
    stack.push(DMatrix::identity(20, 20));
    assert!(bench.delta_for(&stack).unwrap().abs() <= 0.02);
}

#[test]
fn single_tag_ladder_has_one_row() {
    let desk = desk_corpus(&GrammarConfig::default(), 300_000, 60_000).unwrap();
    let single = desk.annotated.with_single_tag("X");
    let mut config = PipelineConfig::default();
    config.sgns.dim = 20;
    config.sgns.epochs = 1;
    config.sgns.subsample_t = 1e-3;
    let report = run_ladder(&config, &single, &desk.raw_tokens()).unwrap();
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert!(row.rho <= 0.02, "{}", row.rho);
    assert_eq!((row.iterations, row.delta_nats), (0, 0.0));
    assert!(row.converged);
    assert_eq!(report.plot.len(), 1);
}
