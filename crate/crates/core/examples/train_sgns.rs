//! Skip-gram with negative sampling on a synthetic corpus: per-epoch loss,
//! nearest neighbours (after removing the shared mean direction) with their
//! gold tags, and held-out loss under both objectives.

use std::collections::HashMap;

use rhokit::sgns::{eval_loss, train_sgns_with_stats, Objective, SgnsConfig};
use rhokit::synth::{desk_corpus, GrammarConfig};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn main() -> rhokit::Result<()> {
    let desk = desk_corpus(&GrammarConfig::default(), 1_000_000, 1_000_000)?;
    let tokens = desk.raw_tokens();
    let mut tag_of = HashMap::new();
    for s in &desk.annotated.sentences {
        for (w, t) in s.tokens.iter().zip(&s.tags) {
            tag_of.entry(w.clone()).or_insert_with(|| t.clone());
        }
    }
    let (train, held) = tokens.split_at(tokens.len() * 9 / 10);
    let config = SgnsConfig { dim: 50, epochs: 5, subsample_t: 1e-3, ..SgnsConfig::default() };
    let (emb, stats) = train_sgns_with_stats(train, &config)?;
    println!("{} words, epoch losses {:?}", emb.len(), stats.epoch_losses);

    let mean = emb.input_vectors.row_mean();
    let row = |i: usize| (emb.input_vectors.row(i) - &mean).iter().copied().collect::<Vec<f64>>();
    for query in [0, 10, 100] {
        let mut sims: Vec<(f64, usize)> = (0..emb.len()).filter(|&j| j != query).map(|j| (cosine(&row(query), &row(j)), j)).collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0));
        let shown: Vec<String> =
            sims[..5].iter().map(|&(c, j)| format!("{}/{} {c:.2}", emb.vocab[j], tag_of[&emb.vocab[j]])).collect();
        println!("nearest to {}/{}: {}", emb.vocab[query], tag_of[&emb.vocab[query]], shown.join(", "));
    }

    for objective in [Objective::NegativeSampling, Objective::FullSoftmax] {
        let r = eval_loss(&emb, held, objective, config.window, config.negatives)?;
        println!("{objective:?}: {:.4} nats over {} pairs", r.nats_per_prediction, r.predictions);
    }
    Ok(())
}
