//! Train an interpolated Kneser-Ney model, query it and round-trip it
//! through its text format.

use rhokit::seqmodel::{cross_entropy, train_kn, NGramModel};

fn main() -> rhokit::Result<()> {
    let train: Vec<Vec<&str>> = ["the cat sat on the mat", "the dog sat on the log", "a cat saw a dog"]
        .iter()
        .map(|s| s.split(' ').collect())
        .collect();
    let model = train_kn(&train, 3)?;
    println!("order {} vocab {} discounts {:?}", model.order(), model.vocab().len(), model.discounts());

    let mut next = model.distribution(&["sat", "on"]);
    next.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (sym, p) in next.iter().take(3) {
        println!("p({sym} | sat on) = {p:.4}");
    }

    let held = vec![vec!["the", "cat", "sat", "on", "the", "log"]];
    let h = cross_entropy(&model, &held)?;
    println!("held-out {:.4} nats/token, {:.4} bits/token", h.nats_per_token, h.bits_per_token());

    let reloaded = NGramModel::from_text(&model.to_text()?)?;
    assert_eq!(reloaded.prob(&["sat", "on"], "the"), model.prob(&["sat", "on"], "the"));
    Ok(())
}
