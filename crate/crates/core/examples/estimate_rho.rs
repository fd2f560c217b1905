//! Entropy coefficient of an annotation: `rho = H[T] / H[W]` with trigram
//! Kneser-Ney models on a synthetic tagged corpus, for the gold tags, the
//! tokens themselves and a single constant tag.

use rhokit::seqmodel::{entropy_report, estimate_rho, RhoConfig};
use rhokit::synth::{desk_corpus, GrammarConfig};

fn main() -> rhokit::Result<()> {
    let corpus = desk_corpus(&GrammarConfig::default(), 0, 1_000_000)?.annotated;
    let config = RhoConfig::default();

    let gold = estimate_rho(&corpus, &config)?;
    print!("{}", entropy_report(&[("tags", gold.h_tags), ("tokens", gold.h_tokens)], false));
    println!("gold tags     rho={:.6}", gold.rho);

    let same = RhoConfig { tag_min_count: config.token_min_count, ..config.clone() };
    println!("T = W         rho={:.6}", estimate_rho(&corpus.with_token_tags(), &same)?.rho);
    println!("single tag    rho={:.6}", estimate_rho(&corpus.with_single_tag("X"), &config)?.rho);
    Ok(())
}
