//! Conflation ladder on a synthetic desk-scale corpus: rho and the loss
//! increase after INLP removal for each selected step, then the slope test.
//!
//! cargo run --release --example desk_ladder -- [raw_megabytes]

use std::time::Instant;

use rhokit::pipeline::{regress_reports, run_ladder, PipelineConfig};
use rhokit::synth::{desk_corpus, GrammarConfig};

fn main() -> rhokit::Result<()> {
    let megabytes: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5.0);
    let start = Instant::now();
    let desk = desk_corpus(&GrammarConfig::default(), (megabytes * 1e6) as usize, 1_000_000)?;
    let raw = desk.raw_tokens();
    println!("{} raw tokens, {} annotated tokens", raw.len(), desk.annotated.token_count());

    let mut config = PipelineConfig::default();
    config.sgns.epochs = 5;
    config.sgns.subsample_t = 1e-3;
    let report = run_ladder(&config, &desk.annotated, &raw)?;
    print!("{}", report.to_tsv());
    let r = regress_reports(&[report])?;
    println!(
        "spearman={:.4} slope={:.4} p={:.3e} ({:.1}s)",
        r.spearman,
        r.regression.slope,
        r.regression.p_value,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
