//! Iterative nullspace projection on two separable clouds in R^5: probe
//! accuracy drops to the majority rate and every projector is checked.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhokit::inlp::{projector_defects, run_inlp, InlpConfig, LabeledVectors, ProjectionStack};

fn main() -> rhokit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 300;
    let labels: Vec<String> = (0..n).map(|i| if i % 3 == 0 { "a" } else { "b" }.to_string()).collect();
    let x = DMatrix::from_fn(n, 5, |r, c| {
        let shift = if labels[r] == "a" && c < 2 { 2.0 } else { 0.0 };
        shift + rng.random_range(-1.0..1.0)
    });
    let data = LabeledVectors::new(x, &labels)?;
    let result = run_inlp(&data, &InlpConfig::default())?;
    println!("accuracy per iteration {:?}", result.accuracies);
    println!("majority {:.3}, {} projections", result.majority, result.iterations);
    for (i, p) in result.stack.projections.iter().enumerate() {
        let (idem, sym, spread) = projector_defects(p);
        println!("P{i}: |P^2-P| {idem:.1e}, |P-P^T| {sym:.1e}, eigen spread {spread:.1e}");
    }
    let back = ProjectionStack::from_text(&result.stack.to_text())?;
    assert_eq!(back.projections.len(), result.iterations);
    Ok(())
}
