//! Exact information-theory checks: the two-independent-bits world where the
//! filtered embedding keeps only the bit the annotation ignores, then a batch
//! of seeded random worlds.

use rhokit::itoracle::{lemma1_check, lemma2_check, run_verification, DiscretePMF, DiscreteWorld};

fn main() -> rhokit::Result<()> {
    // w = 2 * b1 + b2; T reads b1, x is w itself, x~ keeps b2
    let world = DiscreteWorld::new(DiscretePMF::uniform(4), vec![0, 0, 1, 1], vec![0, 1, 2, 3], vec![0, 1, 0, 1])?;
    print!("{}", world.to_text());
    let l1 = lemma1_check(&world);
    println!("rho {:.3} sigma {:.3} delta_I {:.6} >= bound {:.6}: {}", l1.rho, l1.sigma, l1.delta_i, l1.bound, l1.holds);
    for iters in [10, 100, 1000, 5000] {
        let l2 = lemma2_check(&world, iters);
        println!("decoder iters {iters:>5}: delta_l {:.6} gap {:.2e} converged {}", l2.delta_l, l2.gap, l2.converged);
    }

    let report = run_verification(200, 42, 16, 2000)?;
    println!(
        "200 worlds: property failures {}, lemma 1 applicable {} violated {}, lemma 2 failures {}",
        report.property_failures(),
        report.lemma1_applicable(),
        report.lemma1_violations(),
        report.lemma2_failures()
    );
    Ok(())
}
