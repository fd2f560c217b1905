//! Slope t-test and rank correlation of loss increase against rho, from a
//! ladder report in its TSV form.

use rhokit::pipeline::{regress_reports, LadderReport};

const REPORT: &str = "\
# tool=rhokit 0.1.0
# seed=42
# config_hash=0123456789abcdef
annotation_id\trho\titerations\tfinal_acc\tmajority\tdelta_nats
0\t0.286\t2\t0.099\t0.099\t0.116
2\t0.283\t2\t0.099\t0.099\t0.115
4\t0.276\t2\t0.120\t0.120\t0.114
8\t0.272\t2\t0.167\t0.167\t0.094
12\t0.234\t4\t0.312\t0.312\t0.078
14\t0.128\t2\t0.581\t0.581\t0.008
15\t0.000\t0\t1.000\t1.000\t0.000
";

fn main() -> rhokit::Result<()> {
    let report = LadderReport::from_tsv(REPORT)?;
    let r = regress_reports(&[report])?;
    let g = r.regression;
    println!("n={} slope={:.4} intercept={:.4} t={:.3} p={:.2e} spearman={:.3}", g.n, g.slope, g.intercept, g.t_statistic, g.p_value, r.spearman);
    Ok(())
}
