//! Regime table for a few (p, q, N) triples, plus the L¹-regime exponents where they apply.

use decaylab::regime::{classify, l1_regime_exponents, ClassifyOptions, ProblemParams, Regime};

fn main() {
    let cases = [
        (2.0, 1.5, 3),
        (2.0, 1.25, 3),
        (2.0, 1.2, 3),
        (1.8, 1.5, 3),
        (2.5, 2.3, 4),
        (1.1, 1.05, 3),
        (4.0, 3.0, 3),
    ];
    println!("{:>5} {:>5} {:>2}  {:<18} {:>8} {:>8} {:>8} {:>8}", "p", "q", "N", "regime", "sigma", "nu", "beta", "p_min");
    for (p, q, n) in cases {
        let params = ProblemParams::model(p, q, n, 1.0).unwrap();
        let r = classify(&params, &ClassifyOptions::default());
        println!(
            "{p:>5} {q:>5} {n:>2}  {:<18} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.regime.to_string(),
            r.sigma,
            r.nu,
            r.beta,
            r.p_lower_threshold
        );
        if r.regime == Regime::SuperlinearL1 {
            println!("      L1 exponents: {:?}", l1_regime_exponents(p, q, n).unwrap());
        }
        for w in &r.warnings {
            println!("      warning: {w}");
        }
    }

    // Data that is only in L^1 while σ > 1 is flagged.
    let params = ProblemParams::model(1.1, 1.05, 3, 1.0).unwrap();
    let opts = ClassifyOptions {
        declared_nu: Some(1.0),
        ..Default::default()
    };
    println!("\np=1.1 q=1.05 N=3 with L^1 data: {}", classify(&params, &opts).regime);
}
