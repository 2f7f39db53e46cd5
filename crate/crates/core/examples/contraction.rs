//! With a small source the sup norm and the level norms ‖G_k(u)‖_σ never grow.

use decaylab::evolve::{run, InitialSpec, Scenario};
use decaylab::field::Grid;
use decaylab::regime::{delta_threshold, sigma_exponent, ProblemParams};

fn main() {
    let params = ProblemParams::model(2.2, 1.8, 2, 0.1).unwrap();
    let sigma = sigma_exponent(2.2, 1.8, 2).unwrap();
    let mut scenario = Scenario::new(params, Grid::unit_2d(24).unwrap(), InitialSpec::RandomPositive { amplitude: 1.0 }, 0.2);
    scenario.seed = 3;
    scenario.sigma = Some(sigma);
    scenario.k_levels = vec![0.0, 0.25, 0.5];
    let result = run(&scenario).unwrap();

    println!("sigma = {sigma:.4}, smallness threshold = {:.4e}", delta_threshold(&params));
    let labels = ["linf", "gk0_lsigma", "gk0.25_lsigma", "gk0.5_lsigma"];
    let cols: Vec<Vec<f64>> = labels.iter().map(|l| result.series.column(l).unwrap()).collect();
    println!("{:>12} {:>14} {:>14} {:>14} {:>14}", "t", labels[0], labels[1], labels[2], labels[3]);
    for (i, t) in result.series.times().iter().enumerate().step_by(15) {
        println!("{t:>12.4e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}", cols[0][i], cols[1][i], cols[2][i], cols[3][i]);
    }
    for (label, col) in labels.iter().zip(&cols) {
        let growth = col.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        println!("{label:<14} largest increment between samples: {growth:.3e}");
    }
}
