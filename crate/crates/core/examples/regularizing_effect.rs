//! An unbounded spike in L^σ enters every L^r instantly; early slopes of ‖G_k(u)‖_r^r
//! are compared with the exponent of the regularizing estimate.

use decaylab::evolve::{run, InitialSpec, Scenario};
use decaylab::field::Grid;
use decaylab::metrics::fit_power_decay;
use decaylab::regime::{regularizing_exponents, sigma_exponent, ProblemParams};

fn main() {
    let (p, q, n) = (2.2, 1.8, 2);
    let sigma = sigma_exponent(p, q, n).unwrap();
    let params = ProblemParams::model(p, q, n, 0.1).unwrap();
    let initial = InitialSpec::PowerSpike {
        exponent: 0.6,
        cap: 50.0,
        nu: 3.0,
        nu_prime: Some(4.0),
        center: None,
    };
    let mut scenario = Scenario::new(params, Grid::unit_2d(48).unwrap(), initial, 0.01);
    scenario.sigma = Some(sigma);
    scenario.k_levels = vec![0.0];
    let orders = [sigma + 1.0, sigma + 2.0];
    scenario.r_list = orders.to_vec();
    let result = run(&scenario).unwrap();

    for r in orders {
        let (_, b) = regularizing_exponents(p, sigma, r, n).unwrap();
        let fit = fit_power_decay(&result.series, &format!("gk0_l{r}"), Some((1e-4, 1e-3))).unwrap();
        println!("r = {r:.1}: slope of ‖G_0 u‖_r^r = {:.4}, estimate allows down to -{b:.4}", r * fit.slope);
    }
}
