//! Singular diffusion (p < 2) drives a bump to zero in finite time.

use decaylab::evolve::{default_extinction_tol, detect_extinction, run, InitialSpec, Scenario};
use decaylab::field::Grid;
use decaylab::regime::{decay_prediction, ProblemParams};

fn main() {
    let params = ProblemParams::model(1.8, 1.5, 2, 0.0).unwrap();
    let mut scenario = Scenario::new(
        params,
        Grid::unit_2d(32).unwrap(),
        InitialSpec::Bump { amplitude: 1.0, radius: None, center: None },
        0.5,
    );
    scenario.dt_init = 1e-4;
    scenario.sigma = Some(2.0);
    scenario.k_levels = vec![0.0];
    scenario.eps_reg = Some(1e-8);
    scenario.extinction_floor = Some(1e-9);
    let result = run(&scenario).unwrap();

    let y = result.series.column("gk0_lsigma").unwrap();
    for (i, (t, row)) in result.series.rows().enumerate() {
        if i % 10 == 0 {
            println!("t = {t:<10.4e} sup = {:<12.4e} L2 = {:.4e}", row[0], y[i]);
        }
    }
    let tol = default_extinction_tol(&result.series).unwrap();
    println!("extinction detected at {:?}", detect_extinction(&result.series, tol).unwrap());

    // With the default c_S = 1 the predicted time is only an order of magnitude.
    let pred = decay_prediction(&params, 2.0, f64::INFINITY, y[0]).unwrap();
    println!("predicted extinction time with c_S = 1: {:?}", pred.extinction_time);
}
