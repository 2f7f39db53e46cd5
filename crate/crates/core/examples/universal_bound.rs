//! For p > 2 the late sup norm forgets the size of the datum and decays like t^{-1/(p-2)}.

use decaylab::evolve::{run, InitialSpec, Scenario};
use decaylab::field::Grid;
use decaylab::metrics::fit_power_decay;
use decaylab::regime::ProblemParams;

fn main() {
    let params = ProblemParams::model(3.0, 2.5, 2, 0.0).unwrap();
    for amplitude in [0.1, 1.0, 10.0] {
        let mut scenario = Scenario::new(
            params,
            Grid::unit_2d(24).unwrap(),
            InitialSpec::Bump { amplitude, radius: None, center: None },
            20.0,
        );
        scenario.dt_init = 1e-4;
        let result = run(&scenario).unwrap();
        let linf = result.series.column("linf").unwrap();
        let fit = fit_power_decay(&result.series, "linf", None).unwrap();
        println!(
            "amplitude {amplitude:>5}: sup at t=20 is {:.5e}, late slope {:.4} (universal -1)",
            linf[linf.len() - 1],
            fit.slope
        );
    }
}
