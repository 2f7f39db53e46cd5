//! Distribution tails of |x|^{-a}: the weak-L^s quasinorm stays bounded as the grid
//! is refined exactly when s ≤ N/a.

use decaylab::evolve::{make_initial, InitialSpec};
use decaylab::field::Grid;
use decaylab::metrics::{distribution_tail, lr_norm, marcinkiewicz_quasinorm};

fn main() {
    let a = 0.8;
    let spike = InitialSpec::PowerSpike {
        exponent: a,
        cap: 1e6,
        nu: 2.0,
        nu_prime: None,
        center: None,
    };
    println!("critical exponent N/a = {}", 2.0 / a);
    println!("{:>5} {:>12} {:>12} {:>12} {:>12}", "n", "tail(10)", "weak L^2.5", "L^2", "L^2.5");
    for n in [32, 64, 128, 256] {
        let grid = Grid::unit_2d(n).unwrap();
        let u = make_initial(&spike, &grid, 0).unwrap();
        println!(
            "{n:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            distribution_tail(&u, 10.0),
            marcinkiewicz_quasinorm(&u.values, grid.cell_volume(), 2.5),
            lr_norm(&u, 2.0),
            lr_norm(&u, 2.5)
        );
    }
}
