//! Closed-form solutions of y' = -λ y^m and the three decay shapes they produce.

use decaylab::metrics::{gronwall_envelope, gronwall_extinction_time};

fn main() {
    let (y0, lambda) = (1.0, 1.0);
    let exponents = [0.5, 0.8, 1.0, 1.5, 3.0];
    print!("{:>8}", "t");
    for m in exponents {
        print!("  m={m:<8}");
    }
    println!();
    for i in 0..=12 {
        let t = 0.25 * i as f64;
        print!("{t:>8.2}");
        for m in exponents {
            print!("  {:<10.3e}", gronwall_envelope(y0, lambda, m, t));
        }
        println!();
    }
    for m in exponents {
        match gronwall_extinction_time(y0, lambda, m) {
            Some(t) => println!("m = {m}: extinction at t = {t}"),
            None => println!("m = {m}: positive for all t"),
        }
    }
}
