//! Write a run to disk, then re-check it from the stored series alone.

use decaylab::cli::{simulate_into, verify_series, Config};
use decaylab::metrics::NormSeries;

fn main() {
    let config = Config::parse(
        r#"
p = 3.0
q = 2.5
dim_n = 4
nodes = [24, 24]
t_end = 10.0
dt_init = 1e-3
initial = { kind = "bump", amplitude = 1.0 }
check_contraction = true
check_universal_slope = true
"#,
    )
    .unwrap();
    let dir = std::env::temp_dir().join("decaylab-simulate-example");
    let outcome = simulate_into(&config, &dir).unwrap();
    print!("{}", outcome.summary());

    let series = NormSeries::read_csv(std::fs::File::open(dir.join("series.csv")).unwrap()).unwrap();
    let again = verify_series(&series, &config).unwrap();
    println!("re-verified from disk: identical = {}", Some(&again) == outcome.report.as_ref());
}
