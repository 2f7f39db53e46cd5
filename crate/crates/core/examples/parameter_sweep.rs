//! Sweep γ through a config file and read back the summary, as `decaylab sweep` does.

use decaylab::cli::{cmd_sweep, Config};

fn main() {
    let config = Config::parse(
        r#"
p = 2.2
q = 1.8
dim_n = 2
nodes = [16, 16]
t_end = 0.05
sigma = 3.0
k_levels = [0.0]
initial = { kind = "random_positive", amplitude = 1.0 }
check_contraction = true
check_level_contraction = true
sweep_gamma = [0.0, 0.5, 5.0, 50.0]
"#,
    )
    .unwrap();
    let out = std::env::temp_dir().join("decaylab-sweep-example");
    let outcomes = cmd_sweep(&config, &out).unwrap();
    for o in &outcomes {
        print!("{}", o.summary());
    }
    println!("\n{}", std::fs::read_to_string(out.join("summary.csv")).unwrap());
}
