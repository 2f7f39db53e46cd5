//! Flat TOML scenario files.
//!
//! Every key is optional except `p`, `q`, `dim_n`, `nodes`, `initial` and `t_end`.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evolve::{CoefficientSpec, InitialSpec, Scenario, Stepper, DEFAULT_SAMPLE_RATIO};
use crate::field::Grid;
use crate::regime::{ProblemParams, DEFAULT_CRITICAL_OMEGA};

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub p: f64,
    pub q: f64,
    pub dim_n: u32,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub lambda_upper: f64,
    #[serde(default = "one")]
    pub sobolev_const: f64,
    #[serde(default = "one")]
    pub poincare_const: f64,
    /// Defaults to the measure of the grid box.
    #[serde(default)]
    pub omega_measure: Option<f64>,
    /// Constant of the structural condition on the test function `S`; reported, never fitted.
    #[serde(default = "one")]
    pub gronwall_l: f64,
    #[serde(default)]
    pub declared_nu: Option<f64>,
    #[serde(default = "default_critical_omega")]
    pub critical_omega: f64,

    /// Interior nodes per axis; one entry per spatial dimension of the grid.
    pub nodes: Vec<usize>,
    /// Box side lengths; unit box when absent.
    #[serde(default)]
    pub lengths: Option<Vec<f64>>,
    #[serde(default = "default_coefficient")]
    pub coefficient: CoefficientSpec,
    pub initial: InitialSpec,

    pub t_end: f64,
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_stepper")]
    pub stepper: Stepper,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub k_levels: Vec<f64>,
    #[serde(default)]
    pub r_list: Vec<f64>,
    #[serde(default)]
    pub eps_reg: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub extinction_floor: Option<f64>,
    #[serde(default)]
    pub dt_max: Option<f64>,
    #[serde(default = "default_ratio")]
    pub sample_ratio: f64,
    #[serde(default)]
    pub seed: u64,

    #[serde(default)]
    pub out_dir: Option<PathBuf>,

    #[serde(default)]
    pub check_contraction: bool,
    #[serde(default)]
    pub check_level_contraction: bool,
    #[serde(default)]
    pub check_envelope: bool,
    #[serde(default = "default_slack")]
    pub envelope_slack: f64,
    #[serde(default)]
    pub check_exp_rate: bool,
    /// Target rate; the first Dirichlet eigenvalue of the box when absent.
    #[serde(default)]
    pub expected_exp_rate: Option<f64>,
    #[serde(default = "default_exp_tol")]
    pub exp_rate_tol: f64,
    #[serde(default)]
    pub check_universal_slope: bool,
    #[serde(default)]
    pub check_extinction: bool,
    #[serde(default)]
    pub check_regularizing: bool,
    #[serde(default)]
    pub regularizing_window: Option<[f64; 2]>,
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,

    #[serde(default)]
    pub sweep_p: Vec<f64>,
    #[serde(default)]
    pub sweep_q: Vec<f64>,
    #[serde(default)]
    pub sweep_gamma: Vec<f64>,
}

fn one() -> f64 {
    1.0
}
fn default_critical_omega() -> f64 {
    DEFAULT_CRITICAL_OMEGA
}
fn default_coefficient() -> CoefficientSpec {
    CoefficientSpec::Identity
}
fn default_dt_init() -> f64 {
    1e-6
}
fn default_stepper() -> Stepper {
    Stepper::ExplicitAdaptive
}
fn default_ratio() -> f64 {
    DEFAULT_SAMPLE_RATIO
}
fn default_slack() -> f64 {
    1.5
}
fn default_exp_tol() -> f64 {
    0.02
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario()?.validate()?;
        if !(self.envelope_slack >= 1.0) {
            return Err(CliError::Config("envelope_slack must be at least 1".into()));
        }
        if !(self.exp_rate_tol > 0.0) {
            return Err(CliError::Config("exp_rate_tol must be positive".into()));
        }
        for w in [self.fit_window, self.regularizing_window].into_iter().flatten() {
            if !(w[0] > 0.0 && w[0] < w[1]) {
                return Err(CliError::Config(format!("window {w:?} must satisfy 0 < start < end")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let lengths = self.lengths.clone().unwrap_or_else(|| vec![1.0; self.nodes.len()]);
        Ok(Grid::new(&self.nodes, &lengths)?)
    }

    pub fn params(&self) -> Result<ProblemParams, CliError> {
        let grid = self.grid()?;
        let params = ProblemParams {
            p: self.p,
            q: self.q,
            dim_n: self.dim_n,
            gamma: self.gamma,
            alpha: self.alpha,
            lambda_upper: self.lambda_upper,
            omega_measure: self.omega_measure.unwrap_or_else(|| grid.measure()),
            sobolev_const: self.sobolev_const,
            poincare_const: self.poincare_const,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let mut s = Scenario::new(self.params()?, self.grid()?, self.initial.clone(), self.t_end);
        s.coefficient = self.coefficient;
        s.dt_init = self.dt_init;
        s.stepper = self.stepper;
        s.snapshot_times = self.snapshot_times.clone();
        s.k_levels = self.k_levels.clone();
        s.r_list = self.r_list.clone();
        s.eps_reg = self.eps_reg;
        s.sigma = self.sigma;
        s.extinction_floor = self.extinction_floor;
        s.dt_max = self.dt_max;
        s.sample_ratio = self.sample_ratio;
        s.seed = self.seed;
        s.critical_omega = self.critical_omega;
        Ok(s)
    }

    pub fn has_checks(&self) -> bool {
        self.check_contraction
            || self.check_level_contraction
            || self.check_envelope
            || self.check_exp_rate
            || self.check_universal_slope
            || self.check_extinction
            || self.check_regularizing
    }

    /// One config per point of the `p × q × γ` product; empty axes keep the base value.
    pub fn sweep_points(&self) -> Vec<Config> {
        let axis = |values: &[f64], base: f64| if values.is_empty() { vec![base] } else { values.to_vec() };
        let mut out = Vec::new();
        for p in axis(&self.sweep_p, self.p) {
            for q in axis(&self.sweep_q, self.q) {
                for gamma in axis(&self.sweep_gamma, self.gamma) {
                    let mut c = self.clone();
                    c.p = p;
                    c.q = q;
                    c.gamma = gamma;
                    c.sweep_p.clear();
                    c.sweep_q.clear();
                    c.sweep_gamma.clear();
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn sweep_dir_name(&self) -> String {
        format!("p{}_q{}_gamma{}", self.p, self.q, self.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAT: &str = r#"
p = 2.0
q = 1.5
dim_n = 2
nodes = [64]
t_end = 0.3
initial = { kind = "sine", amplitude = 1.0 }
check_exp_rate = true
"#;

    #[test]
    fn round_trip_is_idempotent() {
        let c = Config::parse(HEAT).unwrap();
        let text = c.to_toml().unwrap();
        let again = Config::parse(&text).unwrap();
        assert_eq!(c, again);
        assert_eq!(text, again.to_toml().unwrap());
    }

    #[test]
    fn unknown_keys_fail_closed() {
        let err = Config::parse(&format!("{HEAT}\nbogus = 1\n")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn sweep_enumerates_product() {
        let mut c = Config::parse(HEAT).unwrap();
        c.sweep_gamma = vec![0.0, 0.1, 0.2];
        let points = c.sweep_points();
        assert_eq!(points.len(), 3);
        let names: Vec<String> = points.iter().map(Config::sweep_dir_name).collect();
        assert_eq!(names, ["p2_q1.5_gamma0", "p2_q1.5_gamma0.1", "p2_q1.5_gamma0.2"]);
    }

    #[test]
    fn omega_defaults_to_grid_measure() {
        let mut c = Config::parse(HEAT).unwrap();
        c.lengths = Some(vec![2.0]);
        assert_eq!(c.params().unwrap().omega_measure, 2.0);
    }
}
