use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::evolve::{default_extinction_tol, detect_extinction};
use crate::metrics::{check_envelope, fit_exponential_decay, fit_power_decay, NormSeries};
use crate::regime::{decay_prediction, delta_threshold, regularizing_exponents};

use super::config::Config;
use super::CliError;

/// Relative growth of `‖u‖_∞` tolerated between samples.
pub const CONTRACTION_TOL: f64 = 1e-8;
/// Relative growth of `‖G_k(u)‖_σ` tolerated over its initial value.
pub const LEVEL_CONTRACTION_TOL: f64 = 1e-6;
/// Accepted band around `-1/(p-2)` for the late-time slope of `‖u‖_∞`.
pub const SLOPE_BAND: (f64, f64) = (0.1, 0.15);
/// Allowed shortfall below the regularizing exponent.
pub const REGULARIZING_TOL: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub predicted: Option<f64>,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub entries: Vec<CheckEntry>,
    pub overall_pass: bool,
    /// The recorded solution is identically zero, so every check holds trivially.
    pub vacuous: bool,
}

impl VerificationReport {
    fn new(entries: Vec<CheckEntry>, vacuous: bool) -> Self {
        let overall_pass = entries.iter().all(|e| e.pass);
        VerificationReport {
            entries,
            overall_pass,
            vacuous,
        }
    }
}

fn entry(name: &str, predicted: Option<f64>, measured: Option<f64>, tolerance: Option<f64>, pass: bool) -> CheckEntry {
    CheckEntry {
        name: name.to_string(),
        predicted,
        measured,
        tolerance,
        pass,
        note: String::new(),
    }
}

fn failed(name: &str, note: impl Into<String>) -> CheckEntry {
    CheckEntry {
        note: note.into(),
        ..entry(name, None, None, None, false)
    }
}

/// Smallest recorded level `k` with `‖G_k(u0)‖_σ^σ < δ₀`, returned with its column label.
pub fn admissible_level(series: &NormSeries, config: &Config) -> Result<Option<(f64, String)>, CliError> {
    let sigma = config.scenario()?.sigma();
    let delta0 = delta_threshold(&config.params()?);
    for &k in &config.k_levels {
        let label = format!("gk{k}_lsigma");
        let g0 = series.column(&label)?.first().copied().unwrap_or(0.0);
        if g0.powf(sigma) < delta0 {
            return Ok(Some((k, label)));
        }
    }
    Ok(None)
}

fn window(w: Option<[f64; 2]>) -> Option<(f64, f64)> {
    w.map(|[a, b]| (a, b))
}

/// Recomputes every enabled check from the recorded series alone.
pub fn verify_series(series: &NormSeries, config: &Config) -> Result<VerificationReport, CliError> {
    let linf = series.column("linf")?;
    // Schema: every column the scenario would have written must be present.
    for label in config.scenario()?.labels() {
        series.column_index(&label)?;
    }
    let vacuous = linf.iter().all(|&v| v == 0.0);
    let mut entries = Vec::new();
    let params = config.params()?;
    let sigma = config.scenario()?.sigma();

    if vacuous {
        let enabled = [
            ("contraction", config.check_contraction),
            ("level_contraction", config.check_level_contraction),
            ("envelope", config.check_envelope),
            ("exp_rate", config.check_exp_rate),
            ("universal_slope", config.check_universal_slope),
            ("extinction", config.check_extinction),
            ("regularizing_slope", config.check_regularizing),
        ];
        for (name, on) in enabled {
            if on {
                entries.push(CheckEntry {
                    note: "zero solution".into(),
                    ..entry(name, None, Some(0.0), None, true)
                });
            }
        }
        return Ok(VerificationReport::new(entries, true));
    }

    if config.check_contraction {
        let tol = CONTRACTION_TOL * linf[0];
        let growth = linf.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        entries.push(entry("contraction", Some(0.0), Some(growth), Some(tol), growth <= tol));
    }

    let level = admissible_level(series, config)?;

    if config.check_level_contraction {
        match &level {
            None => entries.push(failed("level_contraction", "no recorded level k satisfies the smallness threshold")),
            Some((k0, _)) => {
                for &k in config.k_levels.iter().filter(|&&k| k >= *k0) {
                    let col = series.column(&format!("gk{k}_lsigma"))?;
                    let g0 = col[0];
                    let worst = col.iter().fold(0.0_f64, |acc, &g| acc.max(g - g0));
                    let tol = LEVEL_CONTRACTION_TOL * g0;
                    entries.push(entry(&format!("level_contraction_k{k}"), Some(g0), Some(g0 + worst), Some(tol), worst <= tol));
                }
            }
        }
    }

    if config.check_envelope {
        match &level {
            None => entries.push(failed("envelope", "no recorded level k satisfies the smallness threshold")),
            Some((_, label)) => {
                let y0 = series.column(label)?[0];
                match decay_prediction(&params, sigma, y0.powf(sigma), y0) {
                    Err(e) => entries.push(failed("envelope", e.to_string())),
                    Ok(pred) => {
                        let rep = check_envelope(series, label, |t| pred.sigma_norm_envelope(t), config.envelope_slack)?;
                        let col = series.column(label)?;
                        let worst = series
                            .times()
                            .iter()
                            .zip(&col)
                            .map(|(&t, &v)| {
                                let env = pred.sigma_norm_envelope(t);
                                if v == 0.0 {
                                    0.0
                                } else {
                                    v / env
                                }
                            })
                            .fold(0.0, f64::max);
                        let mut e = entry(
                            "envelope",
                            pred.extinction_time,
                            Some(worst),
                            Some(config.envelope_slack),
                            rep.holds,
                        );
                        e.note = format!("{} of {} samples violate", rep.violations.len(), rep.checked);
                        entries.push(e);
                    }
                }
            }
        }
    }

    if config.check_exp_rate {
        let predicted = match config.expected_exp_rate {
            Some(r) => r,
            None => {
                let grid = config.grid()?;
                (0..grid.dim()).map(|a| (PI / grid.length(a)).powi(2)).sum()
            }
        };
        match fit_exponential_decay(series, "linf", window(config.fit_window)) {
            Ok((rate, _)) => {
                let rel = (rate / predicted - 1.0).abs();
                entries.push(entry("exp_rate", Some(predicted), Some(rate), Some(config.exp_rate_tol), rel <= config.exp_rate_tol));
            }
            Err(e) => entries.push(failed("exp_rate", e.to_string())),
        }
    }

    if config.check_universal_slope {
        if params.p <= 2.0 {
            entries.push(failed("universal_slope", "needs p > 2"));
        } else {
            let predicted = -1.0 / (params.p - 2.0);
            match fit_power_decay(series, "linf", window(config.fit_window)) {
                Ok(fit) => {
                    let ok = fit.slope >= predicted - SLOPE_BAND.0 && fit.slope <= predicted + SLOPE_BAND.1;
                    let mut e = entry("universal_slope", Some(predicted), Some(fit.slope), Some(SLOPE_BAND.1), ok);
                    e.note = format!("band [{}, {}]", predicted - SLOPE_BAND.0, predicted + SLOPE_BAND.1);
                    entries.push(e);
                }
                Err(e) => entries.push(failed("universal_slope", e.to_string())),
            }
        }
    }

    if config.check_extinction {
        let tol = default_extinction_tol(series)?;
        let t_ext = detect_extinction(series, tol)?;
        entries.push(entry("extinction", None, t_ext, Some(tol), t_ext.is_some()));
    }

    if config.check_regularizing {
        let r = sigma + 1.0;
        let k = level.as_ref().map(|(k, _)| *k).or(config.k_levels.first().copied());
        match (k, config.r_list.contains(&r)) {
            (Some(k), true) => {
                let (_, b) = regularizing_exponents(params.p, sigma, r, params.dim_n)?;
                let label = format!("gk{k}_l{r}");
                match fit_power_decay(series, &label, window(config.regularizing_window)) {
                    Ok(fit) => {
                        let slope = r * fit.slope;
                        entries.push(entry("regularizing_slope", Some(-b), Some(slope), Some(REGULARIZING_TOL), slope >= -b - REGULARIZING_TOL));
                    }
                    Err(e) => entries.push(failed("regularizing_slope", e.to_string())),
                }
            }
            _ => entries.push(failed("regularizing_slope", format!("needs a k level and r = {r} in r_list"))),
        }
    }

    Ok(VerificationReport::new(entries, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> Config {
        Config::parse(
            r#"
p = 3.0
q = 2.5
dim_n = 2
nodes = [8, 8]
t_end = 1.0
k_levels = [0.0]
initial = { kind = "bump", amplitude = 1.0 }
check_contraction = true
check_level_contraction = true
"#,
        )
        .unwrap()
    }

    fn series(linf: &[f64]) -> NormSeries {
        let c = config();
        let labels = c.scenario().unwrap().labels();
        let mut s = NormSeries::new(labels.clone());
        for (i, &v) in linf.iter().enumerate() {
            s.push(i as f64, vec![v; labels.len()]).unwrap();
        }
        s
    }

    #[test]
    fn overall_pass_iff_all_entries_pass() {
        let good = verify_series(&series(&[1.0, 0.5, 0.25]), &config()).unwrap();
        assert!(good.overall_pass && !good.vacuous);
        let bad = verify_series(&series(&[1.0, 0.5, 0.75]), &config()).unwrap();
        assert!(!bad.overall_pass);
        assert_eq!(bad.overall_pass, bad.entries.iter().all(|e| e.pass));
    }

    #[test]
    fn zero_series_is_vacuous_pass() {
        let rep = verify_series(&series(&[0.0, 0.0]), &config()).unwrap();
        assert!(rep.vacuous && rep.overall_pass);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let mut s = NormSeries::new(vec!["linf".into()]);
        s.push(0.0, vec![1.0]).unwrap();
        assert_eq!(verify_series(&s, &config()).unwrap_err().exit_code(), 2);
    }
}
