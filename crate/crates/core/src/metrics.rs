//! Verification toolkit: truncations, discrete norms, distribution tails,
//! Gronwall envelopes and decay-exponent fits over recorded norm series.

use crate::field::ScalarField;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown norm label {0:?}")]
    UnknownLabel(String),
    #[error("need at least {needed} positive samples in the window, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("series reaches the extinction floor at t = {t} inside the fit window")]
    DegenerateWindow { t: f64 },
    #[error("times must be strictly increasing: {prev} then {next}")]
    NonIncreasingTime { prev: f64, next: f64 },
    #[error("norm {label} = {value} at t = {t} is negative or not finite")]
    BadValue { label: String, value: f64, t: f64 },
    #[error("row has {got} values for {expected} labels")]
    RowLength { expected: usize, got: usize },
    #[error("series csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("series csv schema: {0}")]
    Schema(String),
}

/// Minimum number of samples a fit accepts.
pub const MIN_FIT_SAMPLES: usize = 8;

/// `G_k(z) = (|z| - k)₊ sign(z)`.
#[inline]
pub fn truncate_g(z: f64, k: f64) -> f64 {
    if z > k {
        z - k
    } else if z < -k {
        z + k
    } else {
        0.0
    }
}

/// `T_k(z) = max{-k, min{k, z}}`.
#[inline]
pub fn truncate_t(z: f64, k: f64) -> f64 {
    z.clamp(-k, k)
}

/// Discrete `L^r` norm `(Σ|u_i|^r · cellvol)^{1/r}`; `r = ∞` gives the max.
pub fn lr_norm_values(values: &[f64], cell_volume: f64, r: f64) -> f64 {
    if r.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if r == 1.0 {
        return cell_volume * values.iter().map(|v| v.abs()).sum::<f64>();
    }
    if r == 2.0 {
        return (cell_volume * values.iter().map(|v| v * v).sum::<f64>()).sqrt();
    }
    // Scale by the max so large values do not overflow under the power.
    let m = values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|v| (v.abs() / m).powf(r)).sum();
    m * (cell_volume * s).powf(1.0 / r)
}

pub fn lr_norm(field: &ScalarField, r: f64) -> f64 {
    lr_norm_values(&field.values, field.grid.cell_volume(), r)
}

/// `‖G_k(u)‖_r`.
pub fn truncated_norm(field: &ScalarField, k: f64, r: f64) -> f64 {
    let g: Vec<f64> = field.values.iter().map(|&z| truncate_g(z, k)).collect();
    lr_norm_values(&g, field.grid.cell_volume(), r)
}

/// `cellvol · #{i : |u_i| > s}`.
pub fn distribution_tail_values(values: &[f64], cell_volume: f64, s: f64) -> f64 {
    cell_volume * values.iter().filter(|v| v.abs() > s).count() as f64
}

pub fn distribution_tail(field: &ScalarField, s: f64) -> f64 {
    distribution_tail_values(&field.values, field.grid.cell_volume(), s)
}

/// Number of levels in the geometric grid for the weak-L^s quasinorm.
pub const MARCINKIEWICZ_LEVELS: usize = 50;

/// `sup_s s · tail(s)^{1/exponent}` over 50 geometric levels in `[1e-3, 1] · max|u|`.
pub fn marcinkiewicz_quasinorm(values: &[f64], cell_volume: f64, exponent: f64) -> f64 {
    let top = values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let lo = 1e-3 * top;
    let ratio = (top / lo).powf(1.0 / (MARCINKIEWICZ_LEVELS - 1) as f64);
    let mut best = 0.0f64;
    let mut s = lo;
    for _ in 0..MARCINKIEWICZ_LEVELS {
        let tail = distribution_tail_values(values, cell_volume, s);
        best = best.max(s * tail.powf(1.0 / exponent));
        s *= ratio;
    }
    // Rounding can put the last level just above max|u|; count the top plateau explicitly.
    let below_top = top * (1.0 - 1e-12);
    best.max(below_top * distribution_tail_values(values, cell_volume, below_top).powf(1.0 / exponent))
}

/// Closed-form solution of `y' = -λ y^m`, `y(0) = y0`.
pub fn gronwall_envelope(y0: f64, lambda: f64, m: f64, t: f64) -> f64 {
    if y0 == 0.0 {
        return 0.0;
    }
    if m == 1.0 {
        y0 * (-lambda * t).exp()
    } else if m > 1.0 {
        (y0.powf(1.0 - m) + lambda * (m - 1.0) * t).powf(-1.0 / (m - 1.0))
    } else {
        let base = y0.powf(1.0 - m) - lambda * (1.0 - m) * t;
        if base <= 0.0 {
            0.0
        } else {
            base.powf(1.0 / (1.0 - m))
        }
    }
}

/// Extinction time `y0^{1-m}/(λ(1-m))` of the `m < 1` envelope.
pub fn gronwall_extinction_time(y0: f64, lambda: f64, m: f64) -> Option<f64> {
    (m < 1.0).then(|| y0.powf(1.0 - m) / (lambda * (1.0 - m)))
}

/// Time-stamped named norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    labels: Vec<String>,
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl NormSeries {
    pub fn new(labels: Vec<String>) -> Self {
        NormSeries {
            labels,
            times: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times.iter().copied().zip(self.rows.iter().map(|r| r.as_slice()))
    }

    pub fn push(&mut self, t: f64, values: Vec<f64>) -> Result<(), MetricsError> {
        if values.len() != self.labels.len() {
            return Err(MetricsError::RowLength {
                expected: self.labels.len(),
                got: values.len(),
            });
        }
        if let Some(&prev) = self.times.last() {
            if !(t > prev) {
                return Err(MetricsError::NonIncreasingTime { prev, next: t });
            }
        }
        if let Some((label, &value)) = self
            .labels
            .iter()
            .zip(&values)
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(MetricsError::BadValue {
                label: label.clone(),
                value,
                t,
            });
        }
        self.times.push(t);
        self.rows.push(values);
        Ok(())
    }

    pub fn column_index(&self, label: &str) -> Result<usize, MetricsError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| MetricsError::UnknownLabel(label.to_string()))
    }

    pub fn column(&self, label: &str) -> Result<Vec<f64>, MetricsError> {
        let c = self.column_index(label)?;
        Ok(self.rows.iter().map(|r| r[c]).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.rows() {
            let mut rec = vec![format!("{t:e}")];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a series; the first column must be `t`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, MetricsError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let mut it = headers.iter();
        if it.next() != Some("t") {
            return Err(MetricsError::Schema("first column must be t".into()));
        }
        let labels: Vec<String> = it.map(str::to_string).collect();
        let mut series = NormSeries::new(labels);
        for record in r.records() {
            let record = record?;
            let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            let parsed = parsed.map_err(|e| MetricsError::Schema(format!("bad number: {e}")))?;
            if parsed.len() != series.labels.len() + 1 {
                return Err(MetricsError::RowLength {
                    expected: series.labels.len() + 1,
                    got: parsed.len(),
                });
            }
            series.push(parsed[0], parsed[1..].to_vec())?;
        }
        Ok(series)
    }

    /// Default late-time window `[t_end/10, t_end]`.
    pub fn default_window(&self) -> (f64, f64) {
        let t_end = self.times.last().copied().unwrap_or(0.0);
        (t_end / 10.0, t_end)
    }

    fn window_samples(&self, label: &str, window: Option<(f64, f64)>) -> Result<Vec<(f64, f64)>, MetricsError> {
        let c = self.column_index(label)?;
        let (lo, hi) = window.unwrap_or_else(|| self.default_window());
        let samples: Vec<(f64, f64)> = self
            .rows()
            .filter(|(t, _)| *t >= lo && *t <= hi)
            .map(|(t, r)| (t, r[c]))
            .collect();
        if let Some(&(t, _)) = samples.iter().find(|(_, v)| *v <= 0.0) {
            return Err(MetricsError::DegenerateWindow { t });
        }
        Ok(samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// RMS of the log residuals.
    pub residual: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

fn fit_transformed(
    series: &NormSeries,
    label: &str,
    window: Option<(f64, f64)>,
    log_time: bool,
) -> Result<FitResult, MetricsError> {
    let samples = series.window_samples(label, window)?;
    let usable: Vec<(f64, f64)> = samples
        .into_iter()
        .filter(|(t, _)| !log_time || *t > 0.0)
        .map(|(t, v)| (if log_time { t.ln() } else { t }, v.ln()))
        .collect();
    if usable.len() < MIN_FIT_SAMPLES {
        return Err(MetricsError::InsufficientData {
            needed: MIN_FIT_SAMPLES,
            found: usable.len(),
        });
    }
    let (slope, intercept, residual) = least_squares(&usable);
    let first = usable.first().unwrap().0;
    let last = usable.last().unwrap().0;
    let window = if log_time {
        (first.exp(), last.exp())
    } else {
        (first, last)
    };
    Ok(FitResult {
        slope,
        intercept,
        residual,
        window,
        samples: usable.len(),
    })
}

/// Least-squares line through `(log t, log norm)`; the slope is the decay exponent.
pub fn fit_power_decay(series: &NormSeries, label: &str, window: Option<(f64, f64)>) -> Result<FitResult, MetricsError> {
    fit_transformed(series, label, window, true)
}

/// Least-squares line through `(t, log norm)`; returns the fit with `rate = -slope`.
pub fn fit_exponential_decay(
    series: &NormSeries,
    label: &str,
    window: Option<(f64, f64)>,
) -> Result<(f64, FitResult), MetricsError> {
    let fit = fit_transformed(series, label, window, false)?;
    Ok((-fit.slope, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeViolation {
    pub t: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub holds: bool,
    pub vacuous: bool,
    pub checked: usize,
    pub violations: Vec<EnvelopeViolation>,
}

/// True iff `value ≤ slack · envelope(t)` at every sample of `label`.
pub fn check_envelope(
    series: &NormSeries,
    label: &str,
    envelope: impl Fn(f64) -> f64,
    slack: f64,
) -> Result<EnvelopeReport, MetricsError> {
    let c = series.column_index(label)?;
    let violations: Vec<EnvelopeViolation> = series
        .rows()
        .filter_map(|(t, r)| {
            let bound = slack * envelope(t);
            (r[c] > bound).then(|| EnvelopeViolation {
                t,
                value: r[c],
                bound,
            })
        })
        .collect();
    Ok(EnvelopeReport {
        holds: violations.is_empty(),
        vacuous: series.is_empty(),
        checked: series.len(),
        violations,
    })
}
