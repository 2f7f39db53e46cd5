//! Time integration of `u_t = div(A (eps² + |∇u|²)^{(p-2)/2} ∇u) + γ|∇u|^q`
//! with homogeneous Dirichlet data, recording norm series for verification.

use crate::field::{
    divergence, face_diffusivities, gradient, gradient_magnitude_q, CoefficientField, CoefficientMode, FaceField,
    FieldError, Grid, ScalarField,
};
use crate::metrics::{lr_norm, lr_norm_values, truncate_g, MetricsError, NormSeries};
use crate::regime::{classify, ClassifyOptions, ProblemParams, Regime, RegimeError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;
use thiserror::Error;

/// Any nodal value above this is treated as blow-up.
pub const OVERFLOW_SENTINEL: f64 = 1e12;
/// Fraction of the explicit stability limit actually used.
pub const EXPLICIT_SAFETY: f64 = 0.4;
/// Floor on `max|u|` in the source-term step cap.
pub const SOURCE_CAP_FLOOR: f64 = 1e-12;
pub const IMEX_MAX_ITERATIONS: usize = 200;
pub const IMEX_MAX_HALVINGS: usize = 20;
pub const DEFAULT_SAMPLE_RATIO: f64 = 1.05;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error("solution exceeded {OVERFLOW_SENTINEL:e} at t = {t}")]
    OverflowDetected { t: f64 },
    #[error("implicit solve did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("step size fell below {dt:e} at t = {t} after repeated halving")]
    StepTooSmall { t: f64, dt: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("reading initial datum {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Zero,
    /// Smooth compactly supported bump, rescaled so its discrete max equals `amplitude`.
    Bump {
        amplitude: f64,
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default)]
        center: Option<[f64; 2]>,
    },
    /// First Dirichlet eigenfunction of the box.
    Sine { amplitude: f64 },
    /// `min(cap, |x - x0|^{-exponent})`: in `L^nu`, not in `L^{nu_prime}`.
    PowerSpike {
        exponent: f64,
        cap: f64,
        nu: f64,
        #[serde(default)]
        nu_prime: Option<f64>,
        #[serde(default)]
        center: Option<[f64; 2]>,
    },
    /// I.i.d. uniform values in `[0, amplitude)` from the scenario seed.
    RandomPositive { amplitude: f64 },
    /// Snapshot CSV on the scenario grid.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    ExplicitAdaptive,
    Imex,
}

/// Built-in families for `A(t, x)`; all stay inside `[α, Λ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSpec {
    Identity,
    /// Scalar, piecewise constant: `α` and `Λ` on alternating cells of a `cells × cells` board.
    Checkerboard { cells: u32 },
    /// Diagonal: `α + (Λ-α)(1 + sin 2πy)/2` along x, `Λ` along y.
    Layered,
    /// Scalar, time dependent: `α + (Λ-α)(1 + sin 2πt)/2`.
    Pulsating,
}

impl CoefficientSpec {
    pub fn build(&self, params: &ProblemParams) -> CoefficientField {
        let alpha = params.alpha;
        let lambda = params.lambda_upper;
        let mode = match *self {
            CoefficientSpec::Identity => CoefficientMode::Identity,
            CoefficientSpec::Checkerboard { cells } => {
                let c = cells.max(1) as f64;
                CoefficientMode::Scalar(Arc::new(move |_, x| {
                    let parity = ((x[0] * c).floor() + (x[1] * c).floor()) as i64;
                    if parity.rem_euclid(2) == 0 {
                        alpha
                    } else {
                        lambda
                    }
                }))
            }
            CoefficientSpec::Layered => CoefficientMode::Diagonal(Arc::new(move |_, x, axis| {
                if axis == 0 {
                    (alpha + (lambda - alpha) * 0.5 * (1.0 + (2.0 * PI * x[1]).sin())).clamp(alpha, lambda)
                } else {
                    lambda
                }
            })),
            CoefficientSpec::Pulsating => CoefficientMode::Scalar(Arc::new(move |t, _| {
                (alpha + (lambda - alpha) * 0.5 * (1.0 + (2.0 * PI * t).sin())).clamp(alpha, lambda)
            })),
        };
        CoefficientField { mode, alpha, lambda }
    }
}

/// Everything a single step needs.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ProblemParams,
    pub coeff: CoefficientField,
    pub eps_reg: f64,
}

impl Model {
    pub fn new(params: ProblemParams, coeff: CoefficientField) -> Self {
        Model {
            eps_reg: default_eps_reg(params.p),
            params,
            coeff,
        }
    }

    pub fn with_eps(mut self, eps_reg: f64) -> Self {
        self.eps_reg = eps_reg;
        self
    }

    /// Regularized p-Laplacian plus source at time `t`.
    pub fn rhs(&self, u: &ScalarField, t: f64) -> Result<ScalarField, FieldError> {
        let mut out = self.diffusion(u, t)?;
        if self.params.gamma != 0.0 {
            let src = gradient_magnitude_q(u, self.params.q);
            for (o, s) in out.values.iter_mut().zip(&src.values) {
                *o += self.params.gamma * s;
            }
        }
        Ok(out)
    }

    pub fn diffusion(&self, u: &ScalarField, t: f64) -> Result<ScalarField, FieldError> {
        let grad = gradient(u);
        let k = face_diffusivities(u, &grad, &self.coeff, self.params.p, self.eps_reg, t)?;
        Ok(divergence(&scale_faces(grad, &k)))
    }
}

/// `1e-8` for `p ≥ 2`, `1e-4` for the singular range `p < 2`.
pub fn default_eps_reg(p: f64) -> f64 {
    if p >= 2.0 {
        1e-8
    } else {
        1e-4
    }
}

fn scale_faces(mut faces: FaceField, by: &FaceField) -> FaceField {
    for (a, b) in faces.axes.iter_mut().zip(&by.axes) {
        for (x, y) in a.iter_mut().zip(b) {
            *x *= y;
        }
    }
    faces
}

pub fn make_initial(spec: &InitialSpec, grid: &Grid, seed: u64) -> Result<ScalarField, EvolveError> {
    let dim = grid.dim();
    let center_default = [grid.length(0) / 2.0, if dim == 2 { grid.length(1) / 2.0 } else { 0.0 }];
    let dist = move |x: [f64; 2], c: [f64; 2]| {
        let dx = x[0] - c[0];
        let dy = if dim == 2 { x[1] - c[1] } else { 0.0 };
        (dx * dx + dy * dy).sqrt()
    };
    let field = match spec {
        InitialSpec::Zero => ScalarField::zeros(*grid),
        InitialSpec::Bump {
            amplitude,
            radius,
            center,
        } => {
            let c = center.unwrap_or(center_default);
            let min_len = (0..dim).map(|a| grid.length(a)).fold(f64::INFINITY, f64::min);
            let rad = radius.unwrap_or(0.4 * min_len);
            if !(rad > 0.0) {
                return Err(EvolveError::InvalidScenario(format!("bump radius {rad} must be positive")));
            }
            let mut f = ScalarField::from_fn(*grid, |x| {
                let s = dist(x, c) / rad;
                if s < 1.0 {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            });
            let top = f.max_abs();
            if top == 0.0 {
                return Err(EvolveError::InvalidScenario("bump misses every node".into()));
            }
            for v in f.values.iter_mut() {
                *v *= amplitude / top;
            }
            f
        }
        InitialSpec::Sine { amplitude } => ScalarField::from_fn(*grid, |x| {
            let mut v = *amplitude * (PI * x[0] / grid.length(0)).sin();
            if dim == 2 {
                v *= (PI * x[1] / grid.length(1)).sin();
            }
            v
        }),
        InitialSpec::PowerSpike {
            exponent,
            cap,
            nu,
            nu_prime,
            center,
        } => {
            let a = *exponent;
            let d = dim as f64;
            if !(*nu >= 1.0) || !(a > 0.0) || !(a * nu < d) {
                return Err(EvolveError::InvalidScenario(format!(
                    "spike exponent {a} must lie in (0, dim/nu) = (0, {}) for L^{nu} data",
                    d / nu
                )));
            }
            if let Some(np) = nu_prime {
                if !(a * np > d) {
                    return Err(EvolveError::InvalidScenario(format!(
                        "spike exponent {a} must exceed dim/nu' = {} to leave L^{np}",
                        d / np
                    )));
                }
            }
            if !(*cap > 0.0) {
                return Err(EvolveError::InvalidScenario("spike cap must be positive".into()));
            }
            let c = center.unwrap_or(center_default);
            ScalarField::from_fn(*grid, |x| {
                let r = dist(x, c);
                if r == 0.0 {
                    *cap
                } else {
                    r.powf(-a).min(*cap)
                }
            })
        }
        InitialSpec::RandomPositive { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values = (0..grid.len()).map(|_| rng.gen::<f64>() * amplitude).collect();
            ScalarField::from_values(*grid, values)?
        }
        InitialSpec::File { path } => {
            let file = std::fs::File::open(path).map_err(|source| EvolveError::Io {
                path: path.clone(),
                source,
            })?;
            ScalarField::read_csv(*grid, std::io::BufReader::new(file))?
        }
    };
    field.check_finite()?;
    Ok(field)
}

/// Largest explicit step: diffusion limit `0.4 / (2 Λ k_max Σ 1/h²)` capped so the
/// source changes `u` by at most `0.1 · max(max|u|, 1e-12)` per step.
pub fn stable_dt(state: &ScalarField, model: &Model) -> f64 {
    let g = &state.grid;
    let p = model.params.p;
    let grad = gradient(state);
    let ident = CoefficientField::identity();
    // Only fails for eps_reg = 0 with p < 2, which the regularization default avoids.
    let kmax = match face_diffusivities(state, &grad, &ident, p, model.eps_reg, 0.0) {
        Ok(k) => k.max_abs(),
        Err(_) => f64::INFINITY,
    };
    let inv_h2: f64 = (0..g.dim()).map(|a| g.spacing(a).powi(-2)).sum();
    let mut dt = EXPLICIT_SAFETY / (2.0 * model.params.lambda_upper * kmax.max(f64::MIN_POSITIVE) * inv_h2);
    if model.params.gamma > 0.0 {
        let src = gradient_magnitude_q(state, model.params.q).max_abs() * model.params.gamma;
        if src > 0.0 {
            dt = dt.min(0.1 * state.max_abs().max(SOURCE_CAP_FLOOR) / src);
        }
    }
    dt
}

fn check_overflow(u: &ScalarField, t: f64) -> Result<(), EvolveError> {
    if u.values.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_SENTINEL) {
        return Err(EvolveError::OverflowDetected { t });
    }
    Ok(())
}

/// Forward Euler: `u + dt (div F(u) + γ|∇u|^q)` at time `t`.
pub fn step_explicit(state: &ScalarField, t: f64, dt: f64, model: &Model) -> Result<ScalarField, EvolveError> {
    let rhs = model.rhs(state, t)?;
    let values = state
        .values
        .iter()
        .zip(&rhs.values)
        .map(|(u, r)| u + dt * r)
        .collect();
    let next = ScalarField {
        grid: state.grid,
        values,
    };
    check_overflow(&next, t + dt)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImexStats {
    pub iterations: usize,
}

/// Implicit diffusion, explicit source:
/// `u' - dt div F(u') = u + dt γ|∇u|^q`, solved by damped Picard iteration with
/// frozen face diffusivities and a conjugate-gradient linear solve.
pub fn step_imex(state: &ScalarField, t: f64, dt: f64, model: &Model) -> Result<(ScalarField, ImexStats), EvolveError> {
    let grid = state.grid;
    let t_new = t + dt;
    let mut rhs = state.values.clone();
    if model.params.gamma != 0.0 {
        let src = gradient_magnitude_q(state, model.params.q);
        for (r, s) in rhs.iter_mut().zip(&src.values) {
            *r += dt * model.params.gamma * s;
        }
    }
    let cv = grid.cell_volume();
    let tol = 1e-10 * (1.0 + lr_norm(state, 2.0));
    let residual = |w: &ScalarField| -> Result<f64, EvolveError> {
        let d = model.diffusion(w, t_new)?;
        let r: Vec<f64> = w
            .values
            .iter()
            .zip(&d.values)
            .zip(&rhs)
            .map(|((w, d), b)| w - dt * d - b)
            .collect();
        Ok(lr_norm_values(&r, cv, 2.0))
    };

    let mut w = state.clone();
    let mut res = residual(&w)?;
    let mut theta: f64 = 1.0;
    for it in 0..IMEX_MAX_ITERATIONS {
        if res < tol {
            check_overflow(&w, t_new)?;
            return Ok((w, ImexStats { iterations: it }));
        }
        let k = face_diffusivities(&w, &gradient(&w), &model.coeff, model.params.p, model.eps_reg, t_new)?;
        let v = solve_frozen(&grid, &k, dt, &rhs, &w.values);
        loop {
            let cand = ScalarField {
                grid,
                values: w.values.iter().zip(&v).map(|(a, b)| a + theta * (b - a)).collect(),
            };
            let cres = residual(&cand)?;
            if cres < res || theta <= 1.0 / 64.0 {
                w = cand;
                res = cres;
                theta = (2.0 * theta).min(1.0);
                break;
            }
            theta *= 0.5;
        }
        if !res.is_finite() {
            break;
        }
    }
    if res < tol {
        check_overflow(&w, t_new)?;
        return Ok((
            w,
            ImexStats {
                iterations: IMEX_MAX_ITERATIONS,
            },
        ));
    }
    Err(EvolveError::NonConvergence {
        iterations: IMEX_MAX_ITERATIONS,
        residual: res,
    })
}

/// Solves `(I - dt div(K ∇·)) v = b` by conjugate gradients, starting from `x0`.
fn solve_frozen(grid: &Grid, k: &FaceField, dt: f64, b: &[f64], x0: &[f64]) -> Vec<f64> {
    let apply = |x: &[f64]| -> Vec<f64> {
        let f = ScalarField {
            grid: *grid,
            values: x.to_vec(),
        };
        let flux = scale_faces(gradient(&f), k);
        let d = divergence(&flux);
        x.iter().zip(&d.values).map(|(x, d)| x - dt * d).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = 1e-28 * dot(b, b).max(f64::MIN_POSITIVE);
    for _ in 0..(10 * b.len()).max(100) {
        if rr <= target {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let a = rr / pap;
        for i in 0..x.len() {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: ProblemParams,
    pub grid: Grid,
    pub coefficient: CoefficientSpec,
    pub initial: InitialSpec,
    pub t_end: f64,
    pub dt_init: f64,
    pub stepper: Stepper,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub k_levels: Vec<f64>,
    #[serde(default)]
    pub r_list: Vec<f64>,
    /// Overrides the default regularization.
    #[serde(default)]
    pub eps_reg: Option<f64>,
    /// Summability exponent for the `G_k` columns; derived from the regime when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Relative floor `tol · ‖u0‖_∞` below which the state is flushed to zero.
    #[serde(default)]
    pub extinction_floor: Option<f64>,
    #[serde(default)]
    pub dt_max: Option<f64>,
    #[serde(default = "default_ratio")]
    pub sample_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_critical_omega")]
    pub critical_omega: f64,
}

fn default_ratio() -> f64 {
    DEFAULT_SAMPLE_RATIO
}

fn default_critical_omega() -> f64 {
    crate::regime::DEFAULT_CRITICAL_OMEGA
}

impl Scenario {
    /// A scenario with library defaults for everything but the essentials.
    pub fn new(params: ProblemParams, grid: Grid, initial: InitialSpec, t_end: f64) -> Self {
        Scenario {
            params,
            grid,
            coefficient: CoefficientSpec::Identity,
            initial,
            t_end,
            dt_init: 1e-6,
            stepper: Stepper::ExplicitAdaptive,
            snapshot_times: Vec::new(),
            k_levels: Vec::new(),
            r_list: Vec::new(),
            eps_reg: None,
            sigma: None,
            extinction_floor: None,
            dt_max: None,
            sample_ratio: DEFAULT_SAMPLE_RATIO,
            seed: 0,
            critical_omega: crate::regime::DEFAULT_CRITICAL_OMEGA,
        }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        self.params.validate()?;
        let bad = |msg: String| Err(EvolveError::InvalidScenario(msg));
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end = {} must be non-negative", self.t_end));
        }
        if !(self.dt_init > 0.0) {
            return bad(format!("dt_init = {} must be positive", self.dt_init));
        }
        if !(self.sample_ratio > 1.0) {
            return bad(format!("sample_ratio = {} must exceed 1", self.sample_ratio));
        }
        if self.k_levels.iter().any(|k| !(*k >= 0.0)) || self.k_levels.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("k_levels must be non-negative and ascending".into());
        }
        if self.r_list.iter().any(|r| !(*r >= 1.0) || r.is_infinite()) {
            return bad("r_list entries must be finite and at least 1".into());
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return bad("snapshot times must be non-negative".into());
        }
        if let Some(e) = self.eps_reg {
            if !(e >= 0.0) {
                return bad("eps_reg must be non-negative".into());
            }
        }
        if let Some(s) = self.sigma {
            if !(s >= 1.0) {
                return bad("sigma must be at least 1".into());
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Model {
        let coeff = self.coefficient.build(&self.params);
        Model {
            params: self.params,
            coeff,
            eps_reg: self.eps_reg.unwrap_or_else(|| default_eps_reg(self.params.p)),
        }
    }

    /// σ used for the `G_k` columns.
    pub fn sigma(&self) -> f64 {
        if let Some(s) = self.sigma {
            return s;
        }
        let report = classify(
            &self.params,
            &ClassifyOptions {
                critical_omega: self.critical_omega,
                ..Default::default()
            },
        );
        match report.regime {
            Regime::OutOfRange | Regime::Sublinear => report.nu,
            _ => report.sigma_effective,
        }
    }

    /// Column labels of the norm series, in CSV order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels = vec!["linf".to_string(), "l1".to_string()];
        labels.extend(self.r_list.iter().map(|r| format!("l{r}")));
        for k in &self.k_levels {
            labels.push(format!("gk{k}_lsigma"));
            labels.push(format!("gk{k}_l1"));
            labels.extend(self.r_list.iter().map(|r| format!("gk{k}_l{r}")));
        }
        labels
    }

    /// Sample times: 0, then geometric from `dt_init` with `sample_ratio`, plus `t_end` and snapshots.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut times = vec![0.0];
        if self.t_end > 0.0 {
            let mut t = self.dt_init;
            while t < self.t_end {
                times.push(t);
                t *= self.sample_ratio;
            }
            times.push(self.t_end);
            times.extend(self.snapshot_times.iter().copied().filter(|&s| s > 0.0 && s <= self.t_end));
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
        times
    }

    /// Norms recorded at one sample.
    pub fn measure(&self, u: &ScalarField) -> Vec<f64> {
        let sigma = self.sigma();
        let cv = u.grid.cell_volume();
        let mut row = vec![lr_norm(u, f64::INFINITY), lr_norm(u, 1.0)];
        row.extend(self.r_list.iter().map(|&r| lr_norm(u, r)));
        for &k in &self.k_levels {
            let g: Vec<f64> = u.values.iter().map(|&z| truncate_g(z, k)).collect();
            row.push(lr_norm_values(&g, cv, sigma));
            row.push(lr_norm_values(&g, cv, 1.0));
            row.extend(self.r_list.iter().map(|&r| lr_norm_values(&g, cv, r)));
        }
        row
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepLog {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub series: NormSeries,
    pub snapshots: Vec<(f64, ScalarField)>,
    pub extinction: Option<f64>,
    pub blowup: Option<f64>,
    pub step_log: StepLog,
    pub final_state: ScalarField,
}

/// Earliest sample time from which `linf ≤ tol` for every later sample.
pub fn detect_extinction(series: &NormSeries, tol: f64) -> Result<Option<f64>, MetricsError> {
    let linf = series.column("linf")?;
    let mut first = None;
    for (t, v) in series.times().iter().zip(&linf).rev() {
        if *v <= tol {
            first = Some(*t);
        } else {
            break;
        }
    }
    Ok(first)
}

/// Default extinction tolerance `1e-9 · ‖u0‖_∞`.
pub fn default_extinction_tol(series: &NormSeries) -> Result<f64, MetricsError> {
    Ok(1e-9 * series.column("linf")?.first().copied().unwrap_or(0.0))
}

pub fn run(scenario: &Scenario) -> Result<RunResult, EvolveError> {
    scenario.validate()?;
    let model = scenario.model();
    model
        .coeff
        .check_bounds(&scenario.grid, &[0.0, 0.25 * scenario.t_end, 0.5 * scenario.t_end, scenario.t_end])?;
    let mut u = make_initial(&scenario.initial, &scenario.grid, scenario.seed)?;
    let sigma = scenario.sigma();
    if !lr_norm(&u, sigma).is_finite() {
        return Err(EvolveError::InvalidScenario(format!("initial datum has no finite L^{sigma} norm")));
    }

    let mut series = NormSeries::new(scenario.labels());
    let mut snapshots = Vec::new();
    let mut log = StepLog::default();
    let mut blowup = None;
    let u0_sup = u.max_abs();
    let floor = scenario.extinction_floor.map(|f| f * u0_sup);
    let dt_max = scenario.dt_max.unwrap_or(scenario.t_end / 50.0).max(f64::MIN_POSITIVE);
    let is_snapshot = |t: f64| {
        scenario
            .snapshot_times
            .iter()
            .any(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1e-300))
    };

    let mut t = 0.0;
    let mut dt_imex = scenario.dt_init;
    'samples: for &target in &scenario.sample_times() {
        while t < target {
            if u.is_zero() {
                // Zero is a steady state of both schemes.
                t = target;
                break;
            }
            let remaining = target - t;
            let step = match scenario.stepper {
                Stepper::ExplicitAdaptive => {
                    let dt = stable_dt(&u, &model);
                    let dt = if dt >= remaining * (1.0 - 1e-12) { remaining } else { dt };
                    step_explicit(&u, t, dt, &model).map(|next| (next, dt))
                }
                Stepper::Imex => imex_with_halving(&u, t, remaining, &mut dt_imex, dt_max, &model, &mut log),
            };
            match step {
                Ok((next, dt)) => {
                    u = next;
                    t = if dt == remaining { target } else { t + dt };
                    log.accepted += 1;
                }
                Err(EvolveError::OverflowDetected { t: tb }) => {
                    blowup = Some(tb);
                    break 'samples;
                }
                Err(e) => return Err(e),
            }
            if let Some(fl) = floor {
                if u.max_abs() <= fl {
                    u = ScalarField::zeros(u.grid);
                }
            }
        }
        series.push(target, scenario.measure(&u))?;
        if is_snapshot(target) {
            snapshots.push((target, u.clone()));
        }
    }

    let tol = default_extinction_tol(&series)?;
    let extinction = if u0_sup > 0.0 {
        detect_extinction(&series, tol)?
    } else {
        Some(0.0)
    };
    Ok(RunResult {
        series,
        snapshots,
        extinction,
        blowup,
        step_log: log,
        final_state: u,
    })
}

fn imex_with_halving(
    u: &ScalarField,
    t: f64,
    remaining: f64,
    dt_state: &mut f64,
    dt_max: f64,
    model: &Model,
    log: &mut StepLog,
) -> Result<(ScalarField, f64), EvolveError> {
    let mut dt = dt_state.min(dt_max);
    for _ in 0..=IMEX_MAX_HALVINGS {
        let this = if dt >= remaining * (1.0 - 1e-12) { remaining } else { dt };
        match step_imex(u, t, this, model) {
            Ok((next, _)) => {
                *dt_state = (1.5 * dt).min(dt_max);
                return Ok((next, this));
            }
            Err(EvolveError::NonConvergence { .. }) => {
                log.rejected += 1;
                dt = 0.5 * this;
            }
            Err(e) => return Err(e),
        }
    }
    Err(EvolveError::StepTooSmall { t, dt })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat_model() -> Model {
        let params = ProblemParams::model(2.0, 1.5, 2, 0.0).unwrap();
        Model::new(params, CoefficientField::identity())
    }

    #[test]
    fn zero_is_a_steady_state() {
        let params = ProblemParams::model(2.5, 2.0, 2, 3.0).unwrap();
        let model = Model::new(params, CoefficientField::identity());
        let u = ScalarField::zeros(Grid::unit_2d(6).unwrap());
        assert!(step_explicit(&u, 0.0, 1e-3, &model).unwrap().is_zero());
        assert!(step_imex(&u, 0.0, 1e-1, &model).unwrap().0.is_zero());
    }

    #[test]
    fn single_node_explicit_step() {
        // n = 1 on (0,1): h = 0.5, u_1 = 1 → u' = 1 + dt (0 - 2 + 0)/0.25.
        let g = Grid::unit_1d(1).unwrap();
        let u = ScalarField::from_values(g, vec![1.0]).unwrap();
        let dt = 0.01;
        let next = step_explicit(&u, 0.0, dt, &heat_model()).unwrap();
        assert!((next.values[0] - (1.0 - 8.0 * dt)).abs() < 1e-14);
    }

    #[test]
    fn single_node_implicit_step() {
        // u'(1 + 0.25 · 8) = 1.
        let g = Grid::unit_1d(1).unwrap();
        let u = ScalarField::from_values(g, vec![1.0]).unwrap();
        let (next, stats) = step_imex(&u, 0.0, 0.25, &heat_model()).unwrap();
        assert!((next.values[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!(stats.iterations <= 1);
    }

    #[test]
    fn linear_implicit_step_needs_one_iteration() {
        let g = Grid::unit_2d(9).unwrap();
        let u = ScalarField::from_fn(g, |x| (x[0] * (1.0 - x[0]) * x[1]).sqrt());
        let (_, stats) = step_imex(&u, 0.0, 0.05, &heat_model()).unwrap();
        assert_eq!(stats.iterations, 1);
    }

    #[test]
    fn stable_dt_examples() {
        let g = Grid::new(&[9], &[1.0]).unwrap();
        assert!((g.spacing(0) - 0.1).abs() < 1e-15);
        let u = ScalarField::from_fn(g, |x| x[0].sin());
        let dt = stable_dt(&u, &heat_model());
        assert!((dt - 0.002).abs() < 1e-15);
        let g2 = Grid::new(&[9], &[2.0]).unwrap();
        let u2 = ScalarField::from_fn(g2, |x| x[0].sin());
        assert!((stable_dt(&u2, &heat_model()) / dt - 4.0).abs() < 1e-12);
        // u ≡ 0 with p = 3: diffusivity is eps_reg, source cap inactive.
        let params = ProblemParams::model(3.0, 2.5, 2, 1.0).unwrap();
        let model = Model::new(params, CoefficientField::identity()).with_eps(1e-3);
        let z = ScalarField::zeros(g);
        let expect = 0.4 * 0.01 / (2.0 * 1e-3);
        assert!((stable_dt(&z, &model) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn explicit_step_keeps_nonnegative_data_nonnegative() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Grid::unit_1d(5).unwrap();
        for &(p, q, gamma) in &[(2.0, 1.5, 0.0), (3.0, 2.5, 0.5), (1.6, 1.2, 0.2), (2.2, 1.8, 1.0)] {
            let params = ProblemParams::model(p, q, 2, gamma).unwrap();
            let model = Model::new(params, CoefficientField::identity());
            for _ in 0..200 {
                let vals: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 3.0).collect();
                let u = ScalarField::from_values(g, vals).unwrap();
                let dt = stable_dt(&u, &model);
                let next = step_explicit(&u, 0.0, dt, &model).unwrap();
                assert!(next.values.iter().all(|&v| v >= 0.0), "p={p}: {:?}", next.values);
            }
        }
    }

    #[test]
    fn overflow_is_detected() {
        let g = Grid::unit_1d(3).unwrap();
        let u = ScalarField::from_values(g, vec![1e11, 9e11, 1e11]).unwrap();
        let params = ProblemParams::model(2.0, 1.9, 2, 10.0).unwrap();
        let model = Model::new(params, CoefficientField::identity());
        assert!(matches!(
            step_explicit(&u, 0.0, 1.0, &model),
            Err(EvolveError::OverflowDetected { .. })
        ));
    }

    #[test]
    fn initial_data_examples() {
        let g = Grid::unit_2d(15).unwrap();
        let bump = make_initial(
            &InitialSpec::Bump {
                amplitude: 1.0,
                radius: None,
                center: None,
            },
            &g,
            0,
        )
        .unwrap();
        assert_eq!(bump.max_abs(), 1.0);
        assert!(make_initial(&InitialSpec::Zero, &g, 0).unwrap().is_zero());
        let spike = InitialSpec::PowerSpike {
            exponent: 0.5,
            cap: 1e3,
            nu: 3.0,
            nu_prime: Some(5.0),
            center: None,
        };
        assert!(make_initial(&spike, &g, 0).is_ok());
        let outside = InitialSpec::PowerSpike {
            exponent: 0.7,
            cap: 1e3,
            nu: 3.0,
            nu_prime: None,
            center: None,
        };
        assert!(make_initial(&outside, &g, 0).is_err());
        let not_unbounded_enough = InitialSpec::PowerSpike {
            exponent: 0.3,
            cap: 1e3,
            nu: 3.0,
            nu_prime: Some(5.0),
            center: None,
        };
        assert!(make_initial(&not_unbounded_enough, &g, 0).is_err());
        let a = make_initial(&InitialSpec::RandomPositive { amplitude: 2.0 }, &g, 11).unwrap();
        let b = make_initial(&InitialSpec::RandomPositive { amplitude: 2.0 }, &g, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|&v| (0.0..2.0).contains(&v)));
    }

    #[test]
    fn extinction_detection_examples() {
        let mk = |vals: &[(f64, f64)]| {
            let mut s = NormSeries::new(vec!["linf".into()]);
            for &(t, v) in vals {
                s.push(t, vec![v]).unwrap();
            }
            s
        };
        let below = mk(&[(0.0, 1e-12), (1.0, 0.0), (2.0, 1e-13)]);
        assert_eq!(detect_extinction(&below, 1e-9).unwrap(), Some(0.0));
        let positive = mk(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]);
        assert_eq!(detect_extinction(&positive, 1e-9).unwrap(), None);
        let samples: Vec<(f64, f64)> = (0..=40)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, (1.0f64 - t / 2.0).max(0.0).powi(2))
            })
            .collect();
        let t_ext = detect_extinction(&mk(&samples), 1e-9).unwrap().unwrap();
        assert!((t_ext - 2.0).abs() <= 0.1 + 1e-12);
    }

    #[test]
    fn run_with_zero_horizon_records_only_the_start() {
        let params = ProblemParams::model(2.0, 1.5, 2, 0.5).unwrap();
        let sc = Scenario::new(params, Grid::unit_1d(8).unwrap(), InitialSpec::Sine { amplitude: 1.0 }, 0.0);
        let res = run(&sc).unwrap();
        assert_eq!(res.series.times(), &[0.0]);
    }

    #[test]
    fn run_from_zero_stays_zero() {
        let params = ProblemParams::model(2.5, 2.0, 2, 0.5).unwrap();
        let mut sc = Scenario::new(params, Grid::unit_2d(8).unwrap(), InitialSpec::Zero, 1.0);
        sc.k_levels = vec![0.0, 0.5];
        sc.r_list = vec![2.0];
        let res = run(&sc).unwrap();
        for (_, row) in res.series.rows() {
            assert!(row.iter().all(|&v| v == 0.0));
        }
        assert_eq!(res.extinction, Some(0.0));
    }

    #[test]
    fn labels_follow_the_csv_schema() {
        let params = ProblemParams::model(2.0, 1.5, 2, 0.5).unwrap();
        let mut sc = Scenario::new(params, Grid::unit_1d(8).unwrap(), InitialSpec::Zero, 1.0);
        sc.r_list = vec![2.0, 4.5];
        sc.k_levels = vec![0.0, 1.5];
        assert_eq!(
            sc.labels(),
            [
                "linf", "l1", "l2", "l4.5", "gk0_lsigma", "gk0_l1", "gk0_l2", "gk0_l4.5", "gk1.5_lsigma",
                "gk1.5_l1", "gk1.5_l2", "gk1.5_l4.5"
            ]
        );
    }

    #[test]
    fn sample_times_are_geometric_and_sorted() {
        let params = ProblemParams::model(2.0, 1.5, 2, 0.5).unwrap();
        let mut sc = Scenario::new(params, Grid::unit_1d(8).unwrap(), InitialSpec::Zero, 1.0);
        sc.dt_init = 1e-3;
        sc.snapshot_times = vec![0.5, 0.25];
        let ts = sc.sample_times();
        assert_eq!(ts[0], 0.0);
        assert_eq!(*ts.last().unwrap(), 1.0);
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert!(ts.contains(&0.5) && ts.contains(&0.25));
        assert!((ts[2] / ts[1] - 1.05).abs() < 1e-12);
    }
}
