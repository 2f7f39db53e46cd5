//! Exponent calculus for `u_t - div(A |∇u|^{p-2} ∇u) = γ |∇u|^q`.
//!
//! Everything here is a pure function of the problem parameters: growth
//! thresholds, the data-summability exponent σ, decay rates and exponents,
//! and the closed-form envelopes the simulations are checked against.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Absolute tolerance used to decide regime boundaries.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Default ω for the critical growth `q = p - N/(N+1)`, where data are taken in `L^{1+ω}`.
pub const DEFAULT_CRITICAL_OMEGA: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("q = {q} must lie strictly below p = {p}")]
    QNotBelowP { p: f64, q: f64 },
    #[error("p = {p} <= 2N/(N+nu) = {threshold}: no regularizing effect")]
    NoRegularization { p: f64, threshold: f64 },
    #[error("coercivity bracket {bracket} is not positive")]
    NonPositiveRate { bracket: f64 },
    #[error("norm order r = {r} must exceed sigma = {sigma}")]
    OrderNotAboveSigma { r: f64, sigma: f64 },
    #[error("(p, q, N) = ({p}, {q}, {n}) is outside the L1-data growth range")]
    NotL1Regime { p: f64, q: f64, n: u32 },
}

/// The tuple driving every formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub p: f64,
    pub q: f64,
    /// Analytic dimension N used in the formulas, independent of the grid dimension.
    pub dim_n: u32,
    pub gamma: f64,
    pub alpha: f64,
    pub lambda_upper: f64,
    pub omega_measure: f64,
    pub sobolev_const: f64,
    pub poincare_const: f64,
}

impl ProblemParams {
    /// Unit-coefficient parameters: `α = Λ = 1`, `|Ω| = 1`, `c_S = c_P = 1`.
    pub fn model(p: f64, q: f64, dim_n: u32, gamma: f64) -> Result<Self, RegimeError> {
        let params = ProblemParams {
            p,
            q,
            dim_n,
            gamma,
            alpha: 1.0,
            lambda_upper: 1.0,
            omega_measure: 1.0,
            sobolev_const: 1.0,
            poincare_const: 1.0,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks `p > 1`, `0 < q < p`, `N ≥ 2`, `γ ≥ 0`, `0 < α ≤ Λ`, `|Ω| > 0` and positive constants.
    ///
    /// `γ = 0` is admitted so the coercive baseline can share the same parameter set.
    pub fn validate(&self) -> Result<(), RegimeError> {
        fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), RegimeError> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(RegimeError::InvalidParam { name, value, reason })
            }
        }
        check("p", self.p, self.p > 1.0, "must exceed 1")?;
        check("q", self.q, self.q > 0.0, "must be positive")?;
        if self.q >= self.p {
            return Err(RegimeError::QNotBelowP { p: self.p, q: self.q });
        }
        check("dim_n", self.dim_n as f64, self.dim_n >= 2, "must be at least 2")?;
        check("gamma", self.gamma, self.gamma >= 0.0, "must be non-negative")?;
        check("alpha", self.alpha, self.alpha > 0.0, "must be positive")?;
        check(
            "lambda_upper",
            self.lambda_upper,
            self.lambda_upper >= self.alpha,
            "must be at least alpha",
        )?;
        check("omega_measure", self.omega_measure, self.omega_measure > 0.0, "must be positive")?;
        check("sobolev_const", self.sobolev_const, self.sobolev_const > 0.0, "must be positive")?;
        check("poincare_const", self.poincare_const, self.poincare_const > 0.0, "must be positive")?;
        Ok(())
    }

    pub fn n(&self) -> f64 {
        self.dim_n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Sublinear,
    SuperlinearSigma,
    SuperlinearL1,
    CriticalL1,
    NonexistenceRisk,
    OutOfRange,
}

impl Regime {
    pub fn is_superlinear(self) -> bool {
        matches!(
            self,
            Regime::SuperlinearSigma | Regime::SuperlinearL1 | Regime::CriticalL1
        )
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Regime::Sublinear => "Sublinear",
            Regime::SuperlinearSigma => "SuperlinearSigma",
            Regime::SuperlinearL1 => "SuperlinearL1",
            Regime::CriticalL1 => "CriticalL1",
            Regime::NonexistenceRisk => "NonexistenceRisk",
            Regime::OutOfRange => "OutOfRange",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// Summability ν' of the data the caller intends to use; `None` means "compatible".
    pub declared_nu: Option<f64>,
    pub critical_omega: f64,
    /// Dimension of the simulation grid, if any, to flag a mismatch with `N`.
    pub grid_dim: Option<usize>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            declared_nu: None,
            critical_omega: DEFAULT_CRITICAL_OMEGA,
            grid_dim: None,
        }
    }
}

/// Flat record: every field is a scalar, a string or a list of strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub p: f64,
    pub q: f64,
    pub dim_n: u32,
    pub sigma: f64,
    /// Summability exponent actually used for the data: σ, `1+ω` in the critical case, 1 for L¹ data.
    pub sigma_effective: f64,
    pub nu: f64,
    pub beta: f64,
    pub finite_energy: bool,
    pub p_lower_threshold: f64,
    pub q_lower: f64,
    pub q_l1_threshold: f64,
    pub q_l2_threshold: f64,
    pub declared_nu: Option<f64>,
    pub warnings: Vec<String>,
}

/// `σ = N(q - (p-1))/(p - q)`; may be ≤ 1.
pub fn sigma_exponent(p: f64, q: f64, n: u32) -> Result<f64, RegimeError> {
    if !(q < p) || q <= 0.0 {
        return Err(RegimeError::QNotBelowP { p, q });
    }
    let n = n as f64;
    Ok(n * (q - (p - 1.0)) / (p - q))
}

/// `β = (σ + p - 2)/p`, the power of `(1+|u|)` that carries finite energy.
pub fn beta_exponent(sigma: f64, p: f64) -> f64 {
    (sigma + p - 2.0) / p
}

/// `max{p/2, (p(N+1)-N)/(N+2)}`: superlinear growth starts above this.
pub fn q_lower(p: f64, n: u32) -> f64 {
    let n = n as f64;
    (p / 2.0).max((p * (n + 1.0) - n) / (n + 2.0))
}

/// `p - N/(N+1)`, where σ = 1.
pub fn q_l1_threshold(p: f64, n: u32) -> f64 {
    let n = n as f64;
    p - n / (n + 1.0)
}

/// `p - N/(N+2)`, where σ = 2.
pub fn q_l2_threshold(p: f64, n: u32) -> f64 {
    let n = n as f64;
    p - n / (n + 2.0)
}

/// `2N/(N+ν)`: the coercive problem regularizes iff `p` exceeds it.
pub fn p_lower_threshold(n: u32, nu: f64) -> f64 {
    let n = n as f64;
    2.0 * n / (n + nu)
}

pub fn classify(params: &ProblemParams, options: &ClassifyOptions) -> RegimeReport {
    let ProblemParams { p, q, dim_n, .. } = *params;
    let n = dim_n as f64;
    // validate() guarantees q < p, so σ is finite.
    let sigma = n * (q - (p - 1.0)) / (p - q);
    let nu = sigma.max(1.0);
    let ql = q_lower(p, dim_n);
    let q1 = q_l1_threshold(p, dim_n);
    let q2 = q_l2_threshold(p, dim_n);
    let p_l1 = 2.0 * n / (n + 1.0);

    let regime = if p >= n || p <= 1.0 || q >= p {
        Regime::OutOfRange
    } else if q <= ql + BOUNDARY_TOL {
        Regime::Sublinear
    } else if (q - q1).abs() <= BOUNDARY_TOL && p > p_l1 {
        Regime::CriticalL1
    } else if q > q1 {
        match options.declared_nu {
            Some(declared) if declared < sigma => Regime::NonexistenceRisk,
            _ => Regime::SuperlinearSigma,
        }
    } else if p > p_l1 {
        Regime::SuperlinearL1
    } else {
        // q_l1 <= p/2 <= q_lower here, so this branch is unreachable for valid input.
        Regime::Sublinear
    };

    let sigma_effective = match regime {
        Regime::CriticalL1 => 1.0 + options.critical_omega,
        Regime::SuperlinearL1 => 1.0,
        _ => nu,
    };
    let finite_energy =
        matches!(regime, Regime::SuperlinearSigma | Regime::NonexistenceRisk) && sigma >= 2.0 - BOUNDARY_TOL;

    let mut warnings = Vec::new();
    if let Some(grid_dim) = options.grid_dim {
        if grid_dim != dim_n as usize {
            warnings.push(format!(
                "formula dimension N = {dim_n} differs from grid dimension {grid_dim}"
            ));
        }
    }

    RegimeReport {
        regime,
        p,
        q,
        dim_n,
        sigma,
        sigma_effective,
        nu,
        beta: beta_exponent(sigma_effective, p),
        finite_energy,
        p_lower_threshold: p_lower_threshold(dim_n, nu),
        q_lower: ql,
        q_l1_threshold: q1,
        q_l2_threshold: q2,
        declared_nu: options.declared_nu,
        warnings,
    }
}

/// Norm order for the coercive decay estimates; `r = ∞` is admitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

/// Exponents `(h0, h1)` of `‖u(t)‖_r ≤ c ‖u0‖_ν^{h0} / t^{h1}` for the problem without source.
pub fn coercive_decay_exponents(p: f64, nu: f64, r: NormOrder, n: u32) -> Result<(f64, f64), RegimeError> {
    let threshold = p_lower_threshold(n, nu);
    if p <= threshold {
        return Err(RegimeError::NoRegularization { p, threshold });
    }
    let nf = n as f64;
    let gap = p * (nf + nu) - 2.0 * nf;
    match r {
        NormOrder::Infinity => Ok((p * nu / gap, nf / gap)),
        NormOrder::Finite(r) => {
            if r < nu {
                return Err(RegimeError::OrderNotAboveSigma { r, sigma: nu });
            }
            let denom = r * (2.0 * nf - p * (nf + nu));
            let h0 = nu * (2.0 * nf - p * (nf + r)) / denom;
            let h1 = nf * (nu - r) / denom;
            Ok((h0, h1))
        }
    }
}

/// Largest `δ₀` with `α - γ c_S δ^{(p-q)/N} ≥ α/2` for all `δ ≤ δ₀`.
///
/// Infinite when `γ = 0`.
pub fn delta_threshold(params: &ProblemParams) -> f64 {
    if params.gamma == 0.0 {
        return f64::INFINITY;
    }
    let expo = params.n() / (params.p - params.q);
    (params.alpha / (2.0 * params.gamma * params.sobolev_const)).powf(expo)
}

/// `α - γ c_S x^{(p-q)/N}` for `x = δ` or `x = ‖u(τ)‖_∞`.
pub fn coercivity_bracket(params: &ProblemParams, delta_or_sup: f64) -> f64 {
    if params.gamma == 0.0 {
        return params.alpha;
    }
    let expo = (params.p - params.q) / params.n();
    params.alpha - params.gamma * params.sobolev_const * delta_or_sup.powf(expo)
}

/// Decay rate `λ = (c_S σ/β^p) · bracket · |Ω|^{-(N(p-2)+pσ)/(Nσ)}`.
pub fn lambda_rate(params: &ProblemParams, sigma: f64, delta_or_sup: f64) -> Result<f64, RegimeError> {
    let bracket = coercivity_bracket(params, delta_or_sup);
    if !(bracket > 0.0) {
        return Err(RegimeError::NonPositiveRate { bracket });
    }
    let p = params.p;
    let n = params.n();
    let beta = beta_exponent(sigma, p);
    let omega_expo = -(n * (p - 2.0) + p * sigma) / (n * sigma);
    Ok(params.sobolev_const * sigma / beta.powf(p) * bracket * params.omega_measure.powf(omega_expo))
}

/// Closed-form long-time predictions for `‖G_k(u)‖_σ` (or `‖u(τ+·)‖_σ`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPrediction {
    pub p: f64,
    pub dim_n: u32,
    pub sigma: f64,
    /// σ-norm at the starting time.
    pub y0: f64,
    pub lambda_rate: f64,
    /// Exponent `βp/σ` of the differential inequality for `y = ‖·‖_σ^σ`.
    pub gronwall_m: f64,
    /// L^∞ exponents of `‖G_k(u(t))‖_∞ ≤ c ‖G_k(u0)‖_σ^{h0} / t^{h1}`.
    pub h0: f64,
    pub h1: f64,
    /// `1/(p-2)` when `p > 2`.
    pub universal_exponent: Option<f64>,
    /// Extinction time when `p < 2`.
    pub extinction_time: Option<f64>,
    /// `p = 2`: the envelope is exponential.
    pub exponential_case: bool,
}

impl DecayPrediction {
    /// Envelope for the σ-norm at time `t` after the start.
    pub fn sigma_norm_envelope(&self, t: f64) -> f64 {
        let p = self.p;
        let s = self.sigma;
        let lam = self.lambda_rate;
        if self.y0 == 0.0 {
            return 0.0;
        }
        if p > 2.0 {
            (self.y0.powf(-(p - 2.0)) + lam * (p - 2.0) * t / s).powf(-1.0 / (p - 2.0))
        } else if p < 2.0 {
            let base = self.y0.powf(2.0 - p) - lam * (2.0 - p) * t / s;
            if base <= 0.0 {
                0.0
            } else {
                base.powf(1.0 / (2.0 - p))
            }
        } else {
            self.y0 * (-lam * t / s).exp()
        }
    }

    /// `(g0 exponent, time exponent)` of the `L^σ → L^r` regularizing estimate for `‖G_k(u(t))‖_r^r`.
    pub fn regularizing(&self, r: f64) -> Result<(f64, f64), RegimeError> {
        regularizing_exponents(self.p, self.sigma, r, self.dim_n)
    }
}

pub fn decay_prediction(
    params: &ProblemParams,
    sigma: f64,
    delta_or_sup: f64,
    y0: f64,
) -> Result<DecayPrediction, RegimeError> {
    let lam = lambda_rate(params, sigma, delta_or_sup)?;
    let p = params.p;
    let n = params.n();
    let h1 = n / (n * (p - 2.0) + p * sigma);
    let h0 = h1 * p * sigma / n;
    let (universal_exponent, extinction_time) = if p > 2.0 {
        (Some(1.0 / (p - 2.0)), None)
    } else if p < 2.0 {
        (None, Some(sigma / ((2.0 - p) * lam) * y0.powf(2.0 - p)))
    } else {
        (None, None)
    };
    Ok(DecayPrediction {
        p,
        dim_n: params.dim_n,
        sigma,
        y0,
        lambda_rate: lam,
        gronwall_m: beta_exponent(sigma, p) * p / sigma,
        h0,
        h1,
        universal_exponent,
        extinction_time,
        exponential_case: p == 2.0,
    })
}

/// Exponent pair of `‖G_k(u(t))‖_r^r ≤ c g0^{a} / t^{b}`: returns `(a, b)`.
pub fn regularizing_exponents(p: f64, sigma: f64, r: f64, n: u32) -> Result<(f64, f64), RegimeError> {
    if !(r > sigma) {
        return Err(RegimeError::OrderNotAboveSigma { r, sigma });
    }
    let n = n as f64;
    let denom = n * (p - 2.0) + p * sigma;
    Ok((sigma * (n * (p - 2.0) + p * r) / denom, n * (r - sigma) / denom))
}

/// Right-hand side of the regularizing estimate with caller-supplied constant `c`.
pub fn regularizing_bound(
    params: &ProblemParams,
    sigma: f64,
    r: f64,
    t: f64,
    g0: f64,
    c: f64,
) -> Result<f64, RegimeError> {
    let (a, b) = regularizing_exponents(params.p, sigma, r, params.dim_n)?;
    Ok(c * g0.powf(a) / t.powf(b))
}

/// Interpolation exponent `ω = (r-σ)(N-p)/(N(r-σ+p-2)+pσ)` used by the regularizing estimate.
pub fn interpolation_omega(p: f64, sigma: f64, r: f64, n: u32) -> f64 {
    let n = n as f64;
    (r - sigma) * (n - p) / (n * (r - sigma + p - 2.0) + p * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Exponents {
    /// Power in the test function `1 - (1+|G_k(u)|)^{-b}`; lies in `(0, 2/N)`.
    pub b: f64,
    /// Gagliardo–Nirenberg exponent `p(N + p/(p-1-b))/N`.
    pub lambda_gn: f64,
    /// Marcinkiewicz exponent of `u`.
    pub marc_u: f64,
    /// Marcinkiewicz exponent of `|∇u|`.
    pub marc_grad: f64,
}

pub fn l1_regime_exponents(p: f64, q: f64, n: u32) -> Result<L1Exponents, RegimeError> {
    let nf = n as f64;
    let in_range = p > 2.0 * nf / (nf + 1.0)
        && p < nf
        && q > q_lower(p, n) + BOUNDARY_TOL
        && q < q_l1_threshold(p, n) - BOUNDARY_TOL;
    if !in_range {
        return Err(RegimeError::NotL1Regime { p, q, n });
    }
    let b = (p - q) * (nf + 1.0) / nf - 1.0;
    let lambda_gn = p * (nf + p / (p - 1.0 - b)) / nf;
    let base = p * (nf + 1.0) - nf;
    Ok(L1Exponents {
        b,
        lambda_gn,
        marc_u: base / nf,
        marc_grad: base / (nf + 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn sigma_examples() {
        assert!(close(sigma_exponent(2.0, 1.5, 3).unwrap(), 3.0));
        for &q in &[1.1, 1.4, 1.9] {
            assert!(close(sigma_exponent(2.0, q, 4).unwrap(), 4.0 * (q - 1.0) / (2.0 - q)));
        }
        for n in 2..7u32 {
            let p = 2.5;
            assert!(close(sigma_exponent(p, q_l1_threshold(p, n), n).unwrap(), 1.0));
            assert!(close(sigma_exponent(p, q_l2_threshold(p, n), n).unwrap(), 2.0));
        }
        assert!(sigma_exponent(2.0, 2.0, 3).is_err());
        assert!(sigma_exponent(2.0, 2.5, 3).is_err());
    }

    #[test]
    fn classify_examples() {
        let opts = ClassifyOptions::default();
        let r = classify(&ProblemParams::model(2.0, 1.2, 3, 1.0).unwrap(), &opts);
        assert_eq!(r.regime, Regime::SuperlinearL1);
        assert!(close(r.q_lower, 1.0));
        assert!(close(r.q_l1_threshold, 1.25));

        let r = classify(&ProblemParams::model(2.0, 1.5, 3, 1.0).unwrap(), &opts);
        assert_eq!(r.regime, Regime::SuperlinearSigma);
        assert!(close(r.sigma, 3.0));
        assert!(close(r.nu, 3.0));
        assert!(close(r.beta, 1.5));

        let r = classify(&ProblemParams::model(2.0, 0.8, 3, 1.0).unwrap(), &opts);
        assert_eq!(r.regime, Regime::Sublinear);

        let r = classify(&ProblemParams::model(2.0, 1.25, 3, 1.0).unwrap(), &opts);
        assert_eq!(r.regime, Regime::CriticalL1);
        assert!(close(r.sigma_effective, 1.1));

        let r = classify(&ProblemParams::model(3.5, 2.0, 3, 1.0).unwrap(), &opts);
        assert_eq!(r.regime, Regime::OutOfRange);
    }

    #[test]
    fn declared_space_too_weak_is_flagged() {
        // σ(1.1, 1.05, 3) = 3·0.95/0.05 = 57 and q > q_lower = 0.55.
        let params = ProblemParams::model(1.1, 1.05, 3, 1.0).unwrap();
        let opts = ClassifyOptions {
            declared_nu: Some(1.0),
            ..Default::default()
        };
        let r = classify(&params, &opts);
        assert!(close(r.sigma, 57.0));
        assert_eq!(r.regime, Regime::NonexistenceRisk);
        let r = classify(&params, &ClassifyOptions::default());
        assert_eq!(r.regime, Regime::SuperlinearSigma);
    }

    #[test]
    fn boundary_lands_on_the_closed_side() {
        // q exactly at q_lower is not superlinear.
        let params = ProblemParams::model(2.0, 1.0, 3, 1.0).unwrap();
        assert_eq!(classify(&params, &ClassifyOptions::default()).regime, Regime::Sublinear);
    }

    #[test]
    fn grid_dimension_mismatch_warns() {
        let params = ProblemParams::model(2.0, 1.5, 3, 1.0).unwrap();
        let opts = ClassifyOptions {
            grid_dim: Some(2),
            ..Default::default()
        };
        assert_eq!(classify(&params, &opts).warnings.len(), 1);
    }

    #[test]
    fn beta_examples() {
        for &p in &[1.5, 2.0, 3.7] {
            assert!(close(beta_exponent(2.0, p), 1.0));
            assert!(beta_exponent(2.5, p) >= 1.0);
        }
        assert!(close(beta_exponent(3.0, 2.0), 1.5));
    }

    #[test]
    fn coercive_exponent_examples() {
        let (h0, h1) = coercive_decay_exponents(2.0, 1.0, NormOrder::Infinity, 3).unwrap();
        assert!(close(h0, 1.0) && close(h1, 1.5));
        let (h0, h1) = coercive_decay_exponents(2.5, 1.5, NormOrder::Finite(1.5), 3).unwrap();
        assert!(close(h0, 1.0) && close(h1, 0.0));
        let (h0, h1) = coercive_decay_exponents(3.0, 2.0, NormOrder::Infinity, 4).unwrap();
        assert!(close(h0, 0.6) && close(h1, 0.4));
        // Finite r approaches the r = ∞ pair.
        let (f0, f1) = coercive_decay_exponents(3.0, 2.0, NormOrder::Finite(1e9), 4).unwrap();
        assert!((f0 - 0.6).abs() < 1e-6 && (f1 - 0.4).abs() < 1e-6);
        assert!(matches!(
            coercive_decay_exponents(1.2, 1.0, NormOrder::Infinity, 3),
            Err(RegimeError::NoRegularization { .. })
        ));
    }

    #[test]
    fn delta_threshold_examples() {
        let mut params = ProblemParams::model(2.0, 1.5, 3, 1.0).unwrap();
        assert!(close(delta_threshold(&params), 1.0 / 64.0));
        assert!(close(coercivity_bracket(&params, 1.0 / 64.0), 0.5));
        let base = delta_threshold(&params);
        params.gamma = 2.0;
        assert!(close(delta_threshold(&params), base * 2f64.powf(-6.0)));
        params.gamma = 1e-12;
        assert!(delta_threshold(&params) > 1e60);
        params.gamma = 0.0;
        assert!(delta_threshold(&params).is_infinite());
    }

    #[test]
    fn lambda_examples() {
        // σ = 2, p = 2 gives β = 1; choose δ so that γ c_S δ^{(p-q)/N} = 1/2.
        let params = ProblemParams::model(2.0, 1.5, 3, 1.0).unwrap();
        assert!(close(lambda_rate(&params, 2.0, 1.0 / 64.0).unwrap(), 1.0));
        assert!(close(lambda_rate(&params, 2.0, 0.0).unwrap(), 2.0));
        let mut scaled = params;
        scaled.omega_measure = 2.0;
        // |Ω|^{-(N(p-2)+pσ)/(Nσ)} = 2^{-4/6}
        assert!(close(lambda_rate(&scaled, 2.0, 0.0).unwrap(), 2.0 * 2f64.powf(-4.0 / 6.0)));
        assert!(matches!(
            lambda_rate(&params, 2.0, 1.0),
            Err(RegimeError::NonPositiveRate { .. })
        ));
    }

    #[test]
    fn prediction_examples() {
        // Pick δ so that λ = 1 exactly: p = 1.8, σ = 3, β = 2.8/1.8.
        let params = ProblemParams::model(1.8, 1.5, 3, 0.0).unwrap();
        let lam0 = lambda_rate(&params, 3.0, 0.0).unwrap();
        let mut unit = params;
        unit.sobolev_const /= lam0;
        let pred = decay_prediction(&unit, 3.0, 0.0, 1.0).unwrap();
        assert!(close(pred.lambda_rate, 1.0));
        assert!(close(pred.extinction_time.unwrap(), 15.0));
        assert!(pred.universal_exponent.is_none());
        assert_eq!(pred.sigma_norm_envelope(15.0 + 1e-9), 0.0);
        assert!(pred.sigma_norm_envelope(15.0) < 1e-50);
        assert!(pred.sigma_norm_envelope(14.9) > 0.0);
        assert_eq!(lambda_rate(&params, 3.0, f64::INFINITY).unwrap(), lam0);

        let params = ProblemParams::model(3.0, 2.5, 3, 0.0).unwrap();
        let pred = decay_prediction(&params, 2.0, 0.0, 1.0).unwrap();
        assert!(close(pred.h0, 2.0 / 3.0) && close(pred.h1, 1.0 / 3.0));
        assert_eq!(pred.universal_exponent, Some(1.0));
        assert!(pred.extinction_time.is_none());

        let params = ProblemParams::model(2.0, 1.5, 3, 0.0).unwrap();
        let pred = decay_prediction(&params, 2.0, 0.0, 1.0).unwrap();
        assert!(pred.exponential_case);
        assert!(pred.universal_exponent.is_none() && pred.extinction_time.is_none());
    }

    #[test]
    fn envelope_late_slope() {
        let params = ProblemParams::model(3.0, 2.5, 3, 0.0).unwrap();
        let pred = decay_prediction(&params, 2.0, 0.0, 1.0).unwrap();
        let (t1, t2) = (1e8, 1e9);
        let slope = (pred.sigma_norm_envelope(t2).ln() - pred.sigma_norm_envelope(t1).ln()) / (t2 / t1).ln();
        assert!((slope + 1.0).abs() < 1e-6);
    }

    #[test]
    fn regularizing_examples() {
        assert!(close(interpolation_omega(2.0, 3.0, 4.0, 3), 1.0 / 9.0));
        let (a, b) = regularizing_exponents(2.0, 3.0, 4.0, 3).unwrap();
        assert!(close(b, 0.5));
        assert!(close(a, 3.0 * 8.0 / 6.0));
        let (a, b) = regularizing_exponents(2.0, 3.0, 3.0 + 1e-9, 3).unwrap();
        assert!(b < 1e-8 && (a - 3.0).abs() < 1e-8);
        assert!(regularizing_exponents(2.0, 3.0, 3.0, 3).is_err());
        let params = ProblemParams::model(2.0, 1.5, 3, 1.0).unwrap();
        let v = regularizing_bound(&params, 3.0, 4.0, 4.0, 1.0, 1.0).unwrap();
        assert!(close(v, 0.5));
    }

    #[test]
    fn l1_examples() {
        let e = l1_regime_exponents(2.0, 1.2, 3).unwrap();
        assert!(close(e.b, 1.0 / 15.0));
        assert!(close(e.marc_u, 5.0 / 3.0));
        assert!(close(e.marc_grad, 1.25));
        assert!(close(e.lambda_gn, 2.0 * (3.0 + 2.0 / (1.0 - 1.0 / 15.0)) / 3.0));
        assert!(l1_regime_exponents(2.0, 1.5, 3).is_err());
        assert!(l1_regime_exponents(2.0, 0.9, 3).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ProblemParams::model(1.0, 0.5, 3, 1.0).is_err());
        assert!(ProblemParams::model(2.0, 2.0, 3, 1.0).is_err());
        assert!(ProblemParams::model(2.0, 1.0, 1, 1.0).is_err());
        assert!(ProblemParams::model(2.0, 1.0, 3, -1.0).is_err());
        let mut p = ProblemParams::model(2.0, 1.0, 3, 1.0).unwrap();
        p.lambda_upper = 0.5;
        assert!(p.validate().is_err());
    }
}
