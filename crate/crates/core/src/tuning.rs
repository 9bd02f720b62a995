//! Feasibility constants and gain bounds.
//!
//! For Hurwitz internal dynamics the envelope constants are worst-case
//! gains of four LTI channels:
//!
//! ```text
//! c0 = ε + w̄ ∫|C e^{As} B2| ds        c1 = sup_t |C ∫₀ᵗ e^{As} B1 ds|
//! d0 = ε + w̄ ∫|CA e^{As} B2| ds       d1 = |C B1| + sup_t |CA ∫₀ᵗ e^{As} B1 ds|
//! ```
//!
//! From these and the uncertainty envelope follow the control-rate bound
//! `δu`, the feasibility function `φ(λ)`, the largest admissible
//! proportional gain `λ*`, the filter-gain bound `λ φ(λ)` and the
//! asymptotic tracking-error bound `(δg + d0 + d1 δu) / (λ λf)`.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::format::sig9;
use crate::model::{LinearInternalDynamics, UncertaintyEnvelope};
use crate::numerics::{l1_impulse_norm_with, step_response_sup_with, QuadSettings};

/// Absolute tolerance of the λ* bisection.
pub const LAMBDA_STAR_TOL: f64 = 1e-10;

/// Grid size of the λ* cross-check scan.
pub const LAMBDA_STAR_SCAN_POINTS: usize = 10_000;

/// Safety factors of the recommended gain picker.
pub const AUTO_LAMBDA_FACTOR: f64 = 0.99;
pub const AUTO_LAMBDA_F_FACTOR: f64 = 0.95;

/// Affine bounds `|ℓ| ≤ c0 + c1 s` and `|ℓ̇| ≤ d0 + d1 s` in the windowed control-rate sup `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    pub c0: f64,
    pub c1: f64,
    pub d0: f64,
    pub d1: f64,
    #[serde(default)]
    pub epsilon: f64,
}

impl EnvelopeConstants {
    pub fn new(c0: f64, c1: f64, d0: f64, d1: f64, epsilon: f64) -> Result<Self> {
        let ec = EnvelopeConstants {
            c0,
            c1,
            d0,
            d1,
            epsilon,
        };
        ec.validate()?;
        Ok(ec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c0", self.c0),
            ("c1", self.c1),
            ("d0", self.d0),
            ("d1", self.d1),
            ("epsilon", self.epsilon),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Input(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Computes all four constants for the linear internal dynamics.
    pub fn compute(
        d: &LinearInternalDynamics,
        w_bound: f64,
        epsilon: f64,
        quad: &QuadSettings,
        exec: Execution,
    ) -> Result<Self> {
        let ((c0, c1), (d0, d1)) = exec::join(
            exec,
            || {
                exec::join(
                    exec,
                    || compute_c0(d, w_bound, epsilon, quad),
                    || compute_c1(d, quad),
                )
            },
            || {
                exec::join(
                    exec,
                    || compute_d0(d, w_bound, epsilon, quad),
                    || compute_d1(d, quad),
                )
            },
        );
        Self::new(c0?, c1?, d0?, d1?, epsilon)
    }

    /// True when every constant is at least the corresponding one of `other`.
    pub fn dominates(&self, other: &EnvelopeConstants) -> bool {
        self.c0 >= other.c0 && self.c1 >= other.c1 && self.d0 >= other.d0 && self.d1 >= other.d1
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} must be finite and >= 0, got {v}")))
    }
}

/// `ε + w̄ · ‖C e^{As} B2‖₁`
pub fn compute_c0(d: &LinearInternalDynamics, w_bound: f64, epsilon: f64, quad: &QuadSettings) -> Result<f64> {
    check_nonneg("w_bound", w_bound)?;
    check_nonneg("epsilon", epsilon)?;
    if w_bound == 0.0 {
        return Ok(epsilon);
    }
    Ok(epsilon + w_bound * l1_impulse_norm_with(d.a(), d.b2(), d.c(), quad)?.value)
}

/// `sup_t |C ∫₀ᵗ e^{As} B1 ds|`
pub fn compute_c1(d: &LinearInternalDynamics, quad: &QuadSettings) -> Result<f64> {
    Ok(step_response_sup_with(d.a(), d.b1(), d.c(), quad)?.value)
}

/// `ε + w̄ · ‖CA e^{As} B2‖₁`
pub fn compute_d0(d: &LinearInternalDynamics, w_bound: f64, epsilon: f64, quad: &QuadSettings) -> Result<f64> {
    check_nonneg("w_bound", w_bound)?;
    check_nonneg("epsilon", epsilon)?;
    if w_bound == 0.0 {
        return Ok(epsilon);
    }
    Ok(epsilon + w_bound * l1_impulse_norm_with(d.a(), d.b2(), &d.ca(), quad)?.value)
}

/// `|C B1| + sup_t |CA ∫₀ᵗ e^{As} B1 ds|`
pub fn compute_d1(d: &LinearInternalDynamics, quad: &QuadSettings) -> Result<f64> {
    Ok(d.cb1().abs() + step_response_sup_with(d.a(), d.b1(), &d.ca(), quad)?.value)
}

/// `β = Δg + max{ρ⁺, ρ⁻}`, the largest possible `|u − g|`.
pub fn compute_beta(e: &UncertaintyEnvelope) -> f64 {
    e.delta_g() + e.rho_plus().max(e.rho_minus())
}

/// `1 / (ᾱ c1)`, infinite when `c1 = 0`.
pub fn lambda_cap(e: &UncertaintyEnvelope, ec: &EnvelopeConstants) -> f64 {
    let k = e.alpha_max() * ec.c1;
    if k > 0.0 {
        1.0 / k
    } else {
        f64::INFINITY
    }
}

/// Certified bound on `|u̇|`:
/// `δu = (λ ᾱ (β + c0) + λf Δu) / (1 − λ ᾱ c1)`, valid for `λ < 1/(ᾱ c1)`.
pub fn compute_delta_u(e: &UncertaintyEnvelope, ec: &EnvelopeConstants, lambda: f64, lambda_f: f64) -> Result<f64> {
    check_nonneg("lambda", lambda)?;
    check_nonneg("lambda_f", lambda_f)?;
    let cap = lambda_cap(e, ec);
    if lambda >= cap {
        return Err(Error::InfeasibleGain(format!(
            "lambda = {lambda} must be below 1/(alpha_max c1) = {cap}"
        )));
    }
    let beta = compute_beta(e);
    let num = lambda * e.alpha_max() * (beta + ec.c0) + lambda_f * e.delta_u();
    Ok(num / (1.0 - lambda * e.alpha_max() * ec.c1))
}

/// Sign-determining bracket of φ: `ρ̲ − c0 − λ (β + c0) c1 ᾱ / (1 − λ ᾱ c1)`.
fn phi_numerator(e: &UncertaintyEnvelope, ec: &EnvelopeConstants, lambda: f64) -> f64 {
    let q = 1.0 - lambda * e.alpha_max() * ec.c1;
    e.rho_min() - ec.c0 - lambda * (compute_beta(e) + ec.c0) * ec.c1 * e.alpha_max() / q
}

/// Feasibility function
///
/// ```text
/// φ(λ) = α̲ [ρ̲ − c0 − λ(β + c0) c1 ᾱ / (1 − λ ᾱ c1)] / [Δu (1 + c1 α̲ / (1 − λ ᾱ c1))]
/// ```
///
/// on `0 < λ < 1/(ᾱ c1)`. Negative values mean no admissible filter gain.
pub fn phi(e: &UncertaintyEnvelope, ec: &EnvelopeConstants, lambda: f64) -> Result<f64> {
    let cap = lambda_cap(e, ec);
    if !(lambda > 0.0 && lambda < cap) {
        return Err(Error::Input(format!("phi is defined on (0, {cap}), got lambda = {lambda}")));
    }
    let q = 1.0 - lambda * e.alpha_max() * ec.c1;
    let prefactor = e.delta_u() * (1.0 + ec.c1 * e.alpha_min() / q);
    Ok(phi_numerator(e, ec, lambda) * e.alpha_min() / prefactor)
}

fn require_margin(e: &UncertaintyEnvelope, ec: &EnvelopeConstants) -> Result<()> {
    if ec.c0 >= e.rho_min() {
        return Err(Error::InfeasibleProblem(format!(
            "c0 = {} is not below min(rho+, rho-) = {}",
            ec.c0,
            e.rho_min()
        )));
    }
    Ok(())
}

/// Supremum of proportional gains on which φ stays nonnegative, capped by `1/(ᾱ c1)`.
///
/// Found by bisection on the sign bracket of φ, which decreases strictly
/// from `ρ̲ − c0 > 0` toward −∞ at the cap.
pub fn lambda_star(e: &UncertaintyEnvelope, ec: &EnvelopeConstants) -> Result<f64> {
    require_margin(e, ec)?;
    let cap = lambda_cap(e, ec);
    if cap.is_infinite() {
        return Ok(cap);
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        if hi - lo <= LAMBDA_STAR_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if phi_numerator(e, ec, mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.min(cap))
}

/// Brackets the first sign change of φ on an `points`-point uniform grid of `(0, cap)`.
///
/// Returns `(last nonnegative, first negative)` grid values, or `(last, cap)`
/// when φ stays nonnegative on the whole grid.
pub fn lambda_star_scan(e: &UncertaintyEnvelope, ec: &EnvelopeConstants, points: usize) -> Result<(f64, f64)> {
    require_margin(e, ec)?;
    let cap = lambda_cap(e, ec);
    if cap.is_infinite() {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let step = cap / (points as f64 + 1.0);
    let mut prev = 0.0;
    for i in 1..=points {
        let lambda = step * i as f64;
        if phi(e, ec, lambda)? < 0.0 {
            return Ok((prev, lambda));
        }
        prev = lambda;
    }
    Ok((prev, cap))
}

/// `λ φ(λ)`, the strict upper bound on λf, for `0 < λ < λ*`.
pub fn lambda_f_bound(e: &UncertaintyEnvelope, ec: &EnvelopeConstants, lambda: f64) -> Result<f64> {
    let star = lambda_star(e, ec)?;
    if !(lambda > 0.0 && lambda < star) {
        return Err(Error::InfeasibleGain(format!(
            "lambda = {lambda} outside (0, lambda* = {star})"
        )));
    }
    Ok(lambda * phi(e, ec, lambda)?)
}

/// `(δg + d0 + d1 δu) / (λ λf)`
pub fn tracking_error_bound(ec: &EnvelopeConstants, delta_g: f64, delta_u: f64, lambda: f64, lambda_f: f64) -> Result<f64> {
    check_nonneg("delta_g", delta_g)?;
    check_nonneg("delta_u", delta_u)?;
    if !(lambda > 0.0 && lambda_f > 0.0) {
        return Err(Error::Input(format!(
            "tracking bound needs lambda, lambda_f > 0, got {lambda}, {lambda_f}"
        )));
    }
    Ok((delta_g + ec.d0 + ec.d1 * delta_u) / (lambda * lambda_f))
}

/// `|C1 A0⁻¹ C2|` for `A0 = [[−αλ, α], [−λf λ, 0]]`, `C1 = (1, 0)`, `C2 = (0, 1)ᵀ`.
pub fn a0_dc_gain(lambda: f64, lambda_f: f64, alpha: f64) -> Result<f64> {
    let a0 = Matrix2::new(-alpha * lambda, alpha, -lambda_f * lambda, 0.0);
    if !(lambda > 0.0 && lambda_f > 0.0 && alpha > 0.0) {
        return Err(Error::Input(format!(
            "A0 needs positive lambda, lambda_f, alpha; got {lambda}, {lambda_f}, {alpha}"
        )));
    }
    let inv = a0
        .try_inverse()
        .ok_or_else(|| Error::Input("A0 is singular".into()))?;
    Ok(inv[(0, 1)].abs())
}

/// `λ = 0.99 λ*`, `λf = 0.95 λ φ(λ)`.
pub fn recommended_gains(e: &UncertaintyEnvelope, ec: &EnvelopeConstants) -> Result<(f64, f64)> {
    let star = lambda_star(e, ec)?;
    if star.is_infinite() {
        return Err(Error::Unsupported(
            "lambda* is unbounded (c1 = 0); choose lambda explicitly".into(),
        ));
    }
    let lambda = AUTO_LAMBDA_FACTOR * star;
    let lambda_f = AUTO_LAMBDA_F_FACTOR * lambda_f_bound(e, ec, lambda)?;
    Ok((lambda, lambda_f))
}

/// Named conditions under which the region and tracking guarantees hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityFlags {
    /// Actuator range strictly contains the load range (checked when the envelope is built).
    pub assumption_1: bool,
    /// Declared envelope constants are at least the computed ones.
    pub envelope_valid: bool,
    /// `c0 < min(ρ⁺, ρ⁻)`
    pub c0_below_rho_min: bool,
    /// `0 < λ < λ*`
    pub lambda_below_star: bool,
    /// `λf < λ φ(λ)`
    pub lambda_f_below_bound: bool,
}

impl FeasibilityFlags {
    pub fn all(&self) -> bool {
        self.failed().is_empty()
    }

    pub fn failed(&self) -> Vec<&'static str> {
        [
            ("assumption_1", self.assumption_1),
            ("envelope_valid", self.envelope_valid),
            ("c0_below_rho_min", self.c0_below_rho_min),
            ("lambda_below_star", self.lambda_below_star),
            ("lambda_f_below_bound", self.lambda_f_below_bound),
        ]
        .into_iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name)
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    /// Constants the verdicts are based on (declared, or computed when none were declared).
    pub envelope: EnvelopeConstants,
    /// Constants computed from the internal dynamics, when available.
    pub computed: Option<EnvelopeConstants>,
    pub beta: f64,
    pub rho_min: f64,
    pub lambda_cap: f64,
    pub lambda_star: Option<f64>,
    pub lambda_star_scan: Option<(f64, f64)>,
    pub lambda: f64,
    pub lambda_f: f64,
    pub phi: Option<f64>,
    pub lambda_f_bound: Option<f64>,
    pub delta_u: Option<f64>,
    pub delta_g: f64,
    pub error_bound: Option<f64>,
    pub flags: FeasibilityFlags,
}

impl TuningReport {
    pub fn feasible(&self) -> bool {
        self.flags.all()
    }

    /// Flat `key = value` listing, values with 9 significant digits.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), sig9);
        let mut kv: Vec<(String, String)> = vec![
            ("c0".into(), sig9(self.envelope.c0)),
            ("c1".into(), sig9(self.envelope.c1)),
            ("d0".into(), sig9(self.envelope.d0)),
            ("d1".into(), sig9(self.envelope.d1)),
            ("epsilon".into(), sig9(self.envelope.epsilon)),
        ];
        if let Some(c) = &self.computed {
            kv.extend([
                ("computed_c0".into(), sig9(c.c0)),
                ("computed_c1".into(), sig9(c.c1)),
                ("computed_d0".into(), sig9(c.d0)),
                ("computed_d1".into(), sig9(c.d1)),
            ]);
        }
        kv.extend([
            ("beta".into(), sig9(self.beta)),
            ("rho_min".into(), sig9(self.rho_min)),
            ("lambda_cap".into(), sig9(self.lambda_cap)),
            ("lambda_star".into(), opt(self.lambda_star)),
            (
                "lambda_star_scan".into(),
                self.lambda_star_scan
                    .map_or_else(|| "none".into(), |(a, b)| format!("[{}, {}]", sig9(a), sig9(b))),
            ),
            ("lambda".into(), sig9(self.lambda)),
            ("lambda_f".into(), sig9(self.lambda_f)),
            ("phi".into(), opt(self.phi)),
            ("lambda_f_bound".into(), opt(self.lambda_f_bound)),
            ("delta_u".into(), opt(self.delta_u)),
            ("delta_g".into(), sig9(self.delta_g)),
            ("error_bound".into(), opt(self.error_bound)),
            ("assumption_1".into(), self.flags.assumption_1.to_string()),
            ("envelope_valid".into(), self.flags.envelope_valid.to_string()),
            ("c0_below_rho_min".into(), self.flags.c0_below_rho_min.to_string()),
            ("lambda_below_star".into(), self.flags.lambda_below_star.to_string()),
            ("lambda_f_below_bound".into(), self.flags.lambda_f_below_bound.to_string()),
            ("feasible".into(), self.feasible().to_string()),
        ]);
        kv
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_key_values() {
            s.push_str(&k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }
}

/// Evaluates every condition for the gains `(λ, λf)` against given constants.
///
/// `computed` are the constants of the actual internal dynamics; when
/// present, `constants` must dominate them for the envelope to be valid.
pub fn assess(
    e: &UncertaintyEnvelope,
    constants: EnvelopeConstants,
    computed: Option<EnvelopeConstants>,
    lambda: f64,
    lambda_f: f64,
) -> TuningReport {
    let cap = lambda_cap(e, &constants);
    let star = lambda_star(e, &constants).ok();
    let scan = lambda_star_scan(e, &constants, LAMBDA_STAR_SCAN_POINTS).ok();
    let phi_val = phi(e, &constants, lambda).ok();
    let lf_bound = phi_val.map(|p| lambda * p);
    let delta_u = compute_delta_u(e, &constants, lambda, lambda_f).ok();

    let flags = FeasibilityFlags {
        assumption_1: e.rho_plus() > 0.0 && e.rho_minus() > 0.0,
        envelope_valid: computed.is_none_or(|c| constants.dominates(&c)),
        c0_below_rho_min: constants.c0 < e.rho_min(),
        lambda_below_star: star.is_some_and(|s| lambda > 0.0 && lambda < s),
        lambda_f_below_bound: lf_bound.is_some_and(|b| lambda_f > 0.0 && lambda_f < b),
    };
    let error_bound = match (flags.all(), delta_u) {
        (true, Some(du)) => tracking_error_bound(&constants, e.g_rate_bound(), du, lambda, lambda_f).ok(),
        _ => None,
    };

    TuningReport {
        envelope: constants,
        computed,
        beta: compute_beta(e),
        rho_min: e.rho_min(),
        lambda_cap: cap,
        lambda_star: star,
        lambda_star_scan: scan,
        lambda,
        lambda_f,
        phi: phi_val,
        lambda_f_bound: lf_bound,
        delta_u,
        delta_g: e.g_rate_bound(),
        error_bound,
        flags,
    }
}

/// Computes the constants of `d` and assesses `(λ, λf)`.
///
/// With `declared` constants the verdicts use them and the computed ones
/// only serve to check that the declared envelope is valid.
#[allow(clippy::too_many_arguments)]
pub fn feasibility_report(
    e: &UncertaintyEnvelope,
    d: &LinearInternalDynamics,
    epsilon: f64,
    declared: Option<EnvelopeConstants>,
    quad: &QuadSettings,
    lambda: f64,
    lambda_f: f64,
    exec: Execution,
) -> Result<TuningReport> {
    let computed = EnvelopeConstants::compute(d, e.w_bound(), epsilon, quad, exec)?;
    Ok(match declared {
        Some(dc) => assess(e, dc, Some(computed), lambda, lambda_f),
        None => assess(e, computed, None, lambda, lambda_f),
    })
}

/// One row of a λ sweep, at `λf = 0.95 λ φ(λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub phi: f64,
    pub lambda_f_bound: f64,
    pub delta_u: f64,
    pub error_bound: f64,
    pub feasible: bool,
}

pub const SWEEP_COLUMNS: [&str; 6] = ["lambda", "phi", "lambda_f_bound", "delta_u", "error_bound", "feasible"];

impl SweepRow {
    pub fn to_record(&self) -> [String; 6] {
        [
            sig9(self.lambda),
            sig9(self.phi),
            sig9(self.lambda_f_bound),
            sig9(self.delta_u),
            sig9(self.error_bound),
            self.feasible.to_string(),
        ]
    }
}

pub fn sweep_point(e: &UncertaintyEnvelope, ec: &EnvelopeConstants, lambda: f64) -> Result<SweepRow> {
    sweep_point_at(e, ec, lambda, lambda_star(e, ec).unwrap_or(0.0))
}

fn sweep_point_at(e: &UncertaintyEnvelope, ec: &EnvelopeConstants, lambda: f64, star: f64) -> Result<SweepRow> {
    let p = phi(e, ec, lambda)?;
    let bound = lambda * p;
    let feasible = p > 0.0 && lambda < star;
    let lambda_f = AUTO_LAMBDA_F_FACTOR * bound.max(0.0);
    let delta_u = compute_delta_u(e, ec, lambda, lambda_f)?;
    let error_bound = if feasible {
        tracking_error_bound(ec, e.g_rate_bound(), delta_u, lambda, lambda_f)?
    } else {
        f64::INFINITY
    };
    Ok(SweepRow {
        lambda,
        phi: p,
        lambda_f_bound: bound,
        delta_u,
        error_bound,
        feasible,
    })
}

/// Evaluates [`sweep_point`] over a grid of λ values.
pub fn sweep(e: &UncertaintyEnvelope, ec: &EnvelopeConstants, lambdas: &[f64], exec: Execution) -> Result<Vec<SweepRow>> {
    let star = lambda_star(e, ec).unwrap_or(0.0);
    exec::map(exec, lambdas, |&l| sweep_point_at(e, ec, l, star)).into_iter().collect()
}

/// `points` values evenly spaced on `[min, max]`.
pub fn lambda_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(min > 0.0) || !(max >= min) || !max.is_finite() {
        return Err(Error::Input(format!(
            "lambda grid needs 0 < min <= max and points >= 1, got [{min}, {max}] x {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let step = (max - min) / (points - 1) as f64;
    Ok((0..points).map(|i| min + step * i as f64).collect())
}
