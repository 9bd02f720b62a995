//! Worst-case gains of stable LTI channels computed by quadrature of the
//! impulse response `k(s) = C e^{As} B`.
//!
//! Samples of `k` are produced by propagating `B` through the one-step
//! transition matrix `e^{Ah}`, so a horizon of `N` steps costs one matrix
//! exponential plus `N` matrix-vector products.

use super::expm::mat_exp;
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Eigenvalues must have real part below `-HURWITZ_MARGIN`.
pub const HURWITZ_MARGIN: f64 = 1e-9;

/// Relative size of the impulse-response tail above which the horizon is reported as too short.
pub const TAIL_TOLERANCE: f64 = 1e-8;

/// Default quadrature step in seconds.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Default horizon in multiples of the slowest time constant.
pub const HORIZON_TIME_CONSTANTS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadRule {
    #[default]
    Simpson,
    Trapezoid,
}

/// Horizon, step and rule for the quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    /// `None` picks [`default_horizon`] from the eigenvalues of `A`.
    pub horizon: Option<f64>,
    pub step: f64,
    pub rule: QuadRule,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            horizon: None,
            step: DEFAULT_STEP,
            rule: QuadRule::Simpson,
        }
    }
}

impl QuadSettings {
    pub fn with_step(step: f64) -> Self {
        QuadSettings {
            step,
            ..Default::default()
        }
    }

    /// Same horizon, trapezoid rule at half the step.
    pub fn dual(&self) -> Self {
        QuadSettings {
            horizon: self.horizon,
            step: self.step / 2.0,
            rule: QuadRule::Trapezoid,
        }
    }
}

/// A quadrature result together with the relative size of the truncated tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadValue {
    pub value: f64,
    /// `|k(horizon)|` relative to `value` (0 when the value is 0).
    pub tail_ratio: f64,
    pub horizon: f64,
}

impl QuadValue {
    pub fn horizon_warning(&self) -> bool {
        self.tail_ratio > TAIL_TOLERANCE
    }

    fn new(value: f64, tail: f64, horizon: f64) -> Self {
        let tail_ratio = if value > 0.0 { tail / value } else { 0.0 };
        let q = QuadValue {
            value,
            tail_ratio,
            horizon,
        };
        if q.horizon_warning() {
            log::warn!(
                "quadrature horizon {horizon} s too short: tail ratio {tail_ratio:.3e} exceeds {TAIL_TOLERANCE:e}"
            );
        }
        q
    }
}

pub fn check_hurwitz(a: &Matrix) -> Result<()> {
    let max_real_part = a.spectral_abscissa()?;
    if max_real_part < -HURWITZ_MARGIN {
        Ok(())
    } else {
        Err(Error::NotHurwitz { max_real_part })
    }
}

/// `HORIZON_TIME_CONSTANTS` times the slowest time constant of a Hurwitz `A`.
pub fn default_horizon(a: &Matrix) -> Result<f64> {
    check_hurwitz(a)?;
    Ok(HORIZON_TIME_CONSTANTS / a.slowest_decay_rate()?)
}

fn check_shapes(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "A must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    if b.rows() != n || c.cols() != n || c.rows() != 1 {
        return Err(Error::Dimension(format!(
            "need A {n}x{n}, B {n}xm, C 1x{n}; got B {}x{}, C {}x{}",
            b.rows(),
            b.cols(),
            c.rows(),
            c.cols()
        )));
    }
    Ok(())
}

fn check_grid(horizon: f64, step: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) || !(step > 0.0 && step.is_finite()) {
        return Err(Error::Input(format!(
            "horizon and step must be positive, got horizon = {horizon}, step = {step}"
        )));
    }
    Ok(())
}

/// Streams `k_j(i h) = C e^{A i h} B[:, j]` for `i = 0..=steps`.
struct ImpulseStream {
    phi: Matrix,
    c: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl ImpulseStream {
    fn new(a: &Matrix, b: &Matrix, c: &Matrix, step: f64) -> Result<Self> {
        Ok(ImpulseStream {
            phi: mat_exp(a, step)?,
            c: (0..c.cols()).map(|j| c.get(0, j)).collect(),
            states: (0..b.cols()).map(|j| b.column_vec(j)).collect(),
        })
    }

    /// Current samples, one per input column, then advance one step.
    fn next_into(&mut self, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.states.iter_mut()) {
            *o = self.c.iter().zip(x.iter()).map(|(ci, xi)| ci * xi).sum();
            *x = self.phi.apply_unchecked(x);
        }
    }
}

fn resolve_horizon(a: &Matrix, horizon: Option<f64>) -> Result<f64> {
    match horizon {
        Some(h) => Ok(h),
        None => default_horizon(a),
    }
}

fn intervals(horizon: f64, step: f64, rule: QuadRule) -> usize {
    let n = (horizon / step).ceil().max(1.0) as usize;
    match rule {
        QuadRule::Simpson => n + (n % 2),
        QuadRule::Trapezoid => n,
    }
}

/// `∫₀^T Σ_j |C e^{As} B[:, j]| ds` by composite Simpson.
///
/// For a single input column this is the L1 norm of the impulse response,
/// i.e. the supremum of `|C ∫ e^{A(t-σ)} B w(σ) dσ|` over all `|w| ≤ 1`.
/// With several columns each channel is bounded independently.
pub fn l1_impulse_norm(a: &Matrix, b: &Matrix, c: &Matrix, horizon: f64, step: f64) -> Result<QuadValue> {
    l1_impulse_norm_with(
        a,
        b,
        c,
        &QuadSettings {
            horizon: Some(horizon),
            step,
            rule: QuadRule::Simpson,
        },
    )
}

pub fn l1_impulse_norm_with(a: &Matrix, b: &Matrix, c: &Matrix, q: &QuadSettings) -> Result<QuadValue> {
    check_shapes(a, b, c)?;
    check_hurwitz(a)?;
    let horizon = resolve_horizon(a, q.horizon)?;
    check_grid(horizon, q.step)?;

    let n = intervals(horizon, q.step, q.rule);
    let mut stream = ImpulseStream::new(a, b, c, q.step)?;
    let mut k = vec![0.0; b.cols()];
    let mut sum = 0.0;
    let mut last = 0.0;
    for i in 0..=n {
        stream.next_into(&mut k);
        let f: f64 = k.iter().map(|x| x.abs()).sum();
        let w = match q.rule {
            QuadRule::Simpson if i == 0 || i == n => 1.0,
            QuadRule::Simpson if i % 2 == 1 => 4.0,
            QuadRule::Simpson => 2.0,
            QuadRule::Trapezoid if i == 0 || i == n => 0.5,
            QuadRule::Trapezoid => 1.0,
        };
        sum += w * f;
        last = f;
    }
    let value = match q.rule {
        QuadRule::Simpson => sum * q.step / 3.0,
        QuadRule::Trapezoid => sum * q.step,
    };
    Ok(QuadValue::new(value, last, n as f64 * q.step))
}

/// `max_t |C ∫₀^t e^{As} B ds|` over the sampled grid, for a single input column.
///
/// The inner integral is accumulated by Simpson panels (sampled every
/// `2h`) or by the trapezoid rule (sampled every `h`).
pub fn step_response_sup(a: &Matrix, b: &Matrix, c: &Matrix, horizon: f64, step: f64) -> Result<QuadValue> {
    step_response_sup_with(
        a,
        b,
        c,
        &QuadSettings {
            horizon: Some(horizon),
            step,
            rule: QuadRule::Simpson,
        },
    )
}

pub fn step_response_sup_with(a: &Matrix, b: &Matrix, c: &Matrix, q: &QuadSettings) -> Result<QuadValue> {
    check_shapes(a, b, c)?;
    if b.cols() != 1 {
        return Err(Error::Dimension(format!(
            "step response needs a single input column, got {}",
            b.cols()
        )));
    }
    check_hurwitz(a)?;
    let horizon = resolve_horizon(a, q.horizon)?;
    check_grid(horizon, q.step)?;

    let n = intervals(horizon, q.step, q.rule);
    let mut stream = ImpulseStream::new(a, b, c, q.step)?;
    let mut k = [0.0];
    let mut next = || {
        stream.next_into(&mut k);
        k[0]
    };

    let mut integral = 0.0f64;
    let mut sup = 0.0f64;
    let mut f_prev = next();
    let mut last = f_prev;
    match q.rule {
        QuadRule::Simpson => {
            for _ in 0..n / 2 {
                let f_mid = next();
                let f_end = next();
                integral += q.step / 3.0 * (f_prev + 4.0 * f_mid + f_end);
                sup = sup.max(integral.abs());
                f_prev = f_end;
                last = f_end;
            }
        }
        QuadRule::Trapezoid => {
            for _ in 0..n {
                let f = next();
                integral += 0.5 * q.step * (f_prev + f);
                sup = sup.max(integral.abs());
                f_prev = f;
                last = f;
            }
        }
    }
    Ok(QuadValue::new(sup, last.abs(), n as f64 * q.step))
}
