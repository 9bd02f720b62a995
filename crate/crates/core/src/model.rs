//! The uncertain plant: a scalar output driven by the saturated control,
//! an unknown load `g(t)`, and the output `ℓ = Cη` of linear internal
//! dynamics excited by the windowed control-rate supremum and by the
//! exogenous disturbance `w`.

use std::f64::consts::PI;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_hurwitz, Matrix};

/// Actuator range, load range, gain range and disturbance bounds.
///
/// Construction enforces the control authority margin: the actuator range
/// must strictly contain the load range on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvelopeFields", into = "EnvelopeFields")]
pub struct UncertaintyEnvelope {
    u_min: f64,
    u_max: f64,
    g_min: f64,
    g_max: f64,
    alpha_min: f64,
    alpha_max: f64,
    g_rate_bound: f64,
    w_bound: f64,
    tau: f64,
}

/// Unvalidated field set of [`UncertaintyEnvelope`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeFields {
    pub u_min: f64,
    pub u_max: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub g_rate_bound: f64,
    pub w_bound: f64,
    pub tau: f64,
}

impl TryFrom<EnvelopeFields> for UncertaintyEnvelope {
    type Error = Error;

    fn try_from(f: EnvelopeFields) -> Result<Self> {
        let all = [
            f.u_min,
            f.u_max,
            f.g_min,
            f.g_max,
            f.alpha_min,
            f.alpha_max,
            f.g_rate_bound,
            f.w_bound,
            f.tau,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("envelope values must be finite".into()));
        }
        if f.u_min >= f.u_max {
            return Err(Error::Input(format!("u_min {} must be < u_max {}", f.u_min, f.u_max)));
        }
        if f.g_min >= f.g_max {
            return Err(Error::Input(format!("g_min {} must be < g_max {}", f.g_min, f.g_max)));
        }
        if !(f.alpha_min > 0.0 && f.alpha_min <= f.alpha_max) {
            return Err(Error::Input(format!(
                "need 0 < alpha_min <= alpha_max, got {} and {}",
                f.alpha_min, f.alpha_max
            )));
        }
        if f.g_rate_bound < 0.0 || f.w_bound < 0.0 {
            return Err(Error::Input("g_rate_bound and w_bound must be >= 0".into()));
        }
        if f.tau <= 0.0 {
            return Err(Error::Input(format!("tau must be > 0, got {}", f.tau)));
        }
        if f.u_max - f.g_max <= 0.0 {
            return Err(Error::ControlAuthority(format!(
                "u_max {} must exceed g_max {}",
                f.u_max, f.g_max
            )));
        }
        if f.g_min - f.u_min <= 0.0 {
            return Err(Error::ControlAuthority(format!(
                "u_min {} must be below g_min {}",
                f.u_min, f.g_min
            )));
        }
        Ok(UncertaintyEnvelope {
            u_min: f.u_min,
            u_max: f.u_max,
            g_min: f.g_min,
            g_max: f.g_max,
            alpha_min: f.alpha_min,
            alpha_max: f.alpha_max,
            g_rate_bound: f.g_rate_bound,
            w_bound: f.w_bound,
            tau: f.tau,
        })
    }
}

impl From<UncertaintyEnvelope> for EnvelopeFields {
    fn from(e: UncertaintyEnvelope) -> Self {
        EnvelopeFields {
            u_min: e.u_min,
            u_max: e.u_max,
            g_min: e.g_min,
            g_max: e.g_max,
            alpha_min: e.alpha_min,
            alpha_max: e.alpha_max,
            g_rate_bound: e.g_rate_bound,
            w_bound: e.w_bound,
            tau: e.tau,
        }
    }
}

impl UncertaintyEnvelope {
    pub fn new(fields: EnvelopeFields) -> Result<Self> {
        Self::try_from(fields)
    }

    pub fn u_min(&self) -> f64 {
        self.u_min
    }
    pub fn u_max(&self) -> f64 {
        self.u_max
    }
    pub fn g_min(&self) -> f64 {
        self.g_min
    }
    pub fn g_max(&self) -> f64 {
        self.g_max
    }
    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }
    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }
    pub fn g_rate_bound(&self) -> f64 {
        self.g_rate_bound
    }
    pub fn w_bound(&self) -> f64 {
        self.w_bound
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// ρ⁺ = u_max − g_max
    pub fn rho_plus(&self) -> f64 {
        self.u_max - self.g_max
    }

    /// ρ⁻ = g_min − u_min
    pub fn rho_minus(&self) -> f64 {
        self.g_min - self.u_min
    }

    pub fn rho_min(&self) -> f64 {
        self.rho_plus().min(self.rho_minus())
    }

    pub fn delta_u(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn delta_g(&self) -> f64 {
        self.g_max - self.g_min
    }

    pub fn fields(&self) -> EnvelopeFields {
        (*self).into()
    }
}

/// `η̇ = Aη + B1·s + B2·w`, `ℓ = Cη`, with `s` the scalar windowed control-rate supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DynamicsFields", into = "DynamicsFields")]
pub struct LinearInternalDynamics {
    a: Matrix,
    b1: Matrix,
    b2: Matrix,
    c: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsFields {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B1")]
    pub b1: Matrix,
    #[serde(rename = "B2")]
    pub b2: Matrix,
    #[serde(rename = "C")]
    pub c: Matrix,
}

impl TryFrom<DynamicsFields> for LinearInternalDynamics {
    type Error = Error;

    fn try_from(f: DynamicsFields) -> Result<Self> {
        LinearInternalDynamics::new(f.a, f.b1, f.b2, f.c)
    }
}

impl From<LinearInternalDynamics> for DynamicsFields {
    fn from(d: LinearInternalDynamics) -> Self {
        DynamicsFields {
            a: d.a,
            b1: d.b1,
            b2: d.b2,
            c: d.c,
        }
    }
}

impl LinearInternalDynamics {
    pub fn new(a: Matrix, b1: Matrix, b2: Matrix, c: Matrix) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() {
            return Err(Error::Dimension(format!("A must be square, got {}x{}", n, a.cols())));
        }
        if b1.rows() != n || b1.cols() != 1 {
            return Err(Error::Dimension(format!(
                "B1 must be {n}x1, got {}x{}",
                b1.rows(),
                b1.cols()
            )));
        }
        if b2.rows() != n {
            return Err(Error::Dimension(format!(
                "B2 must have {n} rows, got {}",
                b2.rows()
            )));
        }
        if c.rows() != 1 || c.cols() != n {
            return Err(Error::Dimension(format!(
                "C must be 1x{n}, got {}x{}",
                c.rows(),
                c.cols()
            )));
        }
        check_hurwitz(&a)?;
        Ok(LinearInternalDynamics { a, b1, b2, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b1(&self) -> &Matrix {
        &self.b1
    }
    pub fn b2(&self) -> &Matrix {
        &self.b2
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// State dimension.
    pub fn order(&self) -> usize {
        self.a.rows()
    }

    /// Number of disturbance channels.
    pub fn disturbance_channels(&self) -> usize {
        self.b2.cols()
    }

    /// The row `C·A`, which maps η to the free part of `ℓ̇`.
    pub fn ca(&self) -> Matrix {
        &self.c * &self.a
    }

    /// `C·B1`, the direct feedthrough of `s` into `ℓ̇`.
    pub fn cb1(&self) -> f64 {
        (&self.c * &self.b1).get(0, 0)
    }

    /// Writes `Aη + B1·s + B2·w` into `out`.
    pub(crate) fn rhs_into(&self, eta: &[f64], s: f64, w: &[f64], out: &mut [f64]) {
        let n = self.order();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = self.b1.get(i, 0) * s;
            for (j, e) in eta.iter().enumerate() {
                acc += self.a.get(i, j) * e;
            }
            for (j, wj) in w.iter().enumerate() {
                acc += self.b2.get(i, j) * wj;
            }
            *o = acc;
        }
    }

    pub(crate) fn ell_unchecked(&self, eta: &[f64]) -> f64 {
        eta.iter().enumerate().map(|(j, e)| self.c.get(0, j) * e).sum()
    }
}

/// `ℓ(η) = Cη`.
pub fn ell(d: &LinearInternalDynamics, eta: &[f64]) -> Result<f64> {
    if eta.len() != d.order() {
        return Err(Error::Dimension(format!(
            "eta has length {}, internal dynamics have order {}",
            eta.len(),
            d.order()
        )));
    }
    Ok(d.ell_unchecked(eta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    #[default]
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidTerm {
    pub amplitude: f64,
    /// rad/s
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub wave: Wave,
}

impl SinusoidTerm {
    fn eval(&self, t: f64) -> f64 {
        let arg = self.omega * t + self.phase;
        self.amplitude
            * match self.wave {
                Wave::Sin => arg.sin(),
                Wave::Cos => arg.cos(),
            }
    }
}

/// Time signal used for the load `g`, the disturbances `w` and the setpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Constant {
        value: f64,
    },
    SinusoidSum {
        #[serde(default)]
        offset: f64,
        terms: Vec<SinusoidTerm>,
    },
    /// `(t_i, v_i)` pairs; `v_i` holds on `[t_i, t_{i+1})`, the first value also before `t_0`.
    PiecewiseConstant {
        breakpoints: Vec<(f64, f64)>,
    },
    /// Linear interpolation of recorded samples; no extrapolation.
    Replay {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        samples: Vec<(f64, f64)>,
        /// CSV file with header `t,value`, loaded by [`SignalSpec::resolve_files`].
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
}

impl SignalSpec {
    pub fn constant(value: f64) -> Self {
        SignalSpec::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::Input(format!("non-finite {what} in signal")))
            }
        };
        match self {
            SignalSpec::Constant { value } => finite(*value, "value"),
            SignalSpec::SinusoidSum { offset, terms } => {
                finite(*offset, "offset")?;
                for t in terms {
                    finite(t.amplitude, "amplitude")?;
                    finite(t.omega, "omega")?;
                    finite(t.phase, "phase")?;
                }
                Ok(())
            }
            SignalSpec::PiecewiseConstant { breakpoints } => {
                if breakpoints.is_empty() {
                    return Err(Error::Input("piecewise-constant signal needs a breakpoint".into()));
                }
                check_increasing(breakpoints)
            }
            SignalSpec::Replay { samples, path } => {
                if samples.is_empty() {
                    return Err(Error::Input(match path {
                        Some(p) => format!("replay file {} not loaded", p.display()),
                        None => "replay signal has no samples".into(),
                    }));
                }
                check_increasing(samples)
            }
        }
    }

    /// Loads replay samples from their CSV file; `base` resolves relative paths.
    pub fn resolve_files(&mut self, base: &Path) -> Result<()> {
        if let SignalSpec::Replay { samples, path: Some(p) } = self {
            if samples.is_empty() {
                let full = if p.is_absolute() { p.clone() } else { base.join(&*p) };
                let file = std::fs::File::open(&full)
                    .map_err(|e| Error::Input(format!("cannot open {}: {e}", full.display())))?;
                *samples = read_replay_csv(file)?;
            }
        }
        Ok(())
    }
}

fn check_increasing(points: &[(f64, f64)]) -> Result<()> {
    for (t, v) in points {
        if !t.is_finite() || !v.is_finite() {
            return Err(Error::Input("non-finite sample in signal".into()));
        }
    }
    for w in points.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Input(format!(
                "sample times must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    Ok(())
}

/// Reads a two-column `t,value` CSV with strictly increasing times.
pub fn read_replay_csv<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input(format!("replay csv: {e}")))?
        .clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(Error::Input(format!(
            "replay csv header must be `t,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("replay csv: {e}")))?;
        let parse = |i: usize| {
            rec[i].parse::<f64>().map_err(|e| {
                Error::Input(format!("replay csv row {}: `{}`: {e}", line + 2, &rec[i]))
            })
        };
        out.push((parse(0)?, parse(1)?));
    }
    if out.len() < 2 {
        return Err(Error::Input("replay csv needs at least two samples".into()));
    }
    check_increasing(&out)?;
    Ok(out)
}

/// Evaluates a signal at `t >= 0`.
pub fn eval_signal(s: &SignalSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Input(format!("signal time must be finite and >= 0, got {t}")));
    }
    match s {
        SignalSpec::Constant { value } => Ok(*value),
        SignalSpec::SinusoidSum { offset, terms } => {
            Ok(offset + terms.iter().map(|term| term.eval(t)).sum::<f64>())
        }
        SignalSpec::PiecewiseConstant { breakpoints } => {
            let idx = breakpoints.partition_point(|&(ti, _)| ti <= t);
            Ok(breakpoints[idx.saturating_sub(1)].1)
        }
        SignalSpec::Replay { samples, .. } => {
            let (start, end) = match (samples.first(), samples.last()) {
                (Some(a), Some(b)) => (a.0, b.0),
                _ => return Err(Error::Input("replay signal has no samples".into())),
            };
            if t < start || t > end {
                return Err(Error::Extrapolation { t, start, end });
            }
            let idx = samples.partition_point(|&(ti, _)| ti <= t);
            if idx >= samples.len() {
                return Ok(samples[samples.len() - 1].1);
            }
            let (t0, v0) = samples[idx - 1];
            let (t1, v1) = samples[idx];
            Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
        }
    }
}

/// `Σ|aᵢωᵢ|` for a sinusoid sum, 0 for a constant.
pub fn signal_rate_bound(s: &SignalSpec) -> Result<f64> {
    match s {
        SignalSpec::Constant { .. } => Ok(0.0),
        SignalSpec::SinusoidSum { terms, .. } => {
            Ok(terms.iter().map(|t| (t.amplitude * t.omega).abs()).sum())
        }
        SignalSpec::PiecewiseConstant { .. } | SignalSpec::Replay { .. } => Err(Error::Unsupported(
            "rate bound of piecewise or replayed signals must be declared".into(),
        )),
    }
}

/// Sampling grid used to spot-check signal ranges: `0.01·2π/ω_max` for
/// sinusoid sums, 0.01 s otherwise.
fn check_grid_step(s: &SignalSpec) -> f64 {
    match s {
        SignalSpec::SinusoidSum { terms, .. } => {
            let w = terms.iter().fold(0.0f64, |m, t| m.max(t.omega.abs()));
            if w > 0.0 {
                0.01 * 2.0 * PI / w
            } else {
                0.01
            }
        }
        _ => 0.01,
    }
}

/// Largest and smallest sampled value of `s` on `[0, until]`.
pub fn sampled_range(s: &SignalSpec, until: f64) -> Result<(f64, f64)> {
    s.validate()?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut visit = |v: f64| {
        lo = lo.min(v);
        hi = hi.max(v);
    };
    match s {
        SignalSpec::Constant { value } => visit(*value),
        SignalSpec::PiecewiseConstant { breakpoints } => {
            let upto = breakpoints.partition_point(|&(t, _)| t <= until).max(1);
            breakpoints[..upto].iter().for_each(|&(_, v)| visit(v));
        }
        SignalSpec::Replay { samples, .. } => samples.iter().for_each(|&(_, v)| visit(v)),
        SignalSpec::SinusoidSum { .. } => {
            let dt = check_grid_step(s);
            let n = (until / dt).ceil() as usize;
            for i in 0..=n {
                visit(eval_signal(s, (i as f64 * dt).min(until))?);
            }
        }
    }
    Ok((lo, hi))
}

/// Ground truth used by the simulator. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantTruth {
    alpha_true: f64,
    g: SignalSpec,
    w: Vec<SignalSpec>,
    internal: LinearInternalDynamics,
    eta0: Vec<f64>,
}

impl PlantTruth {
    /// Validates the plant against the declared envelope, spot-checking the
    /// load and disturbance ranges on `[0, check_until]`.
    pub fn new(
        envelope: &UncertaintyEnvelope,
        alpha_true: f64,
        g: SignalSpec,
        w: Vec<SignalSpec>,
        internal: LinearInternalDynamics,
        eta0: Option<Vec<f64>>,
        check_until: f64,
    ) -> Result<Self> {
        if !(alpha_true >= envelope.alpha_min() && alpha_true <= envelope.alpha_max()) {
            return Err(Error::Input(format!(
                "alpha_true {alpha_true} outside [{}, {}]",
                envelope.alpha_min(),
                envelope.alpha_max()
            )));
        }
        let eta0 = eta0.unwrap_or_else(|| vec![0.0; internal.order()]);
        if eta0.len() != internal.order() || eta0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dimension(format!(
                "eta0 must be {} finite values, got {}",
                internal.order(),
                eta0.len()
            )));
        }
        if w.len() != internal.disturbance_channels() {
            return Err(Error::Dimension(format!(
                "B2 has {} columns but {} disturbance signals were given",
                internal.disturbance_channels(),
                w.len()
            )));
        }

        let (g_lo, g_hi) = sampled_range(&g, check_until)?;
        if g_lo < envelope.g_min() || g_hi > envelope.g_max() {
            return Err(Error::Input(format!(
                "g ranges over [{g_lo}, {g_hi}], outside [{}, {}]",
                envelope.g_min(),
                envelope.g_max()
            )));
        }
        if let Ok(rate) = signal_rate_bound(&g) {
            if rate > envelope.g_rate_bound() * (1.0 + 1e-12) {
                return Err(Error::Input(format!(
                    "g has rate bound {rate}, above the declared {}",
                    envelope.g_rate_bound()
                )));
            }
        }
        for (i, wi) in w.iter().enumerate() {
            let (lo, hi) = sampled_range(wi, check_until)?;
            if lo.abs().max(hi.abs()) > envelope.w_bound() * (1.0 + 1e-12) {
                return Err(Error::Input(format!(
                    "disturbance {i} reaches {}, above w_bound {}",
                    lo.abs().max(hi.abs()),
                    envelope.w_bound()
                )));
            }
        }

        Ok(PlantTruth {
            alpha_true,
            g,
            w,
            internal,
            eta0,
        })
    }

    pub fn alpha_true(&self) -> f64 {
        self.alpha_true
    }
    pub fn g(&self) -> &SignalSpec {
        &self.g
    }
    pub fn w(&self) -> &[SignalSpec] {
        &self.w
    }
    pub fn internal(&self) -> &LinearInternalDynamics {
        &self.internal
    }
    pub fn eta0(&self) -> &[f64] {
        &self.eta0
    }

    pub(crate) fn w_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        for (o, s) in out.iter_mut().zip(&self.w) {
            *o = eval_signal(s, t)?;
        }
        Ok(())
    }
}

/// Right-hand side of the plant: `ẏ = α(u − g(t) + Cη)` and
/// `η̇ = Aη + B1·udot_sup + B2·w(t)`.
pub fn plant_rhs(
    p: &PlantTruth,
    _y: f64,
    eta: &[f64],
    u: f64,
    udot_sup: f64,
    t: f64,
) -> Result<(f64, Vec<f64>)> {
    let d = p.internal();
    if eta.len() != d.order() {
        return Err(Error::Dimension(format!(
            "eta has length {}, expected {}",
            eta.len(),
            d.order()
        )));
    }
    if !u.is_finite() || !(udot_sup >= 0.0 && udot_sup.is_finite()) || eta.iter().any(|x| !x.is_finite()) {
        return Err(Error::IntegrationFault {
            t,
            reason: format!("non-finite plant input (u = {u}, udot_sup = {udot_sup})"),
        });
    }
    let g = eval_signal(p.g(), t)?;
    let mut w = vec![0.0; d.disturbance_channels()];
    p.w_into(t, &mut w)?;
    let ydot = p.alpha_true() * (u - g + d.ell_unchecked(eta));
    let mut etadot = vec![0.0; d.order()];
    d.rhs_into(eta, udot_sup, &w, &mut etadot);
    Ok((ydot, etadot))
}
