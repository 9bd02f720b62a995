//! Closed-loop simulation and the trajectory-level checks.
//!
//! The joint state `(y, z, η)` is integrated with fixed-step RK4; the
//! control is re-evaluated at every stage. After each accepted step the
//! control rate is estimated by a backward difference of consecutive
//! accepted controls and pushed into the τ-window. The window supremum that
//! drives `η̇` during a step is the one available at the start of that step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controller::{classify_region, control_output, filter_rhs, ControllerGains, ControllerState, Region};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::format::sig9;
use crate::model::{eval_signal, PlantTruth};
use crate::numerics::{Rk4, SlidingWindowMax};
use crate::tuning::EnvelopeConstants;

/// Piecewise-constant setpoint `(t_i, y_i)` with optional linear transitions.
///
/// `y_i` holds from `t_i` on (the first value also before `t_0`). With
/// `ramp > 0` each change is spread linearly over `[t_i, t_i + ramp]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointSchedule {
    segments: Vec<(f64, f64)>,
    #[serde(default)]
    ramp: f64,
}

impl SetpointSchedule {
    pub fn new(segments: Vec<(f64, f64)>, ramp: f64) -> Result<Self> {
        let s = SetpointSchedule { segments, ramp };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(y_d: f64) -> Self {
        SetpointSchedule {
            segments: vec![(0.0, y_d)],
            ramp: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("setpoint schedule needs at least one segment".into()));
        }
        if !(self.ramp >= 0.0 && self.ramp.is_finite()) {
            return Err(Error::Config(format!("setpoint ramp must be >= 0, got {}", self.ramp)));
        }
        if self.segments.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Config("setpoint values must be finite".into()));
        }
        for w in self.segments.windows(2) {
            if w[1].0 < w[0].0 + self.ramp || w[1].0 <= w[0].0 {
                return Err(Error::Config(format!(
                    "setpoint segments must start at increasing times at least `ramp` apart ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn ramp(&self) -> f64 {
        self.ramp
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|&(ti, _)| ti <= t);
        if idx == 0 {
            return self.segments[0].1;
        }
        let (ti, vi) = self.segments[idx - 1];
        if idx >= 2 && self.ramp > 0.0 && t < ti + self.ramp {
            let prev = self.segments[idx - 2].1;
            prev + (vi - prev) * (t - ti) / self.ramp
        } else {
            vi
        }
    }

    /// Time from which the setpoint no longer changes.
    pub fn settled_from(&self) -> f64 {
        let (t_last, _) = self.segments[self.segments.len() - 1];
        if self.segments.len() > 1 {
            t_last + self.ramp
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_end: f64,
    pub step: f64,
    pub record_every: usize,
    pub y0: f64,
    /// Defaults to the midpoint of the actuator range.
    pub z0: Option<f64>,
    /// Defaults to the plant's initial internal state.
    pub eta0: Option<Vec<f64>>,
    pub setpoint: SetpointSchedule,
}

impl SimConfig {
    pub fn validate(&self, tau: f64) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("step must be > 0, got {}", self.step)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        if self.step > tau / 10.0 {
            return Err(Error::Config(format!(
                "step {} too coarse for the control-rate window: need step <= tau/10 = {}",
                self.step,
                tau / 10.0
            )));
        }
        if !self.y0.is_finite() || self.z0.is_some_and(|z| !z.is_finite()) {
            return Err(Error::Config("initial y0/z0 must be finite".into()));
        }
        self.setpoint.validate()
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.step).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub u: f64,
    pub udot_estimate: f64,
    pub udot_window_sup: f64,
    pub eta: Vec<f64>,
    pub ell: f64,
    pub g: f64,
    pub w: Vec<f64>,
    pub region: Region,
    pub y_d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// Integration step.
    pub step: f64,
    pub record_every: usize,
    /// Number of integration steps taken.
    pub steps: usize,
}

impl Trajectory {
    pub fn header(&self) -> Vec<String> {
        let n = self.rows.first().map_or(0, |r| r.eta.len());
        let m = self.rows.first().map_or(0, |r| r.w.len());
        let mut h: Vec<String> = ["t", "y", "z", "u", "udot_estimate", "udot_window_sup"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((1..=n).map(|i| format!("eta{i}")));
        h.push("ell".into());
        h.push("g".into());
        if m == 1 {
            h.push("w".into());
        } else {
            h.extend((1..=m).map(|i| format!("w{i}")));
        }
        h.push("region".into());
        h.push("y_d".into());
        h
    }

    /// CSV with a header row and 9 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Input(format!("writing trajectory: {e}"));
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(self.header()).map_err(io)?;
        let mut rec: Vec<String> = Vec::new();
        for r in &self.rows {
            rec.clear();
            rec.extend([r.t, r.y, r.z, r.u, r.udot_estimate, r.udot_window_sup].map(sig9));
            rec.extend(r.eta.iter().map(|&x| sig9(x)));
            rec.push(sig9(r.ell));
            rec.push(sig9(r.g));
            rec.extend(r.w.iter().map(|&x| sig9(x)));
            rec.push(r.region.to_string());
            rec.push(sig9(r.y_d));
            wtr.write_record(&rec).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Input(format!("writing trajectory: {e}")))?;
        Ok(())
    }

    pub fn sup_abs_ell(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.ell.abs()))
    }

    pub fn final_row(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectories have at least one row")
    }
}

/// Integrates the closed loop of `p` under the saturated feedback `gains`.
///
/// The setpoint of `gains` is ignored in favor of `cfg.setpoint`.
pub fn simulate(p: &PlantTruth, gains: &ControllerGains, cfg: &SimConfig, tau: f64) -> Result<Trajectory> {
    cfg.validate(tau)?;
    let d = p.internal();
    let n = d.order();
    let m = d.disturbance_channels();
    let eta0 = cfg.eta0.clone().unwrap_or_else(|| p.eta0().to_vec());
    if eta0.len() != n {
        return Err(Error::Dimension(format!("eta0 has length {}, expected {n}", eta0.len())));
    }

    let h = cfg.step;
    let steps = cfg.steps();
    let alpha = p.alpha_true();
    let gains_at = |t: f64| gains.with_setpoint(cfg.setpoint.eval(t));

    let mut x = Vec::with_capacity(2 + n);
    x.push(cfg.y0);
    x.push(cfg.z0.unwrap_or_else(|| gains.midpoint()));
    x.extend_from_slice(&eta0);

    let mut window = SlidingWindowMax::new(tau)?;
    let mut rk = Rk4::new(x.len());
    let mut w_buf = vec![0.0; m];
    let mut rows = Vec::with_capacity(steps / cfg.record_every + 2);

    let control = |t: f64, x: &[f64]| control_output(&gains_at(t), x[0], &ControllerState { z: x[1] });

    let mut u_prev = control(0.0, &x);
    let mut udot = 0.0;
    window.push(0.0, 0.0)?;
    let mut s = window.max(0.0)?;

    let record = |t: f64, x: &[f64], u: f64, udot: f64, s: f64, w_buf: &mut [f64]| -> Result<TrajectoryRow> {
        p.w_into(t, w_buf)?;
        let gt = gains_at(t);
        Ok(TrajectoryRow {
            t,
            y: x[0],
            z: x[1],
            u,
            udot_estimate: udot,
            udot_window_sup: s,
            eta: x[2..].to_vec(),
            ell: d.ell_unchecked(&x[2..]),
            g: eval_signal(p.g(), t)?,
            w: w_buf.to_vec(),
            region: classify_region(&gt, x[0], x[1]),
            y_d: gt.y_d(),
        })
    };
    rows.push(record(0.0, &x, u_prev, udot, s, &mut w_buf)?);

    for k in 0..steps {
        let t = k as f64 * h;
        let s_lagged = s;
        let mut w_stage = vec![0.0; m];
        rk.step(
            |ts, xs, dx| {
                let gt = gains_at(ts);
                let state = ControllerState { z: xs[1] };
                let u = control_output(&gt, xs[0], &state);
                let eta = &xs[2..];
                p.w_into(ts, &mut w_stage)?;
                dx[0] = alpha * (u - eval_signal(p.g(), ts)? + d.ell_unchecked(eta));
                dx[1] = filter_rhs(&gt, u, &state);
                d.rhs_into(eta, s_lagged, &w_stage, &mut dx[2..]);
                Ok(())
            },
            &mut x,
            t,
            h,
        )
        .map_err(|e| match e {
            Error::IntegrationFault { reason, .. } => Error::IntegrationFault { t, reason },
            other => other,
        })?;
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::IntegrationFault {
                t,
                reason: format!("state became non-finite ({bad})"),
            });
        }

        let t1 = (k + 1) as f64 * h;
        let u = control(t1, &x);
        udot = (u - u_prev) / h;
        u_prev = u;
        window.push(t1, udot.abs())?;
        s = window.max(t1)?;

        if (k + 1) % cfg.record_every == 0 {
            rows.push(record(t1, &x, u, udot, s, &mut w_buf)?);
        }
    }

    Ok(Trajectory {
        rows,
        step: h,
        record_every: cfg.record_every,
        steps,
    })
}

/// Runs independent simulations, in parallel when allowed.
pub fn simulate_batch(
    jobs: &[(&PlantTruth, ControllerGains, &SimConfig, f64)],
    exec: Execution,
) -> Vec<Result<Trajectory>> {
    exec::map(exec, jobs, |(p, g, cfg, tau)| simulate(p, g, cfg, *tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionConvergence {
    /// First recorded time in the unsaturated region.
    pub entry_time: Option<f64>,
    /// True iff the region is unsaturated at every record from entry on.
    pub invariant_after_entry: bool,
    /// First recorded time outside the region after entry.
    pub first_exit: Option<f64>,
}

pub fn verify_region_convergence(tr: &Trajectory) -> RegionConvergence {
    let entry = tr.rows.iter().position(|r| r.region == Region::AZero);
    match entry {
        None => RegionConvergence {
            entry_time: None,
            invariant_after_entry: false,
            first_exit: None,
        },
        Some(i) => {
            let exit = tr.rows[i..].iter().find(|r| r.region != Region::AZero).map(|r| r.t);
            RegionConvergence {
                entry_time: Some(tr.rows[i].t),
                invariant_after_entry: exit.is_none(),
                first_exit: exit,
            }
        }
    }
}

/// Default absolute slack of the envelope check.
pub const ENVELOPE_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    /// `max_t |ℓ| − (c0 + c1 s)`
    pub ell_margin: f64,
    pub ell_worst_t: f64,
    /// `max_t |ℓ̇| − (d0 + d1 s)`, `ℓ̇` by central differences
    pub ell_dot_margin: f64,
    pub ell_dot_worst_t: f64,
    pub violations: usize,
    pub slack: f64,
}

impl EnvelopeCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `|ℓ| ≤ c0 + c1 s` and `|ℓ̇| ≤ d0 + d1 s` at every recorded row.
///
/// `s` is the largest recorded window supremum over the trailing `lookback`
/// seconds (0 uses the row's own value). For the derivative the neighboring
/// rows are included, since the central difference averages `ℓ̇` over them.
pub fn verify_envelope(tr: &Trajectory, ec: &EnvelopeConstants, lookback: f64, slack: f64) -> EnvelopeCheck {
    let rows = &tr.rows;
    let mut check = EnvelopeCheck {
        ell_margin: f64::NEG_INFINITY,
        ell_worst_t: 0.0,
        ell_dot_margin: f64::NEG_INFINITY,
        ell_dot_worst_t: 0.0,
        violations: 0,
        slack,
    };

    // trailing max of the window sup over `lookback` seconds (monotone deque over rows)
    let mut trailing = Vec::with_capacity(rows.len());
    let mut dq: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for (i, r) in rows.iter().enumerate() {
        while dq.back().is_some_and(|&j| rows[j].udot_window_sup <= r.udot_window_sup) {
            dq.pop_back();
        }
        dq.push_back(i);
        while dq.front().is_some_and(|&j| rows[j].t < r.t - lookback) {
            dq.pop_front();
        }
        trailing.push(rows[dq[0]].udot_window_sup);
    }

    for (i, r) in rows.iter().enumerate() {
        let m = r.ell.abs() - (ec.c0 + ec.c1 * trailing[i]);
        if m > check.ell_margin {
            check.ell_margin = m;
            check.ell_worst_t = r.t;
        }
        if m > slack {
            check.violations += 1;
        }
        if i == 0 || i + 1 == rows.len() {
            continue;
        }
        let (prev, next) = (&rows[i - 1], &rows[i + 1]);
        let ell_dot = (next.ell - prev.ell) / (next.t - prev.t);
        let s = trailing[i - 1].max(trailing[i]).max(trailing[i + 1]);
        let md = ell_dot.abs() - (ec.d0 + ec.d1 * s);
        if md > check.ell_dot_margin {
            check.ell_dot_margin = md;
            check.ell_dot_worst_t = r.t;
        }
        if md > slack {
            check.violations += 1;
        }
    }
    check
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UdotCheck {
    pub observed_sup: f64,
    pub delta_u: f64,
    /// `observed_sup / delta_u`
    pub ratio: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Compares the largest estimated control rate with the certified bound `δu`.
///
/// Each backward difference is the mean of `u̇` over one step, so it obeys
/// the same bound; the slack only absorbs rounding.
pub fn verify_udot_bound(tr: &Trajectory, delta_u: f64) -> UdotCheck {
    // the window sup column carries every step's estimate for τ seconds
    let observed_sup = tr
        .rows
        .iter()
        .fold(0.0f64, |m, r| m.max(r.udot_window_sup).max(r.udot_estimate.abs()));
    let slack = 1e-9 * delta_u.max(1.0);
    UdotCheck {
        observed_sup,
        delta_u,
        ratio: if delta_u > 0.0 { observed_sup / delta_u } else { f64::INFINITY },
        slack,
        holds: observed_sup <= delta_u + slack,
    }
}

/// `sup |y − y_d|` over the final `tail_fraction` of the records.
pub fn asymptotic_error(tr: &Trajectory, tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::InvalidWindow(format!(
            "tail fraction must be in (0, 1), got {tail_fraction}"
        )));
    }
    let n = tr.rows.len();
    let start = ((1.0 - tail_fraction) * n as f64).floor() as usize;
    let tail = &tr.rows[start.min(n.saturating_sub(1))..];
    let y_d = tail[0].y_d;
    if let Some(r) = tail.iter().find(|r| r.y_d != y_d) {
        return Err(Error::InvalidWindow(format!(
            "setpoint changes inside the tail (at t = {})",
            r.t
        )));
    }
    Ok(tail.iter().fold(0.0, |m, r| m.max((r.y - r.y_d).abs())))
}
