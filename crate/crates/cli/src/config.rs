//! Scenario configuration: a JSON document with `plant`, `envelope`,
//! `signals`, `controller` and `sim` sections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use satguard::model::{
    signal_rate_bound, EnvelopeFields, LinearInternalDynamics, PlantTruth, SignalSpec, UncertaintyEnvelope,
};
use satguard::numerics::Matrix;
use satguard::scenario::Scenario;
use satguard::simulate::{SetpointSchedule, SimConfig};
use satguard::tuning::EnvelopeConstants;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantSection,
    pub envelope: EnvelopeSection,
    pub signals: SignalsSection,
    #[serde(default)]
    pub controller: ControllerSection,
    pub sim: SimSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B1")]
    pub b1: Matrix,
    #[serde(rename = "B2")]
    pub b2: Matrix,
    #[serde(rename = "C")]
    pub c: Matrix,
    pub alpha_true: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    pub u_min: f64,
    pub u_max: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Derived from `signals.g` when absent (sinusoid sums and constants only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_rate_bound: Option<f64>,
    pub w_bound: f64,
    pub tau: f64,
    #[serde(default)]
    pub epsilon: f64,
    /// Envelope constants to tune with instead of the computed ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<DeclaredConstants>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredConstants {
    pub c0: f64,
    pub c1: f64,
    pub d0: f64,
    pub d1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsSection {
    pub g: SignalSpec,
    /// One signal per column of `B2`.
    pub w: OneOrMany<SignalSpec>,
    pub setpoint: SetpointSchedule,
}

/// Absent gains are picked automatically.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_f: Option<f64>,
}

fn default_step() -> f64 {
    0.005
}

fn default_record_every() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t_end: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub y0: f64,
    /// Defaults to the midpoint of the actuator range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<f64>,
    /// Recorded for provenance; the simulation itself is deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Trailing span over which the envelope check takes the control-rate sup.
    #[serde(default)]
    pub envelope_lookback: f64,
}

/// A scenario ready to run, plus the gain and verification choices.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub controller: ControllerSection,
    pub envelope_lookback: f64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::input(format!("config error at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates every section and builds the model objects. Relative replay
    /// paths resolve against `base`.
    pub fn prepare(&self, base: &Path) -> Result<Prepared, CliError> {
        let at = |section: &'static str| move |e: satguard::Error| CliError::from_core(e).context(section);

        let mut g = self.signals.g.clone();
        g.resolve_files(base).map_err(at("signals.g"))?;
        g.validate().map_err(at("signals.g"))?;
        let mut w = self.signals.w.to_vec();
        for (i, wi) in w.iter_mut().enumerate() {
            wi.resolve_files(base).map_err(at("signals.w"))?;
            wi.validate()
                .map_err(|e| CliError::from_core(e).context(&format!("signals.w[{i}]")))?;
        }

        let env = &self.envelope;
        let g_rate_bound = match env.g_rate_bound {
            Some(b) => b,
            None => signal_rate_bound(&g).map_err(|e| {
                CliError::input(format!(
                    "envelope.g_rate_bound: not given and cannot be derived from signals.g ({e})"
                ))
            })?,
        };
        let envelope = UncertaintyEnvelope::new(EnvelopeFields {
            u_min: env.u_min,
            u_max: env.u_max,
            g_min: env.g_min,
            g_max: env.g_max,
            alpha_min: env.alpha_min,
            alpha_max: env.alpha_max,
            g_rate_bound,
            w_bound: env.w_bound,
            tau: env.tau,
        })
        .map_err(at("envelope"))?;
        if !(env.epsilon >= 0.0 && env.epsilon.is_finite()) {
            return Err(CliError::input(format!("envelope.epsilon must be >= 0, got {}", env.epsilon)));
        }
        let declared = env
            .constants
            .map(|c| EnvelopeConstants::new(c.c0, c.c1, c.d0, c.d1, env.epsilon))
            .transpose()
            .map_err(at("envelope.constants"))?;

        let p = &self.plant;
        let internal = LinearInternalDynamics::new(p.a.clone(), p.b1.clone(), p.b2.clone(), p.c.clone())
            .map_err(at("plant"))?;

        let s = &self.sim;
        let sim = SimConfig {
            t_end: s.t_end,
            step: s.step,
            record_every: s.record_every,
            y0: s.y0,
            z0: s.z0,
            eta0: None,
            setpoint: self.signals.setpoint.clone(),
        };
        sim.validate(envelope.tau()).map_err(at("sim"))?;
        if !(s.envelope_lookback >= 0.0 && s.envelope_lookback.is_finite()) {
            return Err(CliError::input(format!(
                "sim.envelope_lookback must be >= 0, got {}",
                s.envelope_lookback
            )));
        }

        let plant = PlantTruth::new(&envelope, p.alpha_true, g, w, internal, p.eta0.clone(), s.t_end)
            .map_err(at("plant"))?;

        let c = &self.controller;
        for (name, v) in [("lambda", c.lambda), ("lambda_f", c.lambda_f)] {
            if v.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
                return Err(CliError::input(format!("controller.{name} must be > 0")));
            }
        }
        if c.lambda.is_none() && c.lambda_f.is_some() {
            return Err(CliError::input("controller.lambda_f given without controller.lambda"));
        }

        Ok(Prepared {
            scenario: Scenario {
                envelope,
                plant,
                epsilon: env.epsilon,
                declared,
                sim,
            },
            controller: *c,
            envelope_lookback: s.envelope_lookback,
        })
    }
}
