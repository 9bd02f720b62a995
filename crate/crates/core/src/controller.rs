//! Saturated dynamic output feedback
//!
//! ```text
//! u = sat(λ (y_d − y) + z)
//! ż = λf (u − z)
//! ```
//!
//! and the partition of the (y, z) plane by saturation status.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    lambda: f64,
    lambda_f: f64,
    y_d: f64,
    u_min: f64,
    u_max: f64,
}

impl ControllerGains {
    pub fn new(lambda: f64, lambda_f: f64, y_d: f64, u_min: f64, u_max: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) || !(lambda_f > 0.0 && lambda_f.is_finite()) {
            return Err(Error::Input(format!(
                "gains must be positive and finite, got lambda = {lambda}, lambda_f = {lambda_f}"
            )));
        }
        if !y_d.is_finite() || !(u_min < u_max) {
            return Err(Error::Input(format!(
                "need finite y_d and u_min < u_max, got y_d = {y_d}, [{u_min}, {u_max}]"
            )));
        }
        Ok(ControllerGains {
            lambda,
            lambda_f,
            y_d,
            u_min,
            u_max,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn lambda_f(&self) -> f64 {
        self.lambda_f
    }
    pub fn y_d(&self) -> f64 {
        self.y_d
    }
    pub fn u_min(&self) -> f64 {
        self.u_min
    }
    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// Same gains with another setpoint.
    pub fn with_setpoint(mut self, y_d: f64) -> Self {
        self.y_d = y_d;
        self
    }

    /// Midpoint of the actuator range, the default filter initialization.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.u_min + self.u_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub z: f64,
}

impl ControllerState {
    pub fn midpoint(g: &ControllerGains) -> Self {
        ControllerState { z: g.midpoint() }
    }
}

/// Saturation status of the control law at a point of the (y, z) plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// `z − λ(y − y_d) ≥ u_max`
    #[serde(rename = "A_plus")]
    APlus,
    /// `z − λ(y − y_d) ≤ u_min`
    #[serde(rename = "A_minus")]
    AMinus,
    /// unsaturated
    #[serde(rename = "A_zero")]
    AZero,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::APlus => "A_plus",
            Region::AMinus => "A_minus",
            Region::AZero => "A_zero",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A_plus" => Ok(Region::APlus),
            "A_minus" => Ok(Region::AMinus),
            "A_zero" => Ok(Region::AZero),
            other => Err(Error::Input(format!("unknown region `{other}`"))),
        }
    }
}

pub fn saturate(g: &ControllerGains, v: f64) -> f64 {
    v.clamp(g.u_min, g.u_max)
}

fn unclamped(g: &ControllerGains, y: f64, z: f64) -> f64 {
    g.lambda * (g.y_d - y) + z
}

pub fn control_output(g: &ControllerGains, y: f64, s: &ControllerState) -> f64 {
    saturate(g, unclamped(g, y, s.z))
}

pub fn filter_rhs(g: &ControllerGains, u: f64, s: &ControllerState) -> f64 {
    g.lambda_f * (u - s.z)
}

/// Boundary points belong to the saturated sets.
pub fn classify_region(g: &ControllerGains, y: f64, z: f64) -> Region {
    let v = unclamped(g, y, z);
    if v >= g.u_max {
        Region::APlus
    } else if v <= g.u_min {
        Region::AMinus
    } else {
        Region::AZero
    }
}
