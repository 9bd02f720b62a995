//! Saturated dynamic output feedback `u = S(λ(y_d − y) + z)`, `ż = λ_f(u − z)`
//! for first-order plants whose unmodeled internal dynamics are excited by the
//! control rate.
//!
//! The crate computes the envelope constants of the internal dynamics, the
//! admissible gain region and the resulting error bound, simulates the closed
//! loop, and checks simulated trajectories against those guarantees.

pub mod controller;
pub mod error;
pub mod exec;
pub mod format;
pub mod model;
pub mod numerics;
pub mod scenario;
pub mod simulate;
pub mod tuning;

pub use controller::{ControllerGains, ControllerState, Region};
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{LinearInternalDynamics, PlantTruth, SignalSpec, UncertaintyEnvelope};
pub use simulate::{simulate, SetpointSchedule, SimConfig, Trajectory, TrajectoryRow};
pub use tuning::{EnvelopeConstants, TuningReport};
