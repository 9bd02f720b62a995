//! Numeric kernel: dense matrices, the matrix exponential, impulse/step
//! response quadratures, fixed-step RK4 and a sliding-window maximum.

mod expm;
mod matrix;
mod quadrature;
mod rk4;
mod window;

pub use expm::mat_exp;
pub use matrix::Matrix;
pub use quadrature::{
    check_hurwitz, default_horizon, l1_impulse_norm, l1_impulse_norm_with, step_response_sup,
    step_response_sup_with, QuadRule, QuadSettings, QuadValue, DEFAULT_STEP, HORIZON_TIME_CONSTANTS,
    HURWITZ_MARGIN, TAIL_TOLERANCE,
};
pub use rk4::{rk4_step, Rk4};
pub use window::SlidingWindowMax;
