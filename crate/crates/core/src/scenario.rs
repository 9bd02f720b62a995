//! Ready-made scenarios: the three-state illustrative system with its
//! published envelope, and a seeded family of random stable scenarios for
//! property tests and benchmarks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exec::Execution;
use crate::model::{
    EnvelopeFields, LinearInternalDynamics, PlantTruth, SignalSpec, SinusoidTerm, UncertaintyEnvelope, Wave,
};
use crate::numerics::{Matrix, QuadSettings};
use crate::simulate::{SetpointSchedule, SimConfig};
use crate::tuning::EnvelopeConstants;

/// Gains meeting the bounds in the illustrative example.
pub const REFERENCE_GOOD_GAINS: (f64, f64) = (17.0, 0.0102);
/// Ten times the good proportional gain, same filter gain.
pub const REFERENCE_BAD_GAINS: (f64, f64) = (170.0, 0.0102);

pub fn reference_envelope() -> UncertaintyEnvelope {
    UncertaintyEnvelope::new(EnvelopeFields {
        u_min: -1.0,
        u_max: 3.0,
        g_min: 0.5,
        g_max: 1.5,
        alpha_min: 0.1,
        alpha_max: 0.3,
        g_rate_bound: 0.05,
        w_bound: 0.1,
        tau: 10.0,
    })
    .expect("valid envelope")
}

pub fn reference_dynamics() -> LinearInternalDynamics {
    LinearInternalDynamics::new(
        Matrix::from_rows(&[
            vec![-3.4, -1.0, -0.5],
            vec![0.25, -1.7, 0.5],
            vec![1.2, 2.75, -3.6],
        ])
        .expect("A"),
        Matrix::column(&[0.1, 0.0, 0.0]).expect("B1"),
        Matrix::column(&[0.0, 0.2, 0.0]).expect("B2"),
        Matrix::row(&[1.0, 0.0, 1.0]).expect("C"),
    )
    .expect("Hurwitz internal dynamics")
}

/// `g(t) = 1 − 0.3 cos(0.1 t) − 0.1 sin(0.2 t + π/6)`
pub fn reference_g() -> SignalSpec {
    SignalSpec::SinusoidSum {
        offset: 1.0,
        terms: vec![
            SinusoidTerm {
                amplitude: -0.3,
                omega: 0.1,
                phase: 0.0,
                wave: Wave::Cos,
            },
            SinusoidTerm {
                amplitude: -0.1,
                omega: 0.2,
                phase: PI / 6.0,
                wave: Wave::Sin,
            },
        ],
    }
}

/// `w(t) = 0.1 sin(t)`
pub fn reference_w() -> SignalSpec {
    SignalSpec::SinusoidSum {
        offset: 0.0,
        terms: vec![SinusoidTerm {
            amplitude: 0.1,
            omega: 1.0,
            phase: 0.0,
            wave: Wave::Sin,
        }],
    }
}

pub fn reference_plant(check_until: f64) -> PlantTruth {
    PlantTruth::new(
        &reference_envelope(),
        0.2,
        reference_g(),
        vec![reference_w()],
        reference_dynamics(),
        None,
        check_until,
    )
    .expect("valid plant")
}

/// The published (rounded) envelope constants.
pub fn reference_printed_constants() -> EnvelopeConstants {
    EnvelopeConstants::new(0.05, 0.07, 0.2, 0.42, 0.0).expect("valid constants")
}

/// 0 until 200 s, ramps to 0.5 over 50 s, then to 1.0 from 500 s, constant after 550 s.
pub fn reference_setpoint() -> SetpointSchedule {
    SetpointSchedule::new(vec![(0.0, 0.0), (200.0, 0.5), (500.0, 1.0)], 50.0).expect("valid schedule")
}

pub fn reference_sim_config() -> SimConfig {
    SimConfig {
        t_end: 2000.0,
        step: 0.005,
        record_every: 20,
        y0: 0.0,
        z0: None,
        eta0: None,
        setpoint: reference_setpoint(),
    }
}

/// Everything needed to tune and simulate one plant.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub envelope: UncertaintyEnvelope,
    pub plant: PlantTruth,
    pub epsilon: f64,
    /// Envelope constants to use instead of the computed ones.
    pub declared: Option<EnvelopeConstants>,
    pub sim: SimConfig,
}

impl Scenario {
    /// Declared constants if any, else the computed ones.
    pub fn constants(&self, quad: &QuadSettings, exec: Execution) -> Result<EnvelopeConstants> {
        match self.declared {
            Some(c) => Ok(c),
            None => EnvelopeConstants::compute(
                self.plant.internal(),
                self.envelope.w_bound(),
                self.epsilon,
                quad,
                exec,
            ),
        }
    }
}

pub fn reference_scenario() -> Scenario {
    let sim = reference_sim_config();
    Scenario {
        envelope: reference_envelope(),
        plant: reference_plant(sim.t_end),
        epsilon: 0.0,
        declared: Some(reference_printed_constants()),
        sim,
    }
}

/// A random scenario with Metzler Hurwitz internal dynamics, nonnegative
/// `B1` and `C` (so the control-rate channel has a nonnegative impulse
/// response), sinusoidal load and disturbance inside the envelope, and a
/// constant setpoint away from the initial output.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=3usize);

    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if i == j {
                -rng.random_range(1.5..4.0)
            } else {
                rng.random_range(0.0..0.3)
            };
        }
    }
    let b1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.1)).collect();
    let b2: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..0.2)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let dynamics = LinearInternalDynamics::new(
        Matrix::from_rows(&a).expect("A"),
        Matrix::column(&b1).expect("B1"),
        Matrix::column(&b2).expect("B2"),
        Matrix::row(&c).expect("C"),
    )
    .expect("Metzler with dominant negative diagonal is Hurwitz");

    let g_min = rng.random_range(0.3..0.8);
    let delta_g = rng.random_range(0.3..1.2);
    let g_max = g_min + delta_g;
    let rho_plus = rng.random_range(0.8..2.0);
    let rho_minus = rng.random_range(0.8..2.0);
    let alpha_min = rng.random_range(0.05..0.2);
    let alpha_max = alpha_min * rng.random_range(1.2..3.0);
    let w_bound = rng.random_range(0.0..0.2);
    let tau = rng.random_range(5.0..15.0);

    let amp_budget = 0.45 * delta_g;
    let split = rng.random_range(0.2..0.8);
    let terms = vec![
        SinusoidTerm {
            amplitude: amp_budget * split,
            omega: rng.random_range(0.05..0.3),
            phase: rng.random_range(0.0..2.0 * PI),
            wave: Wave::Sin,
        },
        SinusoidTerm {
            amplitude: amp_budget * (1.0 - split),
            omega: rng.random_range(0.05..0.3),
            phase: rng.random_range(0.0..2.0 * PI),
            wave: Wave::Cos,
        },
    ];
    let g_rate: f64 = terms.iter().map(|t| (t.amplitude * t.omega).abs()).sum();
    let g = SignalSpec::SinusoidSum {
        offset: 0.5 * (g_min + g_max),
        terms,
    };
    let w = SignalSpec::SinusoidSum {
        offset: 0.0,
        terms: vec![SinusoidTerm {
            amplitude: w_bound,
            omega: rng.random_range(0.5..2.0),
            phase: 0.0,
            wave: Wave::Sin,
        }],
    };

    let envelope = UncertaintyEnvelope::new(EnvelopeFields {
        u_min: g_min - rho_minus,
        u_max: g_max + rho_plus,
        g_min,
        g_max,
        alpha_min,
        alpha_max,
        g_rate_bound: g_rate,
        w_bound,
        tau,
    })
    .expect("margins are positive by construction");

    let y_d = rng.random_range(-1.0..1.0);
    let offset = rng.random_range(0.5..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let sim = SimConfig {
        t_end: 400.0,
        step: 0.01,
        record_every: 10,
        y0: y_d + offset,
        z0: None,
        eta0: None,
        setpoint: SetpointSchedule::constant(y_d),
    };
    let plant = PlantTruth::new(
        &envelope,
        rng.random_range(alpha_min..=alpha_max),
        g,
        vec![w],
        dynamics,
        None,
        sim.t_end,
    )
    .expect("signals inside envelope by construction");

    Scenario {
        envelope,
        plant,
        epsilon: 0.0,
        declared: None,
        sim,
    }
}

/// `count` scenarios from consecutive seeds.
pub fn random_family(seed: u64, count: usize) -> Vec<Scenario> {
    (0..count as u64).map(|i| random_scenario(seed.wrapping_mul(1_000_003).wrapping_add(i))).collect()
}
