//! Scenario builders shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use encircle_core::analysis::PolarState;
use encircle_core::controller::ControllerParams;
use encircle_core::harness::{FilterInit, Scenario};
use encircle_core::plant::{NoiseModel, Point, RobotState, TargetSet};
use encircle_core::signals::RefCommand;
use rand::Rng;

pub const TARGET: Point = Point { x: 2.0, y: 2.0 };

pub fn eight_starts() -> [RobotState; 8] {
    [
        RobotState::new(7.0, 2.0, -3.0 * PI / 5.0),
        RobotState::new(2.0, 7.0, PI / 2.0),
        RobotState::new(-3.0, 2.0, PI),
        RobotState::new(2.0, -3.0, -PI / 2.0),
        RobotState::new(2.5, 2.0, 0.0),
        RobotState::new(2.0, 2.5, PI / 2.0),
        RobotState::new(1.5, 2.0, PI),
        RobotState::new(2.0, 1.5, -PI / 2.0),
    ]
}

pub fn fig4() -> Scenario {
    Scenario::circumnavigation(RobotState::new(7.0, 2.0, -3.0 * PI / 5.0))
}

pub fn k2_sweep(k2: f64) -> Scenario {
    let mut sc = Scenario::circumnavigation(RobotState::new(7.0, 2.0, -PI / 2.0));
    sc.params.k2 = k2;
    sc
}

/// Slow sinusoidal radius around the same target.
pub fn time_varying() -> Scenario {
    let mut sc = Scenario::circumnavigation(RobotState::new(40.0, 0.0, PI / 2.0));
    sc.command = RefCommand::sinusoid(20.0, 1.8, 0.2, 0.0).unwrap();
    sc.params.k2 = 0.1;
    sc.t_end = 300.0;
    sc
}

/// Low-gain set with noisy ranges; `varying` selects `2 + 0.8 sin(0.04 t)`.
pub fn noisy(sigma: f64, seed: u64, varying: bool) -> Scenario {
    let mut sc = Scenario::circumnavigation(RobotState::new(7.0, 2.0, -PI / 2.0));
    sc.params = ControllerParams::table2();
    sc.filter_gain = 1.0;
    sc.noise = NoiseModel { sigma, seed };
    sc.t_end = 500.0;
    if varying {
        sc.command = RefCommand::sinusoid(2.0, 0.8, 0.04, 0.0).unwrap();
    }
    sc
}

/// Equilateral triangle of side 6 centred on the origin.
pub fn triangle() -> Vec<Point> {
    let s3 = 3f64.sqrt();
    vec![Point::new(-3.0, -s3), Point::new(3.0, -s3), Point::new(0.0, 2.0 * s3)]
}

pub fn multi_target() -> Scenario {
    let mut sc = Scenario::circumnavigation(RobotState::new(15.0, 0.0, PI / 2.0));
    sc.targets = TargetSet::new(triangle()).unwrap();
    sc.command = RefCommand::Constant { rc: 5.0 };
    sc.t_end = 200.0;
    sc
}

/// Random constant-radius run meeting `k2 < vc`, `k3 = rc`, started with
/// `φ ∈ [0, π]` and the filter already tracking the true range rate.
pub fn random_prop1<R: Rng>(rng: &mut R) -> Scenario {
    let rc = rng.gen_range(1.0..5.0);
    let target = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    let mut sc = Scenario::circumnavigation(RobotState::from_polar(
        target,
        PolarState {
            d: rng.gen_range(0.3..12.0),
            phi: rng.gen_range(0.0..=PI),
            eta: rng.gen_range(-PI..PI),
        },
    ));
    sc.targets = TargetSet::single(target);
    sc.command = RefCommand::Constant { rc };
    sc.params.k1 = rng.gen_range(2.0..30.0);
    sc.params.k2 = rng.gen_range(0.05..0.95) * sc.params.vc;
    sc.params.k3 = rc;
    sc.filter_init = FilterInit::Settled;
    sc.dt = 1e-3;
    sc.log_every = 1;
    sc.t_end = 60.0;
    sc
}

/// Largest distance of `φ` outside `[0, π]`, measured around the circle.
pub fn phi_excursion(phi: f64) -> f64 {
    if phi >= 0.0 {
        0.0
    } else {
        (-phi).min(PI + phi)
    }
}

/// Largest single-sample increase of `V`, relative to `max V`, over the
/// records with `t ≥ from`.
pub fn worst_v_increase(records: &[encircle_core::harness::Record], from: f64) -> f64 {
    let vmax = records.iter().map(|r| r.v).fold(0.0, f64::max);
    if vmax == 0.0 {
        return 0.0;
    }
    records
        .windows(2)
        .filter(|w| w[0].t >= from)
        .map(|w| (w[1].v - w[0].v) / vmax)
        .fold(f64::NEG_INFINITY, f64::max)
}
