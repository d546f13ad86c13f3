//! Unicycle kinematics and the range sensor.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::PolarState;
use crate::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % TAU;
    if w > PI {
        w -= TAU;
    } else if w <= -PI {
        w += TAU;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// World-frame pose of the robot. `theta` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    /// Places the robot at polar coordinates `(d, φ, η)` around `target`.
    pub fn from_polar(target: Point, polar: PolarState) -> Self {
        Self::new(
            target.x + polar.d * polar.eta.cos(),
            target.y + polar.d * polar.eta.sin(),
            polar.eta + polar.phi,
        )
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        (self.x - p.x).hypot(self.y - p.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Ordered, nonempty set of stationary targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct TargetSet {
    positions: Vec<Point>,
}

impl TargetSet {
    pub fn new(positions: Vec<Point>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter("target set is empty".into()));
        }
        if positions.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidParameter("target position not finite".into()));
        }
        Ok(Self { positions })
    }

    pub fn single(p: Point) -> Self {
        Self { positions: vec![p] }
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Index and distance of the closest target; ties go to the lowest index.
    pub fn nearest(&self, state: &RobotState) -> (usize, f64) {
        self.positions
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bd), (i, p)| {
                let d = state.distance_to(*p);
                if d < bd {
                    (i, d)
                } else {
                    (bi, bd)
                }
            })
    }
}

impl TryFrom<Vec<Point>> for TargetSet {
    type Error = Error;

    fn try_from(v: Vec<Point>) -> Result<Self> {
        TargetSet::new(v)
    }
}

impl From<TargetSet> for Vec<Point> {
    fn from(t: TargetSet) -> Self {
        t.positions
    }
}

/// Additive white Gaussian range noise, `N(0, sigma²)` per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn source(&self) -> NoiseSource {
        NoiseSource::new(*self)
    }
}

/// Seeded stream of noise draws.
///
/// Uniforms come from ChaCha20 seeded through `seed_from_u64`; normals are
/// produced with the Box–Muller transform, using both outputs of each pair.
/// The sequence is a pure function of the seed.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    sigma: f64,
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NoiseSource {
    pub fn new(model: NoiseModel) -> Self {
        Self {
            sigma: model.sigma,
            rng: ChaCha20Rng::seed_from_u64(model.seed),
            spare: None,
        }
    }

    /// One standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps ln finite
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    /// One draw of `N(0, sigma²)`. Returns exactly zero when `sigma == 0`
    /// without advancing the generator.
    pub fn sample(&mut self) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            self.sigma * self.standard_normal()
        }
    }
}

/// Advances the unicycle by one classical RK4 step with `u` held constant.
pub fn step(state: &RobotState, u: f64, vc: f64, dt: f64) -> Result<RobotState> {
    if !state.is_finite() {
        return Err(Error::NonFinite("robot state"));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("control input"));
    }
    if !(vc > 0.0 && vc.is_finite()) {
        return Err(Error::InvalidParameter(format!("speed must be > 0, got {vc}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }

    // x and y derivatives depend only on theta, theta_dot = u
    let f = |theta: f64| (vc * theta.cos(), vc * theta.sin());
    let th = state.theta;
    let k1 = f(th);
    let k2 = f(th + 0.5 * dt * u);
    let k3 = k2;
    let k4 = f(th + dt * u);
    let x = state.x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    let y = state.y + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    Ok(RobotState::new(x, y, th + dt * u))
}

/// Range to the nearest target plus one noise draw.
pub fn measure(state: &RobotState, targets: &TargetSet, noise: &mut NoiseSource) -> f64 {
    targets.nearest(state).1 + noise.sample()
}

/// Ground-truth polar coordinates of the robot relative to `target`.
pub fn true_polar(state: &RobotState, target: Point) -> Result<PolarState> {
    let dx = state.x - target.x;
    let dy = state.y - target.y;
    let d = dx.hypot(dy);
    if d == 0.0 {
        return Err(Error::CoincidentTarget {
            x: target.x,
            y: target.y,
        });
    }
    let eta = wrap_angle(dy.atan2(dx));
    Ok(PolarState {
        d,
        phi: wrap_angle(state.theta - eta),
        eta,
    })
}
