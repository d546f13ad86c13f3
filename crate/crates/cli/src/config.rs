//! Scenario config files.
//!
//! A config is a JSON document mirroring the harness scenario. Unknown keys
//! are rejected. Angles may be numbers (radians) or strings such as
//! `"pi/2"`, `"-3pi/5"` or `"0.25pi"`.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use encircle_core::analysis::AnalysisConfig;
use encircle_core::controller::ControllerParams;
use encircle_core::harness::{FilterInit, Scenario};
use encircle_core::plant::{NoiseModel, Point, RobotState, TargetSet};
use encircle_core::signals::RefCommand;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Angle {
    Radians(f64),
    Expr(String),
}

impl Angle {
    pub fn radians(&self) -> Result<f64> {
        match self {
            Angle::Radians(v) => Ok(*v),
            Angle::Expr(s) => parse_angle(s),
        }
    }
}

/// Parses `a`, `pi`, `a·pi`, `api/b`, `pi/b` (optionally signed).
pub fn parse_angle(s: &str) -> Result<f64> {
    let s = s.trim().replace(' ', "").to_ascii_lowercase();
    if s.is_empty() {
        bail!("empty angle");
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.to_string(), d.parse::<f64>().map_err(|_| anyhow!("bad angle denominator in {s:?}"))?),
        None => (s.clone(), 1.0),
    };
    let value = if let Some(coef) = num.strip_suffix("pi") {
        let coef = coef.trim_end_matches('*');
        let c = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|_| anyhow!("bad angle {s:?}"))?,
        };
        c * PI
    } else {
        num.parse::<f64>().map_err(|_| anyhow!("bad angle {s:?}"))?
    };
    let v = value / den;
    if !v.is_finite() {
        bail!("angle {s:?} is not finite");
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: Angle,
}

impl Pose {
    /// `"x y theta"`, e.g. `"7 2 -3pi/5"`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let [x, y, theta] = parts[..] else {
            bail!("initial state must be \"x y theta\", got {s:?}");
        };
        let theta = parse_angle(theta)?;
        Ok(Self {
            x: x.parse().with_context(|| format!("bad x in {s:?}"))?,
            y: y.parse().with_context(|| format!("bad y in {s:?}"))?,
            theta: Angle::Radians(theta),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub initial_state: Pose,
    pub targets: Vec<Point>,
    pub command: RefCommand,
    pub params: ControllerParams,
    pub filter_gain: f64,
    #[serde(default)]
    pub filter_init: FilterInit,
    #[serde(default = "NoiseModel::none")]
    pub noise: NoiseModel,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub log_every: usize,
    /// Also write the trajectory as JSON lines.
    #[serde(default)]
    pub jsonl: bool,
    #[serde(default)]
    pub analysis: AnalysisOverrides,
}

fn one() -> usize {
    1
}

/// Optional tweaks to the analysis thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOverrides {
    pub angle_tol: Option<f64>,
    pub dwell: Option<f64>,
    pub decay_floor: Option<f64>,
    pub settle_tol: Option<f64>,
    pub steady_fraction: Option<f64>,
    pub tail_fraction: Option<f64>,
    pub oscillation_sign_changes: Option<usize>,
}

impl AnalysisOverrides {
    pub fn resolve(&self) -> AnalysisConfig {
        let mut c = AnalysisConfig::default();
        if let Some(v) = self.angle_tol {
            c.phases.angle_tol = v;
        }
        if let Some(v) = self.dwell {
            c.phases.dwell = v;
        }
        if let Some(v) = self.decay_floor {
            c.decay_floor = v;
        }
        if let Some(v) = self.settle_tol {
            c.settle_tol = v;
        }
        if let Some(v) = self.steady_fraction {
            c.steady_fraction = v;
        }
        if let Some(v) = self.tail_fraction {
            c.tail_fraction = v;
        }
        if let Some(v) = self.oscillation_sign_changes {
            c.oscillation_sign_changes = v;
        }
        c
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Builds and validates the harness scenario.
    pub fn scenario(&self) -> Result<Scenario> {
        let theta = self.initial_state.theta.radians()?;
        let sc = Scenario {
            initial_state: RobotState::new(self.initial_state.x, self.initial_state.y, theta),
            targets: TargetSet::new(self.targets.clone())?,
            command: self.command.clone(),
            params: self.params,
            filter_gain: self.filter_gain,
            filter_init: self.filter_init,
            noise: self.noise,
            dt: self.dt,
            t_end: self.t_end,
            log_every: self.log_every,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// Sets one named parameter from its textual value.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .trim()
                .parse::<f64>()
                .with_context(|| format!("{name}: not a number: {value:?}"))
        };
        match name {
            "vc" => self.params.vc = num()?,
            "k1" => self.params.k1 = num()?,
            "k2" => self.params.k2 = num()?,
            "k3" => self.params.k3 = num()?,
            "eps1" => self.params.eps1 = num()?,
            "eps2" => self.params.eps2 = num()?,
            "u_max" => self.params.u_max = Some(num()?),
            "filter_gain" | "h" => self.filter_gain = num()?,
            "dt" => self.dt = num()?,
            "t_end" => self.t_end = num()?,
            "sigma" => self.noise.sigma = num()?,
            "seed" => {
                self.noise.seed = value
                    .trim()
                    .parse()
                    .with_context(|| format!("seed: not an unsigned integer: {value:?}"))?
            }
            "rc" => match &mut self.command {
                RefCommand::Constant { rc } => *rc = num()?,
                _ => bail!("rc applies to constant commands only"),
            },
            "initial_state" => self.initial_state = Pose::parse(value)?,
            other => bail!(
                "unknown sweep parameter {other:?}; expected one of vc, k1, k2, k3, eps1, eps2, \
                 u_max, filter_gain, dt, t_end, sigma, seed, rc, initial_state"
            ),
        }
        Ok(())
    }
}
