//! Closed-loop simulation: range sensor, washout filter, controller, plant.
//!
//! One iteration per `dt`:
//!
//! 1. measure the range to the nearest target (one noise draw, held over the step);
//! 2. feed it to the washout filter;
//! 3. evaluate the control law against the reference at `t`;
//! 4. advance the plant one RK4 step with the control held.
//!
//! Runs are bitwise deterministic for a fixed scenario, seed included.

use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, AnalysisConfig, AnalysisReport, Eigenvalue, PolarState};
use crate::controller::{Backstepping, ConditionReport, ControllerParams, RangeOnlyController};
use crate::estimator::WashoutState;
use crate::plant::{self, wrap_angle, NoiseModel, Point, RobotState, TargetSet};
use crate::signals::RefCommand;
use crate::{Error, Result};

/// Initial state of the washout filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterInit {
    /// At rest on the first measurement: `ξ(0) = 0`.
    #[default]
    Rest,
    /// As if the filter had been running before `t = 0` with the robot
    /// already moving: `ξ(0)` equals the true range rate `vc·cos φ(0)`.
    Settled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub initial_state: RobotState,
    pub targets: TargetSet,
    pub command: RefCommand,
    pub params: ControllerParams,
    /// Washout filter gain `h` (1/s).
    pub filter_gain: f64,
    #[serde(default)]
    pub filter_init: FilterInit,
    pub noise: NoiseModel,
    pub dt: f64,
    pub t_end: f64,
    pub log_every: usize,
}

impl Scenario {
    /// Single target at `(2, 2)`, `rc = 2`, constant-radius gains, noiseless,
    /// `h = 100`, `dt = 0.01`, 100 s.
    pub fn circumnavigation(initial_state: RobotState) -> Self {
        Self {
            initial_state,
            targets: TargetSet::single(Point::new(2.0, 2.0)),
            command: RefCommand::Constant { rc: 2.0 },
            params: ControllerParams::table1(),
            filter_gain: 100.0,
            filter_init: FilterInit::Rest,
            noise: NoiseModel::none(),
            dt: 0.01,
            t_end: 100.0,
            log_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.command.validate()?;
        self.noise.validate()?;
        if !(self.filter_gain > 0.0 && self.filter_gain.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "filter gain must be > 0, got {}",
                self.filter_gain
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end > self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must exceed dt, got {}",
                self.t_end
            )));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidParameter("log_every must be >= 1".into()));
        }
        let s = &self.initial_state;
        if !(s.x.is_finite() && s.y.is_finite() && s.theta.is_finite()) {
            return Err(Error::InvalidParameter("initial state not finite".into()));
        }
        Ok(())
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }
}

/// One logged sample. Field order and names form the CSV header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub d_true: f64,
    pub d_meas: f64,
    pub xi: f64,
    pub u: f64,
    pub r: f64,
    pub r_dot: f64,
    /// `d_true − r`.
    pub e1: f64,
    /// `vc·cos φ − s(d_true)`, from ground truth.
    pub e2_true: f64,
    /// `ξ − s(d_meas)`, as seen by the controller.
    pub e2_filt: f64,
    /// Relative to the nearest target.
    pub phi: f64,
    /// `V3` for a constant command, `V4` otherwise.
    #[serde(rename = "V")]
    pub v: f64,
    pub clamp_d: bool,
    pub clamp_alpha: bool,
    pub clamp_u: bool,
}

pub const CSV_HEADER: &str =
    "t,x,y,theta,d_true,d_meas,xi,u,r,r_dot,e1,e2_true,e2_filt,phi,V,clamp_d,clamp_alpha,clamp_u";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub params: ControllerParams,
    pub command: RefCommand,
    pub dt: f64,
    pub log_every: usize,
    /// Gain conditions for this command; the run proceeds even when they fail.
    pub conditions: ConditionReport,
    pub records: Vec<Record>,
}

impl TrajectoryLog {
    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// Records with `t` in `[from, to]`.
    pub fn window(&self, from: f64, to: f64) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.t >= from && r.t <= to)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_records_csv(&self.records, w)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn write_records_csv<W: Write>(records: &[Record], w: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    writer.write_record(CSV_HEADER.split(','))?;
    for rec in records {
        writer.serialize(rec)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<Record>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::InvalidParameter(format!("unexpected csv header: {header}")));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn abort(step: usize, t: f64, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::NumericalAbort { step, t, what },
        other => other,
    }
}

/// Runs a scenario with the backstepping law.
pub fn run(sc: &Scenario) -> Result<TrajectoryLog> {
    sc.validate()?;
    run_with(sc, &Backstepping::for_command(sc.params, &sc.command))
}

/// Runs a scenario with any range-only steering law.
///
/// Diagnostics that depend on the backstepping gains (`e2_true`, `V`) are
/// computed from `sc.params` regardless of the law.
pub fn run_with(sc: &Scenario, law: &dyn RangeOnlyController) -> Result<TrajectoryLog> {
    sc.validate()?;
    let p = sc.params;
    let n = sc.steps();
    let mut state = sc.initial_state;
    let mut noise = sc.noise.source();
    let mut filter: Option<WashoutState> = None;
    let mut records = Vec::with_capacity(n / sc.log_every + 1);

    for k in 0..=n {
        let t = k as f64 * sc.dt;
        let (nearest, d_true) = sc.targets.nearest(&state);
        let d_meas = d_true + noise.sample();
        let xi = match filter.as_mut() {
            Some(f) => f.update(d_meas, sc.dt),
            None => {
                let mut f = WashoutState::init(sc.filter_gain, d_meas)?;
                if sc.filter_init == FilterInit::Settled {
                    let polar = plant::true_polar(&state, sc.targets.positions()[nearest])?;
                    f.w = d_meas - p.vc * polar.phi.cos() / sc.filter_gain;
                    f.xi = sc.filter_gain * (d_meas - f.w);
                }
                let xi = f.xi;
                filter = Some(f);
                xi
            }
        };
        if !xi.is_finite() {
            return Err(Error::NumericalAbort { step: k, t, what: "range-rate estimate" });
        }
        let reference = sc.command.eval(t);
        let out = law
            .control(d_meas, xi, &reference, t)
            .map_err(|e| abort(k, t, e))?;

        if k % sc.log_every == 0 {
            let polar = plant::true_polar(&state, sc.targets.positions()[nearest])?;
            let d_dot = p.vc * polar.phi.cos();
            let e1 = d_true - reference.r;
            let e2_true = d_dot - analysis::virtual_command(e1, reference.r_dot, &p);
            let v = match sc.command {
                RefCommand::Constant { rc } => analysis::lyapunov_v3(d_true, d_dot, rc, &p),
                _ => analysis::lyapunov_v4(d_true, reference.r, e2_true, &p),
            };
            records.push(Record {
                t,
                x: state.x,
                y: state.y,
                theta: state.theta,
                d_true,
                d_meas,
                xi,
                u: out.u,
                r: reference.r,
                r_dot: reference.r_dot,
                e1,
                e2_true,
                e2_filt: out.diag.e2,
                phi: polar.phi,
                v,
                clamp_d: out.diag.clamped_d,
                clamp_alpha: out.diag.clamped_alpha,
                clamp_u: out.diag.clamped_u,
            });
        }

        if k < n {
            state = plant::step(&state, out.u, p.vc, sc.dt).map_err(|e| abort(k, t, e))?;
            if !(state.x.is_finite() && state.y.is_finite() && state.theta.is_finite()) {
                return Err(Error::NumericalAbort { step: k + 1, t: t + sc.dt, what: "robot state" });
            }
        }
    }

    Ok(TrajectoryLog {
        params: p,
        command: sc.command.clone(),
        dt: sc.dt,
        log_every: sc.log_every,
        conditions: ConditionReport::for_command(&p, &sc.command),
        records,
    })
}

/// Runs scenarios in parallel; results keep the input order and one failure
/// does not stop the others.
pub fn run_batch(
    scenarios: &[Scenario],
    cfg: &AnalysisConfig,
) -> Vec<Result<(TrajectoryLog, AnalysisReport)>> {
    scenarios
        .par_iter()
        .map(|sc| {
            let log = run(sc)?;
            let report = analysis::analyze(&log, cfg);
            Ok((log, report))
        })
        .collect()
}

/// Settings for probing the interior equilibria at `φ = −π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressOptions {
    pub filter_gain: f64,
    pub dt: f64,
    pub t_max: f64,
    /// Initial offset added to `d*`.
    pub perturbation: f64,
    /// Distance from `(d*, −π/2)` in the `(d, φ)` plane that counts as escape.
    pub escape_radius: f64,
}

impl Default for StressOptions {
    fn default() -> Self {
        Self {
            filter_gain: 100.0,
            dt: 1e-3,
            t_max: 30.0,
            perturbation: 1e-3,
            escape_radius: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorRoot {
    pub d_star: f64,
    /// Eigenvalues of the `(d, φ)` Jacobian at the equilibrium.
    pub jacobian_eigenvalues: [Eigenvalue; 2],
    pub escaped: bool,
    pub escape_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorEquilibriumReport {
    /// `k1·k2 ≥ 8·vc²`.
    pub gain_condition: bool,
    /// Discriminant of `d² − rc·d + 2·vc²·k3/(k1·k2)`.
    pub discriminant: f64,
    pub roots: Vec<InteriorRoot>,
}

impl InteriorEquilibriumReport {
    pub fn exists(&self) -> bool {
        !self.roots.is_empty()
    }
}

fn eigen2(m: [[f64; 2]; 2]) -> [Eigenvalue; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [
            Eigenvalue { re: tr / 2.0 + s, im: 0.0 },
            Eigenvalue { re: tr / 2.0 - s, im: 0.0 },
        ]
    } else {
        let s = (-disc).sqrt();
        [
            Eigenvalue { re: tr / 2.0, im: s },
            Eigenvalue { re: tr / 2.0, im: -s },
        ]
    }
}

/// Equilibria of the closed loop with the robot circling the target
/// clockwise (`φ = −π/2`, `ḋ = 0`) at some `d* ∈ (0, rc)`.
///
/// At `φ = −π/2` the heading rate is `2·vc/d + (k1·k2/vc)·sat((d − rc)/k3)`.
/// Inside the unsaturated band its zeros solve
/// `d² − rc·d + 2·vc²·k3/(k1·k2) = 0`; in the saturated part
/// (`d ≤ rc − k3`) the zero is `d = 2·vc²/(k1·k2)`. Each root found is
/// perturbed and simulated to confirm that the trajectory leaves it.
pub fn stress_interior_equilibrium(
    p: &ControllerParams,
    rc: f64,
    opts: &StressOptions,
) -> Result<InteriorEquilibriumReport> {
    p.validate()?;
    let gain = p.k1 * p.k2;
    let c = 2.0 * p.vc * p.vc * p.k3 / gain;
    let discriminant = rc * rc - 4.0 * c;
    let band_low = (rc - p.k3).max(0.0);

    let mut candidates = Vec::new();
    if discriminant >= 0.0 {
        let s = discriminant.sqrt();
        let big = (rc + s) / 2.0;
        // product of roots is c
        let small = if big > 0.0 { c / big } else { (rc - s) / 2.0 };
        for d in [small, big] {
            if d > band_low && d < rc && !candidates.contains(&d) {
                candidates.push(d);
            }
        }
    }
    let saturated = 2.0 * p.vc * p.vc / gain;
    if saturated > 0.0 && saturated <= rc - p.k3 {
        candidates.push(saturated);
        candidates.sort_by(f64::total_cmp);
    }

    let mut roots = Vec::with_capacity(candidates.len());
    for d_star in candidates {
        let slope = if (d_star - rc).abs() < p.k3 {
            gain / (p.vc * p.k3)
        } else {
            0.0
        };
        let jac = [[0.0, p.vc], [slope - 2.0 * p.vc / (d_star * d_star), p.k1]];
        let (escaped, escape_time) = probe_escape(p, rc, d_star, opts)?;
        roots.push(InteriorRoot {
            d_star,
            jacobian_eigenvalues: eigen2(jac),
            escaped,
            escape_time,
        });
    }

    Ok(InteriorEquilibriumReport {
        gain_condition: gain >= 8.0 * p.vc * p.vc,
        discriminant,
        roots,
    })
}

fn probe_escape(
    p: &ControllerParams,
    rc: f64,
    d_star: f64,
    opts: &StressOptions,
) -> Result<(bool, Option<f64>)> {
    let target = Point::new(0.0, 0.0);
    let start = RobotState::from_polar(
        target,
        PolarState {
            d: d_star + opts.perturbation,
            phi: -FRAC_PI_2,
            eta: 0.0,
        },
    );
    let sc = Scenario {
        initial_state: start,
        targets: TargetSet::single(target),
        command: RefCommand::Constant { rc },
        params: *p,
        filter_gain: opts.filter_gain,
        filter_init: FilterInit::Rest,
        noise: NoiseModel::none(),
        dt: opts.dt,
        t_end: opts.t_max,
        log_every: 1,
    };
    let log = run(&sc)?;
    let hit = log.records.iter().find(|rec| {
        let dd = rec.d_true - d_star;
        let dphi = wrap_angle(rec.phi + FRAC_PI_2);
        dd.hypot(dphi) > opts.escape_radius
    });
    Ok(match hit {
        Some(rec) => (true, Some(rec.t)),
        None => (false, None),
    })
}
