//! Error model, linearization and Lyapunov diagnostics.
//!
//! Once the heading angle `φ` stays in `[0, π]` and the range error is inside
//! the unsaturated band `|d − r| < k3`, the error `z = (d − r, ḋ − ṙ)` obeys
//! `ż = A z` with
//!
//! ```text
//! A = [    0       1  ]
//!     [ −k1·k2/k3  −k1 ]
//! ```
//!
//! Everything here is evaluated on ground truth (the logged `φ` gives
//! `ḋ = vc·cos φ`), so the checks exercise the closed-loop theory rather than
//! the filter.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::controller::{sat, ConditionReport, ControllerParams};
use crate::harness::{Record, TrajectoryLog};
use crate::plant::Point;
use crate::signals::{RefCommand, RefSample};
use crate::{Error, Result};

/// Target-relative coordinates of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    /// Range (m), positive.
    pub d: f64,
    /// Heading relative to the outward radial direction, in `(−π, π]`.
    pub phi: f64,
    /// Bearing of the robot seen from the target, in `(−π, π]`.
    pub eta: f64,
}

/// Tracking error `z = (d − r, ḋ − ṙ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorState {
    pub z1: f64,
    pub z2: f64,
}

impl ErrorState {
    pub fn new(d: f64, d_dot: f64, reference: &RefSample) -> Self {
        Self {
            z1: d - reference.r,
            z2: d_dot - reference.r_dot,
        }
    }

    pub fn norm(&self) -> f64 {
        self.z1.hypot(self.z2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub a: [[f64; 2]; 2],
    pub eigenvalues: [Eigenvalue; 2],
    /// Guaranteed decay rate of `‖z‖`.
    pub rho: f64,
    /// `k1² − 4·k1·k2/k3`.
    pub delta: f64,
    pub hurwitz: bool,
    /// `‖Q‖·‖Q⁻¹‖` for the eigenvector matrix `Q` with unit columns. Absent
    /// when `A` is defective (`delta == 0`).
    pub c_bound: Option<f64>,
}

/// Linearized error dynamics inside the unsaturated band.
pub fn linearize(p: &ControllerParams) -> LinearizationReport {
    let k1 = p.k1;
    let stiffness = p.k1 * p.k2 / p.k3;
    let a = [[0.0, 1.0], [-stiffness, -k1]];
    let delta = k1 * k1 - 4.0 * stiffness;

    let (eigenvalues, rho, c_bound) = if delta > 0.0 {
        let root = delta.sqrt();
        // large root first, small root from the product to avoid cancellation
        let fast = -(k1 + root) / 2.0;
        let slow = stiffness / fast;
        let g = (1.0 + fast * slow).abs() / ((1.0 + fast * fast) * (1.0 + slow * slow)).sqrt();
        (
            [
                Eigenvalue { re: slow, im: 0.0 },
                Eigenvalue { re: fast, im: 0.0 },
            ],
            -slow,
            Some(condition_from_overlap(g)),
        )
    } else if delta < 0.0 {
        let re = -k1 / 2.0;
        let im = (-delta).sqrt() / 2.0;
        // |1 + λ²| / (1 + |λ|²) with λ = re + j·im
        let sq_re = 1.0 + re * re - im * im;
        let sq_im = 2.0 * re * im;
        let g = sq_re.hypot(sq_im) / (1.0 + re * re + im * im);
        (
            [Eigenvalue { re, im }, Eigenvalue { re, im: -im }],
            k1 / 2.0,
            Some(condition_from_overlap(g)),
        )
    } else {
        let re = -k1 / 2.0;
        ([Eigenvalue { re, im: 0.0 }; 2], k1 / 2.0, None)
    };

    LinearizationReport {
        a,
        eigenvalues,
        rho,
        delta,
        hurwitz: eigenvalues.iter().all(|l| l.re < 0.0),
        c_bound,
    }
}

/// Condition number of a 2-column matrix of unit vectors whose inner
/// product has modulus `g`: singular values are `√(1 ± g)`.
fn condition_from_overlap(g: f64) -> f64 {
    ((1.0 + g) / (1.0 - g)).sqrt()
}

/// Plateau angle `arccos(−k2/vc)` held while the robot closes in at `ḋ = −k2`.
pub fn approach_angle(p: &ControllerParams) -> Result<f64> {
    if p.k2 >= p.vc {
        return Err(Error::UndefinedAngle(format!(
            "approach angle needs k2 < vc (k2 = {}, vc = {})",
            p.k2, p.vc
        )));
    }
    Ok((-p.k2 / p.vc).acos())
}

/// Angle `arccos(ṙ/vc)` at which `ḋ = ṙ`.
pub fn tracking_angle(vc: f64, r_dot: f64) -> Result<f64> {
    let c = r_dot / vc;
    if !(c.abs() <= 1.0) {
        return Err(Error::UndefinedAngle(format!(
            "|r_dot| = {} exceeds vc = {vc}",
            r_dot.abs()
        )));
    }
    Ok(c.acos())
}

/// `∫₀^e sat(τ/k3) dτ`, an even function of `e`.
pub fn sat_integral(e: f64, k3: f64) -> f64 {
    let a = e.abs();
    if a <= k3 {
        a * a / (2.0 * k3)
    } else {
        k3 / 2.0 + (a - k3)
    }
}

/// `V3 = k1·k2·∫_{rc}^{x1} sat((τ − rc)/k3) dτ + x2²/2` for a constant radius.
pub fn lyapunov_v3(x1: f64, x2: f64, rc: f64, p: &ControllerParams) -> f64 {
    p.k1 * p.k2 * sat_integral(x1 - rc, p.k3) + 0.5 * x2 * x2
}

/// `V4 = (k2³/k3)·(∫_r^d sat((τ − r)/k3) dτ + ∫_d^r sat((r − τ)/k3) dτ) + e2²/2`.
///
/// The two integrals coincide, each equal to `sat_integral(d − r, k3)`.
pub fn lyapunov_v4(d: f64, r: f64, e2: f64, p: &ControllerParams) -> f64 {
    let w = p.k2.powi(3) / p.k3;
    w * 2.0 * sat_integral(d - r, p.k3) + 0.5 * e2 * e2
}

/// Least-squares slope of `ln ‖z‖` against `t`, negated.
///
/// Uses the samples with `t ≥ t_start` up to (excluding) the first one with
/// `‖z‖ < floor`.
pub fn fit_decay_rate_series(samples: &[(f64, f64)], t_start: f64, floor: f64) -> Result<f64> {
    const MIN_SAMPLES: usize = 50;
    let window: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .skip_while(|&(t, _)| t < t_start)
        .take_while(|&(_, n)| n >= floor && n > 0.0)
        .map(|(t, n)| (t, n.ln()))
        .collect();
    if window.len() < MIN_SAMPLES {
        return Err(Error::WindowTooShort {
            samples: window.len(),
            required: MIN_SAMPLES,
        });
    }
    let n = window.len() as f64;
    let mean_t = window.iter().map(|w| w.0).sum::<f64>() / n;
    let mean_y = window.iter().map(|w| w.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, y) in &window {
        sxy += (t - mean_t) * (y - mean_y);
        sxx += (t - mean_t) * (t - mean_t);
    }
    Ok(-sxy / sxx)
}

/// Ground-truth error norms `(t, ‖z‖)` along a log.
pub fn error_norms(log: &TrajectoryLog) -> Vec<(f64, f64)> {
    let vc = log.params.vc;
    log.records
        .iter()
        .map(|rec| {
            let z1 = rec.d_true - rec.r;
            let z2 = vc * rec.phi.cos() - rec.r_dot;
            (rec.t, z1.hypot(z2))
        })
        .collect()
}

/// Fitted exponential decay rate of `‖z‖` from `t_start` until it drops
/// below `floor`.
pub fn fit_decay_rate(log: &TrajectoryLog, t_start: f64, floor: f64) -> Result<f64> {
    fit_decay_rate_series(&error_norms(log), t_start, floor)
}

/// Earliest logged time after which `|d − r| < k3` for the rest of the log.
pub fn linear_band_entry(log: &TrajectoryLog) -> Option<f64> {
    let k3 = log.params.k3;
    let last_out = log
        .records
        .iter()
        .rposition(|rec| (rec.d_true - rec.r).abs() >= k3);
    match last_out {
        None => log.records.first().map(|r| r.t),
        Some(i) => log.records.get(i + 1).map(|r| r.t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    /// Band around the plateau angle (rad).
    pub angle_tol: f64,
    /// How long the angle must stay in the band (s).
    pub dwell: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            angle_tol: 0.02,
            dwell: 1.0,
        }
    }
}

/// Milestones of a constant-radius approach.
///
/// * `t1`: `φ` enters `[0, π]`.
/// * `t2`: `φ` rises through `π/2`.
/// * `t3`: `φ` settles on the plateau `arccos(−k2/vc)`.
/// * `t4`: `d` falls through `rc + k3`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseReport {
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub t3: Option<f64>,
    pub t4: Option<f64>,
    pub plateau_angle: Option<f64>,
    /// Mean true `ḋ` over `[t3, t4]`.
    pub plateau_mean_d_dot: Option<f64>,
    /// Largest `|φ − plateau_angle|` over `[t3, t4]`.
    pub plateau_max_angle_dev: Option<f64>,
}

fn interpolate(t0: f64, y0: f64, t1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        t1
    } else {
        t0 + (level - y0) / (y1 - y0) * (t1 - t0)
    }
}

pub fn detect_phases(
    log: &TrajectoryLog,
    p: &ControllerParams,
    rc: f64,
    cfg: &PhaseConfig,
) -> PhaseReport {
    let recs = &log.records;
    let mut report = PhaseReport::default();
    if recs.is_empty() {
        return report;
    }
    let in_half = |phi: f64| (0.0..=PI).contains(&phi);

    // t1
    let i1 = if in_half(recs[0].phi) {
        report.t1 = Some(recs[0].t);
        Some(0)
    } else {
        let found = (1..recs.len()).find(|&i| in_half(recs[i].phi));
        if let Some(i) = found {
            let (a, b) = (&recs[i - 1], &recs[i]);
            // interpolate only across the φ = 0 crossing, not across the ±π wrap
            report.t1 = Some(if a.phi < 0.0 && a.phi > -FRAC_PI_2 {
                interpolate(a.t, a.phi, b.t, b.phi, 0.0)
            } else {
                b.t
            });
        }
        found
    };
    let Some(i1) = i1 else {
        return report;
    };

    // t2, armed only after φ has been clearly below π/2
    let mut armed = false;
    let mut i2 = None;
    for i in i1..recs.len() {
        if recs[i].phi < FRAC_PI_2 - cfg.angle_tol {
            armed = true;
        }
        if armed && i > 0 && recs[i - 1].phi < FRAC_PI_2 && recs[i].phi >= FRAC_PI_2 {
            let (a, b) = (&recs[i - 1], &recs[i]);
            report.t2 = Some(interpolate(a.t, a.phi, b.t, b.phi, FRAC_PI_2));
            i2 = Some(i);
            break;
        }
    }

    // t3
    let mut i3 = None;
    if let (Ok(plateau), Some(i2)) = (approach_angle(p), i2) {
        report.plateau_angle = Some(plateau);
        let mut start: Option<usize> = None;
        for i in i2..recs.len() {
            if (recs[i].phi - plateau).abs() < cfg.angle_tol {
                let s = *start.get_or_insert(i);
                if recs[i].t - recs[s].t >= cfg.dwell {
                    i3 = Some(s);
                    break;
                }
            } else {
                start = None;
            }
        }
        report.t3 = i3.map(|i| recs[i].t);
    }

    // t4
    let level = rc + p.k3;
    let from = i3.unwrap_or(i1).max(1);
    let mut i4 = None;
    for i in from..recs.len() {
        if recs[i - 1].d_true > level && recs[i].d_true <= level {
            let (a, b) = (&recs[i - 1], &recs[i]);
            report.t4 = Some(interpolate(a.t, a.d_true, b.t, b.d_true, level));
            i4 = Some(i);
            break;
        }
    }

    if let (Some(i3), Some(i4), Some(plateau)) = (i3, i4, report.plateau_angle) {
        let window = &recs[i3..i4];
        if !window.is_empty() {
            let n = window.len() as f64;
            report.plateau_mean_d_dot =
                Some(window.iter().map(|r| p.vc * r.phi.cos()).sum::<f64>() / n);
            report.plateau_max_angle_dev = Some(
                window
                    .iter()
                    .map(|r| (r.phi - plateau).abs())
                    .fold(0.0, f64::max),
            );
        }
    }
    report
}

/// Number of sign changes of `d − r` among samples with `from ≤ t ≤ to`.
/// Exact zeros carry the previous sign.
pub fn sign_changes(log: &TrajectoryLog, from: f64, to: f64) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for rec in log.window(from, to) {
        let e = rec.d_true - rec.r;
        if e == 0.0 {
            continue;
        }
        if last != 0.0 && e.signum() != last.signum() {
            count += 1;
        }
        last = e;
    }
    count
}

/// Earliest logged time after which `|d − r| < tol` for the rest of the log.
pub fn settle_time(log: &TrajectoryLog, tol: f64) -> Option<f64> {
    let recs = &log.records;
    match recs.iter().rposition(|rec| (rec.d_true - rec.r).abs() >= tol) {
        None => recs.first().map(|r| r.t),
        Some(i) => recs.get(i + 1).map(|r| r.t),
    }
}

/// Largest `|d − r|` over the last `fraction` of the log's duration.
pub fn steady_state_error(log: &TrajectoryLog, fraction: f64) -> Option<f64> {
    let t_end = log.last()?.t;
    let from = t_end * (1.0 - fraction);
    log.window(from, t_end)
        .map(|rec| (rec.d_true - rec.r).abs())
        .reduce(f64::max)
}

/// Positions of the most recent full turn around `center`, oldest first.
///
/// Walks back from the last record accumulating the bearing seen from
/// `center` until it has swept `2π`.
pub fn final_loop(records: &[Record], center: Point) -> Option<Vec<Point>> {
    let bearing = |r: &Record| (r.y - center.y).atan2(r.x - center.x);
    let last = records.last()?;
    let mut swept = 0.0;
    let mut prev = bearing(last);
    let mut pts = vec![Point::new(last.x, last.y)];
    for rec in records.iter().rev().skip(1) {
        let b = bearing(rec);
        let mut step = b - prev;
        if step > PI {
            step -= 2.0 * PI;
        } else if step < -PI {
            step += 2.0 * PI;
        }
        swept += step;
        prev = b;
        pts.push(Point::new(rec.x, rec.y));
        if swept.abs() >= 2.0 * PI {
            pts.reverse();
            return Some(pts);
        }
    }
    None
}

/// Even-odd test; points on an edge may go either way.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub phases: PhaseConfig,
    /// Lower cutoff on `‖z‖` for the decay fit.
    pub decay_floor: f64,
    /// Band `|d − r| < settle_tol` (m) that counts as settled.
    pub settle_tol: f64,
    /// Trailing fraction of the run used for the steady-state error.
    pub steady_fraction: f64,
    /// Trailing fraction of the run scanned for oscillation.
    pub tail_fraction: f64,
    /// Sign changes of `d − r` in the tail that flag an oscillation.
    pub oscillation_sign_changes: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            phases: PhaseConfig::default(),
            decay_floor: 1e-6,
            settle_tol: 1e-2,
            steady_fraction: 0.1,
            tail_fraction: 0.6,
            oscillation_sign_changes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub linearization: LinearizationReport,
    pub conditions: ConditionReport,
    /// Constant commands only.
    pub phases: Option<PhaseReport>,
    pub linear_band_entry: Option<f64>,
    pub decay_rate: Option<f64>,
    pub decay_fit_error: Option<String>,
    pub settle_time: Option<f64>,
    pub steady_state_error: Option<f64>,
    /// Sign changes of `d − r` over the trailing window.
    pub tail_sign_changes: usize,
    pub oscillation: bool,
}

/// Runs every diagnostic that applies to the log's command.
pub fn analyze(log: &TrajectoryLog, cfg: &AnalysisConfig) -> AnalysisReport {
    let phases = match log.command {
        RefCommand::Constant { rc } => Some(detect_phases(log, &log.params, rc, &cfg.phases)),
        _ => None,
    };
    let entry = linear_band_entry(log);
    let (decay_rate, decay_fit_error) = match entry {
        Some(t) => match fit_decay_rate(log, t, cfg.decay_floor) {
            Ok(rho) => (Some(rho), None),
            Err(e) => (None, Some(e.to_string())),
        },
        None => (None, Some("error never settles inside the linear band".into())),
    };
    let t_end = log.last().map_or(0.0, |r| r.t);
    let tail_sign_changes = sign_changes(log, t_end * (1.0 - cfg.tail_fraction), t_end);
    AnalysisReport {
        linearization: linearize(&log.params),
        conditions: log.conditions,
        phases,
        linear_band_entry: entry,
        decay_rate,
        decay_fit_error,
        settle_time: settle_time(log, cfg.settle_tol),
        steady_state_error: steady_state_error(log, cfg.steady_fraction),
        tail_sign_changes,
        oscillation: tail_sign_changes >= cfg.oscillation_sign_changes,
    }
}

/// Virtual range-rate command `s = −k2·sat(e1/k3) + ṙ`.
pub fn virtual_command(e1: f64, r_dot: f64, p: &ControllerParams) -> f64 {
    -p.k2 * sat(e1 / p.k3) + r_dot
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Complex, Matrix2};

    fn gains(k1: f64, k2: f64, k3: f64) -> ControllerParams {
        ControllerParams {
            k1,
            k2,
            k3,
            ..ControllerParams::table1()
        }
    }

    fn char_poly_residual(l: Eigenvalue, p: &ControllerParams) -> f64 {
        let z = Complex::new(l.re, l.im);
        (z * z + p.k1 * z + p.k1 * p.k2 / p.k3).norm()
    }

    fn nalgebra_eigs(a: [[f64; 2]; 2]) -> Vec<Complex<f64>> {
        let m = Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]);
        let mut v: Vec<_> = m.complex_eigenvalues().iter().copied().collect();
        v.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
        v
    }

    fn sorted(e: [Eigenvalue; 2]) -> Vec<Complex<f64>> {
        let mut v: Vec<_> = e.iter().map(|l| Complex::new(l.re, l.im)).collect();
        v.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
        v
    }

    #[test]
    fn linearize_table1() {
        let p = ControllerParams::table1();
        let rep = linearize(&p);
        assert_eq!(rep.a, [[0.0, 1.0], [-4.5, -20.0]]);
        assert_relative_eq!(rep.delta, 382.0, epsilon = 1e-12);
        assert_relative_eq!(rep.rho, (20.0 - 382f64.sqrt()) / 2.0, max_relative = 1e-12);
        assert!((rep.rho - 0.22759).abs() < 1e-5);
        assert!(rep.hurwitz);
        for l in rep.eigenvalues {
            assert!(char_poly_residual(l, &p) < 1e-12, "{}", char_poly_residual(l, &p));
        }
        for (ours, oracle) in sorted(rep.eigenvalues).iter().zip(nalgebra_eigs(rep.a)) {
            assert!((ours - oracle).norm() < 1e-10, "{ours} vs {oracle}");
        }
    }

    #[test]
    fn linearize_underdamped_and_defective() {
        let p = gains(1.0, 0.45, 0.1);
        let rep = linearize(&p);
        assert!(rep.delta < 0.0);
        assert_eq!(rep.rho, 0.5);
        assert!(rep.eigenvalues[0].im > 0.0);
        for (ours, oracle) in sorted(rep.eigenvalues).iter().zip(nalgebra_eigs(rep.a)) {
            assert!((ours - oracle).norm() < 1e-10);
        }

        // k1² = 4·k1·k2/k3 with k1 = 4, k2 = k3
        let p = gains(4.0, 0.45, 0.45);
        let rep = linearize(&p);
        assert_eq!(rep.delta, 0.0);
        assert_eq!(rep.rho, 2.0);
        assert_eq!(rep.c_bound, None);
    }

    #[test]
    fn condition_bound_matches_svd() {
        for p in [
            ControllerParams::table1(),
            ControllerParams::table2(),
            gains(1.0, 0.45, 0.1),
            gains(3.0, 0.2, 5.0),
        ] {
            let rep = linearize(&p);
            // unit eigenvectors (1, λ)/‖(1, λ)‖
            let col = |l: Eigenvalue| {
                let z = Complex::new(l.re, l.im);
                let n = (1.0 + z.norm_sqr()).sqrt();
                (Complex::new(1.0 / n, 0.0), z / n)
            };
            let (a0, a1) = col(rep.eigenvalues[0]);
            let (b0, b1) = col(rep.eigenvalues[1]);
            let q = nalgebra::Matrix2::new(a0, b0, a1, b1);
            let sv = q.singular_values();
            let cond = sv.max() / sv.min();
            assert_relative_eq!(rep.c_bound.unwrap(), cond, max_relative = 1e-9);
        }
    }

    #[test]
    fn approach_and_tracking_angles() {
        let p = ControllerParams::table1();
        assert_relative_eq!(approach_angle(&p).unwrap(), (-0.9f64).acos(), epsilon = 1e-15);
        assert!((approach_angle(&p).unwrap() - 2.6906).abs() < 1e-4);
        assert!(matches!(approach_angle(&gains(20.0, 0.6, 2.0)), Err(Error::UndefinedAngle(_))));
        assert!(approach_angle(&gains(20.0, 0.5, 2.0)).is_err());

        assert_eq!(tracking_angle(0.5, 0.0).unwrap(), FRAC_PI_2);
        assert_relative_eq!(tracking_angle(0.5, 0.36).unwrap(), 0.72f64.acos());
        assert_eq!(tracking_angle(0.5, -0.5).unwrap(), PI);
        assert!(tracking_angle(0.5, 0.51).is_err());
    }

    fn sat_integral_quadrature(e: f64, k3: f64) -> f64 {
        let n = 200_000;
        let h = e / n as f64;
        (0..n)
            .map(|i| sat((i as f64 + 0.5) * h / k3) * h)
            .sum()
    }

    #[test]
    fn lyapunov_values() {
        let p = ControllerParams::table1();
        assert_eq!(lyapunov_v3(2.0, 0.0, 2.0, &p), 0.0);
        // inside band: 9·(1/4)/(2·2)... k1k2 = 9, e = 1 → 9·1/4 = 2.25
        assert_relative_eq!(lyapunov_v3(3.0, 0.0, 2.0, &p), 2.25, epsilon = 1e-12);
        // outside: e = 5 → 9·(1 + 3) = 36, plus x2²/2
        assert_relative_eq!(lyapunov_v3(7.0, 0.2, 2.0, &p), 36.02, epsilon = 1e-12);
        assert_relative_eq!(lyapunov_v3(-3.0, 0.0, 2.0, &p), 36.0, epsilon = 1e-12);

        for &(e, k3) in &[(0.3, 2.0), (-1.7, 2.0), (5.0, 2.0), (-9.5, 0.5), (2.0, 2.0)] {
            assert_relative_eq!(sat_integral(e, k3), sat_integral_quadrature(e, k3), max_relative = 1e-9);
        }

        // V4 weight k2³/k3, both half-integrals
        let p = gains(20.0, 0.1, 2.0);
        assert_eq!(lyapunov_v4(20.0, 20.0, 0.0, &p), 0.0);
        let w = 0.001 / 2.0;
        assert_relative_eq!(lyapunov_v4(21.0, 20.0, 0.0, &p), w * 2.0 * 0.25, epsilon = 1e-15);
        assert_relative_eq!(lyapunov_v4(10.0, 20.0, 0.3, &p), w * 2.0 * 9.0 + 0.045, epsilon = 1e-15);
    }

    #[test]
    fn decay_fit_exact_exponential() {
        let s: Vec<_> = (0..2000).map(|i| {
            let t = i as f64 * 0.01;
            (t, 3.0 * (-0.3 * t).exp())
        }).collect();
        let rho = fit_decay_rate_series(&s, 0.0, 1e-6).unwrap();
        assert!((rho - 0.3).abs() < 1e-6, "{rho}");
    }

    #[test]
    fn decay_fit_two_modes() {
        let s: Vec<_> = (0..6000).map(|i| {
            let t = i as f64 * 0.01;
            (t, (-0.2 * t).exp() + (-5.0 * t).exp())
        }).collect();
        let rho = fit_decay_rate_series(&s, 3.0, 1e-6).unwrap();
        assert!((rho - 0.2).abs() < 0.02 * 0.2, "{rho}");
    }

    #[test]
    fn decay_fit_rejects_short_windows() {
        let s: Vec<_> = (0..100).map(|i| (i as f64, (-(i as f64)).exp())).collect();
        assert!(matches!(
            fit_decay_rate_series(&s, 0.0, 1e-6),
            Err(Error::WindowTooShort { .. })
        ));
        assert!(fit_decay_rate_series(&[], 0.0, 1e-6).is_err());
    }

    #[test]
    fn decay_fit_on_linear_error_dynamics() {
        // integrate ż = A z directly and recover the slow rate
        for p in [ControllerParams::table1(), ControllerParams::table2(), gains(6.0, 0.3, 1.0)] {
            let rep = linearize(&p);
            assert!(rep.delta > 0.0);
            let a = rep.a;
            let f = |z: [f64; 2]| [a[0][0] * z[0] + a[0][1] * z[1], a[1][0] * z[0] + a[1][1] * z[1]];
            let dt = 1e-3;
            let mut z = [1.0, 0.0];
            let mut samples = vec![(0.0, 1.0)];
            for k in 1..=400_000 {
                let add = |z: [f64; 2], d: [f64; 2], s: f64| [z[0] + s * d[0], z[1] + s * d[1]];
                let k1 = f(z);
                let k2 = f(add(z, k1, dt / 2.0));
                let k3 = f(add(z, k2, dt / 2.0));
                let k4 = f(add(z, k3, dt));
                for i in 0..2 {
                    z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                if k % 10 == 0 {
                    samples.push((k as f64 * dt, z[0].hypot(z[1])));
                }
            }
            // skip the fast mode
            let fast = -rep.eigenvalues[1].re;
            let rho = fit_decay_rate_series(&samples, 10.0 / fast + 1.0, 1e-9).unwrap();
            assert!((rho - rep.rho).abs() < 0.01 * rep.rho, "{rho} vs {}", rep.rho);
        }
    }

    fn synthetic_log(samples: &[(f64, f64, f64)], r: f64) -> TrajectoryLog {
        // (t, d, phi)
        let p = ControllerParams::table1();
        let records = samples
            .iter()
            .map(|&(t, d, phi)| Record {
                t,
                x: d,
                y: 0.0,
                theta: 0.0,
                d_true: d,
                d_meas: d,
                xi: 0.0,
                u: 0.0,
                r,
                r_dot: 0.0,
                e1: d - r,
                e2_true: 0.0,
                e2_filt: 0.0,
                phi,
                v: 0.0,
                clamp_d: false,
                clamp_alpha: false,
                clamp_u: false,
            })
            .collect();
        TrajectoryLog {
            params: p,
            command: RefCommand::Constant { rc: r },
            dt: 0.1,
            log_every: 1,
            conditions: ConditionReport::for_command(&p, &RefCommand::Constant { rc: r }),
            records,
        }
    }

    #[test]
    fn sign_change_and_settle_metrics() {
        let s: Vec<_> = (0..=1000)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, 2.0 + (-0.1 * t).exp() * (t).cos(), FRAC_PI_2)
            })
            .collect();
        let log = synthetic_log(&s, 2.0);
        // cos t changes sign near t = π/2 + kπ
        let expected = (0..40).filter(|k| {
            let t = FRAC_PI_2 + *k as f64 * PI;
            (40.0..=100.0).contains(&t)
        }).count();
        assert_eq!(sign_changes(&log, 40.0, 100.0), expected);

        let settle = settle_time(&log, 1e-2).unwrap();
        assert!(settle > 40.0 && settle < 47.0, "{settle}");
        assert!(steady_state_error(&log, 0.1).unwrap() < (-9.0f64).exp());

        let flat = synthetic_log(&[(0.0, 2.0, 0.0), (0.1, 2.0, 0.0)], 2.0);
        assert_eq!(sign_changes(&flat, 0.0, 1.0), 0);
        assert_eq!(settle_time(&flat, 1e-2), Some(0.0));
        let never = synthetic_log(&[(0.0, 5.0, 0.0), (0.1, 5.0, 0.0)], 2.0);
        assert_eq!(settle_time(&never, 1e-2), None);
        assert_eq!(linear_band_entry(&never), None);
    }

    #[test]
    fn phases_on_synthetic_approach() {
        let p = ControllerParams::table1();
        let plateau = approach_angle(&p).unwrap();
        // φ: −0.5 → rises through 0 at t = 1, π/2 at t = 2, holds the plateau
        // from t = 3; d falls through rc + k3 = 4 at t = 10
        let s: Vec<_> = (0..=200)
            .map(|i| {
                let t = i as f64 * 0.1;
                let phi = if t < 1.0 {
                    -0.5 + 0.5 * t
                } else if t < 2.0 {
                    (t - 1.0) * FRAC_PI_2
                } else if t < 3.0 {
                    FRAC_PI_2 + (t - 2.0) * (plateau - FRAC_PI_2)
                } else {
                    plateau
                };
                (t, 8.0 - 0.4 * t, phi)
            })
            .collect();
        let log = synthetic_log(&s, 2.0);
        let ph = detect_phases(&log, &p, 2.0, &PhaseConfig::default());
        assert_relative_eq!(ph.t1.unwrap(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(ph.t2.unwrap(), 2.0, epsilon = 1e-9);
        assert!((ph.t3.unwrap() - 3.0).abs() <= 0.1 + 1e-9, "{:?}", ph.t3);
        assert_relative_eq!(ph.t4.unwrap(), 10.0, epsilon = 1e-9);
        assert_relative_eq!(ph.plateau_mean_d_dot.unwrap(), -0.45, epsilon = 1e-9);
    }

    #[test]
    fn phases_absent_on_orbit() {
        let s: Vec<_> = (0..=500).map(|i| (i as f64 * 0.1, 2.0, FRAC_PI_2)).collect();
        let log = synthetic_log(&s, 2.0);
        let ph = detect_phases(&log, &ControllerParams::table1(), 2.0, &PhaseConfig::default());
        assert_eq!(ph.t1, Some(0.0));
        assert_eq!((ph.t2, ph.t3, ph.t4), (None, None, None));
        let never = synthetic_log(&[(0.0, 3.0, -1.0), (0.1, 3.0, -1.0)], 2.0);
        assert_eq!(detect_phases(&never, &ControllerParams::table1(), 2.0, &PhaseConfig::default()), PhaseReport::default());
    }

    #[test]
    fn loop_enclosure() {
        let center = Point::new(1.0, -1.0);
        let s: Vec<_> = (0..=3000)
            .map(|i| {
                let a = i as f64 * 0.01;
                let mut r = synthetic_log(&[(a, 0.0, 0.0)], 1.0).records[0];
                r.x = center.x + 3.0 * a.cos();
                r.y = center.y + 3.0 * a.sin();
                r
            })
            .collect();
        let lp = final_loop(&s, center).unwrap();
        // one turn at 0.01 rad per sample
        assert!((lp.len() as i64 - 630).abs() <= 2, "{}", lp.len());
        assert!(point_in_polygon(center, &lp));
        assert!(point_in_polygon(Point::new(3.5, -1.0), &lp));
        assert!(!point_in_polygon(Point::new(4.5, -1.0), &lp));
        assert!(final_loop(&s[..300], center).is_none());

        let square = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
        assert!(point_in_polygon(Point::new(0.5, 0.5), &square));
        assert!(!point_in_polygon(Point::new(1.5, 0.5), &square));
        assert!(!point_in_polygon(Point::new(0.5, -0.1), &square));
    }

    #[test]
    fn virtual_command_saturates() {
        let p = ControllerParams::table1();
        assert_eq!(virtual_command(0.0, 0.1, &p), 0.1);
        assert_relative_eq!(virtual_command(1.0, 0.0, &p), -0.225);
        assert_eq!(virtual_command(50.0, 0.0, &p), -0.45);
        assert_eq!(virtual_command(-50.0, 0.2, &p), 0.45 + 0.2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn char_poly_residual_small(k1 in 0.1..50.0f64, k2 in 0.01..1.0f64, k3 in 0.1..10.0f64) {
                let p = gains(k1, k2, k3);
                let rep = linearize(&p);
                prop_assert!(rep.hurwitz);
                for l in rep.eigenvalues {
                    prop_assert!(char_poly_residual(l, &p) < 1e-12 * (1.0 + k1 * k1),
                        "residual {}", char_poly_residual(l, &p));
                }
                prop_assert!(rep.rho > 0.0);
                if let Some(c) = rep.c_bound { prop_assert!(c >= 1.0); }
            }

            #[test]
            fn sat_integral_is_even_and_convex(e in -20.0..20.0f64, k3 in 0.1..5.0f64) {
                prop_assert_eq!(sat_integral(e, k3), sat_integral(-e, k3));
                prop_assert!(sat_integral(e, k3) >= 0.0);
                // derivative equals sat(e/k3)
                let h = 1e-6;
                let fd = (sat_integral(e + h, k3) - sat_integral(e - h, k3)) / (2.0 * h);
                prop_assert!((fd - sat(e / k3)).abs() < 1e-6);
            }
        }
    }
}
