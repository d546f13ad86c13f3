//! Range-only backstepping control law.
//!
//! ```text
//! u = vc·α/d + (k1·(ξ − ṙ + k2·sat((d − r)/k3)) − r̈) / (vc·α)
//! α = max(√max(vc² − ξ², 0) / vc, ε2),   d ← max(d, ε1)
//! ```
//!
//! `ξ` is the range-rate estimate and `α` stands in for `|sin φ|`, which the
//! robot cannot observe. With `r ≡ rc` the law reduces to
//! `u = vc·α/d + k1·(ξ + k2·sat((d − rc)/k3)) / (vc·α)`.

use serde::{Deserialize, Serialize};

use crate::signals::{RefCommand, RefSample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    /// Forward speed (m/s).
    pub vc: f64,
    /// Damping gain (1/s).
    pub k1: f64,
    /// Approach speed cap (m/s).
    pub k2: f64,
    /// Saturation width (m).
    pub k3: f64,
    /// Range floor (m).
    pub eps1: f64,
    /// Floor on `α`, in `(0, 1)`.
    pub eps2: f64,
    /// Optional bound on `|u|` (rad/s).
    #[serde(default)]
    pub u_max: Option<f64>,
}

impl ControllerParams {
    /// Gains of the constant-radius benchmark: vc = 0.5, k1 = 20, k2 = 0.45,
    /// k3 = 2, ε1 = ε2 = 0.01.
    pub fn table1() -> Self {
        Self {
            vc: 0.5,
            k1: 20.0,
            k2: 0.45,
            k3: 2.0,
            eps1: 0.01,
            eps2: 0.01,
            u_max: None,
        }
    }

    /// Low-gain set used with noisy ranges: k1 = 1, k2 = 0.25, k3 = 2.
    pub fn table2() -> Self {
        Self {
            vc: 0.5,
            k1: 1.0,
            k2: 0.25,
            k3: 2.0,
            eps1: 0.01,
            eps2: 0.01,
            u_max: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vc", self.vc),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.eps2 >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "eps2 must be < 1, got {}",
                self.eps2
            )));
        }
        if let Some(m) = self.u_max {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!("u_max must be > 0, got {m}")));
            }
        }
        Ok(())
    }
}

/// Intermediate quantities of one control evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlDiag {
    pub alpha: f64,
    /// Range actually used after the `ε1` floor.
    pub d_used: f64,
    /// `d_used − r`.
    pub e1: f64,
    /// `ξ − s`.
    pub e2: f64,
    /// Virtual command `s = −k2·sat(e1/k3) + ṙ`.
    pub s: f64,
    /// `e1 / k3`, before saturation.
    pub sat_arg: f64,
    pub clamped_d: bool,
    pub clamped_alpha: bool,
    pub clamped_u: bool,
}

pub fn sat(eta: f64) -> f64 {
    if eta.abs() < 1.0 {
        eta
    } else {
        eta.signum()
    }
}

/// `α = √max(vc² − ξ², 0) / vc`, floored at `eps2`.
pub fn compute_alpha(xi: f64, vc: f64, eps2: f64) -> f64 {
    alpha_with_flag(xi, vc, eps2).0
}

fn alpha_with_flag(xi: f64, vc: f64, eps2: f64) -> (f64, bool) {
    let raw = (vc * vc - xi * xi).max(0.0).sqrt() / vc;
    if raw <= eps2 {
        (eps2, true)
    } else {
        (raw, false)
    }
}

struct Prepared {
    d: f64,
    alpha: f64,
    sat_v: f64,
    diag: ControlDiag,
}

fn prepare(d_meas: f64, xi: f64, reference: &RefSample, p: &ControllerParams) -> Result<Prepared> {
    if !d_meas.is_finite() {
        return Err(Error::NonFinite("range measurement"));
    }
    if !xi.is_finite() {
        return Err(Error::NonFinite("range-rate estimate"));
    }
    if !(reference.r.is_finite() && reference.r_dot.is_finite() && reference.r_ddot.is_finite()) {
        return Err(Error::NonFinite("reference sample"));
    }
    let clamped_d = d_meas <= p.eps1;
    let d = if clamped_d { p.eps1 } else { d_meas };
    let (alpha, clamped_alpha) = alpha_with_flag(xi, p.vc, p.eps2);
    let e1 = d - reference.r;
    let sat_arg = e1 / p.k3;
    let sat_v = sat(sat_arg);
    let s = -p.k2 * sat_v + reference.r_dot;
    Ok(Prepared {
        d,
        alpha,
        sat_v,
        diag: ControlDiag {
            alpha,
            d_used: d,
            e1,
            e2: xi - s,
            s,
            sat_arg,
            clamped_d,
            clamped_alpha,
            clamped_u: false,
        },
    })
}

fn finish(u: f64, mut diag: ControlDiag, p: &ControllerParams) -> Result<(f64, ControlDiag)> {
    if !u.is_finite() {
        return Err(Error::NonFinite("control output"));
    }
    let u = match p.u_max {
        Some(m) if u.abs() > m => {
            diag.clamped_u = true;
            u.signum() * m
        }
        _ => u,
    };
    Ok((u, diag))
}

/// The general control law for a time-varying reference.
pub fn compute_u(
    d_meas: f64,
    xi: f64,
    reference: &RefSample,
    p: &ControllerParams,
) -> Result<(f64, ControlDiag)> {
    let pre = prepare(d_meas, xi, reference, p)?;
    let va = p.vc * pre.alpha;
    let inner = p.k1 * (xi - reference.r_dot + p.k2 * pre.sat_v) - reference.r_ddot;
    finish(va / pre.d + inner / va, pre.diag, p)
}

/// The law specialized to a constant radius `rc`.
///
/// Evaluates in the same operation order as [`compute_u`] so both agree
/// bit for bit on `(rc, 0, 0)`.
pub fn compute_u_constant(
    d_meas: f64,
    xi: f64,
    rc: f64,
    p: &ControllerParams,
) -> Result<(f64, ControlDiag)> {
    let pre = prepare(d_meas, xi, &RefSample::constant(rc), p)?;
    let va = p.vc * pre.alpha;
    let inner = p.k1 * (xi + p.k2 * pre.sat_v);
    finish(va / pre.d + inner / va, pre.diag, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: f64,
    pub diag: ControlDiag,
}

/// A steering law that sees only the range, its rate estimate and the
/// reference.
pub trait RangeOnlyController: Send + Sync {
    fn control(&self, d_meas: f64, xi: f64, reference: &RefSample, t: f64) -> Result<ControlOutput>;
}

/// The backstepping law, dispatching to the constant-radius form when the
/// command is a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backstepping {
    pub params: ControllerParams,
    constant_rc: Option<f64>,
}

impl Backstepping {
    pub fn new(params: ControllerParams) -> Self {
        Self {
            params,
            constant_rc: None,
        }
    }

    pub fn for_command(params: ControllerParams, command: &RefCommand) -> Self {
        let constant_rc = match command {
            RefCommand::Constant { rc } => Some(*rc),
            _ => None,
        };
        Self {
            params,
            constant_rc,
        }
    }
}

impl RangeOnlyController for Backstepping {
    fn control(&self, d_meas: f64, xi: f64, reference: &RefSample, _t: f64) -> Result<ControlOutput> {
        let (u, diag) = match self.constant_rc {
            Some(rc) => compute_u_constant(d_meas, xi, rc, &self.params)?,
            None => compute_u(d_meas, xi, reference, &self.params)?,
        };
        Ok(ControlOutput { u, diag })
    }
}

/// Gain conditions for a constant radius: `0 < k2 < vc` and `k3 = rc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantConditionReport {
    pub k2_below_vc: bool,
    pub k3_equals_rc: bool,
    pub pass: bool,
}

pub fn check_constant_conditions(p: &ControllerParams, rc: f64) -> ConstantConditionReport {
    let k2_below_vc = p.k2 > 0.0 && p.k2 < p.vc;
    let k3_equals_rc = (p.k3 - rc).abs() <= 1e-12 * rc.abs().max(1.0);
    ConstantConditionReport {
        k2_below_vc,
        k3_equals_rc,
        pass: k2_below_vc && k3_equals_rc,
    }
}

/// Gain conditions for a time-varying reference with `|ṙ| ≤ rv`, `|r̈| ≤ ra`:
/// `k1 > k2/k3`, `k1(vc − k2 − rv) > ra` and `k1(vc² − rv²) > rv·ra`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeVaryingConditionReport {
    pub rv: f64,
    pub ra: f64,
    pub damping_dominates: bool,
    pub speed_margin: bool,
    pub rate_margin: bool,
    pub pass: bool,
}

pub fn check_timevarying_conditions(
    p: &ControllerParams,
    rv: f64,
    ra: f64,
) -> TimeVaryingConditionReport {
    let damping_dominates = p.k1 > p.k2 / p.k3;
    let speed_margin = p.k1 * (p.vc - p.k2 - rv) > ra;
    let rate_margin = p.k1 * (p.vc * p.vc - rv * rv) > rv * ra;
    TimeVaryingConditionReport {
        rv,
        ra,
        damping_dominates,
        speed_margin,
        rate_margin,
        pass: damping_dominates && speed_margin && rate_margin,
    }
}

/// Whichever condition set applies to a command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionReport {
    Constant(ConstantConditionReport),
    TimeVarying(TimeVaryingConditionReport),
}

impl ConditionReport {
    pub fn for_command(p: &ControllerParams, command: &RefCommand) -> Self {
        match command {
            RefCommand::Constant { rc } => {
                ConditionReport::Constant(check_constant_conditions(p, *rc))
            }
            _ => {
                let (rv, ra) = command.bounds();
                ConditionReport::TimeVarying(check_timevarying_conditions(p, rv, ra))
            }
        }
    }

    pub fn pass(&self) -> bool {
        match self {
            ConditionReport::Constant(r) => r.pass,
            ConditionReport::TimeVarying(r) => r.pass,
        }
    }
}
