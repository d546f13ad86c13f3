//! Reference distance commands.
//!
//! A command is an analytic, twice-differentiable function of time. Its
//! derivatives are evaluated in closed form so the controller never sees
//! numerical-difference noise from the reference itself.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reference triple `(r, r_dot, r_ddot)` at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefSample {
    pub r: f64,
    pub r_dot: f64,
    pub r_ddot: f64,
}

impl RefSample {
    /// Sample of a constant command; both derivatives are exactly zero.
    pub fn constant(r: f64) -> Self {
        Self {
            r,
            r_dot: 0.0,
            r_ddot: 0.0,
        }
    }
}

/// A smooth reference distance command.
///
/// Serialized as a tagged object, e.g.
/// `{"type":"sinusoid","offset":20,"amplitude":1.8,"omega":0.2,"phase":0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RefCommand {
    Constant {
        rc: f64,
    },
    /// `offset + amplitude * sin(omega * t + phase)`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    Sum {
        terms: Vec<RefCommand>,
    },
}

impl RefCommand {
    pub fn constant(rc: f64) -> Result<Self> {
        let cmd = RefCommand::Constant { rc };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn sinusoid(offset: f64, amplitude: f64, omega: f64, phase: f64) -> Result<Self> {
        let cmd = RefCommand::Sinusoid {
            offset,
            amplitude,
            omega,
            phase,
        };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn sum(terms: Vec<RefCommand>) -> Result<Self> {
        let cmd = RefCommand::Sum { terms };
        cmd.validate()?;
        Ok(cmd)
    }

    /// Checks that every field is finite and that the command stays
    /// strictly positive for all time.
    ///
    /// Members of a `Sum` are not required to be positive on their own; only
    /// the total is. The positivity test for a `Sum` uses the lower bound
    /// `sum(offsets) - sum(|amplitudes|)`, which is conservative when the
    /// member frequencies can never align their troughs.
    pub fn validate(&self) -> Result<()> {
        self.check_finite()?;
        if let RefCommand::Sum { terms } = self {
            if terms.is_empty() {
                return Err(Error::InvalidCommand("sum has no terms".into()));
            }
        }
        let floor = self.lower_bound();
        if floor <= 0.0 {
            return Err(Error::InvalidCommand(format!(
                "command can reach a non-positive distance (lower bound {floor})"
            )));
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        let ok = match self {
            RefCommand::Constant { rc } => rc.is_finite(),
            RefCommand::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => [offset, amplitude, omega, phase].iter().all(|v| v.is_finite()),
            RefCommand::Sum { terms } => {
                for term in terms {
                    term.check_finite()?;
                }
                true
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCommand("non-finite field".into()))
        }
    }

    fn lower_bound(&self) -> f64 {
        match self {
            RefCommand::Constant { rc } => *rc,
            RefCommand::Sinusoid {
                offset, amplitude, ..
            } => offset - amplitude.abs(),
            RefCommand::Sum { terms } => terms.iter().map(RefCommand::lower_bound).sum(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, RefCommand::Constant { .. })
    }

    /// Evaluates the command and its exact first and second derivatives.
    pub fn eval(&self, t: f64) -> RefSample {
        match self {
            RefCommand::Constant { rc } => RefSample::constant(*rc),
            RefCommand::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => {
                let (s, c) = (omega * t + phase).sin_cos();
                RefSample {
                    r: offset + amplitude * s,
                    r_dot: amplitude * omega * c,
                    r_ddot: -amplitude * omega * omega * s,
                }
            }
            RefCommand::Sum { terms } => terms.iter().fold(
                RefSample {
                    r: 0.0,
                    r_dot: 0.0,
                    r_ddot: 0.0,
                },
                |acc, term| {
                    let s = term.eval(t);
                    RefSample {
                        r: acc.r + s.r,
                        r_dot: acc.r_dot + s.r_dot,
                        r_ddot: acc.r_ddot + s.r_ddot,
                    }
                },
            ),
        }
    }

    /// Sup-norm bounds `(rv, ra)` on the first and second derivatives.
    ///
    /// Exact for constants and single sinusoids. For a `Sum` the member
    /// bounds are added, which may overestimate when the member peaks never
    /// coincide; the gain conditions stay sufficient with a loose bound.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            RefCommand::Constant { .. } => (0.0, 0.0),
            RefCommand::Sinusoid {
                amplitude, omega, ..
            } => {
                let a = amplitude.abs();
                let w = omega.abs();
                (a * w, a * w * w)
            }
            RefCommand::Sum { terms } => terms.iter().fold((0.0, 0.0), |(rv, ra), term| {
                let (v, a) = term.bounds();
                (rv + v, ra + a)
            }),
        }
    }
}
