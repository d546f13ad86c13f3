//! Washout filter `ξ(s) = h·s / (s + h) · d(s)` estimating the range rate.
//!
//! Realized as a first-order low-pass state `w` with `ẇ = h(d − w)` and
//! output `ξ = h(d − w)`. The state is advanced with the exact solution of
//! that ODE for an input that varies linearly between consecutive samples
//! (first-order hold). The update is unconditionally stable for any `h·dt`
//! and reproduces the slope of a ramp input exactly in steady state.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WashoutState {
    /// Filter gain `h` (1/s).
    pub h: f64,
    /// Low-pass state (m).
    pub w: f64,
    /// Raw filter output (m/s).
    pub xi: f64,
    /// Previous input sample, the start point of the hold segment.
    pub last_input: f64,
}

impl WashoutState {
    /// Starts the filter at rest on `d0`, so the first output is zero.
    pub fn init(h: f64, d0: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "washout gain must be > 0, got {h}"
            )));
        }
        Ok(Self {
            h,
            w: d0,
            xi: 0.0,
            last_input: d0,
        })
    }

    /// Feeds one measurement taken `dt` after the previous one and returns
    /// the new output.
    pub fn update(&mut self, d: f64, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let a = self.h * dt;
        let decay = (-a).exp();
        // 1 - e^{-a}, accurate for small a
        let gain = -(-a).exp_m1();
        let slope_weight = 1.0 - gain / a;
        self.w = decay * self.w + gain * self.last_input + slope_weight * (d - self.last_input);
        self.last_input = d;
        self.xi = self.h * (d - self.w);
        self.xi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn init_is_at_rest() {
        for (h, d0) in [(100.0, 5.0), (1.0, 0.0), (100.0, 2.0)] {
            let s = WashoutState::init(h, d0).unwrap();
            assert_eq!(s.w, d0);
            assert_eq!(s.xi, 0.0);
        }
        assert!(WashoutState::init(0.0, 1.0).is_err());
        assert!(WashoutState::init(-1.0, 1.0).is_err());
        assert!(WashoutState::init(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn rejects_dc_after_level_change() {
        for h in [1.0, 10.0, 100.0] {
            let dt = 0.01;
            let mut f = WashoutState::init(h, 4.9).unwrap();
            let steps = (20.0 / h / dt).ceil() as usize;
            let mut xi = 0.0;
            for _ in 0..steps.max(1) {
                xi = f.update(5.0, dt);
            }
            assert!(xi.abs() < 1e-6, "h={h}: xi={xi}");
        }
        let mut f = WashoutState::init(100.0, 5.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(f.update(5.0, 0.01), 0.0);
        }
    }

    #[test]
    fn ramp_slope_is_recovered() {
        // continuous steady state of hs/(s+h) on a ramp is the slope
        let (h, dt) = (100.0, 0.01);
        let mut f = WashoutState::init(h, 0.0).unwrap();
        for k in 1..=1000 {
            let t = k as f64 * dt;
            let xi = f.update(0.3 * t, dt);
            if t >= 0.1 {
                assert!((xi - 0.3).abs() < 0.01 * 0.3, "t={t}: xi={xi}");
            }
        }
    }

    #[test]
    fn sine_tracks_cosine() {
        // |H(j1)| = 100/sqrt(100^2+1), phase lead π/2 - atan(1/100): error ≈ 0.01
        let (h, dt) = (100.0, 0.01);
        let mut f = WashoutState::init(h, 2.0).unwrap();
        for k in 1..=3000 {
            let t = k as f64 * dt;
            let xi = f.update(2.0 + t.sin(), dt);
            if t > 0.5 {
                assert!((xi - t.cos()).abs() < 0.02, "t={t}: xi={xi}");
            }
        }
    }

    #[test]
    fn stable_for_large_gain_step() {
        // forward Euler diverges for h*dt > 2; the exact update must not
        let mut f = WashoutState::init(1000.0, 0.0).unwrap();
        for k in 0..500 {
            let xi = f.update((k as f64 * 0.37).sin(), 0.01);
            assert!(xi.is_finite() && xi.abs() < 1e3 * 2.0 / 0.01);
        }
        assert!(f.w.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn converges_to_derivative_as_gain_grows() {
        let dt = 1e-3;
        let sup_err = |h: f64| {
            let d = |t: f64| 3.0 + 0.5 * (0.8 * t).sin();
            let d_dot = |t: f64| 0.4 * (0.8 * t).cos();
            let mut f = WashoutState::init(h, d(0.0)).unwrap();
            // start on the true derivative to skip the startup transient
            f.w = d(0.0) - d_dot(0.0) / h;
            let mut worst: f64 = 0.0;
            for k in 1..=20_000 {
                let t = k as f64 * dt;
                let xi = f.update(d(t), dt);
                worst = worst.max((xi - d_dot(t)).abs());
            }
            worst
        };
        let errs: Vec<f64> = [5.0, 50.0, 500.0].iter().map(|&h| sup_err(h)).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] < 1e-3);
    }

    #[test]
    fn exponential_response_matches_closed_form() {
        // d(t) = e^{-t}: the FOH update is exact for linear segments, so the
        // residual against the analytic solution is second order in dt
        let (h, dt) = (4.0, 1e-3);
        let mut f = WashoutState::init(h, 1.0).unwrap();
        for k in 1..=3000 {
            let t = k as f64 * dt;
            let xi = f.update((-t).exp(), dt);
            // w' = h(d - w), w(0)=1: w = (h e^{-t} - e^{-ht}) / (h - 1)
            let w = (h * (-t).exp() - (-h * t).exp()) / (h - 1.0);
            assert_abs_diff_eq!(xi, h * ((-t).exp() - w), epsilon = 1e-5);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn update_is_linear(
                a in -3.0..3.0f64, b in -3.0..3.0f64,
                d1 in prop::collection::vec(-10.0..10.0f64, 1..40),
                d2 in prop::collection::vec(-10.0..10.0f64, 1..40),
                w1 in -5.0..5.0f64, w2 in -5.0..5.0f64,
                h in 0.1..200.0f64,
            ) {
                let n = d1.len().min(d2.len());
                let dt = 0.01;
                let mut f1 = WashoutState::init(h, w1).unwrap();
                let mut f2 = WashoutState::init(h, w2).unwrap();
                let mut fc = WashoutState::init(h, a * w1 + b * w2).unwrap();
                for k in 0..n {
                    let x1 = f1.update(d1[k], dt);
                    let x2 = f2.update(d2[k], dt);
                    let xc = fc.update(a * d1[k] + b * d2[k], dt);
                    let expected = a * x1 + b * x2;
                    let scale = 1.0 + h * 40.0;
                    prop_assert!((xc - expected).abs() <= 1e-12 * scale,
                        "step {k}: {xc} vs {expected}");
                    prop_assert!((fc.w - (a * f1.w + b * f2.w)).abs() <= 1e-12 * 40.0);
                }
            }
        }
    }
}
