//! Temporal fusion of per-view focal measurements.
//!
//! The state is `x = (fx, fy)` with identity transition and identity
//! observation, so prediction only inflates the covariance and each update
//! is a standard Kalman correction.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub x: Vector2<f64>,
    pub p: Matrix2<f64>,
    /// Number of updates applied.
    pub t: usize,
}

impl KalmanState {
    pub fn new(x: Vector2<f64>, p: Matrix2<f64>) -> Self {
        Self { x, p, t: 0 }
    }
}

fn is_diagonal(m: &Matrix2<f64>) -> bool {
    m[(0, 1)] == 0.0 && m[(1, 0)] == 0.0
}

/// `x` is unchanged, `P <- P + Q`.
pub fn predict(state: &KalmanState, q: &Matrix2<f64>) -> KalmanState {
    KalmanState {
        p: state.p + q,
        ..*state
    }
}

/// Kalman correction with measurement `z` and covariance `r`.
pub fn update(state: &KalmanState, z: Vector2<f64>, r: &Matrix2<f64>) -> Result<KalmanState> {
    if r.cholesky().is_none() {
        return Err(Error::InvalidParameter(format!("measurement covariance not positive definite: {r}")));
    }
    let (x, p) = if is_diagonal(&state.p) && is_diagonal(r) {
        let mut x = state.x;
        let mut p = state.p;
        for i in 0..2 {
            let k = state.p[(i, i)] / (state.p[(i, i)] + r[(i, i)]);
            x[i] = state.x[i] + k * (z[i] - state.x[i]);
            p[(i, i)] = (1.0 - k) * state.p[(i, i)];
        }
        (x, p)
    } else {
        let s = state.p + r;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular innovation covariance".into()))?;
        let k = state.p * s_inv;
        let p = (Matrix2::identity() - k) * state.p;
        (state.x + k * (z - state.x), (p + p.transpose()) * 0.5)
    };
    Ok(KalmanState { x, p, t: state.t + 1 })
}

/// Process and measurement noise parameters, relative to the first
/// accepted measurement `f0` (per axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSchedule {
    /// Process noise standard deviation, pixels.
    pub q_std_px: f64,
    /// Initial measurement standard deviation as a fraction of `f0`.
    pub r0_frac: f64,
    /// Measurement standard deviation floor as a fraction of `f0`.
    pub r_min_frac: f64,
    /// Multiplicative decay of R per accepted measurement.
    pub r_decay: f64,
    /// Scale R by `1 + reprojection RMS`.
    pub quality_weighting: bool,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            q_std_px: 0.01,
            r0_frac: 0.05,
            r_min_frac: 0.005,
            r_decay: 0.995,
            quality_weighting: true,
        }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.q_std_px >= 0.0
            && self.r0_frac > self.r_min_frac
            && self.r_min_frac > 0.0
            && self.r_decay > 0.0
            && self.r_decay <= 1.0;
        if !ok {
            return Err(Error::InvalidParameter(format!("bad noise schedule {self:?}")));
        }
        Ok(())
    }

    pub fn q(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal_element(self.q_std_px * self.q_std_px)
    }

    pub fn r0(&self, f0: Vector2<f64>) -> Matrix2<f64> {
        Matrix2::from_diagonal(&(f0 * self.r0_frac).component_mul(&(f0 * self.r0_frac)))
    }

    /// `R_t = max(R0 r_decay^t, R_min)`, optionally scaled by `1 + rms`.
    pub fn r_at(&self, f0: Vector2<f64>, t: usize, rms: f64) -> Matrix2<f64> {
        let decay = self.r_decay.powi(t as i32);
        let weight = if self.quality_weighting { 1.0 + rms.max(0.0) } else { 1.0 };
        let diag = Vector2::from_fn(|i, _| {
            let r0 = (self.r0_frac * f0[i]).powi(2);
            let rmin = (self.r_min_frac * f0[i]).powi(2);
            (r0 * decay).max(rmin) * weight
        });
        Matrix2::from_diagonal(&diag)
    }
}

/// One per-view focal measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub fx: f64,
    pub fy: f64,
    /// Reprojection RMS in pixels.
    pub quality: f64,
}

impl Measurement {
    pub fn z(&self) -> Vector2<f64> {
        Vector2::new(self.fx, self.fy)
    }
}

/// Filters a measurement sequence and returns every intermediate state.
///
/// The first measurement initializes the state with `P = R0`; each later one
/// is a predict followed by an update with `R_t`.
pub fn run_sequence(measurements: &[Measurement], schedule: &NoiseSchedule) -> Result<Vec<KalmanState>> {
    schedule.validate()?;
    let first = measurements
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty measurement sequence".into()))?;
    let f0 = first.z();
    let q = schedule.q();
    let mut state = KalmanState::new(f0, schedule.r0(f0));
    let mut out = Vec::with_capacity(measurements.len());
    out.push(state);
    for m in &measurements[1..] {
        let r = schedule.r_at(f0, state.t + 1, m.quality);
        state = update(&predict(&state, &q), m.z(), &r)?;
        out.push(state);
    }
    Ok(out)
}
