//! Constant-velocity Kalman filter over box centroids.
//!
//! State `(cx, cy, vx, vy)` in pixels and pixels per frame. Only the centroid
//! is measured. The covariance update uses the Joseph form and is
//! symmetrized after every step.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use thiserror::Error;

use crate::image::Rect;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("box {0:?} has no area")]
    EmptyBox(Rect),
    #[error("invalid tracker parameter: {0}")]
    InvalidParam(String),
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

/// Noise and prior settings, all variances in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Per-frame process noise added to every state component.
    pub process_noise: f64,
    /// Centroid measurement noise per axis.
    pub measurement_noise: f64,
    pub initial_position_var: f64,
    pub initial_velocity_var: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            process_noise: 0.1,
            measurement_noise: 1.0,
            initial_position_var: 4.0,
            initial_velocity_var: 100.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackingError> {
        let fields = [
            ("process_noise", self.process_noise),
            ("measurement_noise", self.measurement_noise),
            ("initial_position_var", self.initial_position_var),
            ("initial_velocity_var", self.initial_velocity_var),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TrackingError::InvalidParam(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn initial_covariance(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(
            self.initial_position_var,
            self.initial_position_var,
            self.initial_velocity_var,
            self.initial_velocity_var,
        ))
    }

    fn q(&self) -> Matrix4<f64> {
        Matrix4::identity() * self.process_noise
    }

    fn r(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.measurement_noise
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub frame: usize,
    /// Width and height of the box the track was started from.
    pub size: (f64, f64),
    config: TrackerConfig,
}

fn transition() -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = 1.0;
    f[(1, 3)] = 1.0;
    f
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Starts a track at the box centroid with zero velocity.
pub fn init_track(
    b: Rect,
    frame: usize,
    config: TrackerConfig,
) -> Result<TrackState, TrackingError> {
    if b.w <= 0 || b.h <= 0 {
        return Err(TrackingError::EmptyBox(b));
    }
    config.validate()?;
    let (cx, cy) = b.center();
    Ok(TrackState {
        state: Vector4::new(cx, cy, 0.0, 0.0),
        covariance: config.initial_covariance(),
        frame,
        size: (b.w as f64, b.h as f64),
        config,
    })
}

impl TrackState {
    pub fn position(&self) -> (f64, f64) {
        (self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.state[2], self.state[3])
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Box of the original size centred on the current position, rounded
    /// outward to whole pixels.
    pub fn predicted_box(&self) -> Rect {
        let (cx, cy) = self.position();
        let (w, h) = self.size;
        let x0 = (cx - w / 2.0).floor() as i64;
        let y0 = (cy - h / 2.0).floor() as i64;
        let x1 = (cx + w / 2.0).ceil() as i64;
        let y1 = (cy + h / 2.0).ceil() as i64;
        Rect::new(x0, y0, (x1 - x0).max(1), (y1 - y0).max(1))
    }

    /// Propagates `frames` steps of constant velocity, adding the process
    /// noise once per step.
    pub fn predict(&self, frames: usize) -> TrackState {
        let f = transition();
        let q = self.config.q();
        let mut x = self.state;
        let mut p = self.covariance;
        for _ in 0..frames {
            x = f * x;
            p = symmetrize(&(f * p * f.transpose() + q));
        }
        TrackState {
            state: x,
            covariance: p,
            frame: self.frame + frames,
            ..self.clone()
        }
    }

    /// Corrects the state with a measured centroid.
    pub fn update(&self, measured: (f64, f64)) -> Result<TrackState, TrackingError> {
        let h = observation();
        let r = self.config.r();
        let p = self.covariance;
        let s = h * p * h.transpose() + r;
        let s_inv = s.try_inverse().ok_or(TrackingError::SingularInnovation)?;
        let k = p * h.transpose() * s_inv;
        let innovation = Vector2::new(measured.0, measured.1) - h * self.state;
        let x = self.state + k * innovation;
        let a = Matrix4::identity() - k * h;
        let p = symmetrize(&(a * p * a.transpose() + k * r * k.transpose()));
        Ok(TrackState {
            state: x,
            covariance: p,
            ..self.clone()
        })
    }
}
