//! Ground-truth motion of the tracked agent and the linear process model the
//! filter runs on.
//!
//! The agent moves in a disk under a sinusoidal driving force plus a
//! velocity-scaled force that pulls it back toward the center as it nears the
//! edge. The filter does not see these forces; it runs a constant-velocity
//! model whose process noise is inflated by the mean-square driving
//! acceleration.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of state features: `[x, y, vx, vy]`.
pub const STATE_DIM: usize = 4;

/// Below this distance from the center the restoring force has no direction
/// and is taken as zero.
pub const CENTER_EPS: f64 = 1e-6;

/// The simulator keeps the agent strictly inside this fraction of the radius.
pub const CLAMP_FRACTION: f64 = 0.999;

/// Agent state ordered `[x, y, vx, vy]` (m, m, m/s, m/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector(pub Vector4<f64>);

impl StateVector {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self(Vector4::new(x, y, vx, vy))
    }

    pub fn zeros() -> Self {
        Self(Vector4::zeros())
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.0[0], self.0[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.0[2], self.0[3])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Driving and restoring force parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceConfig {
    /// Driving force amplitudes `[A_x, A_y]` (N).
    pub amp: [f64; 2],
    /// Driving frequencies `[f_x, f_y]` in cycles per query interval.
    pub freq: [f64; 2],
    /// Restoring gain (N). Negative values pull toward the center.
    pub restore_gain: f64,
    /// Region center (m). The access point sits here too.
    pub center: [f64; 2],
    /// Region radius (m).
    pub region_radius: f64,
    /// Agent mass (kg).
    pub mass: f64,
}

impl Default for ForceConfig {
    fn default() -> Self {
        Self {
            amp: [100.0, 100.0],
            freq: [0.005, 0.004],
            restore_gain: -50.0,
            center: [0.0, 0.0],
            region_radius: 25.0,
            mass: 100.0,
        }
    }
}

impl ForceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Config(format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.region_radius > 0.0) {
            return Err(Error::Config(format!(
                "region_radius must be > 0, got {}",
                self.region_radius
            )));
        }
        let all = self.amp.iter().chain(&self.freq).chain(&self.center);
        if all.chain([&self.restore_gain]).any(|v| !v.is_finite()) {
            return Err(Error::Config("force parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::from(self.center)
    }

    /// Mean-square acceleration of the strongest driving component.
    pub fn mean_square_accel(&self) -> f64 {
        let a_max = self.amp[0].abs().max(self.amp[1].abs());
        (a_max / self.mass).powi(2) / 2.0
    }
}

/// Parameters of the filter's process model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessConfig {
    /// Query interval duration T (s).
    pub step: f64,
    /// Position perturbation variance per axis (m²).
    pub sigma_sq_pos: f64,
    /// Velocity perturbation variance per axis ((m/s)²).
    pub sigma_sq_vel: f64,
    /// Feed the deterministic forces to the filter as a control input instead
    /// of absorbing them into the process noise.
    pub known_input: bool,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self {
            step: 0.2,
            sigma_sq_pos: 0.04,
            sigma_sq_vel: 0.01,
            known_input: false,
        }
    }
}

impl ProcessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step >= 0.0) || !self.step.is_finite() {
            return Err(Error::Config(format!("step must be >= 0, got {}", self.step)));
        }
        if !(self.sigma_sq_pos >= 0.0) || !(self.sigma_sq_vel >= 0.0) {
            return Err(Error::Config("process noise variances must be >= 0".into()));
        }
        Ok(())
    }
}

/// Linear process model `s(n) = P s(n-1) + u(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessModel {
    /// Constant-velocity transition `[[I, T I], [0, I]]`.
    pub transition: Matrix4<f64>,
    /// Mean of the process noise.
    pub noise_mean: Vector4<f64>,
    /// Covariance of the physical perturbations.
    pub noise_cov: Matrix4<f64>,
    /// Extra covariance standing in for the unmodeled forces. Zero when the
    /// forces are fed as a known input.
    pub input_cov: Matrix4<f64>,
    /// Query interval duration T (s).
    pub step: f64,
    pub known_input: bool,
}

impl ProcessModel {
    /// Covariance the filter adds on every prediction.
    pub fn effective_noise_cov(&self) -> Matrix4<f64> {
        self.noise_cov + self.input_cov
    }

    /// Maps an acceleration over one interval into the state:
    /// `[T²/2 I; T I]`.
    pub fn input_matrix(&self) -> nalgebra::Matrix4x2<f64> {
        input_matrix(self.step)
    }
}

fn input_matrix(step: f64) -> nalgebra::Matrix4x2<f64> {
    let half = step * step / 2.0;
    nalgebra::Matrix4x2::new(half, 0.0, 0.0, half, step, 0.0, 0.0, step)
}

/// `[A_x cos(2π f_x n), A_y cos(2π f_y n)]`.
pub fn driving_force(n: f64, cfg: &ForceConfig) -> Vector2<f64> {
    Vector2::new(
        cfg.amp[0] * (2.0 * PI * cfg.freq[0] * n).cos(),
        cfg.amp[1] * (2.0 * PI * cfg.freq[1] * n).cos(),
    )
}

/// Force along the outward radial unit vector scaled by the gain and by
/// `|v| / (R - d)`.
pub fn restoring_force(pos: &Vector2<f64>, vel: &Vector2<f64>, cfg: &ForceConfig) -> Result<Vector2<f64>> {
    let offset = pos - cfg.center();
    let distance = offset.norm();
    if !(distance < cfg.region_radius) {
        return Err(Error::DegenerateGeometry {
            distance,
            radius: cfg.region_radius,
        });
    }
    if distance < CENTER_EPS {
        return Ok(Vector2::zeros());
    }
    let scale = cfg.restore_gain * vel.norm() / (cfg.region_radius - distance);
    Ok(offset / distance * scale)
}

/// Pulls a position back to [`CLAMP_FRACTION`] of the radius if it got
/// further out.
pub fn clamp_to_region(pos: &Vector2<f64>, cfg: &ForceConfig) -> Vector2<f64> {
    let center = cfg.center();
    let offset = pos - center;
    let limit = CLAMP_FRACTION * cfg.region_radius;
    let distance = offset.norm();
    if distance > limit {
        center + offset * (limit / distance)
    } else {
        *pos
    }
}

/// Restoring force limited so that over one step of length `step` it can
/// at most mirror the outward radial velocity.
///
/// Near the rim `1/(R - d)` makes the raw force stiff enough that an explicit
/// step overshoots and pumps energy into the motion; the cap keeps
/// `|v + g T / m| <= |v|` for the restoring part.
pub fn saturated_restoring_force(
    pos: &Vector2<f64>,
    vel: &Vector2<f64>,
    cfg: &ForceConfig,
    step: f64,
) -> Result<Vector2<f64>> {
    let g = restoring_force(pos, vel, cfg)?;
    let magnitude = g.norm();
    if magnitude == 0.0 {
        return Ok(g);
    }
    let inward = g / magnitude;
    let closing = -vel.dot(&inward);
    let cap = (2.0 * cfg.mass * closing.max(0.0)) / step;
    Ok(if magnitude > cap { inward * cap } else { g })
}

/// Acceleration acting over interval `n`, from the driving force at `n - 1`
/// and the (saturated) restoring force at the current state.
pub fn acceleration(s: &StateVector, n: u64, cfg: &ForceConfig, step: f64) -> Result<Vector2<f64>> {
    let drive = driving_force(n.saturating_sub(1) as f64, cfg);
    let restore = saturated_restoring_force(&s.position(), &s.velocity(), cfg, step)?;
    Ok((drive + restore) / cfg.mass)
}

/// Advances the true state from `n - 1` to `n`.
///
/// Returns the new state and the acceleration that was applied.
pub fn step_true_state<R: Rng + ?Sized>(
    s: &StateVector,
    n: u64,
    cfg: &ForceConfig,
    model: &ProcessModel,
    rng: &mut R,
) -> Result<(StateVector, Vector2<f64>)> {
    if !s.is_finite() {
        return Err(Error::ContractViolation(format!("non-finite state {:?}", s.0)));
    }
    let pos = clamp_to_region(&s.position(), cfg);
    let vel = s.velocity();
    let clamped = StateVector::new(pos.x, pos.y, vel.x, vel.y);
    let accel = acceleration(&clamped, n, cfg, model.step)?;

    let t = model.step;
    let sd_pos = Vector2::new(model.noise_cov[(0, 0)], model.noise_cov[(1, 1)]).map(f64::sqrt);
    let sd_vel = Vector2::new(model.noise_cov[(2, 2)], model.noise_cov[(3, 3)]).map(f64::sqrt);
    let n_x = sample_diag(&sd_pos, rng);
    let n_v = sample_diag(&sd_vel, rng);

    let new_pos = pos + vel * t + accel * (t * t / 2.0) + n_x;
    let new_vel = vel + accel * t + n_v;
    Ok((StateVector::new(new_pos.x, new_pos.y, new_vel.x, new_vel.y), accel))
}

fn sample_diag<R: Rng + ?Sized>(sd: &Vector2<f64>, rng: &mut R) -> Vector2<f64> {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    Vector2::new(sd.x * a, sd.y * b)
}

/// Builds the constant-velocity process model.
///
/// Without `known_input` the driving acceleration is treated as zero-mean
/// white noise with variance [`ForceConfig::mean_square_accel`].
pub fn linearize(pc: &ProcessConfig, forces: &ForceConfig) -> Result<ProcessModel> {
    pc.validate()?;
    let t = pc.step;
    let mut transition = Matrix4::identity();
    transition[(0, 2)] = t;
    transition[(1, 3)] = t;

    let noise_cov = Matrix4::from_diagonal(&Vector4::new(
        pc.sigma_sq_pos,
        pc.sigma_sq_pos,
        pc.sigma_sq_vel,
        pc.sigma_sq_vel,
    ));
    let input_cov = if pc.known_input {
        Matrix4::zeros()
    } else {
        let b = input_matrix(t);
        b * Matrix2::identity() * forces.mean_square_accel() * b.transpose()
    };
    Ok(ProcessModel {
        transition,
        noise_mean: Vector4::zeros(),
        noise_cov,
        input_cov,
        step: t,
        known_input: pc.known_input,
    })
}
