//! Gaussian belief of the twin: Kalman prediction, stacked multi-sensor
//! updates and the per-feature variance requirement.

use nalgebra::{DMatrix, DVector, Dyn, Matrix4, OMatrix, SymmetricEigen, Vector2, Vector4, U4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ProcessModel, STATE_DIM};
use crate::error::{Error, Result};
use crate::sensing::{SensingAgent, OBS_DIM};

/// Stacked observation matrix, one row per scalar measurement.
pub type ObsMatrix = OMatrix<f64, Dyn, U4>;
/// Gain mapping stacked innovations into the state.
pub type GainMatrix = OMatrix<f64, U4, Dyn>;

/// Innovation covariances above this condition number are refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl Belief {
    pub fn new(mean: Vector4<f64>, cov: Matrix4<f64>) -> Self {
        Self {
            mean,
            cov: symmetrize(&cov),
        }
    }

    pub fn variances(&self) -> Vector4<f64> {
        self.cov.diagonal()
    }
}

pub(crate) fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Required error variances ξ²_k per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Requirements {
    pub xi_sq: Vector4<f64>,
}

impl Requirements {
    pub fn new(xi_sq: Vector4<f64>) -> Result<Self> {
        if xi_sq.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(format!("required variances must be > 0, got {xi_sq:?}")));
        }
        Ok(Self { xi_sq })
    }

    pub fn pos_vel(pos: f64, vel: f64) -> Result<Self> {
        Self::new(Vector4::new(pos, pos, vel, vel))
    }

    /// `diag(cov)_k / ξ²_k` for every feature.
    pub fn ratios(&self, cov: &Matrix4<f64>) -> Vector4<f64> {
        cov.diagonal().component_div(&self.xi_sq)
    }
}

/// Requirement values as they appear in the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequirementConfig {
    pub xi_sq_pos: f64,
    pub xi_sq_vel: f64,
}

impl Default for RequirementConfig {
    fn default() -> Self {
        Self {
            xi_sq_pos: 0.015,
            xi_sq_vel: 0.005,
        }
    }
}

/// Observations of the scheduled agents, stacked in schedule order.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedObservation {
    pub h: ObsMatrix,
    pub cov: DMatrix<f64>,
    pub values: DVector<f64>,
    pub agent_order: Vec<usize>,
}

impl StackedObservation {
    pub fn empty() -> Self {
        Self {
            h: ObsMatrix::zeros(0),
            cov: DMatrix::zeros(0, 0),
            values: DVector::zeros(0),
            agent_order: Vec::new(),
        }
    }

    /// Builds from raw parts; `agent_order` is informational here.
    pub fn new(h: ObsMatrix, cov: DMatrix<f64>, values: DVector<f64>, agent_order: Vec<usize>) -> Result<Self> {
        let rows = h.nrows();
        if cov.shape() != (rows, rows) || values.len() != rows {
            return Err(Error::ContractViolation(format!(
                "stacked shapes disagree: h {}x{}, cov {:?}, values {}",
                rows,
                STATE_DIM,
                cov.shape(),
                values.len()
            )));
        }
        Ok(Self {
            h,
            cov,
            values,
            agent_order,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.h.nrows() == 0
    }
}

/// Vertically stacks `H_m`, block-diagonally stacks `C_w_m` and concatenates
/// the observations.
pub fn stack(scheduled: &[&SensingAgent], observations: &[Vector2<f64>]) -> Result<StackedObservation> {
    if scheduled.len() != observations.len() {
        return Err(Error::ContractViolation(format!(
            "{} agents but {} observations",
            scheduled.len(),
            observations.len()
        )));
    }
    let rows = OBS_DIM * scheduled.len();
    let mut h = ObsMatrix::zeros(rows);
    let mut cov = DMatrix::zeros(rows, rows);
    let mut values = DVector::zeros(rows);
    for (i, (agent, obs)) in scheduled.iter().zip(observations).enumerate() {
        let r = OBS_DIM * i;
        h.fixed_view_mut::<2, 4>(r, 0).copy_from(&agent.obs_matrix());
        cov.fixed_view_mut::<2, 2>(r, r).copy_from(&agent.meas_cov);
        values.fixed_rows_mut::<2>(r).copy_from(obs);
    }
    Ok(StackedObservation {
        h,
        cov,
        values,
        agent_order: scheduled.iter().map(|a| a.id).collect(),
    })
}

/// Stacked model for a candidate schedule, with placeholder values. Enough
/// for covariance prediction, which does not depend on what is observed.
pub fn stack_model(scheduled: &[&SensingAgent]) -> StackedObservation {
    let zeros = vec![Vector2::zeros(); scheduled.len()];
    stack(scheduled, &zeros).expect("lengths match by construction")
}

/// Kalman filter numerics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanFilter {
    /// Add `1e-12 I` to an ill-conditioned innovation covariance instead of
    /// failing.
    pub regularize: bool,
}

impl KalmanFilter {
    /// Blind update: `mean' = P mean + mu_u (+ B a)`, `cov' = P cov Pᵀ + C_u`.
    pub fn predict(&self, b: &Belief, pm: &ProcessModel, control: Option<&Vector2<f64>>) -> Belief {
        let mut mean = pm.transition * b.mean + pm.noise_mean;
        if let Some(accel) = control {
            mean += pm.input_matrix() * accel;
        }
        let cov = pm.transition * b.cov * pm.transition.transpose() + pm.effective_noise_cov();
        Belief::new(mean, cov)
    }

    /// `prior_cov Hᵀ S⁻¹` with `S = H prior_cov Hᵀ + C_w`.
    pub fn kalman_gain(&self, prior_cov: &Matrix4<f64>, so: &StackedObservation) -> Result<GainMatrix> {
        let rows = so.h.nrows();
        if rows == 0 {
            return Ok(GainMatrix::zeros(0));
        }
        let ph_t = prior_cov * so.h.transpose();
        let mut s = &so.h * &ph_t + &so.cov;
        s = (&s + s.transpose()) * 0.5;

        let condition = condition_number(&s);
        if !(condition <= MAX_CONDITION) {
            if !self.regularize {
                return Err(Error::SingularInnovation { condition });
            }
            for i in 0..rows {
                s[(i, i)] += 1e-12;
            }
        }
        let chol = s.cholesky().ok_or(Error::SingularInnovation { condition })?;
        // S symmetric: K = (S⁻¹ H P)ᵀ.
        let gain_t = chol.solve(&ph_t.transpose());
        Ok(gain_t.transpose())
    }

    /// Posterior covariance `(I - K H) prior_cov` without touching the mean.
    pub fn posterior_cov(&self, prior_cov: &Matrix4<f64>, so: &StackedObservation) -> Result<Matrix4<f64>> {
        if so.is_empty() {
            return Ok(*prior_cov);
        }
        let gain = self.kalman_gain(prior_cov, so)?;
        let ikh = Matrix4::identity() - &gain * &so.h;
        Ok(symmetrize(&(ikh * prior_cov)))
    }

    /// Measurement update of a predicted belief.
    pub fn update(&self, prior: &Belief, so: &StackedObservation) -> Result<Belief> {
        if so.is_empty() {
            return Ok(prior.clone());
        }
        let gain = self.kalman_gain(&prior.cov, so)?;
        let innovation = &so.values - &so.h * prior.mean;
        let mean = prior.mean + &gain * innovation;
        let ikh = Matrix4::identity() - &gain * &so.h;
        Ok(Belief::new(mean, ikh * prior.cov))
    }
}

fn condition_number(s: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(s.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn predict(b: &Belief, pm: &ProcessModel) -> Belief {
    KalmanFilter::default().predict(b, pm, None)
}

pub fn kalman_gain(prior_cov: &Matrix4<f64>, so: &StackedObservation) -> Result<GainMatrix> {
    KalmanFilter::default().kalman_gain(prior_cov, so)
}

pub fn update(prior: &Belief, so: &StackedObservation) -> Result<Belief> {
    KalmanFilter::default().update(prior, so)
}

/// Zero-based features whose variance exceeds the requirement. Equality is
/// compliant.
pub fn violated_features(cov: &Matrix4<f64>, req: &Requirements) -> Vec<usize> {
    (0..STATE_DIM).filter(|&k| cov[(k, k)] > req.xi_sq[k]).collect()
}
