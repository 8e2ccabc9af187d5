//! Sensing agents: placement, observation models and reachability.

use nalgebra::{Matrix2, Matrix2x4, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::StateVector;
use crate::error::{Error, Result};

/// Every agent reports a two-dimensional slice of the state.
pub const OBS_DIM: usize = 2;

/// Agents closer to the access point than this are treated as sitting at the
/// reference distance of the path-loss model.
pub const REFERENCE_DISTANCE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Position,
    Velocity,
}

impl SensorKind {
    /// Selector rows: `[I 0]` for position, `[0 I]` for velocity.
    pub fn obs_matrix(self) -> Matrix2x4<f64> {
        match self {
            SensorKind::Position => Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
            SensorKind::Velocity => Matrix2x4::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
        }
    }

    /// Zero-based feature indices this kind observes.
    pub fn features(self) -> [usize; 2] {
        match self {
            SensorKind::Position => [0, 1],
            SensorKind::Velocity => [2, 3],
        }
    }

    pub fn measures(self, feature: usize) -> bool {
        self.features().contains(&feature)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Position => "position",
            SensorKind::Velocity => "velocity",
        }
    }
}

impl std::str::FromStr for SensorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(SensorKind::Position),
            "velocity" => Ok(SensorKind::Velocity),
            other => Err(Error::Config(format!("unknown sensor kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensingAgent {
    /// 1-based, dense within a fleet.
    pub id: usize,
    pub kind: SensorKind,
    pub location: Vector2<f64>,
    pub meas_cov: Matrix2<f64>,
    /// Distance to the access point used by the link budget (m).
    pub ap_distance: f64,
}

impl SensingAgent {
    pub fn new(id: usize, kind: SensorKind, location: Vector2<f64>, variances: [f64; 2], ap: &Vector2<f64>) -> Self {
        Self {
            id,
            kind,
            location,
            meas_cov: Matrix2::from_diagonal(&Vector2::from(variances)),
            ap_distance: (location - ap).norm().max(REFERENCE_DISTANCE),
        }
    }

    pub fn obs_matrix(&self) -> Matrix2x4<f64> {
        self.kind.obs_matrix()
    }

    /// Measurement variance for a zero-based feature, if this agent measures it.
    pub fn variance_of(&self, feature: usize) -> Option<f64> {
        let idx = self.kind.features().iter().position(|&f| f == feature)?;
        Some(self.meas_cov[(idx, idx)])
    }

    /// Sum of measurement variances. Lower means more confident.
    pub fn total_variance(&self) -> f64 {
        self.meas_cov.trace()
    }
}

/// Explicit agent entry for config files and `fleet.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: SensorKind,
    pub x: f64,
    pub y: f64,
    pub variances: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fleet {
    pub agents: Vec<SensingAgent>,
    /// Sensing range (m).
    pub d_max: f64,
}

/// Placement parameters for a randomly drawn fleet.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub m_pos: usize,
    pub m_vel: usize,
    pub region_radius: f64,
    pub center: Vector2<f64>,
    pub pos_var_range: [f64; 2],
    pub vel_var_range: [f64; 2],
    pub d_max: f64,
}

impl Fleet {
    /// Builds a fleet from explicit entries; ids are assigned 1..=M in order.
    pub fn from_specs(specs: &[AgentSpec], d_max: f64, ap: &Vector2<f64>) -> Result<Self> {
        let agents = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if !(s.variances[0] > 0.0 && s.variances[1] > 0.0) {
                    return Err(Error::Config(format!(
                        "agent {} needs positive variances, got {:?}",
                        i + 1,
                        s.variances
                    )));
                }
                Ok(SensingAgent::new(
                    i + 1,
                    s.kind,
                    Vector2::new(s.x, s.y),
                    s.variances,
                    ap,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { agents, d_max })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Looks an agent up by its 1-based id.
    pub fn agent(&self, id: usize) -> Option<&SensingAgent> {
        id.checked_sub(1)
            .and_then(|i| self.agents.get(i))
            .filter(|a| a.id == id)
    }

    pub fn specs(&self) -> Vec<AgentSpec> {
        self.agents
            .iter()
            .map(|a| AgentSpec {
                kind: a.kind,
                x: a.location.x,
                y: a.location.y,
                variances: [a.meas_cov[(0, 0)], a.meas_cov[(1, 1)]],
            })
            .collect()
    }
}

/// Scatters `m_pos` position and `m_vel` velocity agents uniformly over the
/// disk. Each agent gets `diag(v, v)` with `v` uniform in its kind's range.
pub fn place_fleet<R: Rng + ?Sized>(p: &Placement, rng: &mut R) -> Fleet {
    let kinds =
        std::iter::repeat_n(SensorKind::Position, p.m_pos).chain(std::iter::repeat_n(SensorKind::Velocity, p.m_vel));
    let agents = kinds
        .enumerate()
        .map(|(i, kind)| {
            let r = p.region_radius * rng.random::<f64>().sqrt();
            let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let location = p.center + Vector2::new(r * theta.cos(), r * theta.sin());
            let [lo, hi] = match kind {
                SensorKind::Position => p.pos_var_range,
                SensorKind::Velocity => p.vel_var_range,
            };
            let v = lo + (hi - lo) * rng.random::<f64>();
            SensingAgent::new(i + 1, kind, location, [v, v], &p.center)
        })
        .collect();
    Fleet { agents, d_max: p.d_max }
}

/// `H s + w` with `w ~ N(0, meas_cov)`.
pub fn observe<R: Rng + ?Sized>(agent: &SensingAgent, s: &StateVector, rng: &mut R) -> Vector2<f64> {
    let chol = agent
        .meas_cov
        .cholesky()
        .expect("measurement covariance is positive definite");
    let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    agent.obs_matrix() * s.0 + chol.l() * z
}

/// Ids of agents within `d_max` of the tracked agent, in id order.
pub fn reachable_set(fleet: &Fleet, pa_position: &Vector2<f64>) -> Vec<usize> {
    fleet
        .agents
        .iter()
        .filter(|a| (a.location - pa_position).norm() <= fleet.d_max)
        .map(|a| a.id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_placement(m_pos: usize, m_vel: usize) -> Placement {
        Placement {
            m_pos,
            m_vel,
            region_radius: 25.0,
            center: Vector2::zeros(),
            pos_var_range: [0.01, 0.09],
            vel_var_range: [0.0025, 0.0225],
            d_max: 20.0,
        }
    }

    #[test]
    fn fleet_counts_and_ids() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fleet = place_fleet(&default_placement(30, 30), &mut rng);
        assert_eq!(fleet.len(), 60);
        let pos = fleet.agents.iter().filter(|a| a.kind == SensorKind::Position).count();
        assert_eq!(pos, 30);
        for (i, a) in fleet.agents.iter().enumerate() {
            assert_eq!(a.id, i + 1);
            assert!(a.location.norm() <= 25.0);
            let v = a.meas_cov[(0, 0)];
            assert_eq!(a.meas_cov, Matrix2::from_diagonal(&Vector2::new(v, v)));
            match a.kind {
                SensorKind::Position => assert!((0.01..=0.09).contains(&v)),
                SensorKind::Velocity => assert!((0.0025..=0.0225).contains(&v)),
            }
        }
        assert!(place_fleet(&default_placement(0, 0), &mut rng).is_empty());
    }

    #[test]
    fn placement_is_seeded() {
        let a = place_fleet(&default_placement(5, 5), &mut ChaCha8Rng::seed_from_u64(11));
        let b = place_fleet(&default_placement(5, 5), &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_observations_select_features() {
        let s = StateVector::new(3.0, 4.0, 1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (kind, want) in [(SensorKind::Position, [3.0, 4.0]), (SensorKind::Velocity, [1.0, 2.0])] {
            let agent = SensingAgent::new(1, kind, Vector2::zeros(), [1e-300, 1e-300], &Vector2::zeros());
            let o = observe(&agent, &s, &mut rng);
            assert!((o - Vector2::from(want)).norm() < 1e-100);
        }
    }

    #[test]
    fn observation_noise_statistics() {
        let agent = SensingAgent::new(
            1,
            SensorKind::Position,
            Vector2::zeros(),
            [0.04, 0.09],
            &Vector2::zeros(),
        );
        let s = StateVector::new(3.0, 4.0, 1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 10_000;
        let samples: Vec<_> = (0..draws).map(|_| observe(&agent, &s, &mut rng)).collect();
        let mean = samples.iter().sum::<Vector2<f64>>() / draws as f64;
        let cov = samples
            .iter()
            .map(|o| (o - mean) * (o - mean).transpose())
            .sum::<Matrix2<f64>>()
            / draws as f64;
        assert!((cov[(0, 0)] - 0.04).abs() / 0.04 < 0.1);
        assert!((cov[(1, 1)] - 0.09).abs() / 0.09 < 0.1);
        // Unbiased within 3 standard errors.
        assert!((mean.x - 3.0).abs() < 3.0 * (0.04f64 / draws as f64).sqrt());
        assert!((mean.y - 4.0).abs() < 3.0 * (0.09f64 / draws as f64).sqrt());
    }

    #[test]
    fn selectors_are_orthonormal() {
        let hp = SensorKind::Position.obs_matrix();
        let hv = SensorKind::Velocity.obs_matrix();
        assert_eq!(hp * hv.transpose(), Matrix2::zeros());
        assert_eq!(hp * hp.transpose(), Matrix2::identity());
        assert_eq!(hv * hv.transpose(), Matrix2::identity());
    }

    #[test]
    fn reachability_boundary() {
        let ap = Vector2::zeros();
        let specs = [
            AgentSpec {
                kind: SensorKind::Position,
                x: 19.99,
                y: 0.0,
                variances: [0.01, 0.01],
            },
            AgentSpec {
                kind: SensorKind::Velocity,
                x: 0.0,
                y: -20.01,
                variances: [0.01, 0.01],
            },
        ];
        let fleet = Fleet::from_specs(&specs, 20.0, &ap).unwrap();
        assert_eq!(reachable_set(&fleet, &Vector2::zeros()), vec![1]);
    }

    #[test]
    fn reachability_matches_distance_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let fleet = place_fleet(&default_placement(30, 30), &mut rng);
        let pa = Vector2::zeros();
        let mut brute = Vec::new();
        for a in &fleet.agents {
            let dx: f64 = a.location.x - pa.x;
            let dy: f64 = a.location.y - pa.y;
            if (dx * dx + dy * dy).sqrt() <= 20.0 {
                brute.push(a.id);
            }
        }
        assert_eq!(reachable_set(&fleet, &pa), brute);
    }

    #[test]
    fn ap_distance_floor() {
        let a = SensingAgent::new(
            1,
            SensorKind::Position,
            Vector2::new(0.3, 0.0),
            [0.1, 0.1],
            &Vector2::zeros(),
        );
        assert_eq!(a.ap_distance, REFERENCE_DISTANCE);
    }

    proptest! {
        #[test]
        fn reachable_set_is_monotone_in_range(seed in 0u64..500, d in 0.0f64..40.0, extra in 0.0f64..20.0, px in -25.0f64..25.0, py in -25.0f64..25.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fleet = place_fleet(&default_placement(10, 10), &mut rng);
            let pa = Vector2::new(px, py);
            fleet.d_max = d;
            let small = reachable_set(&fleet, &pa);
            fleet.d_max = d + extra;
            let large = reachable_set(&fleet, &pa);
            prop_assert!(small.iter().all(|id| large.contains(id)));
        }
    }
}
