//! Per-interval sensor scheduling.
//!
//! [`voi_schedule`] grows the scheduled set one agent at a time: it picks the
//! feature with the largest variance-to-requirement ratio among those some
//! available agent can measure, adds the most precise agent for that feature,
//! and recomputes the posterior covariance the stacked set would give. It
//! stops once every feature meets its requirement, the slots run out, or no
//! available agent can help a violated feature. The four benchmarks ignore
//! the belief and fill slots by a fixed ordering.

use std::cmp::Ordering;

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{required_tx_power, LinkParams};
use crate::dynamics::STATE_DIM;
use crate::error::{Error, Result};
use crate::estimator::{stack_model, violated_features, Belief, KalmanFilter, Requirements};
use crate::sensing::SensingAgent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Voi,
    CostBg,
    ConfidenceBg,
    Random,
    Bcs,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Voi,
        PolicyKind::CostBg,
        PolicyKind::ConfidenceBg,
        PolicyKind::Random,
        PolicyKind::Bcs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Voi => "voi",
            PolicyKind::CostBg => "cost_bg",
            PolicyKind::ConfidenceBg => "confidence_bg",
            PolicyKind::Random => "random",
            PolicyKind::Bcs => "bcs",
        }
    }

    /// Stable index used in seed derivation.
    pub fn index(self) -> u64 {
        self as u64
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown policy '{s}' (expected voi, cost_bg, confidence_bg, random or bcs)"
            ))
        })
    }
}

/// Schedule for one query interval.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScheduleDecision {
    /// Agent ids in the order they were picked.
    pub scheduled: Vec<usize>,
    /// Transmit power (W) of each scheduled agent, same order.
    pub powers: Vec<f64>,
    /// Hinge sum of variance ratios over features; filled in once the
    /// posterior is known.
    pub objective_accuracy_term: f64,
    /// Sum of transmit powers (W).
    pub objective_power_term: f64,
    pub iterations_used: usize,
}

impl ScheduleDecision {
    /// Assigns closed-form link powers to an ordered pick.
    pub fn with_powers(picked: &[&SensingAgent], lp: &LinkParams, iterations_used: usize) -> Result<Self> {
        let powers = picked
            .iter()
            .map(|a| required_tx_power(a.ap_distance, lp))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scheduled: picked.iter().map(|a| a.id).collect(),
            objective_power_term: powers.iter().sum(),
            powers,
            objective_accuracy_term: 0.0,
            iterations_used,
        })
    }

    pub fn total_power(&self) -> f64 {
        self.objective_power_term
    }

    pub fn len(&self) -> usize {
        self.scheduled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scheduled.is_empty()
    }
}

/// `Σ_k max(diag_k / ξ²_k - 1, 0)`.
pub fn accuracy_term(cov: &Matrix4<f64>, req: &Requirements) -> f64 {
    req.ratios(cov).iter().map(|r| (r - 1.0).max(0.0)).sum()
}

/// Weighted objective `(1 - α) accuracy + α power`. Reported, not optimized.
pub fn objective_value(
    posterior_cov: &Matrix4<f64>,
    decision: &ScheduleDecision,
    alpha: f64,
    req: &Requirements,
) -> f64 {
    (1.0 - alpha) * accuracy_term(posterior_cov, req) + alpha * decision.powers.iter().sum::<f64>()
}

/// Feature with the largest variance ratio among those measured by at least
/// one available agent. Ties go to the lowest index.
pub fn most_uncertain_feature(cov: &Matrix4<f64>, req: &Requirements, available: &[&SensingAgent]) -> Option<usize> {
    let ratios = req.ratios(cov);
    let mut best: Option<usize> = None;
    for k in 0..STATE_DIM {
        if !available.iter().any(|a| a.kind.measures(k)) {
            continue;
        }
        if best.is_none_or(|b| ratios[k] > ratios[b]) {
            best = Some(k);
        }
    }
    best
}

/// Most precise available agent for feature `k`; ties go to the agent nearer
/// the access point, then to the lower id.
pub fn best_agent_for_feature(k: usize, available: &[&SensingAgent]) -> Result<usize> {
    available
        .iter()
        .filter_map(|a| a.variance_of(k).map(|v| (v, *a)))
        .min_by(|(va, a), (vb, b)| {
            va.total_cmp(vb)
                .then(a.ap_distance.total_cmp(&b.ap_distance))
                .then(a.id.cmp(&b.id))
        })
        .map(|(_, a)| a.id)
        .ok_or_else(|| Error::ContractViolation(format!("no available agent measures feature {}", k + 1)))
}

/// One greedy pick.
#[derive(Clone, Debug, PartialEq)]
pub struct VoiStep {
    pub feature: usize,
    pub agent: usize,
    /// Ratio of the chosen feature before the pick.
    pub ratio: f64,
    /// Predicted posterior variances after the pick.
    pub variances: Vector4<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoiOutcome {
    pub decision: ScheduleDecision,
    /// Covariance the scheduled set would produce.
    pub posterior_cov: Matrix4<f64>,
    pub steps: Vec<VoiStep>,
}

/// Greedy value-of-information schedule for a predicted belief.
pub fn voi_schedule(
    prior: &Belief,
    reachable: &[&SensingAgent],
    req: &Requirements,
    slots: usize,
    lp: &LinkParams,
    filter: &KalmanFilter,
) -> Result<VoiOutcome> {
    let mut cov = prior.cov;
    let mut steps = Vec::new();
    let mut available: Vec<&SensingAgent> = reachable.to_vec();
    let mut picked: Vec<&SensingAgent> = Vec::new();

    while picked.len() < slots && !violated_features(&cov, req).is_empty() {
        let Some(feature) = most_uncertain_feature(&cov, req, &available) else {
            break;
        };
        let ratios = req.ratios(&cov);
        // Every measurable feature already complies: no pick can help.
        if ratios[feature] <= 1.0 {
            break;
        }
        let id = best_agent_for_feature(feature, &available)?;
        let pos = available
            .iter()
            .position(|a| a.id == id)
            .expect("picked from available");
        picked.push(available.remove(pos));

        cov = filter.posterior_cov(&prior.cov, &stack_model(&picked))?;
        steps.push(VoiStep {
            feature,
            agent: id,
            ratio: ratios[feature],
            variances: cov.diagonal(),
        });
    }

    let decision = ScheduleDecision::with_powers(&picked, lp, steps.len())?;
    Ok(VoiOutcome {
        decision,
        posterior_cov: cov,
        steps,
    })
}

fn take_sorted<F>(reachable: &[&SensingAgent], slots: usize, lp: &LinkParams, mut cmp: F) -> Result<ScheduleDecision>
where
    F: FnMut(&SensingAgent, &SensingAgent) -> Ordering,
{
    let mut sorted = reachable.to_vec();
    sorted.sort_by(|a, b| cmp(a, b).then(a.id.cmp(&b.id)));
    sorted.truncate(slots);
    ScheduleDecision::with_powers(&sorted, lp, 0)
}

/// The `min(C, |P|)` agents nearest the access point.
pub fn cost_bg_schedule(reachable: &[&SensingAgent], slots: usize, lp: &LinkParams) -> Result<ScheduleDecision> {
    take_sorted(reachable, slots, lp, |a, b| a.ap_distance.total_cmp(&b.ap_distance))
}

/// The `min(C, |P|)` agents with the smallest total measurement variance.
pub fn confidence_bg_schedule(reachable: &[&SensingAgent], slots: usize, lp: &LinkParams) -> Result<ScheduleDecision> {
    take_sorted(reachable, slots, lp, |a, b| {
        a.total_variance().total_cmp(&b.total_variance())
    })
}

/// `min(C, |P|)` agents drawn uniformly without replacement.
pub fn random_schedule<R: Rng + ?Sized>(
    reachable: &[&SensingAgent],
    slots: usize,
    lp: &LinkParams,
    rng: &mut R,
) -> Result<ScheduleDecision> {
    let amount = slots.min(reachable.len());
    let picked: Vec<&SensingAgent> = rand::seq::index::sample(rng, reachable.len(), amount)
        .into_iter()
        .map(|i| reachable[i])
        .collect();
    ScheduleDecision::with_powers(&picked, lp, 0)
}

/// The single most confident reachable agent.
pub fn bcs_schedule(reachable: &[&SensingAgent], lp: &LinkParams) -> Result<ScheduleDecision> {
    confidence_bg_schedule(reachable, 1, lp)
}
