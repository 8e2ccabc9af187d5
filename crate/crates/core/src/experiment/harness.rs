//! Episode simulation and Monte Carlo aggregation.

use nalgebra::{Vector2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{acceleration, clamp_to_region, step_true_state, StateVector};
use crate::error::{Error, Result};
use crate::estimator::{stack, violated_features, Belief};
use crate::scheduler::{
    accuracy_term, bcs_schedule, confidence_bg_schedule, cost_bg_schedule, objective_value, random_schedule,
    voi_schedule, PolicyKind, ScheduleDecision,
};
use crate::seeding::mix;
use crate::sensing::{observe, place_fleet, reachable_set, Fleet, SensingAgent};

use super::config::{Scenario, SimConfig};

const FLEET_STREAM: u64 = 0xf1ee7;
const TRUTH_STREAM: u64 = 0x7207;
const POLICY_STREAM: u64 = 0x9011c7;

/// One row of `trace.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct QIRecord {
    pub qi: usize,
    pub policy: PolicyKind,
    pub run: usize,
    pub n_scheduled: usize,
    pub total_power: f64,
    /// Any feature above its requirement after the update.
    pub violated: bool,
    pub sq_error: f64,
    pub objective: f64,
    pub agents: Vec<usize>,
}

/// Per-interval facts that are not part of the trace.
#[derive(Clone, Debug, PartialEq)]
pub struct QiDiagnostics {
    pub prior_compliant: bool,
    pub reachable: usize,
    pub iterations_used: usize,
    pub truth: StateVector,
    pub estimate: Vector4<f64>,
    pub posterior_variances: Vector4<f64>,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub policy: PolicyKind,
    pub run: usize,
    pub fleet: Fleet,
    pub records: Vec<QIRecord>,
    pub diagnostics: Vec<QiDiagnostics>,
}

/// Fleet used by `run`: the configured one, or a placement drawn from the
/// run's fleet stream. Shared by every policy.
pub fn fleet_for_run(sc: &Scenario, run: usize) -> Fleet {
    match &sc.fixed_fleet {
        Some(f) => f.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(&[sc.base_seed, FLEET_STREAM, run as u64]));
            place_fleet(&sc.placement, &mut rng)
        }
    }
}

/// Seed of the policy-specific stream (measurement noise and random picks).
pub fn episode_seed(base_seed: u64, policy: PolicyKind, run: usize) -> u64 {
    mix(&[base_seed, POLICY_STREAM, policy.index(), run as u64])
}

/// Dispatches one interval's schedule.
pub fn schedule(
    policy: PolicyKind,
    prior: &Belief,
    reachable: &[&SensingAgent],
    sc: &Scenario,
    rng: &mut ChaCha8Rng,
) -> Result<ScheduleDecision> {
    let lp = &sc.link;
    match policy {
        PolicyKind::Voi => {
            voi_schedule(prior, reachable, &sc.requirements, sc.slots, lp, &sc.filter).map(|o| o.decision)
        }
        PolicyKind::CostBg => cost_bg_schedule(reachable, sc.slots, lp),
        PolicyKind::ConfidenceBg => confidence_bg_schedule(reachable, sc.slots, lp),
        PolicyKind::Random => random_schedule(reachable, sc.slots, lp, rng),
        PolicyKind::Bcs if sc.slots == 0 => Ok(ScheduleDecision::default()),
        PolicyKind::Bcs => bcs_schedule(reachable, lp),
    }
}

/// Simulates `qis` query intervals of one policy.
///
/// The true trajectory and fleet depend only on the base seed and `run`, so
/// every policy of a run faces the same world.
pub fn run_episode(cfg: &SimConfig, policy: PolicyKind, run: usize) -> Result<Episode> {
    let sc = cfg.scenario()?;
    run_scenario_episode(&sc, policy, run)
}

pub fn run_scenario_episode(sc: &Scenario, policy: PolicyKind, run: usize) -> Result<Episode> {
    let fleet = fleet_for_run(sc, run);
    let mut truth_rng = ChaCha8Rng::seed_from_u64(mix(&[sc.base_seed, TRUTH_STREAM, run as u64]));
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(sc.base_seed, policy, run));

    let mut belief = sc.initial.clone();
    let mut truth = sample_initial(&belief, &mut truth_rng)?;

    let mut records = Vec::with_capacity(sc.qis);
    let mut diagnostics = Vec::with_capacity(sc.qis);
    for n in 1..=sc.qis {
        let fail = |e: Error| annotate(e, policy, run, n);
        let (next, _) = step_true_state(&truth, n as u64, &sc.forces, &sc.process, &mut truth_rng).map_err(fail)?;
        let control = if sc.process.known_input {
            Some(estimated_accel(&belief, n, sc).map_err(fail)?)
        } else {
            None
        };
        truth = next;

        let prior = sc.filter.predict(&belief, &sc.process, control.as_ref());
        let prior_compliant = violated_features(&prior.cov, &sc.requirements).is_empty();

        let reachable_ids = reachable_set(&fleet, &truth.position());
        let reachable: Vec<&SensingAgent> = reachable_ids
            .iter()
            .map(|&id| fleet.agent(id).expect("reachable ids come from the fleet"))
            .collect();
        let mut decision = schedule(policy, &prior, &reachable, sc, &mut rng).map_err(fail)?;

        if decision.len() > sc.slots {
            return Err(fail(Error::ContractViolation(format!(
                "{} agents scheduled with {} slots",
                decision.len(),
                sc.slots
            ))));
        }
        if policy == PolicyKind::Voi && prior_compliant && !decision.is_empty() {
            return Err(fail(Error::ContractViolation(
                "compliant prior must not schedule any agent".into(),
            )));
        }
        for (id, p) in decision.scheduled.iter().zip(&decision.powers) {
            if *p > sc.power_budget_w {
                log::warn!("agent {id} needs {p:.3} W, above the {:.3} W budget", sc.power_budget_w);
            }
        }

        let picked: Vec<&SensingAgent> = decision
            .scheduled
            .iter()
            .map(|&id| fleet.agent(id).expect("scheduled ids come from the fleet"))
            .collect();
        let observations: Vec<Vector2<f64>> = picked.iter().map(|a| observe(a, &truth, &mut rng)).collect();
        let so = stack(&picked, &observations).map_err(fail)?;
        belief = sc.filter.update(&prior, &so).map_err(fail)?;

        decision.objective_accuracy_term = accuracy_term(&belief.cov, &sc.requirements);
        let objective = objective_value(&belief.cov, &decision, sc.alpha, &sc.requirements);
        records.push(QIRecord {
            qi: n,
            policy,
            run,
            n_scheduled: decision.len(),
            total_power: decision.total_power(),
            violated: !violated_features(&belief.cov, &sc.requirements).is_empty(),
            sq_error: (truth.0 - belief.mean).norm_squared(),
            objective,
            agents: decision.scheduled.clone(),
        });
        diagnostics.push(QiDiagnostics {
            prior_compliant,
            reachable: reachable_ids.len(),
            iterations_used: decision.iterations_used,
            truth,
            estimate: belief.mean,
            posterior_variances: belief.variances(),
        });
    }
    Ok(Episode {
        policy,
        run,
        fleet,
        records,
        diagnostics,
    })
}

fn annotate(e: Error, policy: PolicyKind, run: usize, qi: usize) -> Error {
    let where_ = format!("policy {policy}, run {run}, qi {qi}");
    match e {
        Error::ContractViolation(m) => Error::ContractViolation(format!("{where_}: {m}")),
        Error::Domain(m) => Error::Domain(format!("{where_}: {m}")),
        other => {
            log::error!("episode aborted at {where_}: {other}");
            other
        }
    }
}

fn sample_initial(b: &Belief, rng: &mut ChaCha8Rng) -> Result<StateVector> {
    let chol = nalgebra::Cholesky::new(b.cov + nalgebra::Matrix4::identity() * 1e-300)
        .ok_or_else(|| Error::Config("initial covariance is not positive semidefinite".into()))?;
    let z = Vector4::from_fn(|_, _| rand::Rng::sample(rng, rand_distr::StandardNormal));
    Ok(StateVector(b.mean + chol.l() * z))
}

/// Force-driven acceleration evaluated at the current estimate.
fn estimated_accel(b: &Belief, n: usize, sc: &Scenario) -> Result<Vector2<f64>> {
    let est = StateVector(b.mean);
    let pos = clamp_to_region(&est.position(), &sc.forces);
    let vel = est.velocity();
    acceleration(
        &StateVector::new(pos.x, pos.y, vel.x, vel.y),
        n as u64,
        &sc.forces,
        sc.process.step,
    )
}

/// Per-interval means across runs for one policy.
#[derive(Clone, Debug, PartialEq)]
pub struct QiAggregate {
    pub policy: PolicyKind,
    pub qi: usize,
    pub n_scheduled: f64,
    pub total_power: f64,
    pub violation_prob: f64,
    pub rmse: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateMetrics {
    pub per_qi: Vec<QiAggregate>,
    /// Mean over intervals of the per-interval RMSE, per policy.
    pub mrmse: Vec<(PolicyKind, f64)>,
}

impl AggregateMetrics {
    pub fn series(&self, policy: PolicyKind) -> impl Iterator<Item = &QiAggregate> {
        self.per_qi.iter().filter(move |a| a.policy == policy)
    }

    pub fn mrmse_of(&self, policy: PolicyKind) -> Option<f64> {
        self.mrmse.iter().find(|(p, _)| *p == policy).map(|(_, v)| *v)
    }

    /// Mean of a per-interval metric over `qi_range` (inclusive).
    pub fn window_mean(
        &self,
        policy: PolicyKind,
        qi_range: std::ops::RangeInclusive<usize>,
        metric: impl Fn(&QiAggregate) -> f64,
    ) -> f64 {
        let vals: Vec<f64> = self
            .series(policy)
            .filter(|a| qi_range.contains(&a.qi))
            .map(metric)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Aggregates records per policy and interval. `RMSE(n) = sqrt(mean_runs
/// sq_error(n))`; the violation probability is the fraction of runs with a
/// violated posterior.
pub fn aggregate(records: &[QIRecord]) -> AggregateMetrics {
    let mut policies: Vec<PolicyKind> = Vec::new();
    for r in records {
        if !policies.contains(&r.policy) {
            policies.push(r.policy);
        }
    }
    let mut per_qi = Vec::new();
    let mut mrmse = Vec::new();
    for policy in policies {
        let mut qis: Vec<usize> = records.iter().filter(|r| r.policy == policy).map(|r| r.qi).collect();
        qis.sort_unstable();
        qis.dedup();
        let mut rmse_sum = 0.0;
        for &qi in &qis {
            let rows: Vec<&QIRecord> = records.iter().filter(|r| r.policy == policy && r.qi == qi).collect();
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&QIRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            let agg = QiAggregate {
                policy,
                qi,
                n_scheduled: mean(&|r| r.n_scheduled as f64),
                total_power: mean(&|r| r.total_power),
                violation_prob: mean(&|r| f64::from(u8::from(r.violated))),
                rmse: mean(&|r| r.sq_error).sqrt(),
                objective: mean(&|r| r.objective),
            };
            rmse_sum += agg.rmse;
            per_qi.push(agg);
        }
        mrmse.push((policy, rmse_sum / qis.len().max(1) as f64));
    }
    AggregateMetrics { per_qi, mrmse }
}

#[derive(Clone, Debug)]
pub struct MonteCarlo {
    /// Ordered by policy (as requested), then run, then interval.
    pub records: Vec<QIRecord>,
    /// Fleet of each run, index = run.
    pub fleets: Vec<Fleet>,
    pub aggregate: AggregateMetrics,
}

/// Runs every `(policy, run)` episode and aggregates. Output order and
/// values do not depend on the number of worker threads.
pub fn run_monte_carlo(cfg: &SimConfig, policies: &[PolicyKind], runs: usize) -> Result<MonteCarlo> {
    if runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let sc = cfg.scenario()?;
    let jobs: Vec<(PolicyKind, usize)> = policies.iter().flat_map(|&p| (0..runs).map(move |r| (p, r))).collect();
    let work = |&(p, r): &(PolicyKind, usize)| run_scenario_episode(&sc, p, r).map(|e| e.records);

    #[cfg(feature = "parallel")]
    let episodes: Vec<Result<Vec<QIRecord>>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let episodes: Vec<Result<Vec<QIRecord>>> = jobs.iter().map(work).collect();

    let mut records = Vec::with_capacity(jobs.len() * sc.qis);
    for e in episodes {
        records.extend(e?);
    }
    let fleets = (0..runs).map(|r| fleet_for_run(&sc, r)).collect();
    let aggregate = aggregate(&records);
    Ok(MonteCarlo {
        records,
        fleets,
        aggregate,
    })
}
