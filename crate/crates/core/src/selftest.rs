//! Invariant checks runnable from the command line, and the brute-force
//! references they compare against.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{outage_probability_chunked, required_tx_power, LinkConfig};
use crate::dynamics::ProcessModel;
use crate::error::Result;
use crate::estimator::{Belief, KalmanFilter, ObsMatrix, Requirements, StackedObservation};
use crate::experiment::{run_monte_carlo, SimConfig};
use crate::scheduler::{voi_schedule, PolicyKind};
use crate::sensing::{SensingAgent, SensorKind};

/// A random linear-Gaussian system with its observations already drawn.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub model: ProcessModel,
    pub initial: Belief,
    /// Observations for steps `1..=len`; entries may be empty.
    pub steps: Vec<StackedObservation>,
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn spd<const N: usize>(rng: &mut impl Rng, floor: f64) -> nalgebra::SMatrix<f64, N, N> {
    let l = nalgebra::SMatrix::<f64, N, N>::from_fn(|_, _| normal(rng) * 0.5);
    l * l.transpose() + nalgebra::SMatrix::<f64, N, N>::identity() * floor
}

/// Draws a system with a mildly non-normal transition (spectral norm 1.02),
/// nonzero process-noise mean and up to `max_sensors` two-row sensors with
/// random observation matrices per step.
pub fn random_linear_system(seed: u64, steps: usize, max_sensors: usize) -> LinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Matrix4::identity();
    transition[(0, 2)] = 0.2;
    transition[(1, 3)] = 0.2;
    transition += Matrix4::from_fn(|_, _| normal(&mut rng) * 0.05);
    let norm = transition.singular_values().max();
    transition *= 1.02 / norm;

    let model = ProcessModel {
        transition,
        noise_mean: Vector4::from_fn(|_, _| normal(&mut rng) * 0.1),
        noise_cov: spd::<4>(&mut rng, 0.01),
        input_cov: Matrix4::zeros(),
        step: 0.2,
        known_input: false,
    };
    let initial = Belief::new(Vector4::from_fn(|_, _| normal(&mut rng) * 3.0), spd::<4>(&mut rng, 0.1));

    let init_chol = initial.cov.cholesky().expect("spd");
    let noise_chol = model.noise_cov.cholesky().expect("spd");
    let mut truth = initial.mean + init_chol.l() * Vector4::from_fn(|_, _| normal(&mut rng));
    let mut obs = Vec::with_capacity(steps);
    for _ in 0..steps {
        truth =
            model.transition * truth + model.noise_mean + noise_chol.l() * Vector4::from_fn(|_, _| normal(&mut rng));
        let count = rng.random_range(0..=max_sensors);
        let rows = 2 * count;
        let mut h = ObsMatrix::zeros(rows);
        let mut cov = DMatrix::zeros(rows, rows);
        let mut values = DVector::zeros(rows);
        for s in 0..count {
            let hs = nalgebra::Matrix2x4::from_fn(|_, _| normal(&mut rng));
            let rs: Matrix2<f64> = spd::<2>(&mut rng, 0.1);
            let w = rs.cholesky().expect("spd").l() * Vector2::new(normal(&mut rng), normal(&mut rng));
            h.fixed_view_mut::<2, 4>(2 * s, 0).copy_from(&hs);
            cov.fixed_view_mut::<2, 2>(2 * s, 2 * s).copy_from(&rs);
            values.fixed_rows_mut::<2>(2 * s).copy_from(&(hs * truth + w));
        }
        obs.push(StackedObservation::new(h, cov, values, (1..=count).collect()).expect("consistent shapes"));
    }
    LinearSystem {
        model,
        initial,
        steps: obs,
    }
}

/// Filtered beliefs from the Kalman recursion, one per step.
pub fn kalman_posteriors(sys: &LinearSystem) -> Result<Vec<Belief>> {
    let kf = KalmanFilter::default();
    let mut b = sys.initial.clone();
    let mut out = Vec::with_capacity(sys.steps.len());
    for so in &sys.steps {
        b = kf.update(&kf.predict(&b, &sys.model, None), so)?;
        out.push(b.clone());
    }
    Ok(out)
}

/// Filtered beliefs by conditioning the joint Gaussian of the current state
/// and every observation so far, with no recursion.
pub fn joint_gaussian_posteriors(sys: &LinearSystem) -> Vec<Belief> {
    let n_steps = sys.steps.len();
    let p = &sys.model.transition;
    let mut means = vec![sys.initial.mean];
    let mut covs = vec![sys.initial.cov];
    for k in 1..=n_steps {
        means.push(p * means[k - 1] + sys.model.noise_mean);
        covs.push(p * covs[k - 1] * p.transpose() + sys.model.noise_cov);
    }
    let mut powers = vec![Matrix4::identity()];
    for k in 1..=n_steps {
        powers.push(p * powers[k - 1]);
    }
    // Cov(s_i, s_j).
    let cross = |i: usize, j: usize| -> Matrix4<f64> {
        if i >= j {
            powers[i - j] * covs[j]
        } else {
            (powers[j - i] * covs[i]).transpose()
        }
    };

    // Observation rows in time order, tagged with their step.
    let mut offsets = vec![0usize];
    for so in &sys.steps {
        offsets.push(offsets.last().unwrap() + so.h.nrows());
    }
    let total = *offsets.last().unwrap();
    let mut c_oo = DMatrix::zeros(total, total);
    let mut resid = DVector::zeros(total);
    for j in 1..=n_steps {
        let sj = &sys.steps[j - 1];
        let rj = offsets[j - 1];
        resid
            .rows_mut(rj, sj.h.nrows())
            .copy_from(&(&sj.values - &sj.h * means[j]));
        for k in 1..=n_steps {
            let sk = &sys.steps[k - 1];
            let rk = offsets[k - 1];
            let mut block = &sj.h * cross(j, k) * sk.h.transpose();
            if j == k {
                block += &sj.cov;
            }
            c_oo.view_mut((rj, rk), (sj.h.nrows(), sk.h.nrows())).copy_from(&block);
        }
    }

    (1..=n_steps)
        .map(|n| {
            let d = offsets[n];
            if d == 0 {
                return Belief::new(means[n], covs[n]);
            }
            let mut c_so = DMatrix::zeros(4, d);
            for k in 1..=n {
                let sk = &sys.steps[k - 1];
                let block = cross(n, k) * sk.h.transpose();
                c_so.view_mut((0, offsets[k - 1]), (4, sk.h.nrows())).copy_from(&block);
            }
            let chol = c_oo
                .view((0, 0), (d, d))
                .into_owned()
                .cholesky()
                .expect("observation covariance is PD");
            let gain_t = chol.solve(&c_so.transpose());
            let mean = means[n] + (gain_t.transpose() * resid.rows(0, d)).fixed_rows::<4>(0).into_owned();
            let reduction = &c_so * &gain_t;
            let cov = covs[n] - Matrix4::from_fn(|i, j| reduction[(i, j)]);
            Belief::new(mean, cov)
        })
        .collect()
}

/// Largest per-step relative error (mean and covariance, Frobenius) between
/// the recursion and the joint conditioning.
pub fn kalman_oracle_error(sys: &LinearSystem) -> Result<f64> {
    let kf = kalman_posteriors(sys)?;
    let oracle = joint_gaussian_posteriors(sys);
    Ok(kf
        .iter()
        .zip(&oracle)
        .map(|(a, b)| {
            let m = (a.mean - b.mean).norm() / b.mean.norm();
            let c = (a.cov - b.cov).norm() / b.cov.norm();
            m.max(c)
        })
        .fold(0.0, f64::max))
}

/// Random scheduling instance: a predicted belief and a reachable set.
pub fn random_schedule_instance(seed: u64) -> (Belief, Vec<SensingAgent>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(0..=30);
    let agents = (1..=count)
        .map(|id| {
            let kind = if rng.random::<bool>() {
                SensorKind::Position
            } else {
                SensorKind::Velocity
            };
            let v = match kind {
                SensorKind::Position => rng.random_range(0.01..0.09),
                SensorKind::Velocity => rng.random_range(0.0025..0.0225),
            };
            let loc = Vector2::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0));
            SensingAgent::new(id, kind, loc, [v, v], &Vector2::zeros())
        })
        .collect();
    let scale = 10f64.powf(rng.random_range(-2.5..0.5));
    let cov = spd::<4>(&mut rng, 1e-4) * scale;
    let slots = rng.random_range(0..=12);
    (Belief::new(Vector4::zeros(), cov), agents, slots)
}

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the quick invariant suite.
pub fn run() -> Vec<Check> {
    let mut checks = Vec::new();

    let worst = (0..5)
        .map(|s| kalman_oracle_error(&random_linear_system(s, 30, 5)).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "kalman recursion matches joint conditioning",
        passed: worst <= 1e-8,
        detail: format!("max relative error {worst:.3e}"),
    });

    let lp = LinkConfig::default().params().expect("default link is valid");
    let mut worst_outage: f64 = 0.0;
    for d in [5.0, 10.0, 20.0] {
        let p = required_tx_power(d, &lp).expect("feasible");
        worst_outage = worst_outage.max(outage_probability_chunked(p, d, &lp, 1_000_000, 11, 16).unwrap_or(1.0));
    }
    checks.push(Check {
        name: "closed-form power keeps outage under 5 eps",
        passed: worst_outage <= 5.0 * lp.outage_eps,
        detail: format!("worst outage {worst_outage:.3e} at 1e6 trials"),
    });

    let req = Requirements::pos_vel(0.015, 0.005).expect("positive");
    let kf = KalmanFilter::default();
    let mut bound_ok = true;
    let mut early_ok = true;
    for seed in 0..1000 {
        let (prior, agents, slots) = random_schedule_instance(seed);
        let refs: Vec<&SensingAgent> = agents.iter().collect();
        match voi_schedule(&prior, &refs, &req, slots, &lp, &kf) {
            Ok(out) => {
                bound_ok &= out.decision.iterations_used <= slots && out.decision.len() <= slots;
                if crate::estimator::violated_features(&prior.cov, &req).is_empty() {
                    early_ok &= out.decision.is_empty();
                }
            }
            Err(_) => bound_ok = false,
        }
    }
    checks.push(Check {
        name: "greedy loop ends within the slot budget",
        passed: bound_ok,
        detail: "1000 random instances".into(),
    });
    checks.push(Check {
        name: "compliant prior schedules nobody",
        passed: early_ok,
        detail: "1000 random instances".into(),
    });

    let mut cfg = SimConfig::default();
    cfg.harness.qis = 20;
    let policies = PolicyKind::ALL;
    let a = run_monte_carlo(&cfg, &policies, 4);
    let b = run_monte_carlo(&cfg, &policies, 4);
    let same = matches!((&a, &b), (Ok(x), Ok(y)) if x.records == y.records);
    checks.push(Check {
        name: "seeded Monte Carlo is reproducible",
        passed: same,
        detail: "4 runs x 20 intervals x 5 policies".into(),
    });

    checks
}
