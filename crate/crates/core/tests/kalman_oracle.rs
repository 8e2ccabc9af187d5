mod common;

use twinsched::selftest::{joint_gaussian_posteriors, kalman_posteriors, random_linear_system};

#[test]
fn recursion_matches_latent_conditioning() {
    for seed in 100..106 {
        let sys = random_linear_system(seed, 50, 3);
        let oracle = common::latent_oracle(&sys);
        let kf = kalman_posteriors(&sys).unwrap();
        let err = common::relative_error(&kf, &oracle);
        assert!(err <= 1e-8, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn selftest_reference_agrees_with_latent_conditioning() {
    let sys = random_linear_system(7, 25, 5);
    let oracle = common::latent_oracle(&sys);
    let joint = joint_gaussian_posteriors(&sys);
    assert!(common::relative_error(&joint, &oracle) <= 1e-8);
}

#[test]
fn steps_without_sensors_are_pure_prediction() {
    let mut sys = random_linear_system(3, 10, 2);
    for so in &mut sys.steps {
        *so = twinsched::estimator::StackedObservation::empty();
    }
    let kf = kalman_posteriors(&sys).unwrap();
    let oracle = common::latent_oracle(&sys);
    assert!(common::relative_error(&kf, &oracle) <= 1e-10);
}
