use std::collections::HashMap;

use twinsched::channel::required_tx_power;
use twinsched::experiment::output::parse_trace;
use twinsched::experiment::{run_episode, run_monte_carlo, write_outputs, SimConfig};
use twinsched::scheduler::PolicyKind;

fn short_config(qis: usize) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.harness.qis = qis;
    cfg
}

#[test]
fn trace_power_is_recomputable_from_fleet_file() {
    let cfg = short_config(30);
    let mc = run_monte_carlo(&cfg, &PolicyKind::ALL, 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&cfg, &mc, dir.path()).unwrap();

    let mut ap: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rdr = csv::Reader::from_path(dir.path().join("fleet.csv")).unwrap();
    for row in rdr.records() {
        let row = row.unwrap();
        ap.insert(
            (row[0].parse().unwrap(), row[1].parse().unwrap()),
            row[7].parse().unwrap(),
        );
    }
    let lp = cfg.link.params().unwrap();
    let trace = parse_trace(&dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.len(), 5 * 6 * 30);
    for r in &trace {
        assert_eq!(r.agents.len(), r.n_scheduled);
        let sum: f64 = r
            .agents
            .iter()
            .map(|id| required_tx_power(ap[&(r.run, *id)], &lp).unwrap())
            .sum();
        assert!(
            (sum - r.total_power).abs() <= 1e-7 * sum.max(1.0),
            "{r:?}: recomputed {sum}"
        );
    }
}

#[test]
fn greedy_counts_equal_min_of_budget_and_reachable() {
    let cfg = short_config(40);
    for policy in [PolicyKind::CostBg, PolicyKind::ConfidenceBg, PolicyKind::Random] {
        for run in 0..5 {
            let ep = run_episode(&cfg, policy, run).unwrap();
            for (r, d) in ep.records.iter().zip(&ep.diagnostics) {
                assert_eq!(r.n_scheduled, d.reachable.min(cfg.scheduler.slots));
            }
        }
    }
}

#[test]
fn episodes_share_fleet_and_truth_across_policies() {
    let cfg = short_config(25);
    let voi = run_episode(&cfg, PolicyKind::Voi, 3).unwrap();
    let bcs = run_episode(&cfg, PolicyKind::Bcs, 3).unwrap();
    assert_eq!(voi.fleet, bcs.fleet);
    for (a, b) in voi.diagnostics.iter().zip(&bcs.diagnostics) {
        assert_eq!(a.truth, b.truth);
    }
}

#[test]
fn voi_never_schedules_on_compliant_prior() {
    let cfg = short_config(100);
    for run in 0..20 {
        let ep = run_episode(&cfg, PolicyKind::Voi, run).unwrap();
        for (r, d) in ep.records.iter().zip(&ep.diagnostics) {
            assert!(d.iterations_used <= cfg.scheduler.slots);
            if d.prior_compliant {
                assert_eq!(r.n_scheduled, 0);
                assert_eq!(r.total_power, 0.0);
            }
        }
    }
}

#[test]
fn bcs_is_at_least_as_uncertain_as_voi_after_warm_up() {
    let cfg = short_config(100);
    let mc = run_monte_carlo(&cfg, &[PolicyKind::Voi, PolicyKind::Bcs], 100).unwrap();
    let agg = &mc.aggregate;
    for (v, b) in agg.series(PolicyKind::Voi).zip(agg.series(PolicyKind::Bcs)) {
        assert_eq!(v.qi, b.qi);
        if v.qi >= 40 {
            assert!(b.violation_prob >= v.violation_prob, "qi {}", v.qi);
        }
    }
}

#[test]
fn resolved_config_reloads_to_the_same_config() {
    let mut cfg = short_config(12);
    cfg.scheduler.slots = 4;
    cfg.fleet.m_vel = 17;
    let mc = run_monte_carlo(&cfg, &[PolicyKind::Voi], 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&cfg, &mc, dir.path()).unwrap();
    let reloaded = SimConfig::load(Some(&dir.path().join("config.resolved")), &[]).unwrap();
    assert_eq!(reloaded, cfg);
}

#[test]
fn unknown_config_keys_are_rejected() {
    assert!(SimConfig::from_toml_str("[scheduler]\nslotz = 3\n").is_err());
    assert!(SimConfig::load(None, &["scheduler.slots=-1".into()]).is_err());
    let ok = SimConfig::load(None, &["scheduler.slots=3".into(), "fleet.d_max=12.5".into()]).unwrap();
    assert_eq!(ok.scheduler.slots, 3);
    assert_eq!(ok.fleet.d_max, 12.5);
}

#[test]
fn unwritable_output_reports_the_path() {
    let cfg = short_config(2);
    let mc = run_monte_carlo(&cfg, &[PolicyKind::Voi], 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let err = write_outputs(&cfg, &mc, &blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}
