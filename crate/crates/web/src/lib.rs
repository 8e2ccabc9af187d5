//! Browser bindings. Every exported function takes a TOML config (the same
//! schema as the command-line tool, empty for defaults) and returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use twinsched::channel::required_tx_power;
use twinsched::experiment::{run_episode, run_monte_carlo, SimConfig};
use twinsched::scheduler::PolicyKind;

#[derive(Debug)]
pub enum DemoError {
    Sim(twinsched::Error),
    Input(String),
}

impl std::fmt::Display for DemoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DemoError::Sim(e) => write!(f, "{e}"),
            DemoError::Input(m) => f.write_str(m),
        }
    }
}

impl From<twinsched::Error> for DemoError {
    fn from(e: twinsched::Error) -> Self {
        DemoError::Sim(e)
    }
}

type Result<T> = std::result::Result<T, DemoError>;

fn parse_config(toml: &str) -> Result<SimConfig> {
    Ok(SimConfig::from_toml_str(toml)?)
}

fn parse_policy(name: &str) -> Result<PolicyKind> {
    name.parse()
        .map_err(|_| DemoError::Input(format!("unknown policy `{name}`")))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[derive(Serialize)]
struct Agent {
    id: usize,
    kind: &'static str,
    x: f64,
    y: f64,
    variance: f64,
}

#[derive(Serialize)]
struct Interval {
    qi: usize,
    truth: [f64; 2],
    estimate: [f64; 2],
    variances: [f64; 4],
    scheduled: Vec<usize>,
    power_w: f64,
    violated: bool,
    sq_error: f64,
}

#[derive(Serialize)]
struct EpisodeView {
    policy: &'static str,
    region_radius: f64,
    d_max: f64,
    agents: Vec<Agent>,
    intervals: Vec<Interval>,
}

/// One episode: fleet layout, true and estimated track, and each interval's
/// schedule.
pub fn episode_json(config: &str, policy: &str, run: usize) -> Result<String> {
    let cfg = parse_config(config)?;
    let policy = parse_policy(policy)?;
    let ep = run_episode(&cfg, policy, run)?;
    let agents = ep
        .fleet
        .agents
        .iter()
        .map(|a| Agent {
            id: a.id,
            kind: a.kind.as_str(),
            x: a.location.x,
            y: a.location.y,
            variance: a.meas_cov[(0, 0)],
        })
        .collect();
    let intervals = ep
        .records
        .iter()
        .zip(&ep.diagnostics)
        .map(|(r, d)| Interval {
            qi: r.qi,
            truth: [d.truth.0[0], d.truth.0[1]],
            estimate: [d.estimate[0], d.estimate[1]],
            variances: [
                d.posterior_variances[0],
                d.posterior_variances[1],
                d.posterior_variances[2],
                d.posterior_variances[3],
            ],
            scheduled: r.agents.clone(),
            power_w: r.total_power,
            violated: r.violated,
            sq_error: r.sq_error,
        })
        .collect();
    Ok(to_json(&EpisodeView {
        policy: policy.as_str(),
        region_radius: cfg.dynamics.region_radius,
        d_max: cfg.fleet.d_max,
        agents,
        intervals,
    }))
}

#[derive(Serialize)]
struct PowerPoint {
    distance_m: f64,
    power_w: f64,
}

/// Required transmit power at `points` evenly spaced AP distances.
pub fn power_curve_json(config: &str, d_min: f64, d_max: f64, points: usize) -> Result<String> {
    let cfg = parse_config(config)?;
    let lp = cfg.link.params()?;
    if points < 2 || !(d_min >= 1.0 && d_max > d_min) {
        return Err(DemoError::Input("need points >= 2 and 1 <= d_min < d_max".into()));
    }
    let step = (d_max - d_min) / (points - 1) as f64;
    let curve = (0..points)
        .map(|i| {
            let d = d_min + step * i as f64;
            Ok(PowerPoint {
                distance_m: d,
                power_w: required_tx_power(d, &lp)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(to_json(&curve))
}

#[derive(Serialize)]
struct PolicySeries {
    policy: &'static str,
    mrmse: f64,
    n_scheduled: Vec<f64>,
    power_w: Vec<f64>,
    violation_prob: Vec<f64>,
    rmse: Vec<f64>,
}

/// Per-interval averages of every policy over `runs` shared worlds.
pub fn compare_json(config: &str, runs: usize) -> Result<String> {
    let cfg = parse_config(config)?;
    if runs == 0 {
        return Err(DemoError::Input("runs must be >= 1".into()));
    }
    let mc = run_monte_carlo(&cfg, &PolicyKind::ALL, runs)?;
    let agg = &mc.aggregate;
    let series: Vec<PolicySeries> = PolicyKind::ALL
        .iter()
        .map(|&p| PolicySeries {
            policy: p.as_str(),
            mrmse: agg.mrmse_of(p).unwrap_or(f64::NAN),
            n_scheduled: agg.series(p).map(|a| a.n_scheduled).collect(),
            power_w: agg.series(p).map(|a| a.total_power).collect(),
            violation_prob: agg.series(p).map(|a| a.violation_prob).collect(),
            rmse: agg.series(p).map(|a| a.rmse).collect(),
        })
        .collect();
    Ok(to_json(&series))
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = simulateEpisode)]
pub fn simulate_episode(config: &str, policy: &str, run: u32) -> std::result::Result<String, JsError> {
    js(episode_json(config, policy, run as usize))
}

#[wasm_bindgen(js_name = powerCurve)]
pub fn power_curve(config: &str, d_min: f64, d_max: f64, points: u32) -> std::result::Result<String, JsError> {
    js(power_curve_json(config, d_min, d_max, points as usize))
}

#[wasm_bindgen(js_name = comparePolicies)]
pub fn compare_policies(config: &str, runs: u32) -> std::result::Result<String, JsError> {
    js(compare_json(config, runs as usize))
}
