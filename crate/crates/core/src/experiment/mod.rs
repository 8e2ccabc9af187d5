//! Monte Carlo harness: config, episodes, aggregation and CSV outputs.

pub mod config;
pub mod harness;
pub mod output;

pub use config::{DynamicsConfig, FleetConfig, HarnessConfig, Scenario, SchedulerConfig, SimConfig};
pub use harness::{
    aggregate, run_episode, run_monte_carlo, AggregateMetrics, Episode, MonteCarlo, QIRecord, QiAggregate,
    QiDiagnostics,
};
pub use output::{emit_csv, emit_summary, parse_trace, write_outputs};
