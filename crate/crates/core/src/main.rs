use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use twinsched::channel::{outage_probability_chunked, required_tx_power};
use twinsched::experiment::{run_monte_carlo, write_outputs, SimConfig};
use twinsched::scheduler::PolicyKind;

#[derive(Parser)]
#[command(name = "twinsched", version, about = "VoI sensor scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set scheduler.slots=6`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Query intervals per episode.
    #[arg(long)]
    qis: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SimConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(r) = self.runs {
            overrides.push(format!("harness.runs={r}"));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("harness.base_seed={s}"));
        }
        if let Some(q) = self.qis {
            overrides.push(format!("harness.qis={q}"));
        }
        Ok(SimConfig::load(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one policy and write trace and summary CSVs.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        policy: PolicyKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate several policies over the same worlds.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `all` or a comma-separated list; defaults to `harness.policies`.
        #[arg(long)]
        policies: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate closed-form power against simulated outage.
    #[command(name = "verify-lemma1")]
    VerifyLemma1 {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 10_000_000)]
        trials: u64,
        /// AP distances (m).
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 5.0, 10.0, 15.0, 20.0, 25.0])]
        distances: Vec<f64>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn parse_policies(spec: &str) -> Result<Vec<PolicyKind>> {
    if spec == "all" {
        return Ok(PolicyKind::ALL.to_vec());
    }
    spec.split(',').map(|s| Ok(s.trim().parse::<PolicyKind>()?)).collect()
}

fn simulate(cfg: &SimConfig, policies: &[PolicyKind], out: &Path) -> Result<()> {
    let mc = run_monte_carlo(cfg, policies, cfg.harness.runs)?;
    write_outputs(cfg, &mc, out).with_context(|| format!("writing outputs to {}", out.display()))?;
    for (p, m) in &mc.aggregate.mrmse {
        let series: Vec<_> = mc.aggregate.series(*p).collect();
        let n = series.len().max(1) as f64;
        let sensors = series.iter().map(|a| a.n_scheduled).sum::<f64>() / n;
        let power = series.iter().map(|a| a.total_power).sum::<f64>() / n;
        let viol = series.iter().map(|a| a.violation_prob).sum::<f64>() / n;
        println!("{p:>14}  sensors {sensors:7.3}  power {power:10.3} W  violation {viol:6.4}  mrmse {m:.5}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { cfg, policy, out } => {
            let mut c = cfg.load()?;
            c.harness.policies = vec![policy];
            simulate(&c, &[policy], &out)?;
        }
        Command::Sweep { cfg, policies, out } => {
            let mut c = cfg.load()?;
            if let Some(spec) = policies {
                c.harness.policies = parse_policies(&spec)?;
            }
            if c.harness.policies.is_empty() {
                bail!("no policies selected");
            }
            let policies = c.harness.policies.clone();
            simulate(&c, &policies, &out)?;
        }
        Command::VerifyLemma1 { cfg, trials, distances } => {
            let c = cfg.load()?;
            let lp = c.link.params()?;
            let eps = lp.outage_eps;
            println!("d_ap_m,power_w,outage_mc,outage_over_eps");
            let mut ok = true;
            for (i, d) in distances.iter().enumerate() {
                let p = required_tx_power(*d, &lp)?;
                let seed = twinsched::seeding::mix(&[c.harness.base_seed, i as u64]);
                let out = outage_probability_chunked(p, *d, &lp, trials, seed, 64)?;
                ok &= out <= 5.0 * eps;
                println!(
                    "{d},{},{},{:.3}",
                    twinsched::experiment::output::fmt_sig9(p),
                    twinsched::experiment::output::fmt_sig9(out),
                    out / eps
                );
            }
            if !ok {
                eprintln!("outage above 5 eps at some distance");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Selftest => {
            let checks = twinsched::selftest::run();
            let mut failed = 0;
            for c in &checks {
                println!("[{}] {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                println!("{failed} of {} checks failed", checks.len());
                return Ok(ExitCode::FAILURE);
            }
            println!("all {} checks passed", checks.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}
