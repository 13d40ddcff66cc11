use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use asyncmst::harness::config::parse_check;
use asyncmst::harness::report::{read_csv, write_csv};
use asyncmst::harness::scaling::scaling_check;
use asyncmst::harness::{batch_status, default_threads, execute_all, write_outputs, ExperimentConfig, RunReport};
use asyncmst::Error;

#[derive(Parser)]
#[command(name = "asyncmst", version, about = "Simulate asynchronous spanning tree, MST and MSF protocols")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One run (first n, first policy, first seed unless overridden); prints its JSON report.
    Run(Common),
    /// The full cross product of the configuration; writes JSON reports and runs.csv.
    Sweep(Common),
    /// Like sweep, with full invariant checking by default; prints failing runs.
    Verify(Common),
    /// Fits the log-log slope of total messages against n.
    Scaling {
        /// Existing CSV to read instead of running the configuration.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Largest acceptable slope (falls back to slope_bound in the config).
        #[arg(long)]
        bound: Option<f64>,
        /// Only rows of this protocol.
        #[arg(long)]
        protocol: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment file (flat key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the policy list with this single policy.
    #[arg(long)]
    policy: Option<String>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Invariant checking: off, phase or full.
    #[arg(long)]
    check: Option<String>,
    /// Concurrent runs (defaults to the number of CPUs).
    #[arg(long)]
    threads: Option<usize>,
}

const CONFIG_ERROR: u8 = 2;

impl Common {
    fn load(&self, default_check: Option<&str>) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(p) = &self.policy {
            cfg.policies = vec![p.clone()];
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(c) = self.check.as_deref().or(default_check) {
            cfg.check = parse_check(c)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn threads(&self) -> usize {
        self.threads.unwrap_or_else(default_threads)
    }
}

fn sweep(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<RunReport>, Error> {
    let reports = execute_all(&cfg.runs(), threads)?;
    if let Some(dir) = &cfg.out {
        write_outputs(dir, &reports)?;
    }
    Ok(reports)
}

fn main_inner(cli: Cli) -> Result<u8, Error> {
    match cli.cmd {
        Cmd::Run(common) => {
            let mut cfg = common.load(None)?;
            cfg.ns.truncate(1);
            cfg.seeds.truncate(1);
            cfg.policies.truncate(1);
            let reports = sweep(&cfg, 1)?;
            println!("{}", reports[0].to_json());
            Ok(batch_status(&reports) as u8)
        }
        Cmd::Sweep(common) => {
            let cfg = common.load(None)?;
            let reports = sweep(&cfg, common.threads())?;
            if cfg.out.is_none() {
                write_csv(&reports, std::io::stdout().lock())?;
            }
            Ok(batch_status(&reports) as u8)
        }
        Cmd::Verify(common) => {
            let cfg = common.load(Some("full"))?;
            let reports = sweep(&cfg, common.threads())?;
            let mut bad = 0;
            for r in reports.iter().filter(|r| r.status() != 0 || r.error.is_some()) {
                bad += 1;
                let first = r.violations.first().map(|v| format!("{:?}: {}", v.check, v.detail));
                println!(
                    "FAIL {} n={} policy={} seed={} oracle={:?} error={:?} violations={} {}",
                    r.protocol,
                    r.n,
                    r.policy,
                    r.seed,
                    r.oracle.is_match(),
                    r.error,
                    r.violations.len(),
                    first.unwrap_or_default()
                );
            }
            println!("{} runs, {} failing", reports.len(), bad);
            Ok(batch_status(&reports) as u8)
        }
        Cmd::Scaling { csv, bound, protocol, common } => {
            let cfg = common.load(None)?;
            let bound = bound
                .or(cfg.slope_bound)
                .ok_or_else(|| Error::Config("no slope bound (use --bound or slope_bound)".into()))?;
            let rows = match csv {
                Some(p) => read_csv(std::fs::File::open(p)?)?,
                None => {
                    let reports = sweep(&cfg, common.threads())?;
                    let mut buf = Vec::new();
                    write_csv(&reports, &mut buf)?;
                    read_csv(buf.as_slice())?
                }
            };
            let samples: Vec<(usize, f64)> = rows
                .iter()
                .filter(|r| protocol.as_ref().is_none_or(|p| *p == r.protocol))
                .map(|r| (r.n, r.total_messages as f64))
                .collect();
            let fit = scaling_check(&samples, bound)?;
            println!("{}", serde_json::to_string_pretty(&fit).expect("fit serializes"));
            Ok(if fit.pass { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("asyncmst: {e}");
            ExitCode::from(match e {
                Error::Io(_) => 1,
                _ => CONFIG_ERROR,
            })
        }
    }
}
