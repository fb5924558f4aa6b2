mod config;
mod experiment;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trustsim_core::{SimConfig, ThreatModel};

use config::{parse_models, parse_seeds, ConfigError, Overrides};
use experiment::{run_experiment, ExperimentPlan};

#[derive(Parser)]
#[command(
    name = "trustsim",
    version,
    about = "EigenTrust marketplace fraud simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more simulations and write their artifacts.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone)]
struct ModelList(Vec<ThreatModel>);

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

#[derive(Args)]
struct SimulateArgs {
    /// Threat model: A-F, a comma list, or `all`.
    #[arg(long, value_parser = |s: &str| parse_models(s).map(ModelList).map_err(|e| e.to_string()))]
    model: Option<ModelList>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed list such as `1..20` (inclusive) or `3,5,8`.
    #[arg(long, value_parser = |s: &str| parse_seeds(s).map(SeedList).map_err(|e| e.to_string()))]
    seeds: Option<SeedList>,
    #[arg(long)]
    ticks: Option<u32>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    attacker_ratio: Option<f64>,
    #[arg(long)]
    spy_ratio: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    e: Option<f64>,
    #[arg(long)]
    f: Option<f64>,
    /// Ticks before attacks start.
    #[arg(long)]
    incubation: Option<u32>,
    #[arg(long)]
    damping: Option<f64>,
    /// Flat `key = value` file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Runs executed in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
    /// Print the per-model report to stdout.
    #[arg(long)]
    report: bool,
}

impl SimulateArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides {
            models: self.model.clone().map(|m| m.0),
            seeds: self
                .seeds
                .clone()
                .map(|s| s.0)
                .or(self.seed.map(|s| vec![s])),
            fields: Vec::new(),
        };
        let flags = [
            ("total_ticks", self.ticks.map(|v| v.to_string())),
            ("nodes", self.nodes.map(|v| v.to_string())),
            ("attacker_ratio", self.attacker_ratio.map(|v| v.to_string())),
            ("spy_ratio", self.spy_ratio.map(|v| v.to_string())),
            ("c", self.c.map(|v| v.to_string())),
            ("e", self.e.map(|v| v.to_string())),
            ("f", self.f.map(|v| v.to_string())),
            ("incubation_period", self.incubation.map(|v| v.to_string())),
            ("damping", self.damping.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                o.set(key, v);
            }
        }
        o
    }

    fn plan(&self) -> Result<ExperimentPlan, ConfigError> {
        let file = match &self.config {
            Some(path) => Overrides::parse_file(path)?,
            None => Overrides::default(),
        };
        let merged = file.merge(self.overrides());
        let mut base = SimConfig::default();
        merged.apply(&mut base)?;
        let models = merged.models.unwrap_or_else(|| vec![base.model]);
        let seeds = merged.seeds.unwrap_or_else(|| vec![base.seed]);
        Ok(ExperimentPlan::new(base, &models, &seeds, self.out.clone()))
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), String> {
    let plan = args.plan().map_err(|e| e.to_string())?;
    let summaries = run_experiment(&plan, args.jobs as usize).map_err(|e| e.to_string())?;
    let text = report::render(&summaries);
    let path = plan.out_dir.join("report.txt");
    std::fs::write(&path, &text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    if args.report {
        print!("{text}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
