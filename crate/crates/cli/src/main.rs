use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ssmon_core::harness::{render_tables, run_campaign, size_units, CampaignConfig, EssMode};
use ssmon_core::modes::{compute_statistics, estimate_state_matrix, filter_interarea, modal_analysis, ModeOrigin};
use ssmon_core::sim::{read_csv, simulate, write_csv, SimulationConfig};
use ssmon_core::{Error, Result};

/// Stochastic grid simulation, storage smoothing and inter-area mode estimation.
#[derive(Parser, Debug)]
#[command(name = "ssmon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory and write it as CSV.
    Simulate(Common),
    /// Estimate modes from a trajectory CSV.
    Estimate {
        /// Trajectory CSV in the simulator's column layout.
        csv: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a Monte Carlo campaign and write the report.
    Campaign(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Campaign configuration (TOML); built-in wind scenario when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// on, off or both.
    #[arg(long)]
    ess: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Estimator lag in seconds.
    #[arg(long)]
    tau: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<CampaignConfig> {
        let mut cfg = match &self.config {
            Some(p) => CampaignConfig::from_file(p)?,
            None => CampaignConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.campaign.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.campaign.runs = r;
        }
        if let Some(e) = &self.ess {
            cfg.campaign.ess_mode = e.parse()?;
        }
        if let Some(t) = self.tau {
            cfg.estimator.tau = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn cmd_simulate(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let ess_enabled = match cfg.campaign.ess_mode {
        EssMode::On => true,
        EssMode::Off => false,
        EssMode::Both => {
            return Err(Error::Config("simulate takes --ess on or --ess off".into()));
        }
    };
    let model = cfg.load_grid()?;
    let farms = cfg.farm_specs()?;
    let (units, _) = size_units(&farms, &cfg, 0)?;
    let sim = SimulationConfig { seed: cfg.campaign.seed, run_index: 0, ess_enabled, ..cfg.simulation.clone() };
    let traj = simulate(&model, &farms, &units, &cfg.injection, &sim)?;
    let path = common.out_dir()?.join("trajectory.csv");
    write_csv(&traj, BufWriter::new(File::create(&path)?))?;
    println!("wrote {} samples to {}", traj.len(), path.display());
    Ok(())
}

fn cmd_estimate(csv: &Path, common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let traj = read_csv(BufReader::new(File::open(csv)?))?;
    let stats = compute_statistics(&traj.states, traj.pmu_rate, cfg.estimator.tau)?;
    let a_hat = estimate_state_matrix(&stats, &cfg.estimator)?;
    let all = modal_analysis(&a_hat, ModeOrigin::Estimated)?;
    let interarea = filter_interarea(&all, cfg.estimator.band);
    let out = json!({
        "samples": stats.samples,
        "sample_rate": traj.pmu_rate,
        "tau": stats.tau(),
        "band": cfg.estimator.band,
        "interarea": interarea,
        "all_modes": all,
    });
    match &common.out {
        Some(_) => {
            let path = common.out_dir()?.join("modes.json");
            write_json(&path, &out)?;
            println!("wrote {}", path.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    Ok(())
}

fn cmd_campaign(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let dir = common.out_dir()?;
    let (report, timing) = run_campaign(&cfg)?;
    let tables = render_tables(&report);
    write_json(&dir.join("report.json"), &serde_json::to_value(&report)?)?;
    write_json(&dir.join("timing.json"), &serde_json::to_value(&timing)?)?;
    fs::write(dir.join("tables.txt"), &tables)?;
    print!("{tables}");
    eprintln!("campaign finished in {:.1} s; report in {}", timing.total_seconds, dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Estimate { csv, common } => cmd_estimate(csv, common),
        Command::Campaign(c) => cmd_campaign(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
