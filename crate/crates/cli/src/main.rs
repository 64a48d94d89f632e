use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sapit_cli::config::{ExperimentConfig, ExperimentKind};
use sapit_cli::error::{CliError, ConfigIssue};
use sapit_cli::experiment::{draw_trial, operating_point, run_experiment, Scenario};
use sapit_cli::{output, presets};
use sapit_core::channel::link_gains;
use sapit_core::units::linear_to_db;

#[derive(Parser)]
#[command(name = "sapit", version, about = "RIS-aided MIMO simulator with simultaneous active and passive information transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo experiments (mse-vs-iteration, ber-vs-power).
    Simulate(RunArgs),
    /// State-evolution trajectory only.
    Se(RunArgs),
    /// Achievable-rate analysis (rate-vs-N sweeps or a single point).
    Rate(RunArgs),
    /// Draws one channel realization and writes it as CSV.
    Channels(RunArgs),
    /// Lists presets, or prints one with --preset.
    Presets {
        #[arg(long)]
        preset: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(a: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut c = match (&a.config, &a.preset) {
        (Some(p), _) => ExperimentConfig::from_path(p)?,
        (None, Some(n)) => presets::load_preset(n)?,
        (None, None) => return Err(CliError::Config(vec![ConfigIssue::new("--config", "either --config or --preset is required")])),
    };
    if let Some(s) = a.seed {
        c.seed = s;
        c.warnings.retain(|w| !w.starts_with("experiment.seed"));
    }
    if let Some(t) = a.trials {
        c.trials = t;
    }
    c.validate()?;
    Ok(c)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config(vec![ConfigIssue::new("--threads", "must be positive")]));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Config(vec![ConfigIssue::new("--threads", e.to_string())]))
}

fn execute(mut cfg: ExperimentConfig, a: &RunArgs) -> Result<(), CliError> {
    let out = pool(a.threads)?.install(|| run_experiment(&cfg))?;
    cfg.warnings.clear();
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    for f in output::write_all(&cfg, &out, &a.out)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn channels(cfg: &ExperimentConfig, a: &RunArgs) -> Result<(), CliError> {
    let (bg, bh, bf) = link_gains(&cfg.geometry, &cfg.path_loss())?;
    let op = operating_point(cfg, cfg.n, cfg.power_dbm)?;
    eprintln!("link gains (dB): RIS-Rx {:.2}, Tx-Rx {:.2}, Tx-RIS {:.2}", linear_to_db(bg), linear_to_db(bh), linear_to_db(bf));
    eprintln!("expected zeta {:.4e}, normalized noise {:.4e} at {} dBm", op.zeta, op.noise_var, cfg.power_dbm);
    let sc = Scenario::new(cfg, cfg.n, cfg.power_dbm, false)?;
    let data = draw_trial(cfg, &sc, 0)?;
    let mut buf = Vec::new();
    data.channels.write_csv(&mut buf)?;
    std::fs::create_dir_all(&a.out)?;
    let path = a.out.join("channels.csv");
    std::fs::write(&path, output::with_provenance(cfg, &String::from_utf8(buf).expect("ascii")))?;
    println!("{}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let cfg = load(&a)?;
            if !matches!(cfg.kind, ExperimentKind::MseVsIteration | ExperimentKind::BerVsPower) {
                return Err(CliError::Config(vec![ConfigIssue::new("experiment.kind", format!("'{}' is not a simulation; use the se or rate subcommand", cfg.kind))]));
            }
            execute(cfg, &a)
        }
        Command::Se(a) => {
            let mut cfg = load(&a)?;
            cfg.kind = ExperimentKind::SeOnly;
            execute(cfg, &a)
        }
        Command::Rate(a) => {
            let mut cfg = load(&a)?;
            if cfg.kind != ExperimentKind::RateVsN {
                cfg.kind = ExperimentKind::RateOnly;
            }
            execute(cfg, &a)
        }
        Command::Channels(a) => channels(&load(&a)?, &a),
        Command::Presets { preset: None } => {
            for n in presets::list_presets() {
                println!("{n}");
            }
            Ok(())
        }
        Command::Presets { preset: Some(n) } => match presets::preset_text(&n) {
            Some(t) => {
                print!("{}", t.trim_start());
                Ok(())
            }
            None => presets::load_preset(&n).map(|_| ()),
        },
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(issues) => {
                    eprintln!("config error:");
                    for i in issues {
                        eprintln!("  {i}");
                    }
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
