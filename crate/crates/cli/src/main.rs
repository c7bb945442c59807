use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spy_cli::config::{parse_seeds, ConfigError, ExperimentConfig, Mode};
use spy_cli::presets::{self, Command as PresetCommand};
use spy_cli::runner::RunError;

#[derive(Parser)]
#[command(name = "spy", version, about = "Sparsified asynchronous proximal gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sim,
    Concurrent,
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

#[derive(clap::Args)]
struct Common {
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// seeds, e.g. `0..10` or `1,4,7`
    #[arg(long, value_parser = |s: &str| parse_seeds(s).map(SeedList))]
    seeds: Option<SeedList>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one experiment
    Run {
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run several experiments on the same problem and merge their curves
    Compare {
        #[arg(long, num_args = 1.., required_unless_present = "preset")]
        config: Vec<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Dense warm start until the switch trigger, then the configured method
    Warmstart {
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the default configuration
    Defaults,
    /// List presets, print one, or write its configs to a directory
    Presets {
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        RunError::Config(_) | RunError::Mismatch(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn load(config: &[PathBuf], preset: Option<&str>, common: &Common) -> Result<Vec<ExperimentConfig>, RunError> {
    let mut cfgs = match preset {
        Some(name) => {
            presets::preset(name)
                .ok_or_else(|| ConfigError::Invalid(vec![format!("unknown preset {name}; known: {}", presets::NAMES.join(", "))]))?
                .configs
        }
        None => config.iter().map(|p| ExperimentConfig::load(p)).collect::<Result<_, _>>()?,
    };
    for c in &mut cfgs {
        if let Some(s) = &common.seeds {
            c.seeds = s.0.clone();
        }
        match common.mode {
            Some(ModeArg::Sim) => c.mode = Mode::Sim,
            Some(ModeArg::Concurrent) => c.mode = Mode::Concurrent,
            None => {}
        }
    }
    Ok(cfgs)
}

fn one(cfgs: Vec<ExperimentConfig>) -> Result<ExperimentConfig, RunError> {
    let n = cfgs.len();
    let mut it = cfgs.into_iter();
    match (it.next(), n) {
        (Some(c), 1) => Ok(c),
        _ => Err(ConfigError::Invalid(vec![format!("expected one config, preset has {n}; use compare")]).into()),
    }
}

fn write_preset(name: &str, out: Option<&Path>) -> Result<(), RunError> {
    let p = presets::preset(name).ok_or_else(|| ConfigError::Invalid(vec![format!("unknown preset {name}")]))?;
    let verb = match p.command {
        PresetCommand::Run => "run",
        PresetCommand::Compare => "compare",
        PresetCommand::Warmstart => "warmstart",
    };
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for c in &p.configs {
                let path = dir.join(format!("{}.toml", c.name));
                std::fs::write(&path, c.to_toml())?;
                println!("{}", path.display());
            }
        }
        None => {
            println!("# {}: {} (spy {verb})", p.name, p.about);
            for c in &p.configs {
                println!("\n# --- {}.toml\n{}", c.name, c.to_toml());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Defaults => {
            print!("{}", ExperimentConfig::default().to_toml());
            Ok(0)
        }
        Command::Presets { name: None, .. } => {
            for n in presets::NAMES {
                let p = presets::preset(n).expect("listed");
                println!("{n:<14} {}", p.about);
            }
            Ok(0)
        }
        Command::Presets { name: Some(n), out } => write_preset(&n, out.as_deref()).map(|_| 0),
        Command::Run { config, preset, common } => load(config.as_slice(), preset.as_deref(), &common)
            .and_then(one)
            .and_then(|c| spy_cli::cmd_run(&c, &common.out)),
        Command::Warmstart { config, preset, common } => load(config.as_slice(), preset.as_deref(), &common)
            .and_then(one)
            .and_then(|c| spy_cli::cmd_warmstart(&c, &common.out)),
        Command::Compare { config, preset, common } => {
            load(&config, preset.as_deref(), &common).and_then(|c| spy_cli::cmd_compare(&c, &common.out))
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => fail(e),
    }
}
