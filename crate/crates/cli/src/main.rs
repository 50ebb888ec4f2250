use std::path::PathBuf;
use std::process::ExitCode;

use cdw_core::current_laws::Law;
use cdw_core::quantum::Scheme;
use cdw_lab::config::{ConfigError, Kind};
use cdw_lab::{load_config, run, RunConfig, RunError, RunOptions};
use clap::{Parser, Subcommand, ValueEnum};

/// Charge-density-wave simulation runs from TOML configs.
///
/// Every global flag can also be set through the environment with the
/// `CDW_LAB_` prefix (`CDW_LAB_SEED`, `CDW_LAB_JOBS`, ...). Logging is
/// controlled by `CDW_LAB_LOG` (e.g. `CDW_LAB_LOG=debug`).
#[derive(Debug, Parser)]
#[command(name = "cdw-lab", version)]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true, env = "CDW_LAB_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true, env = "CDW_LAB_OUT")]
    out: Option<PathBuf>,
    /// Seed (overrides the config's seed; 0 without a config).
    #[arg(long, global = true, env = "CDW_LAB_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CDW_LAB_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Cn,
    Df,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LawArg {
    Ss,
    Zener,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Random-pinning transport, threshold scan and dielectric response.
    Classical,
    /// Single-chain wavefunction evolution.
    Quantum {
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Analytic soliton, residual convergence and pendulum chain.
    Soliton {
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
    },
    /// Two-chain band structure and mean-phase staircase.
    Variational,
    /// Fit a current law to `(e, i)` data.
    Fit {
        #[arg(long, value_enum)]
        law: Option<LawArg>,
        /// CSV with columns `e` and `i`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

impl Command {
    fn kind(&self) -> Kind {
        match self {
            Command::Classical => Kind::Classical,
            Command::Quantum { .. } => Kind::Quantum,
            Command::Soliton { .. } => Kind::Soliton,
            Command::Variational => Kind::Variational,
            Command::Fit { .. } => Kind::Fit,
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let kind = cli.command.kind();
    let mut config = match &cli.config {
        Some(path) => {
            let c = load_config(path)?;
            if c.kind() != kind {
                return Err(ConfigError::Invalid {
                    key: c.kind().to_string(),
                    reason: format!("config describes a {} run but the subcommand is `{kind}`", c.kind()),
                }
                .into());
            }
            c
        }
        None => RunConfig::defaults(kind, 0),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match &cli.command {
        Command::Quantum { scheme: Some(s) } => {
            config.quantum.as_mut().expect("kind checked").scheme = match s {
                SchemeArg::Cn => Scheme::CrankNicolson,
                SchemeArg::Df => Scheme::DufortFrankel,
                SchemeArg::Literal => Scheme::LiteralStencil,
            };
        }
        Command::Soliton { beta: Some(b) } => config.soliton.as_mut().expect("kind checked").beta = *b,
        Command::Fit { law, data } => {
            let fit = config.fit.as_mut().expect("kind checked");
            if let Some(l) = law {
                fit.law = match l {
                    LawArg::Ss => Law::Ss,
                    LawArg::Zener => Law::Zener,
                };
            }
            if let Some(d) = data {
                fit.data = Some(d.clone());
            }
            // absolute paths keep meta.txt usable from any directory
            if let Some(d) = &fit.data {
                if let Ok(abs) = std::fs::canonicalize(d) {
                    fit.data = Some(abs);
                }
            }
        }
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CDW_LAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = build_config(&cli).and_then(|config| {
        let out = cli.out.clone().or_else(|| config.out.clone()).ok_or_else(|| {
            RunError::from(ConfigError::Invalid {
                key: "out".into(),
                reason: "give --out or set `out` in the config".into(),
            })
        })?;
        let opts = RunOptions {
            jobs: cli.jobs,
            invocation: std::env::args().collect::<Vec<_>>().join(" "),
        };
        run(&config, &out, &opts)
    });
    match result {
        Ok(report) => {
            println!("wrote {} run(s) to {}", report.children, report.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
