//! `spinkernel` command-line driver.
//!
//! Settings come from the preset, then the `--config` JSON document, then
//! the flags; later sources win.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spinkernel::config::{EngineChoice, Preset, RunConfig};
use spinkernel::pipeline::{cmd_pipeline, Run};
use spinkernel::resources::ShotCount;
use spinkernel::{Error, KernelKind, Result};

#[derive(Parser)]
#[command(name = "spinkernel", version, about = "Fidelity-kernel SVMs for spin-chain phase transitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nearest-neighbour fidelity scan per size.
    Scan(Common),
    /// Exact Gram matrices of the training windows.
    Gram(Common),
    /// SWAP-test sampled Gram matrices (needs --shots).
    Sample(Common),
    /// SVM models per size.
    Train(Common),
    /// Decision boundaries, decision curves and midpoint diagnostics.
    Boundary(Common),
    /// Ensemble statistics, shot bounds and kernel histograms.
    Bounds(Common),
    /// Drift fit of the boundary estimates over the sizes.
    Fit(Common),
    /// Every stage in order.
    Pipeline(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Ising,
    Xy,
    Xx,
    Xxz,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Analytic,
    Ed,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Global,
    PerSite,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no config file is given.
    #[arg(long, value_enum, conflicts_with = "config")]
    preset: Option<PresetArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    shots: Option<u64>,
    /// Comma-separated chain lengths.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Log stage progress.
    #[arg(short, long)]
    verbose: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, p) => RunConfig::preset(match p.unwrap_or(PresetArg::Ising) {
                PresetArg::Ising => Preset::Ising,
                PresetArg::Xy => Preset::Xy,
                PresetArg::Xx => Preset::Xx,
                PresetArg::Xxz => Preset::Xxz,
                PresetArg::Custom => Preset::Custom,
            }),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(e) = self.engine {
            cfg.engine = match e {
                EngineArg::Analytic => EngineChoice::Analytic,
                EngineArg::Ed => EngineChoice::Ed,
            };
        }
        if let Some(k) = self.kind {
            cfg.kind = match k {
                KindArg::Global => KernelKind::Global,
                KindArg::PerSite => KernelKind::PerSite,
            };
        }
        if self.shots.is_some() {
            cfg.shots = self.shots;
        }
        if let Some(s) = &self.sizes {
            cfg.sizes = s.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn shots(c: Option<ShotCount>) -> String {
    c.map_or("unbounded".into(), |c| c.display())
}

fn run(cmd: Command) -> Result<()> {
    let (common, stage) = match &cmd {
        Command::Scan(c) => (c, "scan"),
        Command::Gram(c) => (c, "gram"),
        Command::Sample(c) => (c, "sample"),
        Command::Train(c) => (c, "train"),
        Command::Boundary(c) => (c, "boundary"),
        Command::Bounds(c) => (c, "bounds"),
        Command::Fit(c) => (c, "fit"),
        Command::Pipeline(c) => (c, "pipeline"),
    };
    let level = if common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let cfg = common.config()?;
    if stage == "pipeline" {
        let out = cfg.out_dir.clone();
        let m = cmd_pipeline(cfg)?;
        println!("wrote {} files to {}", m.files.len(), out.display());
        return Ok(());
    }
    let mut run = Run::new(cfg)?;
    match stage {
        "scan" => {
            for s in run.scan()? {
                println!("N={} argmin {}", s.base.n_sites, s.argmin);
            }
        }
        "gram" => run.write_grams()?,
        "sample" => run.write_sampled()?,
        "train" => run.write_models()?,
        "boundary" => {
            run.write_boundaries()?;
            for n in run.cfg.sizes.clone() {
                println!("N={n} boundary {}", run.boundary(n)?.x_star);
            }
        }
        "bounds" => {
            for b in run.write_bounds()? {
                println!(
                    "N={} k_repr {} iqr {} s_spread {} s_ca {}",
                    b.n_sites,
                    b.stats.k_repr,
                    b.stats.iqr,
                    shots(b.bounds.s_spread),
                    shots(b.bounds.s_ca)
                );
            }
        }
        "fit" => {
            let r = run.write_fit()?;
            let names = r.model.param_names();
            for i in 0..3 {
                println!("{} = {} ± {}", names[i], r.params[i], r.sigmas[i]);
            }
        }
        _ => unreachable!(),
    }
    let m = run.finish()?;
    println!("wrote {} files to {}", m.files.len(), run.out_dir().display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config_error() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
