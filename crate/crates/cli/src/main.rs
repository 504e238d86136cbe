//! `parkguard`: run extraction scenarios, check the solver against the
//! analytic disc, write synthetic terrain and redraw figures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use parkguard::scenario::{
    load_outcome_view, make_synthetic, parse_config, parse_synthetic_spec, render_svg, run_scenario,
    validate_circle, SvgStyle,
};

/// Worker thread cap; all cores when unset.
const THREADS_VAR: &str = "PARKGUARD_THREADS";

#[derive(Parser)]
#[command(name = "parkguard", version, about = "Pristine-region analysis of patrolled protected areas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and write its outputs.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare cost and profit on the unit disc with their closed forms.
    ValidateCircle {
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        budget: f64,
        #[arg(long, default_value_t = 17)]
        levels: usize,
    },
    /// Write synthetic elevation, slope, speed and mask rasters.
    MakeSynthetic { spec: PathBuf },
    /// Redraw `outcome.svg` from a run's output directory.
    Render {
        outcome_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        max_paths: usize,
    },
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("building the worker pool")?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn base_dir(file: &Path) -> PathBuf {
    file.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { config, out } => {
            let mut cfg = parse_config(&read(&config)?).with_context(|| format!("in {}", config.display()))?;
            if let Some(out) = out {
                cfg.output_dir = std::env::current_dir()?.join(out);
            }
            let run = run_scenario(&cfg, &base_dir(&config))?;
            print!("{}", run.outcome.metrics().to_json());
            eprintln!("outputs written to {}", run.output_dir.display());
        }
        Command::ValidateCircle { h, alpha, budget, levels } => {
            let report = validate_circle(h, alpha, budget, levels);
            print!("{}", report.to_json());
            if !report.pass {
                return Ok(ExitCode::from(2));
            }
        }
        Command::MakeSynthetic { spec } => {
            let parsed = parse_synthetic_spec(&read(&spec)?).with_context(|| format!("in {}", spec.display()))?;
            for p in make_synthetic(&parsed, &base_dir(&spec))? {
                println!("{}", p.display());
            }
        }
        Command::Render { outcome_dir, max_paths } => {
            if !outcome_dir.is_dir() {
                bail!("{} is not a directory", outcome_dir.display());
            }
            let view = load_outcome_view(&outcome_dir)?;
            let style = SvgStyle {
                max_paths,
                ..SvgStyle::default()
            };
            let path = outcome_dir.join("outcome.svg");
            fs::write(&path, render_svg(&view, &style)).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match init_threads().and_then(|()| execute(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
