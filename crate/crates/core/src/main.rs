use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aelab::error::{Error, Result};
use aelab::optimizer::TrainHistory;
use aelab::sweep::{run_sweep, SweepSpec};
use aelab::verify::{run_verification_suite, VerifyScale};

/// Train, sweep and certify tied-weight auto-encoders.
#[derive(Parser)]
#[command(name = "aelab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a sweep config and write the aggregate table.
    Sweep {
        /// TOML sweep config.
        config: PathBuf,
        /// Where to write sweep.csv and per-cell histories
        /// (default: "<config stem>_out" next to the config).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads for cells.
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Root for relative dataset paths (falls back to $AELAB_DATA_DIR,
        /// then the config's directory).
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Run the numerical certification suite; one JSON report per line on
    /// stdout, human-readable lines on stderr.
    Verify {
        /// quick (seconds) or full (minutes, the quoted tolerances).
        #[arg(long, default_value = "quick")]
        scale: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the single cell described by a config (all grids length one)
    /// and write its history JSON.
    Train {
        /// TOML config, same format as sweep.
        config: PathBuf,
        /// History output path (default: "<config stem>_history.json").
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Print the per-epoch record of a saved training history.
    Inspect {
        /// history JSON written by train or sweep.
        history: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep {
            config,
            output_dir,
            jobs,
            seed,
            data_dir,
        } => {
            let mut spec = SweepSpec::load(&config)?;
            rebase_dataset(&mut spec, &config, data_dir);
            if let Some(s) = seed {
                spec.seed = s;
            }
            if jobs.is_some() {
                spec.jobs = jobs;
            }
            spec.output_dir = output_dir
                .or(spec.output_dir)
                .or_else(|| Some(sibling(&config, "_out")));
            spec.validate()?;

            let outcome = run_sweep(&spec)?;
            print!("{}", aelab::sweep::emit_table(&outcome.rows));
            let dir = spec.output_dir.expect("set above");
            eprintln!(
                "{} cells, {} failed; table at {}",
                outcome.rows.len(),
                outcome.failures.len(),
                dir.join("sweep.csv").display()
            );
            for (label, msg) in &outcome.failures {
                eprintln!("failed {label}: {msg}");
            }
            Ok(if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Verify { scale, seed } => {
            let scale: VerifyScale = scale.parse()?;
            let reports = run_verification_suite(scale, seed);
            let mut all_passed = true;
            for report in &reports {
                println!("{}", serde_json::to_string(report)?);
                eprintln!("{}", report.line());
                all_passed &= report.passed;
            }
            eprintln!(
                "{}/{} checks passed",
                reports.iter().filter(|r| r.passed).count(),
                reports.len()
            );
            Ok(if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Train {
            config,
            output,
            seed,
            data_dir,
        } => {
            let mut spec = SweepSpec::load(&config)?;
            rebase_dataset(&mut spec, &config, data_dir);
            if let Some(s) = seed {
                spec.seed = s;
            }
            if spec.models.len() != 1 || spec.activations.len() != 1 || spec.sigma2_grid.len() != 1
            {
                return Err(Error::Config(
                    "train wants a single cell: one model, one activation, one sigma2 \
                     (use sweep for grids)"
                        .into(),
                ));
            }
            spec.output_dir = None;
            let outcome = run_sweep(&spec)?;
            if let Some((label, msg)) = outcome.failures.first() {
                return Err(Error::Config(format!("training {label} failed: {msg}")));
            }
            let history = outcome.histories[0].as_ref().expect("no failure");
            let path = output.unwrap_or_else(|| sibling(&config, "_history.json"));
            std::fs::write(&path, history.to_json()?)?;
            let row = &outcome.rows[0];
            println!(
                "{} {} sigma2={} done: recon_loss {}, act_fraction {}, dead_fraction {}",
                row.model, row.activation, row.sigma2, row.recon_loss, row.act_fraction,
                row.dead_fraction
            );
            println!("history at {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { history } => {
            let text = std::fs::read_to_string(&history)?;
            let history = TrainHistory::from_json(&text)?;
            let c = &history.config;
            println!(
                "objective {} (coeff {}), activation {}, {} hidden units, constraint {}",
                c.objective.kind.tag(),
                c.objective.coeff,
                c.activation,
                c.hidden_units,
                c.constraint
            );
            println!(
                "epochs {}, batch {}, lr {}, momentum {}, seed {}",
                c.epochs, c.batch_size, c.learning_rate, c.momentum, c.seed
            );
            println!(
                "{:>5} {:>14} {:>14} {:>9} {:>9} {:>10}",
                "epoch", "recon_loss", "reg_value", "act_frac", "dead_frac", "mean_a"
            );
            for r in &history.records {
                println!(
                    "{:>5} {:>14.6e} {:>14.6e} {:>9.4} {:>9.4} {:>10.4}",
                    r.epoch,
                    r.recon_loss,
                    r.reg_value,
                    r.act_fraction,
                    r.dead_fraction,
                    r.mean_pre_activation
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// "<config stem><suffix>" next to the current directory.
fn sibling(config: &Path, suffix: &str) -> PathBuf {
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    PathBuf::from(format!("{stem}{suffix}"))
}

/// Resolve relative dataset paths: explicit flag, then $AELAB_DATA_DIR,
/// then the config file's own directory.
fn rebase_dataset(spec: &mut SweepSpec, config: &Path, data_dir: Option<PathBuf>) {
    let root = data_dir
        .or_else(|| std::env::var_os("AELAB_DATA_DIR").map(PathBuf::from))
        .or_else(|| config.parent().map(|p| p.to_path_buf()))
        .unwrap_or_default();
    spec.dataset.rebase(&root);
}
