use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gface::commands::{self, Ablation, Baseline};

/// Generalized facial-expression category discovery on embedding data.
#[derive(Parser)]
#[command(name = "gface", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblateArg {
    /// Drop the adversarial, balancing and cluster terms.
    NoDebias,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Kmeans,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus manifest sidecar).
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides GFACE_SEED and the config's data seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write a run directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a nonempty run directory.
        #[arg(long)]
        force: bool,
        #[arg(long, value_enum)]
        ablate: Option<AblateArg>,
        /// Overrides the epoch count; the warmup keeps its share of the run.
        #[arg(long)]
        epochs: Option<usize>,
        /// No per-epoch progress on stderr.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Report All/Old/New clustering accuracy of a checkpoint.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
        /// Also write the CSV table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check the new-class discrepancy bound for a checkpoint.
    BoundCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n_perturb: Option<usize>,
        /// Epochs for the fully supervised reference model.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Plot a run's history as SVG and write a per-epoch digest.
    Report {
        #[arg(long)]
        rundir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> gface::Result<ExitCode> {
    let stdout = std::io::stdout();
    let out = &mut stdout.lock();
    match cli.command {
        Command::GenData { config, out: path, seed } => {
            commands::gen_data(&commands::GenDataArgs { config, out: path, seed }, out)?;
        }
        Command::Train {
            config,
            data,
            out: dir,
            force,
            ablate,
            epochs,
            quiet,
        } => {
            let args = commands::TrainArgs {
                config,
                data,
                out: dir,
                force,
                ablate: ablate.map(|AblateArg::NoDebias| Ablation::NoDebias),
                epochs,
                quiet,
            };
            commands::train(&args, out)?;
        }
        Command::Eval {
            config,
            checkpoint,
            data,
            baseline,
            csv,
        } => {
            let args = commands::EvalArgs {
                config,
                checkpoint,
                data,
                baseline: baseline.map(|BaselineArg::Kmeans| Baseline::KMeans),
                csv,
            };
            commands::eval(&args, out)?;
        }
        Command::BoundCheck {
            config,
            checkpoint,
            data,
            alpha,
            n_perturb,
            epochs,
            csv,
        } => {
            let args = commands::BoundCheckArgs {
                config,
                checkpoint,
                data,
                alpha,
                n_perturb,
                epochs,
                csv,
            };
            let r = commands::bound_check(&args, out)?;
            if !r.coefficient_positive {
                eprintln!(
                    "error: alpha = {} does not exceed theta = {}; the bound's coefficient (alpha - theta) is not positive, so the inequality is not asserted",
                    r.alpha, r.theta
                );
                return Ok(ExitCode::from(2));
            }
            if !r.assumption_holds {
                eprintln!(
                    "note: the labeled-discrepancy assumption does not hold on this data (xi_L = {} > xi_U_old = {}); the bound is reported but not asserted",
                    r.xi_l, r.xi_u_old
                );
            }
            if r.holds() == Some(false) {
                eprintln!("error: the bound is violated (lhs {} > rhs {})", r.lhs, r.rhs);
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Report { rundir, out: dir } => {
            commands::report(&commands::ReportArgs { rundir, out: dir }, out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
