use std::path::PathBuf;
use std::process::ExitCode;

use batchbo::acquisition::AcquisitionConfig;
use batchbo::campaign::{run_embedded, CampaignDir, CampaignSetup, CampaignState};
use batchbo::config::CampaignConfig;
use batchbo::evaluators::{BuiltinEvaluator, Evaluator};
use batchbo::optimize::OptimizerBudget;
use batchbo::report::{emit_slices, summary_text, write_report, write_slices, write_tables, DEFAULT_RESOLUTION};
use batchbo::Error;
use clap::{Args, Parser, Subcommand};

/// Constrained batch Bayesian optimization campaigns.
///
/// Every file the tool writes lives in the campaign directory.
#[derive(Debug, Parser)]
#[command(name = "batchbo", version)]
struct Cli {
    /// Campaign directory holding state.json and all CSV files.
    #[arg(long, global = true, env = "BATCHBO_DIR", default_value = ".")]
    dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a campaign from a TOML config and write the initial design.
    Init {
        #[arg(long)]
        config: PathBuf,
        /// Evaluate the initial design in process instead of writing
        /// proposals_iter0.csv.
        #[arg(long)]
        evaluator: Option<BuiltinEvaluator>,
        /// Replace an existing campaign in the directory.
        #[arg(long)]
        force: bool,
    },
    /// Fit the surrogates and write the next proposals file.
    Propose {
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Append the results of the pending proposals.
    Ingest {
        /// CSV with header id,k,v_mag.
        results: PathBuf,
    },
    /// Run a whole campaign in process against a built-in evaluator.
    Run {
        #[arg(long)]
        evaluator: BuiltinEvaluator,
        /// Initial design size.
        #[arg(long, default_value_t = 10)]
        doe: usize,
        /// Optimization iterations after the initial design.
        #[arg(long, default_value_t = 3)]
        iters: u32,
        /// Batch size.
        #[arg(long, default_value_t = 5)]
        q: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte Carlo samples for the batch acquisition.
        #[arg(long, default_value_t = 1024)]
        mc_samples: usize,
        /// Points per slice grid.
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
        /// Replace an existing campaign in the directory.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Write best-so-far tables (cumulative and per batch) and print them.
    Report,
    /// Write posterior slice grids through the incumbent.
    Slices {
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
    },
}

#[derive(Debug, Args)]
struct BudgetArgs {
    /// Quasi-random batches scored before local refinement.
    #[arg(long)]
    raw_samples: Option<usize>,
    /// Best raw batches refined by pattern search.
    #[arg(long)]
    restarts: Option<usize>,
    /// Pattern-search iterations per restart.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative improvement a pattern-search move must exceed.
    #[arg(long)]
    tol: Option<f64>,
}

impl BudgetArgs {
    fn apply(&self, budget: &mut OptimizerBudget) {
        if let Some(v) = self.raw_samples {
            budget.raw_samples = v;
        }
        if let Some(v) = self.restarts {
            budget.restarts = v;
        }
        if let Some(v) = self.max_iters {
            budget.max_iters_per_restart = v;
        }
        if let Some(v) = self.tol {
            budget.convergence_tol = v;
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Bounds { .. } => 2,
        Error::InvalidState(_) => 3,
        Error::Protocol(_) | Error::Data { .. } | Error::DegenerateData(_) => 4,
        Error::Numeric(_) => 5,
        Error::Io { .. } => 6,
        Error::Parse { .. } | Error::UnsupportedVersion { .. } => 7,
    }
}

fn refuse_existing(campaign: &CampaignDir, force: bool) -> batchbo::Result<()> {
    if campaign.exists() && !force {
        return Err(Error::InvalidState(format!(
            "{} already holds a campaign; pass --force to replace it",
            campaign.root().display()
        )));
    }
    Ok(())
}

fn describe_pending(state: &CampaignState) -> String {
    match &state.pending {
        Some(p) => format!("{} proposals written to {}", p.points.len(), p.file),
        None => "no pending proposals".into(),
    }
}

fn execute(cli: Cli) -> batchbo::Result<()> {
    let campaign = CampaignDir::new(&cli.dir);
    match cli.command {
        Command::Init { config, evaluator, force } => {
            refuse_existing(&campaign, force)?;
            let cfg = CampaignConfig::load(&config)?;
            let state = match evaluator {
                Some(ev) => campaign.init_embedded(cfg.setup(), &ev)?,
                None => campaign.init_external(cfg.setup())?,
            };
            println!(
                "initialized campaign in {}: {} rows, {}",
                campaign.root().display(),
                state.dataset.len(),
                describe_pending(&state)
            );
        }
        Command::Propose { budget } => {
            let state = campaign.propose_with(|b| budget.apply(b))?;
            println!("iteration {}: {}", state.iteration + 1, describe_pending(&state));
        }
        Command::Ingest { results } => {
            let state = campaign.ingest(&results)?;
            println!(
                "ingested {}: {} rows, {} iterations complete",
                results.display(),
                state.dataset.len(),
                state.iteration
            );
        }
        Command::Run {
            evaluator,
            doe,
            iters,
            q,
            seed,
            mc_samples,
            resolution,
            force,
            budget,
        } => {
            refuse_existing(&campaign, force)?;
            let acq = AcquisitionConfig {
                threshold: evaluator.threshold(),
                q,
                mc_samples,
                ..AcquisitionConfig::default()
            };
            let mut setup = CampaignSetup::new(evaluator.space(), acq, doe, seed);
            budget.apply(&mut setup.budget);
            let state = run_embedded(setup, &evaluator, iters)?;
            campaign.save(&state)?;
            write_report(&state, campaign.root(), resolution)?;
            print!("{}", summary_text(&state)?);
        }
        Command::Report => {
            let state = campaign.load()?;
            if state.dataset.is_empty() {
                return Err(Error::InvalidState(format!(
                    "no observations yet; evaluate and ingest the initial design ({})",
                    describe_pending(&state)
                )));
            }
            write_tables(&state, campaign.root())?;
            print!("{}", summary_text(&state)?);
        }
        Command::Slices { resolution } => {
            let state = campaign.load()?;
            let slices = emit_slices(&state, resolution)?;
            for path in write_slices(&state, &slices, campaign.root())? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
