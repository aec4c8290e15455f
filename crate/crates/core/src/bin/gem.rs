use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use gem_core::continuum::DatasetKind;
use gem_core::experiment::{grid_search, write_outputs, ExperimentConfig, GridSpec};
use gem_core::{Error, LearnerKind};

/// Train a continual learner on a task stream and report its accuracy matrix.
#[derive(Debug, Parser)]
#[command(name = "gem", version)]
struct Cli {
    /// permutations, rotations, split-classes or synthetic
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    /// single, independent, multimodal, ewc or gem
    #[arg(long, default_value = "gem")]
    learner: String,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    examples_per_task: Option<usize>,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Total episodic memory budget across all tasks.
    #[arg(long, default_value_t = 5120)]
    memory: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 1000.0)]
    ewc_lambda: f64,
    /// Independent learner: start each task from the previous task's weights.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    clone_init: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory holding the four MNIST IDX files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory for report.json, r_matrix.txt and curves.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file of value lists to grid-search over.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Evaluate on all test sets every K minibatches.
    #[arg(long, value_name = "K")]
    fine_grained: Option<usize>,
    /// Train the single learner on the whole stream shuffled together.
    #[arg(long)]
    iid_shuffle: bool,
}

impl Cli {
    fn config(&self) -> gem_core::Result<ExperimentConfig> {
        let dataset: DatasetKind = self.dataset.parse()?;
        let kind: LearnerKind = self.learner.parse()?;
        let mut cfg = ExperimentConfig::new(dataset, kind);
        if let Some(t) = self.tasks {
            cfg.continuum.num_tasks = t;
        }
        if let Some(n) = self.examples_per_task {
            cfg.continuum.examples_per_task = n;
        }
        cfg.continuum.epochs_per_task = self.epochs;
        cfg.continuum.seed = self.seed;
        cfg.learner.lr = self.lr;
        cfg.learner.memory = self.memory;
        cfg.learner.gamma = self.gamma;
        cfg.learner.ewc_lambda = self.ewc_lambda;
        cfg.learner.clone_init = self.clone_init;
        cfg.learner.seed = self.seed;
        cfg.eval_every = self.fine_grained;
        cfg.iid_shuffle = self.iid_shuffle;
        cfg.data_dir = self.data_dir.clone();
        cfg.out = self.out.clone();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: &Cli) -> gem_core::Result<()> {
    let cfg = cli.config()?;
    let report = match &cli.grid {
        Some(path) => {
            let grid = GridSpec::from_json(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::Config(format!("grid file {}: {e}", path.display())))?;
            let cells = grid.cells(&cfg.learner)?;
            eprintln!("grid search over {} cells", cells.len());
            let outcome = grid_search(&grid, &cfg)?;
            match &cfg.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join("grid.csv"), outcome.to_csv())?;
                }
                None => print!("{}", outcome.to_csv()),
            }
            outcome.best
        }
        None => gem_core::run(&cfg)?,
    };
    match &cfg.out {
        Some(dir) => write_outputs(&report, dir)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    eprintln!(
        "{}: ACC {:.4}  BWT {}  FWT {}  ({:.1} s)",
        report.label(),
        report.acc,
        report.bwt.map_or("n/a".into(), |v| format!("{v:+.4}")),
        report.fwt.map_or("n/a".into(), |v| format!("{v:+.4}")),
        report.wall_clock_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e @ Error::MissingData(_)) => {
            eprintln!("error: {e}");
            eprintln!("hint: pass --data-dir with the MNIST IDX files, or run with --dataset synthetic");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
