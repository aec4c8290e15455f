//! Running a learner over a task stream, grid searches over learner
//! hyper-parameters, and the JSON / text / CSV reports they produce.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::continuum::{build_stream, load_mnist_dir, ContinuumSpec, DatasetKind, TaskStream};
use crate::error::{Error, Result};
use crate::learners::{build_learner, Learner, LearnerConfig, LearnerKind, PlainSgd, ProblemShape};
use crate::metrics::{evaluate_all, CurvePoint, LearningCurve, RMatrix};
use crate::predictor::{MlpConfig, Predictor};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub continuum: ContinuumSpec,
    pub learner: LearnerConfig,
    /// Evaluate on every test set after every `k` minibatches.
    #[serde(default)]
    pub eval_every: Option<usize>,
    /// Train on all tasks' examples shuffled together (no continual order).
    #[serde(default)]
    pub iid_shuffle: bool,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetKind, learner: LearnerKind) -> Self {
        ExperimentConfig {
            continuum: ContinuumSpec::new(dataset),
            learner: LearnerConfig::new(learner),
            eval_every: None,
            iid_shuffle: false,
            data_dir: None,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.continuum.validate()?;
        self.learner.validate(self.continuum.num_tasks)?;
        if self.eval_every == Some(0) {
            return Err(Error::config("fine-grained cadence must be at least 1"));
        }
        if self.iid_shuffle && self.learner.kind != LearnerKind::Single {
            return Err(Error::config("shuffled (non-continual) training is only defined for the single learner"));
        }
        if self.continuum.dataset == DatasetKind::SplitClasses && self.learner.kind == LearnerKind::Multimodal {
            return Err(Error::config("multimodal learner cannot run on split-class streams"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub baseline: Vec<f64>,
    pub r: Vec<Vec<f64>>,
    pub acc: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub param_count: usize,
    pub wall_clock_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<LearningCurve>,
}

impl Report {
    pub fn r_matrix(&self) -> RMatrix {
        RMatrix {
            baseline: self.baseline.clone(),
            rows: self.r.clone(),
        }
    }

    pub fn label(&self) -> String {
        let mut s = self.config.learner.kind.to_string();
        if self.config.iid_shuffle {
            s.push_str(" (shuffled)");
        }
        s
    }

    /// JSON with the timing field zeroed, for reproducibility comparisons.
    pub fn to_json_without_timing(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_clock_seconds = 0.0;
        Ok(serde_json::to_string_pretty(&r)?)
    }
}

/// Loads the digit data if the stream needs it, builds the stream, runs.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let stream = load_stream(config)?;
    run_on_stream(config, &stream)
}

pub fn load_stream(config: &ExperimentConfig) -> Result<TaskStream> {
    if config.continuum.dataset.needs_digits() {
        let dir = config
            .data_dir
            .clone()
            .ok_or_else(|| Error::MissingData(PathBuf::from("<no --data-dir given>")))?;
        let digits = load_mnist_dir(dir)?;
        build_stream(&config.continuum, Some(&digits))
    } else {
        build_stream(&config.continuum, None)
    }
}

struct Evaluator<'a> {
    stream: &'a TaskStream,
    curve: Option<LearningCurve>,
    batches_seen: usize,
    examples_seen: usize,
}

impl Evaluator<'_> {
    fn after_batch(&mut self, learner: &dyn Learner, task: usize, n: usize) -> Result<()> {
        self.batches_seen += 1;
        self.examples_seen += n;
        if let Some(curve) = &mut self.curve {
            if self.batches_seen % curve.every == 0 {
                curve.points.push(CurvePoint {
                    batches_seen: self.batches_seen,
                    examples_seen: self.examples_seen,
                    task,
                    accuracies: evaluate_all(learner, &self.stream.test)?,
                });
            }
        }
        Ok(())
    }
}

/// Trains the configured learner over `stream`, recording the baseline
/// accuracies before training and one R row after each task.
pub fn run_on_stream(config: &ExperimentConfig, stream: &TaskStream) -> Result<Report> {
    config.validate()?;
    if stream.num_tasks() != config.continuum.num_tasks {
        return Err(Error::config(format!(
            "stream has {} tasks, config declares {}",
            stream.num_tasks(),
            config.continuum.num_tasks
        )));
    }
    let start = Instant::now();
    let shape = ProblemShape::from(stream);
    let mut eval = Evaluator {
        stream,
        curve: config.eval_every.map(LearningCurve::new),
        batches_seen: 0,
        examples_seen: 0,
    };

    let (r, param_count) = if config.iid_shuffle {
        let model = Predictor::new(
            MlpConfig {
                input_dim: shape.input_dim,
                hidden_dims: config.learner.hidden_dims.clone(),
                num_classes: shape.num_classes,
                num_tasks: shape.num_tasks,
                head_mode: shape.head_mode,
            },
            config.learner.seed,
        )?;
        let mut learner = PlainSgd::new(LearnerKind::Single, model, config.learner.lr);
        let mut r = RMatrix::new(evaluate_all(&learner, &stream.test)?);
        let batches = stream.iid_batches();
        let t = stream.num_tasks();
        // rows are taken after each 1/T of the shuffled stream
        let mut next_row = 1;
        for (i, b) in batches.iter().enumerate() {
            learner.observe_mixed(b)?;
            eval.after_batch(&learner, b.tasks[0], b.y.len())?;
            while next_row <= t && (i + 1) * t >= next_row * batches.len() {
                r.push_row(evaluate_all(&learner, &stream.test)?)?;
                next_row += 1;
            }
        }
        while !r.is_complete() {
            r.push_row(evaluate_all(&learner, &stream.test)?)?;
        }
        (r, learner.param_count())
    } else {
        let mut learner = build_learner(&config.learner, &shape)?;
        let mut r = RMatrix::new(evaluate_all(learner.as_ref(), &stream.test)?);
        for t in 0..stream.num_tasks() {
            for b in stream.task_batches(t) {
                learner.observe(&b)?;
                eval.after_batch(learner.as_ref(), t, b.len())?;
            }
            learner.on_task_end(t)?;
            r.push_row(evaluate_all(learner.as_ref(), &stream.test)?)?;
        }
        (r, learner.param_count())
    };

    let multi = r.num_tasks() >= 2;
    Ok(Report {
        schema: REPORT_SCHEMA,
        config: config.clone(),
        acc: r.acc()?,
        bwt: if multi { Some(r.bwt()?) } else { None },
        fwt: if multi { Some(r.fwt()?) } else { None },
        baseline: r.baseline,
        r: r.rows,
        param_count,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        curve: eval.curve,
    })
}

/// Plain-text R matrix: the untrained baseline row, a rule, then one row per
/// task, accuracies to four decimals.
pub fn format_r_matrix(r: &RMatrix) -> String {
    let fmt_row = |row: &[f64]| row.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(" ");
    let first = fmt_row(&r.baseline);
    let mut out = String::new();
    out.push_str(&first);
    out.push('\n');
    out.push_str(&"-".repeat(first.len().max(6)));
    out.push('\n');
    for row in &r.rows {
        out.push_str(&fmt_row(row));
        out.push('\n');
    }
    out
}

/// Parses [`format_r_matrix`] output back into baseline and rows.
pub fn parse_r_matrix(text: &str) -> Result<RMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let parse = |l: &str| -> Result<Vec<f64>> {
        l.split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| Error::config(format!("bad accuracy '{v}': {e}"))))
            .collect()
    };
    let baseline = parse(lines.next().ok_or_else(|| Error::config("empty R matrix text"))?)?;
    match lines.next() {
        Some(rule) if rule.chars().all(|c| c == '-') => {}
        _ => return Err(Error::config("missing rule line below the baseline row")),
    }
    let rows = lines.map(parse).collect::<Result<Vec<_>>>()?;
    Ok(RMatrix { baseline, rows })
}

/// Writes `report.json`, `r_matrix.txt`, and `curves.csv` (when a learning
/// curve was recorded) into `dir`.
pub fn write_outputs(report: &Report, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    fs::write(dir.join("r_matrix.txt"), format_r_matrix(&report.r_matrix()))?;
    if let Some(curve) = &report.curve {
        fs::write(dir.join("curves.csv"), curve.to_csv())?;
    }
    Ok(())
}

/// Value lists to sweep; absent lists keep the base configuration's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub lr: Option<Vec<f64>>,
    #[serde(default)]
    pub ewc_lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub memory: Option<Vec<usize>>,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default)]
    pub clone_init: Option<Vec<bool>>,
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The learning-rate grid shared by every method.
    pub fn lr_grid() -> Vec<f64> {
        vec![0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0]
    }

    /// The EWC regularization grid.
    pub fn ewc_lambda_grid() -> Vec<f64> {
        vec![1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0, 30000.0]
    }

    /// `gamma` from 0.0 to 1.0 in steps of 0.1.
    pub fn gamma_grid() -> Vec<f64> {
        (0..=10).map(|i| i as f64 / 10.0).collect()
    }

    /// The full hyper-parameter grid for one method.
    pub fn for_learner(kind: LearnerKind) -> Self {
        let lr = Some(GridSpec::lr_grid());
        match kind {
            LearnerKind::Single | LearnerKind::Multimodal => GridSpec { lr, ..Default::default() },
            LearnerKind::Independent => GridSpec {
                lr,
                clone_init: Some(vec![false, true]),
                ..Default::default()
            },
            LearnerKind::Ewc => GridSpec {
                lr,
                ewc_lambda: Some(GridSpec::ewc_lambda_grid()),
                ..Default::default()
            },
            LearnerKind::Gem => GridSpec {
                lr,
                memory: Some(vec![5120]),
                gamma: Some(GridSpec::gamma_grid()),
                ..Default::default()
            },
        }
    }

    fn axis_len<T>(axis: &Option<Vec<T>>) -> Result<usize> {
        match axis {
            None => Ok(1),
            Some(v) if v.is_empty() => Err(Error::config("grid axis with no values")),
            Some(v) => Ok(v.len()),
        }
    }

    /// Number of cells in the cartesian product.
    pub fn size(&self) -> Result<usize> {
        Ok(GridSpec::axis_len(&self.lr)?
            * GridSpec::axis_len(&self.ewc_lambda)?
            * GridSpec::axis_len(&self.memory)?
            * GridSpec::axis_len(&self.gamma)?
            * GridSpec::axis_len(&self.clone_init)?)
    }

    /// Every learner configuration in the grid, `lr` varying slowest.
    pub fn cells(&self, base: &LearnerConfig) -> Result<Vec<LearnerConfig>> {
        self.size()?;
        fn axis<T: Clone>(a: &Option<Vec<T>>, dflt: T) -> Vec<T> {
            a.clone().unwrap_or_else(|| vec![dflt])
        }
        let mut out = Vec::new();
        for lr in axis(&self.lr, base.lr) {
            for lambda in axis(&self.ewc_lambda, base.ewc_lambda) {
                for memory in axis(&self.memory, base.memory) {
                    for gamma in axis(&self.gamma, base.gamma) {
                        for clone_init in axis(&self.clone_init, base.clone_init) {
                            out.push(LearnerConfig {
                                lr,
                                ewc_lambda: lambda,
                                memory,
                                gamma,
                                clone_init,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub rank: usize,
    pub lr: f64,
    pub ewc_lambda: f64,
    pub memory: usize,
    pub gamma: f64,
    pub clone_init: bool,
    pub acc: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: Report,
    /// Every cell, best ACC first.
    pub table: Vec<GridRow>,
}

impl GridOutcome {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut out = String::from("rank,lr,ewc_lambda,memory,gamma,clone_init,acc,bwt,fwt,wall_clock_seconds\n");
        for r in &self.table {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{},{},{:.3}",
                r.rank,
                r.lr,
                r.ewc_lambda,
                r.memory,
                r.gamma,
                r.clone_init,
                r.acc,
                opt(r.bwt),
                opt(r.fwt),
                r.wall_clock_seconds
            );
        }
        out
    }
}

/// Runs every grid cell on the same stream and seed; the best cell is the
/// one with the highest ACC (earliest cell on ties).
pub fn grid_search(grid: &GridSpec, base: &ExperimentConfig) -> Result<GridOutcome> {
    let cells = grid.cells(&base.learner)?;
    base.validate()?;
    let stream = load_stream(base)?;
    grid_search_on_stream(&cells, base, &stream)
}

pub fn grid_search_on_stream(cells: &[LearnerConfig], base: &ExperimentConfig, stream: &TaskStream) -> Result<GridOutcome> {
    if cells.is_empty() {
        return Err(Error::config("empty grid"));
    }
    let mut reports = Vec::with_capacity(cells.len());
    for cell in cells {
        let cfg = ExperimentConfig {
            learner: cell.clone(),
            ..base.clone()
        };
        reports.push(run_on_stream(&cfg, stream)?);
    }
    let mut order: Vec<usize> = (0..reports.len()).collect();
    // stable sort keeps grid order among equal ACC
    order.sort_by(|&a, &b| reports[b].acc.total_cmp(&reports[a].acc));
    let table = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let (l, rep) = (&cells[i], &reports[i]);
            GridRow {
                rank: rank + 1,
                lr: l.lr,
                ewc_lambda: l.ewc_lambda,
                memory: l.memory,
                gamma: l.gamma,
                clone_init: l.clone_init,
                acc: rep.acc,
                bwt: rep.bwt,
                fwt: rep.fwt,
                wall_clock_seconds: rep.wall_clock_seconds,
            }
        })
        .collect();
    let best = reports.swap_remove(order[0]);
    Ok(GridOutcome { best, table })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: String,
    pub dataset: DatasetKind,
    pub seconds: f64,
}

/// Wall-clock training time per report, one row each.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

impl std::fmt::Display for TimingTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<20} {:<14} {:>10}", "method", "dataset", "seconds")?;
        for r in &self.rows {
            let ds = serde_json::to_value(r.dataset)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            writeln!(f, "{:<20} {:<14} {:>10.2}", r.method, ds, r.seconds)?;
        }
        Ok(())
    }
}

pub fn report_timing(reports: &[Report]) -> Result<TimingTable> {
    if reports.is_empty() {
        return Err(Error::config("timing table needs at least one report"));
    }
    Ok(TimingTable {
        rows: reports
            .iter()
            .map(|r| TimingRow {
                method: r.label(),
                dataset: r.config.continuum.dataset,
                seconds: r.wall_clock_seconds,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: LearnerKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DatasetKind::Synthetic, kind);
        cfg.continuum.num_tasks = 2;
        cfg.continuum.examples_per_task = 30;
        cfg.learner.hidden_dims = vec![8, 8];
        cfg.learner.memory = 20;
        cfg
    }

    #[test]
    fn zero_epochs_leave_rows_at_baseline() {
        let mut cfg = tiny(LearnerKind::Single);
        cfg.continuum.epochs_per_task = 0;
        let rep = run(&cfg).unwrap();
        for row in &rep.r {
            assert_eq!(row, &rep.baseline);
        }
        assert_eq!(rep.bwt, Some(0.0));
        assert_eq!(rep.fwt, Some(0.0));
    }

    #[test]
    fn text_matrix_layout_and_roundtrip() {
        let r = RMatrix {
            baseline: vec![0.1, 0.0987],
            rows: vec![vec![0.9, 0.1], vec![0.8, 0.7]],
        };
        let text = format_r_matrix(&r);
        assert_eq!(text, "0.1000 0.0987\n-------------\n0.9000 0.1000\n0.8000 0.7000\n");
        assert_eq!(parse_r_matrix(&text).unwrap(), r);
        assert!(parse_r_matrix("0.1 0.2\n0.3 0.4\n").is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny(LearnerKind::Gem);
        cfg.iid_shuffle = true;
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
        let mut cfg = tiny(LearnerKind::Single);
        cfg.eval_every = Some(0);
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
        let cfg = ExperimentConfig::new(DatasetKind::Rotations, LearnerKind::Single);
        assert!(matches!(run(&cfg), Err(Error::MissingData(_))));
    }

    #[test]
    fn grid_cells_and_size() {
        let g = GridSpec {
            lr: Some(vec![0.01, 0.1]),
            gamma: Some(vec![0.0, 0.5, 1.0]),
            ..Default::default()
        };
        assert_eq!(g.size().unwrap(), 6);
        let cells = g.cells(&LearnerConfig::new(LearnerKind::Gem)).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0].lr, 0.01);
        assert_eq!(cells[5].gamma, 1.0);
        let empty = GridSpec {
            lr: Some(vec![]),
            ..Default::default()
        };
        assert!(empty.size().is_err());
        assert!(GridSpec::from_json(r#"{"lr": [0.1], "bogus": [1]}"#).is_err());
        assert_eq!(GridSpec::from_json(r#"{"clone_init": [true, false]}"#).unwrap().size().unwrap(), 2);
    }

    #[test]
    fn ewc_grid_contains_rotation_choice() {
        let g = GridSpec::for_learner(LearnerKind::Ewc);
        assert!(g.ewc_lambda.unwrap().contains(&1000.0));
        assert_eq!(GridSpec::for_learner(LearnerKind::Gem).gamma.unwrap().len(), 11);
    }

    #[test]
    fn timing_table_rows() {
        let rep = run(&tiny(LearnerKind::Single)).unwrap();
        assert!(rep.wall_clock_seconds > 0.0);
        let table = report_timing(&[rep.clone(), rep]).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.to_string().contains("single"));
        assert!(report_timing(&[]).is_err());
    }
}
