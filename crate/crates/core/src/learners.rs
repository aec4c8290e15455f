//! The trainable systems compared on a task stream, all behind [`Learner`]:
//! a single shared network, one small network per task, a network with a
//! per-task input layer, elastic weight consolidation, and gradient
//! episodic memory.

use serde::{Deserialize, Serialize};

use crate::continuum::{Minibatch, MixedMinibatch, TaskStream};
use crate::error::{Error, Result};
use crate::linalg::{FlatVector, Matrix};
use crate::memory::EpisodicMemory;
use crate::predictor::{HeadMode, MlpConfig, Predictor, RowTasks};
use crate::projection::{project_with, sgd_step, DualSolverOptions, GradientBank, ProjectionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Single,
    Independent,
    Multimodal,
    Ewc,
    Gem,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Single => "single",
            LearnerKind::Independent => "independent",
            LearnerKind::Multimodal => "multimodal",
            LearnerKind::Ewc => "ewc",
            LearnerKind::Gem => "gem",
        }
    }
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(LearnerKind::Single),
            "independent" => Ok(LearnerKind::Independent),
            "multimodal" => Ok(LearnerKind::Multimodal),
            "ewc" => Ok(LearnerKind::Ewc),
            "gem" => Ok(LearnerKind::Gem),
            other => Err(Error::config(format!("unknown learner '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub lr: f64,
    /// Total episodic memory budget `M` (GEM; EWC uses `M / T` for its
    /// Fisher sample).
    pub memory: usize,
    pub gamma: f64,
    pub ewc_lambda: f64,
    /// Independent: start task `t`'s network from task `t - 1`'s weights.
    pub clone_init: bool,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub solver: DualSolverOptions,
}

impl LearnerConfig {
    /// Defaults: learning rate 0.1, `M = 5120`, `gamma = 0.5`, `lambda = 1000`,
    /// two hidden layers of 100 units.
    pub fn new(kind: LearnerKind) -> Self {
        LearnerConfig {
            kind,
            lr: 0.1,
            memory: 5120,
            gamma: 0.5,
            ewc_lambda: 1000.0,
            clone_init: true,
            seed: 0,
            hidden_dims: vec![100, 100],
            solver: DualSolverOptions::default(),
        }
    }

    pub fn validate(&self, num_tasks: usize) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden layer widths must be >= 1"));
        }
        match self.kind {
            LearnerKind::Gem => {
                if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
                    return Err(Error::config(format!("gamma must be >= 0, got {}", self.gamma)));
                }
                if self.memory < num_tasks {
                    return Err(Error::config(format!(
                        "memory budget {} leaves no slot for each of {num_tasks} tasks",
                        self.memory
                    )));
                }
            }
            LearnerKind::Ewc => {
                if !(self.ewc_lambda >= 0.0 && self.ewc_lambda.is_finite()) {
                    return Err(Error::config(format!(
                        "ewc_lambda must be >= 0, got {}",
                        self.ewc_lambda
                    )));
                }
                if self.memory < num_tasks {
                    return Err(Error::config("EWC needs memory >= num_tasks for its Fisher sample"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Shape of the problem a learner is built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemShape {
    pub input_dim: usize,
    pub num_classes: usize,
    pub num_tasks: usize,
    pub head_mode: HeadMode,
}

impl From<&TaskStream> for ProblemShape {
    fn from(s: &TaskStream) -> Self {
        ProblemShape {
            input_dim: s.input_dim,
            num_classes: s.num_classes,
            num_tasks: s.num_tasks(),
            head_mode: s.head_mode,
        }
    }
}

pub trait Learner {
    fn kind(&self) -> LearnerKind;

    /// One SGD step on a minibatch from a single task. Tasks must arrive in
    /// nondecreasing order.
    fn observe(&mut self, batch: &Minibatch) -> Result<()>;

    /// Called once after the last minibatch of `task`.
    fn on_task_end(&mut self, task: usize) -> Result<()>;

    fn logits(&self, x: &Matrix, task: usize) -> Result<Matrix>;

    fn param_count(&self) -> usize;

    fn predict(&self, x: &Matrix, task: usize) -> Result<Vec<usize>> {
        Ok(self.logits(x, task)?.argmax_rows())
    }
}

/// Rejects a task id that goes backwards in the stream.
#[derive(Debug, Clone, Default)]
struct TaskCursor(Option<usize>);

impl TaskCursor {
    /// Returns true when `task` starts a new task.
    fn advance(&mut self, task: usize) -> Result<bool> {
        match self.0 {
            Some(cur) if task < cur => Err(Error::Protocol(format!(
                "task {task} observed after task {cur}; tasks must arrive in order"
            ))),
            Some(cur) if task == cur => Ok(false),
            _ => {
                self.0 = Some(task);
                Ok(true)
            }
        }
    }
}

fn mlp_config(shape: &ProblemShape, hidden: Vec<usize>, head: HeadMode) -> MlpConfig {
    MlpConfig {
        input_dim: shape.input_dim,
        hidden_dims: hidden,
        num_classes: shape.num_classes,
        num_tasks: shape.num_tasks,
        head_mode: head,
    }
}

/// Builds the learner described by `cfg` for a problem of the given shape.
pub fn build_learner(cfg: &LearnerConfig, shape: &ProblemShape) -> Result<Box<dyn Learner>> {
    cfg.validate(shape.num_tasks)?;
    let shared = || Predictor::new(mlp_config(shape, cfg.hidden_dims.clone(), shape.head_mode), cfg.seed);
    Ok(match cfg.kind {
        LearnerKind::Single => Box::new(PlainSgd::new(LearnerKind::Single, shared()?, cfg.lr)),
        LearnerKind::Multimodal => {
            if shape.head_mode != HeadMode::Shared {
                return Err(Error::config(
                    "multimodal learner needs a shared output head; it cannot run on split-class streams",
                ));
            }
            let model = Predictor::new(mlp_config(shape, cfg.hidden_dims.clone(), HeadMode::PerTaskInput), cfg.seed)?;
            Box::new(PlainSgd::new(LearnerKind::Multimodal, model, cfg.lr))
        }
        LearnerKind::Independent => Box::new(Independent::new(cfg, shape)?),
        LearnerKind::Ewc => Box::new(Ewc::new(shared()?, cfg, shape.num_tasks)?),
        LearnerKind::Gem => Box::new(Gem::new(shared()?, cfg, shape.num_tasks)?),
    })
}

/// Plain SGD on one network: the `single` and `multimodal` baselines.
#[derive(Debug, Clone)]
pub struct PlainSgd {
    kind: LearnerKind,
    model: Predictor,
    lr: f64,
    cursor: TaskCursor,
}

impl PlainSgd {
    pub fn new(kind: LearnerKind, model: Predictor, lr: f64) -> Self {
        PlainSgd {
            kind,
            model,
            lr,
            cursor: TaskCursor::default(),
        }
    }

    pub fn model(&self) -> &Predictor {
        &self.model
    }

    /// Step on a batch that mixes tasks (the shuffled, non-continual setting).
    pub fn observe_mixed(&mut self, batch: &MixedMinibatch) -> Result<()> {
        let (_, g) = self.model.loss_and_grad_rows(&batch.x, RowTasks::PerRow(&batch.tasks), &batch.y)?;
        sgd_step(&mut self.model, &g, self.lr)
    }
}

impl Learner for PlainSgd {
    fn kind(&self) -> LearnerKind {
        self.kind
    }

    fn observe(&mut self, batch: &Minibatch) -> Result<()> {
        self.cursor.advance(batch.task)?;
        let (_, g) = self.model.loss_and_grad(&batch.x, batch.task, &batch.y)?;
        sgd_step(&mut self.model, &g, self.lr)
    }

    fn on_task_end(&mut self, _task: usize) -> Result<()> {
        Ok(())
    }

    fn logits(&self, x: &Matrix, task: usize) -> Result<Matrix> {
        self.model.forward(x, task)
    }

    fn param_count(&self) -> usize {
        self.model.param_count()
    }
}

/// One network per task, each `T` times narrower than the shared one.
#[derive(Debug, Clone)]
pub struct Independent {
    models: Vec<Predictor>,
    lr: f64,
    clone_init: bool,
    cursor: TaskCursor,
}

impl Independent {
    /// Hidden width per task: `ceil(h / T)`, at least 1.
    pub fn hidden_for(hidden: &[usize], num_tasks: usize) -> Vec<usize> {
        hidden.iter().map(|&h| h.div_ceil(num_tasks).max(1)).collect()
    }

    pub fn new(cfg: &LearnerConfig, shape: &ProblemShape) -> Result<Self> {
        let hidden = Independent::hidden_for(&cfg.hidden_dims, shape.num_tasks);
        let models = (0..shape.num_tasks)
            .map(|t| Predictor::new(mlp_config(shape, hidden.clone(), shape.head_mode), cfg.seed.wrapping_add(t as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Independent {
            models,
            lr: cfg.lr,
            clone_init: cfg.clone_init,
            cursor: TaskCursor::default(),
        })
    }

    pub fn model(&self, task: usize) -> &Predictor {
        &self.models[task]
    }

    fn check(&self, task: usize) -> Result<()> {
        if task >= self.models.len() {
            return Err(Error::domain(format!("task {task} has no model")));
        }
        Ok(())
    }
}

impl Learner for Independent {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Independent
    }

    fn observe(&mut self, batch: &Minibatch) -> Result<()> {
        let t = batch.task;
        self.check(t)?;
        if self.cursor.advance(t)? && self.clone_init && t > 0 {
            let prev = self.models[t - 1].params().clone();
            self.models[t].set_params(prev)?;
        }
        let model = &mut self.models[t];
        let (_, g) = model.loss_and_grad(&batch.x, t, &batch.y)?;
        sgd_step(model, &g, self.lr)
    }

    fn on_task_end(&mut self, _task: usize) -> Result<()> {
        Ok(())
    }

    fn logits(&self, x: &Matrix, task: usize) -> Result<Matrix> {
        self.check(task)?;
        self.models[task].forward(x, task)
    }

    fn param_count(&self) -> usize {
        self.models.iter().map(Predictor::param_count).sum()
    }
}

/// Diagonal Fisher information and the parameters it was measured at.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherState {
    pub importance: FlatVector,
    pub anchor: FlatVector,
}

/// Mean over the examples of the squared per-example loss gradient.
pub fn empirical_fisher(model: &Predictor, x: &Matrix, task: usize, y: &[usize]) -> Result<FlatVector> {
    if y.is_empty() {
        return Err(Error::domain("Fisher estimate needs at least one example"));
    }
    let mut acc = FlatVector::zeros(model.param_count());
    for r in 0..y.len() {
        let xr = x.select_rows(&[r]);
        let (_, g) = model.loss_and_grad(&xr, task, &y[r..r + 1])?;
        for (a, v) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += v * v;
        }
    }
    Ok(acc.scaled(1.0 / y.len() as f64))
}

/// Elastic weight consolidation: SGD on the task loss plus
/// `lambda * sum_k sum_i F_k,i (theta_i - theta*_k,i)^2` over completed tasks.
#[derive(Debug, Clone)]
pub struct Ewc {
    model: Predictor,
    lr: f64,
    lambda: f64,
    recent: EpisodicMemory,
    consolidated: Vec<FisherState>,
    cursor: TaskCursor,
}

impl Ewc {
    pub fn new(model: Predictor, cfg: &LearnerConfig, num_tasks: usize) -> Result<Self> {
        let n_fisher = (cfg.memory / num_tasks).min(256);
        Ok(Ewc {
            model,
            lr: cfg.lr,
            lambda: cfg.ewc_lambda,
            recent: EpisodicMemory::new(n_fisher * num_tasks, num_tasks)?,
            consolidated: Vec::new(),
            cursor: TaskCursor::default(),
        })
    }

    pub fn model(&self) -> &Predictor {
        &self.model
    }

    pub fn fisher_states(&self) -> &[FisherState] {
        &self.consolidated
    }

    /// Gradient of the consolidation penalty at the current parameters.
    pub fn penalty_grad(&self) -> FlatVector {
        let theta = self.model.params().as_slice();
        let mut g = FlatVector::zeros(theta.len());
        for st in &self.consolidated {
            let out = g.as_mut_slice();
            for i in 0..theta.len() {
                out[i] += 2.0 * self.lambda * st.importance[i] * (theta[i] - st.anchor[i]);
            }
        }
        g
    }

    pub fn penalty(&self) -> f64 {
        let theta = self.model.params().as_slice();
        self.consolidated
            .iter()
            .map(|st| {
                (0..theta.len())
                    .map(|i| st.importance[i] * (theta[i] - st.anchor[i]).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            * self.lambda
    }
}

impl Learner for Ewc {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Ewc
    }

    fn observe(&mut self, batch: &Minibatch) -> Result<()> {
        self.cursor.advance(batch.task)?;
        self.recent.store(batch.task, &batch.x, &batch.y)?;
        let (_, mut g) = self.model.loss_and_grad(&batch.x, batch.task, &batch.y)?;
        if !self.consolidated.is_empty() && self.lambda > 0.0 {
            g.axpy(1.0, &self.penalty_grad());
        }
        sgd_step(&mut self.model, &g, self.lr)
    }

    fn on_task_end(&mut self, task: usize) -> Result<()> {
        let Some((x, y)) = self.recent.contents(task) else {
            return Ok(());
        };
        if y.is_empty() {
            return Ok(());
        }
        let importance = empirical_fisher(&self.model, &x, task, &y)?;
        self.consolidated.push(FisherState {
            importance,
            anchor: self.model.params().clone(),
        });
        Ok(())
    }

    fn logits(&self, x: &Matrix, task: usize) -> Result<Matrix> {
        self.model.forward(x, task)
    }

    fn param_count(&self) -> usize {
        self.model.param_count()
    }
}

/// Counters for how often the projection was needed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemStats {
    pub steps: usize,
    pub projected_steps: usize,
    pub qp_sweeps: usize,
}

/// Gradient episodic memory: every step is projected so that, to first
/// order, no earlier task's memory loss increases.
#[derive(Debug, Clone)]
pub struct Gem {
    model: Predictor,
    lr: f64,
    memory: EpisodicMemory,
    projection: ProjectionConfig,
    cursor: TaskCursor,
    stats: GemStats,
}

impl Gem {
    pub fn new(model: Predictor, cfg: &LearnerConfig, num_tasks: usize) -> Result<Self> {
        Ok(Gem {
            model,
            lr: cfg.lr,
            memory: EpisodicMemory::new(cfg.memory, num_tasks)?,
            projection: ProjectionConfig {
                gamma: cfg.gamma,
                solver: cfg.solver,
            },
            cursor: TaskCursor::default(),
            stats: GemStats::default(),
        })
    }

    pub fn model(&self) -> &Predictor {
        &self.model
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.memory
    }

    pub fn stats(&self) -> GemStats {
        self.stats
    }
}

impl Learner for Gem {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Gem
    }

    fn observe(&mut self, batch: &Minibatch) -> Result<()> {
        let t = batch.task;
        self.cursor.advance(t)?;
        self.memory.store(t, &batch.x, &batch.y)?;
        let (_, g) = self.model.loss_and_grad(&batch.x, t, &batch.y)?;
        let past = (0..t)
            .filter(|&k| !self.memory.is_empty(k))
            .map(|k| self.memory.memory_loss_grad(k, &self.model).map(|(_, gk)| gk))
            .collect::<Result<Vec<_>>>()?;
        let step = if past.is_empty() {
            g
        } else {
            let proj = project_with(&GradientBank::new(g, past)?, &self.projection)?;
            if let Some(sol) = &proj.dual {
                self.stats.projected_steps += 1;
                self.stats.qp_sweeps += sol.sweeps;
            }
            proj.gradient
        };
        self.stats.steps += 1;
        sgd_step(&mut self.model, &step, self.lr)
    }

    fn on_task_end(&mut self, _task: usize) -> Result<()> {
        Ok(())
    }

    fn logits(&self, x: &Matrix, task: usize) -> Result<Matrix> {
        self.model.forward(x, task)
    }

    fn param_count(&self) -> usize {
        self.model.param_count()
    }
}
