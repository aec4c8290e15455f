//! Multilayer perceptron classifiers `f(x, t)` with flat parameter access.
//!
//! All weights and biases live in one [`FlatVector`]. Layers are views into
//! it: for each layer the `fan_in x fan_out` weight block (row-major) comes
//! first, followed by the `fan_out` bias. In [`HeadMode::PerTaskInput`] the
//! vector starts with one input layer per task, in task order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, softmax_xent, FlatVector, GemmOperand, Matrix};

/// Logit assigned to classes outside the active task in per-task-output
/// mode. Finite, but far enough below any real logit that its softmax
/// weight is exactly zero.
pub const MASKED_LOGIT: f64 = -1e30;

/// How the task descriptor enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    /// One network for every task; the task id is ignored.
    Shared,
    /// Shared network whose logits are restricted to the task's classes.
    PerTaskOutput,
    /// A dedicated first layer per task on top of a shared trunk.
    PerTaskInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub num_tasks: usize,
    pub head_mode: HeadMode,
}

impl MlpConfig {
    /// Two hidden layers of 100 units, shared head. With no hidden layers
    /// the model is a linear softmax classifier.
    pub fn new(input_dim: usize, num_classes: usize, num_tasks: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden_dims: vec![100, 100],
            num_classes,
            num_tasks,
            head_mode: HeadMode::Shared,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden_dims = hidden;
        self
    }

    pub fn with_head(mut self, mode: HeadMode) -> Self {
        self.head_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config("all layer widths must be at least 1"));
        }
        if self.num_tasks == 0 {
            return Err(Error::config("num_tasks must be at least 1"));
        }
        if self.head_mode == HeadMode::PerTaskOutput && self.num_classes % self.num_tasks != 0 {
            return Err(Error::config(format!(
                "per-task output heads need num_tasks ({}) to divide num_classes ({})",
                self.num_tasks, self.num_classes
            )));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.num_classes)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let dims = self.layer_dims();
        let per = |(i, o): (usize, usize)| i * o + o;
        let first = per(dims[0]);
        let rest: usize = dims[1..].iter().copied().map(per).sum();
        let copies = match self.head_mode {
            HeadMode::PerTaskInput => self.num_tasks,
            _ => 1,
        };
        copies * first + rest
    }

    /// Classes predicted for task `t`; every class unless heads are per task.
    pub fn task_classes(&self, t: usize) -> Range<usize> {
        match self.head_mode {
            HeadMode::PerTaskOutput => {
                let k = self.num_classes / self.num_tasks;
                t * k..(t + 1) * k
            }
            _ => 0..self.num_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Layer {
    fn weights(self) -> Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn bias(self) -> Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }

    fn span(self) -> Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out + self.fan_out
    }
}

/// Which task each row of a batch belongs to.
#[derive(Debug, Clone, Copy)]
pub enum RowTasks<'a> {
    Uniform(usize),
    PerRow(&'a [usize]),
}

impl RowTasks<'_> {
    fn of(&self, row: usize) -> usize {
        match self {
            RowTasks::Uniform(t) => *t,
            RowTasks::PerRow(ts) => ts[row],
        }
    }
}

/// Activations kept from the forward pass for back-propagation.
struct Trace {
    /// Input to each layer (`x`, then post-ReLU activations).
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Matrix>,
    logits: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    config: MlpConfig,
    params: FlatVector,
    rng_seed: u64,
    input_layers: Vec<Layer>,
    trunk: Vec<Layer>,
}

impl Predictor {
    /// Builds a predictor with weights and biases drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(config: MlpConfig, rng_seed: u64) -> Result<Self> {
        let mut model = Predictor::zeroed(config, rng_seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let layers: Vec<Layer> = model
            .input_layers
            .iter()
            .chain(&model.trunk)
            .copied()
            .collect();
        let params = model.params.as_mut_slice();
        for layer in layers {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            for v in &mut params[layer.span()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    /// Builds a predictor with every parameter set to zero.
    pub fn zeroed(config: MlpConfig, rng_seed: u64) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        let copies = match config.head_mode {
            HeadMode::PerTaskInput => config.num_tasks,
            _ => 1,
        };
        let mut offset = 0;
        let mut input_layers = Vec::with_capacity(copies);
        for _ in 0..copies {
            let (fan_in, fan_out) = dims[0];
            input_layers.push(Layer {
                fan_in,
                fan_out,
                offset,
            });
            offset += fan_in * fan_out + fan_out;
        }
        let mut trunk = Vec::with_capacity(dims.len() - 1);
        for &(fan_in, fan_out) in &dims[1..] {
            trunk.push(Layer {
                fan_in,
                fan_out,
                offset,
            });
            offset += fan_in * fan_out + fan_out;
        }
        debug_assert_eq!(offset, config.param_count());
        Ok(Predictor {
            params: FlatVector::zeros(offset),
            config,
            rng_seed,
            input_layers,
            trunk,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &FlatVector {
        &self.params
    }

    pub fn set_params(&mut self, v: FlatVector) -> Result<()> {
        if v.len() != self.params.len() {
            return Err(Error::shape(format!(
                "parameter vector of length {} for a model with {} parameters",
                v.len(),
                self.params.len()
            )));
        }
        self.params = v;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut FlatVector {
        &mut self.params
    }

    /// Range of the flat vector holding task `t`'s dedicated input layer
    /// (the shared input layer outside per-task-input mode).
    pub fn input_layer_span(&self, t: usize) -> Range<usize> {
        let idx = if self.input_layers.len() > 1 { t } else { 0 };
        self.input_layers[idx].span()
    }

    fn check_task(&self, t: usize) -> Result<()> {
        if t >= self.config.num_tasks {
            return Err(Error::domain(format!(
                "task {t} out of range for a model of {} tasks",
                self.config.num_tasks
            )));
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix, tasks: RowTasks<'_>) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(Error::shape(format!(
                "input has {} features, model expects {}",
                x.cols(),
                self.config.input_dim
            )));
        }
        match tasks {
            RowTasks::Uniform(t) => self.check_task(t),
            RowTasks::PerRow(ts) => {
                if ts.len() != x.rows() {
                    return Err(Error::shape(format!(
                        "{} task ids for {} rows",
                        ts.len(),
                        x.rows()
                    )));
                }
                if self.config.head_mode == HeadMode::PerTaskInput {
                    return Err(Error::domain(
                        "mixed-task batches are not supported with per-task input layers",
                    ));
                }
                ts.iter().try_for_each(|&t| self.check_task(t))
            }
        }
    }

    fn affine(&self, layer: Layer, input: &Matrix) -> Matrix {
        let p = self.params.as_slice();
        let n = input.rows();
        let mut out = Matrix::zeros(n, layer.fan_out);
        let bias = &p[layer.bias()];
        for r in 0..n {
            out.row_mut(r).copy_from_slice(bias);
        }
        gemm(
            GemmOperand::row_major(input.data(), n, layer.fan_in),
            GemmOperand::row_major(&p[layer.weights()], layer.fan_in, layer.fan_out),
            1.0,
            out.data_mut(),
        );
        out
    }

    fn run(&self, x: &Matrix, tasks: RowTasks<'_>) -> Trace {
        let first = match (self.config.head_mode, tasks) {
            (HeadMode::PerTaskInput, RowTasks::Uniform(t)) => self.input_layers[t],
            _ => self.input_layers[0],
        };
        let mut inputs = Vec::with_capacity(self.trunk.len() + 1);
        let mut pre = Vec::with_capacity(self.trunk.len());
        inputs.push(x.clone());
        let mut z = self.affine(first, x);
        for &layer in &self.trunk {
            let a = z.relu();
            pre.push(z);
            z = self.affine(layer, &a);
            inputs.push(a);
        }
        if self.config.head_mode == HeadMode::PerTaskOutput {
            for r in 0..z.rows() {
                let keep = self.config.task_classes(tasks.of(r));
                for (c, v) in z.row_mut(r).iter_mut().enumerate() {
                    if !keep.contains(&c) {
                        *v = MASKED_LOGIT;
                    }
                }
            }
        }
        Trace {
            inputs,
            pre,
            logits: z,
        }
    }

    /// Logits for a batch of inputs from task `t`.
    pub fn forward(&self, x: &Matrix, t: usize) -> Result<Matrix> {
        self.forward_rows(x, RowTasks::Uniform(t))
    }

    pub fn forward_rows(&self, x: &Matrix, tasks: RowTasks<'_>) -> Result<Matrix> {
        self.check_input(x, tasks)?;
        Ok(self.run(x, tasks).logits)
    }

    /// Predicted class per row.
    pub fn predict(&self, x: &Matrix, t: usize) -> Result<Vec<usize>> {
        Ok(self.forward(x, t)?.argmax_rows())
    }

    pub fn loss(&self, x: &Matrix, t: usize, y: &[usize]) -> Result<f64> {
        self.check_batch(x, RowTasks::Uniform(t), y)?;
        let logits = self.run(x, RowTasks::Uniform(t)).logits;
        Ok(softmax_xent(&logits, y)?.0)
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter.
    pub fn loss_and_grad(&self, x: &Matrix, t: usize, y: &[usize]) -> Result<(f64, FlatVector)> {
        self.loss_and_grad_rows(x, RowTasks::Uniform(t), y)
    }

    pub fn loss_and_grad_rows(
        &self,
        x: &Matrix,
        tasks: RowTasks<'_>,
        y: &[usize],
    ) -> Result<(f64, FlatVector)> {
        self.check_batch(x, tasks, y)?;
        let trace = self.run(x, tasks);
        let (loss, dlogits) = softmax_xent(&trace.logits, y)?;
        Ok((loss, self.backward(&trace, tasks, dlogits)))
    }

    fn check_batch(&self, x: &Matrix, tasks: RowTasks<'_>, y: &[usize]) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::domain("empty batch"));
        }
        if y.len() != x.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} inputs",
                y.len(),
                x.rows()
            )));
        }
        self.check_input(x, tasks)?;
        for (r, &label) in y.iter().enumerate() {
            let classes = self.config.task_classes(tasks.of(r));
            if !classes.contains(&label) {
                return Err(Error::domain(format!(
                    "label {label} is not a class of task {} ({classes:?})",
                    tasks.of(r)
                )));
            }
        }
        Ok(())
    }

    fn backward(&self, trace: &Trace, tasks: RowTasks<'_>, dlogits: Matrix) -> FlatVector {
        let mut grad = FlatVector::zeros(self.params.len());
        let p = self.params.as_slice();
        let n = dlogits.rows();
        let mut dz = dlogits;
        let first = match (self.config.head_mode, tasks) {
            (HeadMode::PerTaskInput, RowTasks::Uniform(t)) => self.input_layers[t],
            _ => self.input_layers[0],
        };
        let layers: Vec<Layer> = std::iter::once(first).chain(self.trunk.iter().copied()).collect();
        for (l, &layer) in layers.iter().enumerate().rev() {
            let input = &trace.inputs[l];
            let g = grad.as_mut_slice();
            // dW = input^T dz
            gemm(
                GemmOperand::row_major(input.data(), n, layer.fan_in).t(),
                GemmOperand::row_major(dz.data(), n, layer.fan_out),
                0.0,
                &mut g[layer.weights()],
            );
            let db = &mut g[layer.bias()];
            for r in 0..n {
                for (b, v) in db.iter_mut().zip(dz.row(r)) {
                    *b += v;
                }
            }
            if l == 0 {
                break;
            }
            // d input = dz W^T, then through the ReLU
            let mut da = Matrix::zeros(n, layer.fan_in);
            gemm(
                GemmOperand::row_major(dz.data(), n, layer.fan_out),
                GemmOperand::row_major(&p[layer.weights()], layer.fan_in, layer.fan_out).t(),
                0.0,
                da.data_mut(),
            );
            dz = trace.pre[l - 1]
                .relu_backward(&da)
                .expect("trace shapes are consistent");
        }
        grad
    }

    /// Writes the model as an 8-byte little-endian header length, a JSON
    /// header, then the parameters as little-endian `f64`.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let header = CheckpointHeader {
            schema: 1,
            config: self.config.clone(),
            rng_seed: self.rng_seed,
            param_count: self.params.len(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for v in self.params.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)?;
        if header.schema != 1 {
            return Err(Error::config(format!(
                "unsupported checkpoint schema {}",
                header.schema
            )));
        }
        let mut model = Predictor::zeroed(header.config, header.rng_seed)?;
        if header.param_count != model.param_count() {
            return Err(Error::shape(format!(
                "checkpoint declares {} parameters, config implies {}",
                header.param_count,
                model.param_count()
            )));
        }
        let mut buf = [0u8; 8];
        for v in model.params.as_mut_slice() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_checkpoint(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Predictor::read_checkpoint(BufReader::new(File::open(path)?))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    schema: u32,
    config: MlpConfig,
    rng_seed: u64,
    param_count: usize,
}
