//! Task streams: ordered sequences of tasks, each an iid shuffle of its own
//! examples, plus a held-out test set per task.
//!
//! Streams are built from IDX digit files (permuted pixels, rotated digits,
//! disjoint class splits) or generated synthetically.

use std::f64::consts::PI;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::predictor::HeadMode;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labeled images with pixels scaled to `[0, 1]`, one image per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub images: Matrix,
    pub labels: Vec<usize>,
    pub height: usize,
    pub width: usize,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }
}

fn read_u32_be(bytes: &[u8], at: usize) -> Option<u32> {
    let b = bytes.get(at..at + 4)?;
    Some(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Reads an IDX image file (magic `0x803`) and its label file (magic `0x801`).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledSet> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let img = read_file(ip)?;
    let lab = read_file(lp)?;

    let magic = read_u32_be(&img, 0).ok_or_else(|| format_err(ip, "truncated header"))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err(ip, format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let header = |at| read_u32_be(&img, at).map(|v| v as usize).ok_or_else(|| format_err(ip, "truncated header"));
    let (n, height, width) = (header(4)?, header(8)?, header(12)?);
    let pixels = &img[16..];
    if pixels.len() != n * height * width {
        return Err(format_err(
            ip,
            format!("expected {} pixel bytes, found {}", n * height * width, pixels.len()),
        ));
    }

    let magic = read_u32_be(&lab, 0).ok_or_else(|| format_err(lp, "truncated header"))?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_err(lp, format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n_labels = read_u32_be(&lab, 4).ok_or_else(|| format_err(lp, "truncated header"))? as usize;
    let labels = &lab[8..];
    if labels.len() != n_labels {
        return Err(format_err(lp, format!("expected {n_labels} labels, found {}", labels.len())));
    }
    if n_labels != n {
        return Err(format_err(lp, format!("{n_labels} labels for {n} images")));
    }

    let images = Matrix::new(n, height * width, pixels.iter().map(|&p| p as f64 / 255.0).collect())?;
    Ok(LabeledSet {
        images,
        labels: labels.iter().map(|&l| l as usize).collect(),
        height,
        width,
    })
}

/// Writes a labeled set as an IDX image/label pair, quantizing pixels to bytes.
pub fn write_idx(set: &LabeledSet, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let n = set.len();
    let mut img = Vec::with_capacity(16 + set.images.data().len());
    for v in [IDX_IMAGES_MAGIC, n as u32, set.height as u32, set.width as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(set.images.data().iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + n);
    for v in [IDX_LABELS_MAGIC, n as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    for &l in &set.labels {
        let b = u8::try_from(l).map_err(|_| Error::domain(format!("label {l} does not fit in a byte")))?;
        lab.push(b);
    }
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

/// Official train/test partition of a digit dataset.
#[derive(Debug, Clone)]
pub struct DigitSplit {
    pub train: LabeledSet,
    pub test: LabeledSet,
}

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads the four standard MNIST files from `dir`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<DigitSplit> {
    let dir = dir.as_ref();
    let paths: Vec<PathBuf> = MNIST_FILES.iter().map(|f| dir.join(f)).collect();
    if let Some(missing) = paths.iter().find(|p| !p.exists()) {
        return Err(Error::MissingData(missing.clone()));
    }
    Ok(DigitSplit {
        train: load_idx(&paths[0], &paths[1])?,
        test: load_idx(&paths[2], &paths[3])?,
    })
}

/// True when all four MNIST files are present in `dir`.
pub fn mnist_available(dir: impl AsRef<Path>) -> bool {
    MNIST_FILES.iter().all(|f| dir.as_ref().join(f).exists())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Permutations,
    Rotations,
    SplitClasses,
    Synthetic,
}

impl DatasetKind {
    pub fn needs_digits(self) -> bool {
        !matches!(self, DatasetKind::Synthetic)
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permutations" | "mnist-permutations" => Ok(DatasetKind::Permutations),
            "rotations" | "mnist-rotations" => Ok(DatasetKind::Rotations),
            "split-classes" | "split" => Ok(DatasetKind::SplitClasses),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(Error::config(format!("unknown dataset '{other}'"))),
        }
    }
}

/// Generator settings for [`DatasetKind::Synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    /// Standard deviation of the isotropic noise around each prototype.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            input_dim: 32,
            num_classes: 10,
            noise: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumSpec {
    pub dataset: DatasetKind,
    pub num_tasks: usize,
    pub examples_per_task: usize,
    pub epochs_per_task: usize,
    pub minibatch: usize,
    pub seed: u64,
    /// Cap on test examples per task; `None` keeps the whole test split.
    #[serde(default)]
    pub test_per_task: Option<usize>,
    #[serde(default)]
    pub synthetic: SyntheticSpec,
}

impl ContinuumSpec {
    /// 20 tasks of 1000 examples for the digit streams, 5 tasks of 500 for
    /// the synthetic one.
    pub fn new(dataset: DatasetKind) -> Self {
        let (num_tasks, examples_per_task) = match dataset {
            DatasetKind::Synthetic => (5, 500),
            DatasetKind::SplitClasses => (5, 1000),
            _ => (20, 1000),
        };
        ContinuumSpec {
            dataset,
            num_tasks,
            examples_per_task,
            epochs_per_task: 1,
            minibatch: 10,
            seed: 0,
            test_per_task: None,
            synthetic: SyntheticSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 {
            return Err(Error::config("at least one task is required"));
        }
        if self.minibatch == 0 {
            return Err(Error::config("minibatch size must be at least 1"));
        }
        if self.examples_per_task < self.minibatch {
            return Err(Error::config(format!(
                "examples_per_task ({}) must be at least the minibatch size ({})",
                self.examples_per_task, self.minibatch
            )));
        }
        if self.dataset == DatasetKind::Synthetic {
            let s = &self.synthetic;
            if s.input_dim == 0 || s.num_classes < 2 || !(s.noise >= 0.0) {
                return Err(Error::config("synthetic stream needs input_dim >= 1, >= 2 classes, noise >= 0"));
            }
        }
        Ok(())
    }
}

/// What makes task `k` different from the base data.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskTransform {
    /// `new[i] = old[perm[i]]`.
    Permutation(Vec<usize>),
    RotationDegrees(f64),
    Classes(Range<usize>),
    /// Orthogonal change of basis applied to the synthetic inputs.
    Basis(Matrix),
}

/// One task's examples.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl TaskData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// One observation `(x, t, y)` of the continuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet<'a> {
    pub x: &'a [f64],
    pub t: usize,
    pub y: usize,
}

/// Consecutive examples of a single task.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub task: usize,
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn triplets(&self) -> impl Iterator<Item = Triplet<'_>> {
        self.y.iter().enumerate().map(move |(r, &y)| Triplet {
            x: self.x.row(r),
            t: self.task,
            y,
        })
    }
}

/// A batch drawn from the globally shuffled stream; rows may come from
/// different tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedMinibatch {
    pub tasks: Vec<usize>,
    pub x: Matrix,
    pub y: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub train: Vec<TaskData>,
    pub test: Vec<TaskData>,
    pub transforms: Vec<TaskTransform>,
    pub num_classes: usize,
    pub input_dim: usize,
    pub minibatch: usize,
    pub epochs_per_task: usize,
    pub head_mode: HeadMode,
    seed: u64,
}

/// Independent random stream `id` under the experiment seed.
pub(crate) fn sub_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

// stream ids, one namespace per purpose
const RNG_SELECT: u64 = 1 << 32;
const RNG_TRANSFORM: u64 = 2 << 32;
const RNG_EPOCH: u64 = 3 << 32;
const RNG_IID: u64 = 4 << 32;
const RNG_SYNTH: u64 = 5 << 32;

impl TaskStream {
    pub fn num_tasks(&self) -> usize {
        self.train.len()
    }

    /// Training minibatches in stream order: tasks strictly in sequence, each
    /// task's examples repeated `epochs_per_task` times. The first pass uses
    /// the stored (already shuffled) order, later passes reshuffle.
    pub fn batches(&self) -> impl Iterator<Item = Minibatch> + '_ {
        (0..self.num_tasks()).flat_map(move |t| self.task_batches(t))
    }

    /// Minibatches of task `t` for every epoch.
    pub fn task_batches(&self, t: usize) -> impl Iterator<Item = Minibatch> + '_ {
        let data = &self.train[t];
        let n = data.len();
        let bs = self.minibatch;
        (0..self.epochs_per_task).flat_map(move |epoch| {
            let mut order: Vec<usize> = (0..n).collect();
            if epoch > 0 {
                order.shuffle(&mut sub_rng(self.seed, RNG_EPOCH + (t as u64) * 1024 + epoch as u64));
            }
            order
                .chunks(bs)
                .map(|idx| Minibatch {
                    task: t,
                    x: data.x.select_rows(idx),
                    y: idx.iter().map(|&i| data.y[i]).collect(),
                })
                .collect::<Vec<_>>()
        })
    }

    /// Every training example of every task, `epochs_per_task` times,
    /// shuffled globally and cut into minibatches.
    pub fn iid_batches(&self) -> Vec<MixedMinibatch> {
        let mut all: Vec<(usize, usize)> = Vec::new();
        for _ in 0..self.epochs_per_task {
            for (t, data) in self.train.iter().enumerate() {
                all.extend((0..data.len()).map(|i| (t, i)));
            }
        }
        all.shuffle(&mut sub_rng(self.seed, RNG_IID));
        all.chunks(self.minibatch)
            .map(|chunk| {
                let rows: Vec<&[f64]> = chunk.iter().map(|&(t, i)| self.train[t].x.row(i)).collect();
                MixedMinibatch {
                    tasks: chunk.iter().map(|&(t, _)| t).collect(),
                    x: Matrix::from_rows(&rows).expect("rows share the input dimension"),
                    y: chunk.iter().map(|&(t, i)| self.train[t].y[i]).collect(),
                }
            })
            .collect()
    }

    /// Number of minibatches emitted for task `t` over all its epochs.
    pub fn batches_per_task(&self, t: usize) -> usize {
        self.train[t].len().div_ceil(self.minibatch) * self.epochs_per_task
    }
}

/// Builds the stream described by `spec`. Digit-based kinds need `digits`.
pub fn build_stream(spec: &ContinuumSpec, digits: Option<&DigitSplit>) -> Result<TaskStream> {
    spec.validate()?;
    match spec.dataset {
        DatasetKind::Synthetic => build_synthetic(spec),
        kind => {
            let base = digits.ok_or_else(|| Error::config(format!("{kind:?} stream needs digit data")))?;
            match kind {
                DatasetKind::Permutations => build_permutations(base, spec),
                DatasetKind::Rotations => build_rotations(base, spec),
                _ => build_split_classes(base, spec),
            }
        }
    }
}

/// First `n` indices of `0..len` after a seeded shuffle.
fn select(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx
}

fn transformed<F: Fn(&[f64]) -> Vec<f64>>(set: &LabeledSet, idx: &[usize], f: F) -> TaskData {
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| f(set.images.row(i))).collect();
    TaskData {
        x: Matrix::from_rows(&rows).expect("transforms preserve the input dimension"),
        y: idx.iter().map(|&i| set.labels[i]).collect(),
    }
}

fn check_base(base: &DigitSplit, spec: &ContinuumSpec) -> Result<()> {
    if base.train.len() < spec.examples_per_task {
        return Err(Error::config(format!(
            "{} examples per task requested but the training split holds {}",
            spec.examples_per_task,
            base.train.len()
        )));
    }
    if base.test.is_empty() {
        return Err(Error::config("test split is empty"));
    }
    if base.train.images.cols() != base.test.images.cols() {
        return Err(Error::shape("train and test images differ in size"));
    }
    Ok(())
}

fn test_indices(base: &DigitSplit, spec: &ContinuumSpec, t: usize) -> Vec<usize> {
    match spec.test_per_task {
        Some(n) if n < base.test.len() => {
            let mut idx = select(base.test.len(), n, &mut sub_rng(spec.seed, RNG_SELECT + 512 + t as u64));
            idx.sort_unstable();
            idx
        }
        _ => (0..base.test.len()).collect(),
    }
}

fn digit_stream(
    base: &DigitSplit,
    spec: &ContinuumSpec,
    transforms: Vec<TaskTransform>,
    head_mode: HeadMode,
    train: Vec<TaskData>,
    test: Vec<TaskData>,
) -> TaskStream {
    TaskStream {
        train,
        test,
        transforms,
        num_classes: base.train.num_classes().max(base.test.num_classes()),
        input_dim: base.train.images.cols(),
        minibatch: spec.minibatch,
        epochs_per_task: spec.epochs_per_task,
        head_mode,
        seed: spec.seed,
    }
}

/// Task 0 sees the images unchanged; every later task applies its own
/// fixed random pixel permutation to both its training and test images.
pub fn build_permutations(base: &DigitSplit, spec: &ContinuumSpec) -> Result<TaskStream> {
    spec.validate()?;
    check_base(base, spec)?;
    let d = base.train.images.cols();
    let mut transforms = Vec::with_capacity(spec.num_tasks);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for t in 0..spec.num_tasks {
        let mut perm: Vec<usize> = (0..d).collect();
        if t > 0 {
            perm.shuffle(&mut sub_rng(spec.seed, RNG_TRANSFORM + t as u64));
        }
        let apply = |img: &[f64]| perm.iter().map(|&i| img[i]).collect::<Vec<f64>>();
        let idx = select(base.train.len(), spec.examples_per_task, &mut sub_rng(spec.seed, RNG_SELECT + t as u64));
        train.push(transformed(&base.train, &idx, apply));
        test.push(transformed(&base.test, &test_indices(base, spec, t), apply));
        transforms.push(TaskTransform::Permutation(perm));
    }
    Ok(digit_stream(base, spec, transforms, HeadMode::Shared, train, test))
}

/// Rotation of task `t` out of `num_tasks`, evenly spaced over [0, 180].
pub fn rotation_angle(t: usize, num_tasks: usize) -> f64 {
    if num_tasks < 2 {
        0.0
    } else {
        t as f64 * 180.0 / (num_tasks - 1) as f64
    }
}

/// Rotates a square row-major image about its center with bilinear
/// interpolation; samples falling outside the image read as 0.
pub fn rotate_image(img: &[f64], side: usize, degrees: f64) -> Vec<f64> {
    let theta = degrees * PI / 180.0;
    let (s, c) = theta.sin_cos();
    let center = (side as f64 - 1.0) / 2.0;
    let at = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= side as isize || col >= side as isize {
            0.0
        } else {
            img[r as usize * side + col as usize]
        }
    };
    let mut out = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            let dy = i as f64 - center;
            let dx = j as f64 - center;
            let sx = c * dx + s * dy + center;
            let sy = -s * dx + c * dy + center;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            out[i * side + j] = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        }
    }
    out
}

/// Task `t` rotates every image by `t * 180 / (T - 1)` degrees.
pub fn build_rotations(base: &DigitSplit, spec: &ContinuumSpec) -> Result<TaskStream> {
    spec.validate()?;
    check_base(base, spec)?;
    let side = base.train.height;
    if base.train.height != base.train.width || base.test.height != base.test.width {
        return Err(Error::shape(format!(
            "rotations need square images, got {}x{}",
            base.train.height, base.train.width
        )));
    }
    let mut transforms = Vec::with_capacity(spec.num_tasks);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for t in 0..spec.num_tasks {
        let angle = rotation_angle(t, spec.num_tasks);
        let apply = |img: &[f64]| rotate_image(img, side, angle);
        let idx = select(base.train.len(), spec.examples_per_task, &mut sub_rng(spec.seed, RNG_SELECT + t as u64));
        train.push(transformed(&base.train, &idx, apply));
        test.push(transformed(&base.test, &test_indices(base, spec, t), apply));
        transforms.push(TaskTransform::RotationDegrees(angle));
    }
    Ok(digit_stream(base, spec, transforms, HeadMode::Shared, train, test))
}

/// Contiguous, disjoint class blocks of size `C / T`, one per task.
pub fn class_split(num_classes: usize, num_tasks: usize) -> Result<Vec<Range<usize>>> {
    if num_tasks == 0 || num_classes % num_tasks != 0 {
        return Err(Error::config(format!(
            "{num_tasks} tasks do not divide {num_classes} classes evenly"
        )));
    }
    let k = num_classes / num_tasks;
    Ok((0..num_tasks).map(|t| t * k..(t + 1) * k).collect())
}

/// Class-incremental stream: task `t` holds only its own block of classes.
/// Models trained on it use per-task output heads.
pub fn build_split_classes(base: &DigitSplit, spec: &ContinuumSpec) -> Result<TaskStream> {
    spec.validate()?;
    check_base(base, spec)?;
    let num_classes = base.train.num_classes().max(base.test.num_classes());
    let blocks = class_split(num_classes, spec.num_tasks)?;
    let mut transforms = Vec::with_capacity(spec.num_tasks);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (t, classes) in blocks.into_iter().enumerate() {
        let pick = |set: &LabeledSet| -> Vec<usize> {
            (0..set.len()).filter(|&i| classes.contains(&set.labels[i])).collect()
        };
        let pool = pick(&base.train);
        let mut order = select(pool.len(), spec.examples_per_task, &mut sub_rng(spec.seed, RNG_SELECT + t as u64));
        for i in order.iter_mut() {
            *i = pool[*i];
        }
        let mut test_idx = pick(&base.test);
        if let Some(n) = spec.test_per_task {
            test_idx.truncate(n);
        }
        if order.is_empty() || test_idx.is_empty() {
            return Err(Error::config(format!("no examples of classes {classes:?}")));
        }
        train.push(transformed(&base.train, &order, |r| r.to_vec()));
        test.push(transformed(&base.test, &test_idx, |r| r.to_vec()));
        transforms.push(TaskTransform::Classes(classes));
    }
    Ok(digit_stream(base, spec, transforms, HeadMode::PerTaskOutput, train, test))
}

/// Random orthogonal matrix (Gram-Schmidt on a Gaussian matrix).
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for r in &rows {
            let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(r) {
                *a -= dot * b;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            rows.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Matrix::from_rows(&rows).expect("square")
}

/// Class prototypes of the synthetic stream, one row per class.
pub fn synthetic_prototypes(spec: &ContinuumSpec) -> Matrix {
    let s = &spec.synthetic;
    let mut rng = sub_rng(spec.seed, RNG_SYNTH);
    let data = (0..s.num_classes * s.input_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::new(s.num_classes, s.input_dim, data).expect("sized")
}

/// Gaussian class prototypes plus isotropic noise, seen through a
/// per-task orthogonal change of basis (identity for task 0). One fifth of
/// each task's generated examples is held out for testing.
pub fn build_synthetic(spec: &ContinuumSpec) -> Result<TaskStream> {
    spec.validate()?;
    let s = &spec.synthetic;
    let d = s.input_dim;
    let protos = synthetic_prototypes(spec);
    let n_train = spec.examples_per_task;
    let n_test = spec.test_per_task.unwrap_or(n_train.div_ceil(4));
    let mut transforms = Vec::with_capacity(spec.num_tasks);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for t in 0..spec.num_tasks {
        let basis = if t == 0 {
            Matrix::identity(d)
        } else {
            random_orthogonal(d, &mut sub_rng(spec.seed, RNG_TRANSFORM + t as u64))
        };
        let mut rng = sub_rng(spec.seed, RNG_SELECT + t as u64);
        let total = n_train + n_test;
        let mut raw = Matrix::zeros(total, d);
        let mut labels = Vec::with_capacity(total);
        for r in 0..total {
            let y = r % s.num_classes;
            labels.push(y);
            for (j, v) in raw.row_mut(r).iter_mut().enumerate() {
                let eps: f64 = StandardNormal.sample(&mut rng);
                *v = protos.get(y, j) + s.noise * eps;
            }
        }
        // x_rotated = basis * x, i.e. rows times basis^T
        let x = raw.matmul(&basis.transpose())?;
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut rng);
        let (tr, te) = order.split_at(n_train);
        train.push(TaskData {
            x: x.select_rows(tr),
            y: tr.iter().map(|&i| labels[i]).collect(),
        });
        test.push(TaskData {
            x: x.select_rows(te),
            y: te.iter().map(|&i| labels[i]).collect(),
        });
        transforms.push(TaskTransform::Basis(basis));
    }
    Ok(TaskStream {
        train,
        test,
        transforms,
        num_classes: s.num_classes,
        input_dim: d,
        minibatch: spec.minibatch,
        epochs_per_task: spec.epochs_per_task,
        head_mode: HeadMode::Shared,
        seed: spec.seed,
    })
}
