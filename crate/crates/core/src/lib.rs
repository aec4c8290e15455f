//! Gradient Episodic Memory for continual learning.
//!
//! A learner sees a stream of `(x, task, y)` triplets, one task at a time.
//! [`learners::Gem`] keeps a small episodic memory per task and projects
//! each gradient step so that the loss on earlier tasks' memories does not
//! increase. Baselines ([`learners::PlainSgd`], [`learners::Independent`],
//! [`learners::Ewc`]) share the same [`learners::Learner`] interface.
//!
//! The `examples/` directory has one runnable program per capability:
//!
//! - `project_gradient`: projecting a gradient against past-task gradients
//! - `dual_qp`: solving the small dual quadratic program directly
//! - `synthetic_stream`: every learner on the built-in synthetic stream
//! - `mnist_rotations`: rotated / permuted digits (needs the IDX files)
//! - `ewc_baseline`: the elastic-weight-consolidation baseline
//! - `memory_size_sweep`: accuracy as the memory budget grows
//! - `grid_search`: hyper-parameter search with a ranked table
//! - `metrics_report`: ACC / BWT / FWT from an accuracy matrix
//! - `checkpoint`: saving and reloading a predictor
//! - `fine_grained_curves`: evaluation every few minibatches

pub mod continuum;
pub mod error;
pub mod experiment;
pub mod learners;
pub mod linalg;
pub mod memory;
pub mod metrics;
pub mod predictor;
pub mod projection;

pub use error::{Error, Result};
pub use experiment::{run, ExperimentConfig, Report};
pub use learners::{build_learner, Learner, LearnerConfig, LearnerKind};
pub use linalg::{FlatVector, Matrix};
pub use metrics::RMatrix;
pub use predictor::{HeadMode, MlpConfig, Predictor};
pub use projection::{project, GradientBank, Projection};
