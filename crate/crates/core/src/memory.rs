//! Per-task episodic memory: a ring buffer holding the last `m = M / T`
//! examples seen for each task.

use crate::error::{Error, Result};
use crate::linalg::{FlatVector, Matrix};
use crate::predictor::Predictor;

#[derive(Debug, Clone, Default)]
struct Slot {
    /// Up to `m` rows in ring order; row `next` is the oldest once full.
    x: Vec<f64>,
    y: Vec<usize>,
    next: usize,
}

#[derive(Debug, Clone)]
pub struct EpisodicMemory {
    total_budget: usize,
    per_task: usize,
    input_dim: Option<usize>,
    slots: Vec<Slot>,
}

impl EpisodicMemory {
    /// Splits a budget of `total_budget` examples evenly across `num_tasks`.
    pub fn new(total_budget: usize, num_tasks: usize) -> Result<Self> {
        if num_tasks == 0 {
            return Err(Error::config("episodic memory needs at least one task"));
        }
        Ok(EpisodicMemory {
            total_budget,
            per_task: total_budget / num_tasks,
            input_dim: None,
            slots: vec![Slot::default(); num_tasks],
        })
    }

    pub fn total_budget(&self) -> usize {
        self.total_budget
    }

    pub fn per_task_capacity(&self) -> usize {
        self.per_task
    }

    pub fn num_tasks(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self, task: usize) -> usize {
        self.slots.get(task).map_or(0, |s| s.y.len())
    }

    pub fn is_empty(&self, task: usize) -> bool {
        self.len(task) == 0
    }

    pub fn total_len(&self) -> usize {
        self.slots.iter().map(|s| s.y.len()).sum()
    }

    /// Appends a batch to task `task`'s buffer, evicting the oldest entries
    /// once it holds `m` examples.
    pub fn store(&mut self, task: usize, x: &Matrix, y: &[usize]) -> Result<()> {
        if task >= self.slots.len() {
            return Err(Error::domain(format!(
                "task {task} out of range for a memory of {} tasks",
                self.slots.len()
            )));
        }
        if x.rows() != y.len() {
            return Err(Error::shape(format!(
                "{} labels for {} rows",
                y.len(),
                x.rows()
            )));
        }
        if x.rows() == 0 {
            return Ok(());
        }
        let d = *self.input_dim.get_or_insert(x.cols());
        if x.cols() != d {
            return Err(Error::shape(format!(
                "memory holds {d}-dimensional inputs, got {}",
                x.cols()
            )));
        }
        let m = self.per_task;
        if m == 0 {
            return Ok(());
        }
        let slot = &mut self.slots[task];
        for (r, &label) in y.iter().enumerate() {
            let row = x.row(r);
            if slot.y.len() < m {
                slot.x.extend_from_slice(row);
                slot.y.push(label);
            } else {
                let i = slot.next;
                slot.x[i * d..(i + 1) * d].copy_from_slice(row);
                slot.y[i] = label;
            }
            slot.next = (slot.next + 1) % m;
        }
        Ok(())
    }

    /// Stored examples of `task`, oldest first.
    pub fn contents(&self, task: usize) -> Option<(Matrix, Vec<usize>)> {
        let slot = self.slots.get(task)?;
        let n = slot.y.len();
        let d = self.input_dim.unwrap_or(0);
        let start = if n == self.per_task { slot.next } else { 0 };
        let order: Vec<usize> = (0..n).map(|i| (start + i) % n.max(1)).collect();
        let x = Matrix::new(n, d, slot.x.clone()).ok()?.select_rows(&order);
        let y = order.iter().map(|&i| slot.y[i]).collect();
        Some((x, y))
    }

    /// Mean loss over everything stored for `task` and its gradient, with
    /// the model evaluated under task id `task`.
    pub fn memory_loss_grad(&self, task: usize, model: &Predictor) -> Result<(f64, FlatVector)> {
        let slot = self
            .slots
            .get(task)
            .ok_or_else(|| Error::domain(format!("task {task} has no memory slot")))?;
        if slot.y.is_empty() {
            return Err(Error::domain(format!("episodic memory of task {task} is empty")));
        }
        // the mean loss does not depend on row order, so the ring is used as-is
        let d = self.input_dim.unwrap_or(0);
        let x = Matrix::new(slot.y.len(), d, slot.x.clone())?;
        model.loss_and_grad(&x, task, &slot.y)
    }
}
