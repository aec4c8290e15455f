//! Test-accuracy matrix and the transfer metrics computed from it.
//!
//! `R[i][j]` is the accuracy on task `j`'s test set right after the last
//! minibatch of task `i`. `baseline[j]` is the accuracy of the untrained
//! model on task `j`.

use serde::{Deserialize, Serialize};

use crate::continuum::TaskData;
use crate::error::{Error, Result};
use crate::learners::Learner;

const EVAL_CHUNK: usize = 1000;

/// Fraction of rows of `data` that `learner` classifies correctly as task `task`.
pub fn accuracy(learner: &dyn Learner, data: &TaskData, task: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain(format!("test set of task {task} is empty")));
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let x = data.x.select_rows(chunk);
        let pred = learner.predict(&x, task)?;
        correct += chunk.iter().zip(pred).filter(|(&i, p)| data.y[i] == *p).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Accuracy on every task's test set, in task order.
pub fn evaluate_all(learner: &dyn Learner, test_sets: &[TaskData]) -> Result<Vec<f64>> {
    test_sets
        .iter()
        .enumerate()
        .map(|(k, data)| accuracy(learner, data, k))
        .collect()
}

fn check_square(r: &[Vec<f64>]) -> Result<usize> {
    let t = r.len();
    if t == 0 {
        return Err(Error::domain("R matrix has no rows"));
    }
    if let Some(bad) = r.iter().find(|row| row.len() != t) {
        return Err(Error::shape(format!(
            "R matrix must be {t}x{t}, found a row of length {}",
            bad.len()
        )));
    }
    Ok(t)
}

/// Average accuracy over all tasks after the last one is learned.
pub fn acc(r: &[Vec<f64>]) -> Result<f64> {
    let t = check_square(r)?;
    Ok(r[t - 1].iter().sum::<f64>() / t as f64)
}

/// Mean change in accuracy of tasks `0..T-1` between right after learning
/// them and the end of the stream.
pub fn bwt(r: &[Vec<f64>]) -> Result<f64> {
    let t = check_square(r)?;
    if t < 2 {
        return Err(Error::domain("backward transfer needs at least two tasks"));
    }
    let last = &r[t - 1];
    Ok((0..t - 1).map(|i| last[i] - r[i][i]).sum::<f64>() / (t - 1) as f64)
}

/// Mean accuracy advantage on task `i` just before training on it, over the
/// untrained baseline, for tasks `1..T`.
pub fn fwt(r: &[Vec<f64>], baseline: &[f64]) -> Result<f64> {
    let t = check_square(r)?;
    if t < 2 {
        return Err(Error::domain("forward transfer needs at least two tasks"));
    }
    if baseline.len() != t {
        return Err(Error::shape(format!(
            "baseline has {} entries for {t} tasks",
            baseline.len()
        )));
    }
    Ok((1..t).map(|i| r[i - 1][i] - baseline[i]).sum::<f64>() / (t - 1) as f64)
}

/// One evaluation on the fine-grained schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Minibatches observed so far.
    pub batches_seen: usize,
    pub examples_seen: usize,
    /// Task being trained when the evaluation ran.
    pub task: usize,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub every: usize,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn new(every: usize) -> Self {
        LearningCurve {
            every,
            points: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let t = self.points.first().map_or(0, |p| p.accuracies.len());
        let mut out = String::from("batches_seen,examples_seen,task");
        for k in 0..t {
            out.push_str(&format!(",acc_task_{k}"));
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!("{},{},{}", p.batches_seen, p.examples_seen, p.task));
            for a in &p.accuracies {
                out.push_str(&format!(",{a:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RMatrix {
    pub baseline: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl RMatrix {
    pub fn new(baseline: Vec<f64>) -> Self {
        RMatrix {
            baseline,
            rows: Vec::new(),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.baseline.len()
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.num_tasks() {
            return Err(Error::shape(format!(
                "row of {} accuracies for {} tasks",
                row.len(),
                self.num_tasks()
            )));
        }
        if self.rows.len() == self.num_tasks() {
            return Err(Error::domain("R matrix already has one row per task"));
        }
        if let Some(bad) = row.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::domain(format!("accuracy {bad} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.num_tasks()
    }

    pub fn acc(&self) -> Result<f64> {
        acc(&self.rows)
    }

    pub fn bwt(&self) -> Result<f64> {
        bwt(&self.rows)
    }

    pub fn fwt(&self) -> Result<f64> {
        fwt(&self.rows, &self.baseline)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r() -> Vec<Vec<f64>> {
        vec![vec![0.9, 0.1], vec![0.8, 0.7]]
    }

    #[test]
    fn hand_computed_example() {
        let r = r();
        assert_eq!(acc(&r).unwrap(), 0.75);
        assert!((bwt(&r).unwrap() + 0.1).abs() <= 2.0 * f64::EPSILON);
        assert_eq!(fwt(&r, &[0.1, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn constant_columns_have_no_forgetting() {
        let r = vec![vec![0.5, 0.2, 0.3], vec![0.5, 0.6, 0.1], vec![0.5, 0.6, 0.9]];
        assert_eq!(bwt(&r).unwrap(), 0.0);
    }

    #[test]
    fn baseline_on_superdiagonal_gives_zero_fwt() {
        let b = [0.1, 0.12, 0.09];
        let r = vec![vec![0.9, 0.12, 0.3], vec![0.8, 0.7, 0.09], vec![0.5, 0.6, 0.9]];
        assert_eq!(fwt(&r, &b).unwrap(), 0.0);
    }

    #[test]
    fn swapping_columns_changes_bwt() {
        let r = vec![vec![0.9, 0.2, 0.1], vec![0.5, 0.8, 0.2], vec![0.4, 0.7, 0.9]];
        let swapped: Vec<Vec<f64>> = r.iter().map(|row| vec![row[1], row[0], row[2]]).collect();
        assert_ne!(bwt(&r).unwrap(), bwt(&swapped).unwrap());
    }

    #[test]
    fn single_task_has_no_transfer() {
        let r = vec![vec![0.7]];
        assert_eq!(acc(&r).unwrap(), 0.7);
        assert!(matches!(bwt(&r), Err(Error::Domain(_))));
        assert!(matches!(fwt(&r, &[0.1]), Err(Error::Domain(_))));
        assert!(acc(&[vec![0.1, 0.2]]).is_err());
    }

    #[test]
    fn rmatrix_rejects_bad_rows() {
        let mut m = RMatrix::new(vec![0.1, 0.1]);
        assert!(m.push_row(vec![0.5]).is_err());
        assert!(m.push_row(vec![0.5, 1.5]).is_err());
        m.push_row(vec![0.9, 0.1]).unwrap();
        m.push_row(vec![0.8, 0.7]).unwrap();
        assert!(m.is_complete());
        assert!(m.push_row(vec![0.8, 0.7]).is_err());
        assert_eq!(m.acc().unwrap(), 0.75);
    }

    #[test]
    fn curve_csv_layout() {
        let mut c = LearningCurve::new(5);
        c.points.push(CurvePoint {
            batches_seen: 5,
            examples_seen: 50,
            task: 0,
            accuracies: vec![0.5, 0.25],
        });
        assert_eq!(
            c.to_csv(),
            "batches_seen,examples_seen,task,acc_task_0,acc_task_1\n5,50,0,0.500000,0.250000\n"
        );
    }
}
