//! Elastic weight consolidation across a range of penalty strengths.

use gem_core::continuum::DatasetKind;
use gem_core::experiment::{run, ExperimentConfig};
use gem_core::LearnerKind;

fn main() -> gem_core::Result<()> {
    println!("{:>8}  {:>7}  {:>8}", "lambda", "ACC", "BWT");
    for lambda in [0.0, 1.0, 3.0, 10.0, 30.0, 100.0] {
        let mut cfg = ExperimentConfig::new(DatasetKind::Synthetic, LearnerKind::Ewc);
        cfg.learner.ewc_lambda = lambda;
        cfg.learner.memory = 640;
        let rep = run(&cfg)?;
        println!("{lambda:>8}  {:>7.4}  {:>+8.4}", rep.acc, rep.bwt.unwrap_or(f64::NAN));
    }
    Ok(())
}
