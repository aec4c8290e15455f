//! GEM accuracy as the episodic memory budget grows.

use gem_core::continuum::DatasetKind;
use gem_core::experiment::{run, ExperimentConfig};
use gem_core::LearnerKind;

fn main() -> gem_core::Result<()> {
    let seeds = [0u64, 1, 2];
    println!("{:>6}  {:>6}  {:>7}", "M", "per-task", "ACC");
    for memory in [25, 160, 320, 640] {
        let mut total = 0.0;
        for &seed in &seeds {
            let mut cfg = ExperimentConfig::new(DatasetKind::Synthetic, LearnerKind::Gem);
            cfg.continuum.seed = seed;
            cfg.learner.seed = seed;
            cfg.learner.memory = memory;
            total += run(&cfg)?.acc;
        }
        let per_task = memory / 5;
        println!("{memory:>6}  {per_task:>8}  {:>7.4}", total / seeds.len() as f64);
    }
    Ok(())
}
