//! Grid search over learning rate and gamma for GEM.

use gem_core::continuum::DatasetKind;
use gem_core::experiment::{grid_search, ExperimentConfig, GridSpec};
use gem_core::LearnerKind;

fn main() -> gem_core::Result<()> {
    let mut base = ExperimentConfig::new(DatasetKind::Synthetic, LearnerKind::Gem);
    base.continuum.examples_per_task = 200;
    base.learner.memory = 250;

    let grid = GridSpec::from_json(r#"{"lr": [0.01, 0.03, 0.1, 0.3], "gamma": [0.0, 0.5, 1.0]}"#)?;
    println!("{} cells", grid.size()?);
    let outcome = grid_search(&grid, &base)?;
    print!("{}", outcome.to_csv());
    let best = &outcome.best.config.learner;
    println!("best: lr {} gamma {} -> ACC {:.4}", best.lr, best.gamma, outcome.best.acc);
    Ok(())
}
