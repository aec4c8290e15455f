//! Test accuracy on every task every few minibatches, written as CSV.

use gem_core::continuum::DatasetKind;
use gem_core::experiment::{run, write_outputs, ExperimentConfig};
use gem_core::LearnerKind;

fn main() -> gem_core::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gem_curves"));
    for kind in [LearnerKind::Single, LearnerKind::Gem] {
        let mut cfg = ExperimentConfig::new(DatasetKind::Synthetic, kind);
        cfg.learner.memory = 640;
        cfg.eval_every = Some(5);
        let rep = run(&cfg)?;
        let dir = out.join(kind.name());
        write_outputs(&rep, &dir)?;
        let points = rep.curve.as_ref().map_or(0, |c| c.points.len());
        println!("{kind}: {points} evaluations -> {}", dir.join("curves.csv").display());
    }
    Ok(())
}
