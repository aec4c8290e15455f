//! Every learner on the built-in synthetic stream (no data files needed).

use gem_core::continuum::DatasetKind;
use gem_core::experiment::{report_timing, run, ExperimentConfig};
use gem_core::LearnerKind;

fn main() -> gem_core::Result<()> {
    let mut reports = Vec::new();
    for kind in [
        LearnerKind::Single,
        LearnerKind::Independent,
        LearnerKind::Multimodal,
        LearnerKind::Ewc,
        LearnerKind::Gem,
    ] {
        let mut cfg = ExperimentConfig::new(DatasetKind::Synthetic, kind);
        cfg.learner.memory = 640;
        cfg.learner.ewc_lambda = 10.0;
        let rep = run(&cfg)?;
        println!(
            "{:<12} ACC {:.4}  BWT {:+.4}  FWT {:+.4}",
            kind,
            rep.acc,
            rep.bwt.unwrap_or(f64::NAN),
            rep.fwt.unwrap_or(f64::NAN)
        );
        reports.push(rep);
    }
    println!();
    print!("{}", report_timing(&reports)?);
    Ok(())
}
