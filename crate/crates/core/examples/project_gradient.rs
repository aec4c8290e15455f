//! Projects a gradient that would increase an earlier task's loss.

use gem_core::linalg::FlatVector;
use gem_core::projection::{project_with, GradientBank, ProjectionConfig};

fn main() -> gem_core::Result<()> {
    let g = FlatVector::from(vec![1.0, -1.0, 0.5]);
    let past = vec![
        FlatVector::from(vec![0.0, 1.0, 0.0]),
        FlatVector::from(vec![-0.5, 0.2, 1.0]),
    ];
    let bank = GradientBank::new(g.clone(), past.clone())?;
    println!("violated constraints: {:?}", bank.violations());

    for gamma in [0.0, 0.5] {
        let out = project_with(&bank, &ProjectionConfig::with_gamma(gamma))?;
        println!("gamma = {gamma}");
        println!("  projected gradient: {:?}", out.gradient.as_slice());
        if let Some(dual) = &out.dual {
            println!("  dual v = {:?} after {} sweeps", dual.v, dual.sweeps);
        }
        for (k, gk) in past.iter().enumerate() {
            println!("  <g~, g_{k}> = {:+.6}", out.gradient.dot(gk));
        }
    }
    Ok(())
}
