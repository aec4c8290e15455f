//! Single vs GEM on rotated digits.
//!
//! Usage: cargo run --release --example mnist_rotations -- <dir with the IDX files> [permutations]

use std::path::PathBuf;

use gem_core::continuum::{mnist_available, DatasetKind};
use gem_core::experiment::{format_r_matrix, run, ExperimentConfig};
use gem_core::LearnerKind;

fn main() -> gem_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist".into()));
    let dataset = match args.next().as_deref() {
        Some("permutations") => DatasetKind::Permutations,
        _ => DatasetKind::Rotations,
    };
    if !mnist_available(&dir) {
        eprintln!("no IDX files in {}; try the synthetic_stream example instead", dir.display());
        std::process::exit(3);
    }
    for kind in [LearnerKind::Single, LearnerKind::Gem] {
        let mut cfg = ExperimentConfig::new(dataset, kind);
        cfg.data_dir = Some(dir.clone());
        let rep = run(&cfg)?;
        println!(
            "{kind}: ACC {:.4} BWT {:+.4} FWT {:+.4} ({:.1} s)",
            rep.acc,
            rep.bwt.unwrap_or(f64::NAN),
            rep.fwt.unwrap_or(f64::NAN),
            rep.wall_clock_seconds
        );
        print!("{}", format_r_matrix(&rep.r_matrix()));
    }
    Ok(())
}
