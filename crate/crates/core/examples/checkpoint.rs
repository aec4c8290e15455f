//! Saves a trained predictor and reloads it.

use gem_core::continuum::{build_stream, ContinuumSpec, DatasetKind};
use gem_core::predictor::{MlpConfig, Predictor};
use gem_core::projection::sgd_step;

fn main() -> gem_core::Result<()> {
    let stream = build_stream(&ContinuumSpec::new(DatasetKind::Synthetic), None)?;
    let cfg = MlpConfig::new(stream.input_dim, stream.num_classes, stream.num_tasks());
    let mut model = Predictor::new(cfg, 42)?;
    for batch in stream.task_batches(0) {
        let (_, g) = model.loss_and_grad(&batch.x, batch.task, &batch.y)?;
        sgd_step(&mut model, &g, 0.1)?;
    }

    let path = std::env::temp_dir().join("gem_checkpoint.bin");
    model.save(&path)?;
    let restored = Predictor::load(&path)?;
    println!("{} parameters written to {}", restored.param_count(), path.display());

    let test = &stream.test[0];
    let a = model.predict(&test.x, 0)?;
    let b = restored.predict(&test.x, 0)?;
    println!("identical predictions: {}", a == b);
    println!("identical parameters: {}", model.params() == restored.params());
    Ok(())
}
