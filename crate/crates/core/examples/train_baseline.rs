//! Trains a desk-scale baseline on synthetic doodles and saves it.
//!
//! `cargo run --release --example train_baseline -- [per_class] [out.inkm]`

use sketchnet::experiment::encode_all;
use sketchnet::{
    doodles, save_checkpoint, split_dataset, train, ArchitectureSpec, ModelState, TrainConfig, TrainingMetadata,
};

fn main() -> sketchnet::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let per_class: usize = args.next().map_or(200, |a| a.parse().expect("per_class"));
    let out = args.next().unwrap_or_else(|| "baseline.inkm".into());

    let classes = doodles::default_class_table();
    let split = split_dataset(&doodles::generate(&classes, per_class, 1)?, 0.1, 0.1, 1)?;
    let spec = ArchitectureSpec::desk_scale(classes.len());
    let initial = ModelState::build(&spec, 1)?;
    println!("{} parameters", initial.parameter_count());

    let config = TrainConfig {
        batch_size: 8,
        max_epochs: 40,
        length_buckets: true,
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, report) = train(&initial, &encode_all(&split.train)?, &encode_all(&split.validation)?, &config)?;
    let best = report.best().expect("at least one epoch");
    let test = sketchnet::eval::evaluate(&model, &encode_all(&split.test)?)?;
    println!(
        "best epoch {} of {} ({:?}), test top-1 {:.1}%, top-5 {:.1}%, {:.1}s",
        best.epoch,
        report.epochs.len(),
        report.stop_reason,
        test.top1,
        test.top5,
        report.wall_time.as_secs_f64()
    );
    save_checkpoint(
        &out,
        &model,
        &TrainingMetadata {
            epoch: best.epoch as u64,
            best_validation_loss: Some(best.validation_loss),
        },
    )?;
    println!("saved {out}");
    Ok(())
}
