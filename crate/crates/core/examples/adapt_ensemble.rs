//! Transfer-learns a dotted-line specialist from a baseline, bundles both
//! and prints the model x dataset grid.
//!
//! `cargo run --release --example adapt_ensemble -- [per_class]`

use sketchnet::eval::{evaluate_grid, to_text, GridDataset, GridModel};
use sketchnet::experiment::encode_all;
use sketchnet::strategies::{synthesize_strategy_dataset, Strategy, StrategyConfig};
use sketchnet::{
    adapt_specialist, doodles, split_dataset, train, ArchitectureSpec, EnsembleBundle, EnsembleMember, ModelState,
    Predictor, TrainConfig,
};

fn main() -> sketchnet::Result<()> {
    env_logger::init();
    let per_class: usize = std::env::args().nth(1).map_or(150, |a| a.parse().expect("per_class"));
    let classes = doodles::default_class_table();
    let split = split_dataset(&doodles::generate(&classes, per_class, 2)?, 0.1, 0.1, 2)?;
    let config = TrainConfig {
        batch_size: 4,
        max_epochs: 30,
        length_buckets: true,
        seed: 2,
        ..TrainConfig::default()
    };
    let initial = ModelState::build(&ArchitectureSpec::desk_scale(classes.len()), 2)?;
    let (baseline, base_report) = train(&initial, &encode_all(&split.train)?, &encode_all(&split.validation)?, &config)?;

    let strategies = StrategyConfig {
        random_phase: true,
        ..StrategyConfig::default()
    };
    let dotted = synthesize_strategy_dataset(&split.train, Strategy::Dotted, &strategies, &[], 93, 20)?;
    let parts = split_dataset(&dotted, 0.1, 0.1, 20)?;
    let (specialist, spec_report) =
        adapt_specialist(&baseline, &encode_all(&parts.train)?, &encode_all(&parts.validation)?, &config)?;
    println!(
        "baseline {:.1}s, specialist {:.1}s ({:.1}% of baseline)",
        base_report.wall_time.as_secs_f64(),
        spec_report.wall_time.as_secs_f64(),
        100.0 * spec_report.wall_time.as_secs_f64() / base_report.wall_time.as_secs_f64()
    );

    let bundle = EnsembleBundle::new(vec![
        EnsembleMember {
            name: "baseline".into(),
            model: baseline.clone_state(),
        },
        EnsembleMember {
            name: "dotted".into(),
            model: specialist.clone_state(),
        },
    ])?;
    let clean = encode_all(&split.test)?;
    let dotted_test = encode_all(&synthesize_strategy_dataset(
        &split.test,
        Strategy::Dotted,
        &strategies,
        &[],
        split.test.len(),
        21,
    )?)?;
    let models = [
        GridModel {
            name: "baseline".into(),
            repeats: vec![&baseline as &dyn Predictor],
        },
        GridModel {
            name: "dotted".into(),
            repeats: vec![&specialist as &dyn Predictor],
        },
        GridModel {
            name: "ensemble".into(),
            repeats: vec![&bundle as &dyn Predictor],
        },
    ];
    let datasets = [
        GridDataset {
            name: "clean".into(),
            repeats: vec![&clean],
        },
        GridDataset {
            name: "dotted".into(),
            repeats: vec![&dotted_test],
        },
    ];
    print!("{}", to_text(&evaluate_grid(&models, &datasets)?));
    Ok(())
}
