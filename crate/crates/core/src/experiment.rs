//! End-to-end desk-scale run: baseline, strategy specialists, ensemble and
//! the evaluation grid, repeated over several seeds.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::split_dataset;
use crate::doodles;
use crate::ensemble::{adapt_specialist, EnsembleBundle, EnsembleMember, Predictor};
use crate::error::Result;
use crate::eval::{evaluate_grid, GridDataset, GridModel, MetricRow};
use crate::model::{ArchitectureSpec, ModelState};
use crate::strategies::{
    synthesize_strategy_dataset, CompoundTable, DottedConfig, Strategy, StrategyConfig, DOODLE_COMPOUNDS,
};
use crate::stroke::{prepare, ClassTable, EncodedSequence, Sketch};
use crate::train::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendConfig {
    pub per_class: usize,
    pub validation_ratio: f64,
    pub test_ratio: f64,
    pub spec: ArchitectureSpec,
    pub baseline: TrainConfig,
    pub specialist: TrainConfig,
    pub strategies: StrategyConfig,
    /// `(strategy, sketches)` generated for specialist training, split
    /// 80/10/10.
    pub strategy_sizes: Vec<(Strategy, usize)>,
    pub seeds: Vec<u64>,
}

impl Default for TrendConfig {
    fn default() -> Self {
        let baseline = TrainConfig {
            batch_size: 4,
            max_epochs: 200,
            patience: 20,
            length_buckets: true,
            ..TrainConfig::default()
        };
        TrendConfig {
            per_class: 1000,
            validation_ratio: 0.1,
            test_ratio: 0.1,
            spec: ArchitectureSpec::desk_scale(doodles::DOODLE_CLASSES.len()),
            specialist: baseline.clone(),
            baseline,
            strategies: StrategyConfig {
                dotted: DottedConfig {
                    dash_length: 24.0,
                    ..DottedConfig::default()
                },
                random_phase: true,
                ..StrategyConfig::default()
            },
            strategy_sizes: vec![(Strategy::Distraction, 105), (Strategy::Dotted, 93), (Strategy::Rebus, 66)],
            seeds: vec![1, 2, 3],
        }
    }
}

/// Everything one seed produced.
pub struct SeedRun {
    pub seed: u64,
    pub baseline: ModelState,
    pub baseline_report: TrainReport,
    pub specialists: Vec<(Strategy, ModelState, TrainReport)>,
    /// `("clean", ...)` followed by one held-out test set per strategy.
    pub test_sets: Vec<(String, Vec<EncodedSequence>)>,
}

impl SeedRun {
    pub fn ensemble(&self) -> Result<EnsembleBundle> {
        let mut members = vec![EnsembleMember {
            name: "baseline".into(),
            model: self.baseline.clone_state(),
        }];
        for (s, m, _) in &self.specialists {
            members.push(EnsembleMember {
                name: s.name().into(),
                model: m.clone_state(),
            });
        }
        EnsembleBundle::new(members)
    }

    pub fn baseline_wall_time(&self) -> Duration {
        self.baseline_report.wall_time
    }
}

pub fn encode_all(sketches: &[Sketch]) -> Result<Vec<EncodedSequence>> {
    sketches.iter().map(prepare).collect()
}

/// Strategy versions of held-out clean test sketches. Rebus uses the
/// test sketches of the part classes.
pub fn strategy_test_set(
    clean_test: &[Sketch],
    strategy: Strategy,
    config: &StrategyConfig,
    compounds: &CompoundTable,
    classes: &ClassTable,
    seed: u64,
) -> Result<Vec<Sketch>> {
    let resolved = compounds.resolve(classes)?;
    let n = match strategy {
        Strategy::Rebus => clean_test.len() / 4,
        _ => clean_test.len(),
    };
    synthesize_strategy_dataset(clean_test, strategy, config, &resolved, n, seed)
}

pub fn run_seed(config: &TrendConfig, seed: u64) -> Result<SeedRun> {
    let classes = doodles::default_class_table();
    let compounds = CompoundTable::parse(DOODLE_COMPOUNDS)?;
    let resolved = compounds.resolve(&classes)?;
    let clean = doodles::generate(&classes, config.per_class, seed)?;
    let split = split_dataset(&clean, config.validation_ratio, config.test_ratio, seed)?;
    let train_set = encode_all(&split.train)?;
    let val_set = encode_all(&split.validation)?;

    let initial = ModelState::build(&config.spec, seed)?;
    let baseline_cfg = TrainConfig {
        seed,
        ..config.baseline.clone()
    };
    log::info!("seed {seed}: baseline on {} sketches", train_set.len());
    let (baseline, baseline_report) = train(&initial, &train_set, &val_set, &baseline_cfg)?;

    let mut test_sets = vec![("clean".to_string(), encode_all(&split.test)?)];
    let mut specialists = Vec::new();
    for (i, &(strategy, size)) in config.strategy_sizes.iter().enumerate() {
        let stream = seed.wrapping_mul(1000).wrapping_add(i as u64);
        let data = synthesize_strategy_dataset(&split.train, strategy, &config.strategies, &resolved, size, stream)?;
        let parts = split_dataset(&data, 0.1, 0.1, stream)?;
        let spec_cfg = TrainConfig {
            seed: stream,
            ..config.specialist.clone()
        };
        log::info!("seed {seed}: {} specialist on {} sketches", strategy.name(), parts.train.len());
        let (model, report) = adapt_specialist(&baseline, &encode_all(&parts.train)?, &encode_all(&parts.validation)?, &spec_cfg)?;
        specialists.push((strategy, model, report));
        let test = strategy_test_set(&split.test, strategy, &config.strategies, &compounds, &classes, stream + 500)?;
        test_sets.push((strategy.name().to_string(), encode_all(&test)?));
    }
    Ok(SeedRun {
        seed,
        baseline,
        baseline_report,
        specialists,
        test_sets,
    })
}

/// Grid rows averaged over `runs`: baseline, each specialist, ensemble.
pub fn trend_grid(runs: &[SeedRun]) -> Result<Vec<MetricRow>> {
    let ensembles: Vec<EnsembleBundle> = runs.iter().map(SeedRun::ensemble).collect::<Result<_>>()?;
    let mut models = vec![GridModel {
        name: "baseline".into(),
        repeats: runs.iter().map(|r| &r.baseline as &dyn Predictor).collect(),
    }];
    for (i, (strategy, _, _)) in runs[0].specialists.iter().enumerate() {
        models.push(GridModel {
            name: strategy.name().into(),
            repeats: runs.iter().map(|r| &r.specialists[i].1 as &dyn Predictor).collect(),
        });
    }
    models.push(GridModel {
        name: "ensemble".into(),
        repeats: ensembles.iter().map(|e| e as &dyn Predictor).collect(),
    });
    let datasets: Vec<GridDataset> = (0..runs[0].test_sets.len())
        .map(|d| GridDataset {
            name: runs[0].test_sets[d].0.clone(),
            repeats: runs.iter().map(|r| r.test_sets[d].1.as_slice()).collect(),
        })
        .collect();
    evaluate_grid(&models, &datasets)
}

pub fn run_trend(config: &TrendConfig) -> Result<(Vec<SeedRun>, Vec<MetricRow>)> {
    let runs: Vec<SeedRun> = config.seeds.iter().map(|&s| run_seed(config, s)).collect::<Result<_>>()?;
    let rows = trend_grid(&runs)?;
    Ok((runs, rows))
}

pub fn find<'a>(rows: &'a [MetricRow], model: &str, dataset: &str) -> Option<&'a MetricRow> {
    rows.iter().find(|r| r.model == model && r.dataset == dataset)
}
