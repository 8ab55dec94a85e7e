//! Stroke-sequence sketch classification with strategy specialists.
//!
//! The crate covers the whole pipeline: Quick Draw style ingestion and
//! preprocessing, a conv + BiLSTM classifier with hand-written backward
//! passes, Adam training with early stopping, adversarial drawing-strategy
//! generators, transfer-learned specialists combined by probability
//! averaging, an evaluation grid, and a deterministic guessing-game engine.

pub mod checkpoint;
pub mod dataset;
pub mod doodles;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod game;
pub mod model;
pub mod nn;
pub mod rdp;
pub mod strategies;
pub mod stroke;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMetadata};
pub use dataset::{split_dataset, Dataset, DatasetSplit, DatasetTag};
pub use ensemble::{adapt_specialist, EnsembleBundle, EnsembleMember, Predictor};
pub use error::{Error, Result};
pub use eval::{evaluate_grid, MetricRow};
pub use model::{ArchitectureSpec, Batch, ModelState};
pub use rdp::rdp_simplify;
pub use strategies::{CompoundTable, DistractionConfig, DottedConfig, Strategy, StrategyConfig};
pub use stroke::{
    encode, normalize, parse_quickdraw_line, prepare, ClassTable, EncodedSequence, Point, Sketch,
    Stroke,
};
pub use train::{train, TrainConfig, TrainReport};
