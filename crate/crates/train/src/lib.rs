//! Models, training and benchmarking built on the WHT layers.

pub mod bench;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod optim;
pub mod param;
pub mod real;
pub mod report;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use data::{Dataset, DatasetConfig, DatasetSource, SyntheticConfig};
pub use error::{Result, TrainError};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentResult, ModelSource};
pub use model::{presets, BlockVariant, InputShape, LayerSpec, Model, ModelSpec, ParamTotals};
pub use optim::{LrSchedule, Optimizer, OptimizerConfig};
pub use param::{Param, ParamRole, ParamView};
pub use real::Real;
pub use report::{TrainSummary, SCHEMA_VERSION};
pub use trainer::{evaluate, train, EpochRecord, TrainConfig, TrainOutcome};
