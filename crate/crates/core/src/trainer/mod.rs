//! Training, evaluation metrics and the corruption-by-denoiser experiment.

mod experiment;
mod metrics;
mod model;
mod split;
mod train;

pub use experiment::{
    experiment_matrix, results_csv, write_loss_csv, write_results_csv, ExperimentConfig, ExperimentOutput,
    ExperimentRow, ImageSource, TrainedRun, ALL_KINDS_LABEL, RESULTS_HEADER,
};
pub use metrics::{accuracy, confusion_matrix, quadratic_kappa, Cell, MetricsReport};
pub use model::{argmax, ModelConfig};
pub use split::stratified_split;
pub use train::{evaluate, predict, train, TrainConfig};
