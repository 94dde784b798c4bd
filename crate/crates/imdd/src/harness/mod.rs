//! Experiment orchestration: configuration files, checkpoints, distance
//! sweeps and result emission (CSV and SVG).

mod checkpoint;
mod config;
mod emit;
mod sweep;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::{EstimatorConfig, ExperimentConfig, HarnessConfig, MlsdConfig, SystemKind};
pub use emit::{parse_result_csv, plot_ber_svg, result_csv_bytes, ResultRow};
pub use sweep::{
    checkpoint_path, evaluate_sbrnn, prepare_sbrnn_artifacts, run_sweep, SbrnnArtifacts,
    SbrnnEval, WeightsRecord,
};
