//! Experiment orchestration: configuration, demand synthesis, end-to-end runs and load
//! sweeps.

mod config;
mod gravity;
mod pipeline;
mod sweep;

pub use config::{parse_config, DemandSource, Experiment, ExperimentConfig, QKind, QSource, UtilityConfig};
pub use gravity::{gravity_demands, Masses};
pub use pipeline::{
    parse_weights, run_ospf, run_pipeline, run_pipeline_to, run_split, summary_json, OspfRun,
    PipelineRun, PipelineSettings, SplitRun, WeightsFile,
};
pub use sweep::{find_operating_point, run_sweep, scale_demands, sweep_csv, SweepPoint};
