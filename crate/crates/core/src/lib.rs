//! Online cadence estimation, cue-response learning and cue selection for
//! rhythmic auditory cueing, with a simulated walker to close the loop.

pub mod cds;
pub mod config;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod optimizer;
pub mod record;
pub mod runner;
pub mod signal_io;
pub mod strategy;
pub mod walker;

pub use cds::{CdsConfig, CdsState, CoefficientUpdate};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use gp::{GpHyperparams, GpModel, GpPrediction, ResponseDataset, ResponseInput};
pub use optimizer::{select_cue, CueBounds, CueDecision, CuePhase, OptimizerConfig};
pub use record::{CueEvent, Direction, TrialRecord, TrialSample};
pub use strategy::{decide, gate, CueCommand, DecisionContext, StrategyKind};
pub use walker::{WalkerParams, WalkerState};
