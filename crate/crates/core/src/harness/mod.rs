//! Configuration, the closed-loop simulation, trajectory logs and band metrics.

pub mod config;
pub mod log;
pub mod metrics;
pub mod sim;

pub use config::{KernelSchedule, set_key, ConfigError, RunConfig};
pub use log::{read_log, read_log_file, write_log, write_log_file, LogError, LogRecord, TrajectoryLog};
pub use metrics::{
    compute_metrics, compute_nested_metrics, read_metrics, write_metrics, BandRow, MetricsError, MetricsTable,
};
pub use sim::{run_simulation, run_simulation_with, FrameView, SimulationError, SimulationOutcome};
