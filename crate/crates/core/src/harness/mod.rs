//! Scenario loading, the simulation loop and mission bookkeeping.

pub mod scenario;
pub mod sim;
pub mod telemetry;

pub use scenario::{Scenario, TimedCommand, MASTER_DT_S};
pub use sim::{
    run_scenario, MissionOutcome, RobotState, Simulation, StepReport, FIRMWARE_PERIOD_TICKS, TELEMETRY_PERIOD_TICKS,
};
pub use telemetry::{
    classify_log, stall_detector, ClassifyLimits, MissionResult, StallVerdict, TelemetryLog, TelemetryRow, CSV_HEADER,
};
