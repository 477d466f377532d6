use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("pipe course has no segments")]
    Empty,
    #[error("segment {index}: {what} must be positive, got {value}")]
    NonPositiveDimension { index: usize, what: &'static str, value: f64 },
    #[error("segment {index}: diameter {diameter_m} m outside [0.05, 0.15] m")]
    DiameterOutOfRange { index: usize, diameter_m: f64 },
    #[error("segment {index}: increaser must change diameter")]
    FlatIncreaser { index: usize },
    #[error("segment {index}: only an increaser may change diameter")]
    TaperedNonIncreaser { index: usize },
    #[error("segment {index}: inclination {inclination} outside [-1, 1]")]
    InclinationOutOfRange { index: usize, inclination: f64 },
    #[error("diameter jumps by {mismatch_m} m at junction {junction}")]
    DiameterDiscontinuity { junction: usize, mismatch_m: f64 },
    #[error("arclength {s} m outside course [0, {total}] m")]
    OutOfRange { s: f64, total: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("clearance {clearance_m} m is not positive: wheels too large for the bore")]
    NoClearance { clearance_m: f64 },
    #[error("clearance {clearance_m} m exceeds link length {link_m} m: robot cannot span the bore")]
    CannotSpan { clearance_m: f64, link_m: f64 },
    #[error("bend curvature {curvature} 1/m too tight for link length {link_m} m")]
    BendTooTight { curvature: f64, link_m: f64 },
    #[error("unphysical bracing: cos(phi) = {cos_phi}")]
    Unphysical { cos_phi: f64 },
    #[error("robot parameter {name} = {value} is invalid: {reason}")]
    InvalidParam { name: &'static str, value: f64, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActuationError {
    #[error("duty ratio {0} % outside [0, 100]")]
    DutyOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("lever length must be positive, got {0} m")]
    NonPositiveLever(f64),
    #[error("need at least 5 distinct duty values for a quartic fit, got {0}")]
    RankDeficient(usize),
    #[error("invalid sweep protocol: {0}")]
    InvalidProtocol(&'static str),
}

/// Codec failures. Each malformed-frame condition has its own variant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("frame id {0:#05x} is neither a command nor a telemetry id")]
    UnknownId(u16),
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("opcode {opcode:#04x} expects dlc {expected}, frame has {actual}")]
    DlcMismatch { opcode: u8, expected: u8, actual: u8 },
    #[error("operand {operand} out of range for opcode {opcode:#04x}")]
    OperandOutOfRange { opcode: u8, operand: i32 },
    #[error("empty command frame")]
    EmptyCommand,
    #[error("telemetry node byte {payload} disagrees with frame id node {id}")]
    NodeMismatch { id: u8, payload: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("id {0:#x} does not fit in 11 bits")]
    IdTooLarge(u16),
    #[error("payload of {0} bytes exceeds 8")]
    PayloadTooLong(usize),
    #[error("command operand out of range: {0:?}")]
    InvalidCommand(crate::canbus::Command),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("pipe course: {0}")]
    Geometry(#[from] GeometryError),
    #[error("robot parameters: {0}")]
    Config(#[from] ConfigError),
    #[error("scenario invalid: {0}")]
    Invalid(String),
    #[error("unknown shipped scenario `{0}`")]
    UnknownShipped(String),
}
