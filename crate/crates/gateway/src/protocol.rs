//! Wire messages. Each message is one JSON object terminated by a newline;
//! every object carries the schema version `v`.

use pipebot_core::canbus::Command;
use pipebot_core::geometry::{PipeNetwork, SegmentKind};
use pipebot_core::harness::{MissionResult, TelemetryRow};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Commander,
    Observer,
}

/// Messages a client may send, tagged by `cmd`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        role: Role,
    },
    Release,
    Drive {
        duty: i64,
    },
    Roll {
        duty: i64,
    },
    Stop,
    SetJointAngle {
        deg: f64,
    },
    SetJointDuty {
        duty: i64,
    },
    Estop,
    ResetEstop,
    /// Telemetry history for the last `seconds` (default 60).
    Replay {
        #[serde(default)]
        seconds: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MessageError {
    #[error("not valid JSON: {0}")]
    Json(String),
    #[error("unsupported protocol version {0}")]
    Version(u64),
    #[error("{0}")]
    Schema(String),
    #[error("{field} {value} outside {range}")]
    OutOfRange { field: &'static str, value: f64, range: &'static str },
}

impl ClientMessage {
    /// Parses one message. A missing `v` is read as the current version.
    pub fn parse(text: &str) -> Result<Self, MessageError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| MessageError::Json(e.to_string()))?;
        let obj = value.as_object_mut().ok_or_else(|| MessageError::Schema("expected a JSON object".into()))?;
        match obj.remove("v") {
            None => {}
            Some(v) => match v.as_u64() {
                Some(n) if n == u64::from(PROTOCOL_VERSION) => {}
                Some(n) => return Err(MessageError::Version(n)),
                None => return Err(MessageError::Schema(format!("`v` must be an integer, got {v}"))),
            },
        }
        let fields = obj.len();
        let msg: Self = serde_json::from_value(value).map_err(|e| MessageError::Schema(e.to_string()))?;
        // serde does not apply deny_unknown_fields to unit variants of a tagged enum
        let unit = matches!(
            msg,
            ClientMessage::Release | ClientMessage::Stop | ClientMessage::Estop | ClientMessage::ResetEstop
        );
        if unit && fields > 1 {
            return Err(MessageError::Schema(format!("`{}` takes no fields", msg.name())));
        }
        Ok(msg)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClientMessage::Hello { .. } => "hello",
            ClientMessage::Release => "release",
            ClientMessage::Drive { .. } => "drive",
            ClientMessage::Roll { .. } => "roll",
            ClientMessage::Stop => "stop",
            ClientMessage::SetJointAngle { .. } => "set_joint_angle",
            ClientMessage::SetJointDuty { .. } => "set_joint_duty",
            ClientMessage::Estop => "estop",
            ClientMessage::ResetEstop => "reset_estop",
            ClientMessage::Replay { .. } => "replay",
        }
    }

    /// The bus command this message maps to, if it is a robot command.
    pub fn to_command(&self) -> Result<Option<Command>, MessageError> {
        let signed = |field, duty: i64| {
            i8::try_from(duty).ok().filter(|d| (-100..=100).contains(d)).ok_or(MessageError::OutOfRange {
                field,
                value: duty as f64,
                range: "[-100, 100]",
            })
        };
        let cmd = match *self {
            ClientMessage::Drive { duty, .. } => Command::Drive(signed("duty", duty)?),
            ClientMessage::Roll { duty, .. } => Command::Roll(signed("duty", duty)?),
            ClientMessage::Stop => Command::Stop,
            ClientMessage::SetJointAngle { deg, .. } => {
                let cdeg = (deg * 100.0).round();
                if !(f64::from(i16::MIN)..=f64::from(i16::MAX)).contains(&cdeg) {
                    return Err(MessageError::OutOfRange { field: "deg", value: deg, range: "[-327.68, 327.67]" });
                }
                Command::SetJointAngle(cdeg as i16)
            }
            ClientMessage::SetJointDuty { duty, .. } => Command::SetJointDuty(
                u8::try_from(duty).ok().filter(|d| *d <= 100).ok_or(MessageError::OutOfRange {
                    field: "duty",
                    value: duty as f64,
                    range: "[0, 100]",
                })?,
            ),
            ClientMessage::Estop => Command::Estop,
            ClientMessage::ResetEstop => Command::ResetEstop,
            ClientMessage::Hello { .. } | ClientMessage::Release | ClientMessage::Replay { .. } => return Ok(None),
        };
        Ok(Some(cmd))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    Busy,
    NotCommander,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub kind: String,
    pub s_start_m: f64,
    pub length_m: f64,
    pub d_in_m: f64,
    pub d_out_m: f64,
    pub curvature_per_m: f64,
    pub inclination: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeProfile {
    pub total_length_m: f64,
    pub segments: Vec<SegmentInfo>,
}

impl From<&PipeNetwork> for PipeProfile {
    fn from(net: &PipeNetwork) -> Self {
        let segments = net
            .segments()
            .iter()
            .zip(net.segment_starts())
            .map(|(seg, &start)| SegmentInfo {
                kind: match seg.kind {
                    SegmentKind::Straight { .. } => "straight",
                    SegmentKind::Bend { .. } => "bend",
                    SegmentKind::Increaser { .. } => "increaser",
                }
                .to_string(),
                s_start_m: start,
                length_m: seg.arclength(),
                d_in_m: seg.diameter_in_m,
                d_out_m: seg.diameter_out_m,
                curvature_per_m: seg.curvature(),
                inclination: seg.inclination,
            })
            .collect();
        Self { total_length_m: net.total_length(), segments }
    }
}

/// One telemetry record; field names follow the CSV log columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t_s: f64,
    pub s_m: f64,
    #[serde(rename = "D_m")]
    pub d_m: f64,
    pub theta_mid_deg: f64,
    pub joint_duty: f64,
    pub drive_duty: f64,
    #[serde(rename = "est_torque_Nm")]
    pub est_torque_nm: f64,
    #[serde(rename = "slip_margin_N")]
    pub slip_margin_n: f64,
    pub slip_flag: bool,
    #[serde(rename = "board_temp_C")]
    pub board_temp_c: f64,
    pub mode: String,
}

impl From<&TelemetryRow> for TelemetryRecord {
    fn from(r: &TelemetryRow) -> Self {
        Self {
            t_s: r.t_s,
            s_m: r.s_m,
            d_m: r.d_m,
            theta_mid_deg: r.theta_mid_deg,
            joint_duty: r.joint_duty,
            drive_duty: r.drive_duty,
            est_torque_nm: r.est_torque_nm,
            slip_margin_n: r.slip_margin_n,
            slip_flag: r.slip,
            board_temp_c: r.board_temp_c,
            mode: r.mode.as_str().to_string(),
        }
    }
}

/// Messages the gateway sends, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        v: u32,
        client: u64,
        role: Role,
        scenario: String,
        t_s: f64,
        commander_present: bool,
        pipe: PipeProfile,
    },
    Telemetry {
        v: u32,
        #[serde(flatten)]
        record: TelemetryRecord,
    },
    Ack {
        v: u32,
        cmd: String,
        t_s: f64,
    },
    Role {
        v: u32,
        role: Role,
    },
    Error {
        v: u32,
        code: ErrorCode,
        message: String,
    },
    Replay {
        v: u32,
        rows: Vec<TelemetryRecord>,
    },
    Result {
        v: u32,
        result: String,
        exit_code: i32,
        t_s: f64,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error { v: PROTOCOL_VERSION, code, message: message.into() }
    }

    pub fn result(result: MissionResult, t_s: f64) -> Self {
        ServerMessage::Result {
            v: PROTOCOL_VERSION,
            result: result.as_str().to_string(),
            exit_code: result.exit_code(),
            t_s,
        }
    }

    /// Newline-terminated JSON text.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages always serialize");
        s.push('\n');
        s
    }
}
