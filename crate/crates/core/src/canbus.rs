//! CAN 2.0A command/telemetry codec and a tick-level bus model.
//!
//! Frame layout:
//!
//! | id            | byte 0 | bytes 1..                                   |
//! |---------------|--------|---------------------------------------------|
//! | 0x100 + node  | opcode | operands, little-endian                     |
//! | 0x200 + node  | node   | angle cdeg i16, torque mNm i16, temp ddegC i16, flags u8 |
//!
//! Opcodes: 0x00 Stop, 0x01 Drive(i8), 0x02 Roll(i8), 0x03 SetJointAngle(i16
//! centidegrees), 0x04 SetJointDuty(u8), 0x05 Estop, 0x06 ResetEstop.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;

use crate::error::{DecodeError, FrameError};

pub const COMMAND_BASE_ID: u16 = 0x100;
pub const TELEMETRY_BASE_ID: u16 = 0x200;
const MAX_STANDARD_ID: u16 = 0x7FF;

/// Node assignment along the chain.
pub mod nodes {
    pub const FRONT_ROLL: u8 = 0;
    pub const J1_DRIVE: u8 = 1;
    pub const J2_JOINT: u8 = 2;
    pub const J3_DRIVE: u8 = 3;
    pub const REAR_ROLL: u8 = 4;
    pub const ALL: [u8; 5] = [FRONT_ROLL, J1_DRIVE, J2_JOINT, J3_DRIVE, REAR_ROLL];
    pub const DRIVE: [u8; 3] = [J1_DRIVE, J2_JOINT, J3_DRIVE];
    pub const ROLL: [u8; 2] = [FRONT_ROLL, REAR_ROLL];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CanFrame {
    id: u16,
    dlc: u8,
    data: [u8; 8],
}

impl CanFrame {
    pub fn new(id: u16, payload: &[u8]) -> Result<Self, FrameError> {
        if id > MAX_STANDARD_ID {
            return Err(FrameError::IdTooLarge(id));
        }
        if payload.len() > 8 {
            return Err(FrameError::PayloadTooLong(payload.len()));
        }
        let mut data = [0u8; 8];
        data[..payload.len()].copy_from_slice(payload);
        Ok(Self { id, dlc: payload.len() as u8, data })
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn dlc(&self) -> u8 {
        self.dlc
    }

    pub fn payload(&self) -> &[u8] {
        &self.data[..self.dlc as usize]
    }

    pub fn payload_hex(&self) -> String {
        self.payload().iter().map(|b| format!("{b:02X}")).collect()
    }
}

impl fmt::Display for CanFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03X}#{}", self.id, self.payload_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Stop,
    /// Signed drive duty, % (-100..=100).
    Drive(i8),
    /// Signed roll duty, % (-100..=100).
    Roll(i8),
    /// Target middle joint angle, centidegrees.
    SetJointAngle(i16),
    /// Joint duty, % (0..=100).
    SetJointDuty(u8),
    Estop,
    ResetEstop,
}

impl Command {
    pub const OP_STOP: u8 = 0x00;
    pub const OP_DRIVE: u8 = 0x01;
    pub const OP_ROLL: u8 = 0x02;
    pub const OP_SET_JOINT_ANGLE: u8 = 0x03;
    pub const OP_SET_JOINT_DUTY: u8 = 0x04;
    pub const OP_ESTOP: u8 = 0x05;
    pub const OP_RESET_ESTOP: u8 = 0x06;

    pub fn opcode(&self) -> u8 {
        match self {
            Command::Stop => Self::OP_STOP,
            Command::Drive(_) => Self::OP_DRIVE,
            Command::Roll(_) => Self::OP_ROLL,
            Command::SetJointAngle(_) => Self::OP_SET_JOINT_ANGLE,
            Command::SetJointDuty(_) => Self::OP_SET_JOINT_DUTY,
            Command::Estop => Self::OP_ESTOP,
            Command::ResetEstop => Self::OP_RESET_ESTOP,
        }
    }

    fn dlc_for(opcode: u8) -> Option<u8> {
        match opcode {
            Self::OP_STOP | Self::OP_ESTOP | Self::OP_RESET_ESTOP => Some(1),
            Self::OP_DRIVE | Self::OP_ROLL | Self::OP_SET_JOINT_DUTY => Some(2),
            Self::OP_SET_JOINT_ANGLE => Some(3),
            _ => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Command::Drive(d) | Command::Roll(d) => (-100..=100).contains(&d),
            Command::SetJointDuty(d) => d <= 100,
            _ => true,
        }
    }

    /// Nodes a command is addressed to.
    pub fn targets(&self) -> &'static [u8] {
        match self {
            Command::Drive(_) => &nodes::DRIVE,
            Command::Roll(_) => &nodes::ROLL,
            Command::SetJointAngle(_) | Command::SetJointDuty(_) => &[nodes::J2_JOINT],
            Command::Stop | Command::Estop | Command::ResetEstop => &nodes::ALL,
        }
    }
}

/// Status flag bits of a telemetry frame.
pub mod status {
    pub const SLIP: u8 = 0x01;
    pub const ESTOP: u8 = 0x02;
    pub const NAK: u8 = 0x04;
    pub const PEAK_MODE: u8 = 0x08;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Telemetry {
    pub node: u8,
    pub angle_centideg: i16,
    pub est_torque_mnm: i16,
    pub board_temp_deci_c: i16,
    pub flags: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Message {
    Command { node: u8, command: Command },
    Telemetry(Telemetry),
}

pub fn encode_command(command: &Command, node: u8) -> Result<CanFrame, FrameError> {
    if !command.is_valid() {
        return Err(FrameError::InvalidCommand(*command));
    }
    let id = COMMAND_BASE_ID + u16::from(node);
    let op = command.opcode();
    match *command {
        Command::Stop | Command::Estop | Command::ResetEstop => CanFrame::new(id, &[op]),
        Command::Drive(d) | Command::Roll(d) => CanFrame::new(id, &[op, d as u8]),
        Command::SetJointAngle(a) => {
            let [lo, hi] = a.to_le_bytes();
            CanFrame::new(id, &[op, lo, hi])
        }
        Command::SetJointDuty(d) => CanFrame::new(id, &[op, d]),
    }
}

pub fn encode_telemetry(t: &Telemetry) -> Result<CanFrame, FrameError> {
    let mut p = [0u8; 8];
    p[0] = t.node;
    p[1..3].copy_from_slice(&t.angle_centideg.to_le_bytes());
    p[3..5].copy_from_slice(&t.est_torque_mnm.to_le_bytes());
    p[5..7].copy_from_slice(&t.board_temp_deci_c.to_le_bytes());
    p[7] = t.flags;
    CanFrame::new(TELEMETRY_BASE_ID + u16::from(t.node), &p)
}

pub fn encode(message: &Message) -> Result<CanFrame, FrameError> {
    match message {
        Message::Command { node, command } => encode_command(command, *node),
        Message::Telemetry(t) => encode_telemetry(t),
    }
}

fn decode_command(payload: &[u8]) -> Result<Command, DecodeError> {
    let (&op, operands) = payload.split_first().ok_or(DecodeError::EmptyCommand)?;
    let expected = Command::dlc_for(op).ok_or(DecodeError::UnknownOpcode(op))?;
    if payload.len() != expected as usize {
        return Err(DecodeError::DlcMismatch { opcode: op, expected, actual: payload.len() as u8 });
    }
    let signed_duty = |b: u8| {
        let d = b as i8;
        if (-100..=100).contains(&d) {
            Ok(d)
        } else {
            Err(DecodeError::OperandOutOfRange { opcode: op, operand: d.into() })
        }
    };
    Ok(match op {
        Command::OP_STOP => Command::Stop,
        Command::OP_DRIVE => Command::Drive(signed_duty(operands[0])?),
        Command::OP_ROLL => Command::Roll(signed_duty(operands[0])?),
        Command::OP_SET_JOINT_ANGLE => Command::SetJointAngle(i16::from_le_bytes([operands[0], operands[1]])),
        Command::OP_SET_JOINT_DUTY => {
            let d = operands[0];
            if d > 100 {
                return Err(DecodeError::OperandOutOfRange { opcode: op, operand: d.into() });
            }
            Command::SetJointDuty(d)
        }
        Command::OP_ESTOP => Command::Estop,
        Command::OP_RESET_ESTOP => Command::ResetEstop,
        _ => unreachable!("dlc_for accepted opcode {op}"),
    })
}

fn decode_telemetry(id_node: u8, payload: &[u8]) -> Result<Telemetry, DecodeError> {
    if payload.len() != 8 {
        return Err(DecodeError::DlcMismatch {
            opcode: payload.first().copied().unwrap_or(0),
            expected: 8,
            actual: payload.len() as u8,
        });
    }
    if payload[0] != id_node {
        return Err(DecodeError::NodeMismatch { id: id_node, payload: payload[0] });
    }
    Ok(Telemetry {
        node: payload[0],
        angle_centideg: i16::from_le_bytes([payload[1], payload[2]]),
        est_torque_mnm: i16::from_le_bytes([payload[3], payload[4]]),
        board_temp_deci_c: i16::from_le_bytes([payload[5], payload[6]]),
        flags: payload[7],
    })
}

pub fn decode(frame: &CanFrame) -> Result<Message, DecodeError> {
    let id = frame.id();
    match id {
        COMMAND_BASE_ID..TELEMETRY_BASE_ID => {
            Ok(Message::Command { node: (id - COMMAND_BASE_ID) as u8, command: decode_command(frame.payload())? })
        }
        TELEMETRY_BASE_ID..0x300 => {
            Ok(Message::Telemetry(decode_telemetry((id - TELEMETRY_BASE_ID) as u8, frame.payload())?))
        }
        _ => Err(DecodeError::UnknownId(id)),
    }
}

/// A frame that made it across the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivered {
    /// Delivery time in master ticks.
    pub tick: u64,
    pub frame: CanFrame,
}

impl Delivered {
    /// `t_s id dlc payload`, id and payload in upper-case hex.
    pub fn log_line(&self, tick_s: f64) -> String {
        let f = &self.frame;
        format!("{:.3} {:03X} {} {}", self.tick as f64 * tick_s, f.id(), f.dlc(), f.payload_hex())
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    due: u64,
    seq: u64,
    frame: CanFrame,
}

/// Tick-granular bus: frames become deliverable after a fixed latency and
/// leave in priority order (lower id first, then enqueue order).
#[derive(Debug, Clone)]
pub struct CanBus {
    latency_ticks: u64,
    loss_probability: f64,
    now: u64,
    seq: u64,
    pending: VecDeque<Pending>,
    dropped: u64,
}

impl CanBus {
    pub fn new(latency_ticks: u64, loss_probability: f64) -> Self {
        assert!((0.0..=1.0).contains(&loss_probability), "loss probability must lie in [0, 1]");
        Self { latency_ticks, loss_probability, now: 0, seq: 0, pending: VecDeque::new(), dropped: 0 }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn enqueue(&mut self, frame: CanFrame) {
        self.pending.push_back(Pending { due: self.now + self.latency_ticks, seq: self.seq, frame });
        self.seq += 1;
    }

    /// Advances the bus clock by `ticks` and returns every frame that became
    /// due, in arbitration order. Loss draws come from `rng`, one draw per
    /// delivered frame, only when the loss probability is non-zero.
    pub fn step<R: Rng + ?Sized>(&mut self, ticks: u64, rng: &mut R) -> Vec<Delivered> {
        assert!(ticks > 0, "bus step must advance time");
        self.now += ticks;
        let now = self.now;
        let mut due: Vec<Pending> = Vec::new();
        self.pending.retain(|p| {
            if p.due <= now {
                due.push(*p);
                false
            } else {
                true
            }
        });
        // Arbitration happens among frames waiting at the same instant.
        due.sort_by_key(|p| (p.due, p.frame.id(), p.seq));
        let mut out = Vec::with_capacity(due.len());
        for p in due {
            if self.loss_probability > 0.0 && rng.random::<f64>() < self.loss_probability {
                self.dropped += 1;
                continue;
            }
            out.push(Delivered { tick: p.due, frame: p.frame });
        }
        out
    }
}
