//! Session bookkeeping around a live simulation.
//!
//! The hub is the single owner of the simulation. Client I/O tasks hand it
//! text, it answers with addressed messages. Robot commands go through
//! [`Simulation::submit`], the same path scripted missions take.

use std::collections::BTreeMap;

use log::{debug, info};
use pipebot_core::canbus::Command;
use pipebot_core::firmware::Mode;
use pipebot_core::harness::{Simulation, FIRMWARE_PERIOD_TICKS};
use pipebot_core::ConfigError;

use crate::protocol::{ClientMessage, ErrorCode, PipeProfile, Role, ServerMessage, TelemetryRecord, PROTOCOL_VERSION};

pub type ClientId = u64;

/// Default history window of a replay request, s.
pub const DEFAULT_REPLAY_S: f64 = 60.0;

/// Upper bound on ticks spent waiting for an estop to latch on every board.
const ESTOP_SETTLE_TICKS: u64 = 5 * FIRMWARE_PERIOD_TICKS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipient {
    One(ClientId),
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: Recipient,
    pub message: ServerMessage,
}

impl Outbound {
    fn one(id: ClientId, message: ServerMessage) -> Self {
        Self { to: Recipient::One(id), message }
    }

    fn all(message: ServerMessage) -> Self {
        Self { to: Recipient::All, message }
    }
}

pub struct Hub {
    sim: Simulation,
    clients: BTreeMap<ClientId, Role>,
    commander: Option<ClientId>,
    next_id: ClientId,
    result_sent: bool,
}

impl Hub {
    pub fn new(mut sim: Simulation) -> Self {
        // sessions are open-ended; the telemetry log keeps the history
        sim.record_frames(false);
        Self { sim, clients: BTreeMap::new(), commander: None, next_id: 1, result_sent: false }
    }

    /// Like [`Hub::new`] but keeps every delivered bus frame.
    pub fn with_frame_log(mut sim: Simulation) -> Self {
        sim.record_frames(true);
        Self { sim, clients: BTreeMap::new(), commander: None, next_id: 1, result_sent: false }
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn commander(&self) -> Option<ClientId> {
        self.commander
    }

    pub fn finished(&self) -> bool {
        self.sim.result().is_some()
    }

    pub fn connect(&mut self) -> (ClientId, Outbound) {
        let id = self.next_id;
        self.next_id += 1;
        self.clients.insert(id, Role::Observer);
        info!("client {id} connected");
        let welcome = ServerMessage::Welcome {
            v: PROTOCOL_VERSION,
            client: id,
            role: Role::Observer,
            scenario: self.sim.scenario().name.clone(),
            t_s: self.sim.time_s(),
            commander_present: self.commander.is_some(),
            pipe: PipeProfile::from(self.sim.network()),
        };
        (id, Outbound::one(id, welcome))
    }

    pub fn disconnect(&mut self, id: ClientId) {
        self.clients.remove(&id);
        if self.commander == Some(id) {
            self.commander = None;
        }
        info!("client {id} disconnected");
    }

    /// Handles a text frame, which may hold several newline-separated messages.
    pub fn handle_text(&mut self, id: ClientId, text: &str) -> Result<Vec<Outbound>, ConfigError> {
        let mut out = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            match ClientMessage::parse(line) {
                Ok(msg) => out.extend(self.handle(id, &msg)?),
                Err(e) => {
                    debug!("client {id}: malformed message: {e}");
                    out.push(Outbound::one(id, ServerMessage::error(ErrorCode::Malformed, e.to_string())));
                }
            }
        }
        Ok(out)
    }

    fn set_role(&mut self, id: ClientId, role: Role) -> ServerMessage {
        match role {
            Role::Commander => match self.commander {
                Some(other) if other != id => {
                    return ServerMessage::error(ErrorCode::Busy, format!("client {other} is commanding"))
                }
                _ => self.commander = Some(id),
            },
            Role::Observer => {
                if self.commander == Some(id) {
                    self.commander = None;
                }
            }
        }
        self.clients.insert(id, role);
        ServerMessage::Role { v: PROTOCOL_VERSION, role }
    }

    /// Handles one message. An estop is acknowledged only once every board
    /// has latched it, so the next telemetry a client sees shows zero duties;
    /// telemetry produced while it propagates precedes the ack.
    pub fn handle(&mut self, id: ClientId, msg: &ClientMessage) -> Result<Vec<Outbound>, ConfigError> {
        let reply = |m| Ok(vec![Outbound::one(id, m)]);
        match msg {
            ClientMessage::Hello { role } => return reply(self.set_role(id, *role)),
            ClientMessage::Release => return reply(self.set_role(id, Role::Observer)),
            ClientMessage::Replay { seconds } => {
                let window = seconds.unwrap_or(DEFAULT_REPLAY_S).max(0.0);
                let from = self.sim.time_s() - window;
                let rows = self.sim.log().rows().iter().filter(|r| r.t_s >= from).map(TelemetryRecord::from).collect();
                return reply(ServerMessage::Replay { v: PROTOCOL_VERSION, rows });
            }
            _ => {}
        }
        let command = match msg.to_command() {
            Ok(Some(c)) => c,
            Ok(None) => unreachable!("session messages handled above"),
            Err(e) => return reply(ServerMessage::error(ErrorCode::Malformed, e.to_string())),
        };
        let is_estop = matches!(msg, ClientMessage::Estop);
        if !is_estop && self.commander != Some(id) {
            return reply(ServerMessage::error(ErrorCode::NotCommander, "claim the commander role first"));
        }
        if self.finished() {
            return reply(ServerMessage::error(ErrorCode::Finished, "the mission has ended"));
        }
        self.sim.submit(command);
        debug!("client {id}: {command:?} at t={:.3}", self.sim.time_s());
        let mut out = Vec::new();
        if command == Command::Estop {
            let mut spent = 0;
            while !self.estop_latched() && spent < ESTOP_SETTLE_TICKS && !self.finished() {
                out.extend(self.advance(1)?);
                spent += 1;
            }
        }
        out.push(Outbound::one(
            id,
            ServerMessage::Ack { v: PROTOCOL_VERSION, cmd: msg.name().to_string(), t_s: self.sim.time_s() },
        ));
        Ok(out)
    }

    fn estop_latched(&self) -> bool {
        let boards = self.sim.boards();
        Command::Estop.targets().iter().all(|&n| boards[usize::from(n)].mode == Mode::Estop)
    }

    /// Steps the simulation up to `ticks` master ticks, stopping early when
    /// the mission ends. Each telemetry row becomes a broadcast.
    pub fn advance(&mut self, ticks: u64) -> Result<Vec<Outbound>, ConfigError> {
        let mut out = Vec::new();
        for _ in 0..ticks {
            if self.finished() {
                break;
            }
            let report = self.sim.step()?;
            if let Some(row) = report.telemetry {
                out.push(Outbound::all(ServerMessage::Telemetry {
                    v: PROTOCOL_VERSION,
                    record: TelemetryRecord::from(&row),
                }));
            }
        }
        if let (Some(result), false) = (self.sim.result(), self.result_sent) {
            self.result_sent = true;
            info!("mission ended: {} at t={:.3} s", result.as_str(), self.sim.time_s());
            out.push(Outbound::all(ServerMessage::result(result, self.sim.time_s())));
        }
        Ok(out)
    }
}
