//! Operator gateway: exposes a live simulation over a websocket.
//!
//! Clients receive a welcome with the pipe profile, then one telemetry
//! message per telemetry tick. A single client at a time may hold the
//! commander role and drive the robot; anyone may trigger the emergency stop.

pub mod hub;
pub mod protocol;
pub mod server;

use std::net::SocketAddr;

pub use hub::{ClientId, Hub, Outbound, Recipient};
pub use protocol::{ClientMessage, ErrorCode, Role, ServerMessage, PROTOCOL_VERSION};
pub use server::{bind, serve, ServeOptions, WS_PATH};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("simulation failed: {0}")]
    Simulation(#[from] pipebot_core::ConfigError),
    #[error("scenario `{0}` is not interactive")]
    NotInteractive(String),
    #[error("pacing speed must be positive, got {0}")]
    InvalidSpeed(f64),
}
