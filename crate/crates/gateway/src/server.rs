use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use log::{info, warn};
use pipebot_core::harness::{MissionResult, Simulation, TELEMETRY_PERIOD_TICKS};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::MissedTickBehavior;

use crate::hub::{ClientId, Hub, Outbound, Recipient};
use crate::GatewayError;

/// Websocket endpoint path.
pub const WS_PATH: &str = "/ws";

/// Master ticks advanced per pacing step (one firmware period).
const TICKS_PER_STEP: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ServeOptions {
    /// Simulated seconds per wall-clock second. `None` runs unpaced.
    pub speed: Option<f64>,
}

impl ServeOptions {
    pub fn realtime() -> Self {
        Self { speed: Some(1.0) }
    }
}

enum Request {
    Connect { tx: mpsc::UnboundedSender<String>, reply: oneshot::Sender<ClientId> },
    Text { id: ClientId, text: String },
    Disconnect { id: ClientId },
}

#[derive(Clone)]
struct AppState {
    requests: mpsc::UnboundedSender<Request>,
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, GatewayError> {
    TcpListener::bind(addr).await.map_err(|source| GatewayError::Bind { addr, source })
}

/// Serves `sim` on `listener` until `shutdown` resolves and returns the
/// mission result, if the mission ended.
pub async fn serve<F>(
    listener: TcpListener,
    sim: Simulation,
    options: ServeOptions,
    shutdown: F,
) -> Result<Option<MissionResult>, GatewayError>
where
    F: Future<Output = ()> + Send + 'static,
{
    if !sim.scenario().interactive {
        return Err(GatewayError::NotInteractive(sim.scenario().name.clone()));
    }
    if let Some(speed) = options.speed {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(GatewayError::InvalidSpeed(speed));
        }
    }
    let dt = sim.scenario().dt_s;
    let (req_tx, req_rx) = mpsc::unbounded_channel();
    let (stop_tx, stop_rx) = watch::channel(false);
    let owner = tokio::spawn(own(Hub::new(sim), req_rx, dt, options.speed, stop_rx));

    let app = Router::new().route(WS_PATH, get(upgrade)).with_state(AppState { requests: req_tx });
    if let Ok(addr) = listener.local_addr() {
        info!("gateway listening on ws://{addr}{WS_PATH}");
    }
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            shutdown.await;
            let _ = stop_tx.send(true);
        })
        .await?;
    owner.await.expect("simulation owner task panicked")
}

async fn own(
    mut hub: Hub,
    mut requests: mpsc::UnboundedReceiver<Request>,
    dt_s: f64,
    speed: Option<f64>,
    mut stop: watch::Receiver<bool>,
) -> Result<Option<MissionResult>, GatewayError> {
    let mut clients: BTreeMap<ClientId, mpsc::UnboundedSender<String>> = BTreeMap::new();
    let step = Duration::from_secs_f64(TICKS_PER_STEP as f64 * dt_s / speed.unwrap_or(1.0));
    let mut pace = tokio::time::interval(step);
    pace.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut steps: u64 = 0;
    loop {
        let out = tokio::select! {
            biased;
            _ = stop.changed() => break,
            req = requests.recv() => match req {
                None => break,
                Some(Request::Connect { tx, reply }) => {
                    let (id, welcome) = hub.connect();
                    clients.insert(id, tx);
                    let _ = reply.send(id);
                    vec![welcome]
                }
                Some(Request::Text { id, text }) => hub.handle_text(id, &text)?,
                Some(Request::Disconnect { id }) => {
                    clients.remove(&id);
                    hub.disconnect(id);
                    Vec::new()
                }
            },
            _ = pace.tick(), if speed.is_some() && !hub.finished() => hub.advance(TICKS_PER_STEP)?,
            _ = tokio::task::yield_now(), if speed.is_none() && !hub.finished() => {
                steps += 1;
                if steps.is_multiple_of(TELEMETRY_PERIOD_TICKS / TICKS_PER_STEP * 100) {
                    // let client I/O tasks on this worker run
                    tokio::time::sleep(Duration::from_millis(1)).await;
                }
                hub.advance(TICKS_PER_STEP)?
            }
        };
        route(&mut clients, out);
    }
    Ok(hub.sim().result())
}

fn route(clients: &mut BTreeMap<ClientId, mpsc::UnboundedSender<String>>, out: Vec<Outbound>) {
    for o in out {
        let line = o.message.to_line();
        match o.to {
            Recipient::One(id) => {
                if let Some(tx) = clients.get(&id) {
                    let _ = tx.send(line);
                }
            }
            Recipient::All => clients.retain(|_, tx| tx.send(line.clone()).is_ok()),
        }
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| session(socket, state.requests))
}

async fn session(socket: WebSocket, requests: mpsc::UnboundedSender<Request>) {
    let (tx, mut outgoing) = mpsc::unbounded_channel::<String>();
    let (reply_tx, reply_rx) = oneshot::channel();
    if requests.send(Request::Connect { tx, reply: reply_tx }).is_err() {
        return;
    }
    let Ok(id) = reply_rx.await else { return };
    let (mut sink, mut stream) = socket.split();

    let writer = async {
        while let Some(line) = outgoing.recv().await {
            if sink.send(Message::Text(line.into())).await.is_err() {
                break;
            }
        }
    };
    let reader = async {
        while let Some(frame) = stream.next().await {
            let text = match frame {
                Ok(Message::Text(t)) => t.to_string(),
                Ok(Message::Binary(b)) => String::from_utf8_lossy(&b).into_owned(),
                Ok(Message::Close(_)) => break,
                Ok(_) => continue,
                Err(e) => {
                    warn!("client {id}: {e}");
                    break;
                }
            };
            if requests.send(Request::Text { id, text }).is_err() {
                break;
            }
        }
    };
    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
    let _ = requests.send(Request::Disconnect { id });
}
