//! `serve`: the live session service over websockets.
//!
//! One [`Session`] per connection, ticked at a fixed rate. Inbound messages
//! queue in a mailbox drained at the start of each tick; outbound messages
//! go through a bounded broadcast that drops the oldest frames when the
//! client falls behind.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use assist_core::bridge::{Session, SessionMessage, TICK_HZ};
use assist_core::sim::{Metrics, UserInput};
use assist_core::{GoalId, Scenario};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc};
use tower_http::services::ServeDir;

use crate::batch::load_scenario;

pub const LOG_SCHEMA: u32 = 1;
const OUTBOX: usize = 64;

/// One line of `sessions.jsonl`. `inputs` are the device inputs consumed per
/// tick, enough to replay the episode headlessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub schema: u32,
    pub client: Option<String>,
    pub scenario_id: String,
    pub method: String,
    pub goal: Option<GoalId>,
    pub seed: u64,
    pub partial: bool,
    pub metrics: Metrics,
    pub inputs: Vec<UserInput>,
}

#[derive(Clone)]
struct AppState {
    catalog: Arc<BTreeMap<String, Scenario>>,
    seed: u64,
    next_conn: Arc<AtomicU64>,
    log_path: Arc<PathBuf>,
    log_lock: Arc<Mutex<()>>,
}

/// Scenarios keyed by file stem.
pub fn load_catalog(paths: &[PathBuf]) -> Result<BTreeMap<String, Scenario>> {
    if paths.is_empty() {
        bail!("serve needs at least one --scenario");
    }
    let mut cat = BTreeMap::new();
    for p in paths {
        let id = p
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("bad scenario path {}", p.display()))?
            .to_owned();
        let s = load_scenario(p)?;
        if cat.insert(id.clone(), s).is_some() {
            bail!("duplicate scenario id `{id}`");
        }
    }
    Ok(cat)
}

pub async fn serve(
    catalog: BTreeMap<String, Scenario>,
    addr: SocketAddr,
    seed: u64,
    ui_dir: Option<&Path>,
    log_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(log_dir).with_context(|| format!("creating {}", log_dir.display()))?;
    let state = AppState {
        catalog: Arc::new(catalog),
        seed,
        next_conn: Arc::new(AtomicU64::new(0)),
        log_path: Arc::new(log_dir.join("sessions.jsonl")),
        log_lock: Arc::new(Mutex::new(())),
    };
    let mut app = Router::new().route("/ws", get(upgrade)).with_state(state);
    if let Some(dir) = ui_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    axum::serve(listener, app).await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| run_connection(socket, state))
}

fn append_record(state: &AppState, session: &Session, partial: bool) {
    let (Some(ep), Some(metrics)) = (session.episode(), session.partial_metrics()) else {
        return;
    };
    let rec = SessionRecord {
        schema: LOG_SCHEMA,
        client: session.client_name().map(str::to_owned),
        scenario_id: session.scenario_id().to_owned(),
        method: ep.method().as_str().to_owned(),
        goal: ep.user_goal(),
        seed: session.seed(),
        partial,
        metrics,
        inputs: session.input_trace().to_vec(),
    };
    let _guard = state.log_lock.lock().unwrap_or_else(|e| e.into_inner());
    let res = OpenOptions::new()
        .create(true)
        .append(true)
        .open(state.log_path.as_path())
        .and_then(|mut f| {
            let mut line = serde_json::to_vec(&rec)?;
            line.push(b'\n');
            f.write_all(&line)
        });
    if let Err(e) = res {
        eprintln!("session log write failed: {e}");
    }
}

async fn run_connection(socket: WebSocket, state: AppState) {
    let conn = state.next_conn.fetch_add(1, Ordering::Relaxed);
    let mut session = match Session::new((*state.catalog).clone(), state.seed + conn) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("session setup failed: {e}");
            return;
        }
    };
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = broadcast::channel::<SessionMessage>(OUTBOX);
    let (in_tx, mut in_rx) = mpsc::unbounded_channel::<SessionMessage>();

    let writer = tokio::spawn(async move {
        loop {
            match out_rx.recv().await {
                Ok(msg) => {
                    let Ok(text) = serde_json::to_string(&msg) else { continue };
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    });

    let err_tx = out_tx.clone();
    let reader = tokio::spawn(async move {
        while let Some(Ok(frame)) = stream.next().await {
            match frame {
                Message::Text(t) => match serde_json::from_str::<SessionMessage>(t.as_str()) {
                    Ok(m) => {
                        if in_tx.send(m).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = err_tx.send(SessionMessage::Error {
                            msg: format!("bad message: {e}"),
                        });
                    }
                },
                Message::Close(_) => break,
                _ => {}
            }
        }
    });

    let mut ticker = tokio::time::interval(Duration::from_secs_f64(1.0 / TICK_HZ as f64));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut open = true;
    while open {
        ticker.tick().await;
        loop {
            match in_rx.try_recv() {
                Ok(msg) => {
                    if matches!(msg, SessionMessage::Reset) && session.is_running() {
                        append_record(&state, &session, true);
                    }
                    for reply in session.handle(msg) {
                        let _ = out_tx.send(reply);
                    }
                }
                Err(mpsc::error::TryRecvError::Empty) => break,
                Err(mpsc::error::TryRecvError::Disconnected) => {
                    open = false;
                    break;
                }
            }
        }
        if !open {
            break;
        }
        for msg in session.session_tick() {
            if matches!(msg, SessionMessage::Done { .. }) {
                append_record(&state, &session, false);
            }
            let _ = out_tx.send(msg);
        }
        if writer.is_finished() {
            break;
        }
    }
    if session.is_running() {
        append_record(&state, &session, true);
    }
    reader.abort();
    drop(out_tx);
    let _ = writer.await;
}
