//! HTTP front: the game channel on `/play` and static UI files on `/`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use sketchnet::game::RoundConfig;
use sketchnet::stroke::ClassTable;
use tokio::net::TcpListener;
use tokio::time::{interval, Instant, MissedTickBehavior};
use tower_http::services::ServeDir;

use crate::session::{Session, SharedPredictor};

/// How often a session checks whether its round is due a network guess.
pub const POLL_INTERVAL: Duration = Duration::from_millis(20);

#[derive(Clone)]
pub struct AppState {
    pub predictor: SharedPredictor,
    pub classes: Arc<ClassTable>,
    pub round: RoundConfig,
    /// Session `n` draws its code words from seed `base_seed + n`.
    pub base_seed: u64,
    sessions: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(predictor: SharedPredictor, classes: Arc<ClassTable>, round: RoundConfig, base_seed: u64) -> Self {
        AppState {
            predictor,
            classes,
            round,
            base_seed,
            sessions: Arc::new(AtomicU64::new(0)),
        }
    }

    fn next_session(&self) -> Session {
        let n = self.sessions.fetch_add(1, Ordering::Relaxed);
        Session::new(
            self.predictor.clone(),
            self.classes.clone(),
            self.round,
            self.base_seed.wrapping_add(n),
        )
    }
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new().route("/play", get(play)).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

async fn play(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    let session = state.next_session();
    ws.on_upgrade(move |socket| run_session(socket, session))
}

async fn send_all(socket: &mut WebSocket, messages: Vec<crate::protocol::ServerMessage>) -> bool {
    for m in messages {
        if socket.send(Message::Text(m.to_json().into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn run_session(mut socket: WebSocket, mut session: Session) {
    let origin = Instant::now();
    let mut ticker = interval(POLL_INTERVAL);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(Message::Binary(_))) => {
                        let reply = session.handle_text("<binary frame>", origin.elapsed());
                        send_all(&mut socket, reply.messages).await;
                        break;
                    }
                    Some(Ok(_)) => continue,
                };
                let reply = session.handle_text(text.as_str(), origin.elapsed());
                if !send_all(&mut socket, reply.messages).await || reply.close {
                    break;
                }
            }
            _ = ticker.tick() => {
                let out = session.tick(origin.elapsed());
                if !send_all(&mut socket, out).await {
                    break;
                }
            }
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}

/// Binds `addr` and serves until the process is interrupted.
pub async fn serve(addr: SocketAddr, state: AppState, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
