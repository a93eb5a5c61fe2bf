//! Live mode: WebSocket endpoint `/ws`, static client at `/app`.
//!
//! Each session runs on its own task, which alone mutates its state; agent
//! generation runs on the blocking pool and re-enters through the session's
//! channel, so network calls never happen inside a state mutation.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use super::config::{draw_assignment, EngineConfig};
use super::driver::AgentDriver;
use super::pool::{MatchPool, WaitStats};
use super::session::{EvalBundle, Outbound, Phase, SessionConfig, SessionState};
use super::wire::{ClientMsg, ServerMsg};
use crate::agent::{build_generator, generate_reply, GenerationParams, TextGenerator};
use crate::error::{Error, Result};
use crate::model::{Event, EventLog, EventLogWriter, GroupRecord};
use crate::numeric::derive_seed;

const APP_HTML: &str = include_str!("../../assets/app/index.html");

enum SessionInput {
    Chat { pseudonym: String, text: String },
    Eval { pseudonym: String, bundles: Vec<EvalBundle> },
    Disconnect { pseudonym: String },
    AgentReply { pseudonym: String, reply: std::result::Result<String, String> },
}

struct Conn {
    tx: mpsc::UnboundedSender<ServerMsg>,
    session: Option<(mpsc::UnboundedSender<SessionInput>, String)>,
}

/// Events of every session, in arrival order, optionally mirrored to disk.
struct Recorder {
    log: EventLog,
    file: Option<EventLogWriter>,
}

impl Recorder {
    fn record(&mut self, events: Vec<Event>) {
        for e in events {
            if let Some(f) = self.file.as_mut() {
                if let Err(err) = f.append(e.clone()) {
                    warn!("event log write failed: {err}");
                }
            }
            if let Err(err) = self.log.append(e) {
                warn!("event rejected: {err}");
            }
        }
    }
}

struct Hub {
    cfg: EngineConfig,
    pool: Mutex<MatchPool>,
    conns: Mutex<HashMap<String, Conn>>,
    recorder: Mutex<Recorder>,
    rng: Mutex<ChaCha8Rng>,
    generator: Arc<dyn TextGenerator>,
    next_participant: AtomicU64,
    next_group: AtomicU64,
    started: Instant,
}

impl Hub {
    fn now_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }
}

#[derive(Clone)]
pub struct AppState(Arc<Hub>);

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/ws", get(ws_handler))
        .route("/app", get(app_page))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state)
}

async fn app_page() -> Html<&'static str> {
    Html(APP_HTML)
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state.0))
}

async fn connection(socket: WebSocket, hub: Arc<Hub>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<ServerMsg>();
    let writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            if sink.send(Message::Text(msg.to_json().into())).await.is_err() {
                break;
            }
        }
    });
    let mut pid: Option<String> = None;
    while let Some(Ok(frame)) = stream.next().await {
        let text = match frame {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let msg: ClientMsg = match serde_json::from_str(&text) {
            Ok(m) => m,
            Err(e) => {
                let _ = tx.send(ServerMsg::error("bad_request", e.to_string()));
                continue;
            }
        };
        match msg {
            ClientMsg::Join { .. } => {
                if pid.is_some() {
                    let _ = tx.send(ServerMsg::error("already_joined", "this connection has already joined"));
                    continue;
                }
                let id = format!("p{:05}", hub.next_participant.fetch_add(1, Ordering::SeqCst) + 1);
                hub.conns.lock().unwrap().insert(id.clone(), Conn { tx: tx.clone(), session: None });
                if let Err(e) = hub.pool.lock().unwrap().join(&id, None, hub.now_ms()) {
                    let _ = tx.send(ServerMsg::error("join", e.to_string()));
                }
                pid = Some(id);
            }
            ClientMsg::Chat { text } => {
                forward(&hub, pid.as_deref(), &tx, |pseudonym| SessionInput::Chat { pseudonym, text })
            }
            ClientMsg::EvalSubmit { evaluations } => {
                forward(&hub, pid.as_deref(), &tx, |pseudonym| SessionInput::Eval { pseudonym, bundles: evaluations })
            }
        }
    }
    if let Some(id) = pid {
        hub.pool.lock().unwrap().leave(&id);
        if let Some(conn) = hub.conns.lock().unwrap().remove(&id) {
            if let Some((stx, pseudonym)) = conn.session {
                let _ = stx.send(SessionInput::Disconnect { pseudonym });
            }
        }
    }
    writer.abort();
}

fn forward(
    hub: &Hub,
    pid: Option<&str>,
    tx: &mpsc::UnboundedSender<ServerMsg>,
    make: impl FnOnce(String) -> SessionInput,
) {
    let route = pid.and_then(|id| hub.conns.lock().unwrap().get(id).and_then(|c| c.session.clone()));
    match route {
        Some((stx, pseudonym)) => {
            let _ = stx.send(make(pseudonym));
        }
        None => {
            let _ = tx.send(ServerMsg::error("phase", "not in a session"));
        }
    }
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Phase(_) => "phase",
        Error::Roster(_) => "roster",
        Error::Evaluation(_) => "evaluation",
        _ => "bad_request",
    }
}

/// Repeatedly draws an assignment and forms groups until the pool cannot
/// fill the drawn condition; the rest stay queued for the next round.
fn match_round(hub: &Arc<Hub>) {
    loop {
        let (condition, task) = {
            let mut rng = hub.rng.lock().unwrap();
            match draw_assignment(&hub.cfg, &mut *rng) {
                Ok(a) => a,
                Err(e) => {
                    warn!("assignment failed: {e}");
                    return;
                }
            }
        };
        let group_id = format!("g{:04}", hub.next_group.load(Ordering::SeqCst) + 1);
        let group = {
            let mut pool = hub.pool.lock().unwrap();
            let mut rng = hub.rng.lock().unwrap();
            pool.try_match(condition, task, &group_id, &hub.cfg.pseudonyms, hub.now_ms(), hub.cfg.duration_s, &mut *rng)
        };
        match group {
            Some(g) => {
                hub.next_group.fetch_add(1, Ordering::SeqCst);
                spawn_session(hub.clone(), g);
            }
            None => return,
        }
    }
}

fn spawn_session(hub: Arc<Hub>, group: GroupRecord) {
    let (stx, srx) = mpsc::unbounded_channel();
    let mut members = HashMap::new();
    {
        let mut conns = hub.conns.lock().unwrap();
        for p in group.humans() {
            if let Some(c) = conns.get_mut(&p.id) {
                c.session = Some((stx.clone(), p.pseudonym.clone()));
                members.insert(p.pseudonym.clone(), c.tx.clone());
            }
        }
    }
    info!("group {} formed ({} humans)", group.group_id, members.len());
    tokio::spawn(run_session(hub, group, members, stx, srx));
}

async fn run_session(
    hub: Arc<Hub>,
    group: GroupRecord,
    members: HashMap<String, mpsc::UnboundedSender<ServerMsg>>,
    stx: mpsc::UnboundedSender<SessionInput>,
    mut srx: mpsc::UnboundedReceiver<SessionInput>,
) {
    let origin = Instant::now();
    let now = || origin.elapsed().as_millis() as u64;
    let seed = derive_seed(hub.cfg.seed, &[&group.group_id]);
    let mut state = match SessionState::new(group, SessionConfig::from(&hub.cfg)) {
        Ok(s) => s,
        Err(e) => {
            warn!("session rejected: {e}");
            return;
        }
    };
    let mut driver = AgentDriver::new(&state, hub.cfg.scheduler.clone(), seed);
    let dispatch = |outs: Vec<Outbound>| {
        for o in outs {
            match &o.to {
                Some(p) => {
                    if let Some(tx) = members.get(p) {
                        let _ = tx.send(o.msg);
                    }
                }
                None => {
                    for tx in members.values() {
                        let _ = tx.send(o.msg.clone());
                    }
                }
            }
        }
    };
    match state.start(now()) {
        Ok(outs) => dispatch(outs),
        Err(e) => warn!("{e}"),
    }
    let params = GenerationParams::from(&hub.cfg.generator);
    let compose_delay = Duration::from_secs_f64(hub.cfg.compose_delay_s);
    let eval_deadline = hub.cfg.evaluation_timeout_s.map(|s| (s * 1000.0) as u64);
    let mut ticker = tokio::time::interval(Duration::from_millis(hub.cfg.tick_ms));
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                let t = now();
                dispatch(state.tick(t));
                for (pseudonym, prompt) in driver.due(&state, t) {
                    let generator = hub.generator.clone();
                    let params = params.clone();
                    let (max_words, attempts) = (hub.cfg.generator.max_words, hub.cfg.generator.attempts);
                    let back = stx.clone();
                    tokio::spawn(async move {
                        let reply = tokio::task::spawn_blocking(move || {
                            generate_reply(generator.as_ref(), &prompt, &params, max_words, attempts).map_err(|e| e.to_string())
                        })
                        .await
                        .unwrap_or_else(|e| Err(e.to_string()));
                        tokio::time::sleep(compose_delay).await;
                        let _ = back.send(SessionInput::AgentReply { pseudonym, reply });
                    });
                }
                if let (Some(limit), Phase::Evaluation) = (eval_deadline, state.phase) {
                    let end = state.config().familiarisation_ms + state.config().duration_ms;
                    if t >= end + limit {
                        state.expire_evaluation(t);
                    }
                }
            }
            Some(input) = srx.recv() => {
                let t = now();
                match input {
                    SessionInput::Chat { pseudonym, text } => match state.post_message(&pseudonym, &text, t) {
                        Ok(out) => {
                            driver.on_message(&pseudonym);
                            dispatch(vec![out]);
                        }
                        Err(e) => dispatch(vec![Outbound { to: Some(pseudonym), msg: ServerMsg::error(error_code(&e), e.to_string()) }]),
                    },
                    SessionInput::Eval { pseudonym, bundles } => match state.submit_evaluation(&pseudonym, &bundles, t) {
                        Ok(outs) => dispatch(outs),
                        Err(e) => dispatch(vec![Outbound { to: Some(pseudonym), msg: ServerMsg::error(error_code(&e), e.to_string()) }]),
                    },
                    SessionInput::Disconnect { pseudonym } => dispatch(state.disconnect(&pseudonym, t)),
                    SessionInput::AgentReply { pseudonym, reply } => {
                        if state.phase == Phase::Discussion {
                            let out = driver.deliver(&mut state, &pseudonym, reply, t);
                            dispatch(out.into_iter().collect());
                        } else {
                            driver.on_skip(&pseudonym);
                        }
                    }
                }
            }
        }
        hub.recorder.lock().unwrap().record(state.take_events());
        if state.phase == Phase::Closed {
            break;
        }
    }
    let mut conns = hub.conns.lock().unwrap();
    for p in state.group.humans() {
        if let Some(c) = conns.get_mut(&p.id) {
            c.session = None;
        }
    }
    info!("group {} closed", state.group.group_id);
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    hub: Arc<Hub>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    /// Snapshot of every event recorded so far.
    pub fn event_log(&self) -> EventLog {
        self.hub.recorder.lock().unwrap().log.clone()
    }

    pub fn wait_stats(&self) -> WaitStats {
        self.hub.pool.lock().unwrap().wait_stats()
    }

    pub async fn shutdown(mut self) {
        if let Some(s) = self.shutdown.take() {
            let _ = s.send(());
        }
        let _ = self.task.await;
    }

    /// Serves until the process is interrupted.
    pub async fn wait(self) {
        let _ = self.task.await;
    }
}

/// Starts the live server on `listener`; events are mirrored to `log_path`.
pub async fn serve(cfg: EngineConfig, listener: TcpListener, log_path: Option<&Path>) -> Result<ServerHandle> {
    cfg.validate()?;
    let generator: Arc<dyn TextGenerator> = Arc::from(build_generator(&cfg.generator)?);
    let file = log_path.map(EventLogWriter::create).transpose()?;
    let hub = Arc::new(Hub {
        rng: Mutex::new(ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["match"]))),
        cfg,
        pool: Mutex::new(MatchPool::new()),
        conns: Mutex::new(HashMap::new()),
        recorder: Mutex::new(Recorder { log: EventLog::new(), file }),
        generator,
        next_participant: AtomicU64::new(0),
        next_group: AtomicU64::new(0),
        started: Instant::now(),
    });
    let addr = listener.local_addr()?;
    let app = router(AppState(hub.clone()));
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let matcher_hub = hub.clone();
    let interval = Duration::from_secs_f64(hub.cfg.match_interval_s);
    let task = tokio::spawn(async move {
        let matcher = tokio::spawn(async move {
            let mut t = tokio::time::interval(interval);
            t.tick().await;
            loop {
                t.tick().await;
                match_round(&matcher_hub);
            }
        });
        let served = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await;
        if let Err(e) = served {
            warn!("server stopped: {e}");
        }
        matcher.abort();
    });
    info!("listening on {addr}");
    Ok(ServerHandle { addr, hub, shutdown: Some(stop_tx), task })
}
