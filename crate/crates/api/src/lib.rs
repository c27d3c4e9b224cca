//! HTTP facade over the journaling engine.
//!
//! Every session change goes through [`Engine::handle_input`]; handlers only
//! translate between HTTP and engine calls. Engine and store calls block, so
//! they run on the blocking pool.

mod error;
mod events;
mod registry;
mod sessions;

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use axum::routing::{get, post};
use axum::Router;
use panelwise_core::Engine;
use serde_json::Value;
use tokio::sync::broadcast;

pub use error::ApiError;
pub use sessions::{IDEMPOTENCY_HEADER, REPLAYED_HEADER};

/// Idempotency keys remembered per server, oldest evicted first.
const IDEMPOTENCY_CAPACITY: usize = 4096;

type Reply = Arc<tokio::sync::Mutex<Option<Value>>>;

#[derive(Default)]
struct Replies {
    map: HashMap<(String, String), Reply>,
    order: VecDeque<(String, String)>,
}

pub struct AppState {
    engine: Arc<Engine>,
    hub: Mutex<HashMap<String, broadcast::Sender<()>>>,
    replies: Mutex<Replies>,
}

impl AppState {
    pub fn new(engine: Engine) -> Arc<Self> {
        Arc::new(Self {
            engine: Arc::new(engine),
            hub: Mutex::new(HashMap::new()),
            replies: Mutex::new(Replies::default()),
        })
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    fn channel(&self, session_id: &str) -> broadcast::Sender<()> {
        self.hub
            .lock()
            .expect("hub poisoned")
            .entry(session_id.to_string())
            .or_insert_with(|| broadcast::channel(16).0)
            .clone()
    }

    /// Wakes the event streams following `session_id`.
    fn notify(&self, session_id: &str) {
        let _ = self.channel(session_id).send(());
    }

    fn reply_slot(&self, session_id: &str, key: &str) -> Reply {
        let mut r = self.replies.lock().expect("replies poisoned");
        let k = (session_id.to_string(), key.to_string());
        if let Some(slot) = r.map.get(&k) {
            return slot.clone();
        }
        if r.order.len() >= IDEMPOTENCY_CAPACITY {
            if let Some(old) = r.order.pop_front() {
                r.map.remove(&old);
            }
        }
        let slot = Reply::default();
        r.map.insert(k.clone(), slot.clone());
        r.order.push_back(k);
        slot
    }
}

/// Runs blocking engine or store work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(sessions::create).get(sessions::list))
        .route("/sessions/{id}", get(sessions::show))
        .route("/sessions/{id}/input", post(sessions::input))
        .route("/sessions/{id}/expected", get(sessions::expected))
        .route("/sessions/{id}/strip", get(sessions::strip))
        .route("/sessions/{id}/events", get(events::stream))
        .route("/journals", get(sessions::journals))
        .route("/journals/{id}", get(sessions::journal))
        .route("/stats", get(sessions::stats))
        .merge(registry::routes())
        .with_state(state)
}
