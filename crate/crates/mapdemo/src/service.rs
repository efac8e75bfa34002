//! Session gateway over one shared demo network. Every call takes a global
//! lock, so concurrent sessions see a single serialized history.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;

use aaosa_core::{AgentSnapshot, Clock, Pointer, RequestId, SystemClock, TraceEvent, UserId};

use crate::driver::{Demo, DemoError, FeedbackOutcome, FeedbackSignal, RequestOutcome, RewardSummary};
use crate::network::DemoConfig;
use crate::snapshot::{load_policies, render_snapshot, save_policies, SnapshotError};
use crate::world::{InfoPanel, LocationRecord, MapState};

const EVENT_CHANNEL: usize = 1024;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub user: UserId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestBody {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub pointer: Option<Pointer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapView {
    pub map: MapState,
    pub info: Option<InfoPanel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    Trace { event: TraceEvent },
    Map { request_id: RequestId, map: MapState, info: Option<InfoPanel> },
    Reward { summary: RewardSummary },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

struct Session {
    user: UserId,
    last_request: Option<RequestId>,
    events: Vec<ServiceEvent>,
    tx: Option<broadcast::Sender<ServiceEvent>>,
}

impl Session {
    fn push(&mut self, body: EventBody) {
        let event = ServiceEvent { seq: self.events.len() as u64, body };
        if let Some(tx) = &self.tx {
            // no subscribers is fine
            let _ = tx.send(event.clone());
        }
        self.events.push(event);
    }
}

struct Inner {
    demo: Demo,
    sessions: BTreeMap<String, Session>,
    next_session: u64,
}

pub struct ServiceConfig {
    pub demo: DemoConfig,
    pub locations: Vec<LocationRecord>,
    /// Loaded at startup when present; rewritten after every feedback.
    pub snapshot_path: Option<PathBuf>,
    pub clock: Arc<dyn Clock>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            demo: DemoConfig::default(),
            locations: Vec::new(),
            snapshot_path: None,
            clock: Arc::new(SystemClock),
        }
    }
}

pub struct DemoService {
    inner: Mutex<Inner>,
    snapshot_path: Option<PathBuf>,
}

impl DemoService {
    pub fn new(cfg: ServiceConfig) -> Result<Self, ServiceError> {
        let mut demo = Demo::new(cfg.locations, &cfg.demo, cfg.clock)?;
        if let Some(path) = &cfg.snapshot_path {
            if path.exists() {
                load_policies(demo.net_mut(), path)?;
            }
        }
        Ok(DemoService {
            inner: Mutex::new(Inner { demo, sessions: BTreeMap::new(), next_session: 1 }),
            snapshot_path: cfg.snapshot_path,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs `f` with the shared demo under the service lock.
    pub fn with_demo<T>(&self, f: impl FnOnce(&mut Demo) -> T) -> T {
        f(&mut self.lock().demo)
    }

    pub fn create_session(&self, user: &str) -> Result<SessionInfo, ServiceError> {
        if user.trim().is_empty() {
            return Err(DemoError::BadUser.into());
        }
        let mut inner = self.lock();
        let session_id = format!("s{}", inner.next_session);
        inner.next_session += 1;
        let (tx, _) = broadcast::channel(EVENT_CHANNEL);
        let user = UserId::new(user);
        inner.sessions.insert(
            session_id.clone(),
            Session { user: user.clone(), last_request: None, events: Vec::new(), tx: Some(tx) },
        );
        Ok(SessionInfo { session_id, user })
    }

    fn live<'a>(inner: &'a mut Inner, id: &str) -> Result<&'a mut Session, ServiceError> {
        match inner.sessions.get_mut(id) {
            None => Err(ServiceError::UnknownSession(id.to_string())),
            Some(s) if s.tx.is_none() => Err(ServiceError::SessionClosed(id.to_string())),
            Some(s) => Ok(s),
        }
    }

    pub fn submit_request(&self, id: &str, body: RequestBody) -> Result<RequestOutcome, ServiceError> {
        let mut inner = self.lock();
        let user = Self::live(&mut inner, id)?.user.clone();
        let outcome = inner.demo.submit(&user, body.text.as_deref(), body.pointer)?;
        let session = Self::live(&mut inner, id)?;
        session.last_request = Some(outcome.request_id);
        if !outcome.implicit_feedback.rewards.is_empty() {
            session.push(EventBody::Reward { summary: outcome.implicit_feedback.clone() });
        }
        for event in &outcome.trace {
            session.push(EventBody::Trace { event: event.clone() });
        }
        session.push(EventBody::Map { request_id: outcome.request_id, map: outcome.map, info: outcome.info.clone() });
        Ok(outcome)
    }

    pub fn submit_feedback(&self, id: &str, signal: FeedbackSignal) -> Result<FeedbackOutcome, ServiceError> {
        let mut inner = self.lock();
        let session = Self::live(&mut inner, id)?;
        if session.last_request.is_none() {
            return Err(DemoError::NoPriorRequest.into());
        }
        let user = session.user.clone();
        let outcome = inner.demo.feedback(&user, signal)?;
        let session = Self::live(&mut inner, id)?;
        for event in &outcome.trace {
            session.push(EventBody::Trace { event: event.clone() });
        }
        session.push(EventBody::Reward { summary: outcome.summary.clone() });
        if let Some(path) = &self.snapshot_path {
            save_policies(inner.demo.net(), path)?;
        }
        Ok(outcome)
    }

    pub fn map(&self, id: &str) -> Result<MapView, ServiceError> {
        let mut inner = self.lock();
        Self::live(&mut inner, id)?;
        let world = inner.demo.world();
        Ok(MapView { map: world.map, info: world.info.clone() })
    }

    pub fn agents(&self) -> Vec<AgentSnapshot> {
        self.lock().demo.net().agents().map(|a| a.snapshot()).collect()
    }

    /// Events recorded so far plus a receiver for the ones still to come.
    pub fn stream_events(
        &self,
        id: &str,
    ) -> Result<(Vec<ServiceEvent>, broadcast::Receiver<ServiceEvent>), ServiceError> {
        let mut inner = self.lock();
        let session = Self::live(&mut inner, id)?;
        let rx = session.tx.as_ref().expect("live session has a sender").subscribe();
        Ok((session.events.clone(), rx))
    }

    pub fn close_session(&self, id: &str) -> Result<(), ServiceError> {
        let mut inner = self.lock();
        Self::live(&mut inner, id)?.tx = None;
        Ok(())
    }

    pub fn snapshot_text(&self) -> String {
        render_snapshot(self.lock().demo.net())
    }

    pub fn save_policies(&self, path: &Path) -> Result<(), ServiceError> {
        save_policies(self.lock().demo.net(), path)?;
        Ok(())
    }

    pub fn load_policies(&self, path: &Path) -> Result<(), ServiceError> {
        load_policies(self.lock().demo.net_mut(), path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aaosa_core::{ActionRef, ManualClock};

    fn service() -> DemoService {
        DemoService::new(ServiceConfig { clock: Arc::new(ManualClock::new(0)), ..ServiceConfig::default() }).unwrap()
    }

    fn text(t: &str) -> RequestBody {
        RequestBody { text: Some(t.into()), pointer: None }
    }

    #[test]
    fn sessions_validate_users() {
        let s = service();
        assert_eq!(s.create_session("alice").unwrap().user, UserId::new("alice"));
        assert!(matches!(s.create_session(" "), Err(ServiceError::Demo(DemoError::BadUser))));
        assert!(matches!(s.map("nope"), Err(ServiceError::UnknownSession(_))));
    }

    #[test]
    fn same_user_shares_learning_across_sessions() {
        let s = service();
        let a = s.create_session("u1").unwrap().session_id;
        let b = s.create_session("u1").unwrap().session_id;
        s.submit_request(&a, text("shift the view to the right")).unwrap();
        s.submit_feedback(&a, FeedbackSignal::Value(-1.0)).unwrap();
        let out = s.submit_request(&b, text("shift the view to the right")).unwrap();
        assert_eq!(out.path.last().map(String::as_str), Some("magnification"));
    }

    #[test]
    fn feedback_needs_prior_request() {
        let s = service();
        let a = s.create_session("u1").unwrap().session_id;
        assert!(matches!(
            s.submit_feedback(&a, FeedbackSignal::Value(1.0)),
            Err(ServiceError::Demo(DemoError::NoPriorRequest))
        ));
    }

    #[test]
    fn events_follow_trace_order_and_close() {
        let s = service();
        let a = s.create_session("u1").unwrap().session_id;
        let out = s.submit_request(&a, text("shift the map to the right")).unwrap();
        assert_eq!(out.actuated, Some(ActionRef::Handle("shift-east".into())));
        let (backlog, _rx) = s.stream_events(&a).unwrap();
        let traced: Vec<&TraceEvent> = backlog
            .iter()
            .filter_map(|e| match &e.body {
                EventBody::Trace { event } => Some(event),
                _ => None,
            })
            .collect();
        assert_eq!(traced, out.trace.iter().collect::<Vec<_>>());
        assert!(matches!(backlog.last().unwrap().body, EventBody::Map { .. }));
        assert!(backlog.windows(2).all(|w| w[0].seq + 1 == w[1].seq));
        s.close_session(&a).unwrap();
        assert!(matches!(s.stream_events(&a), Err(ServiceError::SessionClosed(_))));
    }
}
