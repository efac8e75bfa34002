//! Input regulator: unifies a text request and a pointer gesture from the
//! same user that arrive close together in time.

use serde::{Deserialize, Serialize};

use aaosa_core::{Admitted, FlushOutcome, ProcessUnit, RequestEnvelope, Upstream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegulatorConfig {
    pub unify_window_ms: u64,
}

impl Default for RegulatorConfig {
    fn default() -> Self {
        RegulatorConfig { unify_window_ms: 2000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegulatorState {
    held: Vec<RequestEnvelope>,
}

impl RegulatorState {
    pub fn held(&self) -> &[RequestEnvelope] {
        &self.held
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum UnifyOutcome {
    /// The combined request and the ids of its parts, earliest first.
    Merged {
        request: RequestEnvelope,
        parts: Vec<RequestEnvelope>,
    },
    PassThrough(RequestEnvelope),
    Held,
}

fn text_only(r: &RequestEnvelope) -> bool {
    r.has_text() && !r.has_pointer()
}

fn pointer_only(r: &RequestEnvelope) -> bool {
    r.has_pointer() && !r.has_text()
}

fn complementary(a: &RequestEnvelope, b: &RequestEnvelope) -> bool {
    (text_only(a) && pointer_only(b)) || (pointer_only(a) && text_only(b))
}

/// Merges `incoming` with a held complementary request of the same user
/// within the window, otherwise holds it. Requests that already combine
/// both modalities pass straight through.
pub fn unify_inputs(state: &mut RegulatorState, incoming: RequestEnvelope, cfg: &RegulatorConfig) -> UnifyOutcome {
    if incoming.has_text() && incoming.has_pointer() {
        return UnifyOutcome::PassThrough(incoming);
    }
    let partner = state.held.iter().position(|h| {
        h.user == incoming.user
            && complementary(h, &incoming)
            && h.timestamp.abs_diff(incoming.timestamp) <= cfg.unify_window_ms
    });
    match partner {
        Some(i) => {
            let held = state.held.remove(i);
            let (first, second) = if (held.timestamp, held.request_id) <= (incoming.timestamp, incoming.request_id) {
                (held, incoming)
            } else {
                (incoming, held)
            };
            let mut request = first.clone();
            request.request_id = first.request_id.min(second.request_id);
            request.segments.extend(second.segments.iter().cloned());
            request.ttl = first.ttl.min(second.ttl);
            UnifyOutcome::Merged { request, parts: vec![first, second] }
        }
        None => {
            state.held.push(incoming);
            UnifyOutcome::Held
        }
    }
}

/// Held requests whose window has elapsed at `now`, in arrival order.
pub fn release_due(state: &mut RegulatorState, now: u64, cfg: &RegulatorConfig) -> Vec<RequestEnvelope> {
    let (due, keep): (Vec<_>, Vec<_>) =
        state.held.drain(..).partition(|r| now.saturating_sub(r.timestamp) >= cfg.unify_window_ms);
    state.held = keep;
    due
}

pub struct RegulatorProcess {
    pub cfg: RegulatorConfig,
    pub state: RegulatorState,
}

impl RegulatorProcess {
    pub fn new(cfg: RegulatorConfig) -> Self {
        RegulatorProcess { cfg, state: RegulatorState::default() }
    }
}

fn upstream_of(r: &RequestEnvelope) -> Upstream {
    Upstream { address: r.sender.clone(), request_id: r.request_id }
}

impl<W> ProcessUnit<W> for RegulatorProcess {
    fn admit(&mut self, request: RequestEnvelope, now: u64) -> Vec<Admitted> {
        let mut out: Vec<Admitted> =
            release_due(&mut self.state, now, &self.cfg).into_iter().map(Admitted::from_sender).collect();
        match unify_inputs(&mut self.state, request, &self.cfg) {
            UnifyOutcome::Merged { request, parts } => out.push(Admitted {
                request,
                upstream: parts.iter().map(upstream_of).collect(),
                merged_from: parts.iter().map(|p| p.request_id).collect(),
            }),
            UnifyOutcome::PassThrough(r) => out.push(Admitted::from_sender(r)),
            UnifyOutcome::Held => {}
        }
        out
    }

    /// The collection window closes at quiescence: everything still held
    /// goes through on its own.
    fn flush(&mut self, _now: u64, _world: &mut W) -> FlushOutcome {
        FlushOutcome {
            released: self.state.held.drain(..).map(Admitted::from_sender).collect(),
            ..FlushOutcome::default()
        }
    }
}
