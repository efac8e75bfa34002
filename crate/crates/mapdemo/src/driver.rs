//! Runs one user interaction at a time through the demo network: builds the
//! input envelopes, drives the router to quiescence, closes the suggestion
//! windows and settles feedback.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use aaosa_core::{
    new_request, request_path, tokenize_text, ActionRef, Address, Agent, Clock, Envelope, EventKind, FlushEnvelope,
    LearningEvent, MessageError, NameServer, Network, Pointer, RequestId, RequestIdAllocator, RewardValue, RouterError,
    Segment, TraceEvent, UserId, DEFAULT_TTL,
};

use crate::feedback::{FeedbackEvent, FeedbackRules, FeedbackTracker, HistoryEntry};
use crate::network::{build_demo_network, DemoAddresses, DemoConfig};
use crate::world::{InfoPanel, LocationRecord, MapState, MapWorld};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("user id must not be empty")]
    BadUser,
    #[error("request carries neither text nor pointer input")]
    EmptyRequest,
    #[error("no earlier request to give feedback on")]
    NoPriorRequest,
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Message(#[from] MessageError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeedbackSignal {
    Value(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettledShare {
    pub agent: String,
    pub request_id: RequestId,
    pub value: RewardValue,
    pub self_share: RewardValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyChange {
    pub agent: String,
    pub change: LearningEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustChange {
    pub agent: String,
    pub peer: String,
    pub from: f64,
    pub to: f64,
}

/// What a batch of rewards did to the network.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub rewards: Vec<(RequestId, RewardValue)>,
    pub settled: Vec<SettledShare>,
    pub learning: Vec<PolicyChange>,
    pub trust: Vec<TrustChange>,
    /// Rewards that found no pending decision.
    pub unmatched: usize,
}

impl RewardSummary {
    fn from_trace(rewards: Vec<(RequestId, RewardValue)>, trace: &[TraceEvent]) -> Self {
        let mut s = RewardSummary { rewards, ..RewardSummary::default() };
        for e in trace {
            let agent = e.agent.label().to_string();
            match &e.kind {
                EventKind::Rewarded { request_id, value, self_share, .. } => s.settled.push(SettledShare {
                    agent,
                    request_id: *request_id,
                    value: *value,
                    self_share: *self_share,
                }),
                EventKind::Learned { change: LearningEvent::Unchanged { .. }, .. } => {}
                EventKind::Learned { change, .. } => s.learning.push(PolicyChange { agent, change: change.clone() }),
                EventKind::Reinforced { peer, from, to, .. } => {
                    s.trust.push(TrustChange { agent, peer: peer.label().to_string(), from: *from, to: *to })
                }
                EventKind::Dropped { reason: aaosa_core::DropReason::UnmatchedReward, .. } => s.unmatched += 1,
                _ => {}
            }
        }
        s
    }

    pub fn consumed(&self) -> RewardValue {
        self.settled.iter().map(|s| s.self_share).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub request_id: RequestId,
    pub user: UserId,
    /// Agent labels the request passed through, origin first.
    pub path: Vec<String>,
    pub actuated: Option<ActionRef>,
    pub map: MapState,
    pub info: Option<InfoPanel>,
    /// Rewards implied by this request (a repeat or a pause).
    pub implicit_feedback: RewardSummary,
    pub trace: Vec<TraceEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackOutcome {
    pub summary: RewardSummary,
    pub trace: Vec<TraceEvent>,
}

pub struct Demo {
    net: Network<MapWorld>,
    addrs: DemoAddresses,
    ids: RequestIdAllocator,
    clock: Arc<dyn Clock>,
    feedback: FeedbackTracker,
}

impl Demo {
    pub fn new(locations: Vec<LocationRecord>, cfg: &DemoConfig, clock: Arc<dyn Clock>) -> Result<Self, DemoError> {
        let mut ns = NameServer::new();
        let built = build_demo_network(&mut ns, locations, cfg)?;
        Ok(Demo {
            net: built.net,
            addrs: built.addrs,
            ids: RequestIdAllocator::new(),
            clock,
            feedback: FeedbackTracker::new(FeedbackRules::default()),
        })
    }

    pub fn net(&self) -> &Network<MapWorld> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Network<MapWorld> {
        &mut self.net
    }

    pub fn addrs(&self) -> &DemoAddresses {
        &self.addrs
    }

    pub fn world(&self) -> &MapWorld {
        self.net.world()
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn agent_by_label(&self, label: &str) -> Option<&Agent<MapWorld>> {
        self.net.agents().find(|a| a.name() == label)
    }

    pub fn last_request(&self, user: &UserId) -> Option<RequestId> {
        self.feedback.history(user).and_then(|h| h.last()).map(|e| e.request_id)
    }

    fn flush(&mut self, targets: &[Address]) -> Result<(), DemoError> {
        let timestamp = self.net.now();
        for t in targets {
            self.net.send(t.clone(), Envelope::Flush(FlushEnvelope { timestamp }));
        }
        self.net.run_until_idle()?;
        Ok(())
    }

    fn deliver_rewards(&mut self, user: &UserId, event: FeedbackEvent) -> Result<RewardSummary, DemoError> {
        let start = self.net.trace().len();
        let rewards = self.feedback.observe(user, &event, &self.addrs.feedback);
        let issued = rewards.iter().map(|(_, r)| (r.request_id, r.value)).collect();
        for (to, r) in rewards {
            self.net.send(to, Envelope::Reward(r));
        }
        self.net.run_until_idle()?;
        Ok(RewardSummary::from_trace(issued, &self.net.trace()[start..]))
    }

    /// Processes one multimodal request to quiescence.
    pub fn submit(
        &mut self,
        user: &UserId,
        text: Option<&str>,
        pointer: Option<Pointer>,
    ) -> Result<RequestOutcome, DemoError> {
        if user.as_str().trim().is_empty() {
            return Err(DemoError::BadUser);
        }
        let text_seg = text.map(tokenize_text).filter(|s| matches!(s, Segment::Text(t) if !t.is_empty()));
        if text_seg.is_none() && pointer.is_none() {
            return Err(DemoError::EmptyRequest);
        }
        let now = self.clock.now_ms();
        self.net.set_now(now);
        let start = self.net.trace().len();

        let mut tokens: Vec<String> = pointer.iter().map(|p| p.kind.token()).collect();
        if let Some(Segment::Text(t)) = &text_seg {
            tokens.extend(t.iter().cloned());
        }
        let implicit = self.deliver_rewards(user, FeedbackEvent::NewRequest { tokens: tokens.clone(), at: now })?;

        let mut issued: Vec<(RequestId, Address)> = Vec::new();
        let inputs = [
            (pointer.map(Segment::Pointer), self.addrs.pointer_input.clone()),
            (text_seg, self.addrs.nl_input.clone()),
        ];
        for (segment, origin) in inputs {
            let Some(segment) = segment else { continue };
            let req = new_request(&origin, user, vec![segment], self.clock.as_ref(), DEFAULT_TTL, &mut self.ids)?;
            issued.push((req.request_id, origin.clone()));
            self.net.originate(&origin, req)?;
        }
        self.net.run_until_idle()?;
        let (regulator, output) = (self.addrs.regulator.clone(), self.addrs.output.clone());
        self.flush(std::slice::from_ref(&regulator))?;
        self.flush(&[self.addrs.viewport_output.clone(), self.addrs.information_output.clone()])?;
        self.flush(std::slice::from_ref(&output))?;

        let trace: Vec<TraceEvent> = self.net.trace()[start..].to_vec();
        let actuation = trace.iter().find_map(|e| match &e.kind {
            EventKind::ActuationOrdered { request_id, action, .. }
                if e.agent == self.addrs.output && issued.iter().any(|(id, _)| id == request_id) =>
            {
                Some((*request_id, action.clone()))
            }
            _ => None,
        });
        let (request_id, entry_point) = match &actuation {
            Some((id, _)) => (*id, self.addrs.output.clone()),
            None => {
                let (id, origin) = issued.iter().min_by_key(|(id, _)| *id).cloned().expect("at least one input");
                (id, origin)
            }
        };
        self.feedback.record(
            user,
            HistoryEntry { request_id, tokens, at: now, responded_at: Some(now), rewarded: false, entry_point },
        );
        let world = self.net.world();
        Ok(RequestOutcome {
            request_id,
            user: user.clone(),
            path: request_path(&trace, request_id).iter().map(|a| a.label().to_string()).collect(),
            actuated: actuation.map(|(_, a)| a),
            map: world.map,
            info: world.info.clone().filter(|i| i.request_id == request_id),
            implicit_feedback: implicit,
            trace,
        })
    }

    /// Applies explicit feedback (a number or a remark) from `user`.
    pub fn feedback(&mut self, user: &UserId, signal: FeedbackSignal) -> Result<FeedbackOutcome, DemoError> {
        if self.last_request(user).is_none() {
            return Err(DemoError::NoPriorRequest);
        }
        let now = self.clock.now_ms();
        self.net.set_now(now);
        let start = self.net.trace().len();
        let event = match signal {
            FeedbackSignal::Value(value) => FeedbackEvent::Explicit { value },
            FeedbackSignal::Text(text) => match tokenize_text(&text) {
                Segment::Text(tokens) => FeedbackEvent::Remark { tokens },
                Segment::Pointer(_) => unreachable!("tokenize_text yields text"),
            },
        };
        let summary = self.deliver_rewards(user, event)?;
        Ok(FeedbackOutcome { summary, trace: self.net.trace()[start..].to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aaosa_core::{DecisionMode, ManualClock, Origin};

    fn demo() -> Demo {
        Demo::new(vec![], &DemoConfig::default(), Arc::new(ManualClock::new(0))).unwrap()
    }

    #[test]
    fn shift_request_moves_east() {
        let mut d = demo();
        let out = d.submit(&UserId::new("u1"), Some("shift the map to the right"), None).unwrap();
        assert_eq!(out.path, ["nl-input", "input-regulator", "map-view-port", "shifting"]);
        assert_eq!((out.map.center_x, out.map.center_y), (10.0, 0.0));
        assert_eq!(out.actuated, Some(ActionRef::Handle("shift-east".into())));
        let vp_mode = out.trace.iter().find_map(|e| match &e.kind {
            EventKind::Decided { mode, matched, .. } if e.agent.label() == "map-view-port" => {
                Some((*mode, matched.clone()))
            }
            _ => None,
        });
        let (mode, matched) = vp_mode.unwrap();
        assert_eq!(mode, DecisionMode::Deterministic);
        assert_eq!(matched.unwrap().into_iter().collect::<Vec<_>>(), ["shift"]);
    }

    #[test]
    fn negative_feedback_teaches_view() {
        let mut d = demo();
        let u1 = UserId::new("u1");
        let first = d.submit(&u1, Some("shift the view to the right"), None).unwrap();
        assert_eq!(first.actuated, Some(ActionRef::Handle("shift-east".into())));
        let fb = d.feedback(&u1, FeedbackSignal::Value(-1.0)).unwrap();
        assert_eq!(fb.summary.consumed(), RewardValue::from_f64(-1.0));
        let learned: Vec<_> =
            fb.summary.learning.iter().filter(|c| matches!(c.change, LearningEvent::Learned { .. })).collect();
        assert_eq!(learned.len(), 1);
        assert_eq!(learned[0].agent, "map-view-port");
        let vp = d.agent_by_label("map-view-port").unwrap();
        let view: Vec<_> = vp.kb.learned_for(&u1).iter().filter(|p| p.origin == Origin::Learned).collect();
        assert_eq!(view.len(), 1);
        assert_eq!(view[0].tokens.iter().collect::<Vec<_>>(), ["view"]);

        let again = d.submit(&u1, Some("shift the view to the right"), None).unwrap();
        assert_ne!(again.actuated, first.actuated);
        assert_eq!(again.path, ["nl-input", "input-regulator", "map-view-port", "magnification"]);
    }

    #[test]
    fn empty_and_bad_inputs() {
        let mut d = demo();
        assert!(matches!(d.submit(&UserId::new("u1"), None, None), Err(DemoError::EmptyRequest)));
        assert!(matches!(d.submit(&UserId::new("u1"), Some("  ,, "), None), Err(DemoError::EmptyRequest)));
        assert!(matches!(d.submit(&UserId::new(""), Some("zoom in"), None), Err(DemoError::BadUser)));
        assert!(matches!(d.feedback(&UserId::new("u1"), FeedbackSignal::Value(1.0)), Err(DemoError::NoPriorRequest)));
    }
}
