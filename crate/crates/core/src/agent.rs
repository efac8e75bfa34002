//! Adaptive agent: a reusable white box (input, interpreter, address book,
//! rewards unit, output) wrapped around an application-specific process unit.
//!
//! The white box is the only part that produces outbound envelopes. The
//! process unit sees a narrow world handle and reports what it wants done
//! through return values.

use std::collections::{BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addressing::{AddressBook, NameServer};
use crate::message::{
    derive_child, ActuateEnvelope, Address, Envelope, IntroductionEnvelope, RequestEnvelope, RequestId, RewardEnvelope,
    RewardValue, Segment, SuggestionEnvelope, UserId,
};
use crate::policy::{
    apply_reward, decide, match_patterns, ActionRef, Decision, DecisionMode, KnowledgeBase, LearningEvent, Pattern,
    PolicyConfig, PolicyError, TokenStats,
};
use crate::rewards::{apportion, EvictionReason, PendingDecision, PendingStore, Upstream};

const RECENT_DECISIONS: usize = 16;

/// What the process unit was asked to do.
pub struct Invocation<'a> {
    pub me: &'a Address,
    pub command: &'a str,
    pub request: &'a RequestEnvelope,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub action: ActionRef,
    pub confidence: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub done: bool,
    pub suggestions: Vec<Proposal>,
    pub child_requests: Vec<Vec<Segment>>,
}

/// A request the input stage lets through to the interpreter.
#[derive(Clone, Debug, PartialEq)]
pub struct Admitted {
    pub request: RequestEnvelope,
    pub upstream: Vec<Upstream>,
    /// Ids of all inputs unified into `request` (empty when not merged).
    pub merged_from: Vec<RequestId>,
}

impl Admitted {
    pub fn from_sender(request: RequestEnvelope) -> Admitted {
        let upstream = vec![Upstream { address: request.sender.clone(), request_id: request.request_id }];
        Admitted { request, upstream, merged_from: Vec::new() }
    }
}

/// An output agent's choice among collected suggestions.
#[derive(Clone, Debug, PartialEq)]
pub struct Actuation {
    pub winner: SuggestionEnvelope,
    pub runner_up: Option<SuggestionEnvelope>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlushOutcome {
    pub released: Vec<Admitted>,
    /// Suggestions to pass further up the output hierarchy.
    pub forward: Vec<SuggestionEnvelope>,
    pub actuate: Vec<Actuation>,
}

/// The black box. Every method has a do-nothing default so that units only
/// implement the facilities they use.
pub trait ProcessUnit<W>: Send {
    fn execute(&mut self, _inv: &Invocation<'_>, _world: &mut W) -> Outcome {
        Outcome::default()
    }

    /// Carries out a previously suggested action. Returns whether it applied.
    fn actuate(&mut self, _order: &ActuateEnvelope, _world: &mut W) -> bool {
        false
    }

    /// Input stage; may hold a request back or unify it with earlier ones.
    fn admit(&mut self, request: RequestEnvelope, _now: u64) -> Vec<Admitted> {
        vec![Admitted::from_sender(request)]
    }

    /// Accepts a suggestion for sifting. Returns false if this unit does not sift.
    fn collect(&mut self, _suggestion: SuggestionEnvelope) -> bool {
        false
    }

    /// End of a collection window.
    fn flush(&mut self, _now: u64, _world: &mut W) -> FlushOutcome {
        FlushOutcome::default()
    }
}

/// Process unit that never handles anything; for pure forwarders.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullProcess;

impl<W> ProcessUnit<W> for NullProcess {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    TtlExhausted,
    UnmatchedReward,
    NoAction,
    UnknownPending,
    NoOutput,
    NoRoute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Received {
        envelope: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        request_id: Option<RequestId>,
        #[serde(skip_serializing_if = "Option::is_none")]
        from: Option<Address>,
    },
    Originated {
        request_id: RequestId,
        user: UserId,
    },
    Held {
        request_id: RequestId,
    },
    Merged {
        request_id: RequestId,
        parts: Vec<RequestId>,
    },
    Decided {
        request_id: RequestId,
        user: UserId,
        mode: DecisionMode,
        chosen: ActionRef,
        confidence: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        matched: Option<BTreeSet<String>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        runner_up: Option<ActionRef>,
        unmatched: BTreeSet<String>,
    },
    Forwarded {
        request_id: RequestId,
        to: Address,
        ttl: u32,
    },
    Executed {
        request_id: RequestId,
        command: String,
        done: bool,
    },
    Suggested {
        request_id: RequestId,
        action: ActionRef,
        confidence: f64,
        to: Address,
    },
    Collected {
        request_id: RequestId,
        from: Address,
    },
    ActuationOrdered {
        request_id: RequestId,
        action: ActionRef,
        to: Address,
    },
    Actuated {
        request_id: RequestId,
        action: ActionRef,
        applied: bool,
    },
    Rewarded {
        request_id: RequestId,
        user: UserId,
        value: RewardValue,
        self_share: RewardValue,
        upstream: Vec<(Address, RewardValue)>,
    },
    Learned {
        request_id: RequestId,
        change: LearningEvent,
    },
    Reinforced {
        request_id: RequestId,
        peer: Address,
        from: f64,
        to: f64,
    },
    Evicted {
        request_id: RequestId,
        reason: EvictionReason,
    },
    Dropped {
        #[serde(skip_serializing_if = "Option::is_none")]
        request_id: Option<RequestId>,
        reason: DropReason,
    },
    Introduced {
        peer: Address,
    },
    DeadLetter {
        to: Address,
        envelope: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub at: u64,
    pub agent: Address,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Default)]
pub struct Handled {
    pub outbound: Vec<(Address, Envelope)>,
    pub events: Vec<TraceEvent>,
}

impl Handled {
    fn send(&mut self, to: Address, env: Envelope) {
        self.outbound.push((to, env));
    }
}

/// Read-only view of an agent's adaptive state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentSnapshot {
    pub address: Address,
    pub name: String,
    pub preset_patterns: usize,
    pub learned_patterns: usize,
    pub reweighted_patterns: usize,
    pub patterns: Vec<Pattern>,
    pub trust: Vec<(Address, f64)>,
    pub pending: usize,
    pub last_decisions: Vec<(RequestId, Decision)>,
}

fn seed_for(seed: u64, address: &Address) -> u64 {
    // FNV-1a over the address, mixed with the configured seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in address.as_str().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

pub struct Agent<W> {
    address: Address,
    name: String,
    capabilities: BTreeSet<String>,
    pub book: AddressBook,
    pub kb: KnowledgeBase,
    pub stats: TokenStats,
    pub pending: PendingStore,
    cfg: PolicyConfig,
    output: Option<Address>,
    process: Box<dyn ProcessUnit<W>>,
    rng: ChaCha8Rng,
    recent: VecDeque<(RequestId, Decision)>,
}

impl<W> std::fmt::Debug for Agent<W> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("address", &self.address)
            .field("book", &self.book)
            .field("kb", &self.kb)
            .field("pending", &self.pending.len())
            .finish_non_exhaustive()
    }
}

impl<W> Agent<W> {
    pub fn new(address: Address, process: Box<dyn ProcessUnit<W>>) -> Self {
        let cfg = PolicyConfig::default();
        let rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.rng_seed, &address));
        Agent {
            name: address.label().to_string(),
            address,
            capabilities: BTreeSet::new(),
            book: AddressBook::new(),
            kb: KnowledgeBase::default(),
            stats: TokenStats::new(),
            pending: PendingStore::default(),
            cfg,
            output: None,
            process,
            rng,
            recent: VecDeque::new(),
        }
    }

    pub fn with_kb(mut self, kb: KnowledgeBase) -> Self {
        self.kb = kb;
        self
    }

    pub fn with_book(mut self, book: AddressBook) -> Self {
        self.book = book;
        self
    }

    pub fn with_config(mut self, cfg: PolicyConfig) -> Self {
        self.rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.rng_seed, &self.address));
        self.cfg = cfg;
        self
    }

    pub fn with_capabilities<I, S>(mut self, tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.capabilities = tokens.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_output(mut self, output: Address) -> Self {
        self.output = Some(output);
        self
    }

    pub fn with_pending(mut self, pending: PendingStore) -> Self {
        self.pending = pending;
        self
    }

    pub fn address(&self) -> &Address {
        &self.address
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn output(&self) -> Option<&Address> {
        self.output.as_ref()
    }

    pub fn capabilities(&self) -> &BTreeSet<String> {
        &self.capabilities
    }

    pub fn introduction(&self) -> Option<IntroductionEnvelope> {
        (!self.capabilities.is_empty()).then(|| IntroductionEnvelope {
            address: self.address.clone(),
            capability_tokens: self.capabilities.clone(),
        })
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        let mut patterns: Vec<Pattern> = self.kb.preset().to_vec();
        patterns.extend(self.kb.learned().values().flatten().cloned());
        AgentSnapshot {
            address: self.address.clone(),
            name: self.name.clone(),
            preset_patterns: self.kb.preset().len(),
            learned_patterns: self.kb.learned_count(),
            reweighted_patterns: self.kb.reweighted_count(),
            patterns,
            trust: self.book.entries().iter().map(|e| (e.address.clone(), e.trust)).collect(),
            pending: self.pending.len(),
            last_decisions: self.recent.iter().cloned().collect(),
        }
    }

    fn event(&self, out: &mut Handled, at: u64, kind: EventKind) {
        out.events.push(TraceEvent { at, agent: self.address.clone(), kind });
    }

    /// Interprets a request issued by this (input) agent itself. The request
    /// leaves unchanged; it has no requesters to reward.
    pub fn originate(&mut self, request: RequestEnvelope, now: u64, world: &mut W) -> Handled {
        let mut out = Handled::default();
        self.event(&mut out, now, EventKind::Originated { request_id: request.request_id, user: request.user.clone() });
        let admitted = Admitted { request, upstream: Vec::new(), merged_from: Vec::new() };
        self.interpret(admitted, true, now, world, &mut out);
        out
    }

    pub fn handle_message(&mut self, msg: Envelope, now: u64, world: &mut W) -> Handled {
        let mut out = Handled::default();
        let (request_id, from) = match &msg {
            Envelope::Request(r) => (Some(r.request_id), Some(r.sender.clone())),
            Envelope::Reward(r) => (Some(r.request_id), Some(r.source.clone())),
            Envelope::Introduction(i) => (None, Some(i.address.clone())),
            Envelope::Suggestion(s) => (Some(s.request_id), Some(s.source.clone())),
            Envelope::Actuate(a) => (Some(a.request_id), Some(a.source.clone())),
            Envelope::Flush(_) => (None, None),
        };
        self.event(&mut out, now, EventKind::Received { envelope: msg.kind().to_string(), request_id, from });
        match msg {
            Envelope::Request(req) => self.on_request(req, now, world, &mut out),
            Envelope::Reward(rw) => self.on_reward(rw, now, &mut out),
            Envelope::Introduction(intro) => {
                if intro.address != self.address {
                    self.book.apply_introduction(&intro);
                    self.event(&mut out, now, EventKind::Introduced { peer: intro.address });
                }
            }
            Envelope::Suggestion(s) => self.on_suggestion(s, now, &mut out),
            Envelope::Actuate(order) => {
                let applied = self.process.actuate(&order, world);
                self.event(
                    &mut out,
                    now,
                    EventKind::Actuated { request_id: order.request_id, action: order.action, applied },
                );
            }
            Envelope::Flush(_) => self.on_flush(now, world, &mut out),
        }
        out
    }

    fn on_request(&mut self, req: RequestEnvelope, now: u64, world: &mut W, out: &mut Handled) {
        if req.ttl == 0 {
            self.event(
                out,
                now,
                EventKind::Dropped { request_id: Some(req.request_id), reason: DropReason::TtlExhausted },
            );
            return;
        }
        let incoming = req.request_id;
        let admitted = self.process.admit(req, now);
        let passed = admitted.iter().any(|a| a.request.request_id == incoming || a.merged_from.contains(&incoming));
        if !passed {
            self.event(out, now, EventKind::Held { request_id: incoming });
        }
        for a in admitted {
            self.interpret(a, false, now, world, out);
        }
    }

    fn interpret(&mut self, admitted: Admitted, origin: bool, now: u64, world: &mut W, out: &mut Handled) {
        let Admitted { request: req, upstream, merged_from } = admitted;
        if !merged_from.is_empty() {
            self.event(out, now, EventKind::Merged { request_id: req.request_id, parts: merged_from.clone() });
        }
        self.stats.observe_tokens(&req.segments);
        let patterns = self.kb.effective_kb(&req.user);
        let report = match_patterns(&patterns, &req.segments);
        let mut candidates = self.book.candidates_for(&req.segments);
        candidates.retain(|(a, _)| a != &self.address);

        let decision = match decide(&report, &patterns, &candidates, &self.cfg, &mut self.rng) {
            Ok(d) => d,
            Err(PolicyError::NoActionAvailable) | Err(_) => {
                self.event(
                    out,
                    now,
                    EventKind::Dropped { request_id: Some(req.request_id), reason: DropReason::NoAction },
                );
                return;
            }
        };
        self.event(
            out,
            now,
            EventKind::Decided {
                request_id: req.request_id,
                user: req.user.clone(),
                mode: decision.mode,
                chosen: decision.chosen.clone(),
                confidence: decision.confidence,
                matched: decision.matched_pattern.as_ref().map(|p| p.tokens.clone()),
                runner_up: decision.runner_up.clone(),
                unmatched: report.unmatched_tokens.clone(),
            },
        );
        self.remember(req.request_id, &decision);

        for ev in self.pending.evict_expired(now) {
            self.event(out, now, EventKind::Evicted { request_id: ev.request_id, reason: ev.reason });
        }
        let pd = PendingDecision {
            request_id: req.request_id,
            user: req.user.clone(),
            decision: decision.clone(),
            unmatched_tokens: report.unmatched_tokens,
            upstream,
            created_at: now,
        };
        for ev in self.pending.record_pending(pd) {
            self.event(out, now, EventKind::Evicted { request_id: ev.request_id, reason: ev.reason });
        }

        match &decision.chosen {
            ActionRef::Handle(command) => {
                let inv = Invocation { me: &self.address, command, request: &req, confidence: decision.confidence };
                let outcome = self.process.execute(&inv, world);
                self.event(
                    out,
                    now,
                    EventKind::Executed { request_id: req.request_id, command: command.clone(), done: outcome.done },
                );
                for proposal in outcome.suggestions {
                    self.emit_suggestion(&req, proposal, now, out);
                }
                for segments in outcome.child_requests {
                    let target =
                        self.book.candidates_for(&segments).into_iter().map(|(a, _)| a).find(|a| a != &self.address);
                    match target {
                        Some(t) => self.forward(&req, t, segments, false, now, out),
                        None => self.event(
                            out,
                            now,
                            EventKind::Dropped { request_id: Some(req.request_id), reason: DropReason::NoRoute },
                        ),
                    }
                }
            }
            ActionRef::Forward(_) | ActionRef::Broadcast(_) => {
                for target in decision.chosen.forward_targets() {
                    self.forward(&req, target.clone(), req.segments.clone(), origin, now, out);
                }
            }
        }
    }

    fn forward(
        &self,
        req: &RequestEnvelope,
        to: Address,
        segments: Vec<Segment>,
        origin: bool,
        now: u64,
        out: &mut Handled,
    ) {
        let child = if origin && segments == req.segments {
            Ok(req.clone())
        } else {
            derive_child(req, &self.address, segments)
        };
        match child {
            Ok(child) => {
                self.event(
                    out,
                    now,
                    EventKind::Forwarded { request_id: child.request_id, to: to.clone(), ttl: child.ttl },
                );
                out.send(to, Envelope::Request(child));
            }
            Err(_) => self.event(
                out,
                now,
                EventKind::Dropped { request_id: Some(req.request_id), reason: DropReason::TtlExhausted },
            ),
        }
    }

    fn emit_suggestion(&self, req: &RequestEnvelope, proposal: Proposal, now: u64, out: &mut Handled) {
        let Some(to) = self.output.clone() else {
            self.event(out, now, EventKind::Dropped { request_id: Some(req.request_id), reason: DropReason::NoOutput });
            return;
        };
        let confidence = proposal.confidence.clamp(0.0, 1.0);
        self.event(
            out,
            now,
            EventKind::Suggested {
                request_id: req.request_id,
                action: proposal.action.clone(),
                confidence,
                to: to.clone(),
            },
        );
        out.send(
            to,
            Envelope::Suggestion(SuggestionEnvelope {
                request_id: req.request_id,
                user: req.user.clone(),
                action: proposal.action,
                confidence,
                source: self.address.clone(),
            }),
        );
    }

    fn on_reward(&mut self, rw: RewardEnvelope, now: u64, out: &mut Handled) {
        let pd = match self.pending.settle(&rw) {
            Ok(pd) => pd,
            Err(_) => {
                self.event(
                    out,
                    now,
                    EventKind::Dropped { request_id: Some(rw.request_id), reason: DropReason::UnmatchedReward },
                );
                return;
            }
        };
        let share = apportion(rw.value, &pd.upstream, self.cfg.keep_fraction);
        self.event(
            out,
            now,
            EventKind::Rewarded {
                request_id: rw.request_id,
                user: rw.user.clone(),
                value: rw.value,
                self_share: share.self_share,
                upstream: share.upstream_shares.iter().map(|(u, v)| (u.address.clone(), *v)).collect(),
            },
        );

        let own = share.self_share.as_f64();
        match apply_reward(&mut self.kb, &self.stats, &pd, own, &self.cfg) {
            Ok(changes) => {
                for change in changes {
                    self.event(out, now, EventKind::Learned { request_id: rw.request_id, change });
                }
            }
            Err(_) => self.event(
                out,
                now,
                EventKind::Dropped { request_id: Some(rw.request_id), reason: DropReason::UnknownPending },
            ),
        }

        let targets = pd.decision.chosen.forward_targets();
        let peer = match targets {
            [only] => Some(only.clone()),
            many if many.contains(&rw.source) => Some(rw.source.clone()),
            _ => None,
        };
        if let Some(peer) = peer {
            if let Some(from) = self.book.trust(&peer) {
                if let Ok(to) = self.book.reinforce(&peer, own, self.cfg.learning_rate) {
                    self.event(out, now, EventKind::Reinforced { request_id: rw.request_id, peer, from, to });
                }
            }
        }

        for (up, value) in share.upstream_shares {
            out.send(
                up.address,
                Envelope::Reward(RewardEnvelope {
                    request_id: up.request_id,
                    user: rw.user.clone(),
                    value,
                    source: self.address.clone(),
                }),
            );
        }
    }

    fn on_suggestion(&mut self, s: SuggestionEnvelope, now: u64, out: &mut Handled) {
        let (request_id, from) = (s.request_id, s.source.clone());
        if self.process.collect(s.clone()) {
            self.event(out, now, EventKind::Collected { request_id, from });
        } else if let Some(to) = self.output.clone() {
            self.event(
                out,
                now,
                EventKind::Suggested { request_id, action: s.action.clone(), confidence: s.confidence, to: to.clone() },
            );
            out.send(to, Envelope::Suggestion(s));
        } else {
            self.event(out, now, EventKind::Dropped { request_id: Some(request_id), reason: DropReason::NoOutput });
        }
    }

    fn on_flush(&mut self, now: u64, world: &mut W, out: &mut Handled) {
        let FlushOutcome { released, forward, actuate } = self.process.flush(now, world);
        for admitted in released {
            self.interpret(admitted, false, now, world, out);
        }
        for s in forward {
            match self.output.clone() {
                Some(to) => {
                    self.event(
                        out,
                        now,
                        EventKind::Suggested {
                            request_id: s.request_id,
                            action: s.action.clone(),
                            confidence: s.confidence,
                            to: to.clone(),
                        },
                    );
                    out.send(to, Envelope::Suggestion(s));
                }
                None => self.event(
                    out,
                    now,
                    EventKind::Dropped { request_id: Some(s.request_id), reason: DropReason::NoOutput },
                ),
            }
        }
        for Actuation { winner, runner_up } in actuate {
            let decision = Decision {
                chosen: ActionRef::Forward(winner.source.clone()),
                confidence: winner.confidence,
                matched_pattern: None,
                runner_up: runner_up.map(|r| ActionRef::Forward(r.source)),
                mode: DecisionMode::Sifted,
            };
            self.remember(winner.request_id, &decision);
            let pd = PendingDecision {
                request_id: winner.request_id,
                user: winner.user.clone(),
                decision,
                unmatched_tokens: BTreeSet::new(),
                upstream: vec![Upstream { address: winner.source.clone(), request_id: winner.request_id }],
                created_at: now,
            };
            for ev in self.pending.record_pending(pd) {
                self.event(out, now, EventKind::Evicted { request_id: ev.request_id, reason: ev.reason });
            }
            self.event(
                out,
                now,
                EventKind::ActuationOrdered {
                    request_id: winner.request_id,
                    action: winner.action.clone(),
                    to: winner.source.clone(),
                },
            );
            out.send(
                winner.source.clone(),
                Envelope::Actuate(ActuateEnvelope {
                    request_id: winner.request_id,
                    user: winner.user,
                    action: winner.action,
                    source: self.address.clone(),
                }),
            );
        }
    }

    fn remember(&mut self, id: RequestId, decision: &Decision) {
        if self.recent.len() == RECENT_DECISIONS {
            self.recent.pop_front();
        }
        self.recent.push_back((id, decision.clone()));
    }
}

/// Callable wrapped by a transducer.
pub type LegacyFn<W> = Box<dyn FnMut(&RequestEnvelope, &mut W) + Send>;

struct Transducer<W> {
    legacy: LegacyFn<W>,
}

impl<W> ProcessUnit<W> for Transducer<W> {
    fn execute(&mut self, inv: &Invocation<'_>, world: &mut W) -> Outcome {
        (self.legacy)(inv.request, world);
        Outcome { done: true, ..Outcome::default() }
    }
}

/// Command name transducers bind every capability token to.
pub const TRANSDUCER_COMMAND: &str = "invoke";

/// Wraps an unmodified program in a white box that handles each capability token.
pub fn make_transducer<W: 'static>(
    legacy: LegacyFn<W>,
    ns: &mut NameServer,
    name: &str,
    capabilities: &BTreeSet<String>,
) -> Agent<W> {
    let address = ns.allocate_address(name);
    let preset = capabilities
        .iter()
        .map(|t| Pattern::preset([t.clone()], ActionRef::Handle(TRANSDUCER_COMMAND.into()), 0.8))
        .collect();
    Agent::new(address, Box::new(Transducer { legacy }))
        .with_kb(KnowledgeBase::new(preset))
        .with_capabilities(capabilities.iter().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::message::{new_request, tokenize_text, RequestIdAllocator};

    fn request_to(origin: &str, text: &str, ttl: u32) -> RequestEnvelope {
        let mut ids = RequestIdAllocator::new();
        new_request(
            &Address::new(origin),
            &UserId::new("u1"),
            vec![tokenize_text(text)],
            &ManualClock::new(0),
            ttl,
            &mut ids,
        )
        .unwrap()
    }

    fn viewport() -> Agent<()> {
        let shifting = Address::new("shifting#5");
        let preset = ["move", "shift", "show", "mouse-drag"]
            .iter()
            .map(|t| Pattern::preset([*t], ActionRef::Forward(shifting.clone()), 0.8))
            .collect();
        Agent::new(Address::new("map-view-port#4"), Box::new(NullProcess)).with_kb(KnowledgeBase::new(preset))
    }

    #[test]
    fn viewport_forwards_shift_request() {
        let mut vp = viewport();
        let req = request_to("input-regulator#3", "shift the map to the right", 8);
        let handled = vp.handle_message(Envelope::Request(req.clone()), 10, &mut ());
        assert_eq!(handled.outbound.len(), 1);
        let (to, env) = &handled.outbound[0];
        assert_eq!(to.as_str(), "shifting#5");
        match env {
            Envelope::Request(child) => {
                assert_eq!(child.ttl, 7);
                assert_eq!(child.request_id, req.request_id);
                assert_eq!(child.hop_path.last(), Some(vp.address()));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(vp.pending.len(), 1);
    }

    #[test]
    fn unmatched_reward_is_dropped() {
        let mut vp = viewport();
        let handled = vp.handle_message(
            Envelope::Reward(RewardEnvelope {
                request_id: RequestId(5),
                user: UserId::new("u1"),
                value: RewardValue::from_f64(1.0),
                source: Address::new("fb#1"),
            }),
            0,
            &mut (),
        );
        assert!(handled.outbound.is_empty());
        assert!(handled
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::Dropped { reason: DropReason::UnmatchedReward, .. })));
    }

    #[test]
    fn broadcast_derives_one_child_per_target() {
        let targets = vec![Address::new("a#1"), Address::new("b#2")];
        let kb = KnowledgeBase::new(vec![Pattern::preset(["about"], ActionRef::Broadcast(targets.clone()), 0.8)]);
        let mut agent: Agent<()> = Agent::new(Address::new("locations#7"), Box::new(NullProcess)).with_kb(kb);
        let req = request_to("r#3", "tell me about it", 5);
        let handled = agent.handle_message(Envelope::Request(req.clone()), 0, &mut ());
        assert_eq!(handled.outbound.len(), 2);
        for ((to, env), expected) in handled.outbound.iter().zip(&targets) {
            assert_eq!(to, expected);
            let Envelope::Request(child) = env else { panic!() };
            assert_eq!(child.request_id, req.request_id);
            assert_eq!(child.ttl, 4);
        }
    }

    #[test]
    fn exhausted_ttl_is_dropped() {
        let mut vp = viewport();
        let req = request_to("r#3", "shift it", 1);
        let mut zero = derive_child(&req, &Address::new("x#9"), req.segments.clone()).unwrap();
        zero.ttl = 0;
        let handled = vp.handle_message(Envelope::Request(zero), 0, &mut ());
        assert!(handled.outbound.is_empty());
        assert_eq!(vp.pending.len(), 0);
    }

    #[test]
    fn no_action_leaves_no_pending() {
        let mut agent: Agent<()> = Agent::new(Address::new("lonely#1"), Box::new(NullProcess));
        let handled = agent.handle_message(Envelope::Request(request_to("r#3", "hello", 8)), 0, &mut ());
        assert!(handled.outbound.is_empty());
        assert_eq!(agent.pending.len(), 0);
        assert!(handled
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::Dropped { reason: DropReason::NoAction, .. })));
    }

    #[test]
    fn transducer_invokes_legacy_program() {
        let mut ns = NameServer::new();
        let caps: BTreeSet<String> = ["render".to_string()].into();
        let legacy: LegacyFn<u32> = Box::new(|_req, calls| *calls += 1);
        let mut agent = make_transducer(legacy, &mut ns, "renderer", &caps);
        assert_eq!(agent.kb.preset().len(), 1);
        let mut calls = 0u32;
        agent.handle_message(Envelope::Request(request_to("r#3", "render the map", 8)), 0, &mut calls);
        assert_eq!(calls, 1);

        let empty = make_transducer::<u32>(Box::new(|_, _| {}), &mut ns, "renderer", &BTreeSet::new());
        assert!(empty.kb.preset().is_empty());
        assert_ne!(empty.address(), agent.address());
        assert!(empty.introduction().is_none());
    }

    #[test]
    fn snapshot_counts_pending() {
        let mut vp = viewport();
        let snap = vp.snapshot();
        assert_eq!((snap.pending, snap.learned_patterns), (0, 0));
        let req = request_to("r#3", "shift the view to the right", 8);
        vp.handle_message(Envelope::Request(req.clone()), 0, &mut ());
        assert_eq!(vp.snapshot().pending, 1);
        vp.handle_message(
            Envelope::Reward(RewardEnvelope {
                request_id: req.request_id,
                user: UserId::new("u1"),
                value: RewardValue::from_f64(-1.0),
                source: Address::new("shifting#5"),
            }),
            1,
            &mut (),
        );
        let snap = vp.snapshot();
        assert_eq!(snap.pending, 0);
        assert_eq!(snap.learned_patterns, 1);
    }

    #[test]
    fn reward_propagates_to_requester() {
        let mut vp = viewport();
        let req = request_to("input-regulator#3", "shift the map", 8);
        vp.handle_message(Envelope::Request(req.clone()), 0, &mut ());
        let handled = vp.handle_message(
            Envelope::Reward(RewardEnvelope {
                request_id: req.request_id,
                user: UserId::new("u1"),
                value: RewardValue::from_f64(1.0),
                source: Address::new("shifting#5"),
            }),
            1,
            &mut (),
        );
        assert_eq!(handled.outbound.len(), 1);
        let (to, Envelope::Reward(up)) = &handled.outbound[0] else { panic!() };
        assert_eq!(to.as_str(), "input-regulator#3");
        assert_eq!(up.value, RewardValue::from_f64(0.5));
    }
}
