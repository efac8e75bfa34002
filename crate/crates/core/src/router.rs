//! In-process message router. Owns the agents and the world they act on,
//! and delivers envelopes one at a time in a configurable order.

use std::collections::VecDeque;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, EventKind, Handled, TraceEvent};
use crate::message::{Address, Envelope, RequestEnvelope, RequestId};

pub const DEFAULT_MAX_STEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouterError {
    #[error("address {0} is already attached")]
    DuplicateAddress(Address),
    #[error("no agent at {0}")]
    UnknownAgent(Address),
    #[error("step budget of {0} deliveries exceeded")]
    StepBudgetExceeded(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Fifo,
    Random { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub schedule: Schedule,
    pub max_steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { schedule: Schedule::Fifo, max_steps: DEFAULT_MAX_STEPS }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RouterStats {
    pub sent: u64,
    pub delivered: u64,
    pub dead_lettered: u64,
}

pub struct Network<W> {
    agents: IndexMap<Address, Agent<W>>,
    queue: VecDeque<(Address, Envelope)>,
    trace: Vec<TraceEvent>,
    world: W,
    now_ms: u64,
    cfg: ScheduleConfig,
    rng: ChaCha8Rng,
    stats: RouterStats,
}

impl<W> std::fmt::Debug for Network<W> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("agents", &self.agents.keys().collect::<Vec<_>>())
            .field("queued", &self.queue.len())
            .field("stats", &self.stats)
            .finish_non_exhaustive()
    }
}

impl<W> Network<W> {
    pub fn new(world: W, cfg: ScheduleConfig) -> Self {
        let seed = match cfg.schedule {
            Schedule::Fifo => 0,
            Schedule::Random { seed } => seed,
        };
        Network {
            agents: IndexMap::new(),
            queue: VecDeque::new(),
            trace: Vec::new(),
            world,
            now_ms: 0,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: RouterStats::default(),
        }
    }

    /// Adds an agent and queues introductions both ways with every agent
    /// already attached. Agents without capability tokens stay silent.
    pub fn attach(&mut self, agent: Agent<W>) -> Result<(), RouterError> {
        let address = agent.address().clone();
        if self.agents.contains_key(&address) {
            return Err(RouterError::DuplicateAddress(address));
        }
        let intro = agent.introduction();
        let mut to_new = Vec::new();
        for (other, existing) in &self.agents {
            if let Some(i) = &intro {
                self.queue.push_back((other.clone(), Envelope::Introduction(i.clone())));
                self.stats.sent += 1;
            }
            if let Some(i) = existing.introduction() {
                to_new.push(i);
            }
        }
        for i in to_new {
            self.queue.push_back((address.clone(), Envelope::Introduction(i)));
            self.stats.sent += 1;
        }
        self.agents.insert(address, agent);
        Ok(())
    }

    pub fn agent(&self, address: &Address) -> Option<&Agent<W>> {
        self.agents.get(address)
    }

    pub fn agent_mut(&mut self, address: &Address) -> Option<&mut Agent<W>> {
        self.agents.get_mut(address)
    }

    /// Agents in attach order.
    pub fn agents(&self) -> impl Iterator<Item = &Agent<W>> {
        self.agents.values()
    }

    pub fn agents_mut(&mut self) -> impl Iterator<Item = &mut Agent<W>> {
        self.agents.values_mut()
    }

    pub fn world(&self) -> &W {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut W {
        &mut self.world
    }

    pub fn now(&self) -> u64 {
        self.now_ms
    }

    pub fn set_now(&mut self, now_ms: u64) {
        self.now_ms = now_ms;
    }

    pub fn stats(&self) -> RouterStats {
        self.stats
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.trace)
    }

    /// The trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.trace.iter().map(|e| serde_json::to_string(e).expect("trace events serialize") + "\n").collect()
    }

    pub fn send(&mut self, to: Address, envelope: Envelope) {
        self.stats.sent += 1;
        self.queue.push_back((to, envelope));
    }

    /// Has the agent at `origin` interpret a request it issued itself.
    pub fn originate(&mut self, origin: &Address, request: RequestEnvelope) -> Result<(), RouterError> {
        let now = self.now_ms;
        let agent = self.agents.get_mut(origin).ok_or_else(|| RouterError::UnknownAgent(origin.clone()))?;
        let handled = agent.originate(request, now, &mut self.world);
        self.absorb(handled);
        Ok(())
    }

    fn absorb(&mut self, handled: Handled) {
        self.trace.extend(handled.events);
        for (to, env) in handled.outbound {
            self.send(to, env);
        }
    }

    fn next(&mut self) -> Option<(Address, Envelope)> {
        match self.cfg.schedule {
            Schedule::Fifo => self.queue.pop_front(),
            Schedule::Random { .. } => {
                if self.queue.is_empty() {
                    None
                } else {
                    let i = self.rng.gen_range(0..self.queue.len());
                    self.queue.remove(i)
                }
            }
        }
    }

    /// Delivers one envelope. Returns false when the queue was empty.
    pub fn step(&mut self) -> bool {
        let Some((to, env)) = self.next() else {
            return false;
        };
        let expired = matches!(&env, Envelope::Request(r) if r.ttl == 0);
        let now = self.now_ms;
        match self.agents.get_mut(&to) {
            Some(agent) if !expired => {
                self.stats.delivered += 1;
                let handled = agent.handle_message(env, now, &mut self.world);
                self.absorb(handled);
            }
            _ => {
                self.stats.dead_lettered += 1;
                self.trace.push(TraceEvent {
                    at: now,
                    agent: to.clone(),
                    kind: EventKind::DeadLetter { to, envelope: env.kind().to_string() },
                });
            }
        }
        true
    }

    /// Delivers until the queue drains. Returns the number of steps taken.
    pub fn run_until_idle(&mut self) -> Result<usize, RouterError> {
        let mut steps = 0;
        while !self.queue.is_empty() {
            if steps >= self.cfg.max_steps {
                return Err(RouterError::StepBudgetExceeded(self.cfg.max_steps));
            }
            self.step();
            steps += 1;
        }
        Ok(steps)
    }
}

/// Agents a request visited: where it originated, then every forwarding
/// target in trace order.
pub fn request_path(trace: &[TraceEvent], id: RequestId) -> Vec<Address> {
    let mut path = Vec::new();
    for e in trace {
        match &e.kind {
            EventKind::Originated { request_id, .. } if *request_id == id && path.is_empty() => {
                path.push(e.agent.clone())
            }
            EventKind::Forwarded { request_id, to, .. } if *request_id == id => {
                if path.is_empty() {
                    path.push(e.agent.clone());
                }
                path.push(to.clone());
            }
            _ => {}
        }
    }
    path
}
