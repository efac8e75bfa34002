//! Rewards unit: pending request-choices and delayed-reward apportioning.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{Address, RequestId, RewardEnvelope, RewardValue, UserId};
use crate::policy::Decision;

pub const DEFAULT_PENDING_CAPACITY: usize = 1024;
pub const DEFAULT_PENDING_TTL_MS: u64 = 10 * 60 * 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("no pending decision for request {0}")]
    UnmatchedReward(RequestId),
}

/// A requester that should receive part of this agent's reward, together
/// with the request id under which it knows the request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upstream {
    pub address: Address,
    pub request_id: RequestId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingDecision {
    pub request_id: RequestId,
    pub user: UserId,
    pub decision: Decision,
    pub unmatched_tokens: BTreeSet<String>,
    pub upstream: Vec<Upstream>,
    pub created_at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictionReason {
    Capacity,
    Expired,
    Overwritten,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eviction {
    pub request_id: RequestId,
    pub reason: EvictionReason,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PendingStore {
    entries: IndexMap<RequestId, PendingDecision>,
    capacity: usize,
    ttl_ms: u64,
}

impl Default for PendingStore {
    fn default() -> Self {
        PendingStore::new(DEFAULT_PENDING_CAPACITY, DEFAULT_PENDING_TTL_MS)
    }
}

impl PendingStore {
    pub fn new(capacity: usize, ttl_ms: u64) -> Self {
        PendingStore { entries: IndexMap::new(), capacity: capacity.max(1), ttl_ms }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: RequestId) -> Option<&PendingDecision> {
        self.entries.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.entries.keys().copied()
    }

    /// Stores a decision; evicts the oldest entry when full.
    pub fn record_pending(&mut self, pd: PendingDecision) -> Vec<Eviction> {
        let mut evictions = Vec::new();
        if self.entries.shift_remove(&pd.request_id).is_some() {
            evictions.push(Eviction { request_id: pd.request_id, reason: EvictionReason::Overwritten });
        }
        while self.entries.len() >= self.capacity {
            if let Some((id, _)) = self.entries.shift_remove_index(0) {
                evictions.push(Eviction { request_id: id, reason: EvictionReason::Capacity });
            }
        }
        self.entries.insert(pd.request_id, pd);
        evictions
    }

    /// Removes and returns the decision the reward belongs to.
    pub fn settle(&mut self, reward: &RewardEnvelope) -> Result<PendingDecision, RewardError> {
        self.entries.shift_remove(&reward.request_id).ok_or(RewardError::UnmatchedReward(reward.request_id))
    }

    /// Drops entries older than the store's ttl.
    pub fn evict_expired(&mut self, now: u64) -> Vec<Eviction> {
        let ttl = self.ttl_ms;
        let expired: Vec<RequestId> = self
            .entries
            .values()
            .filter(|pd| now.saturating_sub(pd.created_at) > ttl)
            .map(|pd| pd.request_id)
            .collect();
        expired
            .into_iter()
            .map(|id| {
                self.entries.shift_remove(&id);
                Eviction { request_id: id, reason: EvictionReason::Expired }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardShare<T> {
    pub self_share: RewardValue,
    pub upstream_shares: Vec<(T, RewardValue)>,
}

impl<T> RewardShare<T> {
    pub fn total(&self) -> RewardValue {
        self.self_share + self.upstream_shares.iter().map(|(_, v)| *v).sum()
    }
}

/// Splits `value` between this agent (`keep_fraction`) and its requesters
/// (equal parts, last one absorbing the remainder). An agent without
/// requesters keeps everything. The parts always sum to `value` exactly.
pub fn apportion<T: Clone>(value: RewardValue, upstream: &[T], keep_fraction: f64) -> RewardShare<T> {
    if upstream.is_empty() {
        return RewardShare { self_share: value, upstream_shares: Vec::new() };
    }
    let self_share = value.scale(keep_fraction.clamp(0.0, 1.0));
    let remainder = value - self_share;
    let n = upstream.len() as i64;
    let each = RewardValue::from_nanos(remainder.nanos() / n);
    let mut upstream_shares: Vec<(T, RewardValue)> = upstream.iter().map(|u| (u.clone(), each)).collect();
    let assigned = RewardValue::from_nanos(each.nanos() * (n - 1));
    if let Some(last) = upstream_shares.last_mut() {
        last.1 = remainder - assigned;
    }
    RewardShare { self_share, upstream_shares }
}
