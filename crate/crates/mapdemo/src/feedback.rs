//! Turns explicit remarks and implicit behavior (repeats, pauses) into
//! delayed rewards against earlier requests.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use aaosa_core::{Address, RequestId, RewardEnvelope, RewardValue, UserId};

const HISTORY_LIMIT: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRules {
    pub repeat_window_ms: u64,
    pub repeat_penalty: f64,
    pub praise_tokens: BTreeSet<String>,
    pub complaint_tokens: BTreeSet<String>,
    pub praise_reward: f64,
    pub complaint_reward: f64,
    pub pause_window_ms: u64,
    pub pause_bonus: f64,
}

impl Default for FeedbackRules {
    fn default() -> Self {
        let set = |ts: &[&str]| ts.iter().map(|t| t.to_string()).collect();
        FeedbackRules {
            repeat_window_ms: 10_000,
            repeat_penalty: -1.0,
            praise_tokens: set(&["thanks", "good", "great", "yes"]),
            complaint_tokens: set(&["no", "wrong", "bad", "undo"]),
            praise_reward: 1.0,
            complaint_reward: -1.0,
            pause_window_ms: 8_000,
            pause_bonus: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub request_id: RequestId,
    pub tokens: Vec<String>,
    pub at: u64,
    pub responded_at: Option<u64>,
    pub rewarded: bool,
    /// Agent the reward for this request is delivered to.
    pub entry_point: Address,
}

/// One user's recent requests, oldest first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackHistory {
    entries: Vec<HistoryEntry>,
}

impl FeedbackHistory {
    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.last()
    }

    pub fn get(&self, id: RequestId) -> Option<&HistoryEntry> {
        self.entries.iter().find(|e| e.request_id == id)
    }

    pub fn record(&mut self, entry: HistoryEntry) {
        if self.entries.len() == HISTORY_LIMIT {
            self.entries.remove(0);
        }
        self.entries.push(entry);
    }

    pub fn mark_rewarded(&mut self, id: RequestId) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.request_id == id) {
            e.rewarded = true;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeedbackEvent {
    NewRequest { tokens: Vec<String>, at: u64 },
    Remark { tokens: Vec<String> },
    PauseTick { at: u64 },
    Explicit { value: f64 },
}

fn reward(user: &UserId, id: RequestId, value: f64, source: &Address) -> RewardEnvelope {
    RewardEnvelope { request_id: id, user: user.clone(), value: RewardValue::from_f64(value), source: source.clone() }
}

fn pause_reward(
    history: &FeedbackHistory,
    user: &UserId,
    at: u64,
    rules: &FeedbackRules,
    source: &Address,
) -> Option<RewardEnvelope> {
    let last = history.last()?;
    let responded = last.responded_at?;
    (!last.rewarded && at.saturating_sub(responded) >= rules.pause_window_ms)
        .then(|| reward(user, last.request_id, rules.pause_bonus, source))
}

/// Rewards implied by `event`. Implicit signals never re-reward a request.
pub fn derive_feedback(
    history: &FeedbackHistory,
    user: &UserId,
    event: &FeedbackEvent,
    rules: &FeedbackRules,
    source: &Address,
) -> Vec<RewardEnvelope> {
    match event {
        FeedbackEvent::NewRequest { tokens, at } => {
            let repeated = history
                .entries
                .iter()
                .rev()
                .find(|e| &e.tokens == tokens && at.saturating_sub(e.at) <= rules.repeat_window_ms);
            match repeated {
                Some(e) if !e.rewarded => vec![reward(user, e.request_id, rules.repeat_penalty, source)],
                Some(_) => Vec::new(),
                None => pause_reward(history, user, *at, rules, source).into_iter().collect(),
            }
        }
        FeedbackEvent::Remark { tokens } => {
            let Some(last) = history.last().filter(|e| !e.rewarded) else {
                return Vec::new();
            };
            let has = |set: &BTreeSet<String>| tokens.iter().any(|t| set.contains(t));
            if has(&rules.complaint_tokens) {
                vec![reward(user, last.request_id, rules.complaint_reward, source)]
            } else if has(&rules.praise_tokens) {
                vec![reward(user, last.request_id, rules.praise_reward, source)]
            } else {
                Vec::new()
            }
        }
        FeedbackEvent::PauseTick { at } => pause_reward(history, user, *at, rules, source).into_iter().collect(),
        FeedbackEvent::Explicit { value } => {
            history.last().map(|e| reward(user, e.request_id, *value, source)).into_iter().collect()
        }
    }
}

/// Per-user histories plus the rules; marks what it rewards.
#[derive(Clone, Debug, Default)]
pub struct FeedbackTracker {
    pub rules: FeedbackRules,
    histories: BTreeMap<UserId, FeedbackHistory>,
}

impl FeedbackTracker {
    pub fn new(rules: FeedbackRules) -> Self {
        FeedbackTracker { rules, histories: BTreeMap::new() }
    }

    pub fn history(&self, user: &UserId) -> Option<&FeedbackHistory> {
        self.histories.get(user)
    }

    pub fn record(&mut self, user: &UserId, entry: HistoryEntry) {
        self.histories.entry(user.clone()).or_default().record(entry);
    }

    /// Derives the rewards for `event` and pairs each with its delivery target.
    pub fn observe(
        &mut self,
        user: &UserId,
        event: &FeedbackEvent,
        source: &Address,
    ) -> Vec<(Address, RewardEnvelope)> {
        let history = self.histories.entry(user.clone()).or_default();
        let rewards = derive_feedback(history, user, event, &self.rules, source);
        rewards
            .into_iter()
            .filter_map(|r| {
                let to = history.get(r.request_id)?.entry_point.clone();
                history.mark_rewarded(r.request_id);
                Some((to, r))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aaosa_core::tokenize_text;
    use aaosa_core::Segment;

    fn toks(s: &str) -> Vec<String> {
        match tokenize_text(s) {
            Segment::Text(t) => t,
            Segment::Pointer(_) => unreachable!(),
        }
    }

    fn entry(id: u64, text: &str, at: u64) -> HistoryEntry {
        HistoryEntry {
            request_id: RequestId(id),
            tokens: toks(text),
            at,
            responded_at: Some(at),
            rewarded: false,
            entry_point: Address::new("output#13"),
        }
    }

    fn fb() -> Address {
        Address::new("feedback#14")
    }

    fn u1() -> UserId {
        UserId::new("u1")
    }

    #[test]
    fn repeat_within_window_punishes_first() {
        let mut h = FeedbackHistory::default();
        h.record(entry(1, "shift the map to the right", 0));
        let ev = FeedbackEvent::NewRequest { tokens: toks("shift the map to the right"), at: 3000 };
        let out = derive_feedback(&h, &u1(), &ev, &FeedbackRules::default(), &fb());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].request_id, RequestId(1));
        assert_eq!(out[0].value, RewardValue::from_f64(-1.0));

        let late = FeedbackEvent::NewRequest { tokens: toks("shift the map to the right"), at: 30_000 };
        let out = derive_feedback(&h, &u1(), &late, &FeedbackRules::default(), &fb());
        assert_eq!(out[0].value, RewardValue::from_f64(0.25));
    }

    #[test]
    fn remarks_map_to_unit_rewards() {
        let mut h = FeedbackHistory::default();
        h.record(entry(4, "zoom in", 0));
        let rules = FeedbackRules::default();
        let thanks = derive_feedback(&h, &u1(), &FeedbackEvent::Remark { tokens: toks("thanks") }, &rules, &fb());
        assert_eq!((thanks[0].request_id, thanks[0].value), (RequestId(4), RewardValue::from_f64(1.0)));
        let wrong = derive_feedback(&h, &u1(), &FeedbackEvent::Remark { tokens: toks("no, wrong") }, &rules, &fb());
        assert_eq!(wrong[0].value, RewardValue::from_f64(-1.0));
        assert!(derive_feedback(&h, &u1(), &FeedbackEvent::Remark { tokens: toks("hmm") }, &rules, &fb()).is_empty());
    }

    #[test]
    fn no_history_no_rewards() {
        let h = FeedbackHistory::default();
        let rules = FeedbackRules::default();
        assert!(derive_feedback(&h, &u1(), &FeedbackEvent::PauseTick { at: 99_000 }, &rules, &fb()).is_empty());
        assert!(derive_feedback(&h, &u1(), &FeedbackEvent::Explicit { value: 1.0 }, &rules, &fb()).is_empty());
    }

    #[test]
    fn pause_needs_full_window() {
        let mut h = FeedbackHistory::default();
        h.record(entry(2, "zoom in", 1000));
        let rules = FeedbackRules::default();
        assert!(derive_feedback(&h, &u1(), &FeedbackEvent::PauseTick { at: 8999 }, &rules, &fb()).is_empty());
        assert_eq!(derive_feedback(&h, &u1(), &FeedbackEvent::PauseTick { at: 9000 }, &rules, &fb()).len(), 1);
    }

    #[test]
    fn tracker_never_rewards_twice_implicitly() {
        let mut t = FeedbackTracker::default();
        t.record(&u1(), entry(1, "zoom in", 0));
        let first = t.observe(&u1(), &FeedbackEvent::Remark { tokens: toks("bad") }, &fb());
        assert_eq!(first.len(), 1);
        assert_eq!(first[0].0.as_str(), "output#13");
        assert!(t.observe(&u1(), &FeedbackEvent::NewRequest { tokens: toks("zoom in"), at: 100 }, &fb()).is_empty());
        assert!(t.history(&u1()).unwrap().get(RequestId(1)).unwrap().rewarded);
    }
}
