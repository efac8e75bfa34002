//! Interpretation policy.
//!
//! An agent scans every request for its stored key patterns, picks the
//! nearest pattern's action when the confidence clears a threshold, breaks
//! close ties at random in proportion to confidence, and otherwise forwards
//! to a peer from the address book or picks a confidence-weighted random
//! action. Decisions are kept until their delayed reward arrives; rewards
//! then reweight the matched pattern and, when negative, promote the most
//! informative unmatched token of the punished request into a new per-user
//! decision criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{segment_tokens, token_set, Address, Segment, UserId};
use crate::rewards::PendingDecision;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no match, no forwarding candidate and no pattern to fall back on")]
    NoActionAvailable,
    #[error("token statistics are empty")]
    NoObservations,
    #[error("pending decision does not belong to this knowledge base")]
    UnknownPending,
    #[error("invalid policy config: {0}")]
    InvalidConfig(&'static str),
}

/// What an interpreter decided to do with a request.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionRef {
    /// Hand the request to this agent's own process unit.
    Handle(String),
    Forward(Address),
    /// Send to several peers at once and let them compete.
    Broadcast(Vec<Address>),
}

impl ActionRef {
    pub fn forward_targets(&self) -> &[Address] {
        match self {
            ActionRef::Handle(_) => &[],
            ActionRef::Forward(a) => std::slice::from_ref(a),
            ActionRef::Broadcast(targets) => targets,
        }
    }
}

impl fmt::Display for ActionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionRef::Handle(c) => write!(f, "handle({c})"),
            ActionRef::Forward(a) => write!(f, "forward({a})"),
            ActionRef::Broadcast(ts) => {
                let names: Vec<&str> = ts.iter().map(Address::as_str).collect();
                write!(f, "broadcast({})", names.join(","))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Hard-wired at startup.
    Preset,
    /// Per-user copy of a preset whose weight has been adjusted by rewards.
    Reweighted,
    /// New decision criterion conceived from a negative reward.
    Learned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub tokens: BTreeSet<String>,
    pub action: ActionRef,
    pub weight: f64,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<UserId>,
}

impl Pattern {
    pub fn preset<I, S>(tokens: I, action: ActionRef, weight: f64) -> Pattern
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Pattern {
            tokens: tokens.into_iter().map(Into::into).collect(),
            action,
            weight: weight.clamp(0.0, 1.0),
            origin: Origin::Preset,
            owner: None,
        }
    }

    pub fn learned<I, S>(tokens: I, action: ActionRef, weight: f64, owner: UserId) -> Pattern
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Pattern {
            tokens: tokens.into_iter().map(Into::into).collect(),
            action,
            weight: weight.clamp(0.0, 1.0),
            origin: Origin::Learned,
            owner: Some(owner),
        }
    }

    pub fn is_per_user(&self) -> bool {
        self.origin != Origin::Preset
    }
}

/// Preset patterns plus one learned layer per user.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    preset: Vec<Pattern>,
    learned: BTreeMap<UserId, Vec<Pattern>>,
}

impl KnowledgeBase {
    pub fn new(preset: Vec<Pattern>) -> Self {
        KnowledgeBase { preset, learned: BTreeMap::new() }
    }

    pub fn preset(&self) -> &[Pattern] {
        &self.preset
    }

    pub fn learned(&self) -> &BTreeMap<UserId, Vec<Pattern>> {
        &self.learned
    }

    pub fn learned_for(&self, user: &UserId) -> &[Pattern] {
        self.learned.get(user).map_or(&[], Vec::as_slice)
    }

    /// Number of patterns conceived from negative rewards, across users.
    pub fn learned_count(&self) -> usize {
        self.learned.values().flatten().filter(|p| p.origin == Origin::Learned).count()
    }

    pub fn reweighted_count(&self) -> usize {
        self.learned.values().flatten().filter(|p| p.origin == Origin::Reweighted).count()
    }

    /// Replaces the preset layer; learned layers are kept.
    pub fn reload_preset(&mut self, preset: Vec<Pattern>) {
        self.preset = preset;
    }

    /// Drops every learned layer, reverting to the startup policy.
    pub fn reset(&mut self) {
        self.learned.clear();
    }

    /// Installs a per-user pattern, replacing one with the same token set.
    pub fn insert_learned(&mut self, user: &UserId, mut pattern: Pattern) {
        pattern.owner = Some(user.clone());
        if pattern.origin == Origin::Preset {
            pattern.origin = Origin::Reweighted;
        }
        let layer = self.learned.entry(user.clone()).or_default();
        match layer.iter_mut().find(|p| p.tokens == pattern.tokens) {
            Some(slot) => *slot = pattern,
            None => layer.push(pattern),
        }
    }

    /// Learned patterns for `user` first, then presets not shadowed by them.
    pub fn effective_kb(&self, user: &UserId) -> Vec<Pattern> {
        let learned = self.learned_for(user);
        let mut out: Vec<Pattern> = learned.to_vec();
        out.extend(self.preset.iter().filter(|p| !learned.iter().any(|l| l.tokens == p.tokens)).cloned());
        out
    }
}

/// Per-request token frequencies, used to rate how informative a token is.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub counts: BTreeMap<String, u64>,
    pub total_requests: u64,
}

impl TokenStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts each distinct token of the request once.
    pub fn observe_tokens(&mut self, segments: &[Segment]) {
        for token in token_set(segments) {
            *self.counts.entry(token).or_insert(0) += 1;
        }
        self.total_requests += 1;
    }

    /// `1 − count(token) / total_requests`; unseen tokens score 1.
    pub fn information_value(&self, token: &str) -> Result<f64, PolicyError> {
        if self.total_requests == 0 {
            return Err(PolicyError::NoObservations);
        }
        let count = self.counts.get(token).copied().unwrap_or(0);
        Ok((1.0 - count as f64 / self.total_requests as f64).clamp(0.0, 1.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Minimum confidence for acting on a match.
    pub threshold: f64,
    /// Matches this close to the best one count as tied.
    pub tie_window: f64,
    pub learning_rate: f64,
    /// Fraction of a passing reward the agent keeps when it has requesters.
    pub keep_fraction: f64,
    /// Weight given to a freshly conceived decision criterion.
    pub criterion_weight: f64,
    /// Whether negative rewards may add new decision criteria at this agent.
    pub learn_criteria: bool,
    pub rng_seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            threshold: 0.5,
            tie_window: 0.05,
            learning_rate: 0.2,
            keep_fraction: 0.5,
            criterion_weight: 0.9,
            learn_criteria: true,
            rng_seed: 42,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.threshold) {
            return Err(PolicyError::InvalidConfig("threshold"));
        }
        if !unit(self.tie_window) {
            return Err(PolicyError::InvalidConfig("tie_window"));
        }
        if !unit(self.learning_rate) {
            return Err(PolicyError::InvalidConfig("learning_rate"));
        }
        if !unit(self.keep_fraction) {
            return Err(PolicyError::InvalidConfig("keep_fraction"));
        }
        if !unit(self.criterion_weight) {
            return Err(PolicyError::InvalidConfig("criterion_weight"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    Deterministic,
    TieRandom,
    FallbackForward,
    UniformRandom,
    /// Chosen by an output agent among collected suggestions.
    Sifted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub chosen: ActionRef,
    pub confidence: f64,
    pub matched_pattern: Option<Pattern>,
    pub runner_up: Option<ActionRef>,
    pub mode: DecisionMode,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchReport {
    pub matches: Vec<(Pattern, f64)>,
    pub unmatched_tokens: BTreeSet<String>,
}

/// A pattern matches when all of its tokens occur in the request; its
/// confidence is the stored weight.
pub fn match_patterns(patterns: &[Pattern], segments: &[Segment]) -> MatchReport {
    let request: BTreeSet<String> = segment_tokens(segments).into_iter().collect();
    let matches: Vec<(Pattern, f64)> = patterns
        .iter()
        .filter(|p| !p.tokens.is_empty() && p.tokens.is_subset(&request))
        .map(|p| (p.clone(), p.weight))
        .collect();
    let covered: BTreeSet<&String> = matches.iter().flat_map(|(p, _)| p.tokens.iter()).collect();
    let unmatched_tokens = request.iter().filter(|t| !covered.contains(t)).cloned().collect();
    MatchReport { matches, unmatched_tokens }
}

/// Distinct actions of the matches, best confidence first (stable).
fn rank_match_actions(report: &MatchReport) -> Vec<(ActionRef, f64, &Pattern)> {
    let mut ranked: Vec<(ActionRef, f64, &Pattern)> = Vec::new();
    for (pattern, conf) in &report.matches {
        match ranked.iter_mut().find(|(a, _, _)| a == &pattern.action) {
            Some(slot) if *conf > slot.1 => {
                slot.1 = *conf;
                slot.2 = pattern;
            }
            Some(_) => {}
            None => ranked.push((pattern.action.clone(), *conf, pattern)),
        }
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

/// Distinct actions over a whole pattern list, heaviest first (stable).
fn rank_pattern_actions(patterns: &[Pattern]) -> Vec<(ActionRef, f64)> {
    let mut ranked: Vec<(ActionRef, f64)> = Vec::new();
    for p in patterns {
        match ranked.iter_mut().find(|(a, _)| a == &p.action) {
            Some(slot) => slot.1 = slot.1.max(p.weight),
            None => ranked.push((p.action.clone(), p.weight)),
        }
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

/// Samples an index with probability proportional to `weights`; uniform when
/// they are all zero.
fn weighted_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.gen_range(0..weights.len());
    }
    let mut draw = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if draw < *w {
            return i;
        }
        draw -= w;
    }
    weights.len() - 1
}

/// Chooses an action for a matched request.
///
/// `patterns` is the effective knowledge base the report was computed
/// from; it supplies the option set for the no-reliable-match case and for
/// the runner-up. `candidates` is the address book ranking for the request.
pub fn decide<R: Rng + ?Sized>(
    report: &MatchReport,
    patterns: &[Pattern],
    candidates: &[(Address, f64)],
    cfg: &PolicyConfig,
    rng: &mut R,
) -> Result<Decision, PolicyError> {
    let ranked = rank_match_actions(report);
    let best = ranked.first().map(|(_, c, _)| *c);

    let (chosen, confidence, matched_pattern, mode) = match best {
        Some(best) if best >= cfg.threshold => {
            let tied: Vec<&(ActionRef, f64, &Pattern)> =
                ranked.iter().filter(|(_, c, _)| best - *c <= cfg.tie_window + 1e-12).collect();
            if tied.len() == 1 {
                let (action, conf, pattern) = tied[0];
                (action.clone(), *conf, Some((*pattern).clone()), DecisionMode::Deterministic)
            } else {
                let weights: Vec<f64> = tied.iter().map(|(_, c, _)| *c).collect();
                let (action, conf, pattern) = tied[weighted_index(&weights, rng)];
                (action.clone(), *conf, Some((*pattern).clone()), DecisionMode::TieRandom)
            }
        }
        _ => {
            if let Some((target, score)) = candidates.first() {
                (ActionRef::Forward(target.clone()), score.clamp(0.0, 1.0), None, DecisionMode::FallbackForward)
            } else {
                let options = rank_pattern_actions(patterns);
                if options.is_empty() {
                    return Err(PolicyError::NoActionAvailable);
                }
                let weights: Vec<f64> = options.iter().map(|(_, w)| *w).collect();
                let (action, weight) = &options[weighted_index(&weights, rng)];
                (action.clone(), *weight, None, DecisionMode::UniformRandom)
            }
        }
    };

    let runner_up = ranked
        .iter()
        .map(|(a, _, _)| a.clone())
        .chain(candidates.iter().map(|(a, _)| ActionRef::Forward(a.clone())))
        .chain(rank_pattern_actions(patterns).into_iter().map(|(a, _)| a))
        .find(|a| a != &chosen);

    Ok(Decision { chosen, confidence, matched_pattern, runner_up, mode })
}

/// One mutation (or non-mutation) made by [`apply_reward`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningEvent {
    Reweighted {
        user: UserId,
        tokens: BTreeSet<String>,
        from: f64,
        to: f64,
        /// A per-user copy of a preset was created for this update.
        copied: bool,
    },
    Learned {
        user: UserId,
        tokens: BTreeSet<String>,
        action: ActionRef,
        weight: f64,
        crv: f64,
    },
    Unchanged {
        reason: String,
    },
}

/// Applies this agent's share of a delayed reward to its knowledge base.
pub fn apply_reward(
    kb: &mut KnowledgeBase,
    stats: &TokenStats,
    pending: &PendingDecision,
    reward_share: f64,
    cfg: &PolicyConfig,
) -> Result<Vec<LearningEvent>, PolicyError> {
    let user = &pending.user;
    let matched = pending.decision.matched_pattern.as_ref();

    if let Some(p) = matched {
        let known = kb.learned_for(user).iter().any(|l| l.tokens == p.tokens)
            || kb.preset.iter().any(|q| q.tokens == p.tokens && q.action == p.action);
        if !known {
            return Err(PolicyError::UnknownPending);
        }
    }

    let mut trace = Vec::new();
    if reward_share == 0.0 {
        trace.push(LearningEvent::Unchanged { reason: "zero reward".into() });
        return Ok(trace);
    }

    if let Some(p) = matched {
        let step = cfg.learning_rate * reward_share;
        let layer = kb.learned.entry(user.clone()).or_default();
        if let Some(own) = layer.iter_mut().find(|l| l.tokens == p.tokens) {
            let from = own.weight;
            own.weight = (from + step).clamp(0.0, 1.0);
            trace.push(LearningEvent::Reweighted {
                user: user.clone(),
                tokens: own.tokens.clone(),
                from,
                to: own.weight,
                copied: false,
            });
        } else {
            let base = kb.preset.iter().find(|q| q.tokens == p.tokens && q.action == p.action).expect("checked above");
            let from = base.weight;
            let copy = Pattern {
                tokens: base.tokens.clone(),
                action: base.action.clone(),
                weight: (from + step).clamp(0.0, 1.0),
                origin: Origin::Reweighted,
                owner: Some(user.clone()),
            };
            trace.push(LearningEvent::Reweighted {
                user: user.clone(),
                tokens: copy.tokens.clone(),
                from,
                to: copy.weight,
                copied: true,
            });
            layer.push(copy);
        }
    }

    if reward_share < 0.0 && cfg.learn_criteria {
        let mut best: Option<(&String, f64)> = None;
        // ascending iteration + strict comparison = lexicographic tie-break
        for token in &pending.unmatched_tokens {
            let crv = stats.information_value(token).unwrap_or(1.0);
            if best.is_none_or(|(_, b)| crv > b) {
                best = Some((token, crv));
            }
        }
        if let Some((token, crv)) = best {
            let action = pending
                .decision
                .runner_up
                .clone()
                .or_else(|| matched.map(|p| p.action.clone()))
                .unwrap_or_else(|| pending.decision.chosen.clone());
            let pattern = Pattern::learned([token.clone()], action.clone(), cfg.criterion_weight, user.clone());
            trace.push(LearningEvent::Learned {
                user: user.clone(),
                tokens: pattern.tokens.clone(),
                action,
                weight: pattern.weight,
                crv,
            });
            kb.insert_learned(user, pattern);
        }
    }

    if trace.is_empty() {
        trace.push(LearningEvent::Unchanged { reason: "nothing to adjust".into() });
    }
    Ok(trace)
}
