//! Policy snapshots: line-delimited JSON holding every agent's per-user
//! patterns, token statistics and peer trust, keyed by agent label.
//!
//! The first line is a header carrying the record count so that a file cut
//! short at a line boundary is still detected.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use aaosa_core::{ActionRef, Address, Agent, Network, Origin, Pattern, TokenStats, UserId};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot at line {line}, field `{field}`: {message}")]
    CorruptSnapshot { line: usize, field: String, message: String },
}

fn corrupt(line: usize, field: &str, message: impl Into<String>) -> SnapshotError {
    SnapshotError::CorruptSnapshot { line, field: field.to_string(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    snapshot: u32,
    records: usize,
}

/// Pattern with forward targets written as agent labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternRecord {
    pub tokens: BTreeSet<String>,
    pub action: ActionRecord,
    pub weight: f64,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionRecord {
    Handle(String),
    Forward(String),
    Broadcast(Vec<String>),
}

impl ActionRecord {
    fn of(action: &ActionRef) -> Self {
        match action {
            ActionRef::Handle(c) => ActionRecord::Handle(c.clone()),
            ActionRef::Forward(a) => ActionRecord::Forward(a.label().to_string()),
            ActionRef::Broadcast(ts) => ActionRecord::Broadcast(ts.iter().map(|a| a.label().to_string()).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Record {
    Pattern { agent: String, user: UserId, pattern: PatternRecord },
    Stats { agent: String, stats: TokenStats },
    Trust { agent: String, trust: BTreeMap<String, f64> },
}

fn records_of<W>(net: &Network<W>) -> Vec<Record> {
    let mut out = Vec::new();
    for agent in net.agents() {
        let name = agent.name().to_string();
        out.push(Record::Trust {
            agent: name.clone(),
            trust: agent.book.entries().iter().map(|e| (e.address.label().to_string(), e.trust)).collect(),
        });
        out.push(Record::Stats { agent: name.clone(), stats: agent.stats.clone() });
        for (user, patterns) in agent.kb.learned() {
            for p in patterns {
                out.push(Record::Pattern {
                    agent: name.clone(),
                    user: user.clone(),
                    pattern: PatternRecord {
                        tokens: p.tokens.clone(),
                        action: ActionRecord::of(&p.action),
                        weight: p.weight,
                        origin: p.origin,
                    },
                });
            }
        }
    }
    out
}

/// Serializes the adaptive state of every agent.
pub fn render_snapshot<W>(net: &Network<W>) -> String {
    let records = records_of(net);
    let mut text = serde_json::to_string(&Header { snapshot: SNAPSHOT_VERSION, records: records.len() })
        .expect("header serializes");
    text.push('\n');
    for r in &records {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    text
}

pub fn save_policies<W>(net: &Network<W>, path: &Path) -> Result<(), SnapshotError> {
    std::fs::write(path, render_snapshot(net))?;
    Ok(())
}

struct Staged {
    learned: BTreeMap<UserId, Vec<Pattern>>,
    stats: Option<TokenStats>,
    trust: Option<BTreeMap<Address, f64>>,
}

/// Best guess at which part of a well-formed but invalid record is wrong.
fn field_of(value: &serde_json::Value) -> &'static str {
    ["pattern", "stats", "trust"].into_iter().find(|k| value.get(k).is_some()).unwrap_or("agent")
}

fn resolve<W>(
    by_label: &BTreeMap<&str, &Agent<W>>,
    label: &str,
    line: usize,
    field: &str,
) -> Result<Address, SnapshotError> {
    by_label
        .get(label)
        .map(|a| a.address().clone())
        .ok_or_else(|| corrupt(line, field, format!("no agent labelled `{label}`")))
}

fn pattern_from<W>(
    rec: PatternRecord,
    user: &UserId,
    by_label: &BTreeMap<&str, &Agent<W>>,
    line: usize,
) -> Result<Pattern, SnapshotError> {
    if rec.tokens.is_empty() {
        return Err(corrupt(line, "pattern.tokens", "pattern has no tokens"));
    }
    if !(0.0..=1.0).contains(&rec.weight) {
        return Err(corrupt(line, "pattern.weight", format!("weight {} outside [0, 1]", rec.weight)));
    }
    if rec.origin == Origin::Preset {
        return Err(corrupt(line, "pattern.origin", "preset patterns are not stored"));
    }
    let action = match rec.action {
        ActionRecord::Handle(c) => ActionRef::Handle(c),
        ActionRecord::Forward(l) => ActionRef::Forward(resolve(by_label, &l, line, "pattern.action")?),
        ActionRecord::Broadcast(ls) => ActionRef::Broadcast(
            ls.iter().map(|l| resolve(by_label, l, line, "pattern.action")).collect::<Result<_, _>>()?,
        ),
    };
    Ok(Pattern { tokens: rec.tokens, action, weight: rec.weight, origin: rec.origin, owner: Some(user.clone()) })
}

/// Replaces every agent's learned state with the snapshot's. The network
/// is left untouched when the snapshot fails validation.
pub fn apply_snapshot<W>(net: &mut Network<W>, text: &str) -> Result<(), SnapshotError> {
    if !text.is_empty() && !text.ends_with('\n') {
        let last = text.lines().count();
        return Err(corrupt(last, "(json)", "file ends in the middle of a record"));
    }
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header: Header = match lines.next() {
        Some((n, l)) => serde_json::from_str(l).map_err(|e| corrupt(n, "snapshot", e.to_string()))?,
        None => return Err(corrupt(1, "snapshot", "empty file")),
    };
    if header.snapshot != SNAPSHOT_VERSION {
        return Err(corrupt(1, "snapshot", format!("unsupported version {}", header.snapshot)));
    }

    let by_label: BTreeMap<&str, &Agent<W>> = net.agents().map(|a| (a.name(), a)).collect();
    let mut staged: BTreeMap<Address, Staged> = BTreeMap::new();
    let mut count = 0;
    for (n, line) in lines {
        if line.trim().is_empty() {
            return Err(corrupt(n, "(json)", "blank line"));
        }
        count += 1;
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| corrupt(n, "(json)", e.to_string()))?;
        let record: Record =
            serde_json::from_value(value.clone()).map_err(|e| corrupt(n, field_of(&value), e.to_string()))?;
        let label = match &record {
            Record::Pattern { agent, .. } | Record::Stats { agent, .. } | Record::Trust { agent, .. } => agent.clone(),
        };
        let address = resolve(&by_label, &label, n, "agent")?;
        let slot = staged.entry(address.clone()).or_insert_with(|| Staged {
            learned: BTreeMap::new(),
            stats: None,
            trust: None,
        });
        match record {
            Record::Pattern { user, pattern, .. } => {
                let p = pattern_from(pattern, &user, &by_label, n)?;
                let layer = slot.learned.entry(user).or_default();
                if layer.iter().any(|q| q.tokens == p.tokens) {
                    return Err(corrupt(n, "pattern.tokens", "duplicate pattern for this user"));
                }
                layer.push(p);
            }
            Record::Stats { stats, .. } => {
                if slot.stats.replace(stats).is_some() {
                    return Err(corrupt(n, "stats", "second stats record for this agent"));
                }
            }
            Record::Trust { trust, .. } => {
                let agent = by_label[label.as_str()];
                let mut resolved = BTreeMap::new();
                for (peer, t) in trust {
                    let peer_addr = resolve(&by_label, &peer, n, "trust")?;
                    if agent.book.entry(&peer_addr).is_none() {
                        return Err(corrupt(n, "trust", format!("`{peer}` is not in the address book of `{label}`")));
                    }
                    if !(0.0..=1.0).contains(&t) {
                        return Err(corrupt(n, "trust", format!("trust {t} outside [0, 1]")));
                    }
                    resolved.insert(peer_addr, t);
                }
                if slot.trust.replace(resolved).is_some() {
                    return Err(corrupt(n, "trust", "second trust record for this agent"));
                }
            }
        }
    }
    if count != header.records {
        return Err(corrupt(
            count + 1,
            "records",
            format!("header announces {} records, found {count}", header.records),
        ));
    }

    for agent in net.agents_mut() {
        agent.kb.reset();
        let Some(s) = staged.remove(agent.address()) else { continue };
        for (user, patterns) in s.learned {
            for p in patterns {
                agent.kb.insert_learned(&user, p);
            }
        }
        if let Some(stats) = s.stats {
            agent.stats = stats;
        }
        for (peer, t) in s.trust.unwrap_or_default() {
            agent.book.set_trust(&peer, t).expect("peer checked above");
        }
    }
    Ok(())
}

pub fn load_policies<W>(net: &mut Network<W>, path: &Path) -> Result<(), SnapshotError> {
    let text = std::fs::read_to_string(path)?;
    apply_snapshot(net, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{Demo, FeedbackSignal};
    use crate::network::DemoConfig;
    use aaosa_core::ManualClock;
    use std::sync::Arc;

    fn demo() -> Demo {
        Demo::new(vec![], &DemoConfig::default(), Arc::new(ManualClock::new(0))).unwrap()
    }

    fn learned_demo() -> Demo {
        let mut d = demo();
        let u1 = UserId::new("u1");
        d.submit(&u1, Some("shift the view to the right"), None).unwrap();
        d.feedback(&u1, FeedbackSignal::Value(-1.0)).unwrap();
        d
    }

    #[test]
    fn fresh_round_trip_is_byte_identical() {
        let mut d = demo();
        let first = render_snapshot(d.net());
        apply_snapshot(d.net_mut(), &first).unwrap();
        assert_eq!(render_snapshot(d.net()), first);
    }

    #[test]
    fn learned_state_moves_to_fresh_network() {
        let d = learned_demo();
        let text = render_snapshot(d.net());
        assert!(text.contains(r#""user":"u1""#));
        assert!(text.contains(r#""forward":"magnification""#));
        let mut fresh = demo();
        apply_snapshot(fresh.net_mut(), &text).unwrap();
        assert_eq!(render_snapshot(fresh.net()), text);
        let vp = fresh.agent_by_label("map-view-port").unwrap();
        assert_eq!(vp.kb.learned_count(), 1);
        assert_eq!(vp.kb.preset().len(), 8);
    }

    #[test]
    fn truncation_is_detected() {
        let d = learned_demo();
        let text = render_snapshot(d.net());
        let cut = &text[..text.len() - 10];
        assert!(matches!(apply_snapshot(demo().net_mut(), cut), Err(SnapshotError::CorruptSnapshot { .. })));

        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        let short = lines.join("\n") + "\n";
        let err = apply_snapshot(demo().net_mut(), &short).unwrap_err();
        assert!(matches!(err, SnapshotError::CorruptSnapshot { ref field, .. } if field == "records"), "{err}");
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let mut d = demo();
        let good = render_snapshot(d.net());
        let mut lines: Vec<String> = good.lines().map(String::from).collect();
        lines[0] = r#"{"snapshot":1,"records":29}"#.into();
        lines.push(r#"{"agent":"map-view-port","user":"u1","pattern":{"tokens":["view"],"action":{"forward":"nowhere"},"weight":0.9,"origin":"learned"}}"#.into());
        let text = lines.join("\n") + "\n";
        match apply_snapshot(d.net_mut(), &text) {
            Err(SnapshotError::CorruptSnapshot { line, field, .. }) => {
                assert_eq!(line, 30);
                assert_eq!(field, "pattern.action");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_weight = good.replacen(r#""records":28"#, r#""records":29"#, 1)
            + r#"{"agent":"shifting","user":"u1","pattern":{"tokens":["x"],"action":{"handle":"shift-east"},"weight":3.0,"origin":"learned"}}"#
            + "\n";
        let err = apply_snapshot(d.net_mut(), &bad_weight).unwrap_err();
        assert!(matches!(err, SnapshotError::CorruptSnapshot { ref field, .. } if field == "pattern.weight"), "{err}");
        assert_eq!(render_snapshot(d.net()), good);
    }
}
