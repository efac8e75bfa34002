//! Human-readable policy tables, read from a snapshot file or a running
//! service.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use aaosa_core::{Address, Network, Origin, Pattern};
use aaosa_mapdemo::snapshot::{apply_snapshot, SnapshotError};

use crate::render::{action_label, num, tokens_label};
use crate::runner::RunConfig;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("request to {url} failed: {message}")]
    Http { url: String, message: String },
    #[error("unexpected response: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no agent named {0}")]
    UnknownAgent(String),
    #[error("cannot build demo network: {0}")]
    Demo(#[from] aaosa_mapdemo::DemoError),
}

impl DumpError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// The part of an agent's `/agents` entry the table needs.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct AgentPolicy {
    pub name: String,
    pub patterns: Vec<Pattern>,
    pub trust: Vec<(Address, f64)>,
}

impl AgentPolicy {
    pub fn of_network<W>(net: &Network<W>) -> Vec<AgentPolicy> {
        net.agents()
            .map(|a| {
                let s = a.snapshot();
                AgentPolicy { name: s.name, patterns: s.patterns, trust: s.trust }
            })
            .collect()
    }
}

fn origin_name(o: Origin) -> &'static str {
    match o {
        Origin::Preset => "preset",
        Origin::Reweighted => "reweighted",
        Origin::Learned => "learned",
    }
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Renders patterns and trusts, optionally for a single agent.
pub fn render_policies(agents: &[AgentPolicy], filter: Option<&str>) -> Result<String, DumpError> {
    let selected: Vec<&AgentPolicy> = agents.iter().filter(|a| filter.is_none_or(|f| a.name == f)).collect();
    if let (Some(f), true) = (filter, selected.is_empty()) {
        return Err(DumpError::UnknownAgent(f.to_string()));
    }
    let mut patterns = vec![["agent", "tokens", "action", "weight", "origin", "owner"].map(String::from).to_vec()];
    let mut trust = vec![["agent", "peer", "trust"].map(String::from).to_vec()];
    for a in &selected {
        for p in &a.patterns {
            patterns.push(vec![
                a.name.clone(),
                tokens_label(&p.tokens),
                action_label(&p.action),
                format!("{:.4}", p.weight),
                origin_name(p.origin).to_string(),
                p.owner.as_ref().map_or_else(|| "-".to_string(), |u| u.as_str().to_string()),
            ]);
        }
        for (peer, t) in &a.trust {
            trust.push(vec![a.name.clone(), peer.label().to_string(), num(*t)]);
        }
    }
    Ok(format!("patterns\n{}\ntrust\n{}", table(&patterns), table(&trust)))
}

/// Applies the snapshot at `path` to a fresh demo network and tabulates it.
pub fn dump_snapshot_file(path: &Path, cfg: &RunConfig, filter: Option<&str>) -> Result<String, DumpError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| DumpError::Io { path: path.display().to_string(), source })?;
    let (mut demo, _) = cfg.demo()?;
    apply_snapshot(demo.net_mut(), &text)?;
    render_policies(&AgentPolicy::of_network(demo.net()), filter)
}

/// Reads `GET {base}/agents` from a running service.
pub fn dump_url(base: &str, filter: Option<&str>) -> Result<String, DumpError> {
    let url = format!("{}/agents", base.trim_end_matches('/'));
    let http = |e: ureq::Error| DumpError::Http { url: url.clone(), message: e.to_string() };
    let body = ureq::get(&url).call().map_err(http)?.body_mut().read_to_string().map_err(http)?;
    let agents: Vec<AgentPolicy> = serde_json::from_str(&body)?;
    render_policies(&agents, filter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aaosa_core::{ActionRef, UserId};

    fn agents() -> Vec<AgentPolicy> {
        vec![AgentPolicy {
            name: "map-view-port".into(),
            patterns: vec![
                Pattern::preset(["shift"], ActionRef::Forward(Address::new("shifting#4")), 0.8),
                Pattern::learned(["view"], ActionRef::Forward(Address::new("magnification#5")), 0.9, UserId::new("u1")),
            ],
            trust: vec![(Address::new("shifting#4"), 0.5)],
        }]
    }

    #[test]
    fn learned_rows_carry_owner() {
        let text = render_policies(&agents(), None).unwrap();
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
        assert_eq!(rows[0], ["patterns"]);
        assert_eq!(rows[1], ["agent", "tokens", "action", "weight", "origin", "owner"]);
        assert_eq!(rows[2], ["map-view-port", "{shift}", "forward(shifting)", "0.8000", "preset", "-"]);
        assert_eq!(rows[3], ["map-view-port", "{view}", "forward(magnification)", "0.9000", "learned", "u1"]);
        assert!(text.contains("trust\nagent          peer      trust\nmap-view-port  shifting  0.5\n"));
    }

    #[test]
    fn unknown_filter_is_an_error() {
        assert!(matches!(render_policies(&agents(), Some("nope")), Err(DumpError::UnknownAgent(_))));
    }

    #[test]
    fn parses_service_agent_listing() {
        let demo = RunConfig::default().demo().unwrap().0;
        let listing: Vec<serde_json::Value> =
            demo.net().agents().map(|a| serde_json::to_value(a.snapshot()).unwrap()).collect();
        let parsed: Vec<AgentPolicy> = serde_json::from_value(serde_json::Value::Array(listing)).unwrap();
        assert_eq!(parsed, AgentPolicy::of_network(demo.net()));
    }

    #[test]
    fn missing_file_and_unreachable_service_exit_two() {
        let e = dump_snapshot_file(Path::new("/nonexistent/policy.jsonl"), &RunConfig::default(), None).unwrap_err();
        assert!(matches!(e, DumpError::Io { .. }));
        assert_eq!(e.exit_code(), 2);
        let e = dump_url("http://127.0.0.1:1", None).unwrap_err();
        assert!(matches!(e, DumpError::Http { .. }));
        assert_eq!(e.exit_code(), 2);
    }
}
