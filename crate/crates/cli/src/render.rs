//! Plain-text renderings shared by the REPL, the runner and the dump tool.

use aaosa_core::{ActionRef, Address, LearningEvent};
use aaosa_mapdemo::{RequestOutcome, RewardSummary};

fn labels(targets: &[Address]) -> String {
    targets.iter().map(Address::label).collect::<Vec<_>>().join(",")
}

/// Like the `Display` impl, but with agent labels instead of addresses.
pub fn action_label(action: &ActionRef) -> String {
    match action {
        ActionRef::Handle(c) => format!("handle({c})"),
        ActionRef::Forward(a) => format!("forward({})", a.label()),
        ActionRef::Broadcast(ts) => format!("broadcast({})", labels(ts)),
    }
}

pub fn tokens_label<'a>(tokens: impl IntoIterator<Item = &'a String>) -> String {
    let tokens: Vec<&str> = tokens.into_iter().map(String::as_str).collect();
    format!("{{{}}}", tokens.join(","))
}

/// Prints `-0` as `0` and drops trailing zeros.
pub fn num(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub fn path_line(path: &[String]) -> String {
    if path.is_empty() {
        "(no path)".to_string()
    } else {
        path.join(" -> ")
    }
}

pub fn describe_request(out: &RequestOutcome) -> Vec<String> {
    let mut lines = Vec::new();
    for (id, value) in &out.implicit_feedback.rewards {
        lines.push(format!("implicit reward {} for request #{}", num(value.as_f64()), id.0));
    }
    lines.extend(describe_learning(&out.implicit_feedback));
    let actuated = out.actuated.as_ref().map_or_else(|| "nothing actuated".to_string(), action_label);
    lines.push(format!(
        "#{} {} | {} | center ({}, {}) zoom {}",
        out.request_id.0,
        path_line(&out.path),
        actuated,
        num(out.map.center_x),
        num(out.map.center_y),
        num(out.map.zoom)
    ));
    if let Some(info) = &out.info {
        let names: Vec<String> = info.records.iter().map(|r| format!("{} {}", r.id, r.name)).collect();
        if names.is_empty() {
            lines.push(format!("info: {}", info.message));
        } else {
            lines.push(format!("info: {} [{}]", info.message, names.join("; ")));
        }
    }
    lines
}

pub fn describe_learning(summary: &RewardSummary) -> Vec<String> {
    let mut lines = Vec::new();
    for c in &summary.learning {
        match &c.change {
            LearningEvent::Learned { user, tokens, action, weight, .. } => lines.push(format!(
                "learned at {}: {} -> {} weight {} for {}",
                c.agent,
                tokens_label(tokens),
                action_label(action),
                num(*weight),
                user.as_str()
            )),
            LearningEvent::Reweighted { user, tokens, from, to, .. } => lines.push(format!(
                "reweighted at {}: {} {} -> {} for {}",
                c.agent,
                tokens_label(tokens),
                num(*from),
                num(*to),
                user.as_str()
            )),
            LearningEvent::Unchanged { .. } => {}
        }
    }
    for t in &summary.trust {
        lines.push(format!("trust at {}: {} {} -> {}", t.agent, t.peer, num(t.from), num(t.to)));
    }
    lines
}

pub fn describe_feedback(summary: &RewardSummary) -> Vec<String> {
    let mut lines: Vec<String> = summary
        .rewards
        .iter()
        .map(|(id, value)| format!("reward {} for request #{}", num(value.as_f64()), id.0))
        .collect();
    if lines.is_empty() {
        lines.push("no reward issued".to_string());
    }
    lines.extend(describe_learning(summary));
    lines
}
