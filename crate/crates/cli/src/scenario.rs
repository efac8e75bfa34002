//! Scenario files: one JSON step per line. Blank lines and lines starting
//! with `#` are skipped.
//!
//! ```text
//! {"user":"u1","request":"shift the map to the right","expect":{"center":[10,0]}}
//! {"feedback":-1,"expect":{"learned":[{"agent":"map-view-port","user":"u1","tokens":["view"]}]}}
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use aaosa_core::{DecisionMode, Pointer};
use aaosa_mapdemo::FeedbackSignal;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    /// Falls back to the runner's default user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointer: Option<Pointer>,
    /// Applied after the step's request, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackSignal>,
    /// Extra clock advance before the step runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advance_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
}

impl Step {
    pub fn submits(&self) -> bool {
        self.request.is_some() || self.pointer.is_some()
    }
}

/// Checks made after a step. Request-level clauses refer to the most
/// recent request of the scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    /// Agent labels the request visited, origin first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zoom: Option<f64>,
    /// Command of the actuated handle, or `"none"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actuated: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_actuated: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionExpect>,
    /// Learned patterns that must exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learned: Option<Vec<LearnedExpect>>,
    /// Learned patterns across the whole network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learned_count: Option<usize>,
    /// Message of the information panel for the last request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<String>,
}

impl Expect {
    fn needs_request(&self) -> bool {
        self.path.is_some()
            || self.actuated.is_some()
            || self.not_actuated.is_some()
            || self.decision.is_some()
            || self.info.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionExpect {
    pub agent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<DecisionMode>,
    /// Token set of the pattern the decision was made on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<BTreeSet<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedExpect {
    pub agent: String,
    pub user: String,
    pub tokens: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioStep {
    /// 1-based line in the source text.
    pub line: usize,
    pub step: Step,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scenario {
    pub steps: Vec<ScenarioStep>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut steps = Vec::new();
        let mut seen_request = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let step: Step = serde_json::from_str(trimmed).map_err(|source| ScenarioError::Parse { line, source })?;
            let invalid = |message: &str| ScenarioError::Invalid { line, message: message.to_string() };
            if step == Step::default() {
                return Err(invalid("step does nothing"));
            }
            if step.user.as_deref().is_some_and(|u| u.trim().is_empty()) {
                return Err(invalid("user must not be empty"));
            }
            seen_request |= step.submits();
            if step.feedback.is_some() && !seen_request {
                return Err(invalid("feedback before any request"));
            }
            if step.expect.as_ref().is_some_and(Expect::needs_request) && !seen_request {
                return Err(invalid("expect refers to a request but none was made"));
            }
            steps.push(ScenarioStep { line, step });
        }
        Ok(Scenario { steps })
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Scenario::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_comments_and_keeps_line_numbers() {
        let s = Scenario::parse("# intro\n\n{\"request\":\"zoom in\"}\n{\"feedback\":1}\n").unwrap();
        assert_eq!(s.steps.len(), 2);
        assert_eq!(s.steps[0].line, 3);
        assert_eq!(s.steps[1].step.feedback, Some(FeedbackSignal::Value(1.0)));
    }

    #[test]
    fn pointer_and_remark_parse() {
        let s = Scenario::parse(
            r#"{"pointer":{"kind":"on-right-border","x":500,"y":0},"feedback":"thanks","expect":{"center":[10,0]}}"#,
        )
        .unwrap();
        let step = &s.steps[0].step;
        assert_eq!(step.pointer.as_ref().unwrap().kind, aaosa_core::PointerKind::OnRightBorder);
        assert_eq!(step.feedback, Some(FeedbackSignal::Text("thanks".into())));
        assert_eq!(step.expect.as_ref().unwrap().center, Some([10.0, 0.0]));
    }

    #[test]
    fn rejects_dangling_references() {
        assert!(matches!(
            Scenario::parse(r#"{"expect":{"path":["nl-input"]}}"#),
            Err(ScenarioError::Invalid { line: 1, .. })
        ));
        assert!(matches!(Scenario::parse(r#"{"feedback":-1}"#), Err(ScenarioError::Invalid { .. })));
        assert!(Scenario::parse(r#"{"expect":{"learned_count":0}}"#).is_ok());
    }

    #[test]
    fn rejects_unknown_fields_and_empty_steps() {
        assert!(matches!(Scenario::parse(r#"{"reqest":"x"}"#), Err(ScenarioError::Parse { line: 1, .. })));
        assert!(matches!(Scenario::parse("{}"), Err(ScenarioError::Invalid { .. })));
        assert!(matches!(
            Scenario::parse(r#"{"request":"x","expect":{"decision":{"agent":"a","mode":"sideways"}}}"#),
            Err(ScenarioError::Parse { .. })
        ));
    }
}
