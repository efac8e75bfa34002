//! Deterministic scenario execution against an in-process demo network.

use std::sync::Arc;

use serde_json::json;

use aaosa_core::{ActionRef, EventKind, ManualClock, Origin, UserId};
use aaosa_mapdemo::snapshot::render_snapshot;
use aaosa_mapdemo::{Demo, DemoConfig, DemoError, LocationRecord, RequestOutcome};

use crate::render::{describe_feedback, describe_request, num};
use crate::scenario::{Expect, Scenario, Step};

/// Clock advance applied before every step.
pub const STEP_MS: u64 = 1000;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub user: UserId,
    pub locations: Vec<LocationRecord>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 42, user: UserId::new("u1"), locations: Vec::new() }
    }
}

impl RunConfig {
    pub fn demo(&self) -> Result<(Demo, ManualClock), DemoError> {
        let clock = ManualClock::new(0);
        let demo = Demo::new(self.locations.clone(), &DemoConfig::with_seed(self.seed), Arc::new(clock.clone()))?;
        Ok((demo, clock))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diff {
    pub field: String,
    pub expected: String,
    pub actual: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub line: usize,
    pub output: Vec<String>,
    pub diffs: Vec<Diff>,
    pub error: Option<String>,
}

impl StepReport {
    pub fn ok(&self) -> bool {
        self.diffs.is_empty() && self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub steps: Vec<StepReport>,
    /// Number of steps in the scenario; `steps` stops at the first failure.
    pub total: usize,
    pub trace_jsonl: String,
    pub snapshot: String,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.steps.len() == self.total && self.steps.iter().all(StepReport::ok)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn render(&self) -> String {
        let mut text = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let status = if s.ok() { "ok" } else { "FAIL" };
            text.push_str(&format!("step {} (line {}) {status}\n", i + 1, s.line));
            for l in &s.output {
                text.push_str(&format!("  {l}\n"));
            }
            if let Some(e) = &s.error {
                text.push_str(&format!("  error: {e}\n"));
            }
            for d in &s.diffs {
                text.push_str(&format!("  {}: expected {}, got {}\n", d.field, d.expected, d.actual));
            }
        }
        if self.passed() {
            text.push_str(&format!("PASS {}/{} steps\n", self.total, self.total));
        } else {
            let at = self.steps.last().map_or(0, |s| s.line);
            text.push_str(&format!("FAIL at line {at} after {} of {} steps\n", self.steps.len(), self.total));
        }
        text
    }
}

fn diff(diffs: &mut Vec<Diff>, field: &str, expected: String, actual: String) {
    if expected != actual {
        diffs.push(Diff { field: field.to_string(), expected, actual });
    }
}

fn handle_name(action: Option<&ActionRef>) -> String {
    match action {
        Some(ActionRef::Handle(c)) => c.clone(),
        Some(other) => other.to_string(),
        None => "none".to_string(),
    }
}

fn check(expect: &Expect, demo: &Demo, last: Option<&RequestOutcome>) -> Vec<Diff> {
    let mut diffs = Vec::new();
    let world = demo.world();
    if let Some(path) = &expect.path {
        let got = last.map(|o| o.path.clone()).unwrap_or_default();
        diff(&mut diffs, "path", json!(path).to_string(), json!(got).to_string());
    }
    if let Some([x, y]) = expect.center {
        diff(
            &mut diffs,
            "center",
            format!("[{}, {}]", num(x), num(y)),
            format!("[{}, {}]", num(world.map.center_x), num(world.map.center_y)),
        );
    }
    if let Some(z) = expect.zoom {
        diff(&mut diffs, "zoom", num(z), num(world.map.zoom));
    }
    let actuated = handle_name(last.and_then(|o| o.actuated.as_ref()));
    if let Some(want) = &expect.actuated {
        diff(&mut diffs, "actuated", want.clone(), actuated.clone());
    }
    if let Some(avoid) = &expect.not_actuated {
        if *avoid == actuated {
            diffs.push(Diff {
                field: "not_actuated".into(),
                expected: format!("anything but {avoid}"),
                actual: actuated,
            });
        }
    }
    if let Some(d) = &expect.decision {
        let found = last.and_then(|o| {
            o.trace.iter().find_map(|e| match &e.kind {
                EventKind::Decided { request_id, mode, matched, .. }
                    if e.agent.label() == d.agent && *request_id == o.request_id =>
                {
                    Some((*mode, matched.clone()))
                }
                _ => None,
            })
        });
        match found {
            None => diffs.push(Diff {
                field: format!("decision at {}", d.agent),
                expected: "a decision".into(),
                actual: "none".into(),
            }),
            Some((mode, matched)) => {
                if let Some(want) = d.mode {
                    diff(
                        &mut diffs,
                        &format!("decision mode at {}", d.agent),
                        json!(want).to_string(),
                        json!(mode).to_string(),
                    );
                }
                if let Some(want) = &d.matched {
                    diff(
                        &mut diffs,
                        &format!("matched at {}", d.agent),
                        json!(want).to_string(),
                        json!(matched).to_string(),
                    );
                }
            }
        }
    }
    if let Some(learned) = &expect.learned {
        for l in learned {
            let present = demo.agent_by_label(&l.agent).is_some_and(|a| {
                a.kb.learned_for(&UserId::new(l.user.as_str()))
                    .iter()
                    .any(|p| p.origin == Origin::Learned && p.tokens == l.tokens)
            });
            if !present {
                diffs.push(Diff {
                    field: format!("learned at {}", l.agent),
                    expected: format!("{} for {}", json!(l.tokens), l.user),
                    actual: learned_at(demo, &l.agent),
                });
            }
        }
    }
    if let Some(want) = expect.learned_count {
        let got: usize = demo.net().agents().map(|a| a.kb.learned_count()).sum();
        diff(&mut diffs, "learned_count", want.to_string(), got.to_string());
    }
    if let Some(want) = &expect.info {
        let got = last.and_then(|o| o.info.as_ref()).map_or_else(|| "none".to_string(), |i| i.message.clone());
        diff(&mut diffs, "info", want.clone(), got);
    }
    diffs
}

fn learned_at(demo: &Demo, agent: &str) -> String {
    let Some(a) = demo.agent_by_label(agent) else {
        return format!("no agent {agent}");
    };
    let rows: Vec<String> =
        a.kb.learned()
            .iter()
            .flat_map(|(user, ps)| {
                ps.iter()
                    .filter(|p| p.origin == Origin::Learned)
                    .map(move |p| format!("{} for {}", json!(p.tokens), user.as_str()))
            })
            .collect();
    if rows.is_empty() {
        "nothing".to_string()
    } else {
        rows.join("; ")
    }
}

fn run_step(
    step: &Step,
    demo: &mut Demo,
    default_user: &UserId,
    last: &mut Option<RequestOutcome>,
    output: &mut Vec<String>,
) -> Result<(), DemoError> {
    let user = step.user.as_deref().map_or_else(|| default_user.clone(), UserId::new);
    if step.submits() {
        let out = demo.submit(&user, step.request.as_deref(), step.pointer.clone())?;
        output.extend(describe_request(&out));
        *last = Some(out);
    }
    if let Some(signal) = &step.feedback {
        let fb = demo.feedback(&user, signal.clone())?;
        output.extend(describe_feedback(&fb.summary));
    }
    Ok(())
}

/// Runs `scenario` on `demo`, stopping at the first failing step.
pub fn run_scenario(scenario: &Scenario, demo: &mut Demo, clock: &ManualClock, default_user: &UserId) -> Report {
    let mut steps = Vec::new();
    let mut last: Option<RequestOutcome> = None;
    for s in &scenario.steps {
        clock.advance(STEP_MS + s.step.advance_ms.unwrap_or(0));
        let mut output = Vec::new();
        let error = run_step(&s.step, demo, default_user, &mut last, &mut output).err().map(|e| e.to_string());
        let diffs = match (&error, &s.step.expect) {
            (None, Some(expect)) => check(expect, demo, last.as_ref()),
            _ => Vec::new(),
        };
        let report = StepReport { line: s.line, output, diffs, error };
        let ok = report.ok();
        steps.push(report);
        if !ok {
            break;
        }
    }
    Report {
        steps,
        total: scenario.steps.len(),
        trace_jsonl: demo.net().trace_jsonl(),
        snapshot: render_snapshot(demo.net()),
    }
}

/// Runs `scenario` on a freshly built demo.
pub fn run_fresh(scenario: &Scenario, cfg: &RunConfig) -> Result<Report, DemoError> {
    let (mut demo, clock) = cfg.demo()?;
    Ok(run_scenario(scenario, &mut demo, &clock, &cfg.user))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> Report {
        run_fresh(&Scenario::parse(text).unwrap(), &RunConfig::default()).unwrap()
    }

    #[test]
    fn passing_scenario() {
        let r = run(
            r#"{"request":"shift the map to the right","expect":{"path":["nl-input","input-regulator","map-view-port","shifting"],"center":[10,0],"actuated":"shift-east","decision":{"agent":"map-view-port","mode":"deterministic","matched":["shift"]}}}"#,
        );
        assert!(r.passed(), "{}", r.render());
        assert_eq!(r.exit_code(), 0);
        assert!(r.render().ends_with("PASS 1/1 steps\n"));
    }

    #[test]
    fn wrong_direction_reports_state_diff() {
        let r = run(
            "{\"request\":\"shift the map to the right\",\"expect\":{\"center\":[-10,0]}}\n{\"request\":\"zoom in\"}\n",
        );
        assert!(!r.passed());
        assert_eq!(r.exit_code(), 1);
        assert_eq!(r.steps.len(), 1);
        assert_eq!(
            r.steps[0].diffs,
            [Diff { field: "center".into(), expected: "[-10, 0]".into(), actual: "[10, 0]".into() }]
        );
        assert!(r.render().contains("center: expected [-10, 0], got [10, 0]"));
    }

    #[test]
    fn missing_learned_pattern_is_a_diff() {
        let r = run(
            r#"{"request":"shift the map to the right","feedback":1,"expect":{"learned":[{"agent":"map-view-port","user":"u1","tokens":["map"]}]}}"#,
        );
        assert!(!r.passed());
        assert_eq!(r.steps[0].diffs[0].actual, "nothing");
    }

    #[test]
    fn runtime_errors_fail_the_step() {
        let r = run(r#"{"request":"   "}"#);
        assert!(!r.passed());
        assert!(r.steps[0].error.is_some());
    }

    #[test]
    fn identical_reports_for_identical_seed() {
        let text = "{\"request\":\"shift the view to the right\",\"feedback\":-1}\n{\"request\":\"what is this\"}\n";
        assert_eq!(run(text), run(text));
    }
}
