//! Output agents: collect suggestions and pick which one gets actuated.

use thiserror::Error;

use aaosa_core::{Actuation, FlushOutcome, ProcessUnit, SuggestionEnvelope};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SiftError {
    #[error("no suggestions to sift")]
    NoSuggestions,
}

/// Index of the winning suggestion (highest confidence, earliest on ties)
/// and of the runner-up, if any.
pub fn sift_suggestions(collected: &[SuggestionEnvelope]) -> Result<(usize, Option<usize>), SiftError> {
    let mut order: Vec<usize> = (0..collected.len()).collect();
    // stable: equal confidences keep arrival order
    order.sort_by(|&a, &b| collected[b].confidence.total_cmp(&collected[a].confidence));
    match order.as_slice() {
        [] => Err(SiftError::NoSuggestions),
        [w, rest @ ..] => Ok((*w, rest.first().copied())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SifterRole {
    /// Passes the winner up to the next output agent.
    Relay,
    /// Orders the winner's source to carry out its suggestion.
    Actuator,
}

pub struct SifterProcess {
    role: SifterRole,
    collected: Vec<SuggestionEnvelope>,
}

impl SifterProcess {
    pub fn new(role: SifterRole) -> Self {
        SifterProcess { role, collected: Vec::new() }
    }
}

impl<W> ProcessUnit<W> for SifterProcess {
    fn collect(&mut self, suggestion: SuggestionEnvelope) -> bool {
        self.collected.push(suggestion);
        true
    }

    fn flush(&mut self, _now: u64, _world: &mut W) -> FlushOutcome {
        let mut groups: Vec<Vec<SuggestionEnvelope>> = Vec::new();
        for s in self.collected.drain(..) {
            match groups.iter_mut().find(|g| g[0].request_id == s.request_id) {
                Some(g) => g.push(s),
                None => groups.push(vec![s]),
            }
        }
        let mut out = FlushOutcome::default();
        for group in groups {
            let Ok((w, r)) = sift_suggestions(&group) else { continue };
            match self.role {
                SifterRole::Relay => out.forward.push(group[w].clone()),
                SifterRole::Actuator => {
                    out.actuate.push(Actuation { winner: group[w].clone(), runner_up: r.map(|i| group[i].clone()) })
                }
            }
        }
        out
    }
}
