//! Line-oriented interactive driver. Every input line advances the
//! manual clock by one step, so a transcript replays to the same output.

use std::io::{self, BufRead, Write};

use aaosa_core::{ManualClock, Pointer, PointerKind, TraceEvent, UserId};
use aaosa_mapdemo::{Demo, FeedbackSignal};

use crate::dump::{render_policies, AgentPolicy};
use crate::render::{describe_feedback, describe_request, path_line};
use crate::runner::STEP_MS;

pub const USAGE: &str = "commands:
  <text>                          send a request
  :point <kind> <x> <y> [target]  send a pointer gesture
  :good | :bad                    reward the last request with +1 or -1
  :trace                          show the routing of the last request
  :policy <agent>                 show an agent's patterns and trusts
  :user <name>                    switch user
  :quit                           leave";

pub struct Repl {
    pub demo: Demo,
    clock: ManualClock,
    user: UserId,
    last_path: Vec<String>,
    last_trace: Vec<TraceEvent>,
    pub prompt: bool,
    done: bool,
}

impl Repl {
    pub fn new(demo: Demo, clock: ManualClock, user: UserId) -> Self {
        Repl { demo, clock, user, last_path: Vec::new(), last_trace: Vec::new(), prompt: false, done: false }
    }

    pub fn user(&self) -> &UserId {
        &self.user
    }

    pub fn finished(&self) -> bool {
        self.done
    }

    /// Reads commands until `:quit` or end of input.
    pub fn run<R: BufRead, W: Write>(&mut self, input: R, mut out: W) -> io::Result<()> {
        if self.prompt {
            write!(out, "{}> ", self.user.as_str())?;
            out.flush()?;
        }
        for line in input.lines() {
            let line = line?;
            for l in self.execute(&line) {
                writeln!(out, "{l}")?;
            }
            if self.done {
                break;
            }
            if self.prompt {
                write!(out, "{}> ", self.user.as_str())?;
                out.flush()?;
            }
        }
        Ok(())
    }

    /// Executes one line and returns what to print.
    pub fn execute(&mut self, line: &str) -> Vec<String> {
        let line = line.trim();
        if line.is_empty() {
            return Vec::new();
        }
        self.clock.advance(STEP_MS);
        let mut lines = Vec::new();
        self.dispatch(line, &mut lines);
        lines
    }

    fn dispatch(&mut self, line: &str, lines: &mut Vec<String>) {
        let Some(command) = line.strip_prefix(':') else {
            self.submit(Some(line), None, lines);
            return;
        };
        let mut words = command.split_whitespace();
        match (words.next(), words.collect::<Vec<_>>().as_slice()) {
            (Some("quit"), []) => {
                self.done = true;
                lines.push("bye".to_string());
            }
            (Some("good"), []) => self.feedback(1.0, lines),
            (Some("bad"), []) => self.feedback(-1.0, lines),
            (Some("trace"), []) => {
                lines.push(path_line(&self.last_path));
                lines.extend(self.last_trace.iter().map(|e| serde_json::to_string(e).expect("events serialize")));
            }
            (Some("policy"), [agent]) => {
                match render_policies(&AgentPolicy::of_network(self.demo.net()), Some(agent)) {
                    Ok(text) => lines.extend(text.lines().map(String::from)),
                    Err(e) => lines.push(e.to_string()),
                }
            }
            (Some("user"), [name]) => {
                self.user = UserId::new(*name);
                lines.push(format!("user is now {name}"));
            }
            (Some("point"), [kind, x, y, rest @ ..]) if rest.len() <= 1 => {
                match (PointerKind::parse(kind), x.parse::<f64>(), y.parse::<f64>()) {
                    (Some(kind), Ok(x), Ok(y)) => {
                        let pointer = Pointer { kind, x, y, target: rest.first().map(|t| t.to_string()) };
                        self.submit(None, Some(pointer), lines);
                    }
                    _ => lines.push(USAGE.to_string()),
                }
            }
            _ => lines.push(USAGE.to_string()),
        }
    }

    fn submit(&mut self, text: Option<&str>, pointer: Option<Pointer>, lines: &mut Vec<String>) {
        match self.demo.submit(&self.user, text, pointer) {
            Ok(out) => {
                lines.extend(describe_request(&out));
                self.last_path = out.path;
                self.last_trace = out.trace;
            }
            Err(e) => lines.push(format!("error: {e}")),
        }
    }

    fn feedback(&mut self, value: f64, lines: &mut Vec<String>) {
        match self.demo.feedback(&self.user, FeedbackSignal::Value(value)) {
            Ok(fb) => lines.extend(describe_feedback(&fb.summary)),
            Err(e) => lines.push(format!("error: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::RunConfig;

    fn session(input: &str) -> String {
        let (demo, clock) = RunConfig::default().demo().unwrap();
        let mut repl = Repl::new(demo, clock, UserId::new("u1"));
        let mut out = Vec::new();
        repl.run(input.as_bytes(), &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn trace_shows_viewport_route() {
        let out = session("shift the map to the right\n:trace\n");
        assert!(out.contains("nl-input -> input-regulator -> map-view-port -> shifting\n"));
        assert!(out.contains("\"event\":\"decided\""));
    }

    #[test]
    fn bad_then_policy_shows_learned_view() {
        let out = session("shift the view to the right\n:bad\n:policy map-view-port\n");
        assert!(out.contains("learned at map-view-port: {view}"));
        let row = out.lines().find(|l| l.starts_with("map-view-port  {view}")).expect("learned row");
        let cells: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cells[cells.len() - 2..], ["learned", "u1"], "{row}");
    }

    #[test]
    fn click_reaches_magnification() {
        let out = session(":point click 10 20\n");
        assert!(out.contains("pointer-input -> input-regulator -> map-view-port -> magnification"));
        assert!(out.contains("zoom 2"));
    }

    #[test]
    fn unknown_commands_print_usage() {
        let out = session(":dance\n:point wiggle 1 2\n");
        assert_eq!(out.matches("commands:").count(), 2);
    }

    #[test]
    fn quit_stops_reading() {
        let out = session(":quit\nzoom in\n");
        assert_eq!(out, "bye\n");
    }

    #[test]
    fn feedback_without_request_is_reported() {
        assert!(session(":good\n").starts_with("error: no earlier request"));
    }

    #[test]
    fn transcript_replays_identically() {
        let input = "shift the view to the right\n:bad\nshift the view to the right\n:user u2\nshift the view to the right\n:trace\n";
        assert_eq!(session(input), session(input));
    }
}
