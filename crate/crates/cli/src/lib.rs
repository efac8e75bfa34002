//! Headless driver for the map demo: scenario runner, REPL and policy
//! inspection.

pub mod dump;
pub mod render;
pub mod repl;
pub mod runner;
pub mod scenario;

pub use dump::{dump_snapshot_file, dump_url, render_policies, AgentPolicy, DumpError};
pub use repl::Repl;
pub use runner::{run_fresh, run_scenario, Report, RunConfig};
pub use scenario::{Scenario, ScenarioError};
