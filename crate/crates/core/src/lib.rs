//! Runtime for networks of adaptive agents that route requests by learned
//! policies and improve from delayed rewards.

pub mod addressing;
pub mod agent;
pub mod clock;
pub mod message;
pub mod policy;
pub mod rewards;
pub mod router;

pub use addressing::{AddressBook, AddressBookEntry, AddressError, NameServer, INITIAL_TRUST};
pub use agent::{
    make_transducer, Actuation, Admitted, Agent, AgentSnapshot, DropReason, EventKind, FlushOutcome, Handled,
    Invocation, LegacyFn, NullProcess, Outcome, ProcessUnit, Proposal, TraceEvent,
};
pub use clock::{Clock, ManualClock, SystemClock};
pub use message::*;
pub use policy::*;
pub use rewards::*;
pub use router::{request_path, Network, RouterError, RouterStats, Schedule, ScheduleConfig, DEFAULT_MAX_STEPS};
