//! Interactive multimodal map built as a network of adaptive agents, with
//! a session service exposing it over HTTP and WebSocket.

pub mod corpus;
pub mod domain;
pub mod driver;
pub mod feedback;
pub mod http;
pub mod network;
pub mod regulator;
pub mod service;
pub mod sifter;
pub mod snapshot;
pub mod world;

pub use driver::{Demo, DemoError, FeedbackOutcome, FeedbackSignal, RequestOutcome, RewardSummary};
pub use network::{build_demo_network, DemoAddresses, DemoConfig, DemoNetwork};
pub use world::{LocationKind, LocationRecord, MapState, MapWorld};
