//! Broadcast head-end, decoders and an adversary, driven by line-based
//! scenario files.
//!
//! The head-end runs any mix of certificate-based, hash-binding and legacy
//! CA systems over one scrambled stream. Each decoder pairs an updatable CA
//! client with a chip that keeps every secret it derives; the channel
//! between the two is open to the adversary.

pub mod adversary;
pub mod decoder;
pub mod error;
pub mod headend;
pub mod ledger;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod scrambler;

pub use error::{Result, SimError};
pub use report::RunReport;
pub use runner::{run_scenario, World};
pub use scenario::ScenarioConfig;
