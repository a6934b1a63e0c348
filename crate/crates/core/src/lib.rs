//! Multi-robot casualty triage: aerial and ground geolocation, contactless
//! vitals estimation, opportunistic record replication, scorecard
//! orchestration and a deterministic mission simulator tying them together.

pub mod geoloc;
pub mod vitals;
pub mod meshsync;
pub mod orchestrator;
pub mod sim;
