//! Decentralized admission of mobile objects into secured zones.
//!
//! A newcomer is admitted either because it already shares a key chain with
//! the in-zone guide, or because the guide's in-zone friends vouch for it
//! with their stored reputations. Keys rotate along a one-way chain with a
//! sequence number per ordered pair, and every message is billed to an
//! energy/communication ledger.

pub mod cost;
pub mod keyx;
pub mod model;
pub mod protocol;
pub mod sim;
pub mod trust;

pub use model::{ErrorKind, NodeId, NodeState, ProtocolError, ReputationScore, TrustParams, ZoneId};
