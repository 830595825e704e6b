//! Domain types shared by every layer of the simulator: identities, zones,
//! directional reputation, per-peer key links and the protocol error taxonomy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyx::{KeyPair, SymKey};

/// Identity of an object, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    /// Returns `None` for the reserved value 0.
    pub fn new(value: u32) -> Option<Self> {
        (value >= 1).then_some(Self(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Position of this node in a dense, id-ordered table.
    pub(crate) fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Identity of a secured zone, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneId(pub u32);

impl ZoneId {
    pub fn get(self) -> u32 {
        self.0
    }

    pub fn in_range(self, zone_count: u32) -> bool {
        (1..=zone_count).contains(&self.0)
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "zone {}", self.0)
    }
}

/// A directional trust score in `[0, N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReputationScore(u32);

impl ReputationScore {
    pub fn new(value: u32, n_max: u32) -> Self {
        Self(value.min(n_max))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

/// Behaviour classes that move a reputation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReputationEvent {
    SendReceiveSuccess,
    EvaluationSuccess,
    Suspicion,
    Attack,
}

/// One direction of a key chain between two friends.
///
/// `snum` counts completed meet-again exchanges on this chain and `version`
/// is the index of `key` along the chain. `history` holds the retired keys in
/// order (the key-list), so a replayed packet can be recognised as stale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyLink {
    pub key: SymKey,
    pub version: u32,
    pub snum: u32,
    pub history: Vec<SymKey>,
    /// Set by the sending side between a send and its confirmation.
    pub awaiting_confirmation: bool,
}

impl KeyLink {
    pub fn fresh(key: SymKey) -> Self {
        Self {
            key,
            version: 0,
            snum: 0,
            history: Vec::new(),
            awaiting_confirmation: false,
        }
    }
}

/// The owner's knowledge of one friend.
///
/// `inbound` carries messages from the peer to the owner, `outbound` the
/// reverse. Each ordered pair of friends has its own chain, established by
/// one first-meet exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FriendRecord {
    pub peer: NodeId,
    pub reputation: ReputationScore,
    pub inbound: Option<KeyLink>,
    pub outbound: Option<KeyLink>,
}

impl FriendRecord {
    pub fn new(peer: NodeId, reputation: ReputationScore) -> Self {
        Self {
            peer,
            reputation,
            inbound: None,
            outbound: None,
        }
    }

    /// Current inbound key, version and sequence number.
    pub fn shared_key(&self) -> Option<&SymKey> {
        self.inbound.as_ref().map(|l| &l.key)
    }

    pub fn key_version(&self) -> Option<u32> {
        self.inbound.as_ref().map(|l| l.version)
    }

    pub fn snum(&self) -> Option<u32> {
        self.inbound.as_ref().map(|l| l.snum)
    }
}

/// Everything an object stores about itself after the bootstrap phase.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub key_pair: KeyPair,
    pub friends: BTreeMap<NodeId, FriendRecord>,
    pub permitted_zones: BTreeSet<ZoneId>,
    pub current_zone: ZoneId,
}

impl NodeState {
    pub fn new(id: NodeId, key_pair: KeyPair, permitted_zones: BTreeSet<ZoneId>, current_zone: ZoneId) -> Self {
        Self {
            id,
            key_pair,
            friends: BTreeMap::new(),
            permitted_zones,
            current_zone,
        }
    }

    pub fn friend(&self, peer: NodeId) -> Option<&FriendRecord> {
        self.friends.get(&peer)
    }

    pub fn friend_mut(&mut self, peer: NodeId) -> Option<&mut FriendRecord> {
        self.friends.get_mut(&peer)
    }

    /// Returns the record for `peer`, creating it with `reputation` if absent.
    /// Self-friendship is refused.
    pub fn ensure_friend(&mut self, peer: NodeId, reputation: ReputationScore) -> Option<&mut FriendRecord> {
        if peer == self.id {
            return None;
        }
        Some(
            self.friends
                .entry(peer)
                .or_insert_with(|| FriendRecord::new(peer, reputation)),
        )
    }
}

pub fn is_friend(node: &NodeState, peer: NodeId) -> bool {
    peer != node.id && node.friends.contains_key(&peer)
}

pub fn has_permission(node: &NodeState, zone: ZoneId) -> bool {
    node.permitted_zones.contains(&zone)
}

/// +1 on success events, -1 on suspicion or attack, clamped to `[0, n_max]`.
pub fn update_reputation(mut record: FriendRecord, event: ReputationEvent, n_max: u32) -> FriendRecord {
    record.reputation = apply_event(record.reputation, event, n_max);
    record
}

pub(crate) fn apply_event(score: ReputationScore, event: ReputationEvent, n_max: u32) -> ReputationScore {
    let value = match event {
        ReputationEvent::SendReceiveSuccess | ReputationEvent::EvaluationSuccess => score.0.saturating_add(1),
        ReputationEvent::Suspicion | ReputationEvent::Attack => score.0.saturating_sub(1),
    };
    ReputationScore::new(value, n_max)
}

/// Parameters of the trust decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustParams {
    pub n_max: u32,
    pub delta_reputation: u32,
    pub delta_max_friend: u32,
    pub zone_count: u32,
    pub rng_seed: u64,
}

impl Default for TrustParams {
    fn default() -> Self {
        Self {
            n_max: 100,
            delta_reputation: 80,
            delta_max_friend: 7,
            zone_count: 20,
            rng_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("n_max must be positive")]
    ZeroMaxReputation,
    #[error("delta_reputation {delta} exceeds n_max {n_max}")]
    ThresholdAboveMax { delta: u32, n_max: u32 },
    #[error("delta_max_friend {cap} must satisfy 3 <= cap < {node_count}")]
    HelperCapOutOfRange { cap: u32, node_count: u32 },
    #[error("zone_count must be positive")]
    NoZones,
}

impl TrustParams {
    /// Checks the hard bounds. A threshold outside the customary `[50, N)`
    /// band is allowed but logged.
    pub fn validate(&self, node_count: u32) -> Result<(), ParamsError> {
        if self.n_max == 0 {
            return Err(ParamsError::ZeroMaxReputation);
        }
        if self.zone_count == 0 {
            return Err(ParamsError::NoZones);
        }
        if self.delta_reputation > self.n_max {
            return Err(ParamsError::ThresholdAboveMax {
                delta: self.delta_reputation,
                n_max: self.n_max,
            });
        }
        if self.delta_max_friend < 3 || self.delta_max_friend >= node_count {
            return Err(ParamsError::HelperCapOutOfRange {
                cap: self.delta_max_friend,
                node_count,
            });
        }
        if !self.threshold_in_customary_band() {
            log::warn!(
                "delta_reputation {} lies outside the customary band [50, {})",
                self.delta_reputation,
                self.n_max
            );
        }
        Ok(())
    }

    pub fn threshold_in_customary_band(&self) -> bool {
        (50..self.n_max).contains(&self.delta_reputation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    PermissionDenied,
    NoHelpers,
    TrustBelowThreshold,
    ReplayDetected,
    IntegrityFailure,
    AuthFailure,
    MalformedMessage,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 7] = [
        ErrorKind::PermissionDenied,
        ErrorKind::NoHelpers,
        ErrorKind::TrustBelowThreshold,
        ErrorKind::ReplayDetected,
        ErrorKind::IntegrityFailure,
        ErrorKind::AuthFailure,
        ErrorKind::MalformedMessage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::PermissionDenied => "PermissionDenied",
            ErrorKind::NoHelpers => "NoHelpers",
            ErrorKind::TrustBelowThreshold => "TrustBelowThreshold",
            ErrorKind::ReplayDetected => "ReplayDetected",
            ErrorKind::IntegrityFailure => "IntegrityFailure",
            ErrorKind::AuthFailure => "AuthFailure",
            ErrorKind::MalformedMessage => "MalformedMessage",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind}: {context}")]
pub struct ProtocolError {
    pub kind: ErrorKind,
    pub context: String,
}

impl ProtocolError {
    pub fn new(kind: ErrorKind, context: impl Into<String>) -> Self {
        Self {
            kind,
            context: context.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyx::KeyPair;

    fn node(id: u32, friends: &[u32], zones: &[u32]) -> NodeState {
        let mut n = NodeState::new(
            NodeId(id),
            KeyPair::from_secret([id as u8; 32]),
            zones.iter().copied().map(ZoneId).collect(),
            ZoneId(zones.first().copied().unwrap_or(1)),
        );
        for &f in friends {
            n.ensure_friend(NodeId(f), ReputationScore::new(50, 100));
        }
        n
    }

    fn record(rep: u32) -> FriendRecord {
        FriendRecord::new(NodeId(2), ReputationScore::new(rep, 100))
    }

    #[test]
    fn friendship_lookup() {
        let n = node(14, &[8, 54], &[1]);
        assert!(is_friend(&n, NodeId(8)));
        assert!(!is_friend(&n, NodeId(9)));
        assert!(!is_friend(&node(14, &[], &[1]), NodeId(8)));
    }

    #[test]
    fn self_friendship_is_refused() {
        let n = node(8, &[8, 54], &[1]);
        assert!(!is_friend(&n, NodeId(8)));
        assert!(!n.friends.contains_key(&NodeId(8)));
    }

    #[test]
    fn permission_lookup() {
        let n = node(14, &[], &[8, 12, 10, 4, 6, 19, 15]);
        assert!(has_permission(&n, ZoneId(12)));
        assert!(!has_permission(&n, ZoneId(3)));
        assert!(!has_permission(&n, ZoneId(0)));
        assert!(!has_permission(&n, ZoneId(21)));
    }

    #[test]
    fn reputation_steps_and_clamps() {
        let up = update_reputation(record(50), ReputationEvent::SendReceiveSuccess, 100);
        assert_eq!(up.reputation.get(), 51);
        let floor = update_reputation(record(0), ReputationEvent::Suspicion, 100);
        assert_eq!(floor.reputation.get(), 0);
        let ceil = update_reputation(record(100), ReputationEvent::EvaluationSuccess, 100);
        assert_eq!(ceil.reputation.get(), 100);
        let down = update_reputation(record(7), ReputationEvent::Attack, 100);
        assert_eq!(down.reputation.get(), 6);
    }

    #[test]
    fn reputation_update_leaves_keys_alone() {
        let mut r = record(10);
        r.inbound = Some(KeyLink::fresh(SymKey([3; 16])));
        let after = update_reputation(r.clone(), ReputationEvent::Suspicion, 100);
        assert_eq!(after.inbound, r.inbound);
        assert_eq!(after.peer, r.peer);
    }

    #[test]
    fn params_bounds() {
        let p = TrustParams::default();
        assert!(p.validate(100).is_ok());
        assert_eq!(
            TrustParams {
                delta_max_friend: 2,
                ..p
            }
            .validate(100),
            Err(ParamsError::HelperCapOutOfRange {
                cap: 2,
                node_count: 100
            })
        );
        assert!(TrustParams {
            delta_max_friend: 100,
            ..p
        }
        .validate(100)
        .is_err());
        assert!(TrustParams {
            delta_reputation: 101,
            ..p
        }
        .validate(100)
        .is_err());
        assert!(TrustParams {
            n_max: 0,
            delta_reputation: 0,
            ..p
        }
        .validate(100)
        .is_err());
        // Outside [50, N) only warns.
        let low = TrustParams {
            delta_reputation: 10,
            ..p
        };
        assert!(low.validate(100).is_ok());
        assert!(!low.threshold_in_customary_band());
    }

    proptest::proptest! {
        #[test]
        fn repeated_suspicion_bottoms_out(start in 0u32..=100, extra in 0u32..50) {
            let mut r = record(start);
            for _ in 0..(100 + extra) {
                r = update_reputation(r, ReputationEvent::Suspicion, 100);
            }
            proptest::prop_assert_eq!(r.reputation.get(), 0);
        }

        #[test]
        fn reputation_stays_in_range(start in 0u32..=100, events in proptest::collection::vec(0u8..4, 0..300)) {
            let mut r = record(start);
            for e in events {
                let ev = match e {
                    0 => ReputationEvent::SendReceiveSuccess,
                    1 => ReputationEvent::EvaluationSuccess,
                    2 => ReputationEvent::Suspicion,
                    _ => ReputationEvent::Attack,
                };
                r = update_reputation(r, ev, 100);
                proptest::prop_assert!(r.reputation.get() <= 100);
            }
        }
    }
}
