//! Guide / newcomer / helper state machine.
//!
//! A newcomer with a shared chain to the guide proves itself directly. Anyone
//! else is vouched for by the guide's in-zone friends: each helper that holds
//! a matching association answers with its stored reputation of the
//! newcomer, and the guide admits on the combined trust value.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostLedger, CryptoOp, MessageSizeModel};
use crate::keyx::{KeyExchange, Mode, Packet, SymKey};
use crate::model::{
    apply_event, has_permission, is_friend, ErrorKind, KeyLink, NodeId, NodeState, ProtocolError, ReputationEvent,
    ReputationScore, TrustParams, ZoneId,
};
use crate::trust::{evaluate, multiplier, AckRecord, TrustVerdict};

const REQUEST: &[u8] = b"join-request";
const CONFIRM: &[u8] = b"ok";
const QUERY: &[u8] = b"vouch-query";
const ACK: &[u8] = b"vouch-ack";
const HELLO: &[u8] = b"hello";

/// All objects of one simulation plus the exchange scheme they run.
#[derive(Debug, Clone)]
pub struct World {
    pub params: TrustParams,
    pub sizes: MessageSizeModel,
    pub kx: KeyExchange,
    nodes: Vec<NodeState>,
    rng: ChaCha8Rng,
}

impl World {
    /// `nodes` must hold ids `1..=n` in order.
    pub fn new(nodes: Vec<NodeState>, params: TrustParams, seed: u64) -> Self {
        assert!(
            nodes.iter().enumerate().all(|(i, n)| n.id.index() == i),
            "node ids must be dense and ordered"
        );
        Self {
            params,
            sizes: MessageSizeModel::default(),
            kx: KeyExchange::default(),
            nodes,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node_count(&self) -> u32 {
        self.nodes.len() as u32
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 >= 1 && id.index() < self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut NodeState {
        &mut self.nodes[id.index()]
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn link_mut(&mut self, owner: NodeId, peer: NodeId, inbound: bool) -> Option<&mut KeyLink> {
        let rec = self.node_mut(owner).friend_mut(peer)?;
        if inbound {
            rec.inbound.as_mut()
        } else {
            rec.outbound.as_mut()
        }
    }

    fn bump(&mut self, owner: NodeId, peer: NodeId, event: ReputationEvent) {
        let n_max = self.params.n_max;
        if let Some(rec) = self.node_mut(owner).friend_mut(peer) {
            rec.reputation = apply_event(rec.reputation, event, n_max);
        }
    }

    /// Runs a first meet from `from` to `to`, opening the `from -> to`
    /// chain. Missing friend records are created with the given opinions.
    pub fn establish(
        &mut self,
        from: NodeId,
        to: NodeId,
        message: &[u8],
        opinions: (ReputationScore, ReputationScore),
        ledger: &mut CostLedger,
    ) -> Result<Vec<u8>, ProtocolError> {
        if from == to {
            return Err(ProtocolError::new(
                ErrorKind::MalformedMessage,
                "first meet with oneself",
            ));
        }
        if self.node(from).friend(to).is_some_and(|r| r.outbound.is_some()) {
            return Err(ProtocolError::new(
                ErrorKind::MalformedMessage,
                format!("{from} already holds a chain toward {to}"),
            ));
        }
        let receiver_public = self.node(to).key_pair.public();
        let (packet, link) = self
            .kx
            .first_meet_send(from, &receiver_public, message, &mut self.rng)?;
        ledger.first_meet(from, to, packet.wire_len() as u64);
        let msg = self.receive_first_meet(to, &packet, opinions.1)?;
        let rec = self
            .node_mut(from)
            .ensure_friend(to, opinions.0)
            .expect("distinct endpoints");
        rec.outbound = Some(link);
        Ok(msg)
    }

    /// Receiving side of a first meet. A peer that already owns a chain
    /// toward this node cannot open another one.
    pub fn receive_first_meet(
        &mut self,
        to: NodeId,
        packet: &Packet,
        opinion: ReputationScore,
    ) -> Result<Vec<u8>, ProtocolError> {
        let from = packet.sender_id;
        if !self.contains(from) || from == to {
            return Err(ProtocolError::new(
                ErrorKind::AuthFailure,
                format!("unknown sender {from}"),
            ));
        }
        if self.node(to).friend(from).is_some_and(|r| r.inbound.is_some()) {
            return Err(ProtocolError::new(
                ErrorKind::AuthFailure,
                format!("{from} is already associated; first meet refused"),
            ));
        }
        let (msg, link) = self.kx.first_meet_receive(&self.node(to).key_pair, packet)?;
        let rec = self
            .node_mut(to)
            .ensure_friend(from, opinion)
            .expect("distinct endpoints");
        rec.inbound = Some(link);
        Ok(msg)
    }

    /// Seals `message` on the `from -> to` chain. The sender's link is left
    /// awaiting confirmation.
    pub fn send(&mut self, from: NodeId, to: NodeId, message: &[u8]) -> Result<Packet, ProtocolError> {
        let kx = self.kx;
        let link = self
            .link_mut(from, to, false)
            .ok_or_else(|| ProtocolError::new(ErrorKind::AuthFailure, format!("{from} holds no chain toward {to}")))?;
        kx.meet_again_send(from, link, message)
    }

    /// Opens a meet-again packet at `to`.
    pub fn deliver(&mut self, to: NodeId, packet: &Packet) -> Result<Vec<u8>, ProtocolError> {
        if packet.mode != Mode::MeetAgain {
            return Err(ProtocolError::new(
                ErrorKind::MalformedMessage,
                "expected a meet-again packet",
            ));
        }
        let from = packet.sender_id;
        let kx = self.kx;
        if !self.contains(from) {
            return Err(ProtocolError::new(
                ErrorKind::AuthFailure,
                format!("unknown sender {from}"),
            ));
        }
        let link = self.link_mut(to, from, true).ok_or_else(|| {
            ProtocolError::new(ErrorKind::AuthFailure, format!("{to} has no association with {from}"))
        })?;
        kx.meet_again_receive(link, packet)
    }

    pub fn confirm(&mut self, from: NodeId, to: NodeId) {
        let kx = self.kx;
        if let Some(link) = self.link_mut(from, to, false) {
            kx.confirm(link);
        }
    }

    /// Lockstep send, deliver and confirm, billed at `bytes` with one
    /// symmetric operation on each side.
    pub fn exchange(
        &mut self,
        from: NodeId,
        to: NodeId,
        message: &[u8],
        bytes: u32,
        ledger: &mut CostLedger,
    ) -> Result<Vec<u8>, ProtocolError> {
        let packet = self.send(from, to, message)?;
        ledger.transfer(from, to, bytes.into(), CryptoOp::Sym(1), CryptoOp::Sym(1));
        let msg = self.deliver(to, &packet)?;
        self.confirm(from, to);
        Ok(msg)
    }
}

/// What a newcomer presents to show an association with a helper: a
/// reference to the current chain key and the chain's sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssociationProof {
    pub key_ref: [u8; 32],
    pub snum: u32,
}

impl AssociationProof {
    pub fn for_link(link: &KeyLink) -> Self {
        Self {
            key_ref: link.key.digest(),
            snum: link.snum,
        }
    }

    pub fn forged(key: &SymKey, snum: u32) -> Self {
        Self {
            key_ref: key.digest(),
            snum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinRequest {
    pub newcomer: NodeId,
    pub zone: ZoneId,
    /// Present when the newcomer already holds a chain toward the guide.
    pub direct: bool,
}

/// Messages between the guide and the newcomer, plus queries and ACKs
/// between the guide and its helpers, counted from the guide's side.
///
/// Newcomer messages on the voting path arrive unauthenticated and only
/// count as received once the newcomer is admitted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuideTally {
    pub transmit: u32,
    pub receive: u32,
    pub queries: u32,
    pub acks: u32,
}

impl GuideTally {
    pub fn as_tuple(&self) -> (u32, u32, u32, u32) {
        (self.transmit, self.receive, self.queries, self.acks)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinOutcome {
    pub accepted: bool,
    /// `None` when the request was refused before any scenario applied.
    pub scenario: Option<u8>,
    pub verdict: Option<TrustVerdict>,
    pub error: Option<ProtocolError>,
    pub tally: GuideTally,
}

impl JoinOutcome {
    fn short_circuit(kind: ErrorKind, context: impl Into<String>, tally: GuideTally) -> Self {
        Self {
            accepted: false,
            scenario: None,
            verdict: None,
            error: Some(ProtocolError::new(kind, context)),
            tally,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioFacts {
    pub direct_friend: bool,
    pub queries: u32,
    pub acks: u32,
    pub accepted: bool,
}

/// 1: direct friends. 2: nobody vouched. 3: vouched but rejected.
/// 4: vouched and admitted.
pub fn classify_scenario(f: ScenarioFacts) -> u8 {
    debug_assert!(f.acks <= f.queries);
    if f.direct_friend {
        1
    } else if f.acks == 0 {
        2
    } else if f.accepted {
        4
    } else {
        3
    }
}

/// Up to `delta_max_friend` friends of the guide currently in `zone`, a
/// seeded uniform sample when more are available. Returned in id order.
pub fn select_helpers<R: Rng>(
    world: &World,
    guide: NodeId,
    zone: ZoneId,
    exclude: &BTreeSet<NodeId>,
    params: &TrustParams,
    rng: &mut R,
) -> Vec<NodeId> {
    let g = world.node(guide);
    let candidates: Vec<NodeId> = g
        .friends
        .keys()
        .copied()
        .filter(|&id| {
            id != guide && !exclude.contains(&id) && world.contains(id) && world.node(id).current_zone == zone
        })
        .collect();
    let cap = params.delta_max_friend as usize;
    if candidates.len() <= cap {
        return candidates;
    }
    let mut picked: Vec<NodeId> = sample(rng, candidates.len(), cap)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    picked
}

pub fn verify_association_proof(helper: &NodeState, newcomer: NodeId, proof: &AssociationProof) -> bool {
    helper
        .friend(newcomer)
        .and_then(|r| r.inbound.as_ref())
        .is_some_and(|link| link.key.digest() == proof.key_ref && link.snum == proof.snum)
}

/// A helper's positive answer before the guide weighs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HelperAck {
    pub helper_id: NodeId,
    pub reputation_of_newcomer: ReputationScore,
}

/// Silent unless the helper knows the newcomer. A bad proof costs the
/// newcomer one reputation point at this helper.
pub fn helper_handle_query(
    helper: &mut NodeState,
    newcomer: NodeId,
    proof: Option<&AssociationProof>,
    n_max: u32,
) -> Option<HelperAck> {
    if !is_friend(helper, newcomer) {
        return None;
    }
    let proof = proof?;
    if verify_association_proof(helper, newcomer, proof) {
        let rec = helper.friend(newcomer).expect("checked above");
        Some(HelperAck {
            helper_id: helper.id,
            reputation_of_newcomer: rec.reputation,
        })
    } else {
        let rec = helper.friend_mut(newcomer).expect("checked above");
        rec.reputation = apply_event(rec.reputation, ReputationEvent::Suspicion, n_max);
        None
    }
}

fn newcomer_proofs(world: &World, newcomer: NodeId, helpers: &[NodeId]) -> Vec<Option<AssociationProof>> {
    let n = world.node(newcomer);
    helpers
        .iter()
        .map(|h| {
            n.friend(*h)
                .and_then(|r| r.outbound.as_ref())
                .map(AssociationProof::for_link)
        })
        .collect()
}

/// Processes one join request to completion.
pub fn request_join(
    world: &mut World,
    newcomer: NodeId,
    guide: NodeId,
    zone: ZoneId,
    ledger: &mut CostLedger,
) -> JoinOutcome {
    let proofs = |w: &World, helpers: &[NodeId]| newcomer_proofs(w, newcomer, helpers);
    request_join_with(world, newcomer, guide, zone, ledger, proofs)
}

/// As [`request_join`], with the newcomer's per-helper evidence supplied by
/// `proofs` (adversarial tests substitute forged proofs here).
pub fn request_join_with<P>(
    world: &mut World,
    newcomer: NodeId,
    guide: NodeId,
    zone: ZoneId,
    ledger: &mut CostLedger,
    proofs: P,
) -> JoinOutcome
where
    P: FnOnce(&World, &[NodeId]) -> Vec<Option<AssociationProof>>,
{
    let mut tally = GuideTally::default();
    if newcomer == guide || !world.contains(newcomer) || !world.contains(guide) {
        return JoinOutcome::short_circuit(
            ErrorKind::MalformedMessage,
            "newcomer and guide must be distinct known nodes",
            tally,
        );
    }
    if !zone.in_range(world.params.zone_count) || world.node(guide).current_zone != zone {
        return JoinOutcome::short_circuit(
            ErrorKind::MalformedMessage,
            format!("guide {guide} is not in {zone}"),
            tally,
        );
    }
    let sizes = world.sizes;
    let params = world.params;

    let direct = world.node(newcomer).friend(guide).is_some_and(|r| r.outbound.is_some());
    let request = JoinRequest { newcomer, zone, direct };

    if !has_permission(world.node(newcomer), zone) {
        let op = if request.direct {
            CryptoOp::Sym(1)
        } else {
            CryptoOp::Hash(1)
        };
        ledger.transfer(newcomer, guide, sizes.request_bytes.into(), op, op);
        return JoinOutcome::short_circuit(
            ErrorKind::PermissionDenied,
            format!("{newcomer} may not enter {zone}"),
            tally,
        );
    }

    if request.direct {
        return direct_join(world, request, guide, ledger, tally);
    }

    // Unauthenticated request carrying only id and permission.
    ledger.transfer(
        newcomer,
        guide,
        sizes.request_bytes.into(),
        CryptoOp::Hash(1),
        CryptoOp::Hash(1),
    );
    let mut pending_rx = 1;

    let exclude = BTreeSet::from([newcomer]);
    let mut rng = std::mem::replace(&mut world.rng, ChaCha8Rng::seed_from_u64(0));
    let helpers = select_helpers(world, guide, zone, &exclude, &params, &mut rng);
    world.rng = rng;
    if helpers.is_empty() {
        return JoinOutcome::short_circuit(ErrorKind::NoHelpers, format!("no helpers for {guide} in {zone}"), tally);
    }

    // Helper list out, evidence back.
    ledger.transfer(
        guide,
        newcomer,
        sizes.friend_list_bytes.into(),
        CryptoOp::None,
        CryptoOp::None,
    );
    tally.transmit += 1;
    let evidence = proofs(world, &helpers);
    ledger.transfer(
        newcomer,
        guide,
        sizes.friend_list_bytes.into(),
        CryptoOp::Hash(1),
        CryptoOp::Hash(1),
    );
    pending_rx += 1;

    let mut acks = Vec::new();
    let mut delivered = 0u32;
    for (helper, proof) in helpers.iter().zip(evidence.iter()) {
        if world
            .exchange(guide, *helper, QUERY, sizes.query_bytes, ledger)
            .is_err()
        {
            continue;
        }
        tally.queries += 1;
        delivered += 1;
        let answer = helper_handle_query(world.node_mut(*helper), newcomer, proof.as_ref(), params.n_max);
        let Some(answer) = answer else { continue };
        if world.exchange(*helper, guide, ACK, sizes.ack_bytes, ledger).is_err() {
            continue;
        }
        tally.acks += 1;
        world.bump(guide, *helper, ReputationEvent::SendReceiveSuccess);
        world.bump(*helper, guide, ReputationEvent::SendReceiveSuccess);
        let guide_view = world
            .node(guide)
            .friend(*helper)
            .map(|r| r.reputation)
            .unwrap_or_default();
        acks.push(AckRecord {
            helper_id: answer.helper_id,
            guide_multiplier: multiplier(guide_view, params.n_max),
            helper_reputation_of_newcomer: answer.reputation_of_newcomer,
            proof_valid: true,
        });
    }
    if delivered == 0 {
        return JoinOutcome::short_circuit(ErrorKind::NoHelpers, "no query reached a helper", tally);
    }

    let verdict = evaluate(&acks, delivered, &params);
    let scenario = classify_scenario(ScenarioFacts {
        direct_friend: false,
        queries: tally.queries,
        acks: tally.acks,
        accepted: verdict.accepted,
    });
    if !verdict.accepted {
        let (kind, ctx) = if tally.acks == 0 {
            (ErrorKind::NoHelpers, "no helper vouched for the newcomer".to_string())
        } else {
            (
                ErrorKind::TrustBelowThreshold,
                format!(
                    "T*N = {:.4} < {}",
                    verdict.t_value * f64::from(params.n_max),
                    params.delta_reputation
                ),
            )
        };
        return JoinOutcome {
            accepted: false,
            scenario: Some(scenario),
            verdict: Some(verdict),
            error: Some(ProtocolError::new(kind, ctx)),
            tally,
        };
    }

    tally.receive += pending_rx;
    let guide_opinion = ReputationScore::new(verdict.total_trust.round() as u32, params.n_max);
    let newcomer_opinion = ReputationScore::new(params.n_max.div_ceil(2), params.n_max);
    // The confirmation travels on the new guide -> newcomer chain.
    let confirmed = world
        .establish(guide, newcomer, CONFIRM, (guide_opinion, newcomer_opinion), ledger)
        .or_else(|_| world.exchange(guide, newcomer, CONFIRM, sizes.confirm_bytes, ledger));
    tally.transmit += 1;
    if let Err(e) = confirmed {
        return JoinOutcome {
            accepted: false,
            scenario: Some(scenario),
            verdict: Some(verdict),
            error: Some(e),
            tally,
        };
    }
    if world.node(guide).friend(newcomer).is_some_and(|r| r.inbound.is_none()) {
        // Opens the newcomer -> guide chain; not part of the guide's tally.
        let _ = world.establish(newcomer, guide, HELLO, (newcomer_opinion, guide_opinion), ledger);
    }
    admit(world, newcomer, guide, zone);
    JoinOutcome {
        accepted: true,
        scenario: Some(scenario),
        verdict: Some(verdict),
        error: None,
        tally,
    }
}

fn direct_join(
    world: &mut World,
    request: JoinRequest,
    guide: NodeId,
    ledger: &mut CostLedger,
    mut tally: GuideTally,
) -> JoinOutcome {
    let sizes = world.sizes;
    let newcomer = request.newcomer;
    let result = world
        .exchange(newcomer, guide, REQUEST, sizes.request_bytes, ledger)
        .and_then(|_| {
            tally.receive += 1;
            world.exchange(guide, newcomer, CONFIRM, sizes.confirm_bytes, ledger)
        });
    match result {
        Ok(_) => {
            tally.transmit += 1;
            admit(world, newcomer, guide, request.zone);
            JoinOutcome {
                accepted: true,
                scenario: Some(1),
                verdict: None,
                error: None,
                tally,
            }
        }
        Err(e) => {
            world.bump(guide, newcomer, ReputationEvent::Suspicion);
            JoinOutcome {
                accepted: false,
                scenario: Some(1),
                verdict: None,
                error: Some(e),
                tally,
            }
        }
    }
}

fn admit(world: &mut World, newcomer: NodeId, guide: NodeId, zone: ZoneId) {
    world.node_mut(newcomer).current_zone = zone;
    world.bump(guide, newcomer, ReputationEvent::EvaluationSuccess);
    world.bump(newcomer, guide, ReputationEvent::EvaluationSuccess);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    Replay,
    Impersonation,
    Tamper,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Replay, AttackKind::Impersonation, AttackKind::Tamper];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub rejected: bool,
    pub error_kind: Option<ErrorKind>,
}

/// Mounts one attack against the established `sender -> receiver` chain
/// and feeds the adversarial packet through the normal receive path.
pub fn run_attack<R: Rng>(world: &mut World, kind: AttackKind, pair: (NodeId, NodeId), rng: &mut R) -> AttackReport {
    let (sender, receiver) = pair;
    let result = match kind {
        AttackKind::Replay => {
            let captured = world.send(sender, receiver, REQUEST).expect("established chain");
            world.deliver(receiver, &captured).expect("honest delivery");
            world.confirm(sender, receiver);
            world.deliver(receiver, &captured)
        }
        AttackKind::Impersonation => {
            if rng.gen_bool(0.5) {
                // Meet-again packet under a guessed key with the right snum.
                let snum = world
                    .node(receiver)
                    .friend(sender)
                    .and_then(|r| r.inbound.as_ref())
                    .map(|l| (l.snum, l.version))
                    .expect("established chain");
                let mut fake = KeyLink::fresh(SymKey(rng.gen()));
                fake.snum = snum.0;
                fake.version = snum.1;
                let packet = world
                    .kx
                    .meet_again_send(sender, &mut fake, REQUEST)
                    .expect("non-empty message");
                world.deliver(receiver, &packet)
            } else {
                // Fresh first meet claiming the sender's identity.
                let public = world.node(receiver).key_pair.public();
                let (packet, _) = world
                    .kx
                    .first_meet_send(sender, &public, HELLO, rng)
                    .expect("non-empty message");
                world.receive_first_meet(receiver, &packet, ReputationScore::default())
            }
        }
        AttackKind::Tamper => {
            let genuine = world.send(sender, receiver, REQUEST).expect("established chain");
            let mut forged = genuine.clone();
            let at = rng.gen_range(0..forged.ciphertext.len());
            forged.ciphertext[at] ^= 1 << rng.gen_range(0..8);
            let outcome = world.deliver(receiver, &forged);
            // Keep the pair in step for the next trial.
            world.deliver(receiver, &genuine).expect("genuine delivery");
            world.confirm(sender, receiver);
            outcome
        }
    };
    match result {
        Ok(_) => AttackReport {
            kind,
            rejected: false,
            error_kind: None,
        },
        Err(e) => {
            world.bump(receiver, sender, ReputationEvent::Attack);
            AttackReport {
                kind,
                rejected: true,
                error_kind: Some(e.kind),
            }
        }
    }
}
