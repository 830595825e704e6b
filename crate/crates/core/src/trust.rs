//! Reputation-weighted voting: multiplier bands, the weighted helper average,
//! the ACK ratio, their combination and the admission threshold.

use serde::{Deserialize, Serialize};

use crate::model::{NodeId, ReputationScore, TrustParams};

/// One positive answer from a helper, as seen by the guide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckRecord {
    pub helper_id: NodeId,
    /// The guide's weighting of this helper, in `{0, 1, 2}`.
    pub guide_multiplier: u8,
    /// The helper's stored reputation of the newcomer.
    pub helper_reputation_of_newcomer: ReputationScore,
    pub proof_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustVerdict {
    pub na: f64,
    pub total_trust: f64,
    pub t_value: f64,
    pub accepted: bool,
    pub delivered: u32,
    pub acks: u32,
}

/// Band of a reputation: 0 for zero, 1 up to `ceil(N/2) - 1`, 2 from `ceil(N/2)`.
pub fn multiplier(reputation: ReputationScore, n_max: u32) -> u8 {
    let r = reputation.get();
    if r == 0 {
        0
    } else if r < n_max.div_ceil(2) {
        1
    } else {
        2
    }
}

/// Multiplier-weighted mean of the helpers' reputations of the newcomer.
/// Zero when the weights sum to zero.
pub fn total_trust(acks: &[AckRecord], n_max: u32) -> f64 {
    let (weighted, weights) = acks.iter().fold((0u64, 0u64), |(num, den), a| {
        let m = u64::from(a.guide_multiplier);
        let r = u64::from(a.helper_reputation_of_newcomer.get().min(n_max));
        (num + m * r, den + m)
    });
    if weights == 0 {
        0.0
    } else {
        weighted as f64 / weights as f64
    }
}

/// Fraction of delivered queries that came back positive.
pub fn ack_ratio(total_acks: u32, total_to_deliver: u32) -> f64 {
    assert!(total_to_deliver >= 1, "ack_ratio needs at least one delivered query");
    assert!(total_acks <= total_to_deliver, "more ACKs than delivered queries");
    f64::from(total_acks) / f64::from(total_to_deliver)
}

pub fn trust_average(na: f64, total_trust: f64, n_max: u32) -> f64 {
    (na + total_trust / f64::from(n_max)) / 2.0
}

/// `T` lives in `[0, 1]` while the threshold is on the reputation scale, so
/// the comparison is `T * N >= delta`.
pub fn decide(t_value: f64, params: &TrustParams) -> bool {
    // Integer-valued products such as 0.8 * 100 must not lose the tie to
    // rounding noise.
    t_value * f64::from(params.n_max) + 1e-9 >= f64::from(params.delta_reputation)
}

/// `T * N >= delta` in integers: with `W = sum(M*R)`, `S = sum(M)`, `a` ACKs
/// and `d` deliveries this is `a*N*S + W*d >= 2*delta*d*S` (the `W/S` term is
/// dropped when `S = 0`).
fn decide_exact(acks: &[AckRecord], delivered: u32, params: &TrustParams) -> bool {
    let n = u128::from(params.n_max);
    let d = u128::from(delivered);
    let a = acks.len() as u128;
    let (w, s) = acks.iter().fold((0u128, 0u128), |(w, s), ack| {
        let m = u128::from(ack.guide_multiplier);
        (
            w + m * u128::from(ack.helper_reputation_of_newcomer.get().min(params.n_max)),
            s + m,
        )
    });
    let delta = u128::from(params.delta_reputation);
    if s == 0 {
        a * n >= 2 * delta * d
    } else {
        a * n * s + w * d >= 2 * delta * d * s
    }
}

/// Evaluates a full vote. Only proof-valid ACKs contribute; every delivered
/// query counts toward the ratio. A vote with no positive ACK never admits.
pub fn evaluate(acks: &[AckRecord], delivered: u32, params: &TrustParams) -> TrustVerdict {
    let valid: Vec<AckRecord> = acks.iter().copied().filter(|a| a.proof_valid).collect();
    let ack_count = valid.len() as u32;
    let na = ack_ratio(ack_count, delivered);
    let tt = total_trust(&valid, params.n_max);
    let t = trust_average(na, tt, params.n_max);
    TrustVerdict {
        na,
        total_trust: tt,
        t_value: t,
        accepted: ack_count > 0 && decide_exact(&valid, delivered, params),
        delivered,
        acks: ack_count,
    }
}
