//! Browser bindings: a vote calculator, a small acceptance sweep and the
//! guide cost curve. Every export returns JSON text.

use famvote_core::cost::{
    communication_bits, computation_time, guide_worst_case_energy, EnergyConstants, MessageSizeModel, Timings,
};
use famvote_core::sim::{generate_dataset, generate_script, sweep, DatasetConfig, SweepAxis};
use famvote_core::trust::{evaluate, multiplier, AckRecord};
use famvote_core::{NodeId, ReputationScore, TrustParams};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// One ACK per entry: the guide's reputation of the helper and the helper's
/// reputation of the newcomer.
pub fn vote(guide_reps: &[u32], helper_reps: &[u32], delivered: u32, n_max: u32, delta: u32) -> Result<Value, String> {
    if guide_reps.len() != helper_reps.len() {
        return Err("one guide reputation per helper reputation".into());
    }
    if n_max == 0 || delta > n_max {
        return Err(format!(
            "need 0 < N and threshold <= N, got N = {n_max}, threshold = {delta}"
        ));
    }
    if delivered == 0 || (helper_reps.len() as u32) > delivered {
        return Err(format!(
            "{} ACKs cannot come from {delivered} delivered queries",
            helper_reps.len()
        ));
    }
    if let Some(r) = guide_reps.iter().chain(helper_reps).find(|&&r| r > n_max) {
        return Err(format!("reputation {r} above N = {n_max}"));
    }
    let acks: Vec<AckRecord> = guide_reps
        .iter()
        .zip(helper_reps)
        .enumerate()
        .map(|(i, (&g, &h))| AckRecord {
            helper_id: NodeId(i as u32 + 1),
            guide_multiplier: multiplier(ReputationScore::new(g, n_max), n_max),
            helper_reputation_of_newcomer: ReputationScore::new(h, n_max),
            proof_valid: true,
        })
        .collect();
    let params = TrustParams {
        n_max,
        delta_reputation: delta,
        ..TrustParams::default()
    };
    let v = evaluate(&acks, delivered, &params);
    Ok(json!({
        "multipliers": acks.iter().map(|a| a.guide_multiplier).collect::<Vec<_>>(),
        "na": v.na,
        "total_trust": v.total_trust,
        "t_value": v.t_value,
        "scaled": v.t_value * f64::from(n_max),
        "accepted": v.accepted,
    }))
}

pub fn acceptance(axis: &str, values: &[u32], nodes: u32, lines: u32, seed: u32) -> Result<Value, String> {
    let axis = match axis {
        "max-friend" => SweepAxis::MaxFriend,
        "reputation" => SweepAxis::Reputation,
        other => return Err(format!("unknown axis {other:?}")),
    };
    if !(10..=300).contains(&nodes) || lines > 50_000 {
        return Err("keep nodes in [10, 300] and lines at most 50000".into());
    }
    let seed = u64::from(seed);
    let cfg = DatasetConfig {
        node_count: nodes,
        friends: (5.min(nodes - 1), 17.min(nodes - 1)),
        seed,
        ..DatasetConfig::default()
    };
    let d = generate_dataset(&cfg).map_err(|e| e.to_string())?;
    let s = generate_script(&d, lines as usize, seed ^ 0x5c).map_err(|e| e.to_string())?;
    let rows = sweep(&d, &s, TrustParams::default(), axis, values, seed).map_err(|e| e.to_string())?;
    Ok(Value::Array(
        rows.iter()
            .map(|r| {
                let sc = r.report.scenarios;
                json!({
                    "value": r.value,
                    "acceptance_rate": r.report.acceptance_rate,
                    "scenarios": [sc.friends, sc.no_mutual_friends, sc.mutual_friends_rejected, sc.mutual_friends_accepted],
                    "errored": r.report.errored_count,
                    "energy_uj": r.report.energy_uj,
                })
            })
            .collect(),
    ))
}

pub fn cost_curve(k_max: u32) -> Value {
    let sizes = MessageSizeModel::default();
    let energy = EnergyConstants::default();
    let t = Timings::default();
    Value::Array(
        (1..=k_max.min(100))
            .map(|k| {
                json!({
                    "k": k,
                    "energy_uj": guide_worst_case_energy(k, &sizes, &energy),
                    "bits": communication_bits(k, &sizes).total_bits,
                    "time_ms": computation_time(k, t.t_hash_ms, t.t_sym_ms).total_ms,
                })
            })
            .collect(),
    )
}

#[wasm_bindgen(js_name = trustVerdict)]
pub fn trust_verdict(
    guide_reps: &[u32],
    helper_reps: &[u32],
    delivered: u32,
    n_max: u32,
    delta: u32,
) -> Result<String, JsError> {
    vote(guide_reps, helper_reps, delivered, n_max, delta)
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = acceptanceSweep)]
pub fn acceptance_sweep(axis: &str, values: &[u32], nodes: u32, lines: u32, seed: u32) -> Result<String, JsError> {
    acceptance(axis, values, nodes, lines, seed)
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = guideCostCurve)]
pub fn guide_cost_curve(k_max: u32) -> String {
    cost_curve(k_max).to_string()
}
