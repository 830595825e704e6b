use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, ScriptLine};
use super::report::{RunReport, SweepRow};
use super::SimError;
use crate::cost::CostLedger;
use crate::keyx::KeyPair;
use crate::model::{NodeId, NodeState, ReputationScore, TrustParams, ZoneId};
use crate::protocol::{request_join, run_attack, AttackKind, World};

const BOOTSTRAP_HELLO: &[u8] = b"bootstrap";

/// Builds the post-bootstrap world: key pairs for every node, symmetric
/// friendships, one completed first meet per ordered friend pair, and
/// directional reputations drawn uniformly from `[0, N]`.
///
/// Returns the world and the ledger of the bootstrap first meets.
pub fn bootstrap(dataset: &Dataset, params: TrustParams, seed: u64) -> Result<(World, CostLedger), SimError> {
    let params = TrustParams {
        zone_count: dataset.zone_count,
        rng_seed: seed,
        ..params
    };
    params.validate(dataset.node_count())?;
    let mut by_id: Vec<&super::dataset::NodeRecord> = dataset.records.iter().collect();
    by_id.sort_by_key(|r| r.node);
    if by_id.iter().enumerate().any(|(i, r)| r.node as usize != i + 1) {
        return Err(SimError::Config("node ids must be exactly 1..=n".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = by_id
        .iter()
        .map(|r| {
            NodeState::new(
                NodeId(r.node),
                KeyPair::generate(&mut rng),
                r.zone.iter().copied().map(ZoneId).collect(),
                ZoneId(r.current_zone),
            )
        })
        .collect();

    let mut pairs = BTreeSet::new();
    for r in &by_id {
        for &f in &r.friend_list {
            if f == r.node {
                log::debug!("dropping self-friendship of node {}", r.node);
                continue;
            }
            pairs.insert((r.node.min(f), r.node.max(f)));
        }
    }

    let mut world = World::new(nodes, params, rng.gen());
    let mut ledger = CostLedger::new();
    for (a, b) in pairs {
        let (a, b) = (NodeId(a), NodeId(b));
        let ab = ReputationScore::new(rng.gen_range(0..=params.n_max), params.n_max);
        let ba = ReputationScore::new(rng.gen_range(0..=params.n_max), params.n_max);
        world
            .establish(a, b, BOOTSTRAP_HELLO, (ab, ba), &mut ledger)
            .and_then(|_| world.establish(b, a, BOOTSTRAP_HELLO, (ba, ab), &mut ledger))
            .map_err(|e| SimError::Config(format!("bootstrap first meet {a} <-> {b}: {e}")))?;
    }
    Ok((world, ledger))
}

/// Plays the script in order. Each line places the checker in the line's
/// zone, then the newcomer asks it to join.
pub fn run(world: &mut World, script: &[ScriptLine]) -> RunReport {
    run_with_ledger(world, script).0
}

// No clock on bare wasm; timing reads as zero there.
#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl Fn() -> f64 {
    let started = std::time::Instant::now();
    move || started.elapsed().as_secs_f64() * 1e3
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

pub fn run_with_ledger(world: &mut World, script: &[ScriptLine]) -> (RunReport, CostLedger) {
    let elapsed = stopwatch();
    let mut ledger = CostLedger::new();
    let mut report = RunReport::empty(world.params);
    for line in script {
        let (newcomer, guide, zone) = (NodeId(line.newer), NodeId(line.checker), ZoneId(line.current_zone));
        if world.contains(guide) && zone.in_range(world.params.zone_count) {
            world.node_mut(guide).current_zone = zone;
        }
        let outcome = request_join(world, newcomer, guide, zone, &mut ledger);
        report.record(&outcome);
    }
    report.finish(&ledger, elapsed());
    (report, ledger)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    MaxFriend,
    Reputation,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::MaxFriend => "max-friend",
            SweepAxis::Reputation => "reputation",
        }
    }

    fn apply(self, params: TrustParams, value: u32) -> TrustParams {
        match self {
            SweepAxis::MaxFriend => TrustParams {
                delta_max_friend: value,
                ..params
            },
            SweepAxis::Reputation => TrustParams {
                delta_reputation: value,
                ..params
            },
        }
    }
}

/// One fresh world per axis value, all bootstrapped from `seed`. Points run
/// on separate threads (sequentially on wasm); rows come back in `values` order.
pub fn sweep(
    dataset: &Dataset,
    script: &[ScriptLine],
    params: TrustParams,
    axis: SweepAxis,
    values: &[u32],
    seed: u64,
) -> Result<Vec<SweepRow>, SimError> {
    for &v in values {
        let p = axis.apply(params, v);
        match axis {
            SweepAxis::MaxFriend if !(3..dataset.node_count()).contains(&v) => {
                return Err(SimError::Config(format!(
                    "max-friend value {v} outside [3, {})",
                    dataset.node_count()
                )))
            }
            SweepAxis::Reputation if v > p.n_max => {
                return Err(SimError::Config(format!(
                    "reputation value {v} outside [0, {}]",
                    p.n_max
                )))
            }
            _ => {}
        }
    }
    let point = |v: u32| -> Result<SweepRow, SimError> {
        let (mut world, _) = bootstrap(dataset, axis.apply(params, v), seed)?;
        Ok(SweepRow {
            axis: axis.as_str().to_string(),
            value: v,
            report: run(&mut world, script),
        })
    };
    if cfg!(target_arch = "wasm32") {
        return values.iter().map(|&v| point(v)).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = values.iter().map(|&v| s.spawn(move || point(v))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep point panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub kind: AttackKind,
    pub trials: u32,
    pub rejected: u32,
    pub rejection_rate: f64,
    pub by_error: BTreeMap<String, u32>,
}

/// Runs `trials` attacks of one kind against random established pairs.
pub fn attack_demo(world: &mut World, kind: AttackKind, trials: u32, seed: u64) -> AttackSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(NodeId, NodeId)> = world
        .nodes()
        .iter()
        .flat_map(|n| {
            n.friends
                .values()
                .filter(|r| r.outbound.is_some())
                .map(move |r| (n.id, r.peer))
        })
        .collect();
    let mut summary = AttackSummary {
        kind,
        trials: 0,
        rejected: 0,
        rejection_rate: 0.0,
        by_error: BTreeMap::new(),
    };
    if pairs.is_empty() {
        return summary;
    }
    for _ in 0..trials {
        let pair = *pairs.choose(&mut rng).expect("non-empty");
        let report = run_attack(world, kind, pair, &mut rng);
        summary.trials += 1;
        if report.rejected {
            summary.rejected += 1;
        }
        let key = report.error_kind.map_or("Accepted", |k| k.as_str()).to_string();
        *summary.by_error.entry(key).or_default() += 1;
    }
    if summary.trials > 0 {
        summary.rejection_rate = f64::from(summary.rejected) / f64::from(summary.trials);
    }
    summary
}
