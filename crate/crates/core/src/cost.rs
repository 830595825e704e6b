//! Energy, communication and computation accounting for sensor-class nodes.

use std::collections::BTreeMap;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::model::NodeId;

/// Per-operation energy on a TelosB-class mote, in microjoules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstants {
    pub transmit_per_byte: f64,
    pub receive_per_byte: f64,
    pub aes_op: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self {
            transmit_per_byte: 5.76,
            receive_per_byte: 6.48,
            aes_op: 9.0,
        }
    }
}

/// Sizes of the protocol messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSizeModel {
    pub request_bytes: u32,
    pub friend_list_bytes: u32,
    pub query_bytes: u32,
    pub ack_bytes: u32,
    pub confirm_bytes: u32,
    pub hash_message_bits: u32,
    pub symmetric_message_bits: u32,
}

impl Default for MessageSizeModel {
    fn default() -> Self {
        Self {
            request_bytes: 16,
            friend_list_bytes: 16,
            query_bytes: 18,
            ack_bytes: 16,
            confirm_bytes: 2,
            hash_message_bits: 160,
            symmetric_message_bits: 128,
        }
    }
}

impl MessageSizeModel {
    /// Logs every field that differs from the default model.
    pub fn log_overrides(&self) {
        let d = Self::default();
        let fields = [
            ("request_bytes", self.request_bytes, d.request_bytes),
            ("friend_list_bytes", self.friend_list_bytes, d.friend_list_bytes),
            ("query_bytes", self.query_bytes, d.query_bytes),
            ("ack_bytes", self.ack_bytes, d.ack_bytes),
            ("confirm_bytes", self.confirm_bytes, d.confirm_bytes),
            ("hash_message_bits", self.hash_message_bits, d.hash_message_bits),
            (
                "symmetric_message_bits",
                self.symmetric_message_bits,
                d.symmetric_message_bits,
            ),
        ];
        for (name, value, default) in fields {
            if value != default {
                log::info!("message size override: {name} = {value} (default {default})");
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Tx,
    Rx,
}

/// Cryptographic work attached to one side of a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CryptoOp {
    None,
    Sym(u32),
    Asym(u32),
    Hash(u32),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounters {
    pub bytes_tx: u64,
    pub bytes_rx: u64,
    pub aes_ops: u64,
    pub hash_ops: u64,
    pub asym_ops: u64,
}

impl AddAssign for NodeCounters {
    fn add_assign(&mut self, o: Self) {
        self.bytes_tx += o.bytes_tx;
        self.bytes_rx += o.bytes_rx;
        self.aes_ops += o.aes_ops;
        self.hash_ops += o.hash_ops;
        self.asym_ops += o.asym_ops;
    }
}

impl NodeCounters {
    pub fn energy(&self, c: &EnergyConstants) -> f64 {
        self.bytes_tx as f64 * c.transmit_per_byte
            + self.bytes_rx as f64 * c.receive_per_byte
            + self.aes_ops as f64 * c.aes_op
    }
}

/// Monotone counters for one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub nodes: BTreeMap<NodeId, NodeCounters>,
    pub totals: NodeCounters,
    /// First-meet count per ordered (sender, receiver) pair.
    #[serde(skip)]
    pub first_meets: BTreeMap<(NodeId, NodeId), u32>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_message(&mut self, node: NodeId, direction: Direction, bytes: u64, crypto: CryptoOp) {
        let mut delta = NodeCounters::default();
        match direction {
            Direction::Tx => delta.bytes_tx = bytes,
            Direction::Rx => delta.bytes_rx = bytes,
        }
        match crypto {
            CryptoOp::None => {}
            CryptoOp::Sym(n) => delta.aes_ops = n.into(),
            CryptoOp::Asym(n) => delta.asym_ops = n.into(),
            CryptoOp::Hash(n) => delta.hash_ops = n.into(),
        }
        *self.nodes.entry(node).or_default() += delta;
        self.totals += delta;
    }

    /// Bills one wire message to both ends.
    pub fn transfer(&mut self, from: NodeId, to: NodeId, bytes: u64, sender_op: CryptoOp, receiver_op: CryptoOp) {
        self.record_message(from, Direction::Tx, bytes, sender_op);
        self.record_message(to, Direction::Rx, bytes, receiver_op);
    }

    /// Bills a first-meet packet. The asymmetric operation is charged once,
    /// to the sealing side.
    pub fn first_meet(&mut self, from: NodeId, to: NodeId, bytes: u64) {
        self.transfer(from, to, bytes, CryptoOp::Asym(1), CryptoOp::None);
        *self.first_meets.entry((from, to)).or_default() += 1;
    }

    pub fn node(&self, id: NodeId) -> NodeCounters {
        self.nodes.get(&id).copied().unwrap_or_default()
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for (id, c) in &other.nodes {
            *self.nodes.entry(*id).or_default() += *c;
        }
        self.totals += other.totals;
        for (pair, n) in &other.first_meets {
            *self.first_meets.entry(*pair).or_default() += n;
        }
    }
}

pub fn energy_of(ledger: &CostLedger, node: NodeId, constants: &EnergyConstants) -> f64 {
    ledger.node(node).energy(constants)
}

/// Which reading of the guide's worst-case message flow to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EnergyFormula {
    /// `k(16+2)` bytes sent, `16k + 2` received, `4k` AES operations.
    #[default]
    Printed,
    /// Request and friend list received (32 bytes) plus `k` ACKs; `k`
    /// queries and one confirmation sent.
    Narrative,
}

/// Worst-case energy spent by a guide polling `k` helpers, in microjoules.
pub fn guide_worst_case_energy(k: u32, sizes: &MessageSizeModel, constants: &EnergyConstants) -> f64 {
    guide_worst_case_energy_with(k, sizes, constants, EnergyFormula::Printed)
}

pub fn guide_worst_case_energy_with(
    k: u32,
    sizes: &MessageSizeModel,
    c: &EnergyConstants,
    formula: EnergyFormula,
) -> f64 {
    let k = f64::from(k);
    let (tx, rx) = match formula {
        EnergyFormula::Printed => (
            k * f64::from(sizes.query_bytes),
            k * f64::from(sizes.ack_bytes) + f64::from(sizes.confirm_bytes),
        ),
        EnergyFormula::Narrative => (
            k * f64::from(sizes.query_bytes) + f64::from(sizes.confirm_bytes),
            f64::from(sizes.request_bytes + sizes.friend_list_bytes) + k * f64::from(sizes.ack_bytes),
        ),
    };
    tx * c.transmit_per_byte + rx * c.receive_per_byte + k * c.aes_op * 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunicationBits {
    pub tx_bits: u64,
    pub rx_bits: u64,
    pub total_bits: u64,
}

/// Bits on the wire for one admission through `k` helpers: eight hash
/// messages plus four symmetric messages per helper. Each bit is billed
/// once per side, so the total splits evenly.
pub fn communication_bits(k: u32, sizes: &MessageSizeModel) -> CommunicationBits {
    let total = 8 * u64::from(sizes.hash_message_bits) + 4 * u64::from(k) * u64::from(sizes.symmetric_message_bits);
    CommunicationBits {
        tx_bits: total / 2,
        rx_bits: total - total / 2,
        total_bits: total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputationTime {
    pub newcomer_ms: f64,
    pub guide_helpers_ms: f64,
    pub total_ms: f64,
    pub hash_count: u32,
    pub sym_count: u32,
}

pub fn computation_time(k: u32, t_hash: f64, t_sym: f64) -> ComputationTime {
    let sym = 4 * k;
    let newcomer = 2.0 * t_hash;
    let guide = 2.0 * t_hash + f64::from(sym) * t_sym;
    ComputationTime {
        newcomer_ms: newcomer,
        guide_helpers_ms: guide,
        total_ms: newcomer + guide,
        hash_count: 4,
        sym_count: sym,
    }
}

/// Per-operation execution times in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t_hash_ms: f64,
    pub t_sym_ms: f64,
}

impl Default for Timings {
    fn default() -> Self {
        Self {
            t_hash_ms: 0.001,
            t_sym_ms: 0.130,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: String,
    pub tx_bits: u64,
    pub rx_bits: u64,
    pub total_bits: u64,
    pub t_hash_count: u32,
    pub t_sym_count: u32,
    pub time_ms: f64,
    pub energy_uj: Option<f64>,
}

/// Stated worst-case guide energy for seven helpers, which does not match
/// the formula it is given with.
pub const STATED_GUIDE_ENERGY_UJ: f64 = 1521.0;

/// Two password/smart-card baselines (published numbers) and this scheme.
pub fn comparison_table(
    k: u32,
    sizes: &MessageSizeModel,
    constants: &EnergyConstants,
    timings: &Timings,
) -> Vec<ComparisonRow> {
    let bits = communication_bits(k, sizes);
    let time = computation_time(k, timings.t_hash_ms, timings.t_sym_ms);
    vec![
        ComparisonRow {
            scheme: "[2]".into(),
            tx_bits: 3776,
            rx_bits: 2880,
            total_bits: 6656,
            t_hash_count: 20,
            t_sym_count: 0,
            time_ms: 0.008,
            energy_uj: None,
        },
        ComparisonRow {
            scheme: "[3]".into(),
            tx_bits: 3680,
            rx_bits: 3840,
            total_bits: 7520,
            t_hash_count: 24,
            t_sym_count: 8,
            time_ms: 1.052,
            energy_uj: None,
        },
        ComparisonRow {
            scheme: "ours".into(),
            tx_bits: bits.tx_bits,
            rx_bits: bits.rx_bits,
            total_bits: bits.total_bits,
            t_hash_count: time.hash_count,
            t_sym_count: time.sym_count,
            time_ms: time.total_ms,
            energy_uj: Some(guide_worst_case_energy(k, sizes, constants)),
        },
    ]
}

pub const COMPARISON_CSV_HEADER: &str = "scheme,tx_bits,rx_bits,total_bits,t_hash_count,t_sym_count,time_ms,energy_uJ";

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let energy = r.energy_uj.map(|e| format!("{e:.3}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{}\n",
            r.scheme, r.tx_bits, r.rx_bits, r.total_bits, r.t_hash_count, r.t_sym_count, r.time_ms, energy
        ));
    }
    out
}
