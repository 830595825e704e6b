use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::{CostLedger, EnergyConstants, NodeCounters};
use crate::model::{ErrorKind, TrustParams};
use crate::protocol::JoinOutcome;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioCounts {
    pub friends: u64,
    pub no_mutual_friends: u64,
    pub mutual_friends_rejected: u64,
    pub mutual_friends_accepted: u64,
}

impl ScenarioCounts {
    pub fn total(&self) -> u64 {
        self.friends + self.no_mutual_friends + self.mutual_friends_rejected + self.mutual_friends_accepted
    }

    fn bump(&mut self, scenario: u8) {
        match scenario {
            1 => self.friends += 1,
            2 => self.no_mutual_friends += 1,
            3 => self.mutual_friends_rejected += 1,
            4 => self.mutual_friends_accepted += 1,
            other => unreachable!("scenario {other}"),
        }
    }
}

/// Aggregates of one run. Wall-clock time is kept out of the serialized
/// form so identical inputs give identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub params: TrustParams,
    pub total_encounters: u64,
    pub accepted_count: u64,
    /// Requests that reached a scenario and were refused.
    pub rejected_count: u64,
    /// Requests refused before any scenario applied.
    pub errored_count: u64,
    pub acceptance_rate: f64,
    pub scenarios: ScenarioCounts,
    pub errors: BTreeMap<ErrorKind, u64>,
    pub totals: NodeCounters,
    pub energy_uj: f64,
    #[serde(skip)]
    pub wall_clock_ms: f64,
}

// Timing is noise; two runs of the same inputs compare equal.
impl PartialEq for RunReport {
    fn eq(&self, other: &Self) -> bool {
        let a = self;
        a.params == other.params
            && a.total_encounters == other.total_encounters
            && a.accepted_count == other.accepted_count
            && a.rejected_count == other.rejected_count
            && a.errored_count == other.errored_count
            && a.acceptance_rate == other.acceptance_rate
            && a.scenarios == other.scenarios
            && a.errors == other.errors
            && a.totals == other.totals
            && a.energy_uj == other.energy_uj
    }
}

impl RunReport {
    pub(crate) fn empty(params: TrustParams) -> Self {
        Self {
            params,
            total_encounters: 0,
            accepted_count: 0,
            rejected_count: 0,
            errored_count: 0,
            acceptance_rate: 0.0,
            scenarios: ScenarioCounts::default(),
            errors: BTreeMap::new(),
            totals: NodeCounters::default(),
            energy_uj: 0.0,
            wall_clock_ms: 0.0,
        }
    }

    pub(crate) fn record(&mut self, outcome: &JoinOutcome) {
        self.total_encounters += 1;
        match outcome.scenario {
            Some(s) => {
                self.scenarios.bump(s);
                if outcome.accepted {
                    self.accepted_count += 1;
                } else {
                    self.rejected_count += 1;
                }
            }
            None => self.errored_count += 1,
        }
        if let Some(e) = &outcome.error {
            *self.errors.entry(e.kind).or_default() += 1;
        }
    }

    pub(crate) fn finish(&mut self, ledger: &CostLedger, wall_clock_ms: f64) {
        self.acceptance_rate = if self.total_encounters == 0 {
            0.0
        } else {
            self.accepted_count as f64 / self.total_encounters as f64
        };
        self.totals = ledger.totals;
        self.energy_uj = ledger.totals.energy(&EnergyConstants::default());
        self.wall_clock_ms = wall_clock_ms;
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: u32,
    pub report: RunReport,
}

pub const REPORT_CSV_HEADER: &str = "axis,value,n_max,delta_reputation,delta_max_friend,total,accepted,rejected,errored,acceptance_rate,scenario_1,scenario_2,scenario_3,scenario_4,bytes_tx,bytes_rx,aes_ops,hash_ops,asym_ops,energy_uJ";

fn csv_row(axis: &str, value: &str, r: &RunReport) -> String {
    let p = &r.params;
    let s = &r.scenarios;
    let t = &r.totals;
    format!(
        "{axis},{value},{},{},{},{},{},{},{},{:.6},{},{},{},{},{},{},{},{},{},{:.3}\n",
        p.n_max,
        p.delta_reputation,
        p.delta_max_friend,
        r.total_encounters,
        r.accepted_count,
        r.rejected_count,
        r.errored_count,
        r.acceptance_rate,
        s.friends,
        s.no_mutual_friends,
        s.mutual_friends_rejected,
        s.mutual_friends_accepted,
        t.bytes_tx,
        t.bytes_rx,
        t.aes_ops,
        t.hash_ops,
        t.asym_ops,
        r.energy_uj
    )
}

pub fn report_csv(report: &RunReport) -> String {
    format!("{REPORT_CSV_HEADER}\n{}", csv_row("run", "", report))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    for row in rows {
        out.push_str(&csv_row(&row.axis, &row.value.to_string(), &row.report));
    }
    out
}
