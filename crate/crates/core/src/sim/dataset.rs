//! `nodes.json` and `script.json`: generation, emission and validated loading.
//!
//! Both files are JSON arrays with one object per line, written in the
//! `{"node":14, "friend_list":[63, 85], ...}` style (space after each comma,
//! none after colons).

use std::collections::BTreeSet;
use std::io;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub node: u32,
    pub friend_list: Vec<u32>,
    pub zone: Vec<u32>,
    pub current_zone: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptLine {
    pub newer: u32,
    pub checker: u32,
    pub current_zone: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<NodeRecord>,
    pub zone_count: u32,
}

impl Dataset {
    pub fn node_count(&self) -> u32 {
        self.records.len() as u32
    }

    pub fn record(&self, node: u32) -> Option<&NodeRecord> {
        self.records.iter().find(|r| r.node == node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub node_count: u32,
    pub zone_count: u32,
    /// Inclusive range for the length of each generated friend list.
    pub friends: (u32, u32),
    /// Inclusive range for the number of permitted zones per node.
    pub permitted_zones: (u32, u32),
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            node_count: 100,
            zone_count: 20,
            friends: (5, 17),
            permitted_zones: (5, 18),
            seed: 1,
        }
    }
}

pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset, SimError> {
    if cfg.node_count < 2 {
        return Err(SimError::Config(format!(
            "need at least 2 nodes, got {}",
            cfg.node_count
        )));
    }
    if cfg.zone_count < 1 {
        return Err(SimError::Config("need at least 1 zone".into()));
    }
    let (fmin, fmax) = cfg.friends;
    let (zmin, zmax) = cfg.permitted_zones;
    if fmin > fmax || fmin > cfg.node_count - 1 {
        return Err(SimError::Config(format!(
            "friend list length range [{fmin}, {fmax}] impossible with {} nodes",
            cfg.node_count
        )));
    }
    if zmin > zmax || zmin > cfg.zone_count {
        return Err(SimError::Config(format!(
            "permitted zone range [{zmin}, {zmax}] impossible with {} zones",
            cfg.zone_count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let records = (1..=cfg.node_count)
        .map(|node| {
            let others = cfg.node_count as usize - 1;
            let k = rng.gen_range(fmin..=fmax.min(cfg.node_count - 1)) as usize;
            let friend_list = sample(&mut rng, others, k)
                .into_iter()
                .map(|i| {
                    let id = i as u32 + 1;
                    if id >= node {
                        id + 1
                    } else {
                        id
                    }
                })
                .collect();
            let z = rng.gen_range(zmin..=zmax.min(cfg.zone_count)) as usize;
            let zone = sample(&mut rng, cfg.zone_count as usize, z)
                .into_iter()
                .map(|i| i as u32 + 1)
                .collect();
            let current_zone = rng.gen_range(1..=cfg.zone_count);
            NodeRecord {
                node,
                friend_list,
                zone,
                current_zone,
            }
        })
        .collect();
    Ok(Dataset {
        records,
        zone_count: cfg.zone_count,
    })
}

/// Encounter script: uniform distinct (newcomer, guide) pairs, each aimed
/// at the guide's zone in the dataset.
pub fn generate_script(dataset: &Dataset, line_count: usize, seed: u64) -> Result<Vec<ScriptLine>, SimError> {
    let n = dataset.records.len();
    if n < 2 {
        return Err(SimError::Config("script generation needs at least 2 nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..line_count)
        .map(|_| {
            let pick = sample(&mut rng, n, 2);
            let newer = &dataset.records[pick.index(0)];
            let checker = &dataset.records[pick.index(1)];
            ScriptLine {
                newer: newer.node,
                checker: checker.node,
                current_zone: checker.current_zone,
            }
        })
        .collect())
}

struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }
}

/// One record in the spaced single-line style.
pub fn to_line<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    value.serialize(&mut ser).expect("plain records serialize");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn to_array<T: Serialize>(items: &[T]) -> String {
    if items.is_empty() {
        return "[]\n".to_string();
    }
    let body: Vec<String> = items.iter().map(to_line).collect();
    format!("[\n{}\n]\n", body.join(",\n"))
}

pub fn emit_dataset(dataset: &Dataset) -> String {
    to_array(&dataset.records)
}

pub fn emit_script(lines: &[ScriptLine]) -> String {
    to_array(lines)
}

pub fn parse_node_record(text: &str) -> Result<NodeRecord, SimError> {
    serde_json::from_str(text).map_err(|e| SimError::Parse {
        origin: "<record>".into(),
        message: e.to_string(),
    })
}

pub fn parse_script_line(text: &str) -> Result<ScriptLine, SimError> {
    serde_json::from_str(text).map_err(|e| SimError::Parse {
        origin: "<line>".into(),
        message: e.to_string(),
    })
}

/// 1-based line on which each top-level array element starts.
fn element_lines(text: &str) -> Vec<usize> {
    let mut lines = Vec::new();
    let (mut depth, mut line) = (0usize, 1usize);
    let (mut in_string, mut escaped, mut expecting) = (false, false, false);
    for c in text.chars() {
        if c == '\n' {
            line += 1;
        }
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        if depth == 1 && expecting && !c.is_whitespace() && c != ']' {
            lines.push(line);
            expecting = false;
        }
        match c {
            '"' => in_string = true,
            '[' | '{' => {
                depth += 1;
                if depth == 1 {
                    expecting = true;
                }
            }
            ']' | '}' => depth = depth.saturating_sub(1),
            ',' if depth == 1 => expecting = true,
            _ => {}
        }
    }
    lines
}

fn parse_array<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<(Vec<T>, Vec<usize>), SimError> {
    let items: Vec<T> = serde_json::from_str(text).map_err(|e| SimError::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    })?;
    let mut lines = element_lines(text);
    lines.resize(items.len(), 0);
    Ok((items, lines))
}

fn invalid(origin: &str, line: usize, message: String) -> SimError {
    SimError::Parse {
        origin: format!("{origin}:{line}"),
        message,
    }
}

pub fn parse_dataset(text: &str, origin: &str, zone_count: u32) -> Result<Dataset, SimError> {
    let (records, lines): (Vec<NodeRecord>, _) = parse_array(text, origin)?;
    let n = records.len() as u32;
    let mut seen = BTreeSet::new();
    for (rec, &line) in records.iter().zip(&lines) {
        let node = rec.node;
        if !(1..=n).contains(&node) {
            return Err(invalid(origin, line, format!("node {node} outside [1, {n}]")));
        }
        if !seen.insert(node) {
            return Err(invalid(origin, line, format!("node {node} listed twice")));
        }
        if let Some(f) = rec.friend_list.iter().find(|f| !(1..=n).contains(*f)) {
            return Err(invalid(
                origin,
                line,
                format!("node {node}: friend {f} outside [1, {n}]"),
            ));
        }
        if let Some(z) = rec.zone.iter().find(|z| !(1..=zone_count).contains(*z)) {
            return Err(invalid(
                origin,
                line,
                format!("node {node}: zone {z} outside [1, {zone_count}]"),
            ));
        }
        if !(1..=zone_count).contains(&rec.current_zone) {
            return Err(invalid(
                origin,
                line,
                format!(
                    "node {node}: current_zone {} outside [1, {zone_count}]",
                    rec.current_zone
                ),
            ));
        }
    }
    Ok(Dataset { records, zone_count })
}

pub fn parse_script(text: &str, origin: &str, node_count: u32, zone_count: u32) -> Result<Vec<ScriptLine>, SimError> {
    let (script, lines): (Vec<ScriptLine>, _) = parse_array(text, origin)?;
    for (s, &line) in script.iter().zip(&lines) {
        for id in [s.newer, s.checker] {
            if !(1..=node_count).contains(&id) {
                return Err(invalid(origin, line, format!("node {id} outside [1, {node_count}]")));
            }
        }
        if s.newer == s.checker {
            return Err(invalid(origin, line, format!("newer and checker are both {}", s.newer)));
        }
        if !(1..=zone_count).contains(&s.current_zone) {
            return Err(invalid(
                origin,
                line,
                format!("current_zone {} outside [1, {zone_count}]", s.current_zone),
            ));
        }
    }
    Ok(script)
}

fn read(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write(path: &Path, contents: &str) -> Result<(), SimError> {
    std::fs::write(path, contents).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_dataset(path: &Path, zone_count: u32) -> Result<Dataset, SimError> {
    parse_dataset(&read(path)?, &path.display().to_string(), zone_count)
}

pub fn load_script(path: &Path, dataset: &Dataset) -> Result<Vec<ScriptLine>, SimError> {
    parse_script(
        &read(path)?,
        &path.display().to_string(),
        dataset.node_count(),
        dataset.zone_count,
    )
}
