//! Line-delimited JSON episode traces and replay verification.
//!
//! A trace is one header line followed by one line per step. Step records
//! carry the actions taken, so replay needs only the scenario config: the
//! episode is re-simulated from the header seed and every regenerated line
//! must match the recorded one byte for byte.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::{Action, StepEvents};
use crate::episode::{run_episode_observed, EnvCore, EpisodeCounters, EpisodeObserver, EpisodeResult, StepOutcome};
use crate::error::{Error, Result};
use crate::observation::OBS_LAYOUT_VERSION;
use crate::policies::Policy;
use crate::reward::AgentReward;
use crate::scenario::ScenarioConfig;

pub const TRACE_SCHEMA_VERSION: u32 = 1;
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub kind: String,
    pub schema_version: u32,
    pub engine_version: String,
    pub obs_layout_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub fleet_size: u32,
    pub policy: String,
}

#[derive(Serialize)]
struct UavRecord {
    id: usize,
    pos: [i32; 2],
    payload: u32,
    carried: Option<u64>,
    energy_wh: f64,
    action: Action,
    reward: AgentReward,
}

#[derive(Serialize)]
struct HospitalRecord {
    id: usize,
    inventory: f64,
    waiting: usize,
    treated: usize,
    deceased: usize,
}

#[derive(Serialize)]
struct StepRecord<'a> {
    kind: &'static str,
    t: u32,
    uavs: Vec<UavRecord>,
    events: &'a StepEvents,
    hospitals: Vec<HospitalRecord>,
    counters: &'a EpisodeCounters,
    terminated: bool,
    truncated: bool,
}

pub fn header_for(core: &EnvCore, seed: u64, policy: &str) -> TraceHeader {
    TraceHeader {
        kind: "header".into(),
        schema_version: TRACE_SCHEMA_VERSION,
        engine_version: ENGINE_VERSION.into(),
        obs_layout_version: OBS_LAYOUT_VERSION,
        config_hash: core.world().config.config_hash(),
        seed,
        fleet_size: core.world().uavs.len() as u32,
        policy: policy.into(),
    }
}

/// Serialize the post-step state as one trace line (without newline).
pub fn step_record_line(core: &EnvCore, actions: &[Action], outcome: &StepOutcome) -> String {
    use crate::world::PatientStatus;
    let w = core.world();
    let record = StepRecord {
        kind: "step",
        t: w.t,
        uavs: w
            .uavs
            .iter()
            .map(|u| UavRecord {
                id: u.id,
                pos: [u.pos.x, u.pos.y],
                payload: u.payload,
                carried: u.carried,
                energy_wh: u.energy_wh,
                action: actions[u.id],
                reward: outcome.info.rewards.agents[u.id],
            })
            .collect(),
        events: &outcome.info.events,
        hospitals: w
            .hospitals
            .iter()
            .map(|h| HospitalRecord {
                id: h.id,
                inventory: h.inventory,
                waiting: h.waiting_count(),
                treated: h.patients.iter().filter(|p| matches!(p.status, PatientStatus::Treated { .. })).count(),
                deceased: h.patients.iter().filter(|p| matches!(p.status, PatientStatus::Deceased { .. })).count(),
            })
            .collect(),
        counters: core.counters(),
        terminated: outcome.terminated,
        truncated: outcome.truncated,
    };
    serde_json::to_string(&record).expect("trace record serializes")
}

/// Streams a trace to any writer while an episode runs.
pub struct TraceWriter<W: Write> {
    sink: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(sink: W) -> Self {
        TraceWriter { sink }
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.sink.flush()?;
        Ok(self.sink)
    }
}

impl<W: Write> EpisodeObserver for TraceWriter<W> {
    fn on_reset(&mut self, core: &EnvCore, seed: u64, policy: &str) -> Result<()> {
        let header = serde_json::to_string(&header_for(core, seed, policy)).expect("header serializes");
        writeln!(self.sink, "{header}")?;
        Ok(())
    }

    fn on_step(&mut self, core: &EnvCore, actions: &[Action], outcome: &StepOutcome) -> Result<()> {
        writeln!(self.sink, "{}", step_record_line(core, actions, outcome))?;
        Ok(())
    }
}

/// Run an episode and write its trace to `sink`.
pub fn write_trace<W: Write>(
    config: &ScenarioConfig,
    seed: u64,
    policy: &mut dyn Policy,
    sink: W,
) -> Result<(EpisodeResult, W)> {
    let mut writer = TraceWriter::new(sink);
    let result = run_episode_observed(config, seed, policy, Some(&mut writer))?;
    Ok((result, writer.into_inner()?))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayReport {
    Ok { steps: u32 },
    Divergence { step: u32, line: usize, field: String, expected: String, found: String },
}

impl ReplayReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, ReplayReport::Ok { .. })
    }
}

/// Path and values of the first difference between two JSON documents,
/// visiting object keys in sorted order.
fn first_difference(path: &str, expected: &Value, found: &Value) -> Option<(String, String, String)> {
    match (expected, found) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, va) in a {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get(k) {
                    Some(vb) => {
                        if let Some(d) = first_difference(&p, va, vb) {
                            return Some(d);
                        }
                    }
                    None => return Some((p, va.to_string(), "<missing>".into())),
                }
            }
            b.iter()
                .find(|(k, _)| !a.contains_key(*k))
                .map(|(k, v)| (if path.is_empty() { k.clone() } else { format!("{path}.{k}") }, "<missing>".into(), v.to_string()))
        }
        (Value::Array(a), Value::Array(b)) => {
            for (i, (va, vb)) in a.iter().zip(b).enumerate() {
                if let Some(d) = first_difference(&format!("{path}[{i}]"), va, vb) {
                    return Some(d);
                }
            }
            (a.len() != b.len()).then(|| (format!("{path}.len"), a.len().to_string(), b.len().to_string()))
        }
        _ => (expected != found).then(|| (path.to_owned(), expected.to_string(), found.to_string())),
    }
}

fn parse_actions(record: &Value, line: usize) -> Result<Vec<Action>> {
    let corrupt = |message: &str| Error::CorruptTrace { line, message: message.into() };
    let uavs = record.get("uavs").and_then(Value::as_array).ok_or_else(|| corrupt("missing `uavs` array"))?;
    uavs.iter()
        .map(|u| {
            let a = u.get("action").ok_or_else(|| corrupt("missing action"))?;
            serde_json::from_value(a.clone()).map_err(|e| corrupt(&e.to_string()))
        })
        .collect()
}

/// Re-simulate a trace under `config` and compare every record.
pub fn replay_verify<R: BufRead>(trace: R, config: &ScenarioConfig) -> Result<ReplayReport> {
    let mut lines = trace.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or(Error::CorruptTrace { line: 1, message: "empty trace".into() })?;
    let first = first?;
    let header: TraceHeader =
        serde_json::from_str(&first).map_err(|e| Error::CorruptTrace { line: 1, message: e.to_string() })?;
    if header.kind != "header" {
        return Err(Error::CorruptTrace { line: 1, message: "first record is not a header".into() });
    }
    if header.schema_version != TRACE_SCHEMA_VERSION || header.obs_layout_version != OBS_LAYOUT_VERSION {
        return Err(Error::TraceVersion(format!(
            "trace schema {} / obs layout {}, engine supports {} / {}",
            header.schema_version, header.obs_layout_version, TRACE_SCHEMA_VERSION, OBS_LAYOUT_VERSION
        )));
    }
    let hash = config.config_hash();
    if header.config_hash != hash {
        return Ok(ReplayReport::Divergence {
            step: 0,
            line: 1,
            field: "config_hash".into(),
            expected: hash,
            found: header.config_hash,
        });
    }

    let (mut core, _) = EnvCore::reset(config, header.seed)?;
    let mut last_line = 1;
    for (line_no, line) in lines {
        let line = line?;
        last_line = line_no;
        let recorded: Value =
            serde_json::from_str(&line).map_err(|e| Error::CorruptTrace { line: line_no, message: e.to_string() })?;
        if core.is_done() {
            return Err(Error::CorruptTrace { line: line_no, message: "record after end of episode".into() });
        }
        let actions = parse_actions(&recorded, line_no)?;
        let outcome = core.step(&actions).map_err(|e| Error::CorruptTrace { line: line_no, message: e.to_string() })?;
        let expected_line = step_record_line(&core, &actions, &outcome);
        if expected_line != line {
            let expected: Value = serde_json::from_str(&expected_line).expect("engine output is valid JSON");
            let (field, exp, found) = first_difference("", &expected, &recorded)
                .unwrap_or_else(|| ("<formatting>".into(), expected_line.clone(), line.clone()));
            return Ok(ReplayReport::Divergence { step: core.world().t, line: line_no, field, expected: exp, found });
        }
    }
    if !core.is_done() {
        return Err(Error::CorruptTrace { line: last_line + 1, message: "trace ends before the episode does".into() });
    }
    Ok(ReplayReport::Ok { steps: core.world().t })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_paths() {
        let a: Value = serde_json::json!({"t": 1, "uavs": [{"reward": {"total": 1.0}}]});
        let b: Value = serde_json::json!({"t": 1, "uavs": [{"reward": {"total": 2.0}}]});
        let (field, _, _) = first_difference("", &a, &b).unwrap();
        assert_eq!(field, "uavs[0].reward.total");
        assert!(first_difference("", &a, &a).is_none());
        let c: Value = serde_json::json!({"t": 1});
        assert_eq!(first_difference("", &a, &c).unwrap().0, "uavs");
    }
}
