//! Aggregation of episode results into per-(fleet size, policy) rows and
//! plot-data files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::episode::EpisodeResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub fleet_size: u32,
    pub policy: String,
    pub episodes: usize,
    pub mission_time_mean_s: f64,
    pub mission_time_std_s: f64,
    pub success_rate: f64,
    pub fleet_return_mean: f64,
    pub agent_return_mean: f64,
    pub deliveries_mean: f64,
    pub expirations_mean: f64,
    pub deaths_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
}

/// Mean and sample standard deviation. Values are sorted first so the
/// result does not depend on input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    (mean, (sq.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    mean_std(&v).0
}

pub fn summarize(results: &[EpisodeResult]) -> Result<SweepSummary> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut groups: BTreeMap<(u32, &str), Vec<&EpisodeResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.fleet_size, r.policy.as_str())).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((fleet_size, policy), rs)| {
            let times: Vec<f64> = rs.iter().map(|r| r.mission_time_s).collect();
            let (mission_time_mean_s, mission_time_std_s) = mean_std(&times);
            SummaryRow {
                fleet_size,
                policy: policy.to_owned(),
                episodes: rs.len(),
                mission_time_mean_s,
                mission_time_std_s,
                success_rate: rs.iter().filter(|r| r.success).count() as f64 / rs.len() as f64,
                fleet_return_mean: mean_of(rs.iter().map(|r| r.fleet_return)),
                agent_return_mean: mean_of(rs.iter().map(|r| r.mean_agent_return)),
                deliveries_mean: mean_of(rs.iter().map(|r| r.delivered_on_time as f64)),
                expirations_mean: mean_of(rs.iter().map(|r| r.expired as f64)),
                deaths_mean: mean_of(rs.iter().map(|r| r.deceased as f64)),
            }
        })
        .collect();
    Ok(SweepSummary { rows })
}

impl SweepSummary {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Two plot-data tables mirroring the evaluation axes:
    /// `mission_time_vs_fleet.csv` and `success_rate_vs_fleet.csv`.
    pub fn write_plot_data(&self, dir: &Path) -> Result<()> {
        let mut mt = csv::Writer::from_path(dir.join("mission_time_vs_fleet.csv")).map_err(csv_err)?;
        mt.write_record(["policy", "fleet_size", "mission_time_mean_s", "mission_time_std_s", "episodes"]).map_err(csv_err)?;
        let mut sr = csv::Writer::from_path(dir.join("success_rate_vs_fleet.csv")).map_err(csv_err)?;
        sr.write_record(["policy", "fleet_size", "success_rate", "episodes"]).map_err(csv_err)?;
        for r in &self.rows {
            mt.write_record([
                r.policy.clone(),
                r.fleet_size.to_string(),
                r.mission_time_mean_s.to_string(),
                r.mission_time_std_s.to_string(),
                r.episodes.to_string(),
            ])
            .map_err(csv_err)?;
            sr.write_record([r.policy.clone(), r.fleet_size.to_string(), r.success_rate.to_string(), r.episodes.to_string()])
                .map_err(csv_err)?;
        }
        mt.flush()?;
        sr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
