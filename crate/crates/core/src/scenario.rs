//! Scenario configuration: loading, defaults, validation, facility
//! projection and world construction.
//!
//! Config files are TOML. Every key is optional except the facility list,
//! which may come either from `[[facilities]]` tables or from a GeoJSON
//! feature collection referenced by `facilities_geojson` (resolved relative
//! to the config file). See `docs/config.md` for the full schema.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::reward::RewardParams;
use crate::world::{GridPos, HospitalState, UavState, UrgencyClass, WorldState};

/// Meters per degree of longitude at the equator.
const M_PER_DEG_LON: f64 = 111_320.0;
/// Meters per degree of latitude.
const M_PER_DEG_LAT: f64 = 110_540.0;
/// Absorbs float noise when a coordinate sits exactly on a cell boundary.
const BOUNDARY_EPS_M: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub width_cells: u32,
    pub height_cells: u32,
    pub cell_size_m: f64,
    /// Geographic center of the grid.
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { width_cells: 30, height_cells: 30, cell_size_m: 400.0, origin_lat: 50.8467, origin_lon: 4.3517 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FacilityKind {
    Depot,
    Hospital,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacilitySpec {
    pub name: String,
    pub kind: FacilityKind,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UrgencyMix {
    pub critical: f64,
    pub urgent: f64,
    pub standard: f64,
}

impl Default for UrgencyMix {
    fn default() -> Self {
        UrgencyMix { critical: 0.15, urgent: 0.35, standard: 0.5 }
    }
}

impl UrgencyMix {
    /// Map a uniform draw in `[0, 1)` onto a class by cumulative mass.
    pub fn sample(&self, u: f64) -> UrgencyClass {
        if u < self.critical {
            UrgencyClass::Critical
        } else if u < self.critical + self.urgent {
            UrgencyClass::Urgent
        } else {
            UrgencyClass::Standard
        }
    }
}

/// Deadline window per urgency class, in steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeadlineTable {
    pub critical: u32,
    pub urgent: u32,
    pub standard: u32,
}

impl Default for DeadlineTable {
    fn default() -> Self {
        DeadlineTable { critical: 10, urgent: 20, standard: 50 }
    }
}

impl DeadlineTable {
    pub fn get(&self, u: UrgencyClass) -> u32 {
        match u {
            UrgencyClass::Critical => self.critical,
            UrgencyClass::Urgent => self.urgent,
            UrgencyClass::Standard => self.standard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimMode {
    /// A task is claimed by physically picking it up.
    #[default]
    Pickup,
    /// Free UAVs reserve a nearby pending task; only the holder may pick it up.
    Exclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineOptions {
    pub claim_mode: ClaimMode,
    /// Override moves that would leave a UAV unable to reach its home cell
    /// before `t_max`.
    pub enforce_return_home: bool,
    /// Termination additionally requires that no task is pending. Off by
    /// default: only assigned (picked-up or reserved) work must finish.
    pub termination_requires_empty_pending: bool,
    /// Add the mortality penalty on top of the violation penalty when a
    /// critical task expires.
    pub critical_expiry_mortality: bool,
    /// Clamp out-of-extent facilities to the border instead of rejecting them.
    pub clamp_projection: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            claim_mode: ClaimMode::Pickup,
            enforce_return_home: false,
            termination_requires_empty_pending: false,
            critical_expiry_mortality: false,
            clamp_projection: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub fleet_size: u32,
    pub uav_speed_mps: f64,
    pub payload_max: u32,
    pub comm_range_m: f64,
    pub t_max: u32,
    pub arrival_rate: f64,
    pub max_active_tasks: u32,
    pub initial_inventory: f64,
    pub consumption_rate: f64,
    pub handling_time_s: f64,
    pub battery_capacity_wh: f64,
    pub energy_per_action_wh: f64,
    pub min_completed_tasks: u32,
    pub patient_arrival_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub facilities_geojson: Option<PathBuf>,
    pub grid: GridSpec,
    pub urgency_mix: UrgencyMix,
    pub deadlines: DeadlineTable,
    pub rewards: RewardParams,
    pub options: EngineOptions,
    pub facilities: Vec<FacilitySpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            fleet_size: 10,
            uav_speed_mps: 50.0,
            payload_max: 5,
            comm_range_m: 400.0,
            t_max: 200,
            arrival_rate: 0.2,
            max_active_tasks: 10,
            initial_inventory: 10.0,
            consumption_rate: 0.1,
            handling_time_s: 5.0,
            battery_capacity_wh: 500.0,
            energy_per_action_wh: 0.8,
            min_completed_tasks: 15,
            patient_arrival_rate: 0.05,
            facilities_geojson: None,
            grid: GridSpec::default(),
            urgency_mix: UrgencyMix::default(),
            deadlines: DeadlineTable::default(),
            rewards: RewardParams::default(),
            options: EngineOptions::default(),
            facilities: Vec::new(),
        }
    }
}

pub const BRUSSELS_TOML: &str = include_str!("../fixtures/brussels.toml");
pub const REFERENCE_TOML: &str = include_str!("../fixtures/reference.toml");

impl ScenarioConfig {
    /// Parse and validate a TOML document. `base_dir` resolves a relative
    /// `facilities_geojson` path.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Parse { what: "scenario config".into(), message: e.to_string() })?;
        if let Some(rel) = cfg.facilities_geojson.take() {
            let path = match base_dir {
                Some(dir) if rel.is_relative() => dir.join(rel),
                _ => rel,
            };
            let text = std::fs::read_to_string(&path)?;
            cfg.facilities.extend(facilities_from_geojson(&text)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always TOML-representable")
    }

    /// Built-in fixtures addressable by name from the CLI.
    pub fn builtin(name: &str) -> Option<Result<Self>> {
        match name {
            "brussels" => Some(Self::from_toml_str(BRUSSELS_TOML, None)),
            "reference" => Some(Self::from_toml_str(REFERENCE_TOML, None)),
            _ => None,
        }
    }

    pub fn brussels() -> Self {
        Self::from_toml_str(BRUSSELS_TOML, None).expect("bundled fixture is valid")
    }

    /// SHA-256 over the canonical JSON form; pins a trace to its config.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.width_cells < 1 {
            return Err(Error::validation("grid.width_cells", "must be at least 1"));
        }
        if g.height_cells < 1 {
            return Err(Error::validation("grid.height_cells", "must be at least 1"));
        }
        if !(g.cell_size_m > 0.0) {
            return Err(Error::validation("grid.cell_size_m", "must be positive"));
        }
        if !(-90.0..=90.0).contains(&g.origin_lat) || !g.origin_lon.is_finite() {
            return Err(Error::validation("grid.origin_lat", "origin must be a valid coordinate"));
        }
        positive_count("fleet_size", self.fleet_size)?;
        positive_count("payload_max", self.payload_max)?;
        positive_count("t_max", self.t_max)?;
        positive_count("max_active_tasks", self.max_active_tasks)?;
        positive_count("min_completed_tasks", self.min_completed_tasks)?;
        positive_real("uav_speed_mps", self.uav_speed_mps)?;
        positive_real("comm_range_m", self.comm_range_m)?;
        positive_real("battery_capacity_wh", self.battery_capacity_wh)?;
        non_negative("energy_per_action_wh", self.energy_per_action_wh)?;
        non_negative("initial_inventory", self.initial_inventory)?;
        non_negative("consumption_rate", self.consumption_rate)?;
        non_negative("handling_time_s", self.handling_time_s)?;
        probability("arrival_rate", self.arrival_rate)?;
        probability("patient_arrival_rate", self.patient_arrival_rate)?;

        let mix = &self.urgency_mix;
        for (name, p) in [("urgency_mix.critical", mix.critical), ("urgency_mix.urgent", mix.urgent), ("urgency_mix.standard", mix.standard)] {
            probability(name, p)?;
        }
        if (mix.critical + mix.urgent + mix.standard - 1.0).abs() > 1e-9 {
            return Err(Error::validation("urgency_mix", "probabilities must sum to 1"));
        }
        let d = &self.deadlines;
        positive_count("deadlines.critical", d.critical)?;
        if !(d.critical < d.urgent && d.urgent < d.standard) {
            return Err(Error::validation("deadlines", "must satisfy critical < urgent < standard"));
        }
        self.rewards.validate()?;

        if !self.facilities.iter().any(|f| f.kind == FacilityKind::Depot) {
            return Err(Error::validation("facilities", "at least one depot is required"));
        }
        if !self.facilities.iter().any(|f| f.kind == FacilityKind::Hospital) {
            return Err(Error::validation("facilities", "at least one hospital is required"));
        }
        for f in &self.facilities {
            self.project_facility(f)?;
        }
        Ok(())
    }

    fn project_facility(&self, f: &FacilitySpec) -> Result<GridPos> {
        match latlon_to_cell(&self.grid, f.lat, f.lon) {
            Ok(p) => Ok(p),
            Err(_) if self.options.clamp_projection && f.lat.is_finite() && f.lon.is_finite() => {
                Ok(clamp_to_grid(&self.grid, raw_cell(&self.grid, f.lat, f.lon)))
            }
            Err(_) => Err(Error::Projection { name: f.name.clone(), lat: f.lat, lon: f.lon }),
        }
    }

    /// Projected cells of all depots, in config order.
    pub fn depot_cells(&self) -> Result<Vec<GridPos>> {
        self.cells_of(FacilityKind::Depot)
    }

    pub fn hospital_cells(&self) -> Result<Vec<(String, GridPos)>> {
        self.facilities
            .iter()
            .filter(|f| f.kind == FacilityKind::Hospital)
            .map(|f| Ok((f.name.clone(), self.project_facility(f)?)))
            .collect()
    }

    fn cells_of(&self, kind: FacilityKind) -> Result<Vec<GridPos>> {
        self.facilities.iter().filter(|f| f.kind == kind).map(|f| self.project_facility(f)).collect()
    }
}

fn positive_count(field: &str, v: u32) -> Result<()> {
    if v == 0 {
        return Err(Error::validation(field, "must be positive"));
    }
    Ok(())
}

fn positive_real(field: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::validation(field, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::validation(field, format!("must be non-negative, got {v}")));
    }
    Ok(())
}

fn probability(field: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::validation(field, format!("must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Read and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml_str(&text, path.parent())
}

fn raw_cell(grid: &GridSpec, lat: f64, lon: f64) -> (f64, f64) {
    let dx = (lon - grid.origin_lon) * M_PER_DEG_LON * grid.origin_lat.to_radians().cos();
    let dy = (lat - grid.origin_lat) * M_PER_DEG_LAT;
    let half_w = grid.width_cells as f64 * grid.cell_size_m / 2.0;
    let half_h = grid.height_cells as f64 * grid.cell_size_m / 2.0;
    (
        ((dx + half_w + BOUNDARY_EPS_M) / grid.cell_size_m).floor(),
        ((dy + half_h + BOUNDARY_EPS_M) / grid.cell_size_m).floor(),
    )
}

fn clamp_to_grid(grid: &GridSpec, (x, y): (f64, f64)) -> GridPos {
    GridPos::new(
        x.clamp(0.0, grid.width_cells as f64 - 1.0) as i32,
        y.clamp(0.0, grid.height_cells as f64 - 1.0) as i32,
    )
}

/// Equirectangular projection about the grid origin, which sits at the
/// center of the grid. Returns the containing cell counted from the
/// south-west corner.
pub fn latlon_to_cell(grid: &GridSpec, lat: f64, lon: f64) -> Result<GridPos> {
    let (x, y) = raw_cell(grid, lat, lon);
    let inside = x >= 0.0 && y >= 0.0 && x < grid.width_cells as f64 && y < grid.height_cells as f64;
    if !inside {
        return Err(Error::Projection { name: "<coordinate>".into(), lat, lon });
    }
    Ok(GridPos::new(x as i32, y as i32))
}

/// Parse facilities from a GeoJSON `FeatureCollection` of point features.
/// Each feature needs a `kind` property (`depot` or `hospital`); `name` is
/// optional and defaults to the feature index.
pub fn facilities_from_geojson(text: &str) -> Result<Vec<FacilitySpec>> {
    let parse_err = |message: String| Error::Parse { what: "facility GeoJSON".into(), message };
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| parse_err("expected a FeatureCollection with a `features` array".into()))?;

    features
        .iter()
        .enumerate()
        .map(|(i, feat)| {
            let geom = feat.get("geometry").ok_or_else(|| parse_err(format!("feature {i} has no geometry")))?;
            if geom.get("type").and_then(|t| t.as_str()) != Some("Point") {
                return Err(parse_err(format!("feature {i} is not a Point")));
            }
            let coords = geom
                .get("coordinates")
                .and_then(|c| c.as_array())
                .filter(|c| c.len() >= 2)
                .ok_or_else(|| parse_err(format!("feature {i} has malformed coordinates")))?;
            let lon = coords[0].as_f64().ok_or_else(|| parse_err(format!("feature {i}: bad longitude")))?;
            let lat = coords[1].as_f64().ok_or_else(|| parse_err(format!("feature {i}: bad latitude")))?;
            let props = feat.get("properties");
            let kind = match props.and_then(|p| p.get("kind")).and_then(|k| k.as_str()) {
                Some("depot") => FacilityKind::Depot,
                Some("hospital") | Some("clinic") => FacilityKind::Hospital,
                other => return Err(parse_err(format!("feature {i}: unknown kind {other:?}"))),
            };
            let name = props
                .and_then(|p| p.get("name"))
                .and_then(|n| n.as_str())
                .map(str::to_owned)
                .unwrap_or_else(|| format!("facility-{i}"));
            Ok(FacilitySpec { name, kind, lat, lon })
        })
        .collect()
}

/// Materialize the initial world. UAVs are placed round-robin over depots
/// with full payload and battery; the RNG stream is seeded from `seed`.
pub fn build_world(config: &ScenarioConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let depots = config.depot_cells()?;
    let hospitals = config
        .hospital_cells()?
        .into_iter()
        .enumerate()
        .map(|(id, (name, pos))| HospitalState {
            id,
            name,
            pos,
            inventory: config.initial_inventory,
            patients: Vec::new(),
        })
        .collect();
    let n = config.fleet_size as usize;
    let uavs = (0..n)
        .map(|id| {
            let pos = depots[id % depots.len()];
            UavState {
                id,
                pos,
                payload: config.payload_max,
                carried: None,
                energy_wh: config.battery_capacity_wh,
                energy_actions: 0,
                home: pos,
                peer_table: vec![None; n],
            }
        })
        .collect();
    Ok(WorldState {
        t: 0,
        config: Arc::new(config.clone()),
        uavs,
        depots,
        hospitals,
        tasks: Vec::new(),
        next_patient_id: 0,
        pickups: 0,
        deliveries: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}
