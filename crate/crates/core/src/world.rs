//! State model and grid geometry shared by the engine, observation, reward
//! and policy code.
//!
//! Positions are integer cell indices with `x` growing east and `y` growing
//! north. All distances are L1 (4-connected moves).

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::{GridSpec, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub x: i32,
    pub y: i32,
}

impl GridPos {
    pub const fn new(x: i32, y: i32) -> Self {
        GridPos { x, y }
    }

    pub fn in_bounds(self, grid: &GridSpec) -> bool {
        self.x >= 0 && self.y >= 0 && self.x < grid.width_cells as i32 && self.y < grid.height_cells as i32
    }
}

/// L1 distance in cells.
pub fn manhattan(a: GridPos, b: GridPos) -> u32 {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

/// In-bounds 4-neighbours of `p`, always in the order up, down, left, right.
pub fn neighbors(p: GridPos, grid: &GridSpec) -> Vec<GridPos> {
    [
        GridPos::new(p.x, p.y + 1),
        GridPos::new(p.x, p.y - 1),
        GridPos::new(p.x - 1, p.y),
        GridPos::new(p.x + 1, p.y),
    ]
    .into_iter()
    .filter(|n| n.in_bounds(grid))
    .collect()
}

/// Simulated seconds taken by one grid step.
pub fn step_duration_s(config: &ScenarioConfig) -> f64 {
    config.grid.cell_size_m / config.uav_speed_mps
}

/// Task and patient urgency. Ordering follows priority, so
/// `Critical > Urgent > Standard`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UrgencyClass {
    Standard,
    Urgent,
    Critical,
}

impl UrgencyClass {
    pub const ALL: [UrgencyClass; 3] = [UrgencyClass::Critical, UrgencyClass::Urgent, UrgencyClass::Standard];

    /// Position in the observation one-hot block (critical, urgent, standard).
    pub fn one_hot_index(self) -> usize {
        match self {
            UrgencyClass::Critical => 0,
            UrgencyClass::Urgent => 1,
            UrgencyClass::Standard => 2,
        }
    }

    pub fn is_priority(self) -> bool {
        !matches!(self, UrgencyClass::Standard)
    }
}

pub type TaskId = u64;
pub type UavId = usize;
pub type HospitalId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    InTransit { uav: UavId, picked_at: u32 },
    Delivered { at: u32 },
    Expired { at: u32 },
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Delivered { .. } | TaskStatus::Expired { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub source_depot: usize,
    pub source: GridPos,
    pub target_hospital: HospitalId,
    pub urgency: UrgencyClass,
    pub t_created: u32,
    pub t_deadline: u32,
    pub status: TaskStatus,
    /// Reservation holder under the exclusive-claim option; always `None`
    /// in the default pickup-is-claim mode.
    pub claimed_by: Option<UavId>,
}

impl Task {
    pub fn is_pending(&self) -> bool {
        self.status == TaskStatus::Pending
    }

    /// Whether `uav` may see and pick up this task right now.
    pub fn available_to(&self, uav: UavId) -> bool {
        self.is_pending() && self.claimed_by.is_none_or(|c| c == uav)
    }

    pub fn window(&self) -> u32 {
        self.t_deadline - self.t_created
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerEntry {
    pub pos: GridPos,
    pub t: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: UavId,
    pub pos: GridPos,
    pub payload: u32,
    pub carried: Option<TaskId>,
    pub energy_wh: f64,
    /// Number of energy-consuming actions (moves, pickups, deliveries).
    pub energy_actions: u32,
    pub home: GridPos,
    /// Last known position of every peer, indexed by peer id. `None` until
    /// the first contact; the own slot stays `None`.
    pub peer_table: Vec<Option<PeerEntry>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PatientStatus {
    Waiting,
    Treated { at: u32 },
    Deceased { at: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub id: u64,
    pub hospital: HospitalId,
    pub t_arrival: u32,
    pub deadline: u32,
    pub urgency: UrgencyClass,
    pub status: PatientStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HospitalState {
    pub id: HospitalId,
    pub name: String,
    pub pos: GridPos,
    pub inventory: f64,
    pub patients: Vec<Patient>,
}

impl HospitalState {
    pub fn waiting(&self) -> impl Iterator<Item = &Patient> {
        self.patients.iter().filter(|p| p.status == PatientStatus::Waiting)
    }

    pub fn waiting_count(&self) -> usize {
        self.waiting().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: u32,
    pub config: Arc<ScenarioConfig>,
    pub uavs: Vec<UavState>,
    pub depots: Vec<GridPos>,
    pub hospitals: Vec<HospitalState>,
    /// Append-only; `tasks[i].id == i`.
    pub tasks: Vec<Task>,
    pub next_patient_id: u64,
    pub pickups: u32,
    pub deliveries: u32,
    pub rng: ChaCha8Rng,
}

impl WorldState {
    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id as usize]
    }

    pub fn pending_tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| t.is_pending())
    }

    pub fn pending_count(&self) -> usize {
        self.pending_tasks().count()
    }

    pub fn in_transit_count(&self) -> usize {
        self.tasks.iter().filter(|t| matches!(t.status, TaskStatus::InTransit { .. })).count()
    }

    pub fn delivered_count(&self) -> usize {
        self.tasks.iter().filter(|t| matches!(t.status, TaskStatus::Delivered { .. })).count()
    }

    pub fn is_depot(&self, p: GridPos) -> bool {
        self.depots.contains(&p)
    }

    /// Nearest depot by L1 distance, lowest index on ties.
    pub fn nearest_depot(&self, from: GridPos) -> GridPos {
        *self
            .depots
            .iter()
            .min_by_key(|d| manhattan(from, **d))
            .expect("scenario validation guarantees at least one depot")
    }

    pub fn nearest_hospital(&self, from: GridPos) -> GridPos {
        self.hospitals
            .iter()
            .map(|h| h.pos)
            .min_by_key(|p| manhattan(from, *p))
            .expect("scenario validation guarantees at least one hospital")
    }

    /// Pending task whose source is closest to `from`; ties by earlier
    /// deadline, then lower id. Only tasks visible to `uav` are considered.
    pub fn nearest_pending_task(&self, uav: UavId, from: GridPos) -> Option<&Task> {
        self.tasks
            .iter()
            .filter(|t| t.available_to(uav))
            .min_by_key(|t| (manhattan(from, t.source), t.t_deadline, t.id))
    }

    /// Target cell of the task `uav` currently carries.
    pub fn carried_target(&self, uav: &UavState) -> Option<GridPos> {
        uav.carried.map(|id| self.hospitals[self.task(id).target_hospital].pos)
    }

    /// Inject a pending task created at the current time. Used by tests and
    /// scripted scenarios; the stochastic arrival process goes through the
    /// dynamics engine instead.
    pub fn inject_task(&mut self, source_depot: usize, target_hospital: HospitalId, urgency: UrgencyClass) -> TaskId {
        let t_created = self.t;
        self.push_task(source_depot, target_hospital, urgency, t_created)
    }

    pub(crate) fn push_task(
        &mut self,
        source_depot: usize,
        target_hospital: HospitalId,
        urgency: UrgencyClass,
        t_created: u32,
    ) -> TaskId {
        let id = self.tasks.len() as TaskId;
        self.tasks.push(Task {
            id,
            source_depot,
            source: self.depots[source_depot],
            target_hospital,
            urgency,
            t_created,
            t_deadline: t_created + self.config.deadlines.get(urgency),
            status: TaskStatus::Pending,
            claimed_by: None,
        });
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid30() -> GridSpec {
        GridSpec::default()
    }

    #[test]
    fn manhattan_examples() {
        assert_eq!(manhattan(GridPos::new(0, 0), GridPos::new(0, 0)), 0);
        assert_eq!(manhattan(GridPos::new(2, 3), GridPos::new(5, 1)), 5);
        assert_eq!(manhattan(GridPos::new(0, 0), GridPos::new(29, 29)), 58);
    }

    #[test]
    fn neighbor_counts() {
        let g = grid30();
        assert_eq!(neighbors(GridPos::new(15, 15), &g).len(), 4);
        assert_eq!(neighbors(GridPos::new(0, 0), &g), vec![GridPos::new(0, 1), GridPos::new(1, 0)]);
        assert_eq!(neighbors(GridPos::new(0, 5), &g).len(), 3);
    }

    #[test]
    fn neighbor_order_is_up_down_left_right() {
        let n = neighbors(GridPos::new(4, 4), &grid30());
        assert_eq!(n, vec![GridPos::new(4, 5), GridPos::new(4, 3), GridPos::new(3, 4), GridPos::new(5, 4)]);
    }

    #[test]
    fn step_duration_examples() {
        let mut cfg = ScenarioConfig::default();
        assert_eq!(step_duration_s(&cfg), 8.0);
        cfg.uav_speed_mps = 400.0;
        assert_eq!(step_duration_s(&cfg), 1.0);
        cfg.uav_speed_mps = 50.0;
        cfg.grid.cell_size_m = 100.0;
        assert_eq!(step_duration_s(&cfg), 2.0);
    }

    #[test]
    fn urgency_priority_order() {
        assert!(UrgencyClass::Critical > UrgencyClass::Urgent);
        assert!(UrgencyClass::Urgent > UrgencyClass::Standard);
    }
}
