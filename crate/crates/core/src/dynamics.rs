//! Single-step transition function.
//!
//! A step applies six phases in a fixed order and then advances the clock:
//!
//! 1. movement (with energy and bounds checks)
//! 2. communication exchange between UAVs within range
//! 3. automatic refill, delivery, pickup (and claim, in exclusive mode),
//!    per UAV in ascending id
//! 4. hospital inventory consumption, patient arrivals, treatment, deaths
//! 5. task expiration
//! 6. stochastic task arrival
//!
//! Every state change is mirrored by an [`Event`]; rewards and traces are
//! computed from the event list alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ClaimMode;
use crate::world::{
    manhattan, step_duration_s, GridPos, HospitalId, Patient, PatientStatus, PeerEntry, Task, TaskId, TaskStatus, UavId,
    WorldState,
};

/// Tolerance for the energy budget check; energy is derived from an action
/// count so this only absorbs the final multiplication.
const ENERGY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    /// Discrete encoding used by external learners: 0..=4 in this order.
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    pub fn from_code(code: i64) -> Option<Action> {
        usize::try_from(code).ok().and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }

    pub fn apply(self, p: GridPos) -> GridPos {
        let (dx, dy) = self.delta();
        GridPos::new(p.x + dx, p.y + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Moved { uav: UavId, from: GridPos, to: GridPos },
    Blocked { uav: UavId },
    Idled { uav: UavId },
    CommContact { a: UavId, b: UavId },
    Refilled { uav: UavId, amount: u32 },
    DepotVisitLow { uav: UavId },
    Delivered { uav: UavId, task: TaskId, slack_steps: u32 },
    PickedUp { uav: UavId, task: TaskId },
    Claimed { uav: UavId, task: TaskId },
    PatientArrived { patient: u64, hospital: HospitalId },
    PatientTreated { patient: u64, hospital: HospitalId },
    PatientDeceased { patient: u64, hospital: HospitalId },
    TaskExpired { task: TaskId, was_in_transit: bool, carrier: Option<UavId> },
    TaskArrived { task: TaskId },
}

/// Ordered event log of one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepEvents(pub Vec<Event>);

impl StepEvents {
    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn push(&mut self, e: Event) {
        self.0.push(e);
    }
}

/// Pure transition: returns the successor world and the events of the step.
pub fn step(world: &WorldState, actions: &[Action]) -> Result<(WorldState, StepEvents)> {
    let mut next = world.clone();
    let events = step_in_place(&mut next, actions)?;
    Ok((next, events))
}

/// In-place variant of [`step`].
pub fn step_in_place(world: &mut WorldState, actions: &[Action]) -> Result<StepEvents> {
    if world.t >= world.config.t_max {
        return Err(Error::EpisodeOver);
    }
    if actions.len() != world.uavs.len() {
        return Err(Error::ActionCount { expected: world.uavs.len(), got: actions.len() });
    }
    let mut events = StepEvents::default();

    let arrived = move_uavs(world, actions, &mut events);
    exchange_comms(world, &mut events);

    for id in 0..world.uavs.len() {
        auto_refill(world, id, arrived[id], &mut events);
        auto_deliver(world, id, &mut events);
        auto_pickup(world, id, &mut events);
        if world.config.options.claim_mode == ClaimMode::Exclusive {
            auto_claim(world, id, &mut events);
        }
    }

    for h in 0..world.hospitals.len() {
        let waiting = world.hospitals[h].waiting_count();
        let hospital = &mut world.hospitals[h];
        hospital.inventory = update_inventory(hospital.inventory, world.config.consumption_rate, waiting);
        update_patients(world, h, &mut events);
    }

    expire_tasks(world, &mut events);

    let draw: f64 = world.rng.gen();
    if draw < world.config.arrival_rate && world.pending_count() < world.config.max_active_tasks as usize {
        let task = spawn_task(world);
        events.push(Event::TaskArrived { task: task.id });
    }

    world.t += 1;
    Ok(events)
}

fn has_energy_for_action(world: &WorldState, uav: UavId) -> bool {
    let cfg = &world.config;
    let after = cfg.battery_capacity_wh - cfg.energy_per_action_wh * (world.uavs[uav].energy_actions + 1) as f64;
    after >= -ENERGY_EPS
}

fn spend_energy(world: &mut WorldState, uav: UavId) {
    let cfg = world.config.clone();
    let u = &mut world.uavs[uav];
    u.energy_actions += 1;
    u.energy_wh = (cfg.battery_capacity_wh - cfg.energy_per_action_wh * u.energy_actions as f64).max(0.0);
}

/// Homeward move when continuing with `action` would strand the UAV.
fn return_home_override(world: &WorldState, uav: UavId, action: Action) -> Action {
    let u = &world.uavs[uav];
    let remaining = world.config.t_max - (world.t + 1);
    let candidate = action.apply(u.pos);
    let candidate = if candidate.in_bounds(&world.config.grid) { candidate } else { u.pos };
    if manhattan(candidate, u.home) <= remaining {
        return action;
    }
    if u.pos.x != u.home.x {
        if u.home.x > u.pos.x { Action::Right } else { Action::Left }
    } else if u.pos.y != u.home.y {
        if u.home.y > u.pos.y { Action::Up } else { Action::Down }
    } else {
        Action::Stay
    }
}

/// Phase 1. Returns, per UAV, whether it changed cell this step.
fn move_uavs(world: &mut WorldState, actions: &[Action], events: &mut StepEvents) -> Vec<bool> {
    let mut moved = vec![false; world.uavs.len()];
    for id in 0..world.uavs.len() {
        let mut action = actions[id];
        if world.config.options.enforce_return_home {
            action = return_home_override(world, id, action);
        }
        let from = world.uavs[id].pos;
        if action != Action::Stay {
            let to = action.apply(from);
            if to.in_bounds(&world.config.grid) && has_energy_for_action(world, id) {
                world.uavs[id].pos = to;
                spend_energy(world, id);
                events.push(Event::Moved { uav: id, from, to });
                moved[id] = true;
                continue;
            }
            events.push(Event::Blocked { uav: id });
        }
        if !world.is_depot(from) {
            events.push(Event::Idled { uav: id });
        }
    }
    moved
}

/// Euclidean distance between two cell centers, in meters.
pub fn cell_distance_m(a: GridPos, b: GridPos, cell_size_m: f64) -> f64 {
    let dx = (a.x - b.x) as f64;
    let dy = (a.y - b.y) as f64;
    dx.hypot(dy) * cell_size_m
}

/// Phase 2. Direct contacts stamp each other's current position; tables
/// are then merged one hop, fresher entry winning. The merge reads a
/// snapshot so the result does not depend on pair order.
fn exchange_comms(world: &mut WorldState, events: &mut StepEvents) {
    let n = world.uavs.len();
    let stamp = world.t + 1;
    let range = world.config.comm_range_m;
    let cell = world.config.grid.cell_size_m;
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if cell_distance_m(world.uavs[a].pos, world.uavs[b].pos, cell) <= range + 1e-9 {
                pairs.push((a, b));
            }
        }
    }
    for &(a, b) in &pairs {
        events.push(Event::CommContact { a, b });
        let (pa, pb) = (world.uavs[a].pos, world.uavs[b].pos);
        world.uavs[a].peer_table[b] = Some(PeerEntry { pos: pb, t: stamp });
        world.uavs[b].peer_table[a] = Some(PeerEntry { pos: pa, t: stamp });
    }
    let snapshot: Vec<Vec<Option<PeerEntry>>> = world.uavs.iter().map(|u| u.peer_table.clone()).collect();
    for &(a, b) in &pairs {
        merge_table(&mut world.uavs[a].peer_table, &snapshot[b], a);
        merge_table(&mut world.uavs[b].peer_table, &snapshot[a], b);
    }
}

fn merge_table(own: &mut [Option<PeerEntry>], other: &[Option<PeerEntry>], self_id: UavId) {
    for (peer, theirs) in other.iter().enumerate() {
        if peer == self_id {
            continue;
        }
        if let Some(theirs) = theirs {
            match own[peer] {
                Some(mine) if mine.t >= theirs.t => {}
                _ => own[peer] = Some(*theirs),
            }
        }
    }
}

/// Refill to full payload on a depot cell. The low-payload visit event
/// fires only on the step the UAV arrives.
pub fn auto_refill(world: &mut WorldState, uav: UavId, arrived: bool, events: &mut StepEvents) {
    let p_max = world.config.payload_max;
    let u = &mut world.uavs[uav];
    if !world.depots.contains(&u.pos) || u.payload >= p_max {
        return;
    }
    let old = u.payload;
    u.payload = p_max;
    events.push(Event::Refilled { uav, amount: p_max - old });
    if arrived && (old as f64) <= p_max as f64 / 2.0 {
        events.push(Event::DepotVisitLow { uav });
    }
}

/// Deliver the carried task when standing on its target before the deadline.
pub fn auto_deliver(world: &mut WorldState, uav: UavId, events: &mut StepEvents) {
    let Some(task_id) = world.uavs[uav].carried else { return };
    let now = world.t + 1;
    let task = world.task(task_id);
    let hospital = task.target_hospital;
    if world.uavs[uav].pos != world.hospitals[hospital].pos || now > task.t_deadline {
        return;
    }
    if !has_energy_for_action(world, uav) {
        return;
    }
    let slack_steps = task.t_deadline - now;
    world.tasks[task_id as usize].status = TaskStatus::Delivered { at: now };
    world.hospitals[hospital].inventory += 1.0;
    world.uavs[uav].carried = None;
    world.deliveries += 1;
    spend_energy(world, uav);
    events.push(Event::Delivered { uav, task: task_id, slack_steps });
}

/// Pickup priority: highest urgency, then earliest deadline, then lowest id.
fn pickup_rank(t: &Task) -> (std::cmp::Reverse<crate::world::UrgencyClass>, u32, TaskId) {
    (std::cmp::Reverse(t.urgency), t.t_deadline, t.id)
}

/// Pick up the best pending task sourced at the UAV's cell.
pub fn auto_pickup(world: &mut WorldState, uav: UavId, events: &mut StepEvents) {
    let u = &world.uavs[uav];
    if u.carried.is_some() || u.payload < 1 {
        return;
    }
    let pos = u.pos;
    let Some(task_id) = world
        .tasks
        .iter()
        .filter(|t| t.available_to(uav) && t.source == pos)
        .min_by_key(|t| pickup_rank(t))
        .map(|t| t.id)
    else {
        return;
    };
    if !has_energy_for_action(world, uav) {
        return;
    }
    let now = world.t + 1;
    // A UAV holds at most one reservation; drop any other one it held.
    for t in world.tasks.iter_mut().filter(|t| t.is_pending() && t.claimed_by == Some(uav)) {
        t.claimed_by = None;
    }
    let task = &mut world.tasks[task_id as usize];
    task.status = TaskStatus::InTransit { uav, picked_at: now };
    task.claimed_by = None;
    let u = &mut world.uavs[uav];
    u.payload -= 1;
    u.carried = Some(task_id);
    world.pickups += 1;
    spend_energy(world, uav);
    events.push(Event::PickedUp { uav, task: task_id });
}

/// Exclusive-claim mode: a free UAV reserves the best unclaimed pending
/// task whose source lies within the proximity radius.
fn auto_claim(world: &mut WorldState, uav: UavId, events: &mut StepEvents) {
    let u = &world.uavs[uav];
    if u.carried.is_some() || u.payload < 1 || world.tasks.iter().any(|t| t.is_pending() && t.claimed_by == Some(uav)) {
        return;
    }
    let pos = u.pos;
    let radius = world.config.rewards.proximity_radius;
    let best = world
        .tasks
        .iter()
        .filter(|t| t.is_pending() && t.claimed_by.is_none() && manhattan(pos, t.source) <= radius)
        .min_by_key(|t| (std::cmp::Reverse(t.urgency), t.t_deadline, manhattan(pos, t.source), t.id))
        .map(|t| t.id);
    if let Some(task) = best {
        world.tasks[task as usize].claimed_by = Some(uav);
        events.push(Event::Claimed { uav, task });
    }
}

/// Continuous clinical consumption for one step.
pub fn update_inventory(inventory: f64, consumption_rate: f64, waiting_patients: usize) -> f64 {
    (inventory - consumption_rate * (1.0 + waiting_patients as f64 / 10.0)).max(0.0)
}

/// Patient arrival, treatment in arrival order while stock lasts, and
/// deaths of untreated patients at their deadline.
pub fn update_patients(world: &mut WorldState, hospital: HospitalId, events: &mut StepEvents) {
    let now = world.t + 1;
    let draw: f64 = world.rng.gen();
    if draw < world.config.patient_arrival_rate {
        let urgency = world.config.urgency_mix.sample(world.rng.gen());
        let id = world.next_patient_id;
        world.next_patient_id += 1;
        world.hospitals[hospital].patients.push(Patient {
            id,
            hospital,
            t_arrival: now,
            deadline: now + world.config.deadlines.get(urgency),
            urgency,
            status: PatientStatus::Waiting,
        });
        events.push(Event::PatientArrived { patient: id, hospital });
    }
    let h = &mut world.hospitals[hospital];
    for p in h.patients.iter_mut().filter(|p| p.status == PatientStatus::Waiting) {
        if h.inventory >= 1.0 {
            h.inventory -= 1.0;
            p.status = PatientStatus::Treated { at: now };
            events.push(Event::PatientTreated { patient: p.id, hospital });
        }
    }
    for p in h.patients.iter_mut().filter(|p| p.status == PatientStatus::Waiting) {
        if p.deadline <= now {
            p.status = PatientStatus::Deceased { at: now };
            events.push(Event::PatientDeceased { patient: p.id, hospital });
        }
    }
}

/// Phase 5: every live task whose deadline has been reached expires.
fn expire_tasks(world: &mut WorldState, events: &mut StepEvents) {
    let now = world.t + 1;
    for i in 0..world.tasks.len() {
        let task = &world.tasks[i];
        if task.status.is_terminal() || task.t_deadline > now {
            continue;
        }
        let carrier = match task.status {
            TaskStatus::InTransit { uav, .. } => Some(uav),
            _ => None,
        };
        if let Some(c) = carrier {
            world.uavs[c].carried = None;
        }
        let task = &mut world.tasks[i];
        task.status = TaskStatus::Expired { at: now };
        task.claimed_by = None;
        events.push(Event::TaskExpired { task: task.id, was_in_transit: carrier.is_some(), carrier });
    }
}

/// Create a new pending task at `t + 1` with uniformly random source depot
/// and target hospital and an urgency drawn from the configured mix.
pub fn spawn_task(world: &mut WorldState) -> Task {
    let depot = world.rng.gen_range(0..world.depots.len());
    let hospital = world.rng.gen_range(0..world.hospitals.len());
    let urgency = world.config.urgency_mix.sample(world.rng.gen());
    let id = world.push_task(depot, hospital, urgency, world.t + 1);
    world.task(id).clone()
}

/// Simulated mission time: step time plus handling time per pickup and
/// delivery.
pub fn elapsed_mission_time_s(world: &WorldState) -> f64 {
    world.t as f64 * step_duration_s(&world.config) + world.config.handling_time_s * (world.pickups + world.deliveries) as f64
}
