//! Fixed-layout per-agent observation vector.
//!
//! | index   | content                                                        |
//! |---------|----------------------------------------------------------------|
//! | 0..=1   | own position `(x / W, y / H)`                                  |
//! | 2..=10  | three nearest known peers: `(dx / W, dy / H, age / T_max)`     |
//! | 11      | payload / P_max                                                |
//! | 12      | carrying flag                                                  |
//! | 13..=21 | nearest pending task: `dx_src, dy_src, dx_tgt, dy_tgt`,        |
//! |         | one-hot (critical, urgent, standard), time left / window, flag |
//! | 22..=25 | carried task: `dx_tgt, dy_tgt`, time left / window, flag       |
//! | 26..=27 | nearest depot `(dx, dy)`                                       |
//! | 28..=29 | nearest hospital `(dx, dy)`                                    |
//! | 30..=32 | active / K_max, pending / active, t / T_max                    |
//!
//! Deltas are target minus own position. Peers come from the UAV's own
//! peer table, never from true positions; unknown peers are skipped and
//! missing slots stay zero.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::world::{manhattan, GridPos, UavId, WorldState};

pub const OBS_LEN: usize = 33;
pub const OBS_LAYOUT_VERSION: u32 = 1;
pub const PEER_SLOTS: usize = 3;

pub mod idx {
    pub const OWN_POS: usize = 0;
    pub const PEERS: usize = 2;
    pub const PAYLOAD: usize = 11;
    pub const CARRYING: usize = 12;
    pub const PENDING: usize = 13;
    pub const PENDING_URGENCY: usize = 17;
    pub const PENDING_TIME: usize = 20;
    pub const PENDING_FLAG: usize = 21;
    pub const CARRIED: usize = 22;
    pub const CARRIED_FLAG: usize = 25;
    pub const DEPOT: usize = 26;
    pub const HOSPITAL: usize = 28;
    pub const GLOBAL: usize = 30;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsVector(pub [f64; OBS_LEN]);

impl ObsVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Default for ObsVector {
    fn default() -> Self {
        ObsVector([0.0; OBS_LEN])
    }
}

impl std::ops::Index<usize> for ObsVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Serialize for ObsVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter())
    }
}

fn unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

struct Normalizer {
    w: f64,
    h: f64,
}

impl Normalizer {
    fn delta(&self, from: GridPos, to: GridPos) -> [f64; 2] {
        [
            ((to.x - from.x) as f64 / self.w).clamp(-1.0, 1.0),
            ((to.y - from.y) as f64 / self.h).clamp(-1.0, 1.0),
        ]
    }
}

pub fn build_observation(world: &WorldState, uav: UavId) -> Result<ObsVector> {
    let me = world.uavs.get(uav).ok_or_else(|| Error::UnknownAgent(format!("uav_{uav}")))?;
    let cfg = &world.config;
    let norm = Normalizer { w: cfg.grid.width_cells as f64, h: cfg.grid.height_cells as f64 };
    let t_max = cfg.t_max as f64;
    let mut o = [0.0; OBS_LEN];

    o[idx::OWN_POS] = me.pos.x as f64 / norm.w;
    o[idx::OWN_POS + 1] = me.pos.y as f64 / norm.h;

    let mut peers: Vec<_> = me
        .peer_table
        .iter()
        .enumerate()
        .filter(|(id, _)| *id != uav)
        .filter_map(|(id, e)| e.map(|e| (id, e)))
        .collect();
    peers.sort_by_key(|(id, e)| (manhattan(me.pos, e.pos), *id));
    for (slot, (_, entry)) in peers.iter().take(PEER_SLOTS).enumerate() {
        let base = idx::PEERS + 3 * slot;
        let [dx, dy] = norm.delta(me.pos, entry.pos);
        o[base] = dx;
        o[base + 1] = dy;
        o[base + 2] = unit(world.t.saturating_sub(entry.t) as f64 / t_max);
    }

    o[idx::PAYLOAD] = unit(me.payload as f64 / cfg.payload_max as f64);
    o[idx::CARRYING] = if me.carried.is_some() { 1.0 } else { 0.0 };

    let time_left = |deadline: u32, window: u32| unit(deadline.saturating_sub(world.t) as f64 / window as f64);

    if let Some(task) = world.nearest_pending_task(uav, me.pos) {
        let target = world.hospitals[task.target_hospital].pos;
        let [sx, sy] = norm.delta(me.pos, task.source);
        let [tx, ty] = norm.delta(me.pos, target);
        o[idx::PENDING..idx::PENDING + 4].copy_from_slice(&[sx, sy, tx, ty]);
        o[idx::PENDING_URGENCY + task.urgency.one_hot_index()] = 1.0;
        o[idx::PENDING_TIME] = time_left(task.t_deadline, task.window());
        o[idx::PENDING_FLAG] = 1.0;
    }

    if let Some(task_id) = me.carried {
        let task = world.task(task_id);
        let [tx, ty] = norm.delta(me.pos, world.hospitals[task.target_hospital].pos);
        o[idx::CARRIED] = tx;
        o[idx::CARRIED + 1] = ty;
        o[idx::CARRIED + 2] = time_left(task.t_deadline, task.window());
        o[idx::CARRIED_FLAG] = 1.0;
    }

    let [dx, dy] = norm.delta(me.pos, world.nearest_depot(me.pos));
    o[idx::DEPOT] = dx;
    o[idx::DEPOT + 1] = dy;
    let [hx, hy] = norm.delta(me.pos, world.nearest_hospital(me.pos));
    o[idx::HOSPITAL] = hx;
    o[idx::HOSPITAL + 1] = hy;

    let pending = world.pending_count() as f64;
    let active = pending + world.in_transit_count() as f64;
    o[idx::GLOBAL] = unit(active / cfg.max_active_tasks as f64);
    o[idx::GLOBAL + 1] = if active > 0.0 { unit(pending / active) } else { 0.0 };
    o[idx::GLOBAL + 2] = unit(world.t as f64 / t_max);

    Ok(ObsVector(o))
}

pub fn build_all(world: &WorldState) -> Vec<ObsVector> {
    (0..world.uavs.len()).map(|i| build_observation(world, i).expect("index in range")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_world, ScenarioConfig};
    use crate::world::{PeerEntry, TaskStatus, UrgencyClass};

    fn world(n: u32) -> WorldState {
        let mut cfg = ScenarioConfig::brussels();
        cfg.fleet_size = n;
        build_world(&cfg, 3).unwrap()
    }

    #[test]
    fn fresh_world_blocks_are_zero() {
        let w = world(2);
        let o = build_observation(&w, 0).unwrap();
        assert!(o.0[13..=25].iter().all(|v| *v == 0.0));
        assert_eq!(&o.0[30..], &[0.0, 0.0, 0.0]);
        assert_eq!(o[idx::PAYLOAD], 1.0);
        // Standing on a depot.
        assert_eq!(&o.0[26..28], &[0.0, 0.0]);
    }

    #[test]
    fn carried_target_delta() {
        let mut w = world(1);
        let id = w.inject_task(0, 0, UrgencyClass::Standard);
        let target = w.hospitals[0].pos;
        w.uavs[0].pos = GridPos::new(target.x - 4, target.y);
        w.uavs[0].carried = Some(id);
        w.tasks[id as usize].status = TaskStatus::InTransit { uav: 0, picked_at: 0 };
        let o = build_observation(&w, 0).unwrap();
        assert!((o[22] - 4.0 / 30.0).abs() < 1e-15);
        assert!((o[22] - 0.1333).abs() < 1e-4);
        assert_eq!(o[idx::CARRIED_FLAG], 1.0);
        assert_eq!(o[idx::CARRYING], 1.0);
    }

    #[test]
    fn peer_age_normalized_by_horizon() {
        let mut w = world(2);
        w.t = 50;
        w.uavs[0].peer_table[1] = Some(PeerEntry { pos: w.uavs[0].pos, t: 10 });
        let o = build_observation(&w, 0).unwrap();
        assert!((o[4] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn unknown_uav_rejected() {
        let w = world(2);
        assert!(matches!(build_observation(&w, 2), Err(Error::UnknownAgent(_))));
    }

    #[test]
    fn pending_block_and_globals() {
        let mut w = world(1);
        w.uavs[0].pos = GridPos::new(0, 0);
        let id = w.inject_task(1, 2, UrgencyClass::Urgent);
        let o = build_observation(&w, 0).unwrap();
        let src = w.task(id).source;
        assert_eq!(o[13], src.x as f64 / 30.0);
        assert_eq!(o[idx::PENDING_URGENCY + 1], 1.0);
        assert_eq!(o[idx::PENDING_TIME], 1.0);
        assert_eq!(o[idx::PENDING_FLAG], 1.0);
        assert_eq!(o[30], 0.1);
        assert_eq!(o[31], 1.0);
    }
}
