//! Scripted baseline policies.
//!
//! The greedy and auction baselines read the full world state. They are
//! evaluation references, not POMDP policies: a learned policy only ever
//! sees the [`ObsVector`]s, so comparisons against these baselines favour
//! the baselines.

use std::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Action;
use crate::observation::ObsVector;
use crate::world::{manhattan, GridPos, Task, TaskId, UavId, WorldState};

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Called once before each episode.
    fn reset(&mut self, _episode_seed: u64) {}

    /// One action per UAV, in UAV id order.
    fn act(&mut self, world: &WorldState, observations: &[ObsVector]) -> Result<Vec<Action>, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random,
    Greedy,
    Auction,
}

impl PolicyKind {
    pub fn build(self, seed: u64) -> Box<dyn Policy> {
        match self {
            PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
            PolicyKind::Greedy => Box::new(GreedyPolicy),
            PolicyKind::Auction => Box::new(AuctionPolicy::default()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Auction => "auction",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(PolicyKind::Random),
            "greedy" => Ok(PolicyKind::Greedy),
            "auction" => Ok(PolicyKind::Auction),
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

/// Mixed into episode seeds so policy randomness is decorrelated from the
/// world RNG stream.
const RANDOM_POLICY_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy { rng: ChaCha8Rng::seed_from_u64(seed ^ RANDOM_POLICY_SALT) }
    }

    pub fn sample(&mut self) -> Action {
        Action::ALL[self.rng.gen_range(0..Action::ALL.len())]
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self, episode_seed: u64) {
        *self = RandomPolicy::new(episode_seed);
    }

    fn act(&mut self, world: &WorldState, _observations: &[ObsVector]) -> Result<Vec<Action>, String> {
        Ok((0..world.uavs.len()).map(|_| self.sample()).collect())
    }
}

/// One step along an L1 shortest path, x axis first.
pub fn step_toward(from: GridPos, to: GridPos) -> Action {
    if to.x > from.x {
        Action::Right
    } else if to.x < from.x {
        Action::Left
    } else if to.y > from.y {
        Action::Up
    } else if to.y < from.y {
        Action::Down
    } else {
        Action::Stay
    }
}

/// Ranking used by the greedy baseline: urgency desc, deadline asc,
/// distance asc, id asc.
fn greedy_rank(task: &Task, from: GridPos) -> (Reverse<crate::world::UrgencyClass>, u32, u32, TaskId) {
    (Reverse(task.urgency), task.t_deadline, manhattan(from, task.source), task.id)
}

fn depot_action(world: &WorldState, uav: UavId) -> Action {
    let pos = world.uavs[uav].pos;
    step_toward(pos, world.nearest_depot(pos))
}

pub struct GreedyPolicy;

impl GreedyPolicy {
    pub fn action_for(world: &WorldState, uav: UavId) -> Action {
        let u = &world.uavs[uav];
        if let Some(target) = world.carried_target(u) {
            return step_toward(u.pos, target);
        }
        if u.payload == 0 {
            return depot_action(world, uav);
        }
        let best = world.tasks.iter().filter(|t| t.available_to(uav)).min_by_key(|t| greedy_rank(t, u.pos));
        match best {
            Some(task) => step_toward(u.pos, task.source),
            None => depot_action(world, uav),
        }
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn act(&mut self, world: &WorldState, _observations: &[ObsVector]) -> Result<Vec<Action>, String> {
        Ok((0..world.uavs.len()).map(|i| GreedyPolicy::action_for(world, i)).collect())
    }
}

/// Steps needed to pick up at `src` and deliver at `tgt` starting from
/// `from`. Pickup happens after movement, so a UAV already on the source
/// spends one step there; likewise for the drop-off.
pub fn pickup_delivery_steps(from: GridPos, src: GridPos, tgt: GridPos) -> u32 {
    manhattan(from, src).max(1) + manhattan(src, tgt).max(1)
}

/// Centralized sequential-auction baseline. Every step, pending tasks are
/// auctioned in priority order to the nearest free UAV that can still make
/// the deadline.
#[derive(Default)]
pub struct AuctionPolicy {
    last_assignments: Vec<(TaskId, UavId)>,
}

impl AuctionPolicy {
    pub fn assign(world: &WorldState) -> Vec<(TaskId, UavId)> {
        let mut tasks: Vec<&Task> = world.pending_tasks().collect();
        tasks.sort_by_key(|t| (Reverse(t.urgency), t.t_deadline, t.id));
        let mut taken = vec![false; world.uavs.len()];
        let mut out = Vec::new();
        for task in tasks {
            let target = world.hospitals[task.target_hospital].pos;
            let budget = task.t_deadline.saturating_sub(world.t);
            let winner = world
                .uavs
                .iter()
                .filter(|u| !taken[u.id] && u.carried.is_none() && u.payload >= 1 && task.available_to(u.id))
                .filter(|u| pickup_delivery_steps(u.pos, task.source, target) <= budget)
                .min_by_key(|u| (manhattan(u.pos, task.source), u.id));
            if let Some(u) = winner {
                taken[u.id] = true;
                out.push((task.id, u.id));
            }
        }
        out
    }

    pub fn last_assignments(&self) -> &[(TaskId, UavId)] {
        &self.last_assignments
    }
}

impl Policy for AuctionPolicy {
    fn name(&self) -> &str {
        "auction"
    }

    fn reset(&mut self, _episode_seed: u64) {
        self.last_assignments.clear();
    }

    fn act(&mut self, world: &WorldState, _observations: &[ObsVector]) -> Result<Vec<Action>, String> {
        self.last_assignments = Self::assign(world);
        let mut actions: Vec<Action> = (0..world.uavs.len()).map(|i| depot_action(world, i)).collect();
        for u in &world.uavs {
            if let Some(target) = world.carried_target(u) {
                actions[u.id] = step_toward(u.pos, target);
            }
        }
        for &(task, uav) in &self.last_assignments {
            actions[uav] = step_toward(world.uavs[uav].pos, world.task(task).source);
        }
        Ok(actions)
    }
}
