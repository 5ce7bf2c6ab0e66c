//! Per-agent step rewards derived from the event log, and the episode-level
//! objective.

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::{Event, StepEvents};
use crate::error::{Error, Result};
use crate::scenario::ClaimMode;
use crate::world::{manhattan, GridPos, UavId, UrgencyClass, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub delivery_completion: f64,
    pub critical_bonus: f64,
    pub urgent_bonus: f64,
    pub early_bonus_scale: f64,
    pub deadline_violation: f64,
    pub task_proximity_scale: f64,
    pub pickup_success: f64,
    pub urgent_claim: f64,
    pub distance_reduction_scale: f64,
    pub progress_step: f64,
    pub refill_reward: f64,
    pub depot_visit_low: f64,
    pub movement_cost: f64,
    pub idle_penalty: f64,
    pub mortality_penalty: f64,
    /// Cells within which the proximity shaping term is non-zero.
    pub proximity_radius: u32,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            delivery_completion: 50.0,
            critical_bonus: 20.0,
            urgent_bonus: 10.0,
            early_bonus_scale: 5.0,
            deadline_violation: -15.0,
            task_proximity_scale: 0.2,
            pickup_success: 5.0,
            urgent_claim: 3.0,
            distance_reduction_scale: 0.3,
            progress_step: 0.5,
            refill_reward: 1.0,
            depot_visit_low: 2.0,
            movement_cost: -0.001,
            idle_penalty: -0.01,
            mortality_penalty: -20.0,
            proximity_radius: 5,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("rewards.delivery_completion", self.delivery_completion),
            ("rewards.critical_bonus", self.critical_bonus),
            ("rewards.urgent_bonus", self.urgent_bonus),
            ("rewards.early_bonus_scale", self.early_bonus_scale),
            ("rewards.task_proximity_scale", self.task_proximity_scale),
            ("rewards.pickup_success", self.pickup_success),
            ("rewards.urgent_claim", self.urgent_claim),
            ("rewards.distance_reduction_scale", self.distance_reduction_scale),
            ("rewards.progress_step", self.progress_step),
            ("rewards.refill_reward", self.refill_reward),
            ("rewards.depot_visit_low", self.depot_visit_low),
        ];
        let non_positive = [
            ("rewards.deadline_violation", self.deadline_violation),
            ("rewards.movement_cost", self.movement_cost),
            ("rewards.idle_penalty", self.idle_penalty),
            ("rewards.mortality_penalty", self.mortality_penalty),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(field, format!("must be a non-negative reward, got {v}")));
            }
        }
        for (field, v) in non_positive {
            if !(v <= 0.0 && v.is_finite()) {
                return Err(Error::validation(field, format!("must be a non-positive penalty, got {v}")));
            }
        }
        if self.proximity_radius == 0 {
            return Err(Error::validation("rewards.proximity_radius", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardComponent {
    DeliveryCompletion,
    CriticalBonus,
    UrgentBonus,
    EarlyBonus,
    DeadlineViolation,
    TaskProximity,
    PickupSuccess,
    UrgentClaim,
    DistanceReduction,
    ProgressStep,
    Refill,
    DepotVisitLow,
    MovementCost,
    IdlePenalty,
    Mortality,
}

pub const COMPONENT_COUNT: usize = 15;

impl RewardComponent {
    pub const ALL: [RewardComponent; COMPONENT_COUNT] = [
        RewardComponent::DeliveryCompletion,
        RewardComponent::CriticalBonus,
        RewardComponent::UrgentBonus,
        RewardComponent::EarlyBonus,
        RewardComponent::DeadlineViolation,
        RewardComponent::TaskProximity,
        RewardComponent::PickupSuccess,
        RewardComponent::UrgentClaim,
        RewardComponent::DistanceReduction,
        RewardComponent::ProgressStep,
        RewardComponent::Refill,
        RewardComponent::DepotVisitLow,
        RewardComponent::MovementCost,
        RewardComponent::IdlePenalty,
        RewardComponent::Mortality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardComponent::DeliveryCompletion => "delivery_completion",
            RewardComponent::CriticalBonus => "critical_bonus",
            RewardComponent::UrgentBonus => "urgent_bonus",
            RewardComponent::EarlyBonus => "early_bonus",
            RewardComponent::DeadlineViolation => "deadline_violation",
            RewardComponent::TaskProximity => "task_proximity",
            RewardComponent::PickupSuccess => "pickup_success",
            RewardComponent::UrgentClaim => "urgent_claim",
            RewardComponent::DistanceReduction => "distance_reduction",
            RewardComponent::ProgressStep => "progress_step",
            RewardComponent::Refill => "refill",
            RewardComponent::DepotVisitLow => "depot_visit_low",
            RewardComponent::MovementCost => "movement_cost",
            RewardComponent::IdlePenalty => "idle_penalty",
            RewardComponent::Mortality => "mortality",
        }
    }

    /// Dense shaping terms, excluded from the objective J.
    pub fn is_shaping(self) -> bool {
        matches!(
            self,
            RewardComponent::TaskProximity
                | RewardComponent::PickupSuccess
                | RewardComponent::UrgentClaim
                | RewardComponent::DistanceReduction
                | RewardComponent::ProgressStep
                | RewardComponent::Refill
                | RewardComponent::DepotVisitLow
        )
    }
}

/// One agent's reward for one step, split by component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgentReward {
    pub components: [f64; COMPONENT_COUNT],
}

impl AgentReward {
    pub fn get(&self, c: RewardComponent) -> f64 {
        self.components[c as usize]
    }

    fn add(&mut self, c: RewardComponent, amount: f64) {
        self.components[c as usize] += amount;
    }

    /// Sum of components in declaration order.
    pub fn total(&self) -> f64 {
        self.components.iter().sum()
    }
}

/// Serialized as a map of the non-zero components plus `total`.
impl Serialize for AgentReward {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        for c in RewardComponent::ALL {
            let v = self.get(c);
            if v != 0.0 {
                map.serialize_entry(c.name(), &v)?;
            }
        }
        map.serialize_entry("total", &self.total())?;
        map.end()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RewardBreakdown {
    pub agents: Vec<AgentReward>,
}

impl RewardBreakdown {
    pub fn totals(&self) -> Vec<f64> {
        self.agents.iter().map(AgentReward::total).collect()
    }
}

/// Where a UAV is heading at the start of a step, for the progress term.
fn objective(world: &WorldState, uav: UavId) -> Option<GridPos> {
    let u = &world.uavs[uav];
    if let Some(target) = world.carried_target(u) {
        return Some(target);
    }
    if let Some(task) = world.nearest_pending_task(uav, u.pos) {
        return Some(task.source);
    }
    (u.payload < world.config.payload_max).then(|| world.nearest_depot(u.pos))
}

pub fn compute_rewards(prev: &WorldState, next: &WorldState, events: &StepEvents, params: &RewardParams) -> Result<RewardBreakdown> {
    let n = prev.uavs.len();
    if next.uavs.len() != n || next.t != prev.t + 1 {
        return Err(Error::validation("events", "world pair does not correspond to a single step"));
    }
    let check = |uav: UavId| -> Result<()> {
        if uav >= n {
            return Err(Error::validation("events", format!("event references unknown UAV {uav}")));
        }
        Ok(())
    };
    let check_task = |task: u64| -> Result<()> {
        if task as usize >= next.tasks.len() {
            return Err(Error::validation("events", format!("event references unknown task {task}")));
        }
        Ok(())
    };
    let mut agents = vec![AgentReward::default(); n];
    let share = 1.0 / n as f64;
    let claim_on_pickup = next.config.options.claim_mode == ClaimMode::Pickup;
    let critical_mortality = next.config.options.critical_expiry_mortality;

    use RewardComponent as C;
    for event in events.iter() {
        match *event {
            Event::Delivered { uav, task, slack_steps } => {
                check(uav)?;
                check_task(task)?;
                let task = next.task(task);
                let a = &mut agents[uav];
                a.add(C::DeliveryCompletion, params.delivery_completion);
                match task.urgency {
                    UrgencyClass::Critical => a.add(C::CriticalBonus, params.critical_bonus),
                    UrgencyClass::Urgent => a.add(C::UrgentBonus, params.urgent_bonus),
                    UrgencyClass::Standard => {}
                }
                a.add(C::EarlyBonus, params.early_bonus_scale * (slack_steps as f64 / task.window() as f64));
            }
            Event::TaskExpired { task, carrier, .. } => {
                check_task(task)?;
                let mortality = critical_mortality && next.task(task).urgency == UrgencyClass::Critical;
                match carrier {
                    Some(c) => {
                        check(c)?;
                        agents[c].add(C::DeadlineViolation, params.deadline_violation);
                        if mortality {
                            agents[c].add(C::Mortality, params.mortality_penalty);
                        }
                    }
                    None => {
                        for a in agents.iter_mut() {
                            a.add(C::DeadlineViolation, params.deadline_violation * share);
                            if mortality {
                                a.add(C::Mortality, params.mortality_penalty * share);
                            }
                        }
                    }
                }
            }
            Event::PatientDeceased { .. } => {
                for a in agents.iter_mut() {
                    a.add(C::Mortality, params.mortality_penalty * share);
                }
            }
            Event::PickedUp { uav, task } => {
                check(uav)?;
                check_task(task)?;
                agents[uav].add(C::PickupSuccess, params.pickup_success);
                if claim_on_pickup && next.task(task).urgency.is_priority() {
                    agents[uav].add(C::UrgentClaim, params.urgent_claim);
                }
            }
            Event::Claimed { uav, task } => {
                check(uav)?;
                check_task(task)?;
                if next.task(task).urgency.is_priority() {
                    agents[uav].add(C::UrgentClaim, params.urgent_claim);
                }
            }
            Event::Refilled { uav, .. } => {
                check(uav)?;
                agents[uav].add(C::Refill, params.refill_reward);
            }
            Event::DepotVisitLow { uav } => {
                check(uav)?;
                agents[uav].add(C::DepotVisitLow, params.depot_visit_low);
            }
            Event::Moved { uav, .. } => {
                check(uav)?;
                agents[uav].add(C::MovementCost, params.movement_cost);
            }
            Event::Idled { uav } => {
                check(uav)?;
                agents[uav].add(C::IdlePenalty, params.idle_penalty);
            }
            Event::Blocked { uav } => check(uav)?,
            Event::CommContact { a, b } => {
                check(a)?;
                check(b)?;
            }
            Event::TaskArrived { task } => check_task(task)?,
            Event::PatientArrived { .. } | Event::PatientTreated { .. } => {}
        }
    }

    let radius = params.proximity_radius as f64;
    for (id, agent) in agents.iter_mut().enumerate() {
        let before = &prev.uavs[id];
        let after = &next.uavs[id];

        if after.carried.is_none() {
            if let Some(task) = next.nearest_pending_task(id, after.pos) {
                let d = manhattan(after.pos, task.source) as f64;
                if d <= radius {
                    agent.add(C::TaskProximity, params.task_proximity_scale * (1.0 - d / radius));
                }
            }
        }

        let moved = events.iter().any(|e| matches!(e, Event::Moved { uav, .. } if *uav == id));
        if !moved {
            continue;
        }
        if let Some(target) = prev.carried_target(before) {
            let gain = manhattan(before.pos, target) as f64 - manhattan(after.pos, target) as f64;
            if gain > 0.0 {
                agent.add(C::DistanceReduction, params.distance_reduction_scale * gain);
            }
        }
        if let Some(goal) = objective(prev, id) {
            if manhattan(after.pos, goal) < manhattan(before.pos, goal) {
                agent.add(C::ProgressStep, params.progress_step);
            }
        }
    }
    Ok(RewardBreakdown { agents })
}

/// Component sums accumulated over an episode (all agents, all steps).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeRewardSummary {
    pub totals: [f64; COMPONENT_COUNT],
}

impl EpisodeRewardSummary {
    pub fn accumulate(&mut self, breakdown: &RewardBreakdown) {
        for agent in &breakdown.agents {
            for (acc, v) in self.totals.iter_mut().zip(agent.components) {
                *acc += v;
            }
        }
    }

    pub fn get(&self, c: RewardComponent) -> f64 {
        self.totals[c as usize]
    }
}

/// Episode objective: delivery and urgency rewards minus delay and
/// inefficiency costs. Shaping terms are not part of it.
pub fn objective_j(summary: &EpisodeRewardSummary) -> f64 {
    use RewardComponent as C;
    let deliveries = summary.get(C::DeliveryCompletion) + summary.get(C::EarlyBonus);
    let urgency = summary.get(C::CriticalBonus) + summary.get(C::UrgentBonus);
    let delays = summary.get(C::DeadlineViolation).abs() + summary.get(C::Mortality).abs();
    let inefficiency = summary.get(C::MovementCost).abs() + summary.get(C::IdlePenalty).abs();
    deliveries + urgency - delays - inefficiency
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{step, Action};
    use crate::scenario::{build_world, ScenarioConfig};
    use crate::world::TaskStatus;

    fn quiet(n: u32) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::brussels();
        cfg.fleet_size = n;
        cfg.arrival_rate = 0.0;
        cfg.patient_arrival_rate = 0.0;
        cfg
    }

    #[test]
    fn on_time_critical_delivery() {
        let cfg = quiet(1);
        let mut w = build_world(&cfg, 0).unwrap();
        let id = w.inject_task(0, 0, UrgencyClass::Critical);
        let target = w.hospitals[0].pos;
        w.uavs[0].pos = GridPos::new(target.x - 1, target.y);
        w.uavs[0].carried = Some(id);
        w.tasks[id as usize].status = TaskStatus::InTransit { uav: 0, picked_at: 0 };
        // Window of 4 steps with 2 left after arrival gives ratio 0.5.
        w.tasks[id as usize].t_created = 0;
        w.tasks[id as usize].t_deadline = 4;
        w.t = 1;
        let (next, ev) = step(&w, &[Action::Right]).unwrap();
        let r = compute_rewards(&w, &next, &ev, &cfg.rewards).unwrap();
        let a = r.agents[0];
        let sparse = a.get(RewardComponent::DeliveryCompletion) + a.get(RewardComponent::CriticalBonus) + a.get(RewardComponent::EarlyBonus);
        assert_eq!(sparse, 72.5);
    }

    #[test]
    fn parked_on_depot_earns_nothing() {
        let cfg = quiet(2);
        let w = build_world(&cfg, 0).unwrap();
        let (next, ev) = step(&w, &[Action::Stay, Action::Stay]).unwrap();
        let r = compute_rewards(&w, &next, &ev, &cfg.rewards).unwrap();
        assert_eq!(r.totals(), vec![0.0, 0.0]);
    }

    #[test]
    fn pending_expiry_is_shared() {
        let cfg = quiet(4);
        let mut w = build_world(&cfg, 0).unwrap();
        for u in &mut w.uavs {
            u.pos = GridPos::new(0, 0);
        }
        let id = w.inject_task(0, 0, UrgencyClass::Critical);
        w.tasks[id as usize].t_deadline = 1;
        let (next, ev) = step(&w, &[Action::Stay; 4]).unwrap();
        let r = compute_rewards(&w, &next, &ev, &cfg.rewards).unwrap();
        for a in &r.agents {
            assert_eq!(a.get(RewardComponent::DeadlineViolation), -3.75);
        }
    }

    #[test]
    fn monotone_urgency() {
        let p = RewardParams::default();
        let sparse = |u: UrgencyClass| {
            p.delivery_completion
                + match u {
                    UrgencyClass::Critical => p.critical_bonus,
                    UrgencyClass::Urgent => p.urgent_bonus,
                    UrgencyClass::Standard => 0.0,
                }
        };
        assert!(sparse(UrgencyClass::Critical) > sparse(UrgencyClass::Urgent));
        assert!(sparse(UrgencyClass::Urgent) > sparse(UrgencyClass::Standard));
    }

    #[test]
    fn objective_examples() {
        assert_eq!(objective_j(&EpisodeRewardSummary::default()), 0.0);
        let mut s = EpisodeRewardSummary::default();
        s.totals[RewardComponent::DeliveryCompletion as usize] = 50.0;
        s.totals[RewardComponent::MovementCost as usize] = 10.0 * -0.001;
        s.totals[RewardComponent::ProgressStep as usize] = 5.0;
        assert!((objective_j(&s) - 49.99).abs() < 1e-12);
    }

    #[test]
    fn sign_validation() {
        let mut p = RewardParams::default();
        p.deadline_violation = 15.0;
        assert!(p.validate().is_err());
        let mut p = RewardParams::default();
        p.delivery_completion = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn breakdown_serializes_nonzero_and_total() {
        let mut a = AgentReward::default();
        a.add(RewardComponent::MovementCost, -0.001);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"movement_cost":-0.001,"total":-0.001}"#);
    }
}
