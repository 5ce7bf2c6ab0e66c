//! Episode lifecycle: reset, step, termination and per-episode results.
//!
//! This is the environment contract external learners drive. The engine
//! itself is undiscounted; [`DISCOUNT`] is carried as metadata only.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, elapsed_mission_time_s, Action, Event, StepEvents};
use crate::error::{Error, Result};
use crate::observation::{build_all, ObsVector};
use crate::policies::Policy;
use crate::reward::{compute_rewards, objective_j, EpisodeRewardSummary, RewardBreakdown};
use crate::scenario::{build_world, ClaimMode, ScenarioConfig};
use crate::world::WorldState;

pub const DISCOUNT: f64 = 0.99;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeCounters {
    pub tasks_created: u32,
    pub tasks_delivered: u32,
    pub tasks_expired: u32,
    pub expired_in_transit: u32,
    pub pickups: u32,
    pub claims: u32,
    pub moves: u32,
    pub patients_arrived: u32,
    pub patients_treated: u32,
    pub patients_deceased: u32,
}

impl EpisodeCounters {
    pub fn record(&mut self, events: &StepEvents) {
        for e in events.iter() {
            match e {
                Event::TaskArrived { .. } => self.tasks_created += 1,
                Event::Delivered { .. } => self.tasks_delivered += 1,
                Event::TaskExpired { was_in_transit, .. } => {
                    self.tasks_expired += 1;
                    if *was_in_transit {
                        self.expired_in_transit += 1;
                    }
                }
                Event::PickedUp { .. } => self.pickups += 1,
                Event::Claimed { .. } => self.claims += 1,
                Event::Moved { .. } => self.moves += 1,
                Event::PatientArrived { .. } => self.patients_arrived += 1,
                Event::PatientTreated { .. } => self.patients_treated += 1,
                Event::PatientDeceased { .. } => self.patients_deceased += 1,
                _ => {}
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub rewards: RewardBreakdown,
    pub events: StepEvents,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<ObsVector>,
    pub rewards: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
pub struct EnvCore {
    world: WorldState,
    returns: Vec<f64>,
    counters: EpisodeCounters,
    reward_summary: EpisodeRewardSummary,
    terminated: bool,
    truncated: bool,
}

impl EnvCore {
    pub fn reset(config: &ScenarioConfig, seed: u64) -> Result<(EnvCore, Vec<ObsVector>)> {
        Ok(EnvCore::from_world(build_world(config, seed)?))
    }

    /// Start an episode from a prepared world, e.g. a scripted scenario
    /// built with [`WorldState::inject_task`].
    pub fn from_world(world: WorldState) -> (EnvCore, Vec<ObsVector>) {
        let obs = build_all(&world);
        let n = world.uavs.len();
        let core = EnvCore {
            world,
            returns: vec![0.0; n],
            counters: EpisodeCounters::default(),
            reward_summary: EpisodeRewardSummary::default(),
            terminated: false,
            truncated: false,
        };
        (core, obs)
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn counters(&self) -> &EpisodeCounters {
        &self.counters
    }

    pub fn is_done(&self) -> bool {
        self.terminated || self.truncated
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn observations(&self) -> Vec<ObsVector> {
        build_all(&self.world)
    }

    fn mission_complete(&self) -> bool {
        let w = &self.world;
        let opts = &w.config.options;
        if w.delivered_count() < w.config.min_completed_tasks as usize || w.in_transit_count() > 0 {
            return false;
        }
        if opts.termination_requires_empty_pending {
            return w.pending_count() == 0;
        }
        // Reservations count as assigned work.
        opts.claim_mode == ClaimMode::Pickup || w.pending_tasks().all(|t| t.claimed_by.is_none())
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeOver);
        }
        let prev = self.world.clone();
        let events = dynamics::step_in_place(&mut self.world, actions)?;
        let rewards = compute_rewards(&prev, &self.world, &events, &self.world.config.rewards)?;
        let totals = rewards.totals();
        for (acc, r) in self.returns.iter_mut().zip(&totals) {
            *acc += r;
        }
        self.counters.record(&events);
        self.reward_summary.accumulate(&rewards);

        self.terminated = self.mission_complete();
        self.truncated = !self.terminated && self.world.t >= self.world.config.t_max;

        Ok(StepOutcome {
            observations: build_all(&self.world),
            rewards: totals,
            terminated: self.terminated,
            truncated: self.truncated,
            info: StepInfo { rewards, events },
        })
    }

    /// Result snapshot; meaningful once the episode is done.
    pub fn result(&self, seed: u64, policy: &str) -> EpisodeResult {
        let w = &self.world;
        let c = &self.counters;
        let fleet_return: f64 = self.returns.iter().sum();
        let still_active = (w.pending_count() + w.in_transit_count()) as u32;
        EpisodeResult {
            seed,
            fleet_size: w.uavs.len() as u32,
            policy: policy.to_owned(),
            steps: w.t,
            mission_time_s: elapsed_mission_time_s(w),
            terminated: self.terminated,
            truncated: self.truncated,
            success: self.terminated && c.tasks_expired == 0 && c.patients_deceased == 0,
            agent_returns: self.returns.clone(),
            fleet_return,
            mean_agent_return: fleet_return / w.uavs.len() as f64,
            tasks_created: c.tasks_created,
            delivered_on_time: c.tasks_delivered,
            expired: c.tasks_expired,
            still_active,
            deceased: c.patients_deceased,
            pickups: c.pickups,
            moves: c.moves,
            objective_j: objective_j(&self.reward_summary),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub fleet_size: u32,
    pub policy: String,
    pub steps: u32,
    pub mission_time_s: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub success: bool,
    pub agent_returns: Vec<f64>,
    pub fleet_return: f64,
    pub mean_agent_return: f64,
    pub tasks_created: u32,
    /// Deliveries only ever happen before the deadline, so this is the
    /// total delivered count.
    pub delivered_on_time: u32,
    pub expired: u32,
    pub still_active: u32,
    pub deceased: u32,
    pub pickups: u32,
    pub moves: u32,
    pub objective_j: f64,
}

/// Observer hook invoked after reset and after every step.
pub trait EpisodeObserver {
    fn on_reset(&mut self, _core: &EnvCore, _seed: u64, _policy: &str) -> Result<()> {
        Ok(())
    }
    fn on_step(&mut self, core: &EnvCore, actions: &[Action], outcome: &StepOutcome) -> Result<()>;
}

/// Run one episode to termination or truncation.
pub fn run_episode(config: &ScenarioConfig, seed: u64, policy: &mut dyn Policy) -> Result<EpisodeResult> {
    run_episode_observed(config, seed, policy, None)
}

pub fn run_episode_observed(
    config: &ScenarioConfig,
    seed: u64,
    policy: &mut dyn Policy,
    mut observer: Option<&mut dyn EpisodeObserver>,
) -> Result<EpisodeResult> {
    let (mut core, mut obs) = EnvCore::reset(config, seed)?;
    policy.reset(seed);
    if let Some(o) = observer.as_deref_mut() {
        o.on_reset(&core, seed, policy.name())?;
    }
    while !core.is_done() {
        let step = core.world.t;
        let actions = policy.act(&core.world, &obs).map_err(|message| Error::Policy { step, message })?;
        if actions.len() != core.world.uavs.len() {
            return Err(Error::Policy {
                step,
                message: format!("returned {} actions for {} UAVs", actions.len(), core.world.uavs.len()),
            });
        }
        let outcome = core.step(&actions)?;
        if let Some(o) = observer.as_deref_mut() {
            o.on_step(&core, &actions, &outcome)?;
        }
        obs = outcome.observations;
    }
    Ok(core.result(seed, policy.name()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Action;
    use crate::observation::OBS_LEN;
    use crate::policies::{GreedyPolicy, RandomPolicy};
    use crate::world::{GridPos, TaskStatus, UrgencyClass};

    struct StayPolicy;
    impl Policy for StayPolicy {
        fn name(&self) -> &str {
            "stay"
        }
        fn act(&mut self, w: &WorldState, _: &[ObsVector]) -> Result<Vec<Action>, String> {
            Ok(vec![Action::Stay; w.uavs.len()])
        }
    }

    fn quiet() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::brussels();
        cfg.arrival_rate = 0.0;
        cfg.patient_arrival_rate = 0.0;
        cfg
    }

    #[test]
    fn reset_is_deterministic_and_sized() {
        let mut cfg = ScenarioConfig::brussels();
        cfg.fleet_size = 8;
        let (_, a) = EnvCore::reset(&cfg, 7).unwrap();
        let (_, b) = EnvCore::reset(&cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert!(a.iter().all(|o| o.0.len() == OBS_LEN && o[32] == 0.0));
    }

    #[test]
    fn stay_forever_truncates_with_zero_return_on_depots() {
        let cfg = quiet();
        let r = run_episode(&cfg, 1, &mut StayPolicy).unwrap();
        assert_eq!(r.steps, 200);
        assert!(r.truncated && !r.terminated && !r.success);
        assert_eq!(r.fleet_return, 0.0);
    }

    #[test]
    fn stay_forever_off_depot_pays_idle_penalty() {
        let mut cfg = quiet();
        cfg.fleet_size = 2;
        let (mut core, _) = EnvCore::reset(&cfg, 1).unwrap();
        core.world.uavs[0].pos = GridPos::new(0, 0);
        while !core.is_done() {
            core.step(&[Action::Stay, Action::Stay]).unwrap();
        }
        assert!((core.returns()[0] - 200.0 * -0.01).abs() < 1e-9);
        assert_eq!(core.returns()[1], 0.0);
    }

    #[test]
    fn truncation_flags_at_horizon() {
        let mut cfg = quiet();
        cfg.fleet_size = 1;
        cfg.t_max = 3;
        let (mut core, _) = EnvCore::reset(&cfg, 0).unwrap();
        assert!(!core.step(&[Action::Stay]).unwrap().truncated);
        assert!(!core.step(&[Action::Stay]).unwrap().truncated);
        let last = core.step(&[Action::Stay]).unwrap();
        assert!(last.truncated && !last.terminated);
        assert!(matches!(core.step(&[Action::Stay]), Err(Error::EpisodeOver)));
    }

    fn delivered_world(cfg: &ScenarioConfig, delivered: usize) -> EnvCore {
        let (mut core, _) = EnvCore::reset(cfg, 0).unwrap();
        for _ in 0..delivered {
            let id = core.world.inject_task(0, 0, UrgencyClass::Standard);
            core.world.tasks[id as usize].status = TaskStatus::Delivered { at: 0 };
        }
        core
    }

    #[test]
    fn in_transit_task_blocks_termination() {
        let mut cfg = quiet();
        cfg.fleet_size = 1;
        let mut core = delivered_world(&cfg, 15);
        let id = core.world.inject_task(0, 0, UrgencyClass::Standard);
        core.world.tasks[id as usize].status = TaskStatus::InTransit { uav: 0, picked_at: 0 };
        core.world.tasks[id as usize].t_deadline = 100;
        core.world.uavs[0].carried = Some(id);
        core.world.uavs[0].pos = GridPos::new(0, 0);
        let out = core.step(&[Action::Stay]).unwrap();
        assert!(!out.terminated);
    }

    #[test]
    fn quota_met_and_idle_terminates() {
        let mut cfg = quiet();
        cfg.fleet_size = 1;
        let mut core = delivered_world(&cfg, 15);
        let out = core.step(&[Action::Stay]).unwrap();
        assert!(out.terminated && !out.truncated);
    }

    #[test]
    fn pending_task_blocks_termination_only_in_strict_mode() {
        let mut cfg = quiet();
        cfg.fleet_size = 1;
        let mut core = delivered_world(&cfg, 15);
        core.world.uavs[0].pos = GridPos::new(0, 0);
        core.world.inject_task(0, 0, UrgencyClass::Standard);
        assert!(core.step(&[Action::Stay]).unwrap().terminated);

        cfg.options.termination_requires_empty_pending = true;
        let mut core = delivered_world(&cfg, 15);
        core.world.uavs[0].pos = GridPos::new(0, 0);
        let id = core.world.inject_task(0, 0, UrgencyClass::Standard);
        core.world.tasks[id as usize].t_deadline = 100;
        assert!(!core.step(&[Action::Stay]).unwrap().terminated);
    }

    #[test]
    fn reserved_task_blocks_termination() {
        let mut cfg = quiet();
        cfg.fleet_size = 1;
        cfg.options.claim_mode = ClaimMode::Exclusive;
        let mut core = delivered_world(&cfg, 15);
        let d = core.world.depots[0];
        core.world.uavs[0].pos = GridPos::new(d.x + 1, d.y);
        let id = core.world.inject_task(0, 0, UrgencyClass::Standard);
        core.world.tasks[id as usize].t_deadline = 100;
        let out = core.step(&[Action::Right]).unwrap();
        assert_eq!(core.world.task(id).claimed_by, Some(0));
        assert!(!out.terminated);
    }

    #[test]
    fn fleet_return_is_sum_and_success_needs_no_expiry() {
        let cfg = ScenarioConfig::brussels();
        for seed in 0..5 {
            let r = run_episode(&cfg, seed, &mut RandomPolicy::new(0)).unwrap();
            assert!((r.fleet_return - r.agent_returns.iter().sum::<f64>()).abs() < 1e-12);
            if r.success {
                assert_eq!(r.expired, 0);
            }
            let g = run_episode(&cfg, seed, &mut GreedyPolicy).unwrap();
            if g.success {
                assert_eq!(g.expired, 0);
                assert_eq!(g.deceased, 0);
            }
        }
    }

    #[test]
    fn policy_failure_reports_step() {
        struct Broken;
        impl Policy for Broken {
            fn name(&self) -> &str {
                "broken"
            }
            fn act(&mut self, w: &WorldState, _: &[ObsVector]) -> Result<Vec<Action>, String> {
                if w.t == 3 {
                    Err("boom".into())
                } else {
                    Ok(vec![Action::Stay; w.uavs.len()])
                }
            }
        }
        let err = run_episode(&quiet(), 0, &mut Broken).unwrap_err();
        assert!(matches!(err, Error::Policy { step: 3, .. }));
    }
}
