//! Dict-per-agent environment surface for external training frameworks.
//!
//! Agents are named `uav_0` .. `uav_{N-1}`; actions are integer codes 0..=4
//! (up, down, left, right, stay). Step results carry per-agent maps plus an
//! `__all__` entry for the done flags. Values are identical to those of
//! [`EnvCore`]; this layer only renames and validates.

use std::collections::BTreeMap;

use crate::dynamics::Action;
use crate::episode::EnvCore;
use crate::error::{Error, Result};
use crate::observation::{ObsVector, OBS_LEN};
use crate::reward::AgentReward;
use crate::scenario::ScenarioConfig;

pub const ALL_AGENTS: &str = "__all__";
pub const OBSERVATION_LEN: usize = OBS_LEN;
pub const ACTION_COUNT: usize = 5;

pub fn agent_id(i: usize) -> String {
    format!("uav_{i}")
}

#[derive(Debug, Clone)]
pub struct AgentInfo {
    pub reward: AgentReward,
}

#[derive(Debug, Clone)]
pub struct MultiAgentStep {
    pub observations: BTreeMap<String, ObsVector>,
    pub rewards: BTreeMap<String, f64>,
    pub terminated: BTreeMap<String, bool>,
    pub truncated: BTreeMap<String, bool>,
    pub infos: BTreeMap<String, AgentInfo>,
}

pub struct ParallelEnv {
    config: ScenarioConfig,
    agents: Vec<String>,
    core: Option<EnvCore>,
}

impl ParallelEnv {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let agents = (0..config.fleet_size as usize).map(agent_id).collect();
        Ok(ParallelEnv { config, agents, core: None })
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn core(&self) -> Option<&EnvCore> {
        self.core.as_ref()
    }

    pub fn reset(&mut self, seed: u64) -> Result<BTreeMap<String, ObsVector>> {
        let (core, obs) = EnvCore::reset(&self.config, seed)?;
        self.core = Some(core);
        Ok(self.agents.iter().cloned().zip(obs).collect())
    }

    fn decode(&self, actions: &BTreeMap<String, i64>) -> Result<Vec<Action>> {
        if let Some(unknown) = actions.keys().find(|k| !self.agents.contains(k)) {
            return Err(Error::UnknownAgent(unknown.clone()));
        }
        self.agents
            .iter()
            .map(|a| {
                let code = *actions.get(a).ok_or_else(|| Error::MissingAction(a.clone()))?;
                Action::from_code(code).ok_or(Error::InvalidAction(code))
            })
            .collect()
    }

    pub fn step(&mut self, actions: &BTreeMap<String, i64>) -> Result<MultiAgentStep> {
        let decoded = self.decode(actions)?;
        let core = self.core.as_mut().ok_or(Error::EpisodeOver)?;
        let out = core.step(&decoded)?;
        let per_agent = |v: bool| -> BTreeMap<String, bool> {
            self.agents.iter().cloned().map(|a| (a, v)).chain([(ALL_AGENTS.to_owned(), v)]).collect()
        };
        Ok(MultiAgentStep {
            observations: self.agents.iter().cloned().zip(out.observations).collect(),
            rewards: self.agents.iter().cloned().zip(out.rewards).collect(),
            terminated: per_agent(out.terminated),
            truncated: per_agent(out.truncated),
            infos: self
                .agents
                .iter()
                .cloned()
                .zip(out.info.rewards.agents.iter().map(|r| AgentInfo { reward: *r }))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(n: u32) -> ParallelEnv {
        let mut cfg = ScenarioConfig::brussels();
        cfg.fleet_size = n;
        ParallelEnv::new(cfg).unwrap()
    }

    fn all(env: &ParallelEnv, code: i64) -> BTreeMap<String, i64> {
        env.agents().iter().map(|a| (a.clone(), code)).collect()
    }

    #[test]
    fn reset_keys_and_lengths() {
        let mut e = env(8);
        let a = e.reset(7).unwrap();
        let b = e.reset(7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert!(a.contains_key("uav_7"));
        assert!(a.values().all(|o| o.as_slice().len() == OBSERVATION_LEN));
    }

    #[test]
    fn all_stay_rewards_non_positive() {
        let mut e = env(4);
        e.reset(1).unwrap();
        let step = e.step(&all(&e, 4)).unwrap();
        assert!(step.rewards.values().all(|r| *r <= 0.0));
        assert!(step.terminated.contains_key(ALL_AGENTS));
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mut e = env(2);
        assert!(matches!(e.step(&all(&e, 4)), Err(Error::EpisodeOver)));
        e.reset(0).unwrap();
        assert!(matches!(e.step(&all(&e, 5)), Err(Error::InvalidAction(5))));
        let mut partial = all(&e, 0);
        partial.remove("uav_1");
        assert!(matches!(e.step(&partial), Err(Error::MissingAction(_))));
        let mut extra = all(&e, 0);
        extra.insert("uav_9".into(), 0);
        assert!(matches!(e.step(&extra), Err(Error::UnknownAgent(_))));
    }
}
