use proptest::prelude::*;

use uavmed_core::dynamics::{step, Action, Event};
use uavmed_core::episode::EpisodeResult;
use uavmed_core::scenario::{build_world, ClaimMode, ScenarioConfig};
use uavmed_core::summary::summarize;
use uavmed_core::world::{TaskStatus, WorldState};

fn action() -> impl Strategy<Value = Action> {
    (0i64..5).prop_map(|c| Action::from_code(c).unwrap())
}

fn check_invariants(w: &WorldState) -> Result<(), TestCaseError> {
    let cfg = &w.config;
    prop_assert!(w.pending_count() <= cfg.max_active_tasks as usize);
    for u in &w.uavs {
        prop_assert!(u.payload <= cfg.payload_max);
        prop_assert!(u.energy_wh >= 0.0 && u.energy_wh <= cfg.battery_capacity_wh);
        prop_assert!(u.pos.x >= 0 && u.pos.y >= 0);
        prop_assert!(u.pos.x < cfg.grid.width_cells as i32 && u.pos.y < cfg.grid.height_cells as i32);
        if let Some(id) = u.carried {
            let held = matches!(w.task(id).status, TaskStatus::InTransit { uav, .. } if uav == u.id);
            prop_assert!(held, "task {} not in transit with uav {}", id, u.id);
        }
    }
    for t in &w.tasks {
        if let TaskStatus::InTransit { uav, .. } = t.status {
            prop_assert_eq!(w.uavs[uav].carried, Some(t.id));
        }
        if let Some(c) = t.claimed_by {
            prop_assert!(c < w.uavs.len());
        }
    }
    for h in &w.hospitals {
        prop_assert!(h.inventory >= 0.0);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn state_invariants_hold_under_arbitrary_actions(
        seed in any::<u64>(),
        fleet in 1u32..12,
        exclusive in any::<bool>(),
        arrival in 0.0f64..1.0,
        k_max in 1u32..6,
        battery in 5.0f64..80.0,
        script in prop::collection::vec(action(), 1..600),
    ) {
        let mut cfg = ScenarioConfig::brussels();
        cfg.fleet_size = fleet;
        cfg.arrival_rate = arrival;
        cfg.max_active_tasks = k_max;
        cfg.battery_capacity_wh = battery;
        if exclusive {
            cfg.options.claim_mode = ClaimMode::Exclusive;
        }
        let mut w = build_world(&cfg, seed).unwrap();
        check_invariants(&w)?;
        let n = fleet as usize;
        for chunk in script.chunks(n) {
            if w.t >= cfg.t_max {
                break;
            }
            let mut actions = chunk.to_vec();
            actions.resize(n, Action::Stay);
            let (next, events) = step(&w, &actions).unwrap();
            for u in 0..n {
                let before = w.uavs[u].payload;
                let after = next.uavs[u].payload;
                let refilled = events.iter().any(|e| matches!(e, Event::Refilled { uav, .. } if *uav == u));
                let picked = events.iter().filter(|e| matches!(e, Event::PickedUp { uav, .. } if *uav == u)).count() as u32;
                prop_assert!(picked <= 1);
                let base = if refilled { cfg.payload_max } else { before };
                prop_assert_eq!(after, base - picked);
            }
            check_invariants(&next)?;
            prop_assert_eq!(next.t, w.t + 1);
            w = next;
        }
    }

    #[test]
    fn summary_is_permutation_invariant(
        times in prop::collection::vec((0u32..3, 0.0f64..3000.0, any::<bool>(), -500.0f64..100.0), 1..60),
        swaps in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..80),
    ) {
        let results: Vec<EpisodeResult> = times
            .iter()
            .enumerate()
            .map(|(i, &(f, t, s, ret))| EpisodeResult {
                seed: i as u64,
                fleet_size: 4 * (f + 1),
                policy: "greedy".into(),
                steps: 100,
                mission_time_s: t,
                terminated: s,
                truncated: !s,
                success: s,
                agent_returns: vec![ret],
                fleet_return: ret,
                mean_agent_return: ret,
                tasks_created: 3,
                delivered_on_time: 2,
                expired: 1,
                still_active: 0,
                deceased: i as u32 % 3,
                pickups: 2,
                moves: 10,
                objective_j: ret,
            })
            .collect();
        let mut shuffled = results.clone();
        for (a, b) in swaps {
            let (i, j) = (a.index(shuffled.len()), b.index(shuffled.len()));
            shuffled.swap(i, j);
        }
        prop_assert_eq!(summarize(&results).unwrap(), summarize(&shuffled).unwrap());
    }

    #[test]
    fn config_round_trips_through_toml(
        fleet in 1u32..64,
        speed in 1.0f64..200.0,
        arrival in 0.0f64..1.0,
        t_max in 1u32..1000,
        exclusive in any::<bool>(),
        strict in any::<bool>(),
        critical in 1u32..10,
    ) {
        let mut cfg = ScenarioConfig::brussels();
        cfg.fleet_size = fleet;
        cfg.uav_speed_mps = speed;
        cfg.arrival_rate = arrival;
        cfg.t_max = t_max;
        cfg.options.termination_requires_empty_pending = strict;
        if exclusive {
            cfg.options.claim_mode = ClaimMode::Exclusive;
        }
        cfg.deadlines.critical = critical;
        cfg.deadlines.urgent = critical + 5;
        cfg.deadlines.standard = critical + 15;
        let text = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text, None).unwrap();
        prop_assert_eq!(back.config_hash(), cfg.config_hash());
        prop_assert_eq!(back, cfg);
    }
}
