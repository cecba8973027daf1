use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::adversary::{Script, ScriptMove, StrategyKind};
use crate::protocols::{ProtocolConfig, ProtocolParams};
use crate::ring::PortScheme;

fn dims() -> BitDims {
    BitDims { n: 8, max_id: 16, horizon: 16 }
}

fn world_with(n: usize, placement: &[(u32, usize, bool)], cfg: &ProtocolConfig) -> WorldState {
    let ring = Ring::build(n, PortScheme::LowerIsCwEverywhere).unwrap();
    let specs = placement
        .iter()
        .map(|&(id, node, byz)| RobotSpec { id: RobotId(id), node: NodeRef(node), is_byzantine: byz })
        .collect();
    WorldState::new(ring, specs, cfg).unwrap()
}

fn stay_action(world: &WorldState, id: u32) -> Action {
    Action::stay(world.robot(RobotId(id)).unwrap().exposed.clone())
}

#[test]
fn observation_of_sole_robot_contains_only_itself() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let world = world_with(4, &[(1, 0, false), (2, 2, false)], &cfg);
    let obs = make_observation(&world, RobotId(1)).unwrap();
    assert_eq!(obs.colocated.len(), 1);
    assert_eq!(obs.colocated[0].id, RobotId(1));
    assert_eq!(obs.round, 1);
}

#[test]
fn colocated_robots_see_each_others_exposed_memory() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let world = world_with(4, &[(1, 1, false), (2, 1, false), (3, 1, true)], &cfg);
    for id in 1..=3 {
        let obs = make_observation(&world, RobotId(id)).unwrap();
        let seen: Vec<u32> = obs.colocated.iter().map(|o| o.id.0).collect();
        assert_eq!(seen, vec![1, 2, 3], "all three exposed memories visible, sorted");
    }
    assert!(matches!(make_observation(&world, RobotId(9)), Err(EngineError::UnknownRobot(_))));
}

#[test]
fn terminated_robots_vanish_from_observations() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let mut world = world_with(4, &[(1, 1, false), (2, 1, false)], &cfg);
    let mut actions = BTreeMap::new();
    let mut term = stay_action(&world, 1);
    term.terminate = true;
    actions.insert(RobotId(1), term);
    actions.insert(RobotId(2), stay_action(&world, 2));
    apply_actions(&mut world, &actions, &dims(), true, true);
    let obs = make_observation(&world, RobotId(2)).unwrap();
    assert_eq!(obs.colocated.len(), 1, "terminated robot is invisible afterwards");
    assert!(matches!(make_observation(&world, RobotId(1)), Err(EngineError::RobotTerminated(_))));
}

#[test]
fn opposing_moves_swap_without_meeting() {
    // Robots on adjacent nodes move toward each other simultaneously and
    // pass mid-edge.
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let mut world = world_with(4, &[(1, 0, false), (2, 1, false)], &cfg);
    let mut actions = BTreeMap::new();
    let mut a1 = stay_action(&world, 1);
    a1.motion = Motion::Move(0); // clockwise: 0 -> 1
    let mut a2 = stay_action(&world, 2);
    a2.motion = Motion::Move(1); // counter-clockwise: 1 -> 0
    actions.insert(RobotId(1), a1);
    actions.insert(RobotId(2), a2);
    let record = apply_actions(&mut world, &actions, &dims(), true, true);
    assert_eq!(world.robot(RobotId(1)).unwrap().node, NodeRef(1));
    assert_eq!(world.robot(RobotId(2)).unwrap().node, NodeRef(0));
    assert!(record.events.is_empty());
}

#[test]
fn follow_chain_resolves_to_the_mover_and_cycles_stay() {
    let motions: BTreeMap<RobotId, Motion> = [
        (RobotId(1), Motion::Follow(RobotId(2))),
        (RobotId(2), Motion::Follow(RobotId(3))),
        (RobotId(3), Motion::Move(1)),
        (RobotId(4), Motion::Follow(RobotId(5))),
        (RobotId(5), Motion::Follow(RobotId(4))),
        (RobotId(6), Motion::Follow(RobotId(6))),
    ]
    .into();
    let (resolved, events) = resolve_follows(&motions, &BTreeSet::new());
    assert_eq!(resolved[&RobotId(1)], Some(1), "three-robot chain moves on the mover's edge");
    assert_eq!(resolved[&RobotId(2)], Some(1));
    assert_eq!(resolved[&RobotId(3)], Some(1));
    assert_eq!(resolved[&RobotId(4)], None, "mutual follow is a cycle: both stay");
    assert_eq!(resolved[&RobotId(5)], None);
    assert_eq!(resolved[&RobotId(6)], None, "self-follow stays");
    assert!(events.is_empty());
}

#[test]
fn following_a_terminating_robot_stays_and_records_an_event() {
    let motions: BTreeMap<RobotId, Motion> =
        [(RobotId(1), Motion::Follow(RobotId(2))), (RobotId(2), Motion::Move(0))].into();
    let terminating = BTreeSet::from([RobotId(2)]);
    let (resolved, events) = resolve_follows(&motions, &terminating);
    assert_eq!(resolved[&RobotId(1)], None);
    assert_eq!(resolved[&RobotId(2)], Some(0), "the terminating robot still makes its own move");
    assert_eq!(events, vec![EngineEvent { robot: RobotId(1), kind: EventKind::FollowTargetTerminated }]);
}

#[test]
fn follower_traverses_the_same_edge_as_its_target() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let mut world = world_with(5, &[(1, 2, false), (2, 2, false)], &cfg);
    let mut a1 = stay_action(&world, 1);
    a1.motion = Motion::Move(1);
    let mut a2 = stay_action(&world, 2);
    a2.motion = Motion::Follow(RobotId(1));
    let actions: BTreeMap<RobotId, Action> = [(RobotId(1), a1), (RobotId(2), a2)].into();
    apply_actions(&mut world, &actions, &dims(), true, true);
    assert_eq!(world.robot(RobotId(1)).unwrap().node, world.robot(RobotId(2)).unwrap().node);
    assert_eq!(world.robot(RobotId(2)).unwrap().entered_via, Some(0));
}

#[test]
fn illegal_follow_becomes_stay_with_a_violation_event() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let mut world = world_with(4, &[(1, 0, false), (2, 2, false)], &cfg);
    let mut a1 = stay_action(&world, 1);
    a1.motion = Motion::Follow(RobotId(2)); // not co-located
    let mut a2 = stay_action(&world, 2);
    a2.motion = Motion::Follow(RobotId(9)); // unknown robot
    let actions: BTreeMap<RobotId, Action> = [(RobotId(1), a1), (RobotId(2), a2)].into();
    let record = apply_actions(&mut world, &actions, &dims(), true, true);
    assert_eq!(world.robot(RobotId(1)).unwrap().node, NodeRef(0));
    assert_eq!(
        record.events,
        vec![
            EngineEvent { robot: RobotId(1), kind: EventKind::FollowNotColocated },
            EngineEvent { robot: RobotId(2), kind: EventKind::FollowNotColocated },
        ]
    );
}

#[test]
fn id_mutation_is_rejected_and_logged() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let mut world = world_with(4, &[(1, 0, false)], &cfg);
    let mut action = stay_action(&world, 1);
    action.exposed.id = RobotId(7);
    let actions: BTreeMap<RobotId, Action> = [(RobotId(1), action)].into();
    let record = apply_actions(&mut world, &actions, &dims(), true, true);
    assert_eq!(world.robot(RobotId(1)).unwrap().exposed.id, RobotId(1));
    assert_eq!(
        record.events,
        vec![EngineEvent { robot: RobotId(1), kind: EventKind::IdMutationRejected }]
    );
}

#[test]
fn run_with_zero_rounds_returns_the_initial_world() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let mut world = world_with(4, &[(1, 0, false), (2, 0, false)], &cfg);
    let before = world.clone();
    let mut adv = Adversary::new(StrategyKind::Honest);
    let trace = run(&mut world, &cfg, &mut adv, &dims(), 0);
    assert_eq!(world, before);
    assert!(trace.rounds.is_empty());
}

#[test]
fn identical_inputs_produce_byte_identical_traces() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let placement: Vec<(u32, usize, bool)> =
        vec![(1, 3, false), (2, 3, true), (5, 3, false), (9, 3, false)];
    let run_once = || {
        let mut world = world_with(8, &placement, &cfg);
        let mut adv = Adversary::new(StrategyKind::Scripted(Script::Uniform(vec![
            ScriptMove::MoveCcw,
            ScriptMove::ClaimSettled,
            ScriptMove::FollowLowest,
        ])));
        let trace = run(&mut world, &cfg, &mut adv, &dims(), 12);
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf, true).unwrap();
        (trace, buf)
    };
    let (trace_a, bytes_a) = run_once();
    let (trace_b, bytes_b) = run_once();
    assert_eq!(trace_a, trace_b);
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn traces_replay_and_detect_tampering() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let mut world = world_with(6, &[(1, 2, false), (2, 2, false), (3, 2, false)], &cfg);
    let mut adv = Adversary::new(StrategyKind::Honest);
    let trace = run(&mut world, &cfg, &mut adv, &dims(), 8);
    assert!(!trace.rounds.is_empty());
    let replayed = replay(&trace).unwrap();
    // Replay re-derives everything except private protocol state.
    for (a, b) in replayed.robots.iter().zip(&world.robots) {
        assert_eq!((a.id, a.node, a.sense, a.terminated), (b.id, b.node, b.sense, b.terminated));
        assert_eq!(a.exposed, b.exposed);
    }
    assert_eq!(replayed.round, world.round);

    // Flip one recorded motion: replay must report the divergent round.
    let mut tampered = trace.clone();
    let victim = tampered
        .rounds
        .iter_mut()
        .flat_map(|r| r.robots.iter_mut())
        .find(|r| r.action.as_ref().map(|a| a.motion != Motion::Stay).unwrap_or(false))
        .expect("some robot moved");
    let round_hint = victim.motion;
    victim.action.as_mut().unwrap().motion = Motion::Stay;
    match replay(&tampered) {
        Err(trace::ReplayError::Divergence { round }) => {
            assert!(round >= 1);
            let _ = round_hint;
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn jsonl_round_trip_preserves_the_trace() {
    let cfg = ProtocolConfig::new(ProtocolParams::Rooted);
    let mut world = world_with(5, &[(2, 1, false), (4, 1, false)], &cfg);
    let mut adv = Adversary::new(StrategyKind::Honest);
    let trace = run(&mut world, &cfg, &mut adv, &dims(), 6);
    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf, true).unwrap();
    let (parsed, full) = Trace::read_jsonl(&buf[..]).unwrap();
    assert!(full);
    assert_eq!(parsed, trace);

    let mut compact = Vec::new();
    trace.write_jsonl(&mut compact, false).unwrap();
    let (parsed, full) = Trace::read_jsonl(&compact[..]).unwrap();
    assert!(!full);
    assert!(matches!(replay(&parsed), Err(trace::ReplayError::MissingActions)));
}
