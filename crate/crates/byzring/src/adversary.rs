//! Byzantine control. The adversary decides for all Byzantine robots jointly
//! each round, with full read access to the world — including non-Byzantine
//! private state — but cannot fake IDs or write exposed memory outside task
//! (ii); the engine enforces both.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{
    self, Action, Motion, Observation, ProtocolFields, RobotId, WorldState,
};
use crate::protocols::{
    self, gathering_rounds, stage_of, ProtocolConfig, ProtocolParams, Subgroup, UnexposedMemory,
};
use crate::ring::NodeRef;

/// Read-only view handed to the adversary each round: the entire pre-round
/// world (non-Byzantine unexposed memories included), the protocol being
/// attacked, and the round about to execute.
pub struct AdversaryView<'a> {
    pub world: &'a WorldState,
    pub cfg: &'a ProtocolConfig,
    pub round: u32,
}

/// One entry of the finite scripted-action menu. Everything is expressed
/// relative to what the robot itself can do this round, which keeps the
/// joint script space finite for exhaustive search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptMove {
    Stay,
    MoveCw,
    MoveCcw,
    /// Follow the lowest-ID co-located robot, or stay when alone.
    FollowLowest,
    ClaimSettled,
    UnclaimSettled,
    Forge(ForgeKind),
}

/// Protocol-field forgeries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeKind {
    /// Claim to have been with robot 1 at the meeting point.
    WithR1,
    ClearWithR1,
    /// Announce a clockwise move intent.
    IntentCw,
    /// Announce a counter-clockwise move intent.
    IntentCcw,
    /// Expose settle records naming every currently co-located robot in
    /// every past slot.
    FillRecords,
    ClearRecords,
}

/// Per-robot script assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Script {
    /// Every Byzantine robot replays the same sequence.
    Uniform(Vec<ScriptMove>),
    /// Independent sequences per robot.
    PerRobot(BTreeMap<RobotId, Vec<ScriptMove>>),
}

impl Script {
    fn step(&self, id: RobotId, round: u32) -> ScriptMove {
        let seq = match self {
            Script::Uniform(s) => Some(s),
            Script::PerRobot(m) => m.get(&id),
        };
        seq.and_then(|s| s.get((round - 1) as usize)).copied().unwrap_or(ScriptMove::Stay)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Behaves exactly like a non-Byzantine robot.
    Honest,
    /// Races to the node where the lowest-ID unsettled honest robot is going
    /// to settle and claims it.
    Squatter,
    /// Claims to be settled at every node it wanders through.
    LiarSettler,
    /// A Byzantine robot 1 evades the sweep groups during the meeting window.
    Mirror,
    /// Byzantine leaders zigzag during the latch-on window to tear follower
    /// groups apart.
    Splitter,
    /// Up to f robots gang up, falsely claim the meeting-point pedigree, and
    /// parade the ring together.
    FalseGatherer,
    /// A Byzantine stage leader announces one direction and walks another.
    FalseIntent,
    /// Exposes forged settle records naming everyone in sight.
    StaleArray,
    Scripted(Script),
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Honest => "honest",
            StrategyKind::Squatter => "squatter",
            StrategyKind::LiarSettler => "liar_settler",
            StrategyKind::Mirror => "mirror",
            StrategyKind::Splitter => "splitter",
            StrategyKind::FalseGatherer => "false_gatherer",
            StrategyKind::FalseIntent => "false_intent",
            StrategyKind::StaleArray => "stale_array",
            StrategyKind::Scripted(_) => "scripted",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "honest" => Ok(StrategyKind::Honest),
            "squatter" => Ok(StrategyKind::Squatter),
            "liar_settler" => Ok(StrategyKind::LiarSettler),
            "mirror" => Ok(StrategyKind::Mirror),
            "splitter" => Ok(StrategyKind::Splitter),
            "false_gatherer" => Ok(StrategyKind::FalseGatherer),
            "false_intent" => Ok(StrategyKind::FalseIntent),
            "stale_array" => Ok(StrategyKind::StaleArray),
            "scripted" => Ok(StrategyKind::Scripted(Script::Uniform(Vec::new()))),
            other => Err(format!("unknown adversary strategy '{other}'")),
        }
    }
}

/// All named strategies, in the order test sweeps cycle through them.
pub fn builtin_strategies() -> Vec<StrategyKind> {
    vec![
        StrategyKind::Honest,
        StrategyKind::Squatter,
        StrategyKind::LiarSettler,
        StrategyKind::Mirror,
        StrategyKind::Splitter,
        StrategyKind::FalseGatherer,
        StrategyKind::FalseIntent,
        StrategyKind::StaleArray,
    ]
}

#[derive(Clone, Debug)]
pub struct Adversary {
    pub kind: StrategyKind,
    /// Squatter memo: predicted settle node per honest robot, filled by one
    /// frozen-adversary forward simulation when the dispersion phase starts.
    /// Predictions are deterministic, so the memo only saves re-simulation.
    squat_targets: Option<BTreeMap<RobotId, NodeRef>>,
}

impl Adversary {
    pub fn new(kind: StrategyKind) -> Self {
        Adversary { kind, squat_targets: None }
    }

    /// A single robot's decision; convenience wrapper over the joint call.
    pub fn decide(
        &mut self,
        view: &AdversaryView,
        id: RobotId,
        obs: &Observation,
        state: &mut UnexposedMemory,
    ) -> Action {
        let observations = BTreeMap::from([(id, obs.clone())]);
        let mut states = BTreeMap::from([(id, state.clone())]);
        let mut actions = self.decide_all(view, &[id], &observations, &mut states);
        *state = states.remove(&id).expect("state preserved");
        actions.remove(&id).expect("one action per robot")
    }

    /// Joint decision for every listed Byzantine robot. `states` holds their
    /// shadow protocol states, which honest-behaving strategies keep evolving.
    pub fn decide_all(
        &mut self,
        view: &AdversaryView,
        byz: &[RobotId],
        observations: &BTreeMap<RobotId, Observation>,
        states: &mut BTreeMap<RobotId, UnexposedMemory>,
    ) -> BTreeMap<RobotId, Action> {
        // The squat target is shared by all Byzantine robots this round.
        let squat = if matches!(self.kind, StrategyKind::Squatter) {
            self.squatter_target(view)
        } else {
            None
        };
        let mut actions = BTreeMap::new();
        for &id in byz {
            let obs = &observations[&id];
            let state = states.get_mut(&id).expect("shadow state per byz robot");
            let action = match &self.kind {
                StrategyKind::Honest => honest_action(view, id, obs, state),
                StrategyKind::Squatter => match squat {
                    Some(target) => squatter_action(view, id, target),
                    None => honest_action(view, id, obs, state),
                },
                StrategyKind::LiarSettler => liar_settler(view, id),
                StrategyKind::Mirror => mirror(view, id, obs, state),
                StrategyKind::Splitter => splitter(view, id, obs, state),
                StrategyKind::FalseGatherer => false_gatherer(view, id, obs, state, byz),
                StrategyKind::FalseIntent => false_intent(view, id, obs, state),
                StrategyKind::StaleArray => stale_array(view, id, obs, state),
                StrategyKind::Scripted(script) => {
                    script_action(view, id, obs, script.step(id, view.round))
                }
            };
            actions.insert(id, action);
        }
        actions
    }

    /// Where the squatter cohort is headed: the node the lowest-ID unsettled
    /// honest robot will settle on (its current node while the protocol is
    /// still gathering).
    fn squatter_target(&mut self, view: &AdversaryView) -> Option<NodeRef> {
        let victim = view
            .world
            .robots
            .iter()
            .filter(|r| !r.is_byzantine && !r.terminated && !r.settled())
            .map(|r| r.id)
            .min()?;
        if !in_dispersion_phase(view.cfg, view.round) {
            return view.world.robot(victim).map(|r| r.node);
        }
        if self.squat_targets.is_none() {
            self.squat_targets = Some(predict_settle_nodes(view));
        }
        self.squat_targets
            .as_ref()
            .and_then(|m| m.get(&victim).copied())
            .or_else(|| view.world.robot(victim).map(|r| r.node))
    }
}

/// Materializes one scripted menu entry into a concrete action. Also used by
/// the exhaustive oracle, so the menu stays the single source of the action
/// vocabulary.
pub fn script_action(view: &AdversaryView, id: RobotId, obs: &Observation, mv: ScriptMove) -> Action {
    let robot = view.world.robot(id).expect("byzantine robot exists");
    let exposed = robot.exposed.clone();
    match mv {
        ScriptMove::Stay => Action::stay(exposed),
        ScriptMove::MoveCw => {
            Action::new(exposed, Motion::Move(robot.sense.clockwise_port), None, false)
        }
        ScriptMove::MoveCcw => {
            Action::new(exposed, Motion::Move(robot.sense.counter_clockwise_port()), None, false)
        }
        ScriptMove::FollowLowest => match obs.others(id).map(|o| o.id).min() {
            Some(target) => Action::new(exposed, Motion::Follow(target), None, false),
            None => Action::stay(exposed),
        },
        ScriptMove::ClaimSettled => {
            let mut e = exposed;
            e.settled_claim = true;
            Action::stay(e)
        }
        ScriptMove::UnclaimSettled => {
            let mut e = exposed;
            e.settled_claim = false;
            Action::stay(e)
        }
        ScriptMove::Forge(kind) => {
            let mut e = exposed;
            match kind {
                ForgeKind::WithR1 => e.fields = ProtocolFields::Opt { with_r1: true },
                ForgeKind::ClearWithR1 => e.fields = ProtocolFields::Opt { with_r1: false },
                ForgeKind::IntentCw => e.move_intent = Some(robot.sense.clockwise_port),
                ForgeKind::IntentCcw => e.move_intent = Some(robot.sense.counter_clockwise_port()),
                ForgeKind::FillRecords => {
                    let everyone: std::collections::BTreeSet<RobotId> =
                        obs.colocated.iter().map(|o| o.id).collect();
                    let slots = view.round.saturating_sub(1) as usize;
                    e.fields = ProtocolFields::TimeOpt { records: vec![everyone; slots] };
                }
                ForgeKind::ClearRecords => {
                    e.fields = ProtocolFields::TimeOpt { records: Vec::new() }
                }
            }
            Action::stay(e)
        }
    }
}

fn honest_action(
    view: &AdversaryView,
    id: RobotId,
    obs: &Observation,
    state: &mut UnexposedMemory,
) -> Action {
    let robot = view.world.robot(id).expect("byzantine robot exists");
    protocols::honest_step(view.cfg, obs, robot.sense, &robot.exposed, state, id)
}

/// One step toward `target` along the shorter arc, by the engine's global
/// orientation. Ties break clockwise.
fn step_toward(view: &AdversaryView, id: RobotId, target: NodeRef) -> Motion {
    let robot = view.world.robot(id).expect("byzantine robot exists");
    let ring = &view.world.ring;
    let cw = ring.cw_distance(robot.node, target);
    if cw == 0 {
        return Motion::Stay;
    }
    let ccw = ring.n() - cw;
    let port = if cw <= ccw {
        ring.global_cw_port(robot.node)
    } else {
        1 - ring.global_cw_port(robot.node)
    };
    Motion::Move(port)
}

/// Whether the protocol is in the part of its schedule where honest robots
/// actually pick settle nodes.
fn in_dispersion_phase(cfg: &ProtocolConfig, round: u32) -> bool {
    match cfg.params {
        ProtocolParams::Rooted | ProtocolParams::TimeOpt { .. } => true,
        ProtocolParams::Opt { n, .. } => round > 3 * n + 1,
        ProtocolParams::MemOpt { n, mode } => round > gathering_rounds(&mode, n),
    }
}

/// Clones the world and plays it forward with every Byzantine robot frozen,
/// recording the node each honest robot ends up on.
fn predict_settle_nodes(view: &AdversaryView) -> BTreeMap<RobotId, NodeRef> {
    let mut world = view.world.clone();
    let mut frozen = Adversary::new(StrategyKind::Scripted(Script::Uniform(Vec::new())));
    let n = view.world.ring.n() as u32;
    let max_id = view.world.robots.iter().map(|r| r.id.0).max().unwrap_or(1);
    let dims = crate::verify::protocol_dims(&view.cfg.params, n, max_id);
    let horizon = protocols::default_horizon(&view.cfg.params, n).max(view.round);
    while world.round < horizon && !world.non_byzantine_all_terminated() {
        engine::step_round(&mut world, view.cfg, &mut frozen, &dims);
    }
    world.non_byzantine().map(|r| (r.id, r.node)).collect()
}

fn squatter_action(view: &AdversaryView, id: RobotId, target: NodeRef) -> Action {
    let robot = view.world.robot(id).expect("byzantine robot exists");
    let mut exposed = robot.exposed.clone();
    if robot.node == target {
        exposed.settled_claim = true;
        Action::stay(exposed)
    } else {
        exposed.settled_claim = false;
        Action::new(exposed, step_toward(view, id, target), None, false)
    }
}

fn liar_settler(view: &AdversaryView, id: RobotId) -> Action {
    let robot = view.world.robot(id).expect("byzantine robot exists");
    let mut exposed = robot.exposed.clone();
    exposed.settled_claim = true;
    Action::new(exposed, Motion::Move(robot.sense.clockwise_port), None, false)
}

fn mirror(
    view: &AdversaryView,
    id: RobotId,
    obs: &Observation,
    state: &mut UnexposedMemory,
) -> Action {
    let ProtocolParams::Opt { n, .. } = view.cfg.params else {
        return honest_action(view, id, obs, state);
    };
    if id != RobotId(1) || view.round <= n {
        return honest_action(view, id, obs, state);
    }
    if view.round > 2 * n + 1 {
        let robot = view.world.robot(id).expect("byzantine robot exists");
        return Action::stay(robot.exposed.clone());
    }

    // Meeting window: step wherever maximizes the distance to the nearest
    // honest sweeper.
    let ring = &view.world.ring;
    let sweepers: Vec<NodeRef> = view
        .world
        .robots
        .iter()
        .filter(|r| !r.is_byzantine && !r.terminated)
        .filter(|r| {
            matches!(
                r.unexposed,
                UnexposedMemory::Opt(ref st) if matches!(
                    st.subgroup,
                    Subgroup::LL | Subgroup::LU | Subgroup::UL | Subgroup::UU
                )
            )
        })
        .map(|r| r.node)
        .collect();
    let robot = view.world.robot(id).expect("byzantine robot exists");
    if sweepers.is_empty() {
        return Action::stay(robot.exposed.clone());
    }
    let clearance = |node: NodeRef| {
        sweepers
            .iter()
            .map(|&s| {
                let d = ring.cw_distance(node, s);
                d.min(ring.n() - d)
            })
            .min()
            .unwrap()
    };
    let here = robot.node;
    let cw_port = ring.global_cw_port(here);
    let candidates = [
        (Motion::Stay, here),
        (Motion::Move(cw_port), ring.traverse(here, cw_port).0),
        (Motion::Move(1 - cw_port), ring.traverse(here, 1 - cw_port).0),
    ];
    let (motion, _) = candidates
        .into_iter()
        .max_by_key(|&(_, node)| clearance(node))
        .expect("three candidates");
    Action::new(robot.exposed.clone(), motion, None, false)
}

fn splitter(
    view: &AdversaryView,
    id: RobotId,
    obs: &Observation,
    state: &mut UnexposedMemory,
) -> Action {
    let ProtocolParams::Opt { n, f } = view.cfg.params else {
        return honest_action(view, id, obs, state);
    };
    if id.0 > f + 1 || view.round > n {
        return honest_action(view, id, obs, state);
    }
    let robot = view.world.robot(id).expect("byzantine robot exists");
    let port = if view.round % 2 == 1 {
        robot.sense.clockwise_port
    } else {
        robot.sense.counter_clockwise_port()
    };
    Action::new(robot.exposed.clone(), Motion::Move(port), None, false)
}

fn false_gatherer(
    view: &AdversaryView,
    id: RobotId,
    obs: &Observation,
    state: &mut UnexposedMemory,
    byz: &[RobotId],
) -> Action {
    let ProtocolParams::Opt { n, .. } = view.cfg.params else {
        return honest_action(view, id, obs, state);
    };
    let robot = view.world.robot(id).expect("byzantine robot exists");
    let mut exposed = robot.exposed.clone();
    if view.round <= 2 * n + 1 {
        // Converge on the lowest Byzantine robot so the cohort can arrive at
        // later nodes together.
        let rally = byz.iter().min().and_then(|&low| view.world.robot(low)).map(|r| r.node);
        let motion = rally.map(|t| step_toward(view, id, t)).unwrap_or(Motion::Stay);
        exposed.fields = ProtocolFields::Opt { with_r1: false };
        Action::new(exposed, motion, None, false)
    } else if view.round <= 3 * n + 1 {
        exposed.fields = ProtocolFields::Opt { with_r1: true };
        let port = view.world.ring.global_cw_port(robot.node);
        Action::new(exposed, Motion::Move(port), None, false)
    } else {
        exposed.fields = ProtocolFields::Opt { with_r1: false };
        Action::stay(exposed)
    }
}

fn false_intent(
    view: &AdversaryView,
    id: RobotId,
    obs: &Observation,
    state: &mut UnexposedMemory,
) -> Action {
    let ProtocolParams::MemOpt { n, mode } = view.cfg.params else {
        return honest_action(view, id, obs, state);
    };
    let r = view.round;
    if r > gathering_rounds(&mode, n) || stage_of(r, n) != id.0 {
        return honest_action(view, id, obs, state);
    }
    let robot = view.world.robot(id).expect("byzantine robot exists");
    let mut exposed = robot.exposed.clone();
    let stage_round = r - (id.0 - 1) * n;
    if stage_round == 1 {
        // Announce the opposite of where an honest leader would go.
        exposed.move_intent = Some(robot.sense.counter_clockwise_port());
        Action::stay(exposed)
    } else {
        // Zigzag so entry-port inference misleads late joiners too.
        exposed.move_intent = Some(robot.sense.clockwise_port);
        let port = if stage_round % 2 == 0 {
            robot.sense.clockwise_port
        } else {
            robot.sense.counter_clockwise_port()
        };
        Action::new(exposed, Motion::Move(port), None, false)
    }
}

fn stale_array(
    view: &AdversaryView,
    id: RobotId,
    obs: &Observation,
    state: &mut UnexposedMemory,
) -> Action {
    if !matches!(view.cfg.params, ProtocolParams::TimeOpt { .. }) {
        return honest_action(view, id, obs, state);
    }
    let robot = view.world.robot(id).expect("byzantine robot exists");
    let mut exposed = robot.exposed.clone();
    let everyone: std::collections::BTreeSet<RobotId> =
        obs.colocated.iter().map(|o| o.id).collect();
    let slots = view.round.saturating_sub(1) as usize;
    exposed.fields = ProtocolFields::TimeOpt { records: vec![everyone; slots] };
    exposed.settled_claim = false;
    Action::new(exposed, Motion::Move(robot.sense.clockwise_port), None, false)
}
