//! Synchronous round engine.
//!
//! Each round runs three tasks in order: (i) every robot snapshots the
//! exposed memories of its co-located peers, (ii) exposed-memory updates are
//! applied simultaneously, (iii) motions are applied simultaneously, with
//! follow chains resolved to the transitive target's edge. Observations are
//! taken from the pre-round state, so no write or move of round k is ever
//! visible within round k.

pub mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, AdversaryView};
use crate::bits::BitDims;
use crate::protocols::{self, ProtocolConfig, UnexposedMemory};
use crate::ring::{initial_sense, propagate_sense, NodeRef, PortLabel, Ring, SenseOfDirection};
use crate::verify;

pub use trace::{replay, RobotRecord, RoundRecord, Trace};

/// Robot identifier. Unique and immutable: the engine rejects any attempt
/// to write a different id into exposed memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub u32);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Protocol-specific exposed slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolFields {
    None,
    /// Claim of having been co-located with robot 1 at the end of the
    /// meeting window; read by waiting robots during the collection sweep.
    Opt { with_r1: bool },
    /// Per-round settle records: `records[k-1]` holds the IDs this robot
    /// computed as settling at the node it occupied in round `k`. Slot 0 of
    /// the conventional array is the settled flag, carried here by
    /// `ExposedMemory::settled_claim`.
    TimeOpt { records: Vec<BTreeSet<RobotId>> },
}

/// Memory readable by all co-located robots. Writable by its owner only
/// during task (ii); the id field is immutable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposedMemory {
    pub id: RobotId,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub settled_claim: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow_target: Option<RobotId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub move_intent: Option<PortLabel>,
    pub fields: ProtocolFields,
}

impl ExposedMemory {
    pub fn new(id: RobotId, fields: ProtocolFields) -> Self {
        ExposedMemory { id, settled_claim: false, follow_target: None, move_intent: None, fields }
    }

    pub fn timeopt_records(&self) -> Option<&Vec<BTreeSet<RobotId>>> {
        match &self.fields {
            ProtocolFields::TimeOpt { records } => Some(records),
            _ => None,
        }
    }

    pub fn opt_with_r1(&self) -> bool {
        matches!(self.fields, ProtocolFields::Opt { with_r1: true })
    }
}

/// One co-located robot as seen during task (i). `entered_via` is the local
/// port the robot arrived through if it moved in the immediately preceding
/// motion phase.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedRobot {
    pub id: RobotId,
    pub exposed: ExposedMemory,
    pub entered_via: Option<PortLabel>,
}

/// Everything a robot perceives in one round: the two local port labels and
/// the exposed memories of all co-located, non-terminated robots (itself
/// included). Carries no node identity and no Byzantine flags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub round: u32,
    pub local_ports: [PortLabel; 2],
    pub colocated: Vec<ObservedRobot>,
}

impl Observation {
    pub fn contains(&self, id: RobotId) -> bool {
        self.colocated.iter().any(|r| r.id == id)
    }

    pub fn robot(&self, id: RobotId) -> Option<&ObservedRobot> {
        self.colocated.iter().find(|r| r.id == id)
    }

    /// Co-located robots other than `me`.
    pub fn others(&self, me: RobotId) -> impl Iterator<Item = &ObservedRobot> {
        self.colocated.iter().filter(move |r| r.id != me)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Stay,
    Move(PortLabel),
    Follow(RobotId),
}

/// One robot's decision for a round. `set_sense` lets a protocol redefine its
/// clockwise port before moving (the sense reset, or the direction adopted
/// from a majority-entry-port inference); the engine then keeps the sense
/// consistent across the move.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub exposed: ExposedMemory,
    pub motion: Motion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_sense: Option<PortLabel>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub terminate: bool,
}

impl Action {
    /// Builds an action, mirroring follow targets into exposed memory.
    pub fn new(
        mut exposed: ExposedMemory,
        motion: Motion,
        set_sense: Option<PortLabel>,
        terminate: bool,
    ) -> Self {
        exposed.follow_target = match motion {
            Motion::Follow(t) => Some(t),
            _ => None,
        };
        Action { exposed, motion, set_sense, terminate }
    }

    pub fn stay(exposed: ExposedMemory) -> Self {
        Action::new(exposed, Motion::Stay, None, false)
    }
}

/// Full engine-side state of one robot. `is_byzantine` and `node` are never
/// surfaced to protocol code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: RobotId,
    pub node: NodeRef,
    pub sense: SenseOfDirection,
    pub exposed: ExposedMemory,
    pub unexposed: UnexposedMemory,
    pub terminated: bool,
    pub is_byzantine: bool,
    pub entered_via: Option<PortLabel>,
}

impl RobotState {
    pub fn settled(&self) -> bool {
        self.exposed.settled_claim
    }
}

/// Initial description of one robot when constructing a world.
#[derive(Clone, Debug)]
pub struct RobotSpec {
    pub id: RobotId,
    pub node: NodeRef,
    pub is_byzantine: bool,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown robot id {0}")]
    UnknownRobot(RobotId),
    #[error("robot {0} has terminated")]
    RobotTerminated(RobotId),
    #[error("duplicate robot id {0}")]
    DuplicateId(RobotId),
    #[error("robot {id} placed on node {node}, outside ring of {n} nodes")]
    NodeOutOfRange { id: RobotId, node: usize, n: usize },
}

/// The engine's single source of truth: ring, all robot states, and the
/// number of completed rounds. Robots are kept sorted by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub ring: Ring,
    pub robots: Vec<RobotState>,
    pub round: u32,
}

impl WorldState {
    pub fn new(ring: Ring, specs: Vec<RobotSpec>, cfg: &ProtocolConfig) -> Result<Self, EngineError> {
        let mut specs = specs;
        specs.sort_by_key(|s| s.id);
        let mut robots = Vec::with_capacity(specs.len());
        for s in specs {
            if robots.iter().any(|r: &RobotState| r.id == s.id) {
                return Err(EngineError::DuplicateId(s.id));
            }
            if s.node.0 >= ring.n() {
                return Err(EngineError::NodeOutOfRange { id: s.id, node: s.node.0, n: ring.n() });
            }
            robots.push(RobotState {
                id: s.id,
                node: s.node,
                sense: initial_sense(&ring, s.node),
                exposed: protocols::initial_exposed(cfg, s.id),
                unexposed: protocols::initial_unexposed(cfg),
                terminated: false,
                is_byzantine: s.is_byzantine,
                entered_via: None,
            });
        }
        Ok(WorldState { ring, robots, round: 0 })
    }

    fn idx_of(&self, id: RobotId) -> Option<usize> {
        self.robots.binary_search_by_key(&id, |r| r.id).ok()
    }

    pub fn robot(&self, id: RobotId) -> Option<&RobotState> {
        self.idx_of(id).map(|i| &self.robots[i])
    }

    pub fn robot_mut(&mut self, id: RobotId) -> Option<&mut RobotState> {
        self.idx_of(id).map(move |i| &mut self.robots[i])
    }

    pub fn non_byzantine(&self) -> impl Iterator<Item = &RobotState> {
        self.robots.iter().filter(|r| !r.is_byzantine)
    }

    pub fn non_byzantine_all_terminated(&self) -> bool {
        self.non_byzantine().all(|r| r.terminated)
    }
}

/// Irregularities recorded in the trace. Non-Byzantine controllers are
/// expected to never trigger one; Byzantine ones may.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    IdMutationRejected,
    InvalidPort,
    FollowNotColocated,
    FollowTargetTerminated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineEvent {
    pub robot: RobotId,
    pub kind: EventKind,
}

/// Builds the task-(i) observation for one robot from the pre-round state.
/// Terminated robots are invisible; the robot itself is included.
pub fn make_observation(world: &WorldState, id: RobotId) -> Result<Observation, EngineError> {
    let me = world.robot(id).ok_or(EngineError::UnknownRobot(id))?;
    if me.terminated {
        return Err(EngineError::RobotTerminated(id));
    }
    Ok(observe(world, me))
}

fn observe(world: &WorldState, me: &RobotState) -> Observation {
    let colocated = world
        .robots
        .iter()
        .filter(|r| !r.terminated && r.node == me.node)
        .map(|r| ObservedRobot { id: r.id, exposed: r.exposed.clone(), entered_via: r.entered_via })
        .collect();
    Observation {
        round: world.round + 1,
        local_ports: world.ring.local_ports(me.node),
        colocated,
    }
}

/// Resolves follow chains to concrete motions. A follower traverses the same
/// edge as its (transitive) target, which is well-defined because follower
/// and target share a node. Cycles, including self-follows, resolve to stay;
/// following a robot that terminates this round resolves to stay and records
/// an event.
pub fn resolve_follows(
    motions: &BTreeMap<RobotId, Motion>,
    terminating: &BTreeSet<RobotId>,
) -> (BTreeMap<RobotId, Option<PortLabel>>, Vec<EngineEvent>) {
    let mut resolved: BTreeMap<RobotId, Option<PortLabel>> = BTreeMap::new();
    let mut events = Vec::new();
    for (&start, _) in motions {
        if resolved.contains_key(&start) {
            continue;
        }
        let mut path: Vec<RobotId> = Vec::new();
        let mut cur = start;
        let outcome: Option<PortLabel> = loop {
            if let Some(&done) = resolved.get(&cur) {
                break done;
            }
            if path.contains(&cur) {
                break None; // cycle: everyone in it stays
            }
            match motions.get(&cur) {
                None | Some(Motion::Stay) => break None,
                Some(Motion::Move(p)) => break Some(*p),
                Some(Motion::Follow(t)) => {
                    if terminating.contains(t) {
                        events.push(EngineEvent { robot: cur, kind: EventKind::FollowTargetTerminated });
                        break None;
                    }
                    path.push(cur);
                    cur = *t;
                }
            }
        };
        for id in path {
            resolved.insert(id, outcome);
        }
        resolved.insert(start, outcome);
    }
    (resolved, events)
}

/// Applies one round's worth of already-decided actions: validation, exposed
/// writes, follow resolution, simultaneous motion, sense propagation, and
/// termination, producing the round's trace record. Shared by the live
/// engine and by trace replay.
pub(crate) fn apply_actions(
    world: &mut WorldState,
    actions: &BTreeMap<RobotId, Action>,
    dims: &BitDims,
    hash: bool,
    mem: bool,
) -> RoundRecord {
    let round = world.round + 1;
    let mut events: Vec<EngineEvent> = Vec::new();

    // Validation against the pre-round state.
    let mut motions: BTreeMap<RobotId, Motion> = BTreeMap::new();
    let mut terminating: BTreeSet<RobotId> = BTreeSet::new();
    for (&id, action) in actions {
        let robot = match world.robot(id) {
            Some(r) if !r.terminated => r,
            _ => continue,
        };
        let mut motion = action.motion;
        match motion {
            Motion::Move(p) if p > 1 => {
                events.push(EngineEvent { robot: id, kind: EventKind::InvalidPort });
                motion = Motion::Stay;
            }
            Motion::Follow(t) => {
                let ok = world
                    .robot(t)
                    .map(|tr| !tr.terminated && tr.node == robot.node)
                    .unwrap_or(false);
                if !ok {
                    events.push(EngineEvent { robot: id, kind: EventKind::FollowNotColocated });
                    motion = Motion::Stay;
                }
            }
            _ => {}
        }
        motions.insert(id, motion);
        if action.terminate {
            terminating.insert(id);
        }
    }

    // Task (ii): exposed writes and sense updates, all simultaneous.
    for (&id, action) in actions {
        let Some(idx) = world.idx_of(id) else { continue };
        if world.robots[idx].terminated {
            continue;
        }
        let mut exposed = action.exposed.clone();
        if exposed.id != id {
            events.push(EngineEvent { robot: id, kind: EventKind::IdMutationRejected });
            exposed.id = id;
        }
        world.robots[idx].exposed = exposed;
        if let Some(p) = action.set_sense {
            if p > 1 {
                events.push(EngineEvent { robot: id, kind: EventKind::InvalidPort });
            } else {
                world.robots[idx].sense = SenseOfDirection { clockwise_port: p };
            }
        }
    }

    // Task (iii): resolve follows, then move everyone at once.
    let (resolved, follow_events) = resolve_follows(&motions, &terminating);
    events.extend(follow_events);
    let mut record_motions: BTreeMap<RobotId, trace::ResolvedMotion> = BTreeMap::new();
    for (&id, &via) in &resolved {
        let Some(idx) = world.idx_of(id) else { continue };
        match via {
            None => {
                world.robots[idx].entered_via = None;
                record_motions.insert(id, trace::ResolvedMotion::Stay);
            }
            Some(p) => {
                let (dest, entry) = world.ring.traverse(world.robots[idx].node, p);
                let r = &mut world.robots[idx];
                r.sense = propagate_sense(r.sense, p, entry);
                r.node = dest;
                r.entered_via = Some(entry);
                record_motions.insert(id, trace::ResolvedMotion::Moved { via: p, entry });
            }
        }
    }
    for &id in &terminating {
        if let Some(r) = world.robot_mut(id) {
            r.terminated = true;
        }
    }
    world.round = round;

    let robots = world
        .robots
        .iter()
        .map(|r| {
            let acted = actions.get(&r.id).filter(|_| record_motions.contains_key(&r.id));
            RobotRecord {
                id: r.id,
                node: r.node.0,
                motion: record_motions.get(&r.id).copied().unwrap_or(trace::ResolvedMotion::Stay),
                exposed_hash: if hash { verify::exposed_hash(&r.exposed, dims) } else { 0 },
                mem_bits: if mem { verify::measure_memory_bits(r, dims) } else { 0 },
                was_terminated: acted.is_none(),
                action: acted.cloned(),
            }
        })
        .collect();
    RoundRecord { round, robots, events }
}

/// Executes one full round: observation snapshots, honest protocol decisions,
/// the adversary's joint decision for all Byzantine robots, then application.
pub fn step_round(
    world: &mut WorldState,
    cfg: &ProtocolConfig,
    adversary: &mut Adversary,
    dims: &BitDims,
) -> RoundRecord {
    let round = world.round + 1;
    let mut observations: BTreeMap<RobotId, Observation> = BTreeMap::new();
    for r in world.robots.iter().filter(|r| !r.terminated) {
        observations.insert(r.id, observe(world, r));
    }

    let mut actions: BTreeMap<RobotId, Action> = BTreeMap::new();
    let mut new_states: Vec<(RobotId, UnexposedMemory)> = Vec::new();
    for r in world.robots.iter().filter(|r| !r.terminated && !r.is_byzantine) {
        let mut state = r.unexposed.clone();
        let action =
            protocols::honest_step(cfg, &observations[&r.id], r.sense, &r.exposed, &mut state, r.id);
        actions.insert(r.id, action);
        new_states.push((r.id, state));
    }

    let byz_ids: Vec<RobotId> =
        world.robots.iter().filter(|r| !r.terminated && r.is_byzantine).map(|r| r.id).collect();
    if !byz_ids.is_empty() {
        let mut byz_states: BTreeMap<RobotId, UnexposedMemory> = byz_ids
            .iter()
            .map(|&id| (id, world.robot(id).unwrap().unexposed.clone()))
            .collect();
        let view = AdversaryView { world, cfg, round };
        let byz_actions = adversary.decide_all(&view, &byz_ids, &observations, &mut byz_states);
        for (id, a) in byz_actions {
            actions.insert(id, a);
        }
        for (id, st) in byz_states {
            new_states.push((id, st));
        }
    }

    for (id, st) in new_states {
        if let Some(r) = world.robot_mut(id) {
            r.unexposed = st;
        }
    }
    apply_actions(world, &actions, dims, true, true)
}

/// Steps until every non-Byzantine robot has terminated or `max_rounds`
/// rounds have run, collecting the full replayable trace.
pub fn run(
    world: &mut WorldState,
    cfg: &ProtocolConfig,
    adversary: &mut Adversary,
    dims: &BitDims,
    max_rounds: u32,
) -> Trace {
    let initial = world.clone();
    let mut rounds = Vec::new();
    for _ in 0..max_rounds {
        if world.non_byzantine_all_terminated() {
            break;
        }
        rounds.push(step_round(world, cfg, adversary, dims));
    }
    Trace { dims: dims.clone(), initial, rounds }
}

#[cfg(test)]
mod tests;
