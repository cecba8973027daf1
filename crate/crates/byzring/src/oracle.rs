//! Exhaustive adversary search for desk-scale instances: every joint
//! Byzantine action sequence from the finite scripted menu is simulated to
//! the protocol's horizon and checked, so universal claims can be verified
//! outright on tiny rings rather than sampled.
//!
//! Claims are checked incrementally while searching — the per-round record
//! claim as each round is applied, the terminal claims from the leaf world —
//! so a leaf costs no more than the rounds it simulates. A found script is
//! re-run through the full claims checker to produce its report, which also
//! confirms the counterexample reproduces.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, ForgeKind, Script, ScriptMove, StrategyKind};
use crate::bits::BitDims;
use crate::engine::{self, RobotId, RobotSpec, WorldState};
use crate::protocols::{ProtocolConfig, ProtocolParams};
use crate::ring::Ring;
use crate::verify::{self, VerificationReport};

/// The per-round menu available to each Byzantine robot under the given
/// protocol: the common moves plus the protocol's forgery entries.
pub fn oracle_menu(params: &ProtocolParams) -> Vec<ScriptMove> {
    let mut menu = vec![
        ScriptMove::Stay,
        ScriptMove::MoveCw,
        ScriptMove::MoveCcw,
        ScriptMove::FollowLowest,
        ScriptMove::ClaimSettled,
        ScriptMove::UnclaimSettled,
    ];
    match params {
        ProtocolParams::Rooted => {}
        ProtocolParams::Opt { .. } => {
            menu.push(ScriptMove::Forge(ForgeKind::WithR1));
            menu.push(ScriptMove::Forge(ForgeKind::ClearWithR1));
        }
        ProtocolParams::MemOpt { .. } => {
            menu.push(ScriptMove::Forge(ForgeKind::IntentCw));
            menu.push(ScriptMove::Forge(ForgeKind::IntentCcw));
        }
        ProtocolParams::TimeOpt { .. } => {
            menu.push(ScriptMove::Forge(ForgeKind::FillRecords));
            menu.push(ScriptMove::Forge(ForgeKind::ClearRecords));
        }
    }
    menu
}

#[derive(Clone, Debug)]
pub struct OracleSpec {
    pub cfg: ProtocolConfig,
    pub ring: Ring,
    pub robots: Vec<RobotSpec>,
    pub horizon: u32,
    /// Cap on total simulated rounds across the whole search.
    pub budget: u64,
}

impl OracleSpec {
    fn dims(&self) -> BitDims {
        let max_id = self.robots.iter().map(|r| r.id.0).max().unwrap_or(1);
        verify::protocol_dims(&self.cfg.params, self.ring.n() as u32, max_id)
    }

    fn byz_ids(&self) -> Vec<RobotId> {
        self.robots.iter().filter(|r| r.is_byzantine).map(|r| r.id).collect()
    }

    pub fn world(&self) -> WorldState {
        WorldState::new(self.ring.clone(), self.robots.clone(), &self.cfg)
            .expect("oracle spec builds a valid world")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Counterexample {
    pub script: BTreeMap<RobotId, Vec<ScriptMove>>,
    pub report: VerificationReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleResult {
    pub worst_case_ok: bool,
    pub counterexample: Option<Counterexample>,
    /// Total rounds simulated over all explored branches.
    pub states_explored: u64,
    /// False when the round budget cut the search short.
    pub complete: bool,
}

struct Search<'a> {
    spec: &'a OracleSpec,
    dims: BitDims,
    byz: Vec<RobotId>,
    menu: Vec<ScriptMove>,
    rounds: AtomicU64,
    exhausted: AtomicU64, // 0 = within budget, 1 = budget hit
    best_branch: AtomicU64,
}

impl<'a> Search<'a> {
    fn joint(&self, index: usize) -> Vec<ScriptMove> {
        let mut idx = index;
        let mut moves = Vec::with_capacity(self.byz.len());
        for _ in 0..self.byz.len() {
            moves.push(self.menu[idx % self.menu.len()]);
            idx /= self.menu.len();
        }
        moves
    }

    fn joint_count(&self) -> usize {
        self.menu.len().pow(self.byz.len() as u32)
    }

    /// Runs one engine round under the scripts and checks the per-round
    /// claims; a violation makes the current prefix a counterexample.
    fn step_checked(
        &self,
        world: &mut WorldState,
        scripts: &BTreeMap<RobotId, Vec<ScriptMove>>,
    ) -> bool {
        let pre = if matches!(self.spec.cfg.params, ProtocolParams::TimeOpt { .. }) {
            Some(snapshot_timeopt(world))
        } else {
            None
        };
        let mut adv = Adversary::new(StrategyKind::Scripted(Script::PerRobot(scripts.clone())));
        engine::step_round(world, &self.spec.cfg, &mut adv, &self.dims);
        match pre {
            Some(pre) => timeopt_round_violated(&pre, world),
            None => false,
        }
    }

    /// Terminal claims once every honest robot terminated or the horizon ran
    /// out: dispersion plus the protocol's exact-termination requirement.
    fn leaf_violated(&self, world: &WorldState) -> bool {
        if !verify::check_dispersion(world) {
            return true;
        }
        match self.spec.cfg.params {
            // Settling implies terminating by the horizon for these; reaching
            // the leaf with everyone terminated within the horizon suffices.
            ProtocolParams::Rooted | ProtocolParams::Opt { .. } | ProtocolParams::MemOpt { .. } => {
                false
            }
            ProtocolParams::TimeOpt { .. } => {
                world.non_byzantine().any(|r| !r.settled())
            }
        }
    }

    fn dfs(
        &self,
        branch: u64,
        world: &WorldState,
        scripts: &mut BTreeMap<RobotId, Vec<ScriptMove>>,
    ) -> Option<BTreeMap<RobotId, Vec<ScriptMove>>> {
        if branch > self.best_branch.load(Ordering::Relaxed) {
            return None; // a lexicographically earlier branch already found one
        }
        if world.non_byzantine_all_terminated() || world.round >= self.spec.horizon {
            return self.leaf_violated(world).then(|| scripts.clone());
        }
        // Distinct menu choices often produce identical worlds (claiming an
        // already-claimed flag, following when alone, ...). Everything below
        // a node depends only on the world, so duplicate children collapse.
        let mut seen_children: BTreeSet<u128> = BTreeSet::new();
        for idx in 0..self.joint_count() {
            if self.rounds.fetch_add(1, Ordering::Relaxed) >= self.spec.budget {
                self.exhausted.store(1, Ordering::Relaxed);
                return None;
            }
            for (robot, mv) in self.byz.iter().zip(self.joint(idx)) {
                scripts.get_mut(robot).expect("script per byz robot").push(mv);
            }
            let mut next = world.clone();
            let found = if self.step_checked(&mut next, scripts) {
                Some(scripts.clone())
            } else if seen_children.insert(world_fingerprint(&next, &self.dims)) {
                self.dfs(branch, &next, scripts)
            } else {
                None
            };
            for robot in &self.byz {
                scripts.get_mut(robot).expect("script per byz robot").pop();
            }
            if found.is_some() {
                return found;
            }
        }
        None
    }
}

/// 128-bit fingerprint of everything behavior-relevant in a world state,
/// for child deduplication: the round counter plus each robot's node, sense,
/// liveness, entry port, exposed memory, and private state, all in the
/// canonical bit encoding (injective for the values the menu can produce).
fn world_fingerprint(world: &WorldState, dims: &BitDims) -> u128 {
    let mut w = crate::bits::BitWriter::new();
    let node_width = crate::bits::width_for_max(world.ring.n().saturating_sub(1) as u64);
    w.write_bits(world.round as u64, 32);
    for r in &world.robots {
        w.write_bits(r.node.0 as u64, node_width);
        w.write_bits(r.sense.clockwise_port as u64, 1);
        w.write_bool(r.terminated);
        w.write_option(r.entered_via, |w, p| w.write_bits(p as u64, 1));
        verify::write_exposed(&mut w, &r.exposed, dims);
        verify::write_unexposed(&mut w, &r.unexposed, dims);
    }
    w.fnv1a128()
}

/// Pre-round data for the per-round record claim.
struct TimeOptSnapshot {
    nodes: BTreeMap<RobotId, usize>,
    claims: BTreeMap<RobotId, bool>,
    records: BTreeMap<RobotId, Vec<BTreeSet<RobotId>>>,
    round: u32,
}

fn snapshot_timeopt(world: &WorldState) -> TimeOptSnapshot {
    let mut nodes = BTreeMap::new();
    let mut claims = BTreeMap::new();
    let mut records = BTreeMap::new();
    for r in world.robots.iter().filter(|r| !r.terminated) {
        nodes.insert(r.id, r.node.0);
        claims.insert(r.id, r.exposed.settled_claim);
        records.insert(r.id, r.exposed.timeopt_records().cloned().unwrap_or_default());
    }
    TimeOptSnapshot { nodes, claims, records, round: world.round + 1 }
}

/// An honest robot that stayed active this round must have recorded some
/// robot it does not yet consider Byzantine in the slot it just wrote.
fn timeopt_round_violated(pre: &TimeOptSnapshot, world: &WorldState) -> bool {
    let k = pre.round;
    for r in world.robots.iter().filter(|r| !r.is_byzantine) {
        let Some(&node) = pre.nodes.get(&r.id) else { continue };
        if pre.claims[&r.id] || r.settled() {
            continue;
        }
        let here: BTreeSet<RobotId> = pre
            .nodes
            .iter()
            .filter(|&(_, &v)| v == node)
            .map(|(&id, _)| id)
            .collect();
        let mut b = BTreeSet::new();
        for slot in pre.records[&r.id].iter().take(k.saturating_sub(1) as usize) {
            b.extend(slot.iter().filter(|id| here.contains(id)).copied());
        }
        let slot = r
            .exposed
            .timeopt_records()
            .and_then(|rec| rec.get((k - 1) as usize))
            .cloned()
            .unwrap_or_default();
        if slot.is_empty() || !slot.iter().any(|id| !b.contains(id)) {
            return true;
        }
    }
    false
}

/// Depth-first enumeration of all joint Byzantine action sequences up to the
/// horizon. Reports the lexicographically first counterexample script, or
/// `worst_case_ok` when every execution passes every claim.
pub fn exhaustive_oracle(spec: &OracleSpec) -> OracleResult {
    let search = Search {
        spec,
        dims: spec.dims(),
        byz: spec.byz_ids(),
        menu: oracle_menu(&spec.cfg.params),
        rounds: AtomicU64::new(0),
        exhausted: AtomicU64::new(0),
        best_branch: AtomicU64::new(u64::MAX),
    };
    let initial = spec.world();

    let script = if search.byz.is_empty() {
        // No Byzantine robots: exactly one execution.
        let mut world = initial.clone();
        let mut scripts = BTreeMap::new();
        let mut violated = false;
        while !world.non_byzantine_all_terminated() && world.round < spec.horizon {
            search.rounds.fetch_add(1, Ordering::Relaxed);
            if search.step_checked(&mut world, &scripts) {
                violated = true;
                break;
            }
        }
        (violated || search.leaf_violated(&world)).then(|| std::mem::take(&mut scripts))
    } else {
        // Expand and deduplicate the first round's joint choices up front,
        // then fan the surviving branches out across threads; each explores
        // its subtree depth-first in menu order.
        let mut branches: Vec<(u64, WorldState, BTreeMap<RobotId, Vec<ScriptMove>>)> = Vec::new();
        let mut seen: BTreeSet<u128> = BTreeSet::new();
        let mut first_violation: Option<BTreeMap<RobotId, Vec<ScriptMove>>> = None;
        for idx in 0..search.joint_count() {
            if search.rounds.fetch_add(1, Ordering::Relaxed) >= spec.budget {
                search.exhausted.store(1, Ordering::Relaxed);
                break;
            }
            let mut scripts: BTreeMap<RobotId, Vec<ScriptMove>> =
                search.byz.iter().map(|&id| (id, Vec::new())).collect();
            for (robot, mv) in search.byz.iter().zip(search.joint(idx)) {
                scripts.get_mut(robot).expect("script per byz robot").push(mv);
            }
            let mut world = initial.clone();
            if search.step_checked(&mut world, &scripts) {
                first_violation = Some(scripts);
                break;
            }
            if seen.insert(world_fingerprint(&world, &search.dims)) {
                branches.push((idx as u64, world, scripts));
            }
        }
        match first_violation {
            Some(script) => Some(script),
            None => {
                let found: Vec<(u64, BTreeMap<RobotId, Vec<ScriptMove>>)> = branches
                    .into_par_iter()
                    .filter_map(|(branch, world, mut scripts)| {
                        if branch > search.best_branch.load(Ordering::Relaxed) {
                            return None;
                        }
                        let found = search.dfs(branch, &world, &mut scripts);
                        if found.is_some() {
                            search.best_branch.fetch_min(branch, Ordering::Relaxed);
                        }
                        found.map(|script| (branch, script))
                    })
                    .collect();
                found.into_iter().min_by_key(|(branch, _)| *branch).map(|(_, script)| script)
            }
        }
    };

    let counterexample = script.map(|script| {
        let (_trace, report) = run_script(spec, &script);
        Counterexample { script, report }
    });
    OracleResult {
        worst_case_ok: counterexample.is_none(),
        counterexample,
        states_explored: search.rounds.load(Ordering::Relaxed),
        complete: search.exhausted.load(Ordering::Relaxed) == 0,
    }
}

/// The canonical instance family for an exhaustive check at (n, f): every
/// Byzantine subset of size at most f, over the canonical placements —
/// all robots gathered on one node, plus one robot per node for protocols
/// that start from arbitrary positions.
pub fn standard_instances(
    n: u32,
    f: u32,
    params: ProtocolParams,
    mutation: crate::protocols::Mutation,
    budget: u64,
) -> Vec<OracleSpec> {
    let cfg = ProtocolConfig { params, mutation };
    let ring = Ring::build(n as usize, crate::ring::PortScheme::LowerIsCwEverywhere)
        .expect("instances have at least one node");
    let placements: Vec<Vec<usize>> = if matches!(params, ProtocolParams::Rooted) {
        vec![vec![0; n as usize]]
    } else {
        vec![(0..n as usize).collect(), vec![0; n as usize]]
    };
    let horizon = crate::protocols::default_horizon(&params, n);
    let mut specs = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() > f {
            continue;
        }
        for placement in &placements {
            let robots: Vec<RobotSpec> = (1..=n)
                .map(|id| RobotSpec {
                    id: RobotId(id),
                    node: crate::ring::NodeRef(placement[(id - 1) as usize]),
                    is_byzantine: mask & (1 << (id - 1)) != 0,
                })
                .collect();
            specs.push(OracleSpec { cfg, ring: ring.clone(), robots, horizon, budget });
        }
    }
    specs
}

/// Re-runs one specific joint script to its horizon through the full claims
/// checker. Used to confirm that a reported counterexample reproduces.
pub fn run_script(
    spec: &OracleSpec,
    script: &BTreeMap<RobotId, Vec<ScriptMove>>,
) -> (engine::Trace, VerificationReport) {
    let dims = spec.dims();
    let mut world = spec.world();
    let mut adv = Adversary::new(StrategyKind::Scripted(Script::PerRobot(script.clone())));
    let trace = engine::run(&mut world, &spec.cfg, &mut adv, &dims, spec.horizon);
    let report = verify::check_claims(&trace, &spec.cfg).expect("recorded trace replays");
    (trace, report)
}
