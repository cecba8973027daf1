//! Trace verification: the dispersion predicate, per-protocol claim checks,
//! and bit-exact memory accounting.
//!
//! # Memory accounting
//!
//! A robot's footprint is the canonical bit serialization of its exposed
//! memory (minus the immutable id), its private protocol state, and one bit
//! of sense, using the fixed widths from [`BitDims`]: values bounded by the
//! node count take `width_for_max(n)` bits, IDs take `width_for_max(max_id)`
//! bits, round counters take `width_for_max(horizon)` bits, and ID sets are
//! a count plus their members in ascending order. Constants a protocol
//! requires the robot to know (n, the fault bound, the ID-range bound) are
//! charged at the same widths. The declared envelope factor is
//! [`MEMORY_BOUND_FACTOR`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bits::{width_for_max, BitDims, BitWriter};
use crate::engine::trace::{ReplayError, Trace, TraceWalker};
use crate::engine::{ExposedMemory, ProtocolFields, RobotId, RobotState, WorldState};
use crate::protocols::{
    default_horizon, gathering_rounds, gathering_stages, MemOptMode, OptState, ProtocolConfig,
    ProtocolParams, RootedPhase, RootedState, Subgroup, TimeOptState, UnexposedMemory,
};
use crate::ring::SenseOfDirection;

/// Envelope factor for the per-robot memory bounds: states of the walking
/// protocols must fit `C * ceil(log2 n)` bits and the record-keeping
/// protocol `C * n * ceil(log2 n)` bits (with the log term floored at 1,
/// which keeps the bound meaningful on one- and two-node rings where it is
/// dominated by fixed per-field overhead).
pub const MEMORY_BOUND_FACTOR: u32 = 64;

pub fn ceil_log2(n: u32) -> u32 {
    if n <= 1 {
        0
    } else {
        width_for_max((n - 1) as u64)
    }
}

/// The memory budget a robot of the given protocol gets on an n-node ring.
pub fn memory_bound_bits(params: &ProtocolParams, n: u32) -> u64 {
    let w = ceil_log2(n).max(1) as u64;
    let c = MEMORY_BOUND_FACTOR as u64;
    match params {
        ProtocolParams::TimeOpt { .. } => c * n as u64 * w,
        _ => c * w,
    }
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

/// Serializes exposed memory, excluding the immutable id.
pub fn write_exposed(w: &mut BitWriter, e: &ExposedMemory, d: &BitDims) {
    w.write_bool(e.settled_claim);
    w.write_option(e.follow_target, |w, t| w.write_bits(t.0 as u64, d.id_width()));
    w.write_option(e.move_intent, |w, p| w.write_bits(p as u64, 1));
    match &e.fields {
        ProtocolFields::None => w.write_bits(0, 2),
        ProtocolFields::Opt { with_r1 } => {
            w.write_bits(1, 2);
            w.write_bool(*with_r1);
        }
        ProtocolFields::TimeOpt { records } => {
            w.write_bits(2, 2);
            w.write_bits(records.len() as u64, d.round_width());
            for slot in records {
                w.write_bits(slot.len() as u64, d.count_width());
                for id in slot {
                    w.write_bits(id.0 as u64, d.id_width());
                }
            }
        }
    }
}

std::thread_local! {
    // Hashing and measuring run once per robot per round; reusing one buffer
    // per thread keeps them allocation-free.
    static SCRATCH: std::cell::RefCell<BitWriter> = std::cell::RefCell::new(BitWriter::new());
}

pub fn exposed_hash(e: &ExposedMemory, d: &BitDims) -> u64 {
    SCRATCH.with(|w| {
        let mut w = w.borrow_mut();
        w.clear();
        write_exposed(&mut w, e, d);
        w.fnv1a64()
    })
}

fn write_rooted(w: &mut BitWriter, st: &RootedState, d: &BitDims) {
    w.write_bits(
        match st.phase {
            RootedPhase::RankCount => 0,
            RootedPhase::Walking => 1,
            RootedPhase::Settled => 2,
        },
        2,
    );
    w.write_bits(st.rank as u64, d.count_width());
    w.write_bits(st.steps_taken as u64, d.count_width());
    w.write_bits(st.round as u64, d.round_width());
}

fn write_opt(w: &mut BitWriter, st: &OptState, d: &BitDims) {
    w.write_bits(st.round as u64, d.round_width());
    w.write_option(st.leader, |w, l| w.write_bits(l.0 as u64, d.id_width()));
    w.write_bits(
        match st.subgroup {
            Subgroup::Unassigned => 0,
            Subgroup::R1 => 1,
            Subgroup::WithR1 => 2,
            Subgroup::Small => 3,
            Subgroup::LL => 4,
            Subgroup::LU => 5,
            Subgroup::UL => 6,
            Subgroup::UU => 7,
        },
        3,
    );
    w.write_bool(st.met_r1);
    w.write_bool(st.was_with_r1);
    w.write_bool(st.sweeping);
    w.write_bool(st.waiting);
    w.write_option(st.rooted.as_ref(), |w, r| write_rooted(w, r, d));
    // Known constants: n and the fault bound.
    w.write_bits(d.n as u64, d.count_width());
    w.write_bits(0, d.count_width());
}

fn write_memopt(w: &mut BitWriter, st: &crate::protocols::MemOptState, d: &BitDims) {
    w.write_bits(st.round as u64, d.round_width());
    w.write_bool(st.following_leader);
    w.write_option(st.rooted.as_ref(), |w, r| write_rooted(w, r, d));
    // Known constants: n and the stage budget (f or the ID-range bound).
    w.write_bits(d.n as u64, d.count_width());
    w.write_bits(0, 2);
    w.write_bits(0, d.id_width());
}

fn write_timeopt(w: &mut BitWriter, st: &TimeOptState, d: &BitDims) {
    w.write_bits(st.round as u64, d.round_width());
    w.write_option(st.settled_round, |w, r| w.write_bits(r as u64, d.round_width()));
    w.write_bits(d.n as u64, d.count_width());
}

pub fn write_unexposed(w: &mut BitWriter, u: &UnexposedMemory, d: &BitDims) {
    match u {
        UnexposedMemory::Idle => w.write_bits(0, 3),
        UnexposedMemory::Rooted(st) => {
            w.write_bits(1, 3);
            write_rooted(w, st, d);
        }
        UnexposedMemory::Opt(st) => {
            w.write_bits(2, 3);
            write_opt(w, st, d);
        }
        UnexposedMemory::MemOpt(st) => {
            w.write_bits(3, 3);
            write_memopt(w, st, d);
        }
        UnexposedMemory::TimeOpt(st) => {
            w.write_bits(4, 3);
            write_timeopt(w, st, d);
        }
    }
}

/// Exact serialized size of one robot's working memory: exposed (minus id)
/// plus private state plus the one-bit sense.
pub fn measure_memory_bits(r: &RobotState, d: &BitDims) -> u32 {
    SCRATCH.with(|w| {
        let mut w = w.borrow_mut();
        w.clear();
        write_exposed(&mut w, &r.exposed, d);
        write_unexposed(&mut w, &r.unexposed, d);
        w.write_bits(r.sense.clockwise_port as u64, 1);
        w.bit_len() as u32
    })
}

/// Dimensions a protocol implies on an n-node ring with IDs up to `max_id`.
pub fn protocol_dims(params: &ProtocolParams, ring_n: u32, max_id: u32) -> BitDims {
    BitDims { n: ring_n, max_id, horizon: default_horizon(params, ring_n) }
}

/// Largest state a compliant robot of the protocol can reach, for the
/// memory-envelope check. IDs are assumed to fit `n^2` where the protocol
/// leaves the ID space open.
pub fn worst_case_bits(params: &ProtocolParams, n: u32) -> u32 {
    let max_id = match params {
        ProtocolParams::Opt { .. } | ProtocolParams::MemOpt { .. } => n,
        _ => n.saturating_mul(n).max(1),
    };
    let d = protocol_dims(params, n, max_id);
    let top_id = RobotId(max_id);
    let rooted_full = RootedState {
        phase: RootedPhase::Walking,
        rank: n,
        steps_taken: n,
        round: d.horizon,
    };
    let (exposed, unexposed) = match params {
        ProtocolParams::Rooted => {
            let mut e = ExposedMemory::new(top_id, ProtocolFields::None);
            e.settled_claim = true;
            e.follow_target = Some(top_id);
            e.move_intent = Some(1);
            (e, UnexposedMemory::Rooted(rooted_full))
        }
        ProtocolParams::Opt { .. } => {
            let mut e = ExposedMemory::new(top_id, ProtocolFields::Opt { with_r1: true });
            e.follow_target = Some(top_id);
            e.move_intent = Some(1);
            (
                e,
                UnexposedMemory::Opt(OptState {
                    round: d.horizon,
                    leader: Some(top_id),
                    subgroup: Subgroup::UU,
                    met_r1: true,
                    was_with_r1: true,
                    sweeping: true,
                    waiting: true,
                    rooted: Some(rooted_full),
                }),
            )
        }
        ProtocolParams::MemOpt { .. } => {
            let mut e = ExposedMemory::new(top_id, ProtocolFields::None);
            e.move_intent = Some(1);
            e.follow_target = Some(top_id);
            (
                e,
                UnexposedMemory::MemOpt(crate::protocols::MemOptState {
                    round: d.horizon,
                    following_leader: true,
                    rooted: Some(rooted_full),
                }),
            )
        }
        ProtocolParams::TimeOpt { .. } => {
            // Each id is recorded at most once across all slots, so the
            // heaviest well-formed array has all n ids in one slot and the
            // full n slots allocated.
            let all: BTreeSet<RobotId> = (1..=n.max(1)).map(RobotId).collect();
            let mut records = vec![BTreeSet::new(); n.max(1) as usize];
            records[0] = all;
            let mut e = ExposedMemory::new(top_id, ProtocolFields::TimeOpt { records });
            e.settled_claim = true;
            e.move_intent = Some(1);
            (
                e,
                UnexposedMemory::TimeOpt(TimeOptState {
                    round: d.horizon,
                    settled_round: Some(d.horizon),
                }),
            )
        }
    };
    let robot = RobotState {
        id: top_id,
        node: crate::ring::NodeRef(0),
        sense: SenseOfDirection { clockwise_port: 1 },
        exposed,
        unexposed,
        terminated: false,
        is_byzantine: false,
        entered_via: None,
    };
    measure_memory_bits(&robot, &d)
}

// ---------------------------------------------------------------------------
// Claim checking
// ---------------------------------------------------------------------------

/// True iff every node hosts at most one non-Byzantine robot and every
/// non-Byzantine robot has terminated.
pub fn check_dispersion(world: &WorldState) -> bool {
    let mut occupied = BTreeSet::new();
    for r in world.non_byzantine() {
        if !r.terminated || !occupied.insert(r.node.0) {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub claim: String,
    pub round: u32,
    pub details: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub protocol: String,
    pub dispersion_ok: bool,
    pub gathering_round: Option<u32>,
    /// Per non-Byzantine robot: the round it terminated in, if it did.
    pub termination_rounds: BTreeMap<RobotId, Option<u32>>,
    pub violated_claims: Vec<Violation>,
    /// Per non-Byzantine robot: maximum serialized memory over all rounds.
    pub memory_bits: BTreeMap<RobotId, u32>,
}

impl VerificationReport {
    pub fn ok(&self) -> bool {
        self.violated_claims.is_empty()
    }

    pub fn max_memory_bits(&self) -> u32 {
        self.memory_bits.values().copied().max().unwrap_or(0)
    }

    pub fn max_termination_round(&self) -> Option<u32> {
        self.termination_rounds.values().copied().max().flatten()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "protocol: {}", self.protocol)?;
        writeln!(f, "dispersion: {}", if self.dispersion_ok { "ok" } else { "VIOLATED" })?;
        if let Some(g) = self.gathering_round {
            writeln!(f, "gathered at round: {g}")?;
        }
        match self.max_termination_round() {
            Some(t) => writeln!(f, "all non-Byzantine robots terminated by round {t}")?,
            None => writeln!(f, "some non-Byzantine robot never terminated")?,
        }
        writeln!(f, "max memory: {} bits per robot", self.max_memory_bits())?;
        if self.violated_claims.is_empty() {
            writeln!(f, "claims: all hold")?;
        } else {
            writeln!(f, "claims: {} VIOLATED", self.violated_claims.len())?;
            for v in &self.violated_claims {
                writeln!(f, "  [{}] round {}: {}", v.claim, v.round, v.details)?;
            }
        }
        Ok(())
    }
}

struct ClaimLog {
    violations: Vec<Violation>,
    seen: BTreeSet<String>,
}

impl ClaimLog {
    fn new() -> Self {
        ClaimLog { violations: Vec::new(), seen: BTreeSet::new() }
    }

    /// Records the first violation of each claim.
    fn violate(&mut self, claim: &str, round: u32, details: String) {
        if self.seen.insert(claim.to_string()) {
            self.violations.push(Violation { claim: claim.to_string(), round, details });
        }
    }
}

fn honest_positions(world: &WorldState) -> BTreeMap<RobotId, usize> {
    world.non_byzantine().map(|r| (r.id, r.node.0)).collect()
}

fn all_colocated(positions: &BTreeMap<RobotId, usize>) -> bool {
    let mut nodes = positions.values();
    match nodes.next() {
        None => true,
        Some(first) => nodes.all(|n| n == first),
    }
}

/// Pre-round snapshot used by the record-keeping checks.
struct PreRound {
    nodes: BTreeMap<RobotId, usize>,
    claims: BTreeMap<RobotId, bool>,
    records: BTreeMap<RobotId, Vec<BTreeSet<RobotId>>>,
}

fn pre_round(world: &WorldState) -> PreRound {
    let mut nodes = BTreeMap::new();
    let mut claims = BTreeMap::new();
    let mut records = BTreeMap::new();
    for r in world.robots.iter().filter(|r| !r.terminated) {
        nodes.insert(r.id, r.node.0);
        claims.insert(r.id, r.exposed.settled_claim);
        records.insert(r.id, r.exposed.timeopt_records().cloned().unwrap_or_default());
    }
    PreRound { nodes, claims, records }
}

/// Direct, checker-side evaluation of the definitional B set: IDs recorded
/// in earlier slots that are present again now.
fn definition_b(
    records: &[BTreeSet<RobotId>],
    round: u32,
    here: &BTreeSet<RobotId>,
) -> BTreeSet<RobotId> {
    let mut b = BTreeSet::new();
    for slot in records.iter().take(round.saturating_sub(1) as usize) {
        b.extend(slot.iter().filter(|id| here.contains(id)).copied());
    }
    b
}

/// Direct, checker-side evaluation of the settle-set iteration for one
/// viewer, written out from the definition rather than calling the protocol.
fn definition_s(
    viewer_b: &BTreeSet<RobotId>,
    settled: &[RobotId],
    active: &[RobotId],
    b_of: &BTreeMap<RobotId, BTreeSet<RobotId>>,
) -> BTreeSet<RobotId> {
    let mut s: BTreeSet<RobotId> = BTreeSet::new();
    for t in settled {
        if !viewer_b.contains(t) {
            s.insert(*t);
        }
    }
    for a in active {
        let b_a = &b_of[a];
        let mut blocked = false;
        for t in settled {
            if !b_a.contains(t) {
                blocked = true;
                break;
            }
        }
        if blocked {
            continue;
        }
        let mut credible_member = false;
        for t in &s {
            if !b_a.contains(t) {
                credible_member = true;
                break;
            }
        }
        if !credible_member {
            s.insert(*a);
        }
    }
    s
}

/// Evaluates every applicable claim for the protocol against a recorded run.
pub fn check_claims(trace: &Trace, cfg: &ProtocolConfig) -> Result<VerificationReport, ReplayError> {
    let n = trace.initial.ring.n() as u32;
    let honest: Vec<RobotId> = trace.initial.non_byzantine().map(|r| r.id).collect();
    let mut log = ClaimLog::new();
    let mut termination: BTreeMap<RobotId, Option<u32>> =
        honest.iter().map(|&id| (id, None)).collect();
    let mut memory: BTreeMap<RobotId, u32> = honest.iter().map(|&id| (id, 0)).collect();
    let mut gathering_round: Option<u32> = None;
    let mut settle_nodes: BTreeMap<RobotId, (u32, usize)> = BTreeMap::new();

    let mut walker = TraceWalker::for_checking(trace);
    let mut terminated_before: BTreeSet<RobotId> = BTreeSet::new();
    loop {
        let round = walker.world.round + 1;
        let timeopt = matches!(cfg.params, ProtocolParams::TimeOpt { .. });
        let pre = timeopt.then(|| pre_round(&walker.world));
        let Some(step) = walker.step() else { break };
        let (recorded, _recomputed) = step?;

        for rec in &recorded.robots {
            if !termination.contains_key(&rec.id) {
                continue; // Byzantine: no bounds apply
            }
            let m = memory.get_mut(&rec.id).expect("honest robot tracked");
            *m = (*m).max(rec.mem_bits);
        }
        for r in walker.world.robots.iter() {
            if r.terminated && terminated_before.insert(r.id) {
                if let Some(slot) = termination.get_mut(&r.id) {
                    *slot = Some(round);
                }
            }
        }

        let positions = honest_positions(&walker.world);
        if gathering_round.is_none() && positions.len() > 1 && all_colocated(&positions) {
            gathering_round = Some(round);
        }

        match cfg.params {
            ProtocolParams::Opt { n, f } => {
                check_opt_round(&mut log, &walker.world, round, n, f);
            }
            ProtocolParams::MemOpt { n, mode } => {
                check_memopt_round(&mut log, &trace.initial, &walker.world, round, n, &mode);
            }
            ProtocolParams::TimeOpt { n } => {
                check_timeopt_round(
                    &mut log,
                    &walker.world,
                    pre.as_ref().expect("snapshot taken for timeopt"),
                    round,
                    n,
                    &mut settle_nodes,
                );
            }
            ProtocolParams::Rooted => {}
        }
    }

    let final_world = &walker.world;
    let last_round = final_world.round;
    let dispersion_ok = check_dispersion(final_world);
    if !dispersion_ok {
        log.violate(
            "dispersion",
            last_round,
            "a node holds two non-Byzantine robots, or one never terminated".into(),
        );
    }

    match cfg.params {
        ProtocolParams::Rooted => {
            // Ranking consumes one round, so the degenerate single-node ring
            // still needs a round; the bound is n-1 elsewhere.
            let bound = (n - 1).max(1);
            for (&id, &t) in &termination {
                match t {
                    Some(t) if t <= bound => {}
                    Some(t) => log.violate(
                        "rooted-termination-bound",
                        t,
                        format!("robot {id} terminated at round {t}, bound {bound}"),
                    ),
                    None => log.violate(
                        "rooted-termination-bound",
                        last_round,
                        format!("robot {id} never terminated (bound {bound})"),
                    ),
                }
            }
        }
        ProtocolParams::Opt { n, .. } => {
            let expect = 4 * n + 1;
            for (&id, &t) in &termination {
                if t != Some(expect) {
                    log.violate(
                        "opt-termination",
                        t.unwrap_or(last_round),
                        format!("robot {id} terminated at {t:?}, expected exactly {expect}"),
                    );
                }
            }
        }
        ProtocolParams::MemOpt { n, mode } => {
            let expect = gathering_rounds(&mode, n) + (n - 1).max(1);
            for (&id, &t) in &termination {
                if t != Some(expect) {
                    log.violate(
                        "memopt-termination",
                        t.unwrap_or(last_round),
                        format!("robot {id} terminated at {t:?}, expected exactly {expect}"),
                    );
                }
            }
        }
        ProtocolParams::TimeOpt { n } => {
            for (&id, &t) in &termination {
                let settled = final_world.robot(id).map(|r| r.settled()).unwrap_or(false);
                if t != Some(n) || !settled {
                    log.violate(
                        "timeopt-settle-deadline",
                        t.unwrap_or(last_round),
                        format!("robot {id} settled={settled}, terminated at {t:?}, expected round {n}"),
                    );
                }
            }
        }
    }

    for (&id, &bits) in &memory {
        let bound = memory_bound_bits(&cfg.params, n);
        if bits as u64 > bound {
            log.violate(
                "memory-bound",
                last_round,
                format!("robot {id} used {bits} bits, bound {bound}"),
            );
        }
    }

    Ok(VerificationReport {
        protocol: cfg.params.name().to_string(),
        dispersion_ok,
        gathering_round,
        termination_rounds: termination,
        violated_claims: log.violations,
        memory_bits: memory,
    })
}

fn check_opt_round(log: &mut ClaimLog, world: &WorldState, round: u32, n: u32, f: u32) {
    let positions = honest_positions(world);
    if round == n {
        let distinct: BTreeSet<usize> = positions.values().copied().collect();
        if distinct.len() as u32 > f + 1 {
            log.violate(
                "opt-grouping",
                round,
                format!("non-Byzantine robots on {} nodes, allowed {}", distinct.len(), f + 1),
            );
        }
    }
    if round == 2 * n + 1 {
        if let Some(anchor) = world.robot(RobotId(1)).map(|r| r.node.0) {
            let met = positions.values().filter(|&&p| p == anchor).count() as i64;
            if 4 * met < n as i64 - 13 * f as i64 {
                log.violate(
                    "opt-meeting",
                    round,
                    format!("{met} non-Byzantine robots at the meeting point, need 4x >= n-13f = {}", n as i64 - 13 * f as i64),
                );
            }
        }
    }
    if round == 3 * n + 1 && !all_colocated(&positions) {
        log.violate("opt-gathering", round, "non-Byzantine robots not gathered".into());
    }
}

fn check_memopt_round(
    log: &mut ClaimLog,
    initial: &WorldState,
    world: &WorldState,
    round: u32,
    n: u32,
    mode: &MemOptMode,
) {
    let stages = gathering_stages(mode, n);
    let Some(k) = initial
        .non_byzantine()
        .map(|r| r.id.0)
        .filter(|&id| id >= 1 && id <= stages)
        .min()
    else {
        return;
    };
    let gather_end = gathering_rounds(mode, n);
    if round >= k * n && round <= gather_end {
        let positions = honest_positions(world);
        if !all_colocated(&positions) {
            log.violate(
                "memopt-gathering",
                round,
                format!("not co-located after the honest leader's stage (leader {k})"),
            );
        }
    }
}

fn check_timeopt_round(
    log: &mut ClaimLog,
    world: &WorldState,
    pre: &PreRound,
    round: u32,
    _n: u32,
    settle_nodes: &mut BTreeMap<RobotId, (u32, usize)>,
) {
    // Group the robots that were alive this round by their pre-round node.
    let mut by_node: BTreeMap<usize, Vec<RobotId>> = BTreeMap::new();
    for (&id, &node) in &pre.nodes {
        by_node.entry(node).or_default().push(id);
    }

    let is_honest = |id: RobotId| world.robot(id).map(|r| !r.is_byzantine).unwrap_or(false);

    for (&node, ids) in &by_node {
        let here: BTreeSet<RobotId> = ids.iter().copied().collect();
        let settled: Vec<RobotId> =
            ids.iter().copied().filter(|id| pre.claims[id]).collect();
        let b_of: BTreeMap<RobotId, BTreeSet<RobotId>> = ids
            .iter()
            .map(|&id| (id, definition_b(&pre.records[&id], round, &here)))
            .collect();

        let mut agreed_active: Option<BTreeSet<RobotId>> = None;
        for &viewer in ids {
            if !is_honest(viewer) || pre.claims[&viewer] {
                continue;
            }
            let active: Vec<RobotId> = ids
                .iter()
                .copied()
                .filter(|&id| id == viewer || !pre.claims[&id])
                .collect();
            let s = definition_s(&b_of[&viewer], &settled, &active, &b_of);
            let active_part: BTreeSet<RobotId> =
                s.iter().copied().filter(|id| !pre.claims[id]).collect();
            match &agreed_active {
                None => agreed_active = Some(active_part),
                Some(prev) if *prev != active_part => {
                    log.violate(
                        "timeopt-s-agreement",
                        round,
                        format!("co-located robots disagree on the computed settle set at node {node}"),
                    );
                }
                _ => {}
            }

            // The viewer either settled this round or must have recorded a
            // still-credible robot in its new slot.
            let now = world.robot(viewer).expect("robot persists");
            let settled_now = now.settled();
            if settled_now {
                settle_nodes.insert(viewer, (round, now.node.0));
                continue;
            }
            let b_viewer = &b_of[&viewer];
            let slot = now
                .exposed
                .timeopt_records()
                .and_then(|r| r.get((round - 1) as usize))
                .cloned()
                .unwrap_or_default();
            if slot.is_empty() || !slot.iter().any(|id| !b_viewer.contains(id)) {
                log.violate(
                    "timeopt-record-nonempty",
                    round,
                    format!(
                        "robot {viewer} did not settle but recorded no still-credible robot in slot {round}"
                    ),
                );
            }
        }
    }

    // No two honest robots may ever settle at the same node.
    let mut nodes_taken: BTreeMap<usize, RobotId> = BTreeMap::new();
    for (&id, &(settle_round, node)) in settle_nodes.iter() {
        if let Some(&other) = nodes_taken.get(&node) {
            log.violate(
                "timeopt-unique-settle",
                settle_round,
                format!("robots {other} and {id} both settled at node {node}"),
            );
        } else {
            nodes_taken.insert(node, id);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_envelope_constructors_fit_the_declared_bound() {
        for n in [1u32, 2, 3, 4, 7, 16, 21, 64, 100, 256, 1000, 1024] {
            for params in [
                ProtocolParams::Rooted,
                ProtocolParams::Opt { n, f: 1 },
                ProtocolParams::MemOpt { n, mode: MemOptMode::Full },
                ProtocolParams::TimeOpt { n },
            ] {
                let bits = worst_case_bits(&params, n) as u64;
                let bound = memory_bound_bits(&params, n);
                assert!(
                    bits <= bound,
                    "{} at n={n}: {bits} bits exceeds bound {bound}",
                    params.name()
                );
            }
        }
    }

    #[test]
    fn envelope_ratio_is_monotone_in_the_asymptotic_regime() {
        for params in [
            ProtocolParams::Rooted,
            ProtocolParams::Opt { n: 0, f: 0 },
            ProtocolParams::MemOpt { n: 0, mode: MemOptMode::Full },
            ProtocolParams::TimeOpt { n: 0 },
        ] {
            let mut prev: Option<f64> = None;
            for n in [64u32, 256, 1024] {
                let p = match params {
                    ProtocolParams::Rooted => ProtocolParams::Rooted,
                    ProtocolParams::Opt { .. } => ProtocolParams::Opt { n, f: (n - 4) / 17 },
                    ProtocolParams::MemOpt { .. } => {
                        ProtocolParams::MemOpt { n, mode: MemOptMode::Full }
                    }
                    ProtocolParams::TimeOpt { .. } => ProtocolParams::TimeOpt { n },
                };
                let denom = match p {
                    ProtocolParams::TimeOpt { .. } => n as f64 * ceil_log2(n) as f64,
                    _ => ceil_log2(n) as f64,
                };
                let ratio = worst_case_bits(&p, n) as f64 / denom;
                if let Some(prev) = prev {
                    assert!(
                        ratio <= prev + 1e-9,
                        "{} ratio grew from {prev} to {ratio} at n={n}",
                        p.name()
                    );
                }
                prev = Some(ratio);
            }
        }
    }

    #[test]
    fn ceil_log2_matches_definition() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(16), 4);
        assert_eq!(ceil_log2(17), 5);
        assert_eq!(ceil_log2(1024), 10);
    }
}
