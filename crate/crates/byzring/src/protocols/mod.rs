//! The four dispersion protocols as pure per-round decision functions
//! `(observation, private state) -> (action, new state)`.
//!
//! Round indexing is 1-based everywhere, matching the phase boundaries the
//! protocols are defined by (n+1, 2n+1, 3n+1, 4n+1, stage multiples of n).

pub mod memopt;
pub mod opt;
pub mod rooted;
pub mod timeopt;

use serde::{Deserialize, Serialize};

use crate::engine::{Action, ExposedMemory, Observation, ProtocolFields, RobotId};
use crate::ring::SenseOfDirection;

pub use memopt::{gathering_rounds, gathering_stages, stage_of, MemOptState};
pub use opt::{partition_group, subphase2_motion, OptState, Sp2Move, Subgroup};
pub use rooted::{rooted_step, RootedPhase, RootedState, TerminatePolicy};
pub use timeopt::{timeopt_compute_b, timeopt_compute_s, TimeOptState};

/// How long the gathering portion of the memory-lean protocol runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemOptMode {
    /// One stage per possible ID in `[1, n]`.
    Full,
    /// The fault bound is known; `f + 1` stages suffice.
    FKnown { f: u32 },
    /// IDs come from `[1, max_id]`; one stage per possible ID.
    IdRange { max_id: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum ProtocolParams {
    /// All robots (at least all non-Byzantine ones) start on one node.
    /// Requires no knowledge of the ring size.
    Rooted,
    /// Time- and memory-lean protocol; needs IDs in `[1, n]` and a known
    /// fault bound `f <= (n - 4) / 17`.
    Opt { n: u32, f: u32 },
    /// Memory-lean protocol; needs IDs in `[1, n]` (or `[1, U]`).
    MemOpt { n: u32, mode: MemOptMode },
    /// Time-lean protocol; no ID-space or fault-bound assumptions.
    TimeOpt { n: u32 },
}

impl ProtocolParams {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolParams::Rooted => "rooted",
            ProtocolParams::Opt { .. } => "opt",
            ProtocolParams::MemOpt { .. } => "memopt",
            ProtocolParams::TimeOpt { .. } => "timeopt",
        }
    }
}

/// Deliberately broken protocol variants, used as negative controls for the
/// exhaustive oracle: each must produce a discoverable counterexample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    #[default]
    None,
    /// Skip the lower-ID settle check; two robots may settle together.
    TimeOptSkipCheck2,
    /// Ignore co-located lower IDs when ranking; everyone walks zero steps.
    RootedSkipRankCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub params: ProtocolParams,
    #[serde(default)]
    pub mutation: Mutation,
}

impl ProtocolConfig {
    pub fn new(params: ProtocolParams) -> Self {
        ProtocolConfig { params, mutation: Mutation::None }
    }
}

/// Private per-robot protocol state. Opaque to the engine; serialized only
/// for traces and memory accounting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnexposedMemory {
    Idle,
    Rooted(RootedState),
    Opt(OptState),
    MemOpt(MemOptState),
    TimeOpt(TimeOptState),
}

pub fn initial_unexposed(cfg: &ProtocolConfig) -> UnexposedMemory {
    match cfg.params {
        ProtocolParams::Rooted => UnexposedMemory::Rooted(RootedState::default()),
        ProtocolParams::Opt { .. } => UnexposedMemory::Opt(OptState::default()),
        ProtocolParams::MemOpt { .. } => UnexposedMemory::MemOpt(MemOptState::default()),
        ProtocolParams::TimeOpt { .. } => UnexposedMemory::TimeOpt(TimeOptState::default()),
    }
}

pub fn initial_exposed(cfg: &ProtocolConfig, id: RobotId) -> ExposedMemory {
    let fields = match cfg.params {
        ProtocolParams::Opt { .. } => ProtocolFields::Opt { with_r1: false },
        ProtocolParams::TimeOpt { .. } => ProtocolFields::TimeOpt { records: Vec::new() },
        _ => ProtocolFields::None,
    };
    ExposedMemory::new(id, fields)
}

/// Everything a decision function may look at.
pub struct StepCtx<'a> {
    pub obs: &'a Observation,
    pub sense: SenseOfDirection,
    pub exposed: &'a ExposedMemory,
    pub me: RobotId,
}

/// Default run length: the round by which each protocol completes.
pub fn default_horizon(params: &ProtocolParams, ring_n: u32) -> u32 {
    match *params {
        ProtocolParams::Rooted => (ring_n - 1).max(1),
        ProtocolParams::Opt { n, .. } => 4 * n + 1,
        ProtocolParams::MemOpt { n, mode } => gathering_rounds(&mode, n) + (n - 1).max(1),
        ProtocolParams::TimeOpt { n } => n,
    }
}

/// One non-Byzantine decision. The state is updated in place; the returned
/// action is handed to the engine unmodified.
pub fn honest_step(
    cfg: &ProtocolConfig,
    obs: &Observation,
    sense: SenseOfDirection,
    exposed: &ExposedMemory,
    state: &mut UnexposedMemory,
    me: RobotId,
) -> Action {
    let ctx = StepCtx { obs, sense, exposed, me };
    match (&cfg.params, state) {
        (ProtocolParams::Rooted, UnexposedMemory::Rooted(st)) => rooted_step(
            &ctx,
            st,
            obs.round,
            cfg.mutation == Mutation::RootedSkipRankCount,
            TerminatePolicy::OnSettle,
        ),
        (ProtocolParams::Opt { n, f }, UnexposedMemory::Opt(st)) => opt::step(&ctx, st, *n, *f),
        (ProtocolParams::MemOpt { n, mode }, UnexposedMemory::MemOpt(st)) => {
            memopt::step(&ctx, st, *n, mode)
        }
        (ProtocolParams::TimeOpt { n }, UnexposedMemory::TimeOpt(st)) => {
            timeopt::step(&ctx, st, *n, cfg.mutation == Mutation::TimeOptSkipCheck2)
        }
        _ => {
            debug_assert!(false, "protocol state does not match configured protocol");
            Action::stay(exposed.clone())
        }
    }
}
