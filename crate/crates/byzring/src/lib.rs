//! Deterministic round-synchronous simulation and verification of Byzantine
//! dispersion on anonymous rings.
//!
//! n robots with unique IDs sit on an n-node ring whose nodes carry no
//! identifiers, only local port labels. Up to f robots are Byzantine: they
//! may move and write exposed memory arbitrarily but cannot fake their IDs.
//! The goal is a configuration with at most one non-Byzantine robot per node,
//! every non-Byzantine robot terminated.
//!
//! The crate provides:
//!
//! * [`ring`]: the anonymous port-labelled ring and per-robot senses of
//!   direction;
//! * [`engine`]: the lockstep round engine (simultaneous reads, writes, and
//!   moves; follow-chain resolution; replayable traces);
//! * [`protocols`]: four dispersion protocols as pure decision functions —
//!   `rooted` (from a single node), `opt` (O(n) rounds, O(log n) bits, needs
//!   IDs in [1, n] and a known fault bound), `memopt` (O(n^2) rounds,
//!   O(log n) bits), and `timeopt` (n rounds, O(n log n) bits);
//! * [`adversary`]: coordinated Byzantine strategies, from honest mimicry to
//!   record forgery, plus a finite scripted-action menu;
//! * [`verify`]: dispersion and claim checking plus bit-exact memory
//!   accounting;
//! * [`oracle`]: exhaustive adversary-script enumeration for tiny instances;
//! * [`scenario`]: the versioned JSON configuration surface shared with the
//!   command-line tool.

pub mod adversary;
pub mod bits;
pub mod engine;
pub mod oracle;
pub mod protocols;
pub mod ring;
pub mod scenario;
pub mod verify;

pub use adversary::{builtin_strategies, Adversary, AdversaryView, StrategyKind};
pub use engine::{
    make_observation, replay, resolve_follows, run, step_round, Action, ExposedMemory, Motion,
    Observation, RobotId, RobotSpec, RobotState, Trace, WorldState,
};
pub use protocols::{ProtocolConfig, ProtocolParams};
pub use ring::{initial_sense, propagate_sense, NodeRef, PortScheme, Ring, SenseOfDirection};
pub use scenario::{build_scenario, run_scenario, ScenarioConfig};
pub use verify::{check_dispersion, check_claims, measure_memory_bits, VerificationReport};
