//! Scenario configuration: the versioned JSON schema, validation, seeded
//! placement/ID assignment, and the glue that turns a config into a runnable
//! world plus adversary.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, ForgeKind, Script, ScriptMove, StrategyKind};
use crate::bits::BitDims;
use crate::engine::{self, RobotId, RobotSpec, Trace, WorldState};
use crate::protocols::{
    default_horizon, MemOptMode, ProtocolConfig, ProtocolParams,
};
use crate::ring::{NodeRef, PortScheme, Ring};
use crate::verify::{self, VerificationReport};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    pub n: u32,
    pub port_scheme: SchemeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    LowerIsCwEverywhere,
    Alternating,
    SeededRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Rooted,
    Opt,
    Memopt,
    Timeopt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemOptModeName {
    Full,
    FKnown,
    IdRange,
}

/// Robot IDs: consecutive from 1, an explicit list, or a seeded draw of
/// distinct values from `[1, max_id]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdSpec {
    Keyword(IdKeyword),
    Explicit(Vec<u32>),
    Random { max_id: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdKeyword {
    Sequential,
}

/// Initial placement: all robots on one node, an explicit node-index list,
/// or independent seeded draws.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlacementSpec {
    Keyword(PlacementKeyword),
    Explicit(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKeyword {
    Rooted,
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineConfig {
    pub ids: Vec<u32>,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub ring: RingConfig,
    pub protocol: ProtocolName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memopt_mode: Option<MemOptModeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_range_max: Option<u32>,
    /// Robot count; defaults to n. Only the rooted protocol admits fewer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robots: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<IdSpec>,
    pub placement: PlacementSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byzantine: Option<ByzantineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rounds: Option<u32>,
    /// Master seed for placement and ID randomness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("ring must have at least one node")]
    EmptyRing,
    #[error("robot count {k} exceeds ring size {n}")]
    TooManyRobots { k: u32, n: u32 },
    #[error("protocol '{0}' requires exactly n robots")]
    NeedsFullCount(&'static str),
    #[error("protocol 'opt' requires the fault bound f")]
    MissingF,
    #[error("f = {f} violates f <= (n - 4) / 17 = {bound} at n = {n}")]
    FOutOfRange { f: u32, n: u32, bound: u32 },
    #[error("memopt mode 'f_known' requires f")]
    MissingMemOptF,
    #[error("memopt mode 'id_range' requires id_range_max")]
    MissingIdRangeMax,
    #[error("protocol '{proto}' requires robot IDs within [1, {max}]")]
    IdOutOfRange { proto: &'static str, max: u32 },
    #[error("robot IDs must be distinct positive integers")]
    BadIds,
    #[error("placement list has {got} entries for {want} robots")]
    PlacementLength { got: usize, want: usize },
    #[error("placement node {0} is outside the ring")]
    PlacementOutOfRange(usize),
    #[error("the rooted protocol requires all robots on one node")]
    NotRooted,
    #[error("Byzantine id {0} is not a robot id")]
    UnknownByzantineId(u32),
    #[error("{0}")]
    BadStrategy(String),
    #[error("unknown script move '{0}'")]
    BadScriptMove(String),
    #[error("cannot draw {k} distinct ids from [1, {max}]")]
    IdRangeTooSmall { k: u32, max: u32 },
    #[error("engine rejected the configuration: {0}")]
    Engine(#[from] engine::EngineError),
}

/// A fully built, runnable scenario.
pub struct Scenario {
    pub world: WorldState,
    pub cfg: ProtocolConfig,
    pub adversary: Adversary,
    pub dims: BitDims,
    pub max_rounds: u32,
}

fn stream(master: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt)
}

pub fn parse_script_move(s: &str) -> Result<ScriptMove, ConfigError> {
    Ok(match s {
        "stay" => ScriptMove::Stay,
        "move_cw" => ScriptMove::MoveCw,
        "move_ccw" => ScriptMove::MoveCcw,
        "follow_lowest" => ScriptMove::FollowLowest,
        "claim_settled" => ScriptMove::ClaimSettled,
        "unclaim_settled" => ScriptMove::UnclaimSettled,
        "forge_with_r1" => ScriptMove::Forge(ForgeKind::WithR1),
        "forge_clear_with_r1" => ScriptMove::Forge(ForgeKind::ClearWithR1),
        "forge_intent_cw" => ScriptMove::Forge(ForgeKind::IntentCw),
        "forge_intent_ccw" => ScriptMove::Forge(ForgeKind::IntentCcw),
        "forge_fill_records" => ScriptMove::Forge(ForgeKind::FillRecords),
        "forge_clear_records" => ScriptMove::Forge(ForgeKind::ClearRecords),
        other => return Err(ConfigError::BadScriptMove(other.to_string())),
    })
}

fn build_params(config: &ScenarioConfig) -> Result<ProtocolParams, ConfigError> {
    let n = config.ring.n;
    Ok(match config.protocol {
        ProtocolName::Rooted => ProtocolParams::Rooted,
        ProtocolName::Opt => {
            let f = config.f.ok_or(ConfigError::MissingF)?;
            let bound = n.saturating_sub(4) / 17;
            if f > bound {
                return Err(ConfigError::FOutOfRange { f, n, bound });
            }
            ProtocolParams::Opt { n, f }
        }
        ProtocolName::Memopt => {
            let mode = match config.memopt_mode.unwrap_or(MemOptModeName::Full) {
                MemOptModeName::Full => MemOptMode::Full,
                MemOptModeName::FKnown => {
                    MemOptMode::FKnown { f: config.f.ok_or(ConfigError::MissingMemOptF)? }
                }
                MemOptModeName::IdRange => MemOptMode::IdRange {
                    max_id: config.id_range_max.ok_or(ConfigError::MissingIdRangeMax)?,
                },
            };
            ProtocolParams::MemOpt { n, mode }
        }
        ProtocolName::Timeopt => ProtocolParams::TimeOpt { n },
    })
}

fn build_ids(config: &ScenarioConfig, k: u32, master: u64) -> Result<Vec<u32>, ConfigError> {
    let ids = match config.ids.as_ref().unwrap_or(&IdSpec::Keyword(IdKeyword::Sequential)) {
        IdSpec::Keyword(IdKeyword::Sequential) => (1..=k).collect(),
        IdSpec::Explicit(list) => list.clone(),
        IdSpec::Random { max_id } => {
            if *max_id < k {
                return Err(ConfigError::IdRangeTooSmall { k, max: *max_id });
            }
            let mut rng = stream(master, 0x1d5);
            let mut pool: Vec<u32> = (1..=*max_id).collect();
            pool.shuffle(&mut rng);
            let mut picked: Vec<u32> = pool.into_iter().take(k as usize).collect();
            picked.sort_unstable();
            picked
        }
    };
    let distinct: BTreeSet<u32> = ids.iter().copied().collect();
    if ids.len() != k as usize || distinct.len() != ids.len() || ids.iter().any(|&i| i == 0) {
        return Err(ConfigError::BadIds);
    }
    Ok(ids)
}

fn build_placement(
    config: &ScenarioConfig,
    k: u32,
    n: u32,
    master: u64,
) -> Result<Vec<usize>, ConfigError> {
    use rand::Rng;
    Ok(match &config.placement {
        PlacementSpec::Keyword(PlacementKeyword::Rooted) => {
            let node = (stream(master, 0xa11).gen_range(0..n)) as usize;
            vec![node; k as usize]
        }
        PlacementSpec::Keyword(PlacementKeyword::Random) => {
            let mut rng = stream(master, 0xb22);
            (0..k).map(|_| rng.gen_range(0..n) as usize).collect()
        }
        PlacementSpec::Explicit(nodes) => {
            if nodes.len() != k as usize {
                return Err(ConfigError::PlacementLength { got: nodes.len(), want: k as usize });
            }
            if let Some(&bad) = nodes.iter().find(|&&v| v >= n as usize) {
                return Err(ConfigError::PlacementOutOfRange(bad));
            }
            nodes.clone()
        }
    })
}

pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario, ConfigError> {
    if config.version != CONFIG_VERSION {
        return Err(ConfigError::Version(config.version));
    }
    let n = config.ring.n;
    if n == 0 {
        return Err(ConfigError::EmptyRing);
    }
    let master = config.seed.unwrap_or(0);
    let params = build_params(config)?;

    let k = config.robots.unwrap_or(n);
    if k > n {
        return Err(ConfigError::TooManyRobots { k, n });
    }
    if k < n && !matches!(params, ProtocolParams::Rooted) {
        return Err(ConfigError::NeedsFullCount(params.name()));
    }

    let ids = build_ids(config, k, master)?;
    match params {
        ProtocolParams::Opt { .. } | ProtocolParams::MemOpt { mode: MemOptMode::Full, .. }
        | ProtocolParams::MemOpt { mode: MemOptMode::FKnown { .. }, .. } => {
            if ids.iter().any(|&id| id > n) {
                return Err(ConfigError::IdOutOfRange { proto: params.name(), max: n });
            }
        }
        ProtocolParams::MemOpt { mode: MemOptMode::IdRange { max_id }, .. } => {
            if ids.iter().any(|&id| id > max_id) {
                return Err(ConfigError::IdOutOfRange { proto: params.name(), max: max_id });
            }
        }
        _ => {}
    }

    let placement = build_placement(config, k, n, master)?;
    if matches!(params, ProtocolParams::Rooted) {
        let first = placement.first().copied().unwrap_or(0);
        if placement.iter().any(|&p| p != first) {
            return Err(ConfigError::NotRooted);
        }
    }

    let byz_ids: BTreeSet<u32> = config.byzantine.as_ref().map(|b| b.ids.iter().copied().collect()).unwrap_or_default();
    for &b in &byz_ids {
        if !ids.contains(&b) {
            return Err(ConfigError::UnknownByzantineId(b));
        }
    }

    let adversary = match &config.byzantine {
        None => Adversary::new(StrategyKind::Honest),
        Some(b) => {
            let kind = match b.strategy.parse::<StrategyKind>() {
                Ok(StrategyKind::Scripted(_)) => {
                    let steps = b
                        .script
                        .as_deref()
                        .unwrap_or(&[])
                        .iter()
                        .map(|s| parse_script_move(s))
                        .collect::<Result<Vec<_>, _>>()?;
                    StrategyKind::Scripted(Script::Uniform(steps))
                }
                Ok(kind) => kind,
                Err(e) => return Err(ConfigError::BadStrategy(e)),
            };
            Adversary::new(kind)
        }
    };

    let scheme = match config.ring.port_scheme {
        SchemeName::LowerIsCwEverywhere => PortScheme::LowerIsCwEverywhere,
        SchemeName::Alternating => PortScheme::Alternating,
        SchemeName::SeededRandom => {
            PortScheme::SeededRandom { seed: config.ring.seed.unwrap_or(master) }
        }
    };
    let ring = Ring::build(n as usize, scheme).map_err(|_| ConfigError::EmptyRing)?;

    let cfg = ProtocolConfig::new(params);
    let specs: Vec<RobotSpec> = ids
        .iter()
        .zip(&placement)
        .map(|(&id, &node)| RobotSpec {
            id: RobotId(id),
            node: NodeRef(node),
            is_byzantine: byz_ids.contains(&id),
        })
        .collect();
    let world = WorldState::new(ring, specs, &cfg)?;

    let max_id = ids.iter().copied().max().unwrap_or(1);
    let dims = verify::protocol_dims(&cfg.params, n, max_id);
    let max_rounds = config.max_rounds.unwrap_or_else(|| default_horizon(&cfg.params, n));
    Ok(Scenario { world, cfg, adversary, dims, max_rounds })
}

/// Builds, runs, and checks a scenario in one call.
pub fn run_scenario(
    config: &ScenarioConfig,
) -> Result<(Trace, VerificationReport, WorldState), ConfigError> {
    let mut scenario = build_scenario(config)?;
    let trace = engine::run(
        &mut scenario.world,
        &scenario.cfg,
        &mut scenario.adversary,
        &scenario.dims,
        scenario.max_rounds,
    );
    let report = verify::check_claims(&trace, &scenario.cfg)
        .expect("a freshly recorded trace always replays");
    Ok((trace, report, scenario.world))
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub version: u32,
    pub protocol: ProtocolName,
    pub n: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<u32>>,
    pub strategies: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memopt_mode: Option<MemOptModeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_range_max: Option<u32>,
    pub port_scheme: SchemeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<PlacementSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// One grid point of a sweep, ready to run.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub n: u32,
    pub f: u32,
    pub strategy: String,
    pub seed: u64,
    pub config: ScenarioConfig,
}

/// Expands a sweep into scenario configs, one per grid point, in grid order
/// (n-major, then f, strategy, seed). Byzantine sets are seeded draws of f
/// ids; the mirror strategy always includes robot 1.
pub fn sweep_points(spec: &SweepSpec) -> Result<Vec<SweepPoint>, ConfigError> {
    let mut points = Vec::new();
    for &n in &spec.n {
        let fs: Vec<u32> = match (&spec.f, spec.protocol) {
            (Some(list), _) => list.clone(),
            (None, ProtocolName::Opt) => vec![n.saturating_sub(4) / 17],
            (None, _) => vec![1.min(n.saturating_sub(1))],
        };
        for &f in &fs {
            for strategy in &spec.strategies {
                for &seed in &spec.seeds {
                    let byz = seeded_byz_set(n, f, seed, strategy == "mirror");
                    let config = ScenarioConfig {
                        version: CONFIG_VERSION,
                        ring: RingConfig { n, port_scheme: spec.port_scheme, seed: Some(seed) },
                        protocol: spec.protocol,
                        f: match spec.protocol {
                            ProtocolName::Opt => Some(f),
                            ProtocolName::Memopt
                                if spec.memopt_mode == Some(MemOptModeName::FKnown) =>
                            {
                                Some(f)
                            }
                            _ => None,
                        },
                        memopt_mode: spec.memopt_mode,
                        id_range_max: spec.id_range_max,
                        robots: None,
                        ids: None,
                        placement: spec
                            .placement
                            .clone()
                            .unwrap_or(PlacementSpec::Keyword(PlacementKeyword::Random)),
                        byzantine: Some(ByzantineConfig {
                            ids: byz,
                            strategy: strategy.clone(),
                            script: None,
                            seed: Some(seed),
                        }),
                        max_rounds: None,
                        seed: Some(seed),
                    };
                    points.push(SweepPoint { n, f, strategy: strategy.clone(), seed, config });
                }
            }
        }
    }
    Ok(points)
}

/// Draws `f` distinct Byzantine ids from `[1, n]`, optionally forcing id 1 in.
pub fn seeded_byz_set(n: u32, f: u32, seed: u64, force_r1: bool) -> Vec<u32> {
    let f = f.min(n.saturating_sub(1));
    let mut rng = stream(seed, 0xbad);
    let mut pool: Vec<u32> = (1..=n).collect();
    pool.shuffle(&mut rng);
    let mut byz: BTreeSet<u32> = BTreeSet::new();
    if force_r1 && f > 0 {
        byz.insert(1);
    }
    for id in pool {
        if byz.len() as u32 >= f {
            break;
        }
        byz.insert(id);
    }
    byz.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(n: u32) -> ScenarioConfig {
        ScenarioConfig {
            version: CONFIG_VERSION,
            ring: RingConfig { n, port_scheme: SchemeName::LowerIsCwEverywhere, seed: None },
            protocol: ProtocolName::Rooted,
            f: None,
            memopt_mode: None,
            id_range_max: None,
            robots: None,
            ids: None,
            placement: PlacementSpec::Keyword(PlacementKeyword::Rooted),
            byzantine: None,
            max_rounds: None,
            seed: Some(7),
        }
    }

    #[test]
    fn opt_fault_bound_is_enforced() {
        let mut config = base_config(21);
        config.protocol = ProtocolName::Opt;
        config.placement = PlacementSpec::Keyword(PlacementKeyword::Random);
        config.f = Some(2);
        match build_scenario(&config) {
            Err(ConfigError::FOutOfRange { f: 2, n: 21, bound: 1 }) => {}
            Err(other) => panic!("expected fault-bound rejection, got {other:?}"),
            Ok(_) => panic!("expected fault-bound rejection, got a scenario"),
        }
        config.f = Some(1);
        assert!(build_scenario(&config).is_ok());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"version":1,"ring":{"n":4,"port_scheme":"alternating"},
            "protocol":"rooted","placement":"rooted","surprise":true}"#;
        assert!(serde_json::from_str::<ScenarioConfig>(json).is_err());
    }

    #[test]
    fn config_json_round_trips() {
        let json = r#"{"version":1,"ring":{"n":8,"port_scheme":"seeded_random","seed":42},
            "protocol":"timeopt","placement":[0,1,2,3,4,5,6,7],
            "byzantine":{"ids":[3],"strategy":"stale_array"},"seed":5}"#;
        let config: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.ring.n, 8);
        assert_eq!(config.placement, PlacementSpec::Explicit(vec![0, 1, 2, 3, 4, 5, 6, 7]));
        let back = serde_json::to_string(&config).unwrap();
        let again: ScenarioConfig = serde_json::from_str(&back).unwrap();
        assert_eq!(config, again);
    }

    #[test]
    fn rooted_accepts_fewer_robots_but_others_do_not() {
        let mut config = base_config(6);
        config.robots = Some(3);
        assert!(build_scenario(&config).is_ok());
        config.protocol = ProtocolName::Timeopt;
        config.placement = PlacementSpec::Keyword(PlacementKeyword::Random);
        assert!(matches!(build_scenario(&config), Err(ConfigError::NeedsFullCount(_))));
    }

    #[test]
    fn byzantine_ids_must_name_robots() {
        let mut config = base_config(4);
        config.byzantine = Some(ByzantineConfig {
            ids: vec![9],
            strategy: "honest".into(),
            script: None,
            seed: None,
        });
        assert!(matches!(build_scenario(&config), Err(ConfigError::UnknownByzantineId(9))));
    }

    #[test]
    fn seeded_byz_sets_are_reproducible_and_sized() {
        let a = seeded_byz_set(20, 3, 11, false);
        let b = seeded_byz_set(20, 3, 11, false);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        let with_r1 = seeded_byz_set(20, 3, 11, true);
        assert!(with_r1.contains(&1));
        assert_eq!(with_r1.len(), 3);
    }
}
