//! Dispersion from a single node.
//!
//! In its first round each robot ranks itself among its co-located peers by
//! counting lower IDs, resets its sense of direction so everyone at the node
//! shares one notion of clockwise, and then walks `rank - 1` clockwise steps,
//! settling where it stops. The walk overlaps the ranking round: a robot of
//! rank `i` moves during rounds `1..=i-1`. Works for any number of Byzantine
//! peers, any ID range, and without knowing the ring size.

use serde::{Deserialize, Serialize};

use super::StepCtx;
use crate::engine::{Action, Motion};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootedPhase {
    #[default]
    RankCount,
    Walking,
    Settled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootedState {
    pub phase: RootedPhase,
    /// Position in the total ID order of the robots seen in the first round.
    pub rank: u32,
    pub steps_taken: u32,
    pub round: u32,
}

/// Standalone runs terminate as soon as the robot settles; when embedded as
/// the dispersion tail of another protocol, every robot instead terminates
/// at a caller-fixed local round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminatePolicy {
    OnSettle,
    AtLocalRound(u32),
}

pub fn rooted_step(
    ctx: &StepCtx,
    st: &mut RootedState,
    local_round: u32,
    skip_rank_count: bool,
    policy: TerminatePolicy,
) -> Action {
    st.round = local_round;
    let mut exposed = ctx.exposed.clone();
    let mut set_sense = None;
    let mut motion = Motion::Stay;

    if local_round == 1 {
        let lower = ctx.obs.others(ctx.me).filter(|r| r.id < ctx.me).count() as u32;
        st.rank = if skip_rank_count { 1 } else { 1 + lower };
        let cw = *ctx.obs.local_ports.iter().min().expect("a node has two ports");
        set_sense = Some(cw);
        if st.rank == 1 {
            st.phase = RootedPhase::Settled;
        } else {
            st.phase = RootedPhase::Walking;
            st.steps_taken = 1;
            motion = Motion::Move(cw);
            if st.steps_taken == st.rank - 1 {
                st.phase = RootedPhase::Settled;
            }
        }
    } else if st.phase == RootedPhase::Walking {
        st.steps_taken += 1;
        motion = Motion::Move(ctx.sense.clockwise_port);
        if st.steps_taken == st.rank - 1 {
            st.phase = RootedPhase::Settled;
        }
    }

    let settled = st.phase == RootedPhase::Settled;
    exposed.settled_claim = settled;
    let terminate = match policy {
        TerminatePolicy::OnSettle => settled,
        TerminatePolicy::AtLocalRound(t) => local_round == t,
    };
    Action::new(exposed, motion, set_sense, terminate)
}
