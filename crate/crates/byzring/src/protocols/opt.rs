//! Time- and memory-lean dispersion for IDs in `[1, n]` with a known fault
//! bound `f <= (n - 4) / 17`, relying on the follow primitive.
//!
//! Phase 1 gathers all non-Byzantine robots in three sub-phases:
//!
//! * rounds `1..=n`: robots with IDs in `[1, f+1]` walk clockwise; everyone
//!   else latches onto the first such leader it sees and follows it;
//! * rounds `n+1..=2n+1`: each group of four or more splits into quarters
//!   that sweep the ring in staggered opposite directions until they run
//!   into robot 1, whom they then follow; smaller groups hold still;
//! * rounds `2n+2..=3n+1`: everyone who ended the previous sub-phase with
//!   robot 1 claims so and sweeps clockwise; a waiting robot joins once at
//!   least `f+1` claiming robots arrive, inferring the sweep direction from
//!   the port most of them entered through.
//!
//! Phase 2 (rounds `3n+2..=4n+1`) disperses the gathered pile with the
//! rooted walk; every robot terminates at the end of round `4n+1`.

use serde::{Deserialize, Serialize};

use super::rooted::{rooted_step, RootedState, TerminatePolicy};
use super::StepCtx;
use crate::engine::{Action, Motion, ProtocolFields, RobotId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subgroup {
    #[default]
    Unassigned,
    /// Robot 1 itself.
    R1,
    /// Co-located with robot 1 when groups formed; follows it.
    WithR1,
    /// Fewer than four robots at the node; holds still.
    Small,
    LL,
    LU,
    UL,
    UU,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptState {
    pub round: u32,
    /// Leader followed during sub-phase 1.
    pub leader: Option<RobotId>,
    pub subgroup: Subgroup,
    pub met_r1: bool,
    pub was_with_r1: bool,
    /// Moving clockwise through the collection sweep (claimers and robots
    /// they have picked up).
    pub sweeping: bool,
    pub waiting: bool,
    pub rooted: Option<RootedState>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("group of {0} robots cannot be split into four subgroups")]
pub struct GroupTooSmall(pub usize);

/// Splits a sorted group of at least four IDs into the four sweep subgroups:
/// the lower half (rounded down) splits again into LL/LU, the upper half
/// into UL/UU, always giving the rounded-down half to the lower IDs.
pub fn partition_group(ids: &[RobotId]) -> Result<[Vec<RobotId>; 4], GroupTooSmall> {
    if ids.len() < 4 {
        return Err(GroupTooSmall(ids.len()));
    }
    debug_assert!(ids.windows(2).all(|w| w[0] < w[1]), "ids must be sorted and unique");
    let (lower, upper) = ids.split_at(ids.len() / 2);
    let (ll, lu) = lower.split_at(lower.len() / 2);
    let (ul, uu) = upper.split_at(upper.len() / 2);
    Ok([ll.to_vec(), lu.to_vec(), ul.to_vec(), uu.to_vec()])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sp2Move {
    Cw,
    Ccw,
    Hold,
}

/// The staggered sweep table for rounds `n+1..=2n+1`: LU walks clockwise for
/// the first n of those rounds, LL for the last n; UL/UU mirror them
/// counter-clockwise. The one-round stagger keeps each pair on consecutive
/// nodes so one of them always meets robot 1 regardless of how it moves.
pub fn subphase2_motion(sub: Subgroup, round: u32, n: u32) -> Sp2Move {
    debug_assert!(round >= n + 1 && round <= 2 * n + 1);
    match sub {
        Subgroup::LU => {
            if round <= 2 * n {
                Sp2Move::Cw
            } else {
                Sp2Move::Hold
            }
        }
        Subgroup::LL => {
            if round == n + 1 {
                Sp2Move::Hold
            } else {
                Sp2Move::Cw
            }
        }
        Subgroup::UU => {
            if round <= 2 * n {
                Sp2Move::Ccw
            } else {
                Sp2Move::Hold
            }
        }
        Subgroup::UL => {
            if round == n + 1 {
                Sp2Move::Hold
            } else {
                Sp2Move::Ccw
            }
        }
        _ => Sp2Move::Hold,
    }
}

const R1: RobotId = RobotId(1);

pub(super) fn step(ctx: &StepCtx, st: &mut OptState, n: u32, f: u32) -> Action {
    let r = ctx.obs.round;
    st.round = r;
    let mut exposed = ctx.exposed.clone();
    exposed.fields = ProtocolFields::Opt { with_r1: st.was_with_r1 };

    if r <= n {
        // Sub-phase 1: leaders walk, everyone else latches onto one.
        if ctx.me.0 <= f + 1 {
            return Action::new(exposed, Motion::Move(ctx.sense.clockwise_port), None, false);
        }
        if !st.leader.map(|l| ctx.obs.contains(l)).unwrap_or(false) {
            st.leader = ctx.obs.others(ctx.me).map(|o| o.id).filter(|id| id.0 <= f + 1).min();
        }
        let motion = match st.leader {
            Some(l) => Motion::Follow(l),
            None => Motion::Stay,
        };
        return Action::new(exposed, motion, None, false);
    }

    if r == n + 1 {
        // Groups form from physical co-location; everyone realigns its sense
        // so each group shares one notion of clockwise.
        let cw = *ctx.obs.local_ports.iter().min().expect("a node has two ports");
        let reset = Some(cw);
        if ctx.me == R1 {
            st.subgroup = Subgroup::R1;
            st.met_r1 = true;
            return Action::new(exposed, Motion::Stay, reset, false);
        }
        if ctx.obs.contains(R1) {
            st.subgroup = Subgroup::WithR1;
            st.met_r1 = true;
            return Action::new(exposed, Motion::Follow(R1), reset, false);
        }
        let ids: Vec<RobotId> = ctx.obs.colocated.iter().map(|o| o.id).collect();
        if ids.len() < 4 {
            st.subgroup = Subgroup::Small;
            return Action::new(exposed, Motion::Stay, reset, false);
        }
        let [ll, lu, ul, _uu] = partition_group(&ids).expect("group has at least four robots");
        st.subgroup = if ll.contains(&ctx.me) {
            Subgroup::LL
        } else if lu.contains(&ctx.me) {
            Subgroup::LU
        } else if ul.contains(&ctx.me) {
            Subgroup::UL
        } else {
            Subgroup::UU
        };
        let motion = match subphase2_motion(st.subgroup, r, n) {
            Sp2Move::Cw => Motion::Move(cw),
            Sp2Move::Ccw => Motion::Move(1 - cw),
            Sp2Move::Hold => Motion::Stay,
        };
        return Action::new(exposed, motion, reset, false);
    }

    if r <= 2 * n + 1 {
        // Sub-phase 2 body.
        if st.subgroup == Subgroup::R1 {
            return Action::new(exposed, Motion::Stay, None, false);
        }
        if st.met_r1 || ctx.obs.contains(R1) {
            st.met_r1 = true;
            let motion = if ctx.obs.contains(R1) { Motion::Follow(R1) } else { Motion::Stay };
            return Action::new(exposed, motion, None, false);
        }
        let motion = match subphase2_motion(st.subgroup, r, n) {
            Sp2Move::Cw => Motion::Move(ctx.sense.clockwise_port),
            Sp2Move::Ccw => Motion::Move(ctx.sense.counter_clockwise_port()),
            Sp2Move::Hold => Motion::Stay,
        };
        return Action::new(exposed, motion, None, false);
    }

    if r == 2 * n + 2 {
        // Whoever ended the meeting window with robot 1 claims so and starts
        // the collection sweep. The pile realigns its sense at its shared
        // node first: members may have joined with clashing senses picked up
        // at their original group nodes.
        if st.met_r1 || ctx.obs.contains(R1) {
            st.met_r1 = true;
            st.was_with_r1 = true;
            st.sweeping = true;
            exposed.fields = ProtocolFields::Opt { with_r1: true };
            let cw = *ctx.obs.local_ports.iter().min().expect("a node has two ports");
            return Action::new(exposed, Motion::Move(cw), Some(cw), false);
        }
        st.waiting = true;
        return Action::new(exposed, Motion::Stay, None, false);
    }

    if r <= 3 * n + 1 {
        // Sub-phase 3: sweep and collect.
        if st.sweeping {
            return Action::new(exposed, Motion::Move(ctx.sense.clockwise_port), None, false);
        }
        let arrivals: Vec<_> = ctx
            .obs
            .others(ctx.me)
            .filter(|o| o.entered_via.is_some() && o.exposed.opt_with_r1())
            .collect();
        if arrivals.len() as u32 >= f + 1 {
            let mut per_port = [0u32; 2];
            for o in &arrivals {
                per_port[o.entered_via.expect("arrivals entered") as usize] += 1;
            }
            // Ties only occur under Byzantine inflation; the lower label is
            // then treated as the majority port.
            let majority: u8 = if per_port[0] >= per_port[1] { 0 } else { 1 };
            let cw = 1 - majority;
            st.waiting = false;
            st.sweeping = true;
            return Action::new(exposed, Motion::Move(cw), Some(cw), false);
        }
        return Action::new(exposed, Motion::Stay, None, false);
    }

    // Phase 2: disperse the pile; everyone terminates at round 4n + 1.
    let local = r - (3 * n + 1);
    let rooted = st.rooted.get_or_insert_with(RootedState::default);
    let mut action = rooted_step(ctx, rooted, local, false, TerminatePolicy::AtLocalRound(n));
    if let ProtocolFields::Opt { with_r1 } = &mut action.exposed.fields {
        *with_r1 = st.was_with_r1;
    }
    action
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<RobotId> {
        v.iter().map(|&i| RobotId(i)).collect()
    }

    #[test]
    fn partition_splits_one_through_nine() {
        let [ll, lu, ul, uu] = partition_group(&ids(&[1, 2, 3, 4, 5, 6, 7, 8, 9])).unwrap();
        assert_eq!(ll, ids(&[1, 2]));
        assert_eq!(lu, ids(&[3, 4]));
        assert_eq!(ul, ids(&[5, 6]));
        assert_eq!(uu, ids(&[7, 8, 9]));
    }

    #[test]
    fn partition_of_four_gives_singletons() {
        let [ll, lu, ul, uu] = partition_group(&ids(&[4, 7, 8, 12])).unwrap();
        assert_eq!(ll, ids(&[4]));
        assert_eq!(lu, ids(&[7]));
        assert_eq!(ul, ids(&[8]));
        assert_eq!(uu, ids(&[12]));
    }

    #[test]
    fn partition_is_a_partition() {
        for size in 4..40usize {
            let input: Vec<RobotId> = (1..=size as u32).map(RobotId).collect();
            let parts = partition_group(&input).unwrap();
            let mut all: Vec<RobotId> = parts.iter().flatten().copied().collect();
            all.sort();
            assert_eq!(all, input, "every id in exactly one subgroup");
        }
    }

    #[test]
    fn partition_rejects_small_groups() {
        assert_eq!(partition_group(&ids(&[1, 2, 3])), Err(GroupTooSmall(3)));
    }

    #[test]
    fn sweep_table_matches_the_stagger() {
        let n = 10;
        assert_eq!(subphase2_motion(Subgroup::LU, n + 1, n), Sp2Move::Cw);
        assert_eq!(subphase2_motion(Subgroup::LL, n + 1, n), Sp2Move::Hold);
        assert_eq!(subphase2_motion(Subgroup::LL, n + 2, n), Sp2Move::Cw);
        assert_eq!(subphase2_motion(Subgroup::UL, n + 2, n), Sp2Move::Ccw);
        assert_eq!(subphase2_motion(Subgroup::UU, n + 1, n), Sp2Move::Ccw);
        assert_eq!(subphase2_motion(Subgroup::LU, 2 * n + 1, n), Sp2Move::Hold);
        assert_eq!(subphase2_motion(Subgroup::UU, 2 * n + 1, n), Sp2Move::Hold);
        assert_eq!(subphase2_motion(Subgroup::LL, 2 * n + 1, n), Sp2Move::Cw);
        assert_eq!(subphase2_motion(Subgroup::Small, n + 5, n), Sp2Move::Hold);
    }
}
