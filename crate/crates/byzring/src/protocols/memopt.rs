//! Memory-lean dispersion for IDs in `[1, n]` (or `[1, U]`).
//!
//! Gathering runs in stages of n rounds; in stage i the robot with ID i
//! leads. The leader idles the first stage round while announcing the port
//! of its upcoming clockwise walk in exposed memory, then walks for the
//! remaining n-1 rounds, which still covers every node. A robot that finds
//! the leader adopts the leader's direction — from the announcement when the
//! leader sat still last round, otherwise from the port the leader just
//! entered through — and keeps moving that way until the stage ends.
//! Restricting movement to one leader ID per stage is what lets a robot
//! track the leader without remembering other robots.
//!
//! After the last stage the gathered pile disperses with the rooted walk and
//! every robot terminates together at the fixed final round.

use serde::{Deserialize, Serialize};

use super::rooted::{rooted_step, RootedState, TerminatePolicy};
use super::{MemOptMode, StepCtx};
use crate::engine::{Action, Motion, RobotId};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemOptState {
    pub round: u32,
    /// Locked onto the current stage leader's direction.
    pub following_leader: bool,
    pub rooted: Option<RootedState>,
}

/// Stage number (1-based) containing `round`.
pub fn stage_of(round: u32, n: u32) -> u32 {
    (round + n - 1) / n
}

/// How many gathering stages the variant runs.
pub fn gathering_stages(mode: &MemOptMode, n: u32) -> u32 {
    match *mode {
        MemOptMode::Full => n,
        MemOptMode::FKnown { f } => f + 1,
        MemOptMode::IdRange { max_id } => max_id,
    }
}

pub fn gathering_rounds(mode: &MemOptMode, n: u32) -> u32 {
    gathering_stages(mode, n) * n
}

pub(super) fn step(ctx: &StepCtx, st: &mut MemOptState, n: u32, mode: &MemOptMode) -> Action {
    let r = ctx.obs.round;
    st.round = r;
    let gather = gathering_rounds(mode, n);

    if r > gather {
        let local = r - gather;
        let rooted = st.rooted.get_or_insert_with(RootedState::default);
        return rooted_step(ctx, rooted, local, false, TerminatePolicy::AtLocalRound((n - 1).max(1)));
    }

    let stage = stage_of(r, n);
    let stage_round = r - (stage - 1) * n;
    let mut exposed = ctx.exposed.clone();

    let (motion, set_sense) = if ctx.me.0 == stage {
        if stage_round == 1 {
            // Idle one round so the direction announcement below is readable
            // before the walk starts; n-1 moves still visit every node.
            (Motion::Stay, None)
        } else {
            (Motion::Move(ctx.sense.clockwise_port), None)
        }
    } else if stage_round == 1 {
        st.following_leader = false;
        (Motion::Stay, None)
    } else if st.following_leader {
        (Motion::Move(ctx.sense.clockwise_port), None)
    } else {
        match ctx.obs.robot(RobotId(stage)) {
            Some(leader) => {
                let direction = match leader.entered_via {
                    // The leader is mid-walk; it keeps going straight, out
                    // through the port it did not enter by.
                    Some(entry) => Some(1 - entry),
                    // The leader sat still last round, so its announcement
                    // names a port of this very node.
                    None => leader.exposed.move_intent,
                };
                match direction {
                    Some(d) if d <= 1 => {
                        st.following_leader = true;
                        (Motion::Move(d), Some(d))
                    }
                    _ => (Motion::Stay, None),
                }
            }
            None => (Motion::Stay, None),
        }
    };

    // Announce the port of this round's move, or of a clockwise move from
    // here when staying put; the latter is what makes a stage leader's first
    // move learnable by the robots standing next to it.
    exposed.move_intent = Some(match (motion, set_sense) {
        (Motion::Move(p), _) => p,
        (_, Some(d)) => d,
        _ => ctx.sense.clockwise_port,
    });
    Action::new(exposed, motion, set_sense, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_arithmetic() {
        assert_eq!(stage_of(7, 3), 3);
        assert_eq!(stage_of(1, 3), 1);
        assert_eq!(stage_of(3, 3), 1);
        assert_eq!(stage_of(4, 3), 2);
        assert_eq!(stage_of(100, 10), 10);
    }

    #[test]
    fn variant_budgets() {
        assert_eq!(gathering_stages(&MemOptMode::FKnown { f: 3 }, 10), 4);
        assert_eq!(gathering_rounds(&MemOptMode::FKnown { f: 3 }, 10), 40);
        assert_eq!(gathering_rounds(&MemOptMode::Full, 10), 100);
        assert_eq!(gathering_rounds(&MemOptMode::IdRange { max_id: 15 }, 10), 150);
    }
}
