//! Time-lean dispersion: n rounds, no ID-space or fault-bound assumptions,
//! at the price of remembering every settle decision ever witnessed.
//!
//! Each robot walks clockwise and keeps, entirely in exposed memory, a
//! per-round record of the robots it computed as settling at the node it was
//! on. A recorded robot met again later must have moved after claiming to
//! settle and is therefore Byzantine; the set of such robots currently
//! co-located is the B set. A robot settles unless a co-located settled
//! claimant, or a lower-ID co-located robot that the shared settle
//! computation admits, is still credible (not in its B set).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::StepCtx;
use crate::engine::{Action, Motion, ProtocolFields, RobotId};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeOptState {
    pub round: u32,
    pub settled_round: Option<u32>,
}

/// The IDs recorded in slots `1..k-1` that are co-located again in round k.
pub fn timeopt_compute_b(
    records: &[BTreeSet<RobotId>],
    round: u32,
    colocated: &BTreeSet<RobotId>,
) -> BTreeSet<RobotId> {
    let mut b = BTreeSet::new();
    for slot in records.iter().take(round.saturating_sub(1) as usize) {
        for &id in slot {
            if colocated.contains(&id) {
                b.insert(id);
            }
        }
    }
    b
}

/// The iterative settle-set computation, shared by every robot on the node.
///
/// The set starts as the settled claimants the viewer itself still finds
/// credible. Each active robot `s`, in ascending ID order, is skipped when
/// some settled claimant is still credible to `s`, and admitted when no
/// robot already in the set is credible to `s`.
pub fn timeopt_compute_s(
    viewer_b: &BTreeSet<RobotId>,
    settled: &[RobotId],
    active: &[RobotId],
    b_of: &BTreeMap<RobotId, BTreeSet<RobotId>>,
) -> BTreeSet<RobotId> {
    let mut s: BTreeSet<RobotId> =
        settled.iter().filter(|t| !viewer_b.contains(t)).copied().collect();
    for a in active {
        let b_a = &b_of[a];
        if settled.iter().any(|t| !b_a.contains(t)) {
            continue;
        }
        if !s.iter().any(|t| !b_a.contains(t)) {
            s.insert(*a);
        }
    }
    s
}

pub(super) fn step(ctx: &StepCtx, st: &mut TimeOptState, n: u32, skip_check2: bool) -> Action {
    let k = ctx.obs.round;
    st.round = k;
    let mut exposed = ctx.exposed.clone();

    if st.settled_round.is_some() {
        // Stay visible on the claimed node until the last round, then stop.
        return Action::new(exposed, Motion::Stay, None, k >= n);
    }

    let colocated: BTreeSet<RobotId> = ctx.obs.colocated.iter().map(|o| o.id).collect();
    let settled: Vec<RobotId> = ctx
        .obs
        .colocated
        .iter()
        .filter(|o| o.id != ctx.me && o.exposed.settled_claim)
        .map(|o| o.id)
        .collect();
    let active: Vec<RobotId> = ctx
        .obs
        .colocated
        .iter()
        .filter(|o| o.id == ctx.me || !o.exposed.settled_claim)
        .map(|o| o.id)
        .collect();

    let empty = Vec::new();
    let b_me = timeopt_compute_b(
        ctx.exposed.timeopt_records().unwrap_or(&empty),
        k,
        &colocated,
    );
    let b_of: BTreeMap<RobotId, BTreeSet<RobotId>> = active
        .iter()
        .map(|&id| {
            let obs = ctx.obs.robot(id).expect("active robot is co-located");
            let records = obs.exposed.timeopt_records().unwrap_or(&empty);
            (id, timeopt_compute_b(records, k, &colocated))
        })
        .collect();
    let s = timeopt_compute_s(&b_me, &settled, &active, &b_of);

    let check1 = settled.iter().any(|t| !b_me.contains(t));
    let check2 = !skip_check2
        && s.iter().any(|x| x.0 < ctx.me.0 && !b_me.contains(x));

    if !check1 && !check2 {
        st.settled_round = Some(k);
        exposed.settled_claim = true;
        return Action::new(exposed, Motion::Stay, None, k >= n);
    }

    // Record the credible part of the settle set in slot k and move on.
    let slot: BTreeSet<RobotId> = s.iter().filter(|x| !b_me.contains(x)).copied().collect();
    if let ProtocolFields::TimeOpt { records } = &mut exposed.fields {
        while records.len() < (k - 1) as usize {
            records.push(BTreeSet::new());
        }
        records.push(slot);
    }
    Action::new(exposed, Motion::Move(ctx.sense.clockwise_port), None, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<RobotId> {
        v.iter().map(|&i| RobotId(i)).collect()
    }

    fn id_set(v: &[u32]) -> BTreeSet<RobotId> {
        v.iter().map(|&i| RobotId(i)).collect()
    }

    #[test]
    fn b_set_is_empty_for_empty_records() {
        assert!(timeopt_compute_b(&[], 5, &id_set(&[1, 2, 3])).is_empty());
    }

    #[test]
    fn b_set_catches_reencountered_recorded_ids() {
        // ID 7 recorded at round 2, co-located again at round 4.
        let records = vec![BTreeSet::new(), id_set(&[7])];
        assert_eq!(timeopt_compute_b(&records, 4, &id_set(&[3, 7])), id_set(&[7]));
        // Not co-located: stays out.
        assert!(timeopt_compute_b(&records, 4, &id_set(&[3])).is_empty());
        // The current round's own slot does not count: at round 2 only slot 1 is visible.
        assert!(timeopt_compute_b(&records, 2, &id_set(&[7])).is_empty());
    }

    #[test]
    fn settle_set_admits_only_the_lowest_active_when_b_sets_are_empty() {
        let b_of: BTreeMap<RobotId, BTreeSet<RobotId>> =
            [(RobotId(3), BTreeSet::new()), (RobotId(9), BTreeSet::new())].into();
        let s = timeopt_compute_s(&BTreeSet::new(), &[], &ids(&[3, 9]), &b_of);
        assert_eq!(s, id_set(&[3]), "9 sees 3 already admitted and credible");
    }

    #[test]
    fn settle_set_keeps_a_credible_settled_robot_and_blocks_actives() {
        let b_of: BTreeMap<RobotId, BTreeSet<RobotId>> =
            [(RobotId(4), BTreeSet::new())].into();
        let s = timeopt_compute_s(&BTreeSet::new(), &ids(&[2]), &ids(&[4]), &b_of);
        assert_eq!(s, id_set(&[2]));
    }

    #[test]
    fn settle_set_admits_an_active_when_all_settled_are_discredited() {
        // Settled robot 2 is in everyone's B set; active 4 takes the node.
        let viewer_b = id_set(&[2]);
        let b_of: BTreeMap<RobotId, BTreeSet<RobotId>> = [(RobotId(4), id_set(&[2]))].into();
        let s = timeopt_compute_s(&viewer_b, &ids(&[2]), &ids(&[4]), &b_of);
        assert_eq!(s, id_set(&[4]), "init is empty, the iteration adds 4");
    }
}
