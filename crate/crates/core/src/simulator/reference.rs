use std::collections::BTreeMap;

use super::{identity_rows, rotation_scale_shear, EventAction, EventSpec, Keyframe, ManeuverSchedule, Scenario};
use crate::framework::{FrameworkDoc, NodeId, NominalFramework};
use crate::geometry::Tolerances;
use crate::reconfig::{euc_construct, AttachmentSpec, TieBreak};

fn attach(node: u32, nbrs: &[u32], pos: [f64; 2]) -> AttachmentSpec {
    AttachmentSpec { node: NodeId(node), position: pos.to_vec(), in_neighbors: nbrs.iter().map(|&n| NodeId(n)).collect() }
}

/// Three leaders and six followers in the plane. Follower-to-follower
/// weights are kept small so that the sampled-sensing gains admit a
/// sampling period of one integration step.
///
/// Removing follower 4 with the smallest-id rule hands its role down the
/// path 4 -> 6 -> 7 -> 8.
pub fn reference_framework() -> NominalFramework {
    euc_construct(
        2,
        vec![(NodeId(1), vec![3.0, 0.0]), (NodeId(2), vec![0.0, 3.0]), (NodeId(3), vec![0.0, -3.0])],
        &[
            attach(4, &[1, 2], [1.5, 1.5]),
            attach(5, &[1, 3], [1.5, -1.5]),
            attach(6, &[4, 2, 3], [-0.1, 1.0]),
            attach(7, &[6, 1, 3], [2.0, -0.8]),
            attach(8, &[7, 1, 2], [2.2, 0.6]),
            attach(9, &[1, 2, 3], [-1.0, 0.0]),
        ],
        &Tolerances::default(),
    )
    .expect("reference framework is a valid construction")
}

fn pose(t: f64, a: Vec<Vec<f64>>) -> Keyframe {
    Keyframe { t, a, b: vec![0.0, 0.0] }
}

/// Node 4 leaves at t = 60 and rejoins at t = 500 in the slot vacated at the
/// end of the inheritance path; the run ends at t = 740. The formation
/// drifts along +x and rotates, squeezes and shears on the way.
pub fn reference_scenario() -> Scenario {
    let fw = reference_framework();
    let maneuver = ManeuverSchedule {
        keyframes: vec![
            pose(45.0, identity_rows(2)),
            pose(46.0, rotation_scale_shear(0.25, 1.0, 1.0, 0.0)),
            pose(150.0, rotation_scale_shear(0.25, 1.0, 1.0, 0.0)),
            pose(151.0, rotation_scale_shear(0.25, 1.0, 0.6, 0.0)),
            pose(260.0, rotation_scale_shear(0.25, 1.0, 0.6, 0.0)),
            pose(261.0, rotation_scale_shear(0.0, 1.0, 0.6, 0.4)),
            pose(380.0, rotation_scale_shear(0.0, 1.0, 0.6, 0.4)),
            pose(381.0, identity_rows(2)),
            pose(600.0, identity_rows(2)),
            pose(601.0, rotation_scale_shear(-0.2, 1.1, 1.0, 0.0)),
        ],
        drift: vec![0.05, 0.0],
    };
    let offsets: BTreeMap<NodeId, Vec<f64>> = [
        (4, [0.3, -0.2]),
        (5, [-0.2, 0.3]),
        (6, [0.25, 0.25]),
        (7, [-0.3, 0.1]),
        (8, [0.2, -0.3]),
        (9, [-0.1, -0.25]),
    ]
    .into_iter()
    .map(|(id, off)| (NodeId(id), off.to_vec()))
    .collect();
    Scenario {
        framework: FrameworkDoc::from(&fw),
        order: 2,
        gains: None,
        maneuver,
        smsi: None,
        dt: 0.01,
        horizon: 740.0,
        events: vec![
            EventSpec { t: 60.0, action: EventAction::Remove { node: NodeId(4), tie_break: TieBreak::SmallestId } },
            EventSpec {
                t: 500.0,
                action: EventAction::Add {
                    node: NodeId(4),
                    position: vec![2.2, 0.6],
                    in_neighbors: vec![NodeId(8), NodeId(1), NodeId(2)],
                    spawn_offset: vec![0.3, 0.3],
                },
            },
        ],
        initial_offsets: offsets,
        shuffle_seed: None,
        sample_every: 10,
    }
}
