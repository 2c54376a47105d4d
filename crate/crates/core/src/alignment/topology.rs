use std::collections::HashMap;

use crate::alignment::AlignParams;
use crate::model::Trajectory;
use crate::Se3;

/// Pose location as `(trajectory, position)`.
pub type PoseRef = (usize, usize);

/// Pose pair whose initial relative transform is preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct PosePair {
    pub i: PoseRef,
    pub j: PoseRef,
    /// `inverse(P_j⁰) ∘ P_i⁰`.
    pub delta: Se3,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Topology {
    pub pairs: Vec<PosePair>,
}

impl Topology {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of pairs linking different trajectories.
    pub fn cross_session_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.i.0 != p.j.0).count()
    }
}

fn pair(trajs: &[Trajectory], i: PoseRef, j: PoseRef) -> PosePair {
    let pi = &trajs[i.0].poses()[i.1].transform;
    let pj = &trajs[j.0].poses()[j.1].transform;
    PosePair {
        i,
        j,
        delta: pj.inverse().compose(pi),
    }
}

/// Consecutive pairs of every trajectory plus nearby cross-trajectory pairs.
///
/// Cross pairs link poses of different trajectories whose initial positions
/// lie within `cross_session_radius`; candidates are admitted nearest first
/// while both poses have fewer than `max_cross_partners` partners.
pub fn build_topology(trajs: &[Trajectory], p: &AlignParams) -> Topology {
    let mut pairs = Vec::new();
    for (t, traj) in trajs.iter().enumerate() {
        for k in 1..traj.len() {
            pairs.push(pair(trajs, (t, k - 1), (t, k)));
        }
    }
    let r = p.cross_session_radius;
    if trajs.len() > 1 && r > 0.0 && p.max_cross_partners > 0 {
        let cell = |x: f64| (x / r).floor() as i64;
        let mut grid: HashMap<(i64, i64), Vec<PoseRef>> = HashMap::new();
        for (t, traj) in trajs.iter().enumerate() {
            for (k, pose) in traj.poses().iter().enumerate() {
                let q = pose.transform.position_xy();
                grid.entry((cell(q.x), cell(q.y))).or_default().push((t, k));
            }
        }
        let pos = |a: PoseRef| trajs[a.0].poses()[a.1].transform.position_xy();
        let mut candidates: Vec<(f64, PoseRef, PoseRef)> = Vec::new();
        for (t, traj) in trajs.iter().enumerate() {
            for (k, pose) in traj.poses().iter().enumerate() {
                let q = pose.transform.position_xy();
                let (cx, cy) = (cell(q.x), cell(q.y));
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else {
                            continue;
                        };
                        for &other in bucket {
                            if other.0 <= t {
                                continue;
                            }
                            let d = q.distance(pos(other));
                            if d <= r {
                                candidates.push((d, (t, k), other));
                            }
                        }
                    }
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut partners: HashMap<PoseRef, usize> = HashMap::new();
        for (_, a, b) in candidates {
            let na = partners.get(&a).copied().unwrap_or(0);
            let nb = partners.get(&b).copied().unwrap_or(0);
            if na < p.max_cross_partners && nb < p.max_cross_partners {
                partners.insert(a, na + 1);
                partners.insert(b, nb + 1);
                pairs.push(pair(trajs, a, b));
            }
        }
    }
    Topology { pairs }
}
