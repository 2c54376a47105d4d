use crate::matching::MatchError;
use crate::model::{Dataset, FeatureId, LandmarkId, MatchParams, Trajectory};
use crate::Point2;

/// Square region along a trajectory whose features share one planar displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// Global ordinal over all trajectories.
    pub id: usize,
    pub trajectory: usize,
    /// Arc length of the center along its trajectory.
    pub arc_position: f64,
    pub center: Point2,
    /// Direction of travel at the center; the box axes follow it.
    pub heading: f64,
    pub half_extent: f64,
    pub feature_ids: Vec<FeatureId>,
    pub landmark_ids: Vec<LandmarkId>,
}

impl Window {
    /// Chebyshev containment in the travel-aligned frame at the center.
    pub fn contains(&self, p: Point2) -> bool {
        let local = (p - self.center).rotated(-self.heading);
        local.x.abs() <= self.half_extent && local.y.abs() <= self.half_extent
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowLayout {
    pub windows: Vec<Window>,
    /// Features outside every window of their trajectory.
    pub unassigned: Vec<FeatureId>,
}

/// Arc positions of window centers for a trajectory of length `len`.
pub fn window_centers(len: f64, p: &MatchParams) -> Vec<f64> {
    let stride = p.stride();
    if len < p.window_length {
        return vec![len / 2.0];
    }
    let n = (len / stride).ceil().max(1.0) as usize;
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|k| len / 2.0 + (k as f64 - mid) * stride)
        .collect()
}

/// Position and travel direction at arc length `s` (clamped to the trajectory).
pub fn point_along(traj: &Trajectory, arcs: &[f64], s: f64) -> (Point2, f64) {
    let poses = traj.poses();
    let k = match arcs.binary_search_by(|a| a.total_cmp(&s)) {
        Ok(k) => k.min(poses.len() - 2),
        Err(k) => k.saturating_sub(1).min(poses.len() - 2),
    };
    let a = poses[k].transform.position_xy();
    let b = poses[k + 1].transform.position_xy();
    let seg = arcs[k + 1] - arcs[k];
    let heading = if seg > 0.0 {
        (b.y - a.y).atan2(b.x - a.x)
    } else {
        poses[k].transform.yaw()
    };
    let u = if seg > 0.0 {
        ((s - arcs[k]) / seg).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + (b - a) * u, heading)
}

/// Lays windows along every trajectory and collects features and candidate landmarks.
pub fn build_windows(data: &Dataset, p: &MatchParams) -> Result<WindowLayout, MatchError> {
    if data.trajectories.is_empty() {
        return Err(MatchError::EmptyInput);
    }
    p.validate()?;
    let half = p.window_length / 2.0;
    let radius = p.search_radius();
    let landmark_refs: Vec<Point2> = data
        .landmarks
        .iter()
        .map(|l| l.shape.reference_point())
        .collect();

    let mut by_traj: Vec<Vec<(FeatureId, Point2)>> = vec![Vec::new(); data.trajectories.len()];
    for f in &data.features {
        let (t, _) = data.anchor_slot(f);
        by_traj[t].push((f.id, data.feature_world(f).reference_point()));
    }

    let mut windows = Vec::new();
    let mut unassigned = Vec::new();
    for (ti, traj) in data.trajectories.iter().enumerate() {
        let arcs = traj.arc_lengths();
        let len = *arcs.last().expect("trajectory has poses");
        let first = windows.len();
        for s in window_centers(len, p) {
            let (center, heading) = point_along(traj, &arcs, s);
            let landmark_ids = data
                .landmarks
                .iter()
                .zip(&landmark_refs)
                .filter(|(_, r)| r.distance(center) <= radius)
                .map(|(l, _)| l.id)
                .collect();
            windows.push(Window {
                id: windows.len(),
                trajectory: ti,
                arc_position: s,
                center,
                heading,
                half_extent: half,
                feature_ids: Vec::new(),
                landmark_ids,
            });
        }
        for &(fid, pos) in &by_traj[ti] {
            let mut assigned = false;
            for w in &mut windows[first..] {
                if w.contains(pos) {
                    w.feature_ids.push(fid);
                    assigned = true;
                }
            }
            if !assigned {
                unassigned.push(fid);
            }
        }
    }
    Ok(WindowLayout {
        windows,
        unassigned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Anchor, Feature, Landmark, Pose};
    use crate::{Se3, Shape};

    fn straight(session: &str, len: f64, spacing: f64) -> Trajectory {
        let n = (len / spacing).round() as u64;
        let poses = (0..=n)
            .map(|i| Pose {
                session_id: session.into(),
                index: i,
                timestamp: i as f64,
                transform: Se3::from_planar(i as f64 * spacing, 0.0, 0.0),
            })
            .collect();
        Trajectory::new(session, poses).unwrap()
    }

    fn params(window_length: f64, overlap: f64) -> MatchParams {
        MatchParams {
            window_length,
            window_overlap: overlap,
            ..MatchParams::default()
        }
    }

    #[test]
    fn center_arithmetic() {
        // stride 20 over a 100 m span: 5 windows at 10, 30, ..., 90
        let c = window_centers(100.0, &params(40.0, 0.5));
        assert_eq!(c, vec![10.0, 30.0, 50.0, 70.0, 90.0]);
        // union of [c - 20, c + 20] covers [0, 100]
        assert!(c[0] - 20.0 <= 0.0 && c[4] + 20.0 >= 100.0);
        assert_eq!(window_centers(30.0, &params(40.0, 0.5)), vec![15.0]);
    }

    #[test]
    fn straight_trajectory_layout() {
        let data = Dataset::new(vec![straight("a", 100.0, 1.0)], vec![], vec![]).unwrap();
        let layout = build_windows(&data, &params(40.0, 0.5)).unwrap();
        assert_eq!(layout.windows.len(), 5);
        for (w, x) in layout.windows.iter().zip([10.0, 30.0, 50.0, 70.0, 90.0]) {
            assert!((w.center.x - x).abs() < 1e-12 && w.center.y.abs() < 1e-12);
        }
    }

    #[test]
    fn short_trajectory_gets_one_midpoint_window() {
        let data = Dataset::new(vec![straight("a", 30.0, 1.0)], vec![], vec![]).unwrap();
        let layout = build_windows(&data, &params(40.0, 0.5)).unwrap();
        assert_eq!(layout.windows.len(), 1);
        assert!((layout.windows[0].center.x - 15.0).abs() < 1e-12);
    }

    #[test]
    fn membership_and_unassigned() {
        let feats = vec![
            Feature {
                id: FeatureId(1),
                anchor: Anchor { session_id: "a".into(), pose_index: 50 },
                local: Shape::Pole(Point2::new(0.0, 5.0)),
            },
            Feature {
                id: FeatureId(2),
                anchor: Anchor { session_id: "a".into(), pose_index: 50 },
                local: Shape::Pole(Point2::new(0.0, 35.0)),
            },
        ];
        let lms = vec![
            Landmark { id: LandmarkId(1), shape: Shape::Pole(Point2::new(50.0, 5.0)) },
            Landmark { id: LandmarkId(2), shape: Shape::Pole(Point2::new(500.0, 5.0)) },
        ];
        let data = Dataset::new(vec![straight("a", 100.0, 1.0)], feats, lms).unwrap();
        let layout = build_windows(&data, &params(40.0, 0.5)).unwrap();
        assert_eq!(layout.unassigned, vec![FeatureId(2)]);
        let holders: Vec<_> = layout
            .windows
            .iter()
            .filter(|w| w.feature_ids.contains(&FeatureId(1)))
            .map(|w| w.id)
            .collect();
        assert_eq!(holders, vec![1, 2, 3]);
        assert!(layout.windows.iter().all(|w| !w.landmark_ids.contains(&LandmarkId(2))));
        assert!(layout.windows[2].landmark_ids.contains(&LandmarkId(1)));
    }

    #[test]
    fn no_trajectories_is_an_error() {
        let data = Dataset::new(vec![], vec![], vec![]).unwrap();
        assert!(matches!(
            build_windows(&data, &MatchParams::default()),
            Err(MatchError::EmptyInput)
        ));
    }
}
