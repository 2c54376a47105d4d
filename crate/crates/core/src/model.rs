//! Domain data shared by matching, alignment and file IO.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use crate::class::MarkingClass;
use crate::{Point2, Se3, Shape};

/// Upper bound on the distance between consecutive poses of a trajectory (meters).
pub const MAX_POSE_SPACING: f64 = 100.0;
/// Upper bound on feature coordinates relative to the anchor pose (meters).
pub const MAX_LOCAL_RANGE: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("trajectory `{session}`: {reason}")]
    InvalidTrajectory { session: String, reason: String },
    #[error("feature {id}: {reason}")]
    InvalidFeature { id: FeatureId, reason: String },
    #[error("landmark {id}: {reason}")]
    InvalidLandmark { id: LandmarkId, reason: String },
    #[error("match parameters: {0}")]
    InvalidParams(String),
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct FeatureId(pub u64);

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct LandmarkId(pub u64);

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LandmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub session_id: String,
    pub index: u64,
    pub timestamp: f64,
    /// Vehicle-to-world transform.
    pub transform: Se3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    session_id: String,
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(session_id: impl Into<String>, poses: Vec<Pose>) -> Result<Self, ModelError> {
        let session_id = session_id.into();
        let fail = |reason: String| ModelError::InvalidTrajectory {
            session: session_id.clone(),
            reason,
        };
        if poses.len() < 2 {
            return Err(fail(format!("needs at least 2 poses, got {}", poses.len())));
        }
        for (k, p) in poses.iter().enumerate() {
            if p.session_id != session_id {
                return Err(fail(format!("pose {} belongs to session `{}`", p.index, p.session_id)));
            }
            if p.transform.translation.iter().any(|v| !v.is_finite()) || !p.timestamp.is_finite() {
                return Err(fail(format!("pose {} is not finite", p.index)));
            }
            if k > 0 {
                let prev = &poses[k - 1];
                if p.index <= prev.index {
                    return Err(fail(format!("pose indices not increasing at {}", p.index)));
                }
                if p.timestamp < prev.timestamp {
                    return Err(fail(format!("timestamps decrease at pose {}", p.index)));
                }
                let gap = p.transform.position_xy().distance(prev.transform.position_xy());
                if gap >= MAX_POSE_SPACING {
                    return Err(fail(format!("pose {} is {gap:.1} m from its predecessor", p.index)));
                }
            }
        }
        Ok(Self { session_id, poses })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Position of the pose with the given index, if present.
    pub fn position_of(&self, index: u64) -> Option<usize> {
        self.poses.binary_search_by_key(&index, |p| p.index).ok()
    }

    /// Replaces all transforms, keeping ids and timestamps.
    pub fn with_transforms(&self, transforms: &[Se3]) -> Self {
        assert_eq!(transforms.len(), self.poses.len());
        Self {
            session_id: self.session_id.clone(),
            poses: self
                .poses
                .iter()
                .zip(transforms)
                .map(|(p, t)| Pose {
                    transform: *t,
                    ..p.clone()
                })
                .collect(),
        }
    }

    /// Cumulative planar arc length at each pose.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.poses.len());
        let mut s = 0.0;
        for (k, p) in self.poses.iter().enumerate() {
            if k > 0 {
                s += p
                    .transform
                    .position_xy()
                    .distance(self.poses[k - 1].transform.position_xy());
            }
            out.push(s);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Anchor {
    pub session_id: String,
    pub pose_index: u64,
}

/// Detected pole or marking, in the local ground frame of its anchor pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub id: FeatureId,
    pub anchor: Anchor,
    pub local: Shape,
}

impl Feature {
    pub fn class(&self) -> MarkingClass {
        self.local.class()
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bounded = |p: &Point2| p.x.is_finite() && p.y.is_finite() && p.norm() < MAX_LOCAL_RANGE;
        let ok = match &self.local {
            Shape::Pole(p) => bounded(p),
            Shape::Segment(c) => c.vertices().iter().all(bounded),
        };
        if !ok {
            return Err(ModelError::InvalidFeature {
                id: self.id,
                reason: format!("local coordinates exceed {MAX_LOCAL_RANGE} m"),
            });
        }
        Ok(())
    }
}

/// Geo-referenced pole or marking from the aerial imagery.
#[derive(Clone, Debug, PartialEq)]
pub struct Landmark {
    pub id: LandmarkId,
    pub shape: Shape,
}

impl Landmark {
    pub fn class(&self) -> MarkingClass {
        self.shape.class()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Match {
    pub feature: FeatureId,
    pub landmark: LandmarkId,
    /// Feature distance at the time the match was made.
    pub distance: f64,
}

/// Maps a feature's local geometry through its anchor pose onto the world ground plane.
pub fn feature_world_position(f: &Feature, pose: &Se3) -> Shape {
    match &f.local {
        Shape::Pole(p) => Shape::Pole(pose.apply_ground(*p)),
        Shape::Segment(c) => Shape::Segment(c.map_rigid(|p| pose.apply_ground(p))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    /// Edge length of the square window (meters).
    pub window_length: f64,
    /// Overlap fraction between consecutive windows.
    pub window_overlap: f64,
    /// Inlier threshold on the feature distance.
    pub inlier_threshold: f64,
    /// Absolute RANSAC termination cost; `None` uses `e_limit_per_feature × features`.
    pub e_limit: Option<f64>,
    pub e_limit_per_feature: f64,
    pub max_hypotheses: usize,
    /// Inter-window gate on rotation (radians).
    pub gate_angle: f64,
    /// Inter-window gate on translation (meters).
    pub gate_translation: f64,
    /// Weight of the segment distance relative to the pole distance.
    pub w_h: f64,
    /// Landmark radius around a window center; `None` uses `window_length / 2 + 10`.
    pub landmark_search_radius: Option<f64>,
    /// Hypotheses only pair a feature with landmarks whose reference points lie
    /// within this distance of the feature's initial reference point (meters).
    pub association_radius: f64,
    /// Refits of each hypothesis on its inliers; 0 scores the two-association fit alone.
    pub refine_rounds: usize,
    pub rng_seed: u64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            window_length: 100.0,
            window_overlap: 0.5,
            inlier_threshold: 1.0,
            e_limit: None,
            e_limit_per_feature: 0.3,
            max_hypotheses: 500,
            gate_angle: 1f64.to_radians(),
            gate_translation: 1.0,
            w_h: 1.0,
            landmark_search_radius: None,
            association_radius: 6.0,
            refine_rounds: 3,
            rng_seed: 0,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.to_owned()));
        if !(self.window_length > 0.0) {
            return bad("window_length must be positive");
        }
        if !(self.window_overlap > 0.0 && self.window_overlap < 1.0) {
            return bad("window_overlap must lie in (0, 1)");
        }
        if !(self.inlier_threshold > 0.0) {
            return bad("inlier_threshold must be positive");
        }
        if let Some(e) = self.e_limit {
            if !(e > 0.0) {
                return bad("e_limit must be positive");
            }
        }
        if !(self.e_limit_per_feature > 0.0) {
            return bad("e_limit_per_feature must be positive");
        }
        if self.max_hypotheses < 1 {
            return bad("max_hypotheses must be at least 1");
        }
        if !(self.gate_angle >= 0.0) || !(self.gate_translation >= 0.0) {
            return bad("gate thresholds must be non-negative");
        }
        if !(self.w_h > 0.0) {
            return bad("w_h must be positive");
        }
        if let Some(r) = self.landmark_search_radius {
            if !(r > 0.0) {
                return bad("landmark_search_radius must be positive");
            }
        }
        if !(self.association_radius > 0.0) {
            return bad("association_radius must be positive");
        }
        Ok(())
    }

    pub fn search_radius(&self) -> f64 {
        self.landmark_search_radius
            .unwrap_or(self.window_length / 2.0 + 10.0)
    }

    pub fn e_limit_for(&self, feature_count: usize) -> f64 {
        self.e_limit
            .unwrap_or(self.e_limit_per_feature * feature_count as f64)
    }

    pub fn stride(&self) -> f64 {
        self.window_length * (1.0 - self.window_overlap)
    }
}

/// Pose location inside a trajectory set: `(trajectory, position)`.
pub type PoseSlot = (usize, usize);

/// Validated trajectories, features and landmarks with lookup tables.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub features: Vec<Feature>,
    pub landmarks: Vec<Landmark>,
    pose_slots: HashMap<(String, u64), PoseSlot>,
    feature_index: BTreeMap<FeatureId, usize>,
    landmark_index: BTreeMap<LandmarkId, usize>,
}

impl Dataset {
    pub fn new(
        trajectories: Vec<Trajectory>,
        features: Vec<Feature>,
        landmarks: Vec<Landmark>,
    ) -> Result<Self, ModelError> {
        let mut pose_slots = HashMap::new();
        for (ti, t) in trajectories.iter().enumerate() {
            if trajectories[..ti].iter().any(|o| o.session_id == t.session_id) {
                return Err(ModelError::InvalidTrajectory {
                    session: t.session_id.clone(),
                    reason: "duplicate session id".into(),
                });
            }
            for (pi, p) in t.poses.iter().enumerate() {
                pose_slots.insert((t.session_id.clone(), p.index), (ti, pi));
            }
        }
        let mut feature_index = BTreeMap::new();
        for (k, f) in features.iter().enumerate() {
            f.validate()?;
            let key = (f.anchor.session_id.clone(), f.anchor.pose_index);
            if !pose_slots.contains_key(&key) {
                return Err(ModelError::InvalidFeature {
                    id: f.id,
                    reason: format!(
                        "anchored to unknown pose {} of session `{}`",
                        f.anchor.pose_index, f.anchor.session_id
                    ),
                });
            }
            if feature_index.insert(f.id, k).is_some() {
                return Err(ModelError::InvalidFeature {
                    id: f.id,
                    reason: "duplicate id".into(),
                });
            }
        }
        let mut landmark_index = BTreeMap::new();
        for (k, l) in landmarks.iter().enumerate() {
            if landmark_index.insert(l.id, k).is_some() {
                return Err(ModelError::InvalidLandmark {
                    id: l.id,
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Self {
            trajectories,
            features,
            landmarks,
            pose_slots,
            feature_index,
            landmark_index,
        })
    }

    pub fn pose_slot(&self, anchor: &Anchor) -> Option<PoseSlot> {
        self.pose_slots
            .get(&(anchor.session_id.clone(), anchor.pose_index))
            .copied()
    }

    pub fn anchor_slot(&self, f: &Feature) -> PoseSlot {
        self.pose_slot(&f.anchor).expect("validated anchor")
    }

    pub fn feature(&self, id: FeatureId) -> Option<&Feature> {
        self.feature_index.get(&id).map(|&k| &self.features[k])
    }

    pub fn feature_position(&self, id: FeatureId) -> Option<usize> {
        self.feature_index.get(&id).copied()
    }

    pub fn landmark(&self, id: LandmarkId) -> Option<&Landmark> {
        self.landmark_index.get(&id).map(|&k| &self.landmarks[k])
    }

    pub fn landmark_position(&self, id: LandmarkId) -> Option<usize> {
        self.landmark_index.get(&id).copied()
    }

    /// World geometry of a feature under the current trajectory estimates.
    pub fn feature_world(&self, f: &Feature) -> Shape {
        let (t, p) = self.anchor_slot(f);
        feature_world_position(f, &self.trajectories[t].poses[p].transform)
    }

    /// Copy with replaced trajectories (same sessions and pose indices).
    pub fn with_trajectories(&self, trajectories: Vec<Trajectory>) -> Self {
        debug_assert_eq!(trajectories.len(), self.trajectories.len());
        Self {
            trajectories,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuaternion;
    use crate::Se2;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn pose(session: &str, index: u64, x: f64, y: f64, yaw: f64) -> Pose {
        Pose {
            session_id: session.into(),
            index,
            timestamp: index as f64 * 0.1,
            transform: Se3::from_planar(x, y, yaw),
        }
    }

    fn pole_feature(id: u64, session: &str, index: u64, x: f64, y: f64) -> Feature {
        Feature {
            id: FeatureId(id),
            anchor: Anchor {
                session_id: session.into(),
                pose_index: index,
            },
            local: Shape::Pole(Point2::new(x, y)),
        }
    }

    #[test]
    fn world_position_examples() {
        let f = pole_feature(1, "a", 0, 1.0, 2.0);
        assert_eq!(
            feature_world_position(&f, &Se3::identity()),
            Shape::Pole(Point2::new(1.0, 2.0))
        );
        let t = Se3::new(UnitQuaternion::identity(), [10.0, 0.0, 0.0]);
        assert_eq!(
            feature_world_position(&f, &t),
            Shape::Pole(Point2::new(11.0, 2.0))
        );
        // 90° yaw + (0, 5, 0): homogeneous oracle [[0,-1,0],[1,0,5]]·(1,0,1) = (0, 6)
        let g = pole_feature(2, "a", 0, 1.0, 0.0);
        let Shape::Pole(p) = feature_world_position(&g, &Se3::from_planar(0.0, 5.0, FRAC_PI_2)) else {
            unreachable!()
        };
        assert!(p.distance(Point2::new(0.0, 6.0)) < 1e-12);
    }

    #[test]
    fn trajectory_invariants() {
        assert!(Trajectory::new("a", vec![pose("a", 0, 0.0, 0.0, 0.0)]).is_err());
        assert!(Trajectory::new(
            "a",
            vec![pose("a", 1, 0.0, 0.0, 0.0), pose("a", 1, 1.0, 0.0, 0.0)]
        )
        .is_err());
        assert!(Trajectory::new(
            "a",
            vec![pose("a", 0, 0.0, 0.0, 0.0), pose("a", 1, 150.0, 0.0, 0.0)]
        )
        .is_err());
        let mut late = pose("a", 1, 1.0, 0.0, 0.0);
        late.timestamp = -1.0;
        assert!(Trajectory::new("a", vec![pose("a", 0, 0.0, 0.0, 0.0), late]).is_err());
        let t = Trajectory::new(
            "a",
            vec![pose("a", 0, 0.0, 0.0, 0.0), pose("a", 3, 3.0, 4.0, 0.0)],
        )
        .unwrap();
        assert_eq!(t.arc_lengths(), vec![0.0, 5.0]);
        assert_eq!(t.position_of(3), Some(1));
    }

    #[test]
    fn dataset_rejects_dangling_anchor() {
        let t = Trajectory::new(
            "a",
            vec![pose("a", 0, 0.0, 0.0, 0.0), pose("a", 1, 1.0, 0.0, 0.0)],
        )
        .unwrap();
        let err = Dataset::new(vec![t], vec![pole_feature(7, "a", 9, 1.0, 1.0)], vec![])
            .unwrap_err();
        assert!(matches!(err, ModelError::InvalidFeature { id: FeatureId(7), .. }));
        assert!(err.to_string().contains("feature 7"));
    }

    #[test]
    fn feature_range_bound() {
        let t = Trajectory::new(
            "a",
            vec![pose("a", 0, 0.0, 0.0, 0.0), pose("a", 1, 1.0, 0.0, 0.0)],
        )
        .unwrap();
        let far = pole_feature(1, "a", 0, 250.0, 0.0);
        assert!(Dataset::new(vec![t], vec![far], vec![]).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(MatchParams::default().validate().is_ok());
        let p = MatchParams {
            window_overlap: 1.0,
            ..MatchParams::default()
        };
        assert!(p.validate().is_err());
        let p = MatchParams {
            max_hypotheses: 0,
            ..MatchParams::default()
        };
        assert!(p.validate().is_err());
        assert_eq!(MatchParams::default().search_radius(), 60.0);
        assert!((MatchParams::default().e_limit_for(10) - 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn world_position_commutes_with_planar_premultiplication(
            x in -100.0..100.0f64, y in -100.0..100.0f64, yaw in -3.1..3.1f64,
            gx in -50.0..50.0f64, gy in -50.0..50.0f64, gt in -3.1..3.1f64,
            px in -20.0..20.0f64, py in -20.0..20.0f64,
        ) {
            let f = pole_feature(1, "a", 0, px, py);
            let pose = Se3::from_planar(x, y, yaw);
            let g = Se2::new(gx, gy, gt);
            let lhs = feature_world_position(&f, &pose.premul_planar(&g));
            let rhs = feature_world_position(&f, &pose).transformed(&g);
            let (Shape::Pole(a), Shape::Pole(b)) = (lhs, rhs) else { unreachable!() };
            prop_assert!(a.distance(b) < 1e-9);
        }
    }
}
