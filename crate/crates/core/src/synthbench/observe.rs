use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{Anchor, Feature, FeatureId, Landmark, LandmarkId, Trajectory};
use crate::{MarkingClass, Point2, Se3, Shape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationSpec {
    /// Detection probability per class; missing classes are always detected.
    pub detection: BTreeMap<MarkingClass, f64>,
    /// Isotropic positional noise per point or vertex (meters).
    pub sigma: f64,
    pub max_range: f64,
    pub seed: u64,
}

/// Detection rates shaped like the matched shares of a real survey.
pub fn default_detection() -> BTreeMap<MarkingClass, f64> {
    use MarkingClass::*;
    [
        (CurbLine, 0.92),
        (DashedLine12cm, 0.80),
        (Pole, 0.55),
        (DashedLine25cm, 0.77),
        (Line12cm, 0.83),
        (ArrowLine, 0.81),
        (Line25cm, 0.81),
        (StopLine, 0.77),
        (PedestrianRoadLine, 0.76),
        (ZebraLine, 0.76),
        (BicycleRoadLine, 0.78),
    ]
    .into_iter()
    .collect()
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self {
            detection: default_detection(),
            sigma: 0.05,
            max_range: 25.0,
            seed: 0,
        }
    }
}

impl ObservationSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.detection.values().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("detection probabilities must lie in [0, 1]".into());
        }
        if !(self.sigma >= 0.0) {
            return Err("sigma must be non-negative".into());
        }
        if !(self.max_range > 0.0) {
            return Err("max_range must be positive".into());
        }
        Ok(())
    }

    /// Same rate for every class.
    pub fn uniform_detection(p: f64) -> BTreeMap<MarkingClass, f64> {
        MarkingClass::ALL.into_iter().map(|c| (c, p)).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Observation {
    pub features: Vec<Feature>,
    /// Landmark each feature was generated from.
    pub correspondences: Vec<(FeatureId, LandmarkId)>,
}

fn to_local(pose: &Se3, p: Point2) -> Point2 {
    let q = pose.inverse().apply([p.x, p.y, 0.0]);
    Point2::new(q[0], q[1])
}

/// Copies of the landmarks as sensed from the ground-truth trajectories.
///
/// A pass is a run of consecutive poses within range of a landmark's
/// reference point. Each pass senses the landmark at most once, from its
/// nearest pose, subject to the class detection rate. Points and vertices receive independent noise in
/// the local frame.
pub fn observe_features(gt: &[Trajectory], landmarks: &[Landmark], o: &ObservationSpec) -> Observation {
    let noise = Normal::new(0.0, o.sigma.max(0.0)).expect("valid sigma");
    let mut out = Observation::default();
    let r = o.max_range;
    let cell = |p: Point2| ((p.x / r).floor() as i64, (p.y / r).floor() as i64);
    for (s, traj) in gt.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
        rng.set_stream(s as u64);
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (k, p) in traj.poses().iter().enumerate() {
            grid.entry(cell(p.transform.position_xy())).or_default().push(k);
        }
        for l in landmarks {
            let refp = l.shape.reference_point();
            let (cx, cy) = cell(refp);
            let mut within: Vec<(usize, f64)> = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for &k in grid.get(&(cx + dx, cy + dy)).into_iter().flatten() {
                        let d = traj.poses()[k].transform.position_xy().distance(refp);
                        if d <= r {
                            within.push((k, d));
                        }
                    }
                }
            }
            within.sort_by_key(|w| w.0);
            // one sighting per pass, from its nearest pose
            let mut passes: Vec<(usize, f64)> = Vec::new();
            for (i, &(k, d)) in within.iter().enumerate() {
                let new_pass = i == 0 || k > within[i - 1].0 + 1;
                match passes.last_mut() {
                    Some(best) if !new_pass => {
                        if d < best.1 {
                            *best = (k, d);
                        }
                    }
                    _ => passes.push((k, d)),
                }
            }
            let p_detect = o.detection.get(&l.class()).copied().unwrap_or(1.0);
            for (k, _) in passes {
                if !rng.random_bool(p_detect.clamp(0.0, 1.0)) {
                    continue;
                }
                let pose = &traj.poses()[k];
                let mut sense = |p: Point2| {
                    let q = to_local(&pose.transform, p);
                    if o.sigma > 0.0 {
                        q + Point2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                    } else {
                        q
                    }
                };
                let local = match &l.shape {
                    Shape::Pole(p) => Shape::Pole(sense(*p)),
                    Shape::Segment(c) => {
                        let vs = c.vertices().iter().map(|&v| sense(v)).collect();
                        Shape::Segment(crate::SegmentChain::new(vs, c.class()).expect("sensed chain"))
                    }
                };
                let id = FeatureId(out.features.len() as u64);
                out.features.push(Feature {
                    id,
                    anchor: Anchor {
                        session_id: traj.session_id().to_owned(),
                        pose_index: pose.index,
                    },
                    local,
                });
                out.correspondences.push((id, l.id));
            }
        }
    }
    out
}
