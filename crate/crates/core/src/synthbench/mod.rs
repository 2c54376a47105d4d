//! Synthetic scenes with ground truth for exercising matching and alignment.
//!
//! A scene is a street network with mapped landmarks and ground-truth routes.
//! Drift turns the routes into initial trajectories, and observation turns the
//! landmarks into noisy local features anchored to ground-truth poses, keeping
//! the feature-landmark correspondences for scoring.

mod drift;
mod metrics;
mod observe;
mod scene;

use serde::{Deserialize, Serialize};

pub use drift::{perturb_trajectory, DriftSpec};
pub use metrics::{evaluate_alignment, AlignmentMetrics, ClassRow, MetricsError, ALIGNED_TOLERANCE};
pub use observe::{default_detection, observe_features, Observation, ObservationSpec};
pub use scene::{default_densities, generate_scene, Layout, PoleRule, RoadNetwork, Scene, SceneSpec};

use crate::model::{Dataset, FeatureId, LandmarkId, ModelError, Trajectory};
use crate::Point2;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub scene: SceneSpec,
    pub drift: DriftSpec,
    pub observation: ObservationSpec,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), String> {
        self.scene.validate()?;
        self.drift.validate()?;
        self.observation.validate()
    }

    /// Derives every generator seed from one value.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scene.seed = seed;
        self.observation.seed = seed.wrapping_add(1);
        self
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    /// Drifted trajectories, features and landmarks.
    pub dataset: Dataset,
    pub ground_truth: Vec<Trajectory>,
    pub correspondences: Vec<(FeatureId, LandmarkId)>,
}

/// Generates, drifts and observes a scene.
pub fn build(spec: &SyntheticSpec) -> Result<SyntheticData, ModelError> {
    let scene = generate_scene(&spec.scene);
    let pivot = spec
        .drift
        .pivot
        .map_or_else(|| spec.scene.center(), |p| Point2::new(p[0], p[1]));
    let initial = scene
        .ground_truth
        .iter()
        .map(|t| perturb_trajectory(t, &spec.drift, pivot))
        .collect();
    let obs = observe_features(&scene.ground_truth, &scene.landmarks, &spec.observation);
    let dataset = Dataset::new(initial, obs.features, scene.landmarks)?;
    Ok(SyntheticData {
        dataset,
        ground_truth: scene.ground_truth,
        correspondences: obs.correspondences,
    })
}
