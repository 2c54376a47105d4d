//! Sliding-window RANSAC association of features to landmarks.
//!
//! Windows are laid along each trajectory. Inside a window, pairs of tentative
//! feature-landmark associations propose a planar displacement; the proposal
//! whose nearest-neighbour inliers give the smallest cost wins, subject to a
//! consistency gate against the previous window of the same trajectory.

mod ransac;
mod windows;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use ransac::{
    consistency_gate, evaluate_transform, fit_local_transform, fit_samples, fit_shapes,
    match_window, refine_transform, window_rng, Hypothesis, PreparedWindow, Registration, WindowResult, WindowStatus,
};
pub use windows::{build_windows, point_along, window_centers, Window, WindowLayout};

use crate::model::{Dataset, FeatureId, Match, MatchParams, ModelError};
use crate::solver::SolverError;
use crate::Se2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("no trajectories to match")]
    EmptyInput,
    #[error("window needs at least two features and two compatible landmarks")]
    InsufficientCandidates,
    #[error(transparent)]
    Params(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Clone, Debug)]
pub struct MatchOutput {
    /// At most one match per feature, sorted by feature id.
    pub matches: Vec<Match>,
    /// One result per window, in window id order.
    pub windows: Vec<WindowResult>,
    pub layout: WindowLayout,
}

/// Runs the windowed search over every trajectory and merges the inliers.
///
/// Trajectories are processed concurrently; windows of one trajectory run in
/// order, each gated against the latest converged window before it.
pub fn match_all(data: &Dataset, p: &MatchParams) -> Result<MatchOutput, MatchError> {
    let layout = build_windows(data, p)?;
    let mut per_traj: Vec<Vec<&Window>> = vec![Vec::new(); data.trajectories.len()];
    for w in &layout.windows {
        per_traj[w.trajectory].push(w);
    }
    let results: Vec<Vec<WindowResult>> = per_traj
        .par_iter()
        .map(|windows| {
            let mut prev: Option<Se2> = None;
            let mut out = Vec::with_capacity(windows.len());
            for w in windows {
                let prepared = PreparedWindow::new(data, w, p);
                let mut rng = window_rng(p.rng_seed, w.id);
                let r = match_window(&prepared, prev.as_ref(), p, &mut rng);
                if r.status == WindowStatus::Converged {
                    prev = Some(r.delta);
                }
                out.push(r);
            }
            out
        })
        .collect();
    let mut windows: Vec<WindowResult> = results.into_iter().flatten().collect();
    windows.sort_by_key(|r| r.window);

    // Overlapping windows may both claim a feature: keep the claim of the
    // window whose center is closest to the feature's initial position.
    let mut best: BTreeMap<FeatureId, (f64, usize, Match)> = BTreeMap::new();
    for r in windows.iter().filter(|r| r.status == WindowStatus::Converged) {
        let center = layout.windows[r.window].center;
        for m in &r.inliers {
            let f = data.feature(m.feature).expect("window feature exists");
            let d = data.feature_world(f).reference_point().distance(center);
            let better = match best.get(&m.feature) {
                None => true,
                Some(&(bd, bw, _)) => d < bd || (d == bd && r.window < bw),
            };
            if better {
                best.insert(m.feature, (d, r.window, m.clone()));
            }
        }
    }
    let matches = best.into_values().map(|(_, _, m)| m).collect();
    Ok(MatchOutput {
        matches,
        windows,
        layout,
    })
}
