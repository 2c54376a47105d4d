use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::heading_difference;
use crate::model::{Feature, FeatureId, LandmarkId, Match, Trajectory};
use crate::MarkingClass;

/// Position error below which a stretch of trajectory counts as aligned.
pub const ALIGNED_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("trajectory {index}: {aligned} aligned poses vs {truth} ground-truth poses")]
    LengthMismatch {
        index: usize,
        aligned: usize,
        truth: usize,
    },
}

/// Per-class detection and match counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: MarkingClass,
    /// Features of this class.
    pub features: usize,
    /// Features of this class carrying a match.
    pub matched: usize,
    /// `matched / features`.
    pub matched_share: f64,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMetrics {
    pub poses: usize,
    pub position_rmse: f64,
    pub position_max: f64,
    /// Radians.
    pub heading_rmse: f64,
    pub heading_max: f64,
    pub matches: usize,
    pub correct_matches: usize,
    pub correspondences: usize,
    /// Correct share of the matches; 1 without matches.
    pub precision: f64,
    /// Share of the generated correspondences recovered; 1 without any.
    pub recall: f64,
    pub total_length: f64,
    pub aligned_length: f64,
    /// Share of arc length whose pose errors stay below the tolerance at both ends.
    pub aligned_fraction: f64,
    pub aligned_tolerance: f64,
    pub classes: Vec<ClassRow>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Compares aligned trajectories and matches with the ground truth.
pub fn evaluate_alignment(
    aligned: &[Trajectory],
    gt: &[Trajectory],
    features: &[Feature],
    matches: &[Match],
    correspondences: &[(FeatureId, LandmarkId)],
) -> Result<AlignmentMetrics, MetricsError> {
    if aligned.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            index: aligned.len().min(gt.len()),
            aligned: aligned.len(),
            truth: gt.len(),
        });
    }
    let (mut n, mut sq, mut max, mut hsq, mut hmax) = (0usize, 0.0, 0.0f64, 0.0, 0.0f64);
    let (mut total, mut good) = (0.0, 0.0);
    for (index, (a, t)) in aligned.iter().zip(gt).enumerate() {
        if a.len() != t.len() {
            return Err(MetricsError::LengthMismatch {
                index,
                aligned: a.len(),
                truth: t.len(),
            });
        }
        let errs: Vec<f64> = a
            .poses()
            .iter()
            .zip(t.poses())
            .map(|(pa, pt)| {
                let e = pa.transform.position_xy().distance(pt.transform.position_xy());
                let h = heading_difference(&pa.transform, &pt.transform).abs();
                n += 1;
                sq += e * e;
                max = max.max(e);
                hsq += h * h;
                hmax = hmax.max(h);
                e
            })
            .collect();
        for k in 1..t.len() {
            let len = t.poses()[k]
                .transform
                .position_xy()
                .distance(t.poses()[k - 1].transform.position_xy());
            total += len;
            if errs[k] < ALIGNED_TOLERANCE && errs[k - 1] < ALIGNED_TOLERANCE {
                good += len;
            }
        }
    }
    let rmse = |s: f64| if n == 0 { 0.0 } else { (s / n as f64).sqrt() };

    let truth: BTreeMap<FeatureId, LandmarkId> = correspondences.iter().copied().collect();
    let class_of: BTreeMap<FeatureId, MarkingClass> = features.iter().map(|f| (f.id, f.class())).collect();
    let matched: BTreeSet<FeatureId> = matches.iter().map(|m| m.feature).collect();
    let is_correct = |m: &Match| truth.get(&m.feature) == Some(&m.landmark);
    let correct = matches.iter().filter(|m| is_correct(m)).count();

    let classes = MarkingClass::ALL
        .into_iter()
        .map(|class| {
            let of_class = |f: &FeatureId| class_of.get(f) == Some(&class);
            let feats = features.iter().filter(|f| f.class() == class).count();
            let ms: Vec<&Match> = matches.iter().filter(|m| of_class(&m.feature)).collect();
            let c = ms.iter().filter(|m| is_correct(m)).count();
            let corr = truth.keys().filter(|f| of_class(f)).count();
            ClassRow {
                class,
                features: feats,
                matched: matched.iter().filter(|f| of_class(f)).count(),
                matched_share: ratio(ms.len(), feats),
                correct: c,
                precision: ratio(c, ms.len()),
                recall: ratio(c, corr),
            }
        })
        .collect();

    Ok(AlignmentMetrics {
        poses: n,
        position_rmse: rmse(sq),
        position_max: max,
        heading_rmse: rmse(hsq),
        heading_max: hmax,
        matches: matches.len(),
        correct_matches: correct,
        correspondences: truth.len(),
        precision: ratio(correct, matches.len()),
        recall: ratio(correct, truth.len()),
        total_length: total,
        aligned_length: good,
        aligned_fraction: if total > 0.0 { good / total } else { 1.0 },
        aligned_tolerance: ALIGNED_TOLERANCE,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pose;
    use crate::Se3;

    fn line(dx: f64) -> Trajectory {
        let poses = (0..20)
            .map(|i| Pose {
                session_id: "a".into(),
                index: i,
                timestamp: i as f64,
                transform: Se3::from_planar(i as f64 + dx, 0.0, 0.0),
            })
            .collect();
        Trajectory::new("a", poses).unwrap()
    }

    #[test]
    fn identical_trajectories() {
        let m = evaluate_alignment(&[line(0.0)], &[line(0.0)], &[], &[], &[]).unwrap();
        assert_eq!(m.position_rmse, 0.0);
        assert_eq!(m.aligned_fraction, 1.0);
        assert!(m.position_rmse <= m.position_max);
    }

    #[test]
    fn constant_offset() {
        let m = evaluate_alignment(&[line(1.0)], &[line(0.0)], &[], &[], &[]).unwrap();
        assert_eq!(m.position_rmse, 1.0);
        assert_eq!(m.aligned_fraction, 0.0);
    }

    #[test]
    fn perfect_matches() {
        let corr = vec![(FeatureId(0), LandmarkId(3)), (FeatureId(1), LandmarkId(4))];
        let matches: Vec<Match> = corr
            .iter()
            .map(|&(feature, landmark)| Match { feature, landmark, distance: 0.0 })
            .collect();
        let m = evaluate_alignment(&[line(0.0)], &[line(0.0)], &[], &matches, &corr).unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        let wrong = vec![Match { feature: FeatureId(0), landmark: LandmarkId(4), distance: 0.0 }];
        let m = evaluate_alignment(&[line(0.0)], &[line(0.0)], &[], &wrong, &corr).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
    }

    #[test]
    fn length_mismatch() {
        let short = Trajectory::new("a", line(0.0).poses()[..5].to_vec()).unwrap();
        assert!(matches!(
            evaluate_alignment(&[short], &[line(0.0)], &[], &[], &[]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }
}
