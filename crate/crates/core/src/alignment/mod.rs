//! Joint alignment of all trajectories to the matched landmarks.
//!
//! Every pose is a parameter. Matched features pull their anchor poses towards
//! the landmarks, while the initial relative poses of a pair topology act as a
//! regularizer that keeps the local shape of the trajectories.

mod topology;

use log::warn;
use serde::{Deserialize, Serialize};

pub use topology::{build_topology, PosePair, PoseRef, Topology};

use crate::geometry::{cross3, feature_distance, Twist6};
use crate::model::{Dataset, FeatureId, LandmarkId, Match, Trajectory};
use crate::solver::{
    lm_minimize, numeric_jacobian, ColumnRange, Jacobian, JacobianBlock, LeastSquaresProblem,
    SolverError, Termination,
};
use crate::{Point2, Se3, SegmentChain, Shape, SolverOptions};

const POSE_DOF: usize = 6;
const REGULARIZER_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("match references unknown feature {0}")]
    UnknownFeature(FeatureId),
    #[error("match references unknown landmark {0}")]
    UnknownLandmark(LandmarkId),
    #[error("feature {feature} cannot be matched to landmark {landmark}: different classes")]
    Incompatible {
        feature: FeatureId,
        landmark: LandmarkId,
    },
    #[error("invalid alignment parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignParams {
    /// Weight of the relative-pose regularizer against the feature term.
    pub w_delta: f64,
    /// Radius for linking poses of different trajectories (meters).
    pub cross_session_radius: f64,
    pub max_cross_partners: usize,
    /// Scale of the translation part of the relative-pose error.
    pub translation_weight: f64,
    /// Scale of the rotation part (meters per radian).
    pub rotation_weight: f64,
    /// Weight of segment distances relative to pole distances.
    pub w_h: f64,
    pub solver: SolverOptions,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            w_delta: 1.0,
            cross_session_radius: 5.0,
            max_cross_partners: 4,
            translation_weight: 1.0,
            rotation_weight: 5.0,
            w_h: 1.0,
            // thousands of poses: stop once a step buys less than a ppm of cost
            solver: SolverOptions {
                cost_tolerance: 1e-6,
                ..SolverOptions::default()
            },
        }
    }
}

impl AlignParams {
    pub fn validate(&self) -> Result<(), AlignError> {
        let bad = |m: &str| Err(AlignError::InvalidParams(m.to_owned()));
        if !(self.w_delta > 0.0 && self.w_delta.is_finite()) {
            return bad("w_delta must be positive");
        }
        if !(self.cross_session_radius >= 0.0) {
            return bad("cross_session_radius must be non-negative");
        }
        if !(self.translation_weight > 0.0 && self.rotation_weight > 0.0) {
            return bad("component weights must be positive");
        }
        if !(self.w_h > 0.0) {
            return bad("w_h must be positive");
        }
        self.solver.validate()?;
        Ok(())
    }

    fn component_scales(&self) -> [f64; 6] {
        let s = self.w_delta.sqrt();
        let (t, r) = (s * self.translation_weight, s * self.rotation_weight);
        [t, t, t, r, r, r]
    }
}

/// Residual of one matched feature seen from its anchor pose.
///
/// Poles give the planar offset of the mapped feature from the landmark.
/// Segments give, for each arc-length sample of the mapped feature, its
/// distance to the landmark chain scaled by `w_h / √k`.
pub fn feature_residual(pose: &Se3, feature: &Shape, landmark: &Shape, w_h: f64) -> Vec<f64> {
    match (feature, landmark) {
        (Shape::Pole(p), Shape::Pole(l)) => {
            let d = pose.apply_ground(*p) - *l;
            vec![d.x, d.y]
        }
        (Shape::Segment(c), Shape::Segment(l)) => segment_residual(pose, &c.default_samples(), l, w_h),
        _ => Vec::new(),
    }
}

fn segment_residual(pose: &Se3, samples: &[Point2], landmark: &SegmentChain, w_h: f64) -> Vec<f64> {
    let s = w_h / (samples.len() as f64).sqrt();
    samples
        .iter()
        .map(|&q| s * landmark.distance_to_point(pose.apply_ground(q)))
        .collect()
}

/// Weighted relative-pose error of a pair:
/// `√w_Δ · W · ξ(Δ_ij⁻¹ ∘ P_j⁻¹ ∘ P_i)`, zero at the initial poses.
pub fn relative_residual(pi: &Se3, pj: &Se3, delta_ij: &Se3, p: &AlignParams) -> [f64; 6] {
    let e = delta_ij.inverse().compose(&pj.inverse()).compose(pi).to_minimal().0;
    let w = p.component_scales();
    std::array::from_fn(|k| w[k] * e[k])
}

/// Planar rows of `∂ pose(q) / ∂δ` for the right perturbation `pose ∘ exp(δ)`.
fn ground_point_jacobian(pose: &Se3, q: Point2) -> [[f64; 6]; 2] {
    let m = pose.rotation_matrix();
    let x = [q.x, q.y, 0.0];
    let mut out = [[0.0; 6]; 2];
    for k in 0..3 {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        // rotation column: R (e_k × x)
        let c = cross3(e, x);
        for r in 0..2 {
            out[r][k] = m[r][k];
            out[r][3 + k] = m[r][0] * c[0] + m[r][1] * c[1] + m[r][2] * c[2];
        }
    }
    out
}

enum Term {
    Pole { local: Point2, landmark: Point2 },
    Segment { samples: Vec<Point2>, landmark: SegmentChain },
}

struct FeatureTerm {
    feature: FeatureId,
    landmark: LandmarkId,
    pose: usize,
    row: usize,
    term: Term,
}

impl FeatureTerm {
    fn rows(&self) -> usize {
        match &self.term {
            Term::Pole { .. } => 2,
            Term::Segment { samples, .. } => samples.len(),
        }
    }

    fn residual(&self, pose: &Se3, w_h: f64) -> Vec<f64> {
        match &self.term {
            Term::Pole { local, landmark } => {
                let d = pose.apply_ground(*local) - *landmark;
                vec![d.x, d.y]
            }
            Term::Segment { samples, landmark } => segment_residual(pose, samples, landmark, w_h),
        }
    }

    fn jacobian(&self, pose: &Se3, w_h: f64) -> Vec<f64> {
        match &self.term {
            Term::Pole { local, .. } => {
                let j = ground_point_jacobian(pose, *local);
                j.concat()
            }
            Term::Segment { samples, landmark } => {
                let s = w_h / (samples.len() as f64).sqrt();
                let mut v = Vec::with_capacity(samples.len() * POSE_DOF);
                for &q in samples {
                    let w = pose.apply_ground(q);
                    let (c, d) = landmark.closest_point(w);
                    if d > 0.0 {
                        let u = (w - c) * (s / d);
                        let j = ground_point_jacobian(pose, q);
                        v.extend((0..POSE_DOF).map(|k| u.x * j[0][k] + u.y * j[1][k]));
                    } else {
                        v.extend([0.0; POSE_DOF]);
                    }
                }
                v
            }
        }
    }
}

/// The full alignment cost over all poses of all trajectories.
pub struct AlignmentProblem<'a> {
    params: &'a AlignParams,
    offsets: Vec<usize>,
    poses: usize,
    terms: Vec<FeatureTerm>,
    feature_rows: usize,
    topology: Topology,
}

impl<'a> AlignmentProblem<'a> {
    pub fn new(data: &Dataset, matches: &[Match], params: &'a AlignParams) -> Result<Self, AlignError> {
        let mut offsets = Vec::with_capacity(data.trajectories.len());
        let mut n = 0;
        for t in &data.trajectories {
            offsets.push(n);
            n += t.len();
        }
        let mut terms = Vec::with_capacity(matches.len());
        let mut row = 0;
        for m in matches {
            let f = data.feature(m.feature).ok_or(AlignError::UnknownFeature(m.feature))?;
            let l = data.landmark(m.landmark).ok_or(AlignError::UnknownLandmark(m.landmark))?;
            let (t, k) = data.anchor_slot(f);
            let term = match (&f.local, &l.shape) {
                (Shape::Pole(p), Shape::Pole(q)) => Term::Pole {
                    local: *p,
                    landmark: *q,
                },
                (Shape::Segment(c), Shape::Segment(lc)) if c.class() == lc.class() => Term::Segment {
                    samples: c.default_samples(),
                    landmark: lc.clone(),
                },
                _ => {
                    return Err(AlignError::Incompatible {
                        feature: m.feature,
                        landmark: m.landmark,
                    })
                }
            };
            let ft = FeatureTerm {
                feature: m.feature,
                landmark: m.landmark,
                pose: offsets[t] + k,
                row,
                term,
            };
            row += ft.rows();
            terms.push(ft);
        }
        Ok(Self {
            params,
            offsets,
            poses: n,
            terms,
            feature_rows: row,
            topology: build_topology(&data.trajectories, params),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Initial pose estimates flattened in trajectory order.
    pub fn initial_params(data: &Dataset) -> Vec<Se3> {
        data.trajectories
            .iter()
            .flat_map(|t| t.poses().iter().map(|p| p.transform))
            .collect()
    }

    fn slot(&self, r: PoseRef) -> usize {
        self.offsets[r.0] + r.1
    }

    /// `(feature cost, regularizer cost)`, each `½‖r‖²`.
    pub fn split_cost(&self, x: &[Se3]) -> (f64, f64) {
        let f: f64 = self
            .terms
            .iter()
            .flat_map(|t| t.residual(&x[t.pose], self.params.w_h))
            .map(|v| v * v)
            .sum();
        let r: f64 = self
            .topology
            .pairs
            .iter()
            .flat_map(|pp| relative_residual(&x[self.slot(pp.i)], &x[self.slot(pp.j)], &pp.delta, self.params))
            .map(|v| v * v)
            .sum();
        (f / 2.0, r / 2.0)
    }

    fn pair_jacobian(&self, x: &[Se3], pp: &PosePair) -> Vec<f64> {
        // 6 × 12 block, numeric over the two poses
        let (si, sj) = (self.slot(pp.i), self.slot(pp.j));
        let h = REGULARIZER_STEP;
        let mut cols = [[0.0; 6]; 12];
        for (k, col) in cols.iter_mut().enumerate() {
            let mut d = [0.0; 6];
            d[k % 6] = h;
            let plus = Twist6(d);
            d[k % 6] = -h;
            let minus = Twist6(d);
            let (a, b) = if k < 6 {
                (
                    relative_residual(&x[si].retract(&plus), &x[sj], &pp.delta, self.params),
                    relative_residual(&x[si].retract(&minus), &x[sj], &pp.delta, self.params),
                )
            } else {
                (
                    relative_residual(&x[si], &x[sj].retract(&plus), &pp.delta, self.params),
                    relative_residual(&x[si], &x[sj].retract(&minus), &pp.delta, self.params),
                )
            };
            for r in 0..6 {
                col[r] = (a[r] - b[r]) / (2.0 * h);
            }
        }
        let mut v = Vec::with_capacity(72);
        for r in 0..6 {
            v.extend(cols.iter().map(|c| c[r]));
        }
        v
    }
}

impl LeastSquaresProblem<f64> for AlignmentProblem<'_> {
    type Params = Vec<Se3>;

    fn num_params(&self) -> usize {
        POSE_DOF * self.poses
    }

    fn num_residuals(&self) -> usize {
        self.feature_rows + POSE_DOF * self.topology.len()
    }

    fn residuals(&self, x: &Vec<Se3>) -> Result<Vec<f64>, SolverError> {
        let mut r = Vec::with_capacity(self.num_residuals());
        for t in &self.terms {
            r.extend(t.residual(&x[t.pose], self.params.w_h));
        }
        for pp in &self.topology.pairs {
            r.extend(relative_residual(&x[self.slot(pp.i)], &x[self.slot(pp.j)], &pp.delta, self.params));
        }
        Ok(r)
    }

    fn jacobian(&self, x: &Vec<Se3>) -> Option<Result<Jacobian<f64>, SolverError>> {
        let mut j = Jacobian::new(self.num_residuals(), self.num_params());
        for t in &self.terms {
            j.push(JacobianBlock {
                row: t.row,
                nrows: t.rows(),
                cols: vec![ColumnRange {
                    start: POSE_DOF * t.pose,
                    len: POSE_DOF,
                }],
                values: t.jacobian(&x[t.pose], self.params.w_h),
            });
        }
        for (k, pp) in self.topology.pairs.iter().enumerate() {
            let (si, sj) = (self.slot(pp.i), self.slot(pp.j));
            let values = self.pair_jacobian(x, pp);
            let col = |s: usize| ColumnRange {
                start: POSE_DOF * s,
                len: POSE_DOF,
            };
            let (cols, values) = if si < sj {
                (vec![col(si), col(sj)], values)
            } else {
                // keep column ranges ascending
                let swapped = values
                    .chunks(12)
                    .flat_map(|row| row[6..].iter().chain(&row[..6]).copied().collect::<Vec<_>>())
                    .collect();
                (vec![col(sj), col(si)], swapped)
            };
            j.push(JacobianBlock {
                row: self.feature_rows + POSE_DOF * k,
                nrows: POSE_DOF,
                cols,
                values,
            });
        }
        Some(Ok(j))
    }

    fn retract(&self, x: &Vec<Se3>, delta: &[f64]) -> Vec<Se3> {
        x.iter()
            .enumerate()
            .map(|(k, p)| {
                let d: [f64; 6] = delta[POSE_DOF * k..POSE_DOF * (k + 1)]
                    .try_into()
                    .expect("pose step");
                p.retract(&Twist6(d))
            })
            .collect()
    }
}


/// Final fit of one match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResidual {
    pub feature: FeatureId,
    pub landmark: LandmarkId,
    /// Feature distance between the mapped feature and its landmark.
    pub distance: f64,
    /// Norm of the match's residual block.
    pub residual_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    pub initial_feature_cost: f64,
    pub initial_regularizer_cost: f64,
    pub final_feature_cost: f64,
    pub final_regularizer_cost: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub termination: Option<Termination>,
    /// Total cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub topology_pairs: usize,
    pub cross_session_pairs: usize,
    pub matches: Vec<MatchResidual>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Alignment {
    pub trajectories: Vec<Trajectory>,
    pub report: AlignReport,
}

fn match_residuals(problem: &AlignmentProblem<'_>, data: &Dataset, x: &[Se3]) -> Vec<MatchResidual> {
    problem
        .terms
        .iter()
        .map(|t| {
            let f = data.feature(t.feature).expect("checked feature");
            let l = data.landmark(t.landmark).expect("checked landmark");
            let world = crate::model::feature_world_position(f, &x[t.pose]);
            let r = t.residual(&x[t.pose], problem.params.w_h);
            MatchResidual {
                feature: t.feature,
                landmark: t.landmark,
                distance: feature_distance(&world, &l.shape, problem.params.w_h)
                    .expect("checked compatibility"),
                residual_norm: r.iter().map(|v| v * v).sum::<f64>().sqrt(),
            }
        })
        .collect()
}

fn rebuild(data: &Dataset, problem: &AlignmentProblem<'_>, x: &[Se3]) -> Vec<Trajectory> {
    data.trajectories
        .iter()
        .enumerate()
        .map(|(t, traj)| {
            let start = problem.offsets[t];
            traj.with_transforms(&x[start..start + traj.len()])
        })
        .collect()
}

/// Aligns all trajectories jointly to the matched landmarks.
///
/// Without matches the regularizer alone is minimal at the initialization,
/// which is returned unchanged with a warning.
pub fn align(data: &Dataset, matches: &[Match], p: &AlignParams) -> Result<Alignment, AlignError> {
    p.validate()?;
    let problem = AlignmentProblem::new(data, matches, p)?;
    let x0 = AlignmentProblem::initial_params(data);
    let (f0, r0) = problem.split_cost(&x0);
    let mut report = AlignReport {
        initial_feature_cost: f0,
        initial_regularizer_cost: r0,
        final_feature_cost: f0,
        final_regularizer_cost: r0,
        iterations: 0,
        accepted_steps: 0,
        termination: None,
        cost_history: vec![f0 + r0],
        topology_pairs: problem.topology.len(),
        cross_session_pairs: problem.topology.cross_session_count(),
        matches: Vec::new(),
        warnings: Vec::new(),
    };
    if matches.is_empty() {
        let msg = "no matches: returning the initial trajectories".to_owned();
        warn!("{msg}");
        report.warnings.push(msg);
        return Ok(Alignment {
            trajectories: data.trajectories.clone(),
            report,
        });
    }
    let rep = lm_minimize(&problem, x0, &p.solver)?;
    let (f1, r1) = problem.split_cost(&rep.params);
    report.final_feature_cost = f1;
    report.final_regularizer_cost = r1;
    report.iterations = rep.iterations;
    report.accepted_steps = rep.accepted_steps;
    report.termination = Some(rep.termination);
    report.cost_history = rep.cost_history;
    report.matches = match_residuals(&problem, data, &rep.params);
    Ok(Alignment {
        trajectories: rebuild(data, &problem, &rep.params),
        report,
    })
}

/// Central-difference Jacobian of the alignment problem, for checking the
/// analytic one.
pub fn numeric_alignment_jacobian(
    problem: &AlignmentProblem<'_>,
    x: &Vec<Se3>,
) -> Result<Jacobian<f64>, SolverError> {
    numeric_jacobian(problem, x, 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Anchor, Feature, Landmark, Pose};
    use crate::{MarkingClass, Se2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight(session: &str, n: u64) -> Trajectory {
        let poses = (0..n)
            .map(|i| Pose {
                session_id: session.into(),
                index: i,
                timestamp: i as f64,
                transform: Se3::from_planar(2.0 * i as f64, 0.0, 0.0),
            })
            .collect();
        Trajectory::new(session, poses).unwrap()
    }

    fn moved(t: &Trajectory, g: &Se2) -> Trajectory {
        let xs: Vec<Se3> = t.poses().iter().map(|p| p.transform.premul_planar(g)).collect();
        t.with_transforms(&xs)
    }

    fn seg(pts: &[(f64, f64)]) -> SegmentChain {
        SegmentChain::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect(), MarkingClass::CurbLine).unwrap()
    }

    #[test]
    fn pole_residual_is_planar_offset() {
        let pose = Se3::from_planar(3.0, 4.0, 0.5);
        let local = Point2::new(2.0, 1.0);
        let world = pose.apply_ground(local);
        let r = feature_residual(&pose, &Shape::Pole(local), &Shape::Pole(world), 1.0);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let east = world - Point2::new(0.3, 0.0);
        let r = feature_residual(&pose, &Shape::Pole(local), &Shape::Pole(east), 1.0);
        assert!((r[0] - 0.3).abs() < 1e-12 && r[1].abs() < 1e-12);
    }

    #[test]
    fn segment_residual_tracks_modified_hausdorff() {
        let f = seg(&[(0.0, 0.0), (10.0, 0.0)]);
        let l = seg(&[(0.0, 0.4), (10.0, 0.4)]);
        let w_h = 2.0;
        let r = feature_residual(&Se3::identity(), &Shape::Segment(f.clone()), &Shape::Segment(l.clone()), w_h);
        let n2: f64 = r.iter().map(|v| v * v).sum();
        // dense brute-force distance on 1 mm samples
        let fs = f.samples(0.001);
        let ls = l.samples(0.001);
        let dir = |a: &[Point2], b: &[Point2]| {
            a.iter().map(|p| b.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min)).sum::<f64>()
                / a.len() as f64
        };
        let dh = dir(&fs, &ls).max(dir(&ls, &fs));
        let want = (w_h * dh).powi(2);
        assert!((n2 - want).abs() <= 0.1 * want, "{n2} vs {want}");
    }

    #[test]
    fn relative_residual_examples() {
        let p = AlignParams::default();
        let pi = Se3::from_planar(1.0, 2.0, 0.0);
        let pj = Se3::from_planar(4.0, 2.0, 0.0);
        let d = pj.inverse().compose(&pi);
        assert!(relative_residual(&pi, &pj, &d, &p).iter().all(|v| v.abs() < 1e-15));
        let shifted = Se3::from_planar(1.1, 2.0, 0.0);
        let r = relative_residual(&shifted, &pj, &d, &p);
        assert!((r[0] - 0.1 * p.translation_weight).abs() < 1e-12);
        assert!(r[1..].iter().all(|v| v.abs() < 1e-12));
        let p2 = AlignParams { w_delta: 2.0 * p.w_delta, ..p.clone() };
        let r2 = relative_residual(&shifted, &pj, &d, &p2);
        for k in 0..6 {
            assert!((r2[k] - r[k] * 2f64.sqrt()).abs() < 1e-15);
        }
    }

    fn pole_scene(truth: &Trajectory, init: &Trajectory) -> (Dataset, Vec<Match>) {
        let mut feats = Vec::new();
        let mut lms = Vec::new();
        let mut matches = Vec::new();
        for (k, pose) in truth.poses().iter().enumerate().step_by(5) {
            for (j, side) in [-6.0, 7.0].into_iter().enumerate() {
                let id = (2 * k + j) as u64;
                let local = Point2::new(1.5, side);
                lms.push(Landmark { id: LandmarkId(id), shape: Shape::Pole(pose.transform.apply_ground(local)) });
                feats.push(Feature {
                    id: FeatureId(id),
                    anchor: Anchor { session_id: truth.session_id().into(), pose_index: pose.index },
                    local: Shape::Pole(local),
                });
                matches.push(Match { feature: FeatureId(id), landmark: LandmarkId(id), distance: 0.0 });
            }
        }
        (Dataset::new(vec![init.clone()], feats, lms).unwrap(), matches)
    }

    #[test]
    fn recovers_rigid_offset() {
        let truth = straight("a", 101);
        let init = moved(&truth, &Se2::new(2.0, 1.0, 1f64.to_radians()));
        let (data, matches) = pole_scene(&truth, &init);
        let p = AlignParams { w_delta: 1e-3, ..AlignParams::default() };
        let out = align(&data, &matches, &p).unwrap();
        for (a, b) in out.trajectories[0].poses().iter().zip(truth.poses()) {
            assert!(a.transform.position_xy().distance(b.transform.position_xy()) < 0.01);
            assert!((a.transform.yaw() - b.transform.yaw()).abs() < 0.01f64.to_radians());
        }
        let h = &out.report.cost_history;
        assert!(h.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.report.final_feature_cost + out.report.final_regularizer_cost <= h[0]);
    }

    #[test]
    fn no_matches_keeps_initialization() {
        let truth = straight("a", 20);
        let data = Dataset::new(vec![truth.clone()], vec![], vec![]).unwrap();
        let out = align(&data, &[], &AlignParams::default()).unwrap();
        assert_eq!(out.trajectories[0], truth);
        assert_eq!(out.report.warnings.len(), 1);
    }

    #[test]
    fn dominant_regularizer_keeps_initialization() {
        let truth = straight("a", 41);
        let init = moved(&truth, &Se2::new(0.5, -0.3, 0.2f64.to_radians()));
        let (data, matches) = pole_scene(&truth, &init);
        let p = AlignParams { w_delta: 1e6, ..AlignParams::default() };
        let out = align(&data, &matches, &p).unwrap();
        // the whole trajectory may still move rigidly, but not bend
        let a = out.trajectories[0].poses();
        let b = init.poses();
        let g = a[0].transform.compose(&b[0].transform.inverse());
        for (pa, pb) in a.iter().zip(b) {
            let want = g.compose(&pb.transform);
            for k in 0..3 {
                assert!((pa.transform.translation[k] - want.translation[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reported_distances_match_residuals() {
        let truth = straight("a", 31);
        let init = moved(&truth, &Se2::new(0.2, 0.1, 0.0));
        let (data, matches) = pole_scene(&truth, &init);
        let p = AlignParams::default();
        let out = align(&data, &matches, &p).unwrap();
        let data2 = data.with_trajectories(out.trajectories.clone());
        for m in &out.report.matches {
            let f = data2.feature(m.feature).unwrap();
            let (t, k) = data2.anchor_slot(f);
            let pose = out.trajectories[t].poses()[k].transform;
            let l = data2.landmark(m.landmark).unwrap();
            let r = feature_residual(&pose, &f.local, &l.shape, p.w_h);
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - m.residual_norm).abs() < 1e-9);
            assert!((n - m.distance).abs() < 1e-9, "pole residual norm is the distance");
        }
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let truth = straight("a", 12);
        let other = moved(&straight("b", 12), &Se2::new(0.5, 1.0, 0.1));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats = vec![
            Feature {
                id: FeatureId(1),
                anchor: Anchor { session_id: "a".into(), pose_index: 3 },
                local: Shape::Pole(Point2::new(2.0, -4.0)),
            },
            Feature {
                id: FeatureId(2),
                anchor: Anchor { session_id: "b".into(), pose_index: 5 },
                local: Shape::Segment(seg(&[(-3.0, 3.0), (2.0, 3.5), (6.0, 3.0)])),
            },
        ];
        let lms = vec![
            Landmark { id: LandmarkId(1), shape: Shape::Pole(Point2::new(8.5, -3.0)) },
            Landmark { id: LandmarkId(2), shape: Shape::Segment(seg(&[(0.0, 5.0), (20.0, 5.8)])) },
        ];
        let matches = vec![
            Match { feature: FeatureId(1), landmark: LandmarkId(1), distance: 0.0 },
            Match { feature: FeatureId(2), landmark: LandmarkId(2), distance: 0.0 },
        ];
        let data = Dataset::new(vec![truth, other], feats, lms).unwrap();
        let p = AlignParams::default();
        let problem = AlignmentProblem::new(&data, &matches, &p).unwrap();
        let x0 = AlignmentProblem::initial_params(&data);
        for _ in 0..10 {
            let delta: Vec<f64> = (0..problem.num_params()).map(|_| rng.random_range(-0.05..0.05)).collect();
            let x = problem.retract(&x0, &delta);
            let a = problem.jacobian(&x).unwrap().unwrap().to_dense();
            let n = numeric_alignment_jacobian(&problem, &x).unwrap().to_dense();
            for (ra, rn) in a.iter().zip(&n) {
                for (va, vn) in ra.iter().zip(rn) {
                    assert!((va - vn).abs() <= 1e-5 * vn.abs().max(1.0), "{va} vs {vn}");
                }
            }
        }
    }
}
