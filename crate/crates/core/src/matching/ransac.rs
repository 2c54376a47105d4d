use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{distance_to_box, modified_hausdorff_sampled, Point2 as P2};
use crate::matching::{MatchError, Window};
use crate::model::{Dataset, FeatureId, LandmarkId, Match, MatchParams};
use crate::solver::{lm_minimize, Jacobian, LeastSquaresProblem, SolverError};
use crate::{Point2, Se2, SegmentChain, Shape, SolverOptions};

const FIT_ITERATIONS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStatus {
    Converged,
    Rejected,
    InsufficientFeatures,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowResult {
    pub window: usize,
    pub delta: Se2,
    pub inliers: Vec<Match>,
    pub e_f: f64,
    pub status: WindowStatus,
    /// Hypotheses fitted, including gate rejections.
    pub hypotheses: usize,
    pub gate_rejections: usize,
}

/// Two tentative associations `(feature, landmark)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hypothesis {
    pub pairs: [(FeatureId, LandmarkId); 2],
    slots: [(usize, usize); 2],
}

struct FeatureSlot {
    id: FeatureId,
    shape: Shape,
    samples: Vec<Point2>,
    centroid: Point2,
}

struct LandmarkSlot {
    id: LandmarkId,
    shape: Shape,
    samples: Vec<Point2>,
    bbox: (Point2, Point2),
}

/// Window contents in world coordinates, ready for repeated hypothesis tests.
pub struct PreparedWindow {
    pub window: usize,
    pub center: Point2,
    features: Vec<FeatureSlot>,
    landmarks: Vec<LandmarkSlot>,
    /// Same-class landmark slots per feature slot.
    compatible: Vec<Vec<usize>>,
    /// Candidate associations for hypotheses, ordered by feature then landmark.
    associations: Vec<(usize, usize)>,
    count: usize,
}

/// Points of a feature used in fits: the pole itself, or the default chain samples.
pub fn fit_samples(shape: &Shape) -> Vec<Point2> {
    match shape {
        Shape::Pole(p) => vec![*p],
        Shape::Segment(c) => c.default_samples(),
    }
}

fn centroid(points: &[Point2]) -> Point2 {
    let sum = points.iter().fold(Point2::origin(), |acc, &p| acc + p);
    sum * (1.0 / points.len() as f64)
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl PreparedWindow {
    pub fn new(data: &Dataset, w: &Window, p: &MatchParams) -> Self {
        let features = w
            .feature_ids
            .iter()
            .map(|&id| (id, data.feature_world(data.feature(id).expect("window feature"))))
            .collect();
        let landmarks = w
            .landmark_ids
            .iter()
            .map(|&id| (id, data.landmark(id).expect("window landmark").shape.clone()))
            .collect();
        Self::from_shapes(w.id, w.center, features, landmarks, p)
    }

    /// Builds a window directly from world-frame shapes.
    pub fn from_shapes(
        window: usize,
        center: Point2,
        mut features: Vec<(FeatureId, Shape)>,
        mut landmarks: Vec<(LandmarkId, Shape)>,
        p: &MatchParams,
    ) -> Self {
        features.sort_by_key(|f| f.0);
        landmarks.sort_by_key(|l| l.0);
        let features: Vec<FeatureSlot> = features
            .into_iter()
            .map(|(id, shape)| {
                let samples = fit_samples(&shape);
                FeatureSlot {
                    id,
                    centroid: centroid(&samples),
                    samples,
                    shape,
                }
            })
            .collect();
        let landmarks: Vec<LandmarkSlot> = landmarks
            .into_iter()
            .map(|(id, shape)| {
                let bbox = match &shape {
                    Shape::Pole(q) => (*q, *q),
                    Shape::Segment(c) => c.bbox(),
                };
                LandmarkSlot {
                    id,
                    samples: fit_samples(&shape),
                    bbox,
                    shape,
                }
            })
            .collect();
        let compatible: Vec<Vec<usize>> = features
            .iter()
            .map(|f| {
                (0..landmarks.len())
                    .filter(|&l| f.shape.is_compatible(&landmarks[l].shape))
                    .collect()
            })
            .collect();
        let mut associations = Vec::new();
        let mut landmark_degree = vec![0usize; landmarks.len()];
        let mut feature_pairs = 0;
        for (fi, f) in features.iter().enumerate() {
            let r = f.shape.reference_point();
            let before = associations.len();
            for &li in &compatible[fi] {
                if landmarks[li].shape.reference_point().distance(r) <= p.association_radius {
                    associations.push((fi, li));
                    landmark_degree[li] += 1;
                }
            }
            feature_pairs += choose2(associations.len() - before);
        }
        let landmark_pairs: usize = landmark_degree.iter().map(|&d| choose2(d)).sum();
        let count = choose2(associations.len()) - feature_pairs - landmark_pairs;
        Self {
            window,
            center,
            features,
            landmarks,
            compatible,
            associations,
            count,
        }
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn landmark_count(&self) -> usize {
        self.landmarks.len()
    }

    /// Number of distinct valid hypotheses.
    pub fn hypothesis_count(&self) -> usize {
        self.count
    }

    fn hypothesis(&self, a: usize, b: usize) -> Option<Hypothesis> {
        let (fa, la) = self.associations[a];
        let (fb, lb) = self.associations[b];
        if fa == fb || la == lb {
            return None;
        }
        Some(Hypothesis {
            pairs: [
                (self.features[fa].id, self.landmarks[la].id),
                (self.features[fb].id, self.landmarks[lb].id),
            ],
            slots: [(fa, la), (fb, lb)],
        })
    }

    /// All valid hypotheses in canonical order.
    pub fn enumerate_hypotheses(&self) -> Vec<Hypothesis> {
        let n = self.associations.len();
        let mut out = Vec::with_capacity(self.count);
        for a in 0..n {
            for b in a + 1..n {
                out.extend(self.hypothesis(a, b));
            }
        }
        out
    }

    /// Draws a hypothesis uniformly from the valid ones.
    pub fn sample_hypothesis<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Hypothesis, MatchError> {
        if self.features.len() < 2 || self.count == 0 {
            return Err(MatchError::InsufficientCandidates);
        }
        let n = self.associations.len();
        loop {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            if let Some(h) = self.hypothesis(a.min(b), a.max(b)) {
                return Ok(h);
            }
        }
    }
}

/// RNG for one window, independent of processing order.
pub fn window_rng(seed: u64, window: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(window as u64);
    rng
}

enum FitTerm<'a> {
    Pole(Point2, Point2),
    Segment(&'a [Point2], &'a SegmentChain),
}

impl FitTerm<'_> {
    fn len(&self) -> usize {
        match self {
            FitTerm::Pole(..) => 2,
            FitTerm::Segment(s, _) => s.len(),
        }
    }
}

/// Registration of associated features onto their landmarks, parameterized as
/// a rotation about the pivot followed by a translation `[x, y, θ]`.
///
/// Pole pairs contribute their coordinate differences, segment pairs the
/// distances of the feature samples to the landmark chain, scaled by
/// `w_h / √samples`.
pub struct Registration<'a> {
    terms: Vec<FitTerm<'a>>,
    pivot: Point2,
    w_h: f64,
}

impl<'a> Registration<'a> {
    /// `samples[k]` are the points of `features[k]` that enter the residuals,
    /// see [`fit_samples`].
    pub fn new(
        features: &'a [Shape],
        samples: &'a [Vec<Point2>],
        landmarks: &'a [Shape],
        pivot: Point2,
        w_h: f64,
    ) -> Result<Self, MatchError> {
        if features.len() != landmarks.len() || features.len() != samples.len() {
            return Err(MatchError::InsufficientCandidates);
        }
        if features.iter().zip(landmarks).any(|(f, l)| !f.is_compatible(l)) {
            return Err(MatchError::InsufficientCandidates);
        }
        let terms = (0..features.len())
            .map(|k| fit_term(&features[k], &samples[k], &landmarks[k]))
            .collect();
        Ok(Self { terms, pivot, w_h })
    }

    pub fn transform(&self, x: &[f64]) -> Se2 {
        Se2::rotation_about(self.pivot, x[2], P2::new(x[0], x[1]))
    }

    /// Parameters reproducing `t`.
    fn params_of(&self, t: &Se2) -> Vec<f64> {
        let shift = t.translation() - self.pivot + self.pivot.rotated(t.theta);
        vec![shift.x, shift.y, t.theta]
    }
}

impl LeastSquaresProblem<f64> for Registration<'_> {
    type Params = Vec<f64>;

    fn num_params(&self) -> usize {
        3
    }

    fn num_residuals(&self) -> usize {
        self.terms.iter().map(FitTerm::len).sum()
    }

    fn residuals(&self, x: &Vec<f64>) -> Result<Vec<f64>, SolverError> {
        let t = self.transform(x);
        let mut r = Vec::with_capacity(self.num_residuals());
        for term in &self.terms {
            match term {
                FitTerm::Pole(f, l) => {
                    let d = t.apply(*f) - *l;
                    r.extend([d.x, d.y]);
                }
                FitTerm::Segment(samples, chain) => {
                    let s = self.w_h / (samples.len() as f64).sqrt();
                    r.extend(samples.iter().map(|&q| s * chain.distance_to_point(t.apply(q))));
                }
            }
        }
        Ok(r)
    }

    fn jacobian(&self, x: &Vec<f64>) -> Option<Result<Jacobian<f64>, SolverError>> {
        let t = self.transform(x);
        let mut v = Vec::with_capacity(3 * self.num_residuals());
        // d(Δq)/dθ is the rotated lever arm turned by 90°.
        let arm = |q: Point2| (q - self.pivot).rotated(t.theta).perp();
        for term in &self.terms {
            match term {
                FitTerm::Pole(f, _) => {
                    let a = arm(*f);
                    v.extend([1.0, 0.0, a.x, 0.0, 1.0, a.y]);
                }
                FitTerm::Segment(samples, chain) => {
                    let s = self.w_h / (samples.len() as f64).sqrt();
                    for &q in samples.iter() {
                        let moved = t.apply(q);
                        let (c, d) = chain.closest_point(moved);
                        if d > 0.0 {
                            let u = (moved - c) * (s / d);
                            v.extend([u.x, u.y, u.dot(arm(q))]);
                        } else {
                            v.extend([0.0; 3]);
                        }
                    }
                }
            }
        }
        Some(Ok(Jacobian::dense(self.num_residuals(), 3, v)))
    }

    fn retract(&self, x: &Vec<f64>, delta: &[f64]) -> Vec<f64> {
        x.iter().zip(delta).map(|(a, d)| a + d).collect()
    }
}

fn fit_options() -> SolverOptions {
    SolverOptions {
        max_iterations: FIT_ITERATIONS,
        ..SolverOptions::default()
    }
}

fn fit_terms(terms: Vec<FitTerm<'_>>, pivot: Point2, w_h: f64, start: &Se2) -> Result<(Se2, f64), SolverError> {
    let problem = Registration { terms, pivot, w_h };
    let x0 = problem.params_of(start);
    let rep = lm_minimize(&problem, x0, &fit_options())?;
    Ok((problem.transform(&rep.params), rep.cost))
}

fn fit_term<'a>(f: &'a Shape, samples: &'a [Point2], l: &'a Shape) -> FitTerm<'a> {
    match (f, l) {
        (Shape::Pole(a), Shape::Pole(b)) => FitTerm::Pole(*a, *b),
        (Shape::Segment(_), Shape::Segment(c)) => FitTerm::Segment(samples, c),
        _ => unreachable!("hypotheses pair compatible shapes"),
    }
}

/// Planar transform superimposing two world-frame features onto two landmarks,
/// minimizing their squared residuals from the identity. Returns the transform
/// and the final cost `½‖r‖²`.
pub fn fit_shapes(
    features: [&Shape; 2],
    landmarks: [&Shape; 2],
    w_h: f64,
) -> Result<(Se2, f64), MatchError> {
    for k in 0..2 {
        if !features[k].is_compatible(landmarks[k]) {
            return Err(MatchError::InsufficientCandidates);
        }
    }
    let samples = [fit_samples(features[0]), fit_samples(features[1])];
    let pivot = (features[0].reference_point() + features[1].reference_point()) * 0.5;
    let terms = vec![
        fit_term(features[0], &samples[0], landmarks[0]),
        fit_term(features[1], &samples[1], landmarks[1]),
    ];
    Ok(fit_terms(terms, pivot, w_h, &Se2::identity())?)
}

/// Local displacement implied by a hypothesis.
pub fn fit_local_transform(
    w: &PreparedWindow,
    h: &Hypothesis,
    p: &MatchParams,
) -> Result<Se2, MatchError> {
    let [(fa, la), (fb, lb)] = h.slots;
    let (a, b) = (&w.features[fa], &w.features[fb]);
    let pivot = (a.shape.reference_point() + b.shape.reference_point()) * 0.5;
    let terms = vec![
        fit_term(&a.shape, &a.samples, &w.landmarks[la].shape),
        fit_term(&b.shape, &b.samples, &w.landmarks[lb].shape),
    ];
    Ok(fit_terms(terms, pivot, p.w_h, &Se2::identity())?.0)
}

// Least-squares displacement over all given associations, starting at `delta`.
fn refine_slots(
    w: &PreparedWindow,
    delta: &Se2,
    slots: &[(usize, usize, f64)],
    p: &MatchParams,
) -> Result<Se2, SolverError> {
    let terms = slots
        .iter()
        .map(|&(fi, li, _)| {
            let f = &w.features[fi];
            fit_term(&f.shape, &f.samples, &w.landmarks[li].shape)
        })
        .collect();
    let pivot = centroid(&slots.iter().map(|&(fi, _, _)| w.features[fi].centroid).collect::<Vec<_>>());
    Ok(fit_terms(terms, pivot, p.w_h, delta)?.0)
}

/// Refits `delta` on the inliers it produces. The two-association fit leaves
/// directions unconstrained by its pair (along parallel lines, say); the
/// inliers usually pin them down.
pub fn refine_transform(w: &PreparedWindow, delta: &Se2, p: &MatchParams) -> Result<Se2, MatchError> {
    let (slots, _) = evaluate_slots(w, delta, p);
    if slots.len() < 2 {
        return Ok(*delta);
    }
    Ok(refine_slots(w, delta, &slots, p)?)
}

/// Nearest compatible landmark per feature after applying `delta`:
/// `(feature slot, landmark slot, distance)` for inliers, plus `E_f`.
fn evaluate_slots(
    w: &PreparedWindow,
    delta: &Se2,
    p: &MatchParams,
) -> (Vec<(usize, usize, f64)>, f64) {
    let tau = p.inlier_threshold;
    let mut inliers = Vec::new();
    let mut e_f = 0.0;
    for (fi, f) in w.features.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        let mut moved: Option<(SegmentChain, Vec<Point2>)> = None;
        let c = delta.apply(f.centroid);
        for &li in &w.compatible[fi] {
            let l = &w.landmarks[li];
            let limit = best.map_or(tau, |b| b.1.min(tau));
            let d = match (&f.shape, &l.shape) {
                (Shape::Pole(_), Shape::Pole(q)) => c.distance(*q),
                (Shape::Segment(chain), Shape::Segment(lc)) => {
                    // mean distance to the box bounds the mean distance to the chain
                    if p.w_h * distance_to_box(c, l.bbox.0, l.bbox.1) >= limit {
                        continue;
                    }
                    let (mc, ms) = moved.get_or_insert_with(|| {
                        (
                            chain.transformed(delta),
                            f.samples.iter().map(|&q| delta.apply(q)).collect(),
                        )
                    });
                    p.w_h * modified_hausdorff_sampled(mc, ms, lc, &l.samples)
                }
                _ => continue,
            };
            if d < limit {
                best = Some((li, d));
            }
        }
        match best {
            Some((li, d)) => {
                e_f += d;
                inliers.push((fi, li, d));
            }
            None => e_f += tau,
        }
    }
    (inliers, e_f)
}

fn to_matches(w: &PreparedWindow, slots: &[(usize, usize, f64)]) -> Vec<Match> {
    slots
        .iter()
        .map(|&(fi, li, d)| Match {
            feature: w.features[fi].id,
            landmark: w.landmarks[li].id,
            distance: d,
        })
        .collect()
}

/// Inliers and window cost `E_f` of a candidate displacement.
///
/// Every feature is moved by `delta` and paired with its nearest compatible
/// landmark; pairs closer than the inlier threshold are inliers, and each
/// feature without one adds the threshold to the cost.
pub fn evaluate_transform(w: &PreparedWindow, delta: &Se2, p: &MatchParams) -> (Vec<Match>, f64) {
    let (slots, e_f) = evaluate_slots(w, delta, p);
    (to_matches(w, &slots), e_f)
}

/// Accepts `delta` unless it departs from the previous window's displacement
/// by more than the gate thresholds, with translation measured at `center`.
pub fn consistency_gate(prev: Option<&Se2>, delta: &Se2, center: Point2, p: &MatchParams) -> bool {
    let Some(prev) = prev else {
        return true;
    };
    let rel = prev.inverse().compose(delta);
    let shift = rel.apply(center).distance(center);
    rel.theta.abs() <= p.gate_angle && shift <= p.gate_translation
}

type Scored = (Se2, Vec<(usize, usize, f64)>, f64);

// Gate-accepted candidate of lowest cost among the fitted displacement and
// its inlier refits; `None` if the gate rejects all of them.
fn score_hypothesis(w: &PreparedWindow, delta: Se2, prev: Option<&Se2>, p: &MatchParams) -> Option<Scored> {
    if p.refine_rounds == 0 {
        if !consistency_gate(prev, &delta, w.center, p) {
            return None;
        }
        let (slots, e_f) = evaluate_slots(w, &delta, p);
        return Some((delta, slots, e_f));
    }
    let (slots, e_f) = evaluate_slots(w, &delta, p);
    let mut chain: Vec<Scored> = vec![(delta, slots, e_f)];
    for _ in 0..p.refine_rounds {
        let (d, s, e) = chain.last().expect("non-empty");
        if s.len() < 2 {
            break;
        }
        let Ok(next) = refine_slots(w, d, s, p) else {
            break;
        };
        let (slots, e_f) = evaluate_slots(w, &next, p);
        let stalled = e_f >= *e;
        chain.push((next, slots, e_f));
        if stalled {
            break;
        }
    }
    chain
        .into_iter()
        .filter(|c| consistency_gate(prev, &c.0, w.center, p))
        .min_by(|a, b| a.2.total_cmp(&b.2))
}

/// RANSAC search for the displacement and inliers of one window.
pub fn match_window<R: Rng + ?Sized>(
    w: &PreparedWindow,
    prev: Option<&Se2>,
    p: &MatchParams,
    rng: &mut R,
) -> WindowResult {
    let n = w.features.len();
    let tau = p.inlier_threshold;
    let mut result = WindowResult {
        window: w.window,
        delta: Se2::identity(),
        inliers: Vec::new(),
        e_f: tau * n as f64,
        status: WindowStatus::InsufficientFeatures,
        hypotheses: 0,
        gate_rejections: 0,
    };
    if n < 2 || w.count == 0 {
        return result;
    }
    result.status = WindowStatus::Rejected;
    let e_limit = p.e_limit_for(n);
    let exhaustive = w.count <= p.max_hypotheses;
    let schedule = if exhaustive {
        let mut all = w.enumerate_hypotheses();
        all.shuffle(rng);
        all
    } else {
        Vec::new()
    };
    let budget = w.count.min(p.max_hypotheses);
    let mut schedule = schedule.into_iter();
    let mut best: Option<Scored> = None;
    for _ in 0..budget {
        let h = if exhaustive {
            schedule.next().expect("budget within schedule")
        } else {
            w.sample_hypothesis(rng).expect("window has hypotheses")
        };
        result.hypotheses += 1;
        let delta = match fit_local_transform(w, &h, p) {
            Ok(d) => d,
            Err(e) => {
                log::debug!("window {}: fit failed: {e}", w.window);
                continue;
            }
        };
        let Some((delta, slots, e_f)) = score_hypothesis(w, delta, prev, p) else {
            result.gate_rejections += 1;
            continue;
        };
        let improved = best.as_ref().is_none_or(|b| e_f < b.2);
        if improved {
            best = Some((delta, slots, e_f));
        }
        if e_f < e_limit {
            break;
        }
    }
    if let Some((delta, slots, e_f)) = best {
        result.delta = delta;
        result.inliers = to_matches(w, &slots);
        result.e_f = e_f;
        if e_f < e_limit {
            result.status = WindowStatus::Converged;
        }
    }
    result
}
