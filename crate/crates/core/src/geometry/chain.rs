use crate::class::MarkingClass;
use crate::geometry::point::closest_on_segment;
use crate::geometry::{GeometryError, Point2, Se2};
use crate::scalar::Real;

/// Arc-length spacing upper bound for chain sampling (meters).
pub const SAMPLE_STEP: f64 = 0.25;

/// Minimum separation between consecutive vertices (meters).
pub const MIN_VERTEX_SEPARATION: f64 = 1e-9;

/// Classed polyline of road-marking or curb geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentChain<T> {
    vertices: Vec<Point2<T>>,
    class: MarkingClass,
}

impl<T: Real> SegmentChain<T> {
    pub fn new(vertices: Vec<Point2<T>>, class: MarkingClass) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::DegenerateChain("fewer than two vertices"));
        }
        if class.is_pole() {
            return Err(GeometryError::DegenerateChain("pole class on a segment chain"));
        }
        let min_sep = T::lit(MIN_VERTEX_SEPARATION);
        for w in vertices.windows(2) {
            let d = w[0].distance(w[1]);
            if !d.is_finite() || d <= min_sep {
                return Err(GeometryError::DegenerateChain("coincident consecutive vertices"));
            }
        }
        Ok(Self { vertices, class })
    }

    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    pub fn class(&self) -> MarkingClass {
        self.class
    }

    pub fn length(&self) -> T {
        self.vertices
            .windows(2)
            .fold(T::zero(), |acc, w| acc + w[0].distance(w[1]))
    }

    pub fn transformed(&self, t: &Se2<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&p| t.apply(p)).collect(),
            class: self.class,
        }
    }

    /// Maps every vertex through `f`; `f` must be a rigid motion.
    pub fn map_rigid(&self, f: impl Fn(Point2<T>) -> Point2<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&p| f(p)).collect(),
            class: self.class,
        }
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Self {
            vertices,
            class: self.class,
        }
    }

    /// Point at arc length `s` from the first vertex (clamped to the chain).
    pub fn point_at(&self, s: T) -> Point2<T> {
        let mut remaining = s.max(T::zero());
        for w in self.vertices.windows(2) {
            let len = w[0].distance(w[1]);
            if remaining <= len {
                return w[0] + (w[1] - w[0]) * (remaining / len);
            }
            remaining -= len;
        }
        *self.vertices.last().expect("non-empty chain")
    }

    /// Samples at uniform arc-length spacing `<= step`, both endpoints included.
    pub fn samples(&self, step: T) -> Vec<Point2<T>> {
        let len = self.length();
        let n = (len / step).ceil().to_usize().unwrap_or(1).max(1);
        let nt = T::from_usize(n).expect("sample count");
        let mut out = Vec::with_capacity(n + 1);
        let mut seg = 0usize;
        let mut seg_start = T::zero();
        let mut seg_len = self.vertices[0].distance(self.vertices[1]);
        for k in 0..=n {
            if k == n {
                out.push(*self.vertices.last().expect("non-empty chain"));
                break;
            }
            let s = len * T::from_usize(k).expect("index") / nt;
            while s > seg_start + seg_len && seg + 2 < self.vertices.len() {
                seg_start += seg_len;
                seg += 1;
                seg_len = self.vertices[seg].distance(self.vertices[seg + 1]);
            }
            let u = ((s - seg_start) / seg_len).min(T::one()).max(T::zero());
            let a = self.vertices[seg];
            out.push(a + (self.vertices[seg + 1] - a) * u);
        }
        out
    }

    pub fn default_samples(&self) -> Vec<Point2<T>> {
        self.samples(T::lit(SAMPLE_STEP))
    }

    /// Closest point on the chain and its distance.
    pub fn closest_point(&self, p: Point2<T>) -> (Point2<T>, T) {
        let mut best = (self.vertices[0], T::infinity());
        for w in self.vertices.windows(2) {
            let (c, d) = closest_on_segment(p, w[0], w[1]);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }

    pub fn distance_to_point(&self, p: Point2<T>) -> T {
        self.closest_point(p).1
    }

    /// Arc-length midpoint, used as the chain's reference position.
    pub fn reference_point(&self) -> Point2<T> {
        self.point_at(self.length() / T::two())
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bbox(&self) -> (Point2<T>, Point2<T>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices[1..] {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }
}

/// Distance from `p` to the axis-aligned box `[lo, hi]`.
pub fn distance_to_box<T: Real>(p: Point2<T>, lo: Point2<T>, hi: Point2<T>) -> T {
    let dx = (lo.x - p.x).max(p.x - hi.x).max(T::zero());
    let dy = (lo.y - p.y).max(p.y - hi.y).max(T::zero());
    dx.hypot(dy)
}

fn mean_distance_to_chain<T: Real>(samples: &[Point2<T>], chain: &SegmentChain<T>) -> T {
    let sum = samples
        .iter()
        .fold(T::zero(), |acc, &p| acc + chain.distance_to_point(p));
    sum / T::from_usize(samples.len()).expect("sample count")
}

/// Symmetric mean point-to-chain distance between two chains.
///
/// Each direction averages the distance from uniformly spaced samples of one
/// chain to the other chain; the larger of the two means is returned.
pub fn modified_hausdorff<T: Real>(a: &SegmentChain<T>, b: &SegmentChain<T>) -> T {
    modified_hausdorff_sampled(a, &a.default_samples(), b, &b.default_samples())
}

/// [`modified_hausdorff`] with caller-provided samples (e.g. cached or transformed).
pub fn modified_hausdorff_sampled<T: Real>(
    a: &SegmentChain<T>,
    a_samples: &[Point2<T>],
    b: &SegmentChain<T>,
    b_samples: &[Point2<T>],
) -> T {
    if a.vertices == b.vertices {
        return T::zero();
    }
    let ab = mean_distance_to_chain(a_samples, b);
    let ba = mean_distance_to_chain(b_samples, a);
    ab.max(ba)
}
