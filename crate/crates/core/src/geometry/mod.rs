//! Rigid transforms, the minimal pose parameterization, and feature distances.

mod chain;
mod point;
mod se2;
mod se3;

pub use chain::{
    distance_to_box, modified_hausdorff, modified_hausdorff_sampled, SegmentChain,
    MIN_VERTEX_SEPARATION, SAMPLE_STEP,
};
pub use point::{closest_on_segment, pole_distance, Point2};
pub use se2::{se2_apply, se2_compose, Se2};
pub(crate) use se3::cross3;
pub use se3::{
    heading_difference, se3_from_minimal, se3_minimal, Mat3, Se3, Twist6, UnitQuaternion, Vec3,
};

use crate::class::MarkingClass;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate segment chain: {0}")]
    DegenerateChain(&'static str),
    #[error("incompatible match: feature {feature} vs landmark {landmark}")]
    IncompatibleMatch {
        feature: MarkingClass,
        landmark: MarkingClass,
    },
}

/// Planar geometry of a feature or landmark.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape<T> {
    Pole(Point2<T>),
    Segment(SegmentChain<T>),
}

impl<T: Real> Shape<T> {
    pub fn class(&self) -> MarkingClass {
        match self {
            Shape::Pole(_) => MarkingClass::Pole,
            Shape::Segment(c) => c.class(),
        }
    }

    pub fn transformed(&self, t: &Se2<T>) -> Self {
        match self {
            Shape::Pole(p) => Shape::Pole(t.apply(*p)),
            Shape::Segment(c) => Shape::Segment(c.transformed(t)),
        }
    }

    /// Pole point, or the arc-length midpoint of a chain.
    pub fn reference_point(&self) -> Point2<T> {
        match self {
            Shape::Pole(p) => *p,
            Shape::Segment(c) => c.reference_point(),
        }
    }

    pub fn is_compatible(&self, other: &Self) -> bool {
        self.class() == other.class()
    }
}

/// Generalized feature distance: euclidean for poles, `w_h`-weighted modified
/// Hausdorff distance for same-class segment chains.
pub fn feature_distance<T: Real>(
    feature: &Shape<T>,
    landmark: &Shape<T>,
    w_h: T,
) -> Result<T, GeometryError> {
    match (feature, landmark) {
        (Shape::Pole(a), Shape::Pole(b)) => Ok(pole_distance(*a, *b)),
        (Shape::Segment(a), Shape::Segment(b)) if a.class() == b.class() => {
            Ok(w_h * modified_hausdorff(a, b))
        }
        _ => Err(GeometryError::IncompatibleMatch {
            feature: feature.class(),
            landmark: landmark.class(),
        }),
    }
}
