use crate::geometry::Point2;
use crate::scalar::{normalize_angle, Real};

/// Planar rigid transform: rotation by `theta`, then translation by `(x, y)`.
///
/// `theta` is kept in `(-pi, pi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Se2<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
}

impl<T: Real> Default for Se2<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Se2<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_translation(t: Point2<T>) -> Self {
        Self::new(t.x, t.y, T::zero())
    }

    pub fn translation(&self) -> Point2<T> {
        Point2::new(self.x, self.y)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let t = self.translation() + other.translation().rotated(self.theta);
        Self::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Self {
        let t = (-self.translation()).rotated(-self.theta);
        Self::new(t.x, t.y, -self.theta)
    }

    pub fn apply(&self, p: Point2<T>) -> Point2<T> {
        p.rotated(self.theta) + self.translation()
    }

    /// Same transform expressed in a frame whose origin sits at `c`,
    /// i.e. `T(-c) ∘ self ∘ T(c)`.
    pub fn about(&self, c: Point2<T>) -> Self {
        Self::from_translation(-c)
            .compose(self)
            .compose(&Self::from_translation(c))
    }

    /// Rotation by `theta` about `pivot`, followed by translation `t`.
    pub fn rotation_about(pivot: Point2<T>, theta: T, t: Point2<T>) -> Self {
        let shift = pivot - pivot.rotated(theta) + t;
        Self::new(shift.x, shift.y, theta)
    }
}

/// Composes two planar transforms (`a ∘ b`).
pub fn se2_compose<T: Real>(a: &Se2<T>, b: &Se2<T>) -> Se2<T> {
    a.compose(b)
}

/// Applies a planar transform to a point.
pub fn se2_apply<T: Real>(t: &Se2<T>, p: Point2<T>) -> Point2<T> {
    t.apply(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    type M3 = [[f64; 3]; 3];

    fn hmat(t: &Se2<f64>) -> M3 {
        let (s, c) = t.theta.sin_cos();
        [[c, -s, t.x], [s, c, t.y], [0.0, 0.0, 1.0]]
    }

    fn matmul(a: &M3, b: &M3) -> M3 {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    fn close(a: &Se2<f64>, b: &Se2<f64>, tol: f64) -> bool {
        (a.x - b.x).abs() < tol
            && (a.y - b.y).abs() < tol
            && normalize_angle(a.theta - b.theta).abs() < tol
    }

    #[test]
    fn compose_with_identity() {
        let t = Se2::new(2.0, -1.0, 0.3);
        assert!(close(&se2_compose(&Se2::identity(), &t), &t, 1e-15));
    }

    #[test]
    fn compose_matches_homogeneous_matrices() {
        let a = Se2::new(1.0, 0.0, FRAC_PI_2);
        let b = Se2::new(1.0, 0.0, 0.0);
        let m = matmul(&hmat(&a), &hmat(&b));
        let c = se2_compose(&a, &b);
        assert!((c.x - m[0][2]).abs() < 1e-12 && (c.y - m[1][2]).abs() < 1e-12);
        assert!(close(&c, &Se2::new(1.0, 1.0, FRAC_PI_2), 1e-12));
    }

    #[test]
    fn apply_examples() {
        let p = Point2::new(5.0, 7.0);
        assert_eq!(se2_apply(&Se2::identity(), p), p);
        let q = se2_apply(&Se2::new(1.0, 2.0, FRAC_PI_2), Point2::new(1.0, 0.0));
        assert!((q.x - 1.0).abs() < 1e-12 && (q.y - 3.0).abs() < 1e-12);
        let q = se2_apply(&Se2::new(0.5, -2.0, 0.0), Point2::new(3.0, 4.0));
        assert_eq!(q, Point2::new(3.5, 2.0));
    }

    #[test]
    fn theta_wraps() {
        let t = Se2::new(0.0, 0.0, 3.0 * PI);
        assert!((t.theta - PI).abs() < 1e-12);
        let c = Se2::new(0.0, 0.0, 3.0).compose(&Se2::new(0.0, 0.0, 3.0));
        assert!(c.theta > -PI && c.theta <= PI);
    }

    #[test]
    fn about_conjugates() {
        let t = Se2::new(0.3, -0.2, 0.1);
        let c = Point2::new(100.0, 50.0);
        let local = t.about(c);
        let p = Point2::new(101.0, 49.0);
        let via_local = local.apply(p - c) + c;
        let direct = t.apply(p);
        assert!(via_local.distance(direct) < 1e-12);
    }

    fn arb_se2() -> impl Strategy<Value = Se2<f64>> {
        (-100.0..100.0f64, -100.0..100.0f64, -PI..PI).prop_map(|(x, y, t)| Se2::new(x, y, t))
    }

    proptest! {
        #[test]
        fn group_axioms(a in arb_se2(), b in arb_se2(), c in arb_se2()) {
            prop_assert!(close(&a.compose(&a.inverse()), &Se2::identity(), 1e-12));
            prop_assert!(close(&a.inverse().compose(&a), &Se2::identity(), 1e-12));
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(close(&l, &r, 1e-10));
            prop_assert!(close(&a.compose(&Se2::identity()), &a, 1e-12));
        }

        #[test]
        fn compose_is_sequential_application(a in arb_se2(), b in arb_se2(), px in -50.0..50.0f64, py in -50.0..50.0f64) {
            let p = Point2::new(px, py);
            let lhs = a.compose(&b).apply(p);
            let rhs = a.apply(b.apply(p));
            prop_assert!(lhs.distance(rhs) < 1e-10);
        }
    }
}
