use crate::geometry::{Point2, Se2};
use crate::scalar::{normalize_angle, Real};

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

fn add3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale3<T: Real>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn cross3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3<T: Real>(a: Vec3<T>) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion<T> {
    w: T,
    x: T,
    y: T,
    z: T,
}

impl<T: Real> UnitQuaternion<T> {
    pub fn identity() -> Self {
        Self {
            w: T::one(),
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    /// Normalizes `(w, x, y, z)`. Returns `None` for a zero quaternion.
    pub fn from_wxyz(w: T, x: T, y: T, z: T) -> Option<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return None;
        }
        Some(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn wxyz(&self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_yaw(yaw: T) -> Self {
        let (s, c) = (yaw / T::two()).sin_cos();
        Self {
            w: c,
            x: T::zero(),
            y: T::zero(),
            z: s,
        }
    }

    /// Exponential map of a rotation vector.
    pub fn from_rotation_vector(v: Vec3<T>) -> Self {
        let theta = norm3(v);
        let half = theta / T::two();
        let (w, s) = if theta < T::lit(1e-6) {
            let t2 = theta * theta;
            (T::one() - t2 / T::lit(8.0), T::lit(0.5) - t2 / T::lit(48.0))
        } else {
            (half.cos(), half.sin() / theta)
        };
        Self::from_wxyz(w, v[0] * s, v[1] * s, v[2] * s).expect("finite rotation vector")
    }

    /// Logarithm map: rotation vector with angle in `[0, pi]`.
    pub fn to_rotation_vector(&self) -> Vec3<T> {
        let (w, v) = if self.w < T::zero() {
            (-self.w, [-self.x, -self.y, -self.z])
        } else {
            (self.w, [self.x, self.y, self.z])
        };
        let n = norm3(v);
        let scale = if n < T::lit(1e-8) {
            (T::two() / w) * (T::one() - n * n / (T::lit(3.0) * w * w))
        } else {
            T::two() * n.atan2(w) / n
        };
        scale3(v, scale)
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let (a, b) = (self, o);
        Self::from_wxyz(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
        .expect("product of unit quaternions")
    }

    pub fn rotate(&self, v: Vec3<T>) -> Vec3<T> {
        let q = [self.x, self.y, self.z];
        let t = scale3(cross3(q, v), T::two());
        add3(add3(v, scale3(t, self.w)), cross3(q, t))
    }

    pub fn matrix(&self) -> Mat3<T> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let one = T::one();
        let two = T::two();
        [
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ]
    }

    /// Heading of the body x-axis projected on the ground plane.
    pub fn yaw(&self) -> T {
        let m = self.matrix();
        m[1][0].atan2(m[0][0])
    }

    pub fn norm(&self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Minimal 6-vector: translation (meters) followed by a rotation vector (radians).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist6<T>(pub [T; 6]);

impl<T: Real> Twist6<T> {
    pub fn zero() -> Self {
        Self([T::zero(); 6])
    }

    pub fn translation(&self) -> Vec3<T> {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn rotation(&self) -> Vec3<T> {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn from_parts(t: Vec3<T>, r: Vec3<T>) -> Self {
        Self([t[0], t[1], t[2], r[0], r[1], r[2]])
    }
}

/// Spatial rigid transform `p ↦ R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Se3<T> {
    pub rotation: UnitQuaternion<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Default for Se3<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Se3<T> {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: [T::zero(); 3],
        }
    }

    pub fn new(rotation: UnitQuaternion<T>, translation: Vec3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Ground-plane pose: position `(x, y, 0)` and heading `yaw`.
    pub fn from_planar(x: T, y: T, yaw: T) -> Self {
        Self::new(UnitQuaternion::from_yaw(yaw), [x, y, T::zero()])
    }

    pub fn compose(&self, o: &Self) -> Self {
        Self::new(
            self.rotation.mul(&o.rotation),
            add3(self.translation, self.rotation.rotate(o.translation)),
        )
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.conjugate();
        let t = r.rotate(self.translation);
        Self::new(r, [-t[0], -t[1], -t[2]])
    }

    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        add3(self.rotation.rotate(p), self.translation)
    }

    /// Maps a ground point of the body frame and projects the result onto world XY.
    pub fn apply_ground(&self, p: Point2<T>) -> Point2<T> {
        let w = self.apply([p.x, p.y, T::zero()]);
        Point2::new(w[0], w[1])
    }

    pub fn yaw(&self) -> T {
        self.rotation.yaw()
    }

    /// Planar part `(x, y, yaw)`.
    pub fn planar(&self) -> Se2<T> {
        Se2::new(self.translation[0], self.translation[1], self.yaw())
    }

    /// Left-multiplies by a planar transform acting on the world ground plane.
    pub fn premul_planar(&self, g: &Se2<T>) -> Self {
        let lift = Self::new(
            UnitQuaternion::from_yaw(g.theta),
            [g.x, g.y, T::zero()],
        );
        lift.compose(self)
    }

    /// Translation copied, rotation as its rotation vector.
    pub fn to_minimal(&self) -> Twist6<T> {
        Twist6::from_parts(self.translation, self.rotation.to_rotation_vector())
    }

    pub fn from_minimal(v: &Twist6<T>) -> Self {
        Self::new(
            UnitQuaternion::from_rotation_vector(v.rotation()),
            v.translation(),
        )
    }

    /// Right-perturbation `self ∘ from_minimal(delta)`.
    pub fn retract(&self, delta: &Twist6<T>) -> Self {
        self.compose(&Self::from_minimal(delta))
    }

    pub fn rotation_matrix(&self) -> Mat3<T> {
        self.rotation.matrix()
    }

    pub fn position_xy(&self) -> Point2<T> {
        Point2::new(self.translation[0], self.translation[1])
    }
}

/// Minimal parameterization used by the relative-pose regularizer.
pub fn se3_minimal<T: Real>(t: &Se3<T>) -> Twist6<T> {
    t.to_minimal()
}

pub fn se3_from_minimal<T: Real>(v: &Twist6<T>) -> Se3<T> {
    Se3::from_minimal(v)
}

/// Signed heading difference `a - b` wrapped into `(-pi, pi]`.
pub fn heading_difference<T: Real>(a: &Se3<T>, b: &Se3<T>) -> T {
    normalize_angle(a.yaw() - b.yaw())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn det(m: &Mat3<f64>) -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    // Matrix logarithm of a rotation via trace and skew part; valid for angles in (0, pi).
    fn matrix_log(m: &Mat3<f64>) -> Vec3<f64> {
        let tr = m[0][0] + m[1][1] + m[2][2];
        let angle = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        if angle < 1e-12 {
            return [0.0; 3];
        }
        let k = angle / (2.0 * angle.sin());
        [
            k * (m[2][1] - m[1][2]),
            k * (m[0][2] - m[2][0]),
            k * (m[1][0] - m[0][1]),
        ]
    }

    #[test]
    fn minimal_examples() {
        assert_eq!(se3_minimal(&Se3::<f64>::identity()), Twist6::zero());
        let t = Se3::new(UnitQuaternion::identity(), [1.0, 2.0, 3.0]);
        assert_eq!(se3_minimal(&t).0, [1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
        let r = Se3::<f64>::from_planar(0.0, 0.0, FRAC_PI_2);
        let v = se3_minimal(&r);
        let oracle = matrix_log(&r.rotation_matrix());
        for k in 0..3 {
            assert!((v.0[3 + k] - oracle[k]).abs() < 1e-12);
        }
        assert!((v.0[5] - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn ground_projection() {
        let p = Point2::new(1.0, 2.0);
        assert_eq!(Se3::<f64>::identity().apply_ground(p), p);
        let t = Se3::new(UnitQuaternion::identity(), [10.0, 0.0, 0.0]);
        assert_eq!(t.apply_ground(p), Point2::new(11.0, 2.0));
    }

    #[test]
    fn near_pi_rotation_keeps_angle_in_range() {
        let v = [0.0, 0.0, PI - 1e-7];
        let q = UnitQuaternion::from_rotation_vector(v);
        let back = q.to_rotation_vector();
        assert!((back[2] - v[2]).abs() < 1e-9);
        // sign-flipped quaternion encodes the same rotation
        let [w, x, y, z] = q.wxyz();
        let flipped = UnitQuaternion::from_wxyz(-w, -x, -y, -z).unwrap();
        let b2 = flipped.to_rotation_vector();
        assert!(norm3(b2) <= PI + 1e-12);
    }

    fn arb_twist(max_rot: f64) -> impl Strategy<Value = Twist6<f64>> {
        (
            prop::array::uniform3(-50.0..50.0f64),
            prop::array::uniform3(-1.0..1.0f64),
            0.0..max_rot,
        )
            .prop_map(|(t, axis, angle)| {
                let n = norm3(axis).max(1e-6);
                Twist6::from_parts(t, scale3(axis, angle / n))
            })
    }

    proptest! {
        #[test]
        fn minimal_round_trip(v in arb_twist(PI - 1e-6)) {
            let back = se3_minimal(&se3_from_minimal(&v));
            for k in 0..6 {
                prop_assert!((back.0[k] - v.0[k]).abs() < 1e-9, "{:?} vs {:?}", back, v);
            }
        }

        #[test]
        fn rotation_stays_orthonormal(a in arb_twist(3.0), b in arb_twist(3.0)) {
            let c = se3_from_minimal(&a).compose(&se3_from_minimal(&b)).inverse();
            prop_assert!((c.rotation.norm() - 1.0).abs() < 1e-12);
            prop_assert!((det(&c.rotation_matrix()) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn inverse_composes_to_identity(a in arb_twist(3.0)) {
            let t = se3_from_minimal(&a);
            let id = t.compose(&t.inverse()).to_minimal();
            for k in 0..6 {
                prop_assert!(id.0[k].abs() < 1e-9);
            }
        }

        #[test]
        fn planar_premultiplication_commutes_with_ground_projection(
            a in arb_twist(0.2), gx in -20.0..20.0f64, gy in -20.0..20.0f64, gt in -PI..PI,
            px in -30.0..30.0f64, py in -30.0..30.0f64,
        ) {
            let pose = se3_from_minimal(&a);
            let g = Se2::new(gx, gy, gt);
            let p = Point2::new(px, py);
            let lhs = pose.premul_planar(&g).apply_ground(p);
            let rhs = g.apply(pose.apply_ground(p));
            prop_assert!(lhs.distance(rhs) < 1e-9);
        }
    }
}
