use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::scalar::Real;

/// A point or vector in the planar world frame (x east, y north, meters).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Rotates the vector counter-clockwise by `angle`.
    pub fn rotated(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn cast<U: Real>(self) -> Point2<U> {
        Point2::new(
            U::from(self.x).expect("castable"),
            U::from(self.y).expect("castable"),
        )
    }
}

impl<T: Real> Add for Point2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> AddAssign for Point2<T> {
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl<T: Real> Sub for Point2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Mul<T> for Point2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Real> Neg for Point2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Euclidean distance between two pole ground points.
pub fn pole_distance<T: Real>(a: Point2<T>, b: Point2<T>) -> T {
    a.distance(b)
}

/// Closest point to `p` on the segment `[a, b]` and its distance.
pub fn closest_on_segment<T: Real>(p: Point2<T>, a: Point2<T>, b: Point2<T>) -> (Point2<T>, T) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > T::zero() {
        ((p - a).dot(ab) / len2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let c = a + ab * t;
    (c, p.distance(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pole_distance_cases() {
        let o = Point2::new(0.0, 0.0);
        assert_eq!(pole_distance(o, o), 0.0);
        assert_eq!(pole_distance(o, Point2::new(3.0, 4.0)), 5.0);
        let a = Point2::new(-1.5, 2.25);
        let b = Point2::new(7.0, -0.5);
        assert_eq!(pole_distance(a, b), pole_distance(b, a));
    }

    #[test]
    fn segment_projection_clamps() {
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(2.0, 0.0);
        let (c, d) = closest_on_segment(Point2::new(1.0, 1.0), a, b);
        assert_eq!(c, Point2::new(1.0, 0.0));
        assert_eq!(d, 1.0);
        let (c, d) = closest_on_segment(Point2::new(5.0, 4.0), a, b);
        assert_eq!(c, b);
        assert_eq!(d, 5.0);
    }
}
