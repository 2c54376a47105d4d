use serde::{Deserialize, Serialize};

use crate::geometry::UnitQuaternion;
use crate::model::Trajectory;
use crate::{Point2, Se3};

/// Smooth global error of the initial trajectories.
///
/// The displacement is a function of world position, so sessions driving the
/// same street share it: the scene stays locally consistent while drifting
/// globally. A pose at `p` is rotated by `rotation` about `pivot`, shifted by
/// `bias`, displaced by `amplitude · sin(2π (p·u)/wavelength + phase)` across
/// the wave direction `u`, and has its heading perturbed by
/// `heading_amplitude · cos(·)` of the same phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSpec {
    pub amplitude: f64,
    pub wavelength: f64,
    pub heading_amplitude: f64,
    pub bias: [f64; 2],
    /// Rigid rotation (radians) about the pivot.
    pub rotation: f64,
    /// Pivot of the rigid rotation; `None` uses the scene center.
    pub pivot: Option<[f64; 2]>,
    /// Direction of the wave vector (radians).
    pub direction: f64,
    pub phase: f64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.0,
            wavelength: 500.0,
            heading_amplitude: 0.0,
            bias: [0.0, 0.0],
            rotation: 0.0,
            pivot: None,
            direction: std::f64::consts::FRAC_PI_4,
            phase: 0.0,
        }
    }
}

impl DriftSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wavelength > 0.0) {
            return Err("wavelength must be positive".into());
        }
        let finite = [
            self.amplitude,
            self.heading_amplitude,
            self.bias[0],
            self.bias[1],
            self.rotation,
            self.direction,
            self.phase,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err("drift parameters must be finite".into());
        }
        Ok(())
    }

    /// Drifted version of a single pose.
    pub fn apply(&self, pose: &Se3, pivot: Point2) -> Se3 {
        let p = pose.position_xy();
        let u = Point2::new(self.direction.cos(), self.direction.sin());
        let arg = 2.0 * std::f64::consts::PI * p.dot(u) / self.wavelength + self.phase;
        let wave = u.perp() * (self.amplitude * arg.sin());
        let moved = pivot + (p - pivot).rotated(self.rotation) + Point2::new(self.bias[0], self.bias[1]) + wave;
        let yaw = self.rotation + self.heading_amplitude * arg.cos();
        let rotation = UnitQuaternion::from_yaw(yaw).mul(&pose.rotation);
        Se3::new(rotation, [moved.x, moved.y, pose.translation[2]])
    }
}

/// Initial trajectory obtained by drifting a ground-truth trajectory.
pub fn perturb_trajectory(gt: &Trajectory, d: &DriftSpec, pivot: Point2) -> Trajectory {
    let xs: Vec<Se3> = gt.poses().iter().map(|p| d.apply(&p.transform, pivot)).collect();
    gt.with_transforms(&xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pose;

    fn line(len: usize, dir: f64) -> Trajectory {
        let u = Point2::new(dir.cos(), dir.sin());
        let poses = (0..=len)
            .map(|i| {
                let p = u * i as f64;
                Pose {
                    session_id: "a".into(),
                    index: i as u64,
                    timestamp: i as f64,
                    transform: Se3::from_planar(p.x, p.y, dir),
                }
            })
            .collect();
        Trajectory::new("a", poses).unwrap()
    }

    #[test]
    fn zero_drift_is_identity() {
        let t = line(100, 0.3);
        let out = perturb_trajectory(&t, &DriftSpec::default(), Point2::new(5.0, 5.0));
        for (a, b) in out.poses().iter().zip(t.poses()) {
            assert!(a.transform.position_xy().distance(b.transform.position_xy()) < 1e-12);
            assert!((a.transform.yaw() - b.transform.yaw()).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_shifts_every_pose() {
        let t = line(50, 1.0);
        let d = DriftSpec { bias: [2.0, 0.0], ..DriftSpec::default() };
        let out = perturb_trajectory(&t, &d, Point2::origin());
        for (a, b) in out.poses().iter().zip(t.poses()) {
            let s = a.transform.position_xy() - b.transform.position_xy();
            assert!((s.x - 2.0).abs() < 1e-12 && s.y.abs() < 1e-12);
        }
    }

    #[test]
    fn sinusoid_extremum() {
        let d = DriftSpec { amplitude: 2.0, wavelength: 500.0, ..DriftSpec::default() };
        let t = line(600, d.direction);
        let out = perturb_trajectory(&t, &d, Point2::origin());
        let max = out
            .poses()
            .iter()
            .zip(t.poses())
            .map(|(a, b)| a.transform.position_xy().distance(b.transform.position_xy()))
            .fold(0.0, f64::max);
        assert!((1.9..=2.1).contains(&max), "{max}");
    }

    #[test]
    fn local_shape_is_preserved() {
        let d = DriftSpec { amplitude: 2.0, wavelength: 500.0, ..DriftSpec::default() };
        for dir in [0.0, 0.5, d.direction] {
            let t = line(800, dir);
            let out = perturb_trajectory(&t, &d, Point2::origin());
            let bound = d.amplitude * 2.0 * std::f64::consts::PI * 1.0 / d.wavelength;
            for k in 1..t.len() {
                let gt = t.poses()[k].transform.position_xy() - t.poses()[k - 1].transform.position_xy();
                let dr = out.poses()[k].transform.position_xy() - out.poses()[k - 1].transform.position_xy();
                assert!((dr - gt).norm() < bound);
            }
        }
    }
}
