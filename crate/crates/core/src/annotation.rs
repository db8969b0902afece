//! KITTI object annotations, difficulty tiers and the camera model.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3D, Point3};

/// Class token used by KITTI for regions that must not be evaluated.
pub const DONT_CARE: &str = "DontCare";

/// One row of a KITTI label or prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub class_name: String,
    pub truncation: f64,
    /// 0 fully visible, 1 partly occluded, 2 largely occluded, 3 unknown.
    /// `DontCare` rows carry -1.
    pub occlusion: i32,
    pub alpha: f64,
    /// `(left, top, right, bottom)` in pixels.
    pub box2d: [f64; 4],
    /// `(height, width, length)` in metres.
    pub dims: [f64; 3],
    /// Bottom-face center `(x, y, z)` in camera coordinates.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl ObjectAnnotation {
    pub fn is_dont_care(&self) -> bool {
        self.class_name == DONT_CARE
    }

    pub fn box_height(&self) -> f64 {
        self.box2d[3] - self.box2d[1]
    }

    pub fn box3d(&self) -> Box3D {
        Box3D {
            center: Point3::new(self.location[0], self.location[1], self.location[2]),
            dims: self.dims,
            yaw: self.rotation_y,
        }
    }

    /// Checks the invariants a non-`DontCare` row must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.is_dont_care() {
            return Ok(());
        }
        let [l, t, r, b] = self.box2d;
        if !(r > l) {
            return Err(Error::domain("box2d width", r - l));
        }
        if !(b > t) {
            return Err(Error::domain("box2d height", b - t));
        }
        if !(0.0..=1.0).contains(&self.truncation) {
            return Err(Error::domain("truncation", self.truncation));
        }
        let pi = core::f64::consts::PI;
        if !(-pi..=pi).contains(&self.alpha) {
            return Err(Error::domain("alpha", self.alpha));
        }
        if !(-pi..=pi).contains(&self.rotation_y) {
            return Err(Error::domain("rotation_y", self.rotation_y));
        }
        Ok(())
    }
}

/// KITTI difficulty tiers, ordered from easiest to excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl Difficulty {
    pub const EVALUATED: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
            Difficulty::Ignored => "ignored",
        }
    }

    /// Whether an object of tier `self` counts when evaluating at `level`.
    /// Tiers are cumulative: a moderate evaluation includes easy objects.
    pub fn included_in(self, level: Difficulty) -> bool {
        self != Difficulty::Ignored && self <= level
    }
}

struct Tier {
    level: Difficulty,
    min_height: f64,
    max_truncation: f64,
    max_occlusion: i32,
}

const TIERS: [Tier; 3] = [
    Tier {
        level: Difficulty::Easy,
        min_height: 40.0,
        max_truncation: 0.15,
        max_occlusion: 0,
    },
    Tier {
        level: Difficulty::Moderate,
        min_height: 25.0,
        max_truncation: 0.30,
        max_occlusion: 1,
    },
    Tier {
        level: Difficulty::Hard,
        min_height: 25.0,
        max_truncation: 0.50,
        max_occlusion: 2,
    },
];

/// Easiest tier whose height, truncation and occlusion limits the object meets.
/// Occlusion code 3 (unknown) and negative codes never qualify.
pub fn assign_difficulty(a: &ObjectAnnotation) -> Difficulty {
    let height = a.box_height();
    TIERS
        .iter()
        .find(|t| {
            height > t.min_height && a.truncation <= t.max_truncation && (0..=t.max_occlusion).contains(&a.occlusion)
        })
        .map_or(Difficulty::Ignored, |t| t.level)
}

/// Camera intrinsics taken from the `P2` projection matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraCalibration {
    /// Row-major 3x4 projection matrix.
    pub p2: [[f64; 4]; 3],
}

impl CameraCalibration {
    pub fn from_p2(p2: [[f64; 4]; 3]) -> Result<Self> {
        let calib = CameraCalibration { p2 };
        if !p2.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite P2 entry".into()));
        }
        if !(calib.f() > 0.0) {
            return Err(Error::domain("focal length", calib.f()));
        }
        Ok(calib)
    }

    /// Ideal pinhole with no translation terms.
    pub fn pinhole(f: f64, theta: f64, phi: f64) -> Result<Self> {
        Self::from_p2([[f, 0.0, theta, 0.0], [0.0, f, phi, 0.0], [0.0, 0.0, 1.0, 0.0]])
    }

    /// Focal length in pixels.
    #[inline]
    pub fn f(&self) -> f64 {
        self.p2[0][0]
    }

    /// Principal point, horizontal.
    #[inline]
    pub fn theta(&self) -> f64 {
        self.p2[0][2]
    }

    /// Principal point, vertical.
    #[inline]
    pub fn phi(&self) -> f64 {
        self.p2[1][2]
    }

    pub fn check_image_bounds(&self, width: f64, height: f64) -> Result<()> {
        if !(0.0..=width).contains(&self.theta()) {
            return Err(Error::domain("principal point u", self.theta()));
        }
        if !(0.0..=height).contains(&self.phi()) {
            return Err(Error::domain("principal point v", self.phi()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(height: f64, truncation: f64, occlusion: i32) -> ObjectAnnotation {
        ObjectAnnotation {
            class_name: "Car".into(),
            truncation,
            occlusion,
            alpha: 0.0,
            box2d: [100.0, 100.0, 200.0, 100.0 + height],
            dims: [1.5, 1.6, 3.9],
            location: [0.0, 1.7, 20.0],
            rotation_y: 0.0,
            score: None,
        }
    }

    #[test]
    fn difficulty_examples() {
        assert_eq!(assign_difficulty(&car(50.0, 0.0, 0)), Difficulty::Easy);
        assert_eq!(assign_difficulty(&car(30.0, 0.2, 1)), Difficulty::Moderate);
        assert_eq!(assign_difficulty(&car(20.0, 0.0, 0)), Difficulty::Ignored);
        assert_eq!(assign_difficulty(&car(30.0, 0.45, 2)), Difficulty::Hard);
    }

    #[test]
    fn difficulty_boundaries() {
        // height must be strictly greater than the floor
        assert_eq!(assign_difficulty(&car(40.0, 0.0, 0)), Difficulty::Moderate);
        assert_eq!(assign_difficulty(&car(25.0, 0.0, 0)), Difficulty::Ignored);
        assert_eq!(assign_difficulty(&car(41.0, 0.15, 0)), Difficulty::Easy);
        assert_eq!(assign_difficulty(&car(41.0, 0.5, 0)), Difficulty::Hard);
        assert_eq!(assign_difficulty(&car(41.0, 0.51, 0)), Difficulty::Ignored);
        assert_eq!(assign_difficulty(&car(100.0, 0.0, 3)), Difficulty::Ignored);
        assert_eq!(assign_difficulty(&car(100.0, 0.0, -1)), Difficulty::Ignored);
    }

    #[test]
    fn cumulative_inclusion() {
        assert!(Difficulty::Easy.included_in(Difficulty::Hard));
        assert!(!Difficulty::Hard.included_in(Difficulty::Moderate));
        assert!(!Difficulty::Ignored.included_in(Difficulty::Hard));
    }

    #[test]
    fn calibration_entries() {
        let c = CameraCalibration::pinhole(700.0, 600.0, 170.0).unwrap();
        assert_eq!((c.f(), c.theta(), c.phi()), (700.0, 600.0, 170.0));
        assert!(c.check_image_bounds(1242.0, 375.0).is_ok());
        assert!(c.check_image_bounds(500.0, 375.0).is_err());
        assert!(matches!(
            CameraCalibration::pinhole(-1.0, 600.0, 170.0),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn validate_rejects_inverted_box() {
        let mut a = car(30.0, 0.0, 0);
        assert!(a.validate().is_ok());
        a.box2d = [200.0, 100.0, 100.0, 130.0];
        assert!(a.validate().is_err());
        a.class_name = DONT_CARE.into();
        assert!(a.validate().is_ok());
    }
}
