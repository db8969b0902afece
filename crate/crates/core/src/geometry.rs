//! Pinhole camera math and oriented 3D boxes.
//!
//! Camera coordinates follow KITTI: `x` right, `y` down, `z` forward. A box
//! location is the center of its bottom face, so the box occupies
//! `[y - height, y]` vertically. Yaw rotates about the `y` axis.

use serde::{Deserialize, Serialize};

use crate::annotation::CameraCalibration;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(self, other: Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        math::sqrt(dx * dx + dy * dy + dz * dz)
    }
}

impl From<[f64; 3]> for Point3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Point3 { x, y, z }
    }
}

/// Center-size 2D box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub center_u: f64,
    pub center_v: f64,
    pub width: f64,
    pub height: f64,
    pub confidence: Option<f64>,
}

impl Box2D {
    pub fn new(center_u: f64, center_v: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::domain("box width", width));
        }
        if !(height > 0.0) {
            return Err(Error::domain("box height", height));
        }
        Ok(Box2D {
            center_u,
            center_v,
            width,
            height,
            confidence: None,
        })
    }

    /// From KITTI `(left, top, right, bottom)`.
    pub fn from_ltrb([l, t, r, b]: [f64; 4]) -> Result<Self> {
        Self::new((l + r) / 2.0, (t + b) / 2.0, r - l, b - t)
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::domain("box confidence", confidence));
        }
        self.confidence = Some(confidence);
        Ok(self)
    }

    /// `(u, v, d, h)`, the regression target layout.
    pub fn to_array(&self) -> [f64; 4] {
        [self.center_u, self.center_v, self.width, self.height]
    }
}

/// Oriented 3D box in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    /// Bottom-face center.
    pub center: Point3,
    /// `(height, width, length)` in metres.
    pub dims: [f64; 3],
    pub yaw: f64,
}

impl Box3D {
    pub fn new(center: Point3, dims: [f64; 3], yaw: f64) -> Result<Self> {
        for (what, v) in [("box height", dims[0]), ("box width", dims[1]), ("box length", dims[2])] {
            if !(v > 0.0) {
                return Err(Error::domain(what, v));
            }
        }
        Ok(Box3D { center, dims, yaw })
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.dims[0]
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.dims[1]
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.dims[2]
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Center of the box volume (half a height above the location).
    pub fn geometric_center(&self) -> Point3 {
        Point3::new(self.center.x, self.center.y - self.height() / 2.0, self.center.z)
    }

    /// Vertical extent `(top, bottom)` with `top < bottom` since `y` points down.
    pub fn vertical_extent(&self) -> (f64, f64) {
        (self.center.y - self.height(), self.center.y)
    }
}

/// The eight corners of a [`Box3D`].
///
/// Indices 0..4 are the bottom face, counter-clockwise in the `(x, z)` plane;
/// indices 4..8 are the top face in the same order, so corner `k + 4` sits
/// directly above corner `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerSet {
    pub corners: [Point3; 8],
}

impl CornerSet {
    pub fn centroid(&self) -> Point3 {
        let mut c = Point3::default();
        for p in &self.corners {
            c.x += p.x;
            c.y += p.y;
            c.z += p.z;
        }
        Point3::new(c.x / 8.0, c.y / 8.0, c.z / 8.0)
    }
}

/// Box footprint on the `(x, z)` ground plane, counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevPolygon {
    pub vertices: [[f64; 2]; 4],
}

impl BevPolygon {
    pub fn signed_area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        math::abs(self.signed_area())
    }
}

/// Signed shoelace area, positive for counter-clockwise vertex order.
pub fn shoelace(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = vertices[i];
        let [x1, y1] = vertices[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

/// Lifts a pixel to camera coordinates at a known depth:
/// `u3d = (u2d - theta) * z / f`, `v3d = (v2d - phi) * z / f`.
///
/// Only the intrinsic part of `P2` is used; its translation column is ignored.
pub fn inverse_project(center: (f64, f64), depth: f64, calib: &CameraCalibration) -> Result<(f64, f64)> {
    if !(depth > 0.0) {
        return Err(Error::domain("depth", depth));
    }
    let scale = depth / calib.f();
    Ok(((center.0 - calib.theta()) * scale, (center.1 - calib.phi()) * scale))
}

/// Projects a camera-frame point to pixels, the inverse of [`inverse_project`].
pub fn forward_project(point: Point3, calib: &CameraCalibration) -> Result<(f64, f64)> {
    if !(point.z > 0.0) {
        return Err(Error::domain("depth", point.z));
    }
    let f = calib.f();
    Ok((
        f * point.x / point.z + calib.theta(),
        f * point.y / point.z + calib.phi(),
    ))
}

fn rotate_footprint(b: &Box3D, local_x: f64, local_z: f64) -> [f64; 2] {
    let (s, c) = math::sin_cos(b.yaw);
    [
        b.center.x + c * local_x + s * local_z,
        b.center.z - s * local_x + c * local_z,
    ]
}

fn footprint(b: &Box3D) -> [[f64; 2]; 4] {
    let hl = b.length() / 2.0;
    let hw = b.width() / 2.0;
    [
        rotate_footprint(b, hl, hw),
        rotate_footprint(b, -hl, hw),
        rotate_footprint(b, -hl, -hw),
        rotate_footprint(b, hl, -hw),
    ]
}

pub fn box3d_corners(b: &Box3D) -> CornerSet {
    let fp = footprint(b);
    let (top, bottom) = b.vertical_extent();
    let mut corners = [Point3::default(); 8];
    for (k, [x, z]) in fp.into_iter().enumerate() {
        corners[k] = Point3::new(x, bottom, z);
        corners[k + 4] = Point3::new(x, top, z);
    }
    CornerSet { corners }
}

pub fn bev_footprint(b: &Box3D) -> BevPolygon {
    BevPolygon { vertices: footprint(b) }
}
