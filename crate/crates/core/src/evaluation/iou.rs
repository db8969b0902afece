use crate::error::{Error, Result};
use crate::geometry::{bev_footprint, Box3D};

use super::clip::intersection_area;

/// Which overlap measure decides a match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum IouMetric {
    /// Volume IoU of the oriented boxes.
    Box3D,
    /// Area IoU of the ground-plane footprints.
    Bev,
}

impl IouMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            IouMetric::Box3D => "3d",
            IouMetric::Bev => "bev",
        }
    }

    pub fn iou(self, a: &Box3D, b: &Box3D) -> Result<f64> {
        match self {
            IouMetric::Box3D => iou_3d(a, b),
            IouMetric::Bev => bev_iou(a, b),
        }
    }
}

fn ratio(inter: f64, size_a: f64, size_b: f64) -> Result<f64> {
    let degenerate_a = !(size_a > 0.0);
    let degenerate_b = !(size_b > 0.0);
    match (degenerate_a, degenerate_b) {
        (true, true) => Err(Error::Degenerate),
        (true, false) | (false, true) => Ok(0.0),
        (false, false) => {
            let union = size_a + size_b - inter;
            Ok((inter / union).clamp(0.0, 1.0))
        }
    }
}

fn bev_intersection(a: &Box3D, b: &Box3D) -> f64 {
    intersection_area(&bev_footprint(a).vertices, &bev_footprint(b).vertices)
}

/// Intersection over union of the two ground-plane footprints.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> Result<f64> {
    let area_a = a.width() * a.length();
    let area_b = b.width() * b.length();
    if !(area_a > 0.0) || !(area_b > 0.0) {
        return ratio(0.0, area_a, area_b);
    }
    ratio(bev_intersection(a, b), area_a, area_b)
}

/// Volume IoU for boxes that only rotate about the vertical axis: footprint
/// intersection times vertical overlap, over the union volume.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> Result<f64> {
    let vol_a = a.volume();
    let vol_b = b.volume();
    if !(vol_a > 0.0) || !(vol_b > 0.0) {
        return ratio(0.0, vol_a, vol_b);
    }
    let (top_a, bottom_a) = a.vertical_extent();
    let (top_b, bottom_b) = b.vertical_extent();
    let overlap = (bottom_a.min(bottom_b) - top_a.max(top_b)).max(0.0);
    if overlap == 0.0 {
        return Ok(0.0);
    }
    ratio(bev_intersection(a, b) * overlap, vol_a, vol_b)
}
