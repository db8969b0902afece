use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::math;

/// Depth bin edges in metres: 10 m bins up to 70 m, then one 70-90 m bin.
pub const DEPTH_BIN_EDGES: [f64; 9] = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 90.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterPair {
    pub gt: Point3,
    pub pred: Point3,
}

/// Relative accuracy per coordinate, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateAccuracy {
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

impl CoordinateAccuracy {
    pub fn mean(&self) -> f64 {
        (self.u + self.v + self.z) / 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` when no pair falls in the bin.
    pub accuracy: Option<CoordinateAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub ra_u: f64,
    pub ra_v: f64,
    pub ra_z: f64,
    pub count: usize,
    pub depth_bins: Vec<DepthBin>,
}

/// Index of the bin holding `z`; the last bin is closed on the right.
pub fn depth_bin(z: f64) -> Option<usize> {
    let last = DEPTH_BIN_EDGES.len() - 2;
    (0..=last).find(|&i| {
        let (lo, hi) = (DEPTH_BIN_EDGES[i], DEPTH_BIN_EDGES[i + 1]);
        z >= lo && (z < hi || (i == last && z == hi))
    })
}

fn accuracy(pairs: &[&CenterPair]) -> CoordinateAccuracy {
    let n = pairs.len() as f64;
    let (mut eu, mut ev, mut ez) = (0.0, 0.0, 0.0);
    for p in pairs {
        eu += math::abs(p.pred.x - p.gt.x) / p.gt.z;
        ev += math::abs(p.pred.y - p.gt.y) / p.gt.z;
        ez += math::abs(p.pred.z - p.gt.z) / p.gt.z;
    }
    let ra = |e: f64| (1.0 - e / n).clamp(0.0, 1.0);
    CoordinateAccuracy {
        u: ra(eu),
        v: ra(ev),
        z: ra(ez),
    }
}

/// `ra_c = 1 - mean(|c_hat - c| / z_gt)` for each center coordinate, overall
/// and per ground-truth depth bin. Every error is normalized by the
/// ground-truth depth.
pub fn localization_report(pairs: &[CenterPair]) -> Result<LocalizationReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("matched pairs"));
    }
    if let Some(p) = pairs.iter().find(|p| !(p.gt.z > 0.0)) {
        return Err(Error::domain("ground-truth depth", p.gt.z));
    }
    let all: Vec<&CenterPair> = pairs.iter().collect();
    let overall = accuracy(&all);
    let mut bins: Vec<Vec<&CenterPair>> = alloc::vec![Vec::new(); DEPTH_BIN_EDGES.len() - 1];
    for p in pairs {
        if let Some(i) = depth_bin(p.gt.z) {
            bins[i].push(p);
        }
    }
    let depth_bins = bins
        .iter()
        .enumerate()
        .map(|(i, members)| DepthBin {
            lower: DEPTH_BIN_EDGES[i],
            upper: DEPTH_BIN_EDGES[i + 1],
            count: members.len(),
            accuracy: (!members.is_empty()).then(|| accuracy(members)),
        })
        .collect();
    Ok(LocalizationReport {
        ra_u: overall.u,
        ra_v: overall.v,
        ra_z: overall.z,
        count: pairs.len(),
        depth_bins,
    })
}
