//! Monte-Carlo volume IoU, independent of polygon clipping.
//!
//! Points are drawn uniformly from the axis-aligned hull of both boxes and
//! tested for membership in each box's own frame.

use mono3d_core::geometry::box3d_corners;
use mono3d_core::Box3D;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Whether `(x, y, z)` lies inside the box.
pub fn contains(b: &Box3D, x: f64, y: f64, z: f64) -> bool {
    let (top, bottom) = b.vertical_extent();
    if y < top || y > bottom {
        return false;
    }
    // Undo the yaw: the box frame has length along x and width along z.
    let (s, c) = b.yaw.sin_cos();
    let dx = x - b.center.x;
    let dz = z - b.center.z;
    let local_x = c * dx - s * dz;
    let local_z = s * dx + c * dz;
    local_x.abs() <= b.length() / 2.0 && local_z.abs() <= b.width() / 2.0
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    // 53 random bits in [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Hit-count estimate of `|A ∩ B| / |A ∪ B|` from `samples` uniform points.
/// Returns 0 when no sample lands in either box.
pub fn monte_carlo_iou(a: &Box3D, b: &Box3D, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in box3d_corners(a).corners.iter().chain(box3d_corners(b).corners.iter()) {
        for (k, v) in [c.x, c.y, c.z].into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let (mut in_a, mut in_b, mut in_both) = (0u64, 0u64, 0u64);
    for _ in 0..samples {
        let x = lo[0] + unit(rng) * (hi[0] - lo[0]);
        let y = lo[1] + unit(rng) * (hi[1] - lo[1]);
        let z = lo[2] + unit(rng) * (hi[2] - lo[2]);
        let ia = contains(a, x, y, z);
        let ib = contains(b, x, y, z);
        in_a += ia as u64;
        in_b += ib as u64;
        in_both += (ia && ib) as u64;
    }
    let union = in_a + in_b - in_both;
    if union == 0 {
        0.0
    } else {
        in_both as f64 / union as f64
    }
}

/// Generator seeded for one pair index, so pairs can be estimated in any order.
pub fn pair_rng(seed: u64, pair: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pair);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use mono3d_core::Point3;

    #[test]
    fn membership_follows_yaw() {
        // length 4 along x at yaw 0; a quarter turn puts it along z
        let b = Box3D::new(Point3::new(0.0, 1.0, 10.0), [1.0, 1.0, 4.0], 0.0).unwrap();
        assert!(contains(&b, 1.9, 0.5, 10.0));
        assert!(!contains(&b, 0.0, 0.5, 11.9));
        assert!(!contains(&b, 0.0, 1.5, 10.0));
        let turned = Box3D {
            yaw: std::f64::consts::FRAC_PI_2,
            ..b
        };
        assert!(!contains(&turned, 1.9, 0.5, 10.0));
        assert!(contains(&turned, 0.0, 0.5, 11.9));
    }

    #[test]
    fn identical_boxes_and_determinism() {
        let b = Box3D::new(Point3::new(1.0, 1.6, 20.0), [1.5, 1.7, 4.0], 0.4).unwrap();
        assert_eq!(monte_carlo_iou(&b, &b, 10_000, &mut pair_rng(3, 0)), 1.0);
        let c = Box3D {
            center: Point3::new(1.5, 1.6, 20.3),
            ..b
        };
        let x = monte_carlo_iou(&b, &c, 10_000, &mut pair_rng(3, 1));
        let y = monte_carlo_iou(&b, &c, 10_000, &mut pair_rng(3, 1));
        assert_eq!(x.to_bits(), y.to_bits());
        assert!(x > 0.0 && x < 1.0);
    }
}
