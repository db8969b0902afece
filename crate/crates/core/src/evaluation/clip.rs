//! Convex polygon clipping (Sutherland-Hodgman) on the ground plane.

use alloc::vec::Vec;

use crate::geometry::shoelace;
use crate::math;

/// Vertices closer than this are merged after clipping.
pub const MERGE_EPS: f64 = 1e-9;

#[inline]
fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segment_line_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Intersection of `subject` with the convex counter-clockwise polygon `clip`.
///
/// `subject` may be any simple polygon wound counter-clockwise; for two convex
/// inputs the output is their convex intersection, possibly empty.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = core::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    merge_close(output)
}

fn merge_close(points: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let near = |p: [f64; 2], q: [f64; 2]| math::abs(p[0] - q[0]) <= MERGE_EPS && math::abs(p[1] - q[1]) <= MERGE_EPS;
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().is_none_or(|&l| !near(l, p)) {
            out.push(p);
        }
    }
    while out.len() > 1 && near(out[0], out[out.len() - 1]) {
        out.pop();
    }
    out
}

/// Area of the intersection of two convex counter-clockwise polygons.
pub fn intersection_area(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let poly = clip_convex(a, b);
    if poly.len() < 3 {
        return 0.0;
    }
    shoelace(&poly).max(0.0)
}
