//! Fixed-length discriminator inputs from variable-length segments.

use crate::env::{distance, Point, TrajectorySegment};

/// Number of auxiliary features appended to the resampled path.
pub const AUX_DIM: usize = 6;

pub fn input_dim(l_fix: usize) -> usize {
    2 * l_fix + AUX_DIM
}

/// Arc-length-uniform linear interpolation of a polyline to exactly `n`
/// points. Endpoints are kept exactly; a zero-length path replicates its
/// first point.
pub fn resample_points(points: &[Point], n: usize) -> Vec<Point> {
    assert!(!points.is_empty() && n >= 1);
    let first = points[0];
    let last = *points.last().unwrap();
    let cum: Vec<f64> = std::iter::once(0.0)
        .chain(points.windows(2).scan(0.0, |acc, w| {
            *acc += distance(w[0], w[1]);
            Some(*acc)
        }))
        .collect();
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return vec![first; n];
    }
    if n == 1 {
        return vec![last];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for j in 0..n {
        if j == 0 {
            out.push(first);
            continue;
        }
        if j == n - 1 {
            out.push(last);
            continue;
        }
        let s = total * j as f64 / (n - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let u = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let (a, b) = (points[seg], points[seg + 1]);
        out.push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
    }
    out
}

/// Resampled, world-normalized path followed by
/// `[duration / t_max, start x, start y, end x, end y, straight / path]`.
/// The straightness ratio is 1 for a zero-length path.
pub fn segment_features(points: &[Point], duration: u32, l_fix: usize, world_size: f64, t_max: u32) -> Vec<f64> {
    let resampled = resample_points(points, l_fix);
    let mut out = Vec::with_capacity(input_dim(l_fix));
    for p in &resampled {
        out.push(p[0] / world_size);
        out.push(p[1] / world_size);
    }
    let first = points[0];
    let last = *points.last().unwrap();
    let path: f64 = points.windows(2).map(|w| distance(w[0], w[1])).sum();
    let ratio = if path > 0.0 { distance(first, last) / path } else { 1.0 };
    out.extend([
        (duration as f64 / t_max as f64).min(1.5),
        first[0] / world_size,
        first[1] / world_size,
        last[0] / world_size,
        last[1] / world_size,
        ratio.min(1.0),
    ]);
    out
}

pub fn resample_segment(seg: &TrajectorySegment, l_fix: usize, world_size: f64, t_max: u32) -> Vec<f64> {
    segment_features(&seg.points, seg.duration(), l_fix, world_size, t_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_interpolation() {
        let out = resample_points(&[[0.0, 0.0], [3.0, 0.0]], 4);
        assert_eq!(out, vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
    }

    #[test]
    fn uniform_input_is_fixed_point() {
        let pts: Vec<Point> = (0..6).map(|i| [i as f64, 2.0 * i as f64]).collect();
        let out = resample_points(&pts, 6);
        for (a, b) in out.iter().zip(&pts) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_replicates() {
        assert_eq!(resample_points(&[[1.0, 2.0]], 3), vec![[1.0, 2.0]; 3]);
        let f = segment_features(&[[1.0, 2.0]], 1, 3, 10.0, 40);
        assert_eq!(f.len(), input_dim(3));
        assert_eq!(f[f.len() - 1], 1.0);
    }
}
