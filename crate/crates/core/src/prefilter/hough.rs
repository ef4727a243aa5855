//! Progressive probabilistic Hough transform.
//!
//! Edge pixels are visited in a seeded random order and vote into a
//! `(theta, rho)` accumulator. As soon as one bin reaches the vote threshold
//! the line through the current pixel is walked in both directions,
//! tolerating gaps of up to `max_gap` pixels and edge pixels up to
//! `tolerance` pixels off the ideal line. Pixels on the walked segment
//! are removed from the edge set (and their votes withdrawn when the segment
//! is kept), so each edge pixel supports at most one segment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geo::Binary;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    /// `(x, y)` pixel coordinates, `x` = column.
    pub start: (usize, usize),
    pub end: (usize, usize),
    /// Number of edge pixels collected along the segment.
    pub strength: usize,
}

impl LineSegment {
    pub fn midpoint(&self) -> (f64, f64) {
        (
            (self.start.0 + self.end.0) as f64 / 2.0,
            (self.start.1 + self.end.1) as f64 / 2.0,
        )
    }

    /// Orientation in degrees in [0, 180), 0 = horizontal.
    pub fn angle_deg(&self) -> f64 {
        let dx = self.end.0 as f64 - self.start.0 as f64;
        let dy = self.end.1 as f64 - self.start.1 as f64;
        let a = dy.atan2(dx).to_degrees();
        a.rem_euclid(180.0)
    }

    pub fn length(&self) -> f64 {
        let dx = self.end.0 as f64 - self.start.0 as f64;
        let dy = self.end.1 as f64 - self.start.1 as f64;
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughParams {
    /// Accumulator votes needed before a line is walked.
    pub vote_threshold: usize,
    /// Minimum edge pixels on a returned segment.
    pub min_support: usize,
    pub max_gap: usize,
    /// Perpendicular slack, in pixels, when walking and collecting a line.
    pub tolerance: usize,
    pub theta_bins: usize,
    pub seed: u64,
}

impl HoughParams {
    pub fn with_support(min_support: usize) -> Self {
        HoughParams {
            vote_threshold: min_support.div_ceil(2).max(1),
            min_support: min_support.max(1),
            max_gap: 2,
            tolerance: 1,
            theta_bins: 180,
            seed: 0x5eed,
        }
    }
}

pub fn extract_lines(edges: &Binary, min_support: usize) -> Vec<LineSegment> {
    extract_lines_with(edges, &HoughParams::with_support(min_support))
}

pub fn extract_lines_with(edges: &Binary, params: &HoughParams) -> Vec<LineSegment> {
    let (w, h) = (edges.cols(), edges.rows());
    let mut mask: Vec<bool> = edges.values().iter().map(|&v| v != 0).collect();
    let mut points: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask[y * w + x])
        .collect();
    if points.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    points.shuffle(&mut rng);

    let n_theta = params.theta_bins.max(1);
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|n| {
            let t = std::f64::consts::PI * n as f64 / n_theta as f64;
            (t.cos(), t.sin())
        })
        .collect();
    let n_rho = 2 * (w + h) + 1;
    let offset = (n_rho - 1) / 2;
    let mut acc = vec![0u32; n_theta * n_rho];
    let mut voted = vec![false; w * h];
    let rho_bin = |x: usize, y: usize, (c, s): (f64, f64)| -> usize {
        ((x as f64 * c + y as f64 * s).round() as isize + offset as isize) as usize
    };

    let mut out = Vec::new();
    for &(px, py) in &points {
        if !mask[py * w + px] {
            continue;
        }
        voted[py * w + px] = true;
        let mut best = (0u32, 0usize);
        for (n, &t) in trig.iter().enumerate() {
            let bin = &mut acc[n * n_rho + rho_bin(px, py, t)];
            *bin += 1;
            if *bin > best.0 {
                best = (*bin, n);
            }
        }
        if (best.0 as usize) < params.vote_threshold {
            continue;
        }

        // the line runs perpendicular to its normal (cos, sin)
        let (c, s) = trig[best.1];
        let (mut dx, mut dy) = (-s, c);
        let major = dx.abs().max(dy.abs());
        dx /= major;
        dy /= major;

        // perpendicular offsets to probe around each point of the line
        let tol = params.tolerance as isize;
        let (ox, oy) = if dx.abs() >= dy.abs() { (0, 1) } else { (1, 0) };
        let band = |x: usize, y: usize| {
            (-tol..=tol).filter_map(move |k| {
                let (bx, by) = (x as isize + k * ox, y as isize + k * oy);
                (bx >= 0 && by >= 0 && bx < w as isize && by < h as isize)
                    .then_some((bx as usize, by as usize))
            })
        };

        let mut ends = [(px, py); 2];
        for (k, end) in ends.iter_mut().enumerate() {
            let sign = if k == 0 { 1.0 } else { -1.0 };
            let mut gap = 0;
            let mut step = 1.0;
            loop {
                let fx = px as f64 + sign * dx * step;
                let fy = py as f64 + sign * dy * step;
                let (x, y) = (fx.round(), fy.round());
                if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                    break;
                }
                let (x, y) = (x as usize, y as usize);
                if band(x, y).any(|(bx, by)| mask[by * w + bx]) {
                    gap = 0;
                    *end = (x, y);
                } else {
                    gap += 1;
                    if gap > params.max_gap {
                        break;
                    }
                }
                step += 1.0;
            }
        }

        // collect the support along [end1 .. end0]
        let span = {
            let ddx = ends[0].0 as f64 - ends[1].0 as f64;
            let ddy = ends[0].1 as f64 - ends[1].1 as f64;
            ddx.abs().max(ddy.abs()).round() as usize
        };
        let mut on_line = Vec::new();
        for k in 0..=span {
            let t = if span == 0 { 0.0 } else { k as f64 / span as f64 };
            let x = (ends[1].0 as f64 + t * (ends[0].0 as f64 - ends[1].0 as f64)).round() as usize;
            let y = (ends[1].1 as f64 + t * (ends[0].1 as f64 - ends[1].1 as f64)).round() as usize;
            for (bx, by) in band(x, y) {
                let recent = on_line.iter().rev().take(2 * params.tolerance + 1);
                if mask[by * w + bx] && !recent.clone().any(|&p| p == (bx, by)) {
                    on_line.push((bx, by));
                }
            }
        }
        let support = on_line.len();
        let good = support >= params.min_support;
        for &(x, y) in &on_line {
            mask[y * w + x] = false;
            if good && voted[y * w + x] {
                for (n, &t) in trig.iter().enumerate() {
                    acc[n * n_rho + rho_bin(x, y, t)] -= 1;
                }
            }
        }
        if !good {
            // the seed pixel voted but is not on a kept line; leave its votes
            continue;
        }
        out.push(LineSegment {
            start: ends[1],
            end: ends[0],
            strength: support,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoGrid, Raster};
    use rand::Rng;

    fn blank(w: usize, h: usize) -> Binary {
        Raster::filled(GeoGrid::new(0.0, 0.0, 0.05, h, w).unwrap(), 0u8, None)
    }

    #[test]
    fn empty_map_gives_no_lines() {
        assert!(extract_lines(&blank(32, 32), 5).is_empty());
    }

    #[test]
    fn horizontal_run_is_found() {
        let mut e = blank(80, 40);
        for x in 20..60 {
            e.set(17, x, 1);
        }
        let segs = extract_lines(&e, 20);
        assert!(!segs.is_empty());
        let s = segs.iter().max_by_key(|s| s.strength).unwrap();
        let a = s.angle_deg();
        assert!(a.min(180.0 - a) <= 2.0, "angle {a}");
        assert!(s.strength >= 20);
        assert!(segs.iter().all(|s| s.strength >= 20));
    }

    #[test]
    fn diagonal_run_is_found() {
        let mut e = blank(64, 64);
        for k in 5..55 {
            e.set(k, k, 1);
        }
        let segs = extract_lines(&e, 30);
        assert_eq!(segs.len(), 1);
        assert!((segs[0].angle_deg() - 45.0).abs() <= 2.0);
    }

    #[test]
    fn sparse_noise_has_no_strong_segment() {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut e = blank(128, 128);
            for v in e.values_mut() {
                *v = u8::from(rng.gen::<f64>() < 0.01);
            }
            let segs = extract_lines(&e, 20);
            assert!(segs.iter().all(|s| s.strength < 20), "seed {seed}");
        }
    }

    #[test]
    fn deterministic() {
        let mut e = blank(64, 64);
        for x in 4..60 {
            e.set(10, x, 1);
            e.set(x, 30, 1);
        }
        assert_eq!(extract_lines(&e, 10), extract_lines(&e, 10));
    }
}
