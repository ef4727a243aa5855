use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::WorldSpec;
use super::world::Building;
use crate::error::{Error, Result};
use crate::geo::GeoGrid;
use crate::prefilter::ImageTile;

const BASE: f64 = 0.35;
const ROAD: f64 = 0.58;
const SHADOW: f64 = 0.45;

/// Smooth random field in [-1, 1]: bilinear interpolation of a random
/// lattice with smoothstep easing.
fn value_noise(w: usize, h: usize, spacing: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (lw, lh) = (w / spacing + 2, h / spacing + 2);
    let lattice: Vec<f64> = (0..lw * lh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ease = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (gy, ty) = (y / spacing, ease((y % spacing) as f64 / spacing as f64));
        for x in 0..w {
            let (gx, tx) = (x / spacing, ease((x % spacing) as f64 / spacing as f64));
            let at = |i: usize, j: usize| lattice[j * lw + i];
            let top = at(gx, gy) * (1.0 - tx) + at(gx + 1, gy) * tx;
            let bottom = at(gx, gy + 1) * (1.0 - tx) + at(gx + 1, gy + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn edge_point(side: usize, w: f64, h: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match side {
        0 => (rng.gen_range(0.0..w), 0.0),
        1 => (w - 1.0, rng.gen_range(0.0..h)),
        2 => (rng.gen_range(0.0..w), h - 1.0),
        _ => (0.0, rng.gen_range(0.0..h)),
    }
}

/// Render one tile. Returns the image and the (local) cells touched by roads
/// or trees.
pub(super) fn render_tile(
    spec: &WorldSpec,
    grid: GeoGrid,
    buildings: &[Building],
    rng: &mut ChaCha8Rng,
) -> Result<(ImageTile, BTreeSet<(usize, usize)>)> {
    let (w, h) = (grid.cols(), grid.rows());
    let ppc = spec.pixels_per_cell;
    let coarse = value_noise(w, h, 32, rng);
    let fine = value_noise(w, h, 8, rng);
    let mut px: Vec<f64> = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| BASE + spec.texture * (a + 0.3 * b))
        .collect();
    let mut clutter = BTreeSet::new();

    for _ in 0..spec.roads_per_tile {
        let s0 = rng.gen_range(0..4);
        let s1 = (s0 + rng.gen_range(1..4)) % 4;
        let (ax, ay) = edge_point(s0, w as f64, h as f64, rng);
        let (bx, by) = edge_point(s1, w as f64, h as f64, rng);
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        if len2 < 1.0 {
            continue;
        }
        for y in 0..h {
            for x in 0..w {
                let (qx, qy) = (x as f64 - ax, y as f64 - ay);
                let t = ((qx * dx + qy * dy) / len2).clamp(0.0, 1.0);
                let (ex, ey) = (qx - t * dx, qy - t * dy);
                if ex * ex + ey * ey <= 1.5 * 1.5 {
                    px[y * w + x] = ROAD;
                    clutter.insert((y / ppc, x / ppc));
                }
            }
        }
    }

    for _ in 0..spec.trees_per_tile {
        let (cx, cy) = (rng.gen_range(0..w) as isize, rng.gen_range(0..h) as isize);
        let r: isize = rng.gen_range(2..=4);
        for y in (cy - r).max(0)..=(cy + r).min(h as isize - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w as isize - 1) {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                    let i = y as usize * w + x as usize;
                    px[i] *= 0.6;
                    clutter.insert((y as usize / ppc, x as usize / ppc));
                }
            }
        }
    }

    let s = spec.shadow_px();
    for b in buildings {
        let (x0, y0) = (b.col * ppc + b.x, b.row * ppc + b.y);
        for y in y0 + s..y0 + b.h + s {
            for x in x0 + s..x0 + b.w + s {
                if x >= x0 + b.w || y >= y0 + b.h {
                    px[y * w + x] *= SHADOW;
                }
            }
        }
        for y in y0..y0 + b.h {
            px[y * w + x0..y * w + x0 + b.w].fill(b.brightness);
        }
    }

    if spec.noise > 0.0 {
        let n = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in &mut px {
            *v += n.sample(rng);
        }
    }
    for v in &mut px {
        *v = v.clamp(0.0, 1.0);
    }
    Ok((ImageTile::new(grid, px)?, clutter))
}
