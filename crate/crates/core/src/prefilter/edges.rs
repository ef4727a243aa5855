use rayon::prelude::*;

use crate::geo::{Binary, Raster};

use super::image::ImageTile;

/// Canny-style edge map: Sobel gradients, non-maximum suppression along the
/// quantised gradient direction, then hysteresis between `low` and `high`
/// (8-connected growth from strong pixels).
///
/// Thresholds apply to the Sobel magnitude; a unit step yields magnitude 4.
pub fn detect_edges(tile: &ImageTile, low: f64, high: f64) -> Binary {
    let (w, h) = (tile.width(), tile.height());
    let low = low.max(0.0);
    let high = high.max(low);
    let thin = thinned_magnitude(tile);

    let mut out = vec![0u8; w * h];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high && m > 0.0 {
            out[i] = 1;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0 && thin[j] >= low && thin[j] > 0.0 {
                    out[j] = 1;
                    stack.push(j);
                }
            }
        }
    }
    Raster::new(*tile.grid(), out, None).expect("edge map shares the tile grid")
}

/// Sobel magnitude with non-maxima zeroed.
pub(crate) fn thinned_magnitude(tile: &ImageTile) -> Vec<f64> {
    let (w, h) = (tile.width(), tile.height());
    let pad = tile.padded(1);
    let pw = w + 2;
    let grad: Vec<(f64, f64)> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let pad = &pad;
            let (up, mid, down) = (&pad[y * pw..], &pad[(y + 1) * pw..], &pad[(y + 2) * pw..]);
            (0..w).map(move |x| {
                let gx = (up[x + 2] + 2.0 * mid[x + 2] + down[x + 2]) - (up[x] + 2.0 * mid[x] + down[x]);
                let gy = (down[x] + 2.0 * down[x + 1] + down[x + 2]) - (up[x] + 2.0 * up[x + 1] + up[x + 2]);
                (gx, gy)
            })
        })
        .collect();
    let mag: Vec<f64> = grad.iter().map(|&(gx, gy)| (gx * gx + gy * gy).sqrt()).collect();

    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    // tan(22.5°) and tan(67.5°)
    const T22: f64 = 0.414_213_562_373_095_1;
    const T67: f64 = 2.414_213_562_373_095;

    (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let (grad, mag, at) = (&grad, &mag, &at);
            (0..w).map(move |x| {
                let i = y * w + x;
                let m = mag[i];
                if m <= 0.0 {
                    return 0.0;
                }
                // direction sector of the gradient, folded so gy >= 0
                let (gx, gy) = if grad[i].1 < 0.0 { (-grad[i].0, -grad[i].1) } else { grad[i] };
                let (dx, dy) = if gy < T22 * gx.abs() {
                    (1, 0)
                } else if gy > T67 * gx.abs() {
                    (0, 1)
                } else if gx > 0.0 {
                    (1, 1)
                } else {
                    (-1, 1)
                };
                let (x, y) = (x as isize, y as isize);
                // ties keep the pixel on the positive side only
                if m > at(x - dx, y - dy) && m >= at(x + dx, y + dy) {
                    m
                } else {
                    0.0
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoGrid;

    fn tile(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> ImageTile {
        let px = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        ImageTile::new(GeoGrid::new(0.0, 0.0, 0.05, h, w).unwrap(), px).unwrap()
    }

    #[test]
    fn constant_image_has_no_edges() {
        let e = detect_edges(&tile(16, 16, |_, _| 0.4), 0.1, 0.5);
        assert_eq!(e.count_where(|v| v != 0), 0);
    }

    #[test]
    fn rectangle_edges_hug_the_boundary() {
        let (x0, x1, y0, y1) = (10usize, 25usize, 8usize, 20usize);
        let inside = |x: usize, y: usize| (x0..=x1).contains(&x) && (y0..=y1).contains(&y);
        let t = tile(40, 32, |x, y| if inside(x, y) { 1.0 } else { 0.0 });
        let e = detect_edges(&t, 1.0, 2.0);
        let mut n = 0;
        for y in 0..32 {
            for x in 0..40 {
                if e.get(y, x) == 0 {
                    continue;
                }
                n += 1;
                let near_v = (x + 1 >= x0 && x <= x0 + 1) || (x + 1 >= x1 && x <= x1 + 1);
                let near_h = (y + 1 >= y0 && y <= y0 + 1) || (y + 1 >= y1 && y <= y1 + 1);
                let in_band = (x + 1 >= x0 && x <= x1 + 1) && (y + 1 >= y0 && y <= y1 + 1);
                assert!(in_band && (near_v || near_h), "stray edge at ({x}, {y})");
            }
        }
        // every side is traced
        assert!(n >= 2 * ((x1 - x0) + (y1 - y0)));
    }

    #[test]
    fn equal_thresholds_reduce_to_plain_thresholding() {
        let t = tile(24, 24, |x, y| ((x * 7 + y * 13) % 10) as f64 / 10.0);
        let e = detect_edges(&t, 1.5, 1.5);
        let thin = thinned_magnitude(&t);
        for (i, &m) in thin.iter().enumerate() {
            assert_eq!(e.values()[i], u8::from(m >= 1.5), "pixel {i}");
        }
        let loose = detect_edges(&t, 0.0, 1.5);
        assert!(e.count_where(|v| v != 0) <= loose.count_where(|v| v != 0));
    }
}
