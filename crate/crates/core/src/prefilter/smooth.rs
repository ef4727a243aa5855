use rayon::prelude::*;

use super::image::ImageTile;

/// Median filter over a `(2r+1)^2` window with replicated borders.
/// `radius == 0` returns the tile unchanged.
pub fn smooth(tile: &ImageTile, radius: usize) -> ImageTile {
    if radius == 0 {
        return tile.clone();
    }
    let (w, h) = (tile.width(), tile.height());
    let pad = tile.padded(radius);
    let pw = w + 2 * radius;
    let side = 2 * radius + 1;
    let pixels: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let pad = &pad;
            let mut window = vec![0.0; side * side];
            (0..w).map(move |x| {
                if side == 3 {
                    let (a, b, c) = (&pad[y * pw + x..], &pad[(y + 1) * pw + x..], &pad[(y + 2) * pw + x..]);
                    return median9([a[0], a[1], a[2], b[0], b[1], b[2], c[0], c[1], c[2]]);
                }
                for dy in 0..side {
                    let row = &pad[(y + dy) * pw + x..][..side];
                    window[dy * side..(dy + 1) * side].copy_from_slice(row);
                }
                let mid = window.len() / 2;
                *window.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
            })
        })
        .collect();
    ImageTile::new(*tile.grid(), pixels).expect("median stays within input range")
}

/// Median of nine values with a fixed exchange network.
fn median9(mut p: [f64; 9]) -> f64 {
    for (a, b) in [
        (1, 2), (4, 5), (7, 8), (0, 1), (3, 4), (6, 7), (1, 2), (4, 5), (7, 8), (0, 3),
        (5, 8), (4, 7), (3, 6), (1, 4), (2, 5), (4, 7), (4, 2), (6, 4), (4, 2),
    ] {
        let (lo, hi) = (p[a].min(p[b]), p[a].max(p[b]));
        p[a] = lo;
        p[b] = hi;
    }
    p[4]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoGrid;

    fn tile(w: usize, h: usize, px: Vec<f64>) -> ImageTile {
        ImageTile::new(GeoGrid::new(0.0, 0.0, 0.05, h, w).unwrap(), px).unwrap()
    }

    #[test]
    fn radius_zero_is_identity() {
        let t = tile(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(smooth(&t, 0), t);
    }

    #[test]
    fn network_median_matches_sort() {
        let mut state = 17u64;
        for _ in 0..2000 {
            let v: Vec<f64> = (0..9)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 33) % 7) as f64
                })
                .collect();
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            assert_eq!(median9(v.try_into().unwrap()), sorted[4]);
        }
    }

    #[test]
    fn removes_single_pixel_impulse() {
        let mut px = vec![0.2; 25];
        px[12] = 1.0;
        let s = smooth(&tile(5, 5, px), 1);
        assert!(s.pixels().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn keeps_large_step() {
        let px: Vec<f64> = (0..64).map(|i| if i % 8 < 4 { 0.0 } else { 1.0 }).collect();
        let t = tile(8, 8, px);
        assert_eq!(smooth(&t, 1), t);
    }
}
