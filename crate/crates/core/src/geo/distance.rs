use rayon::prelude::*;

use crate::error::{Error, Result};

use super::grid::GeoPoint;
use super::raster::{Binary, Cell, Raster};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance by the haversine formula on a sphere of radius
/// [`EARTH_RADIUS_KM`].
pub fn geodesic_distance_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Nearest set cell centre of a binary mask, for arbitrary query points.
///
/// For two fixed latitudes the haversine distance grows with the longitude
/// gap, so each mask row only needs its longitude-nearest cells; rows are
/// visited outward from the query latitude and the scan stops once the
/// latitude gap alone exceeds the best distance found.
pub(crate) struct MaskIndex {
    lats: Vec<f64>,
    lons: Vec<f64>,
    mask_cols: Vec<Vec<usize>>,
}

impl MaskIndex {
    /// `None` when the mask has no set cell.
    pub(crate) fn new(mask: &Binary) -> Option<Self> {
        let grid = *mask.grid();
        let (rows, cols) = (grid.rows(), grid.cols());
        let mask_cols: Vec<Vec<usize>> = (0..rows)
            .map(|r| (0..cols).filter(|&c| mask.is_set(r, c)).collect())
            .collect();
        if mask_cols.iter().all(Vec::is_empty) {
            return None;
        }
        Some(MaskIndex {
            lats: (0..rows).map(|r| grid.row_center_lat(r)).collect(),
            lons: (0..cols).map(|c| grid.col_center_lon(c)).collect(),
            mask_cols,
        })
    }

    pub(crate) fn contains(&self, row: usize, col: usize) -> bool {
        self.mask_cols[row].binary_search(&col).is_ok()
    }

    fn nearest_in_row(&self, q: GeoPoint, mr: usize) -> Option<f64> {
        let cand = &self.mask_cols[mr];
        if cand.is_empty() {
            return None;
        }
        let pos = cand.partition_point(|&c| self.lons[c] < q.lon);
        let picks = [
            pos.checked_sub(1),
            (pos < cand.len()).then_some(pos),
            Some(0),
            Some(cand.len() - 1),
        ];
        picks
            .into_iter()
            .flatten()
            .map(|i| {
                geodesic_distance_km(
                    q,
                    GeoPoint {
                        lat: self.lats[mr],
                        lon: self.lons[cand[i]],
                    },
                )
            })
            .reduce(f64::min)
    }

    /// Distance in km from `q` to the closest set cell centre.
    pub(crate) fn nearest_km(&self, q: GeoPoint) -> f64 {
        let rows = self.lats.len();
        // Rows run north to south, so latitudes are decreasing.
        let below = self.lats.partition_point(|&lat| lat > q.lat);
        let start = match below {
            0 => 0,
            b if b == rows => rows - 1,
            b if (self.lats[b - 1] - q.lat).abs() <= (q.lat - self.lats[b]).abs() => b - 1,
            b => b,
        };
        let lat_gap = |mr: usize| EARTH_RADIUS_KM * (self.lats[mr] - q.lat).abs().to_radians();
        let mut best = f64::INFINITY;
        for step in 0..rows {
            let up = start.checked_sub(step);
            let down = (step > 0 && start + step < rows).then_some(start + step);
            if up.is_none() && down.is_none() {
                break;
            }
            let mut live = false;
            for mr in [up, down].into_iter().flatten() {
                if lat_gap(mr) > best {
                    continue;
                }
                live = true;
                if let Some(d) = self.nearest_in_row(q, mr) {
                    best = best.min(d);
                }
            }
            if !live {
                break;
            }
        }
        best
    }
}

/// Distance from every cell centre of `target`'s grid to the nearest set cell
/// centre of `mask`. Cells inside the mask get exactly 0.
pub fn distance_to_mask_km<T: Cell>(target: &Raster<T>, mask: &Binary) -> Result<Raster<f64>> {
    target.ensure_same_grid(mask, "distance_to_mask_km")?;
    let grid = *mask.grid();
    let index = MaskIndex::new(mask).ok_or(Error::NoUrbanCluster)?;
    let out: Vec<f64> = (0..grid.rows())
        .into_par_iter()
        .flat_map_iter(|r| {
            let index = &index;
            (0..grid.cols()).map(move |c| {
                if index.contains(r, c) {
                    0.0
                } else {
                    index.nearest_km(grid.cell_center(r, c))
                }
            })
        })
        .collect();
    Raster::new(grid, out, None)
}
