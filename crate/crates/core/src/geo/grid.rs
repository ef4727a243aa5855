use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::distance::EARTH_RADIUS_KM;

pub const ARCSEC_PER_DEGREE: f64 = 3600.0;

/// Corner-registered lattice of `rows x cols` cells, north row first.
///
/// `origin_lat` is the northern edge and `origin_lon` the western edge of
/// cell (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoGrid {
    origin_lat: f64,
    origin_lon: f64,
    res_arcsec: f64,
    rows: usize,
    cols: usize,
}

impl GeoGrid {
    pub fn new(
        origin_lat: f64,
        origin_lon: f64,
        res_arcsec: f64,
        rows: usize,
        cols: usize,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid must have at least one cell, got {rows}x{cols}"
            )));
        }
        if !(res_arcsec.is_finite() && res_arcsec > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "resolution must be positive, got {res_arcsec} arcsec"
            )));
        }
        if !origin_lat.is_finite() || !origin_lon.is_finite() {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        let grid = GeoGrid {
            origin_lat,
            origin_lon,
            res_arcsec,
            rows,
            cols,
        };
        let north = grid.cell_center(0, 0).lat;
        let south = grid.cell_center(rows - 1, 0).lat;
        let west = grid.cell_center(0, 0).lon;
        let east = grid.cell_center(0, cols - 1).lon;
        if north > 90.0 || south < -90.0 || west < -180.0 || east >= 180.0 {
            return Err(Error::InvalidArgument(format!(
                "cell centers leave the globe: lat [{south}, {north}], lon [{west}, {east}]"
            )));
        }
        Ok(grid)
    }

    pub fn origin_lat(&self) -> f64 {
        self.origin_lat
    }

    pub fn origin_lon(&self) -> f64 {
        self.origin_lon
    }

    pub fn res_arcsec(&self) -> f64 {
        self.res_arcsec
    }

    pub fn res_deg(&self) -> f64 {
        self.res_arcsec / ARCSEC_PER_DEGREE
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn south_lat(&self) -> f64 {
        self.origin_lat - self.rows as f64 * self.res_deg()
    }

    pub fn row_center_lat(&self, row: usize) -> f64 {
        self.origin_lat - (row as f64 + 0.5) * self.res_deg()
    }

    pub fn col_center_lon(&self, col: usize) -> f64 {
        self.origin_lon + (col as f64 + 0.5) * self.res_deg()
    }

    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint {
            lat: self.row_center_lat(row),
            lon: self.col_center_lon(col),
        }
    }

    /// Top-left corner of a cell.
    pub fn cell_corner(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint {
            lat: self.origin_lat - row as f64 * self.res_deg(),
            lon: self.origin_lon + col as f64 * self.res_deg(),
        }
    }

    /// Cell containing a point, if the point falls inside the grid.
    pub fn locate(&self, p: GeoPoint) -> Option<(usize, usize)> {
        let r = (self.origin_lat - p.lat) / self.res_deg();
        let c = (p.lon - self.origin_lon) / self.res_deg();
        if r < 0.0 || c < 0.0 {
            return None;
        }
        let (r, c) = (r.floor() as usize, c.floor() as usize);
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Grid with the same origin and `factor` times coarser cells, rounded up
    /// so that ragged edges are covered.
    pub fn coarsen(&self, factor: usize) -> Result<GeoGrid> {
        if factor == 0 {
            return Err(Error::InvalidArgument("aggregation factor must be >= 1".into()));
        }
        GeoGrid::new(
            self.origin_lat,
            self.origin_lon,
            self.res_arcsec * factor as f64,
            self.rows.div_ceil(factor),
            self.cols.div_ceil(factor),
        )
    }

    /// Grid with the same origin and `factor` times finer cells.
    pub fn refine(&self, factor: usize) -> Result<GeoGrid> {
        if factor == 0 {
            return Err(Error::InvalidArgument("refinement factor must be >= 1".into()));
        }
        GeoGrid::new(
            self.origin_lat,
            self.origin_lon,
            self.res_arcsec / factor as f64,
            self.rows * factor,
            self.cols * factor,
        )
    }

    /// Equality up to the rounding introduced by text serialisation.
    pub fn same_as(&self, other: &GeoGrid) -> bool {
        let tol = 1e-9 * self.res_deg().max(1e-12);
        self.rows == other.rows
            && self.cols == other.cols
            && (self.origin_lat - other.origin_lat).abs() <= tol.max(1e-12)
            && (self.origin_lon - other.origin_lon).abs() <= tol.max(1e-12)
            && (self.res_arcsec - other.res_arcsec).abs() <= 1e-9 * self.res_arcsec
    }

    pub fn ensure_same(&self, other: &GeoGrid, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} @ {}\" from ({}, {}) vs {}x{} @ {}\" from ({}, {})",
                self.rows,
                self.cols,
                self.res_arcsec,
                self.origin_lat,
                self.origin_lon,
                other.rows,
                other.cols,
                other.res_arcsec,
                other.origin_lat,
                other.origin_lon
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidArgument(format!(
                "point ({lat}, {lon}) outside coordinate range"
            )));
        }
        Ok(GeoPoint { lat, lon })
    }
}

/// Area of one cell in `row` on a sphere of radius [`EARTH_RADIUS_KM`],
/// evaluated at the cell-centre latitude.
pub fn cell_area_km2(grid: &GeoGrid, row: usize) -> Result<f64> {
    if row >= grid.rows {
        return Err(Error::IndexOutOfBounds {
            index: row,
            len: grid.rows,
        });
    }
    let side = EARTH_RADIUS_KM * grid.res_deg().to_radians();
    let lat = grid.row_center_lat(row).to_radians();
    Ok(side * side * lat.cos())
}
