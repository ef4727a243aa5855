//! Georeferenced grids, rasters and the spatial primitives built on them.

mod ascii;
mod components;
mod distance;
mod grid;
mod points;
mod raster;

pub use ascii::{read_grid_ascii, read_grid_ascii_str, write_grid_ascii, write_grid_ascii_string};
pub use components::{connected_components, Components, Connectivity};
pub use distance::{distance_to_mask_km, geodesic_distance_km, EARTH_RADIUS_KM};
pub(crate) use distance::MaskIndex;
pub use grid::{cell_area_km2, GeoGrid, GeoPoint, ARCSEC_PER_DEGREE};
pub use points::{read_points_csv, write_points_csv};
pub use raster::{aggregate, AggregateMode, Binary, Cell, Raster, NODATA};
