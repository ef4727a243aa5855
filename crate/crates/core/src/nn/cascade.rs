use crate::error::{Error, Result};
use crate::geo::Raster;

/// Keep the segmentation footprint fraction only where the patch classifier
/// score reaches `tau`; everywhere else the built fraction is 0. Nodata in
/// either input yields nodata.
pub fn cascade(scores: &Raster<f64>, footprint: &Raster<f64>, tau: f64) -> Result<Raster<f64>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
    }
    scores.ensure_same_grid(footprint, "cascade")?;
    let nodata = footprint.nodata().or(scores.nodata());
    let values = scores
        .values()
        .iter()
        .zip(footprint.values())
        .map(|(&s, &f)| {
            if scores.is_nodata(s) || footprint.is_nodata(f) {
                nodata.unwrap_or(0.0)
            } else if s >= tau {
                f
            } else {
                0.0
            }
        })
        .collect();
    Raster::new(*scores.grid(), values, nodata)
}
