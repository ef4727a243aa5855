//! ASCII grid (`.asc`) reader and writer.
//!
//! ```text
//! ncols        4
//! nrows        2
//! xllcorner    30.0
//! yllcorner    -10.0
//! cellsize     0.000277777777777778
//! NODATA_value -9999
//! 1 2 3 4
//! 5 6 -9999 8
//! ```
//!
//! Rows are written north first; `cellsize` is in decimal degrees. Values use
//! the shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::grid::{GeoGrid, ARCSEC_PER_DEGREE};
use super::raster::{Cell, Raster, NODATA};

pub fn write_grid_ascii_string<T: Cell>(r: &Raster<T>) -> String {
    let g = r.grid();
    let nodata = r.nodata().map(Cell::to_f64).unwrap_or(NODATA);
    let mut s = String::with_capacity(r.values().len() * 4 + 128);
    let _ = writeln!(s, "ncols {}", g.cols());
    let _ = writeln!(s, "nrows {}", g.rows());
    let _ = writeln!(s, "xllcorner {}", g.origin_lon());
    let _ = writeln!(s, "yllcorner {}", g.south_lat());
    let _ = writeln!(s, "cellsize {}", g.res_deg());
    let _ = writeln!(s, "NODATA_value {}", nodata);
    for row in r.values().chunks(g.cols()) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{}", v.to_f64());
        }
        s.push('\n');
    }
    s
}

pub fn write_grid_ascii<T: Cell>(r: &Raster<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_grid_ascii_string(r)).map_err(|e| Error::io(path, e))
}

pub fn read_grid_ascii(path: impl AsRef<Path>) -> Result<Raster<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_grid_ascii_str(&text, &path.display().to_string())
}

/// Parse ASCII-grid text; `source` names the input in error messages.
pub fn read_grid_ascii_str(text: &str, source: &str) -> Result<Raster<f64>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut centered = false;
    let mut cellsize = None;
    let mut nodata = None;

    for _ in 0..6 {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(source, 0, "truncated header"))?;
        let mut parts = line.split_whitespace();
        let (key, val) = match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) => (k.to_ascii_lowercase(), v),
            _ => return Err(Error::parse(source, ln, format!("malformed header line `{line}`"))),
        };
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::parse(source, ln, format!("bad number `{v}` for {key}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::parse(source, ln, format!("bad integer `{v}` for {key}")))
        };
        match key.as_str() {
            "ncols" => ncols = Some(int(val)?),
            "nrows" => nrows = Some(int(val)?),
            "xllcorner" => xll = Some(num(val)?),
            "yllcorner" => yll = Some(num(val)?),
            "xllcenter" => {
                xll = Some(num(val)?);
                centered = true;
            }
            "yllcenter" => {
                yll = Some(num(val)?);
                centered = true;
            }
            "cellsize" => cellsize = Some(num(val)?),
            "nodata_value" => nodata = Some(num(val)?),
            _ => return Err(Error::parse(source, ln, format!("unknown header key `{key}`"))),
        }
    }

    let missing = |k: &str| Error::parse(source, 6, format!("header is missing {k}"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let mut xll = xll.ok_or_else(|| missing("xllcorner"))?;
    let mut yll = yll.ok_or_else(|| missing("yllcorner"))?;
    let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
    let nodata = nodata.ok_or_else(|| missing("NODATA_value"))?;
    if centered {
        xll -= cellsize / 2.0;
        yll -= cellsize / 2.0;
    }

    let res_arcsec = snap(cellsize * ARCSEC_PER_DEGREE);
    let grid = GeoGrid::new(yll + nrows as f64 * cellsize, xll, res_arcsec, nrows, ncols)
        .map_err(|e| Error::parse(source, 6, e.to_string()))?;

    let mut values = Vec::with_capacity(nrows * ncols);
    let mut data_rows = 0;
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if data_rows == nrows {
            return Err(Error::parse(source, ln, format!("more than nrows={nrows} data rows")));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|_| Error::parse(source, ln, format!("bad value `{tok}`")))?;
            values.push(v);
        }
        let got = values.len() - before;
        if got != ncols {
            return Err(Error::parse(
                source,
                ln,
                format!("row has {got} values, header says ncols={ncols}"),
            ));
        }
        data_rows += 1;
    }
    if data_rows != nrows {
        return Err(Error::parse(
            source,
            text.lines().count(),
            format!("found {data_rows} data rows, header says nrows={nrows}"),
        ));
    }
    Raster::new(grid, values, Some(nodata))
}

/// Undo the rounding of `degrees * 3600` for resolutions that are whole
/// micro-arcseconds.
fn snap(res: f64) -> f64 {
    let rounded = (res * 1e6).round() / 1e6;
    if (rounded - res).abs() <= 1e-9 * res.abs() {
        rounded
    } else {
        res
    }
}
