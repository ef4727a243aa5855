use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

use super::grid::GeoPoint;

/// Read a `lat,lon` CSV of decimal-degree points.
pub fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<GeoPoint>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path.display(), 1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "lat" || &headers[1] != "lon" {
        return Err(Error::parse(path.display(), 1, "expected header `lat,lon`"));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(path.display(), line, e.to_string()))?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(path.display(), line, format!("bad coordinate `{s}`")))
        };
        let p = GeoPoint::new(num(&rec[0])?, num(&rec[1])?)
            .map_err(|e| Error::parse(path.display(), line, e.to_string()))?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_points_csv(points: &[GeoPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("lat,lon\n");
    for p in points {
        s.push_str(&format!("{},{}\n", p.lat, p.lon));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
