use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::Raster;

/// Unit id per cell; 0 marks cells outside census coverage.
pub type AdminRaster = Raster<u32>;

/// Population per census unit, keyed (and iterated) by unit id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CensusTable {
    records: BTreeMap<u32, f64>,
}

impl CensusTable {
    pub fn new(records: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, pop) in records {
            if id == 0 {
                return Err(Error::Validation("unit id 0 is reserved for no coverage".into()));
            }
            if !(pop.is_finite() && pop >= 0.0) {
                return Err(Error::Validation(format!("unit {id} has population {pop}")));
            }
            if map.insert(id, pop).is_some() {
                return Err(Error::Validation(format!("duplicate unit id {id}")));
            }
        }
        Ok(CensusTable { records: map })
    }

    pub fn get(&self, id: u32) -> Option<f64> {
        self.records.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.records.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.records.values().sum()
    }

    /// Multiply every population by `k`.
    pub fn scaled(&self, k: f64) -> Result<CensusTable> {
        CensusTable::new(self.iter().map(|(id, p)| (id, p * k)))
    }
}

/// Admin ids from a real-valued raster (as read from an ASCII grid).
pub fn admin_from_f64(r: &Raster<f64>) -> Result<AdminRaster> {
    let mut values = Vec::with_capacity(r.values().len());
    for (i, &v) in r.values().iter().enumerate() {
        if r.is_nodata(v) || v == 0.0 {
            values.push(0);
        } else if v > 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            values.push(v as u32);
        } else {
            return Err(Error::Validation(format!(
                "admin cell {} holds non-integer id {v}",
                i
            )));
        }
    }
    Raster::new(*r.grid(), values, Some(0))
}

/// Every unit id used by the admin raster must exist in the census.
pub fn validate_admin(admin: &AdminRaster, census: &CensusTable) -> Result<()> {
    let missing: BTreeSet<u32> = admin
        .values()
        .iter()
        .copied()
        .filter(|&id| id != 0 && census.get(id).is_none())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        let ids: Vec<String> = missing.iter().map(u32::to_string).collect();
        Err(Error::Validation(format!(
            "admin raster references units missing from census: {}",
            ids.join(", ")
        )))
    }
}

pub fn read_census_csv(path: impl AsRef<Path>) -> Result<CensusTable> {
    let path = path.as_ref();
    let src = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::parse(&src, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["unit_id", "population"] {
        return Err(Error::parse(&src, 1, "expected header `unit_id,population`"));
    }
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(&src, line, e.to_string()))?;
        let id = rec[0]
            .parse::<u32>()
            .map_err(|_| Error::parse(&src, line, format!("bad unit id `{}`", &rec[0])))?;
        let pop = rec[1]
            .parse::<f64>()
            .map_err(|_| Error::parse(&src, line, format!("bad population `{}`", &rec[1])))?;
        records.push((id, pop));
    }
    CensusTable::new(records).map_err(|e| Error::parse(&src, 0, e.to_string()))
}

pub fn write_census_csv(census: &CensusTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("unit_id,population\n");
    for (id, pop) in census.iter() {
        s.push_str(&format!("{id},{pop}\n"));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// `fine_id,coarse_id` pairs.
pub fn read_nesting_csv(path: impl AsRef<Path>) -> Result<BTreeMap<u32, u32>> {
    let path = path.as_ref();
    let src = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::parse(&src, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["fine_id", "coarse_id"] {
        return Err(Error::parse(&src, 1, "expected header `fine_id,coarse_id`"));
    }
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(&src, line, e.to_string()))?;
        let parse = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| Error::parse(&src, line, format!("bad unit id `{s}`")))
        };
        if out.insert(parse(&rec[0])?, parse(&rec[1])?).is_some() {
            return Err(Error::parse(&src, line, format!("fine unit {} listed twice", &rec[0])));
        }
    }
    Ok(out)
}

pub fn write_nesting_csv(nesting: &BTreeMap<u32, u32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("fine_id,coarse_id\n");
    for (f, c) in nesting {
        s.push_str(&format!("{f},{c}\n"));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoGrid;

    #[test]
    fn rejects_bad_records() {
        assert!(CensusTable::new([(1, 10.0), (1, 5.0)]).is_err());
        assert!(CensusTable::new([(1, -1.0)]).is_err());
        assert!(CensusTable::new([(0, 1.0)]).is_err());
        assert!(CensusTable::new([(1, f64::NAN)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let c = CensusTable::new([(3, 12.5), (1, 100.0)]).unwrap();
        write_census_csv(&c, &p).unwrap();
        assert_eq!(read_census_csv(&p).unwrap(), c);
        fs::write(&p, "id,pop\n1,2\n").unwrap();
        assert!(read_census_csv(&p).is_err());
    }

    #[test]
    fn missing_units_are_listed() {
        let g = GeoGrid::new(0.0, 0.0, 1.0, 1, 4).unwrap();
        let admin = Raster::new(g, vec![1, 7, 0, 9], Some(0)).unwrap();
        let c = CensusTable::new([(1, 1.0)]).unwrap();
        let err = validate_admin(&admin, &c).unwrap_err().to_string();
        assert!(err.contains("7, 9"), "{err}");
    }

    #[test]
    fn admin_conversion() {
        let g = GeoGrid::new(0.0, 0.0, 1.0, 1, 3).unwrap();
        let r = Raster::new(g, vec![2.0, -9999.0, 5.0], Some(-9999.0)).unwrap();
        assert_eq!(admin_from_f64(&r).unwrap().values(), &[2, 0, 5]);
        let bad = Raster::new(g, vec![2.5, 1.0, 1.0], None).unwrap();
        assert!(admin_from_f64(&bad).is_err());
    }
}
