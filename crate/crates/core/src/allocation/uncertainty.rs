use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::allocate::{allocate_fractional, allocate_uniform};
use super::census::{AdminRaster, CensusTable};
use crate::error::{Error, Result};
use crate::geo::{Binary, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationMethod {
    Uniform,
    Fractional,
}

impl FromStr for AllocationMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "fractional" => Ok(Self::Fractional),
            _ => Err(Error::InvalidArgument(format!(
                "unknown allocation method `{s}` (expected uniform or fractional)"
            ))),
        }
    }
}

impl fmt::Display for AllocationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Fractional => "fractional",
        })
    }
}

/// A census table together with the raster placing its units.
#[derive(Debug, Clone, Copy)]
pub struct CensusLevel<'a> {
    pub census: &'a CensusTable,
    pub admin: &'a AdminRaster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitRatio {
    pub fine_id: u32,
    pub coarse_id: u32,
    pub truth: f64,
    pub estimate: f64,
    /// `estimate / truth`; absent when the truth is zero.
    pub ratio: Option<f64>,
    /// Majority of the unit's cells inside the urban mask, when one was given.
    pub urban: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spread {
    pub log_std: f64,
    pub factor: f64,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub method: AllocationMethod,
    pub units: Vec<UnitRatio>,
    /// Every fine unit counts equally.
    pub unweighted: Option<Spread>,
    /// Units weighted by their true population.
    pub weighted: Option<Spread>,
    pub urban: Option<Spread>,
    pub rural: Option<Spread>,
    /// Fine units with people but a zero estimate (no finite log ratio).
    pub zero_estimate: Vec<u32>,
}

impl UncertaintyReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::from("fine_id,coarse_id,truth,estimate,ratio,urban\n");
        for u in &self.units {
            let ratio = u.ratio.map(|r| r.to_string()).unwrap_or_default();
            let urban = u.urban.map(|b| b.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{ratio},{urban}\n",
                u.fine_id, u.coarse_id, u.truth, u.estimate
            ));
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Population spread of `exp(std(ln ratio))`, optionally weighted.
fn spread(samples: &[(f64, f64)]) -> Option<Spread> {
    let wsum: f64 = samples.iter().map(|s| s.1).sum();
    if samples.is_empty() || wsum <= 0.0 {
        return None;
    }
    let mean = samples.iter().map(|&(x, w)| x * w).sum::<f64>() / wsum;
    let var = samples.iter().map(|&(x, w)| w * (x - mean).powi(2)).sum::<f64>() / wsum;
    let log_std = var.sqrt();
    Some(Spread {
        log_std,
        factor: log_std.exp(),
        units: samples.len(),
    })
}

/// Map each fine unit to its enclosing coarse unit, failing on any cell that
/// breaks the hierarchy.
pub fn derive_nesting(coarse: &AdminRaster, fine: &AdminRaster) -> Result<BTreeMap<u32, u32>> {
    coarse.ensure_same_grid(fine, "fine admin raster")?;
    let mut nesting = BTreeMap::new();
    let mut bad = Vec::new();
    let cols = fine.cols();
    for (i, (&c, &f)) in coarse.values().iter().zip(fine.values()).enumerate() {
        if f == 0 {
            continue;
        }
        let parent = *nesting.entry(f).or_insert(c);
        if c == 0 || parent != c {
            bad.push((i / cols, i % cols));
        }
    }
    if bad.is_empty() {
        return Ok(nesting);
    }
    let shown: Vec<String> = bad.iter().take(20).map(|(r, c)| format!("({r},{c})")).collect();
    let more = if bad.len() > 20 {
        format!(" and {} more", bad.len() - 20)
    } else {
        String::new()
    };
    Err(Error::Validation(format!(
        "fine units do not nest within coarse units at cells {}{more}",
        shown.join(" ")
    )))
}

/// Allocate at the coarse level and compare against known fine-level counts.
pub fn estimate_uncertainty(
    coarse: CensusLevel<'_>,
    fine: CensusLevel<'_>,
    built: &Raster<f64>,
    method: AllocationMethod,
    urban_mask: Option<&Binary>,
) -> Result<UncertaintyReport> {
    let nesting = derive_nesting(coarse.admin, fine.admin)?;
    if let Some(m) = urban_mask {
        fine.admin.ensure_same_grid(m, "urban mask")?;
    }
    let alloc = match method {
        AllocationMethod::Uniform => {
            let b = Raster::mask_from(built, |v| v > 0.0);
            allocate_uniform(coarse.census, coarse.admin, &b)?
        }
        AllocationMethod::Fractional => allocate_fractional(coarse.census, coarse.admin, built)?,
    };

    let mut estimate: BTreeMap<u32, f64> = BTreeMap::new();
    let mut cells: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (i, (&f, &p)) in fine.admin.values().iter().zip(alloc.population.values()).enumerate() {
        if f == 0 {
            continue;
        }
        *estimate.entry(f).or_insert(0.0) += p;
        let e = cells.entry(f).or_insert((0, 0));
        e.0 += 1;
        if urban_mask.is_some_and(|m| m.values()[i] != 0) {
            e.1 += 1;
        }
    }

    let mut units = Vec::new();
    let mut zero_estimate = Vec::new();
    let (mut all, mut weighted, mut urban, mut rural) = (vec![], vec![], vec![], vec![]);
    for (fine_id, truth) in fine.census.iter() {
        let Some(&coarse_id) = nesting.get(&fine_id) else {
            continue;
        };
        let est = estimate.get(&fine_id).copied().unwrap_or(0.0);
        let is_urban = urban_mask.map(|_| {
            let (n, u) = cells[&fine_id];
            2 * u > n
        });
        let ratio = (truth > 0.0).then(|| est / truth);
        if let Some(r) = ratio {
            if r > 0.0 {
                let lr = r.ln();
                all.push((lr, 1.0));
                weighted.push((lr, truth));
                match is_urban {
                    Some(true) => urban.push((lr, 1.0)),
                    Some(false) => rural.push((lr, 1.0)),
                    None => {}
                }
            } else {
                zero_estimate.push(fine_id);
            }
        }
        units.push(UnitRatio {
            fine_id,
            coarse_id,
            truth,
            estimate: est,
            ratio,
            urban: is_urban,
        });
    }
    Ok(UncertaintyReport {
        method,
        units,
        unweighted: spread(&all),
        weighted: spread(&weighted),
        urban: spread(&urban),
        rural: spread(&rural),
        zero_estimate,
    })
}
