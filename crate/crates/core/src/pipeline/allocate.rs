use std::collections::BTreeMap;

use serde::Serialize;

use crate::allocation::{
    admin_from_f64, allocate_fractional, allocate_uniform, check_conservation, estimate_uncertainty,
    read_census_csv, write_unallocated_csv, Allocation, AllocationMethod, CensusLevel, Spread,
};
use crate::error::{Error, Result};
use crate::geo::{read_grid_ascii, Raster};

use super::config::PipelineConfig;
use super::meta::{require_files, StageOutput};

/// Largest tolerated relative conservation error.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub census_total: f64,
    pub allocated_total: f64,
    pub unallocated_units: usize,
    pub unallocated_population: f64,
    /// Largest per-unit relative error over units that received people.
    pub conservation_error: f64,
    pub error_factor: Option<f64>,
    pub error_factor_weighted: Option<f64>,
    pub uncertainty_units: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationSummary {
    pub methods: BTreeMap<String, MethodSummary>,
    pub conserved: bool,
    pub notes: Vec<String>,
}

fn factor(s: &Option<Spread>) -> Option<f64> {
    s.as_ref().map(|s| s.factor)
}

/// Spread census counts over settled cells with both methods, check
/// conservation, and when fine-level census data is configured measure the
/// error factor of allocating at the coarse level.
pub fn run_allocate(cfg: &PipelineConfig) -> Result<(StageOutput, AllocationSummary)> {
    let mut out = StageOutput::new("allocate");
    let detect = cfg.stage_dir("detect");
    let (built_path, frac_path) = (detect.join("built.asc"), detect.join("fraction.asc"));
    let census_path = cfg.resolve(&cfg.census_csv);
    let admin_path = cfg.resolve(&cfg.admin_file);
    require_files([
        built_path.as_path(),
        frac_path.as_path(),
        census_path.as_path(),
        admin_path.as_path(),
    ])?;
    let built = read_grid_ascii(&built_path)?;
    let fraction = read_grid_ascii(&frac_path)?;
    let census = read_census_csv(&census_path)?;
    let admin = admin_from_f64(&read_grid_ascii(&admin_path)?)?;
    let settled = Raster::mask_from(&built, |v| v > 0.0);

    let fine = match (&cfg.fine_census_csv, &cfg.fine_admin_file) {
        (Some(c), Some(a)) => {
            let (c, a) = (cfg.resolve(c), cfg.resolve(a));
            if c.exists() && a.exists() {
                Some((read_census_csv(&c)?, admin_from_f64(&read_grid_ascii(&a)?)?))
            } else {
                out.note("fine census inputs not found; error factor skipped");
                None
            }
        }
        _ => None,
    };

    let dir = cfg.stage_dir("allocate");
    let mut methods = BTreeMap::new();
    let mut conserved = true;
    for method in [AllocationMethod::Uniform, AllocationMethod::Fractional] {
        let (alloc, weights): (Allocation, &Raster<f64>) = match method {
            AllocationMethod::Uniform => (allocate_uniform(&census, &admin, &settled)?, &built),
            AllocationMethod::Fractional => {
                (allocate_fractional(&census, &admin, &fraction)?, &fraction)
            }
        };
        let err = check_conservation(&alloc, &census, &admin);
        conserved &= err <= CONSERVATION_TOLERANCE;
        let unallocated_population: f64 = alloc.unallocated.iter().fold(0.0, |a, u| a + u.population);
        out.write_raster(&alloc.population, dir.join(format!("population_{method}.asc")), cfg)?;
        let un = dir.join(format!("unallocated_{method}.csv"));
        write_unallocated_csv(&alloc.unallocated, &un)?;
        out.files.push(un);
        if !alloc.unallocated.is_empty() {
            out.note(format!(
                "{method}: {} units ({unallocated_population} people) have no settled cell",
                alloc.unallocated.len()
            ));
        }

        let mut summary = MethodSummary {
            census_total: census.total(),
            allocated_total: alloc.population.sum(),
            unallocated_units: alloc.unallocated.len(),
            unallocated_population,
            conservation_error: err,
            error_factor: None,
            error_factor_weighted: None,
            uncertainty_units: None,
        };
        if let Some((fc, fa)) = &fine {
            let report = estimate_uncertainty(
                CensusLevel { census: &census, admin: &admin },
                CensusLevel { census: fc, admin: fa },
                weights,
                method,
                None,
            )?;
            summary.error_factor = factor(&report.unweighted);
            summary.error_factor_weighted = factor(&report.weighted);
            summary.uncertainty_units = Some(report.units.len());
            let p = dir.join(format!("uncertainty_{method}.csv"));
            report.write_csv(&p)?;
            out.files.push(p);
        }
        methods.insert(method.to_string(), summary);
    }

    let summary = AllocationSummary {
        methods,
        conserved,
        notes: out.notes.clone(),
    };
    out.write_text(
        dir.join("allocation.json"),
        serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n",
    )?;
    if !conserved {
        return Err(Error::Validation(format!(
            "allocation does not conserve census totals (see {})",
            dir.join("allocation.json").display()
        )));
    }
    Ok((out, summary))
}
