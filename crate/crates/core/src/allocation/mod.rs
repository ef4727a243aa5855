//! Proportional (dasymetric) allocation of census counts to settled cells,
//! and the coarse-versus-fine census error experiment.

mod allocate;
mod census;
mod uncertainty;

pub use allocate::{
    allocate_fractional, allocate_uniform, check_conservation, write_unallocated_csv, Allocation,
    Unallocated,
};
pub use census::{
    admin_from_f64, read_census_csv, read_nesting_csv, validate_admin, write_census_csv,
    write_nesting_csv, AdminRaster, CensusTable,
};
pub use uncertainty::{
    derive_nesting, estimate_uncertainty, AllocationMethod, CensusLevel, Spread, UncertaintyReport,
    UnitRatio,
};
