//! Synthetic worlds: imagery with known building footprints, a two-level
//! census hierarchy and survey households.

mod imagery;
mod spec;
mod world;

pub use spec::WorldSpec;
pub use world::{generate, Building, World};
