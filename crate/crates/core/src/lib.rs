//! Settlement detection and population mapping on arcsecond rasters.
//!
//! The crate is organised the way data flows through the pipeline:
//!
//! * [`geo`] holds the georeferenced grid model, raster algebra, connected
//!   components, haversine distances and ASCII-grid I/O.
//! * [`prefilter`] turns imagery into candidate patches around straight edges.
//! * [`nn`] is a small double-precision conv engine with the encoder-decoder
//!   patch classifier, the feedback-gated weak segmenter and their cascade.
//! * [`allocation`] spreads census counts over settled cells and measures the
//!   error introduced by coarse census units.
//! * [`urban`] finds urban clusters and the population distance distribution.
//! * [`validation`] scores predictions against references.
//! * [`synth`] generates seeded synthetic worlds with known truth.
//! * [`pipeline`] wires everything into file-based stages used by the CLI.

pub mod allocation;
pub mod error;
pub mod geo;
pub mod kv;
pub mod nn;
pub mod pipeline;
pub mod prefilter;
pub mod synth;
pub mod urban;
pub mod validation;

pub use error::{Error, Result};
pub use geo::{Binary, Connectivity, GeoGrid, GeoPoint, Raster};
