//! Candidate-patch prefilter: smoothing, edge detection, straight-line
//! extraction and the grid-aligned windows around detected lines.

mod edges;
mod hough;
mod image;
mod patches;
mod smooth;

pub use edges::detect_edges;
pub use hough::{extract_lines, extract_lines_with, HoughParams, LineSegment};
pub use image::{read_pgm, read_tile, write_pgm, ImageTile};
pub use patches::{
    all_windows, candidate_patches, candidate_patches_sized, read_corpus, write_corpus, Label,
    Patch, PatchSet, CLASSIFY_PATCH, SEGMENT_PATCH,
};
pub use smooth::smooth;
