//! File-based pipeline stages.
//!
//! Each stage reads its inputs from disk, writes its outputs under
//! `<output_dir>/<stage>/` (or to the configured input paths for `synth`
//! and `train`), and returns the list of files it wrote. Every raster gets a
//! `.meta` sidecar naming the stage and the config hash.

mod allocate;
mod clusters;
mod config;
mod detect;
mod meta;
pub mod render;
mod synthesize;
mod training;
mod validate;

pub use allocate::{run_allocate, AllocationSummary, MethodSummary, CONSERVATION_TOLERANCE};
pub use clusters::{cluster_params, run_clusters};
pub use config::PipelineConfig;
pub use detect::{
    detect_mosaic, detect_tile, read_tile_index, run_detect, Coverage, DetectParams, Detection,
    TileDetection, TileEntry, TileFailure,
};
pub use meta::{read_sidecar, sidecar_path, write_sidecar, StageOutput};
pub use render::{render, render_to_file, Style};
pub use synthesize::{corpus_seeds, run_synth};
pub use training::{run_train, train_config};
pub use validate::run_validate;

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::geo::read_grid_ascii;

/// Run `f` on a dedicated pool of `threads` workers (0 = one per core).
pub fn with_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// Render `render_input` (or `input` when given) in the configured style.
pub fn run_render(cfg: &PipelineConfig) -> Result<StageOutput> {
    let mut out = StageOutput::new("render");
    let input = cfg
        .render_input
        .as_ref()
        .map(|p| cfg.resolve(p))
        .ok_or_else(|| Error::Config("render needs `render_input`".into()))?;
    meta::require_files([input.as_path()])?;
    let r = read_grid_ascii(&input)?;
    let target = match &cfg.render_output {
        Some(p) => cfg.resolve(p),
        None => {
            let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned());
            cfg.stage_dir("render")
                .join(PathBuf::from(format!("{}.ppm", stem.unwrap_or_else(|| "raster".into()))))
        }
    };
    let legend = render_to_file(&r, cfg.render_style, cfg.render_scale, &target)?;
    out.files.extend([target, legend]);
    Ok(out)
}
