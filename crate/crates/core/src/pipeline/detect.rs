use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geo::{GeoGrid, Raster, NODATA};
use crate::nn::{cascade, read_models, FeedbackModel, Model, SegNet, Tensor};
use crate::prefilter::{
    candidate_patches, detect_edges, extract_lines, read_pgm, read_tile, smooth, ImageTile,
    CLASSIFY_PATCH, SEGMENT_PATCH,
};

use super::config::PipelineConfig;
use super::meta::{require_files, StageOutput};
use super::with_pool;

/// One row of `tiles.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TileEntry {
    pub path: PathBuf,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub res_arcsec: f64,
}

/// Read `tiles.csv` (`path,origin_lat,origin_lon,res_arcsec`); tile paths
/// are relative to the index file.
pub fn read_tile_index(dir: &Path) -> Result<Vec<TileEntry>> {
    let path = dir.join("tiles.csv");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let src = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::parse(&src, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["path", "origin_lat", "origin_lon", "res_arcsec"] {
        return Err(Error::parse(&src, 1, "expected header `path,origin_lat,origin_lon,res_arcsec`"));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(&src, line, e.to_string()))?;
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(&src, line, format!("bad number `{}`", &rec[k])))
        };
        let res_arcsec = num(3)?;
        if res_arcsec <= 0.0 {
            return Err(Error::parse(&src, line, "res_arcsec must be positive"));
        }
        out.push(TileEntry {
            path: dir.join(&rec[0]),
            origin_lat: num(1)?,
            origin_lon: num(2)?,
            res_arcsec,
        });
    }
    if out.is_empty() {
        return Err(Error::parse(&src, 1, "tile index lists no tiles"));
    }
    Ok(out)
}

fn load_tile(e: &TileEntry) -> Result<ImageTile> {
    let is_asc = e.path.extension().is_some_and(|x| x.eq_ignore_ascii_case("asc"));
    if is_asc {
        return read_tile(&e.path, None);
    }
    let (w, h, pixels) = read_pgm(&e.path)?;
    ImageTile::new(GeoGrid::new(e.origin_lat, e.origin_lon, e.res_arcsec, h, w)?, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub smooth_radius: usize,
    pub edge_low: f64,
    pub edge_high: f64,
    pub hough_support: usize,
    pub tau: f64,
    pub feedback_passes: usize,
    pub footprint_threshold: f64,
}

impl DetectParams {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        DetectParams {
            smooth_radius: cfg.smooth_radius,
            edge_low: cfg.edge_low,
            edge_high: cfg.edge_high,
            hough_support: cfg.hough_support,
            tau: cfg.tau,
            feedback_passes: cfg.feedback_passes,
            footprint_threshold: cfg.footprint_threshold,
        }
    }
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams::from_config(&PipelineConfig::default())
    }
}

/// Per-cell detection results for one tile; cells are `CLASSIFY_PATCH`
/// pixels square, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TileDetection {
    pub rows: usize,
    pub cols: usize,
    /// Classifier score of candidate cells, 0 elsewhere.
    pub scores: Vec<f64>,
    /// Cells holding a segment midpoint.
    pub candidate: Vec<bool>,
    /// Share of the cell's pixels in the feedback footprint, computed for
    /// positive candidates only, before the cascade.
    pub footprint: Vec<f64>,
    pub candidates: usize,
    pub segments: usize,
}

/// Run prefilter, classifier and feedback segmenter over one tile.
pub fn detect_tile(
    tile: &ImageTile,
    segnet: &SegNet,
    feedback: &FeedbackModel,
    p: &DetectParams,
) -> Result<TileDetection> {
    let cp = CLASSIFY_PATCH;
    let (rows, cols) = (tile.height() / cp, tile.width() / cp);
    let smoothed = smooth(tile, p.smooth_radius);
    let edges = detect_edges(&smoothed, p.edge_low, p.edge_high);
    let segments = extract_lines(&edges, p.hough_support);
    let cands = candidate_patches(tile, &segments)?;
    let cand_scores = cands
        .patches
        .par_iter()
        .map(|patch| segnet.score(&Tensor::image(cp, cp, &patch.pixels)?))
        .collect::<Result<Vec<f64>>>()?;
    let mut scores = vec![0.0; rows * cols];
    let mut candidate = vec![false; rows * cols];
    for (patch, s) in cands.patches.iter().zip(&cand_scores) {
        let i = patch.window.0 * cols + patch.window.1;
        scores[i] = *s;
        candidate[i] = true;
    }
    let positive = |i: usize| candidate[i] && scores[i] >= p.tau;

    let per = SEGMENT_PATCH / cp;
    let windows: BTreeSet<(usize, usize)> = (0..rows * cols)
        .filter(|&i| positive(i))
        .map(|i| ((i / cols) / per, (i % cols) / per))
        .collect();
    let maps = windows
        .par_iter()
        .map(|&(wr, wc)| {
            let (x0, y0) = (wc * SEGMENT_PATCH, wr * SEGMENT_PATCH);
            let ww = SEGMENT_PATCH.min(cols * cp - x0);
            let wh = SEGMENT_PATCH.min(rows * cp - y0);
            let win = tile.window(x0, y0, ww, wh)?;
            let fp = feedback.segment(&Tensor::image(wh, ww, win.pixels())?, p.feedback_passes)?;
            Ok(((wr, wc), fp))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut footprint = vec![0.0; rows * cols];
    let area = (cp * cp) as f64;
    for ((wr, wc), fp) in maps {
        for lr in 0..fp.height / cp {
            for lc in 0..fp.width / cp {
                let cell = (wr * per + lr) * cols + wc * per + lc;
                if !positive(cell) {
                    continue;
                }
                let mut n = 0usize;
                for y in lr * cp..(lr + 1) * cp {
                    let row = &fp.map[y * fp.width + lc * cp..y * fp.width + (lc + 1) * cp];
                    n += row.iter().filter(|&&v| v >= p.footprint_threshold && v > 0.0).count();
                }
                footprint[cell] = n as f64 / area;
            }
        }
    }
    Ok(TileDetection {
        rows,
        cols,
        scores,
        candidate,
        footprint,
        candidates: cands.len(),
        segments: segments.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileFailure {
    pub path: String,
    pub error: String,
}

/// Coverage report of a detection run.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Coverage {
    pub tiles: usize,
    pub tiles_failed: usize,
    pub failures: Vec<TileFailure>,
    pub cells_total: usize,
    pub cells_analyzed: usize,
    /// Share of the extent covered by successfully processed tiles.
    pub analyzed_fraction: f64,
    pub segments: usize,
    pub candidate_cells: usize,
    /// Candidate windows over analysed windows.
    pub candidate_fraction: f64,
    /// Method I settled cells (score at or above tau).
    pub cells_built: usize,
    /// Settled cells over analysed cells.
    pub built_fraction: f64,
    /// Cells with a positive Method II fraction.
    pub footprint_cells: usize,
    pub feedback_untrained: bool,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub built: Raster<f64>,
    pub fraction: Raster<f64>,
    pub scores: Raster<f64>,
    pub footprint: Raster<f64>,
    pub coverage: Coverage,
}

struct Placed {
    row0: usize,
    col0: usize,
    result: std::result::Result<TileDetection, String>,
}

fn offset(delta_deg: f64, cell_arcsec: f64, what: &str, path: &Path) -> Result<usize> {
    let cells = delta_deg * 3600.0 / cell_arcsec;
    let rounded = cells.round();
    if (cells - rounded).abs() > 1e-6 || rounded < 0.0 {
        return Err(Error::GridMismatch(format!(
            "{} {what} offset is {cells} cells, not a whole number",
            path.display()
        )));
    }
    Ok(rounded as usize)
}

/// Detection over a tile mosaic. Unreadable or failing tiles are recorded
/// in the coverage report and left as nodata.
pub fn detect_mosaic(
    entries: &[TileEntry],
    segnet: &SegNet,
    feedback: &FeedbackModel,
    p: &DetectParams,
) -> Result<Detection> {
    let cp = CLASSIFY_PATCH;
    let loaded: Vec<Result<ImageTile>> = entries.par_iter().map(load_tile).collect();
    let res = entries[0].res_arcsec;
    if let Some(e) = entries.iter().find(|e| (e.res_arcsec - res).abs() > 1e-9 * res) {
        return Err(Error::GridMismatch(format!(
            "{} has resolution {} arcsec, expected {res}",
            e.path.display(),
            e.res_arcsec
        )));
    }
    let mut sizes: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in loaded.iter().flatten() {
        *sizes.entry((t.height(), t.width())).or_default() += 1;
    }
    let Some((&modal, _)) = sizes.iter().max_by_key(|(s, n)| (**n, std::cmp::Reverse(**s))) else {
        let first = loaded.into_iter().find_map(|r| r.err()).expect("no tile loaded");
        return Err(first);
    };

    let cell_arcsec = res * cp as f64;
    let north = entries.iter().map(|e| e.origin_lat).fold(f64::NEG_INFINITY, f64::max);
    let west = entries.iter().map(|e| e.origin_lon).fold(f64::INFINITY, f64::min);
    let mut placed = Vec::with_capacity(entries.len());
    let (mut rows, mut cols) = (0, 0);
    for (e, t) in entries.iter().zip(&loaded) {
        let (h, w) = t.as_ref().map(|t| (t.height(), t.width())).unwrap_or(modal);
        let row0 = offset(north - e.origin_lat, cell_arcsec, "row", &e.path)?;
        let col0 = offset(e.origin_lon - west, cell_arcsec, "column", &e.path)?;
        rows = rows.max(row0 + h / cp);
        cols = cols.max(col0 + w / cp);
        placed.push((row0, col0));
    }
    let grid = GeoGrid::new(north, west, cell_arcsec, rows.max(1), cols.max(1))?;

    let results: Vec<Placed> = loaded
        .into_par_iter()
        .zip(placed.into_par_iter())
        .map(|(t, (row0, col0))| {
            let result = t
                .and_then(|t| detect_tile(&t, segnet, feedback, p))
                .map_err(|e| e.to_string());
            Placed { row0, col0, result }
        })
        .collect();

    let mut scores = Raster::filled(grid, NODATA, Some(NODATA));
    let mut footprint = Raster::filled(grid, NODATA, Some(NODATA));
    let mut built = Raster::filled(grid, NODATA, Some(NODATA));
    let mut cov = Coverage {
        tiles: entries.len(),
        feedback_untrained: feedback.trained_epochs == 0,
        ..Default::default()
    };
    for (e, pl) in entries.iter().zip(results) {
        match pl.result {
            Ok(d) => {
                cov.segments += d.segments;
                cov.candidate_cells += d.candidates;
                for r in 0..d.rows {
                    for c in 0..d.cols {
                        let i = r * d.cols + c;
                        let hit = d.candidate[i] && d.scores[i] >= p.tau;
                        scores.set(pl.row0 + r, pl.col0 + c, d.scores[i]);
                        footprint.set(pl.row0 + r, pl.col0 + c, d.footprint[i]);
                        built.set(pl.row0 + r, pl.col0 + c, f64::from(u8::from(hit)));
                    }
                }
            }
            Err(error) => {
                log::warn!("tile {} failed: {error}", e.path.display());
                cov.failures.push(TileFailure {
                    path: e.path.display().to_string(),
                    error,
                });
            }
        }
    }
    cov.tiles_failed = cov.failures.len();
    let fraction = cascade(&scores, &footprint, p.tau)?;

    cov.cells_total = grid.len();
    cov.cells_analyzed = scores.count_where(|v| v != NODATA);
    cov.analyzed_fraction = cov.cells_analyzed as f64 / cov.cells_total as f64;
    cov.cells_built = built.count_where(|v| v == 1.0);
    cov.footprint_cells = fraction.count_where(|v| v != NODATA && v > 0.0);
    if cov.cells_analyzed > 0 {
        cov.candidate_fraction = cov.candidate_cells as f64 / cov.cells_analyzed as f64;
        cov.built_fraction = cov.cells_built as f64 / cov.cells_analyzed as f64;
    }
    Ok(Detection {
        built,
        fraction,
        scores,
        footprint,
        coverage: cov,
    })
}

/// Smooth, find straight edges, classify candidate patches, segment the
/// positive ones and cascade. Writes the Method I binary raster
/// (`built.asc`), the Method II fraction raster (`fraction.asc`), the raw
/// scores and footprints, and `coverage.json`.
pub fn run_detect(cfg: &PipelineConfig) -> Result<(StageOutput, Coverage)> {
    let mut out = StageOutput::new("detect");
    let model_path = cfg.resolve(&cfg.model_file);
    let imagery = cfg.resolve(&cfg.imagery_dir);
    require_files([model_path.as_path(), imagery.join("tiles.csv").as_path()])?;
    let bundle = read_models(&model_path)?;
    let segnet = bundle
        .segnet
        .ok_or_else(|| Error::Model(format!("{} holds no segnet", model_path.display())))?;
    let feedback = bundle
        .feedback
        .ok_or_else(|| Error::Model(format!("{} holds no feedback model", model_path.display())))?;
    let entries = read_tile_index(&imagery)?;
    let params = DetectParams::from_config(cfg);
    let det = with_pool(cfg.threads, || detect_mosaic(&entries, &segnet, &feedback, &params))??;

    let dir = cfg.stage_dir("detect");
    out.write_raster(&det.built, dir.join("built.asc"), cfg)?;
    out.write_raster(&det.fraction, dir.join("fraction.asc"), cfg)?;
    out.write_raster(&det.scores, dir.join("scores.asc"), cfg)?;
    out.write_raster(&det.footprint, dir.join("footprint.asc"), cfg)?;
    let cov = det.coverage;
    out.write_text(
        dir.join("coverage.json"),
        serde_json::to_string_pretty(&cov).expect("coverage serialises") + "\n",
    )?;
    if cov.feedback_untrained {
        out.note("feedback model is untrained");
    }
    for f in &cov.failures {
        out.note(format!("tile {} failed: {}", f.path, f.error));
    }
    out.note(format!(
        "{} of {} cells analysed, {} settled ({:.2}%)",
        cov.cells_analyzed,
        cov.cells_total,
        cov.cells_built,
        100.0 * cov.built_fraction
    ));
    Ok((out, cov))
}
