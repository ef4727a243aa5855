use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::{write_census_csv, AdminRaster};
use crate::error::Result;
use crate::geo::{write_points_csv, Raster};
use crate::prefilter::{write_corpus, write_pgm, PatchSet};
use crate::synth::{generate, WorldSpec};

use super::config::PipelineConfig;
use super::meta::{ensure_parent, StageOutput};
use super::with_pool;

#[derive(Debug, Serialize)]
struct SynthSummary {
    seed: u64,
    rows: usize,
    cols: usize,
    buildings: usize,
    tiles: usize,
    coarse_units: usize,
    fine_units: usize,
    population: f64,
    households: usize,
    corpus_patches: usize,
    corpus_positives: usize,
}

/// Seeds of the training worlds, disjoint from the evaluation world's.
pub fn corpus_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64)
        .map(|k| seed.wrapping_mul(1_000_003).wrapping_add(7919 * (k + 1)))
        .collect()
}

fn admin_f64(a: &AdminRaster) -> Raster<f64> {
    a.map(None, |v| v as f64)
}

/// Generate a synthetic world and write it as pipeline inputs: imagery
/// tiles, truth rasters, census tables, admin rasters, household points and
/// a labelled training corpus drawn from separate worlds.
pub fn run_synth(cfg: &PipelineConfig) -> Result<StageOutput> {
    let mut out = StageOutput::new("synth");
    let mut spec = match &cfg.worldspec {
        Some(p) => WorldSpec::read(cfg.resolve(p))?,
        None => WorldSpec::default(),
    };
    spec.seed = cfg.seed;
    spec.validate()?;

    let (world, corpus) = with_pool(cfg.threads, || -> Result<_> {
        let world = generate(&spec)?;
        let parts = corpus_seeds(cfg.seed, cfg.corpus_worlds)
            .into_par_iter()
            .map(|seed| {
                let s = WorldSpec {
                    seed,
                    density: cfg.corpus_density,
                    region_density: Vec::new(),
                    imagery: true,
                    ..spec.clone()
                };
                generate(&s)?.corpus(cfg.corpus_negatives)
            })
            .collect::<Result<Vec<PatchSet>>>()?;
        let mut corpus = PatchSet {
            size: spec.pixels_per_cell,
            patches: Vec::new(),
        };
        for p in parts {
            corpus.patches.extend(p.patches);
        }
        Ok((world, corpus))
    })??;

    if spec.imagery {
        let dir = cfg.resolve(&cfg.imagery_dir);
        let mut index = String::from("path,origin_lat,origin_lon,res_arcsec\n");
        for (t, tile) in world.tiles.iter().enumerate() {
            let name = format!("tile_{t:04}.pgm");
            let path = dir.join(&name);
            ensure_parent(&path)?;
            write_pgm(&path, tile.width(), tile.height(), tile.pixels(), false)?;
            out.files.push(path);
            let g = tile.grid();
            index.push_str(&format!(
                "{name},{},{},{}\n",
                g.origin_lat(),
                g.origin_lon(),
                g.res_arcsec()
            ));
        }
        out.write_text(dir.join("tiles.csv"), index)?;
    } else {
        out.note("imagery disabled in the world spec; no tiles written");
    }

    out.write_raster(&world.built, cfg.resolve(&cfg.truth_built), cfg)?;
    out.write_raster(&world.built_fraction, cfg.resolve(&cfg.truth_fraction), cfg)?;
    let census = cfg.resolve(&cfg.census_csv);
    ensure_parent(&census)?;
    write_census_csv(&world.coarse_census, &census)?;
    out.files.push(census);
    out.write_raster(&admin_f64(&world.coarse_admin), cfg.resolve(&cfg.admin_file), cfg)?;
    if let Some(p) = &cfg.fine_census_csv {
        let p = cfg.resolve(p);
        ensure_parent(&p)?;
        write_census_csv(&world.fine_census, &p)?;
        out.files.push(p);
    }
    if let Some(p) = &cfg.fine_admin_file {
        out.write_raster(&admin_f64(&world.fine_admin), cfg.resolve(p), cfg)?;
    }
    let hh = cfg.resolve(&cfg.households_csv);
    ensure_parent(&hh)?;
    write_points_csv(&world.households, &hh)?;
    out.files.push(hh);

    if corpus.is_empty() {
        out.note("corpus_worlds = 0; no training corpus written");
    } else {
        let dir = cfg.resolve(&cfg.corpus_dir);
        write_corpus(&corpus, &dir)?;
        out.files.push(dir.join("manifest.csv"));
    }

    let stage = cfg.stage_dir("synth");
    out.write_text(stage.join("worldspec.txt"), spec.to_kv_string())?;
    let summary = SynthSummary {
        seed: spec.seed,
        rows: spec.rows,
        cols: spec.cols,
        buildings: world.buildings.len(),
        tiles: world.tiles.len(),
        coarse_units: world.coarse_census.len(),
        fine_units: world.fine_census.len(),
        population: world.coarse_census.total(),
        households: world.households.len(),
        corpus_patches: corpus.len(),
        corpus_positives: corpus.count_label(crate::prefilter::Label::Building),
    };
    out.write_text(
        stage.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n",
    )?;
    out.note(format!(
        "{} buildings on {}x{} cells, {} corpus patches",
        summary.buildings, spec.rows, spec.cols, summary.corpus_patches
    ));
    Ok(out)
}
