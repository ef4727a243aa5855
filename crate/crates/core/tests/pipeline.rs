use std::fs;
use std::path::Path;

use settlemap::geo::{read_grid_ascii, write_grid_ascii, GeoGrid, Raster};
use settlemap::kv::KvFile;
use settlemap::pipeline::*;
use settlemap::Error;

fn config(dir: &Path, extra: &str) -> PipelineConfig {
    let text = format!(
        "corpus_worlds = 1\nepochs = 2\nfeedback_epochs = 1\nthreads = 1\n{extra}"
    );
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    PipelineConfig::read(&path).unwrap()
}

fn bytes(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");

    let synth = run_synth(&cfg).unwrap();
    assert!(dir.path().join("imagery/tiles.csv").exists());
    assert!(dir.path().join("corpus/manifest.csv").exists());
    assert!(synth.files.iter().all(|f| f.exists()));

    run_train(&cfg).unwrap();
    assert!(dir.path().join("model.smv").exists());
    assert!(dir.path().join("model.smv.meta").exists());

    let (det, cov) = run_detect(&cfg).unwrap();
    assert_eq!(cov.tiles, 1);
    assert_eq!(cov.cells_total, 256);
    assert_eq!(cov.analyzed_fraction, 1.0);
    for f in det.files.iter().filter(|f| f.extension().is_some_and(|e| e == "asc")) {
        let meta = read_sidecar(f).unwrap();
        assert_eq!(meta.raw("stage"), Some("detect"));
        assert_eq!(meta.raw("config_hash"), Some(cfg.hash().as_str()));
    }

    let (_, alloc) = run_allocate(&cfg).unwrap();
    assert!(alloc.conserved);
    assert_eq!(alloc.methods.len(), 2);

    let (_, summary) = run_validate(&cfg).unwrap();
    assert!(summary.notes.iter().any(|n| n.contains("cross_compare skipped")));
    assert!(summary.coincidence_fraction.is_some());

    let cfg = PipelineConfig {
        render_input: Some("out/allocate/population_uniform.asc".into()),
        render_style: Style::PopulationLog,
        ..cfg
    };
    let out = run_render(&cfg).unwrap();
    assert!(bytes(&out.files[0]).starts_with(b"P6\n64 64\n255\n"));
}

#[test]
fn missing_inputs_fail_with_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    for err in [
        run_train(&cfg).unwrap_err(),
        run_detect(&cfg).unwrap_err(),
        run_allocate(&cfg).unwrap_err(),
        run_clusters(&cfg).unwrap_err(),
        run_validate(&cfg).unwrap_err(),
    ] {
        assert_eq!(err.exit_code(), 3, "{err}");
    }
    assert_eq!(run_render(&cfg).unwrap_err().exit_code(), 4);
}

#[test]
fn clusters_stage_writes_maps_or_reports_none() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let grid = GeoGrid::new(0.0, 0.0, 1.0, 120, 120).unwrap();
    // a 2x2 km block at 600 people per km cell, everything else empty
    let km = |r: usize| r / 30;
    let area = settlemap::geo::cell_area_km2(&grid.coarsen(30).unwrap(), 0).unwrap();
    let pop = Raster::from_fn(grid, None, |r, c| {
        if km(r) < 2 && km(c) < 2 {
            600.0 * area / 900.0
        } else if r == 100 && c == 100 {
            50.0
        } else {
            0.0
        }
    });
    let p = cfg.stage_dir("allocate").join("population_uniform.asc");
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    write_grid_ascii(&pop, &p).unwrap();

    let cfg_low = PipelineConfig { pop_min: 1000.0, ..cfg.clone() };
    let out = run_clusters(&cfg_low).unwrap();
    let labels = read_grid_ascii(cfg.stage_dir("clusters").join("clusters.asc")).unwrap();
    assert_eq!(labels.rows(), 4);
    assert_eq!(labels.count_where(|v| v == 1.0), 4);
    assert!(out.files.iter().any(|f| f.ends_with("cdf_rural.csv")));
    assert!(out.files.iter().any(|f| f.ends_with("clusters.legend.txt")));

    let err = run_clusters(&cfg).unwrap_err();
    assert!(matches!(err, Error::NoUrbanCluster), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn unreadable_tile_is_recorded_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    run_synth(&cfg).unwrap();
    run_train(&cfg).unwrap();
    let img = dir.path().join("imagery");
    let index = fs::read_to_string(img.join("tiles.csv")).unwrap();
    let row = index.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    let lon: f64 = fields[2].parse::<f64>().unwrap() + 16.0 / 3600.0;
    fs::write(
        img.join("tiles.csv"),
        format!("{index}missing.pgm,{},{lon},{}\n", fields[1], fields[3]),
    )
    .unwrap();
    let (_, cov) = run_detect(&cfg).unwrap();
    assert_eq!(cov.tiles, 2);
    assert_eq!(cov.tiles_failed, 1);
    assert!(cov.failures[0].path.ends_with("missing.pgm"));
    assert_eq!(cov.cells_total, 512);
    assert_eq!(cov.analyzed_fraction, 0.5);
}

#[test]
fn config_errors_map_to_exit_code_four() {
    let kv = KvFile::parse("threads = many", "t").unwrap();
    assert_eq!(PipelineConfig::from_kv(&kv, ".").unwrap_err().exit_code(), 4);
}
