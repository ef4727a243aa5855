use crate::error::{Error, Result};
use crate::geo::{read_grid_ascii, NODATA};
use crate::urban::{distance_cdf, find_urban_clusters, CdfScope, ClusterParams};

use super::config::PipelineConfig;
use super::meta::{require_files, StageOutput};
use super::render::{render_to_file, Style};
use super::with_pool;

pub fn cluster_params(cfg: &PipelineConfig) -> ClusterParams {
    ClusterParams {
        density_min: cfg.density_min,
        pop_min: cfg.pop_min,
        connectivity: cfg.connectivity,
        factor: cfg.km_factor,
    }
}

/// Urban clusters and rural-distance distributions from the allocated
/// population of the configured method. Fails with
/// [`Error::NoUrbanCluster`] when no cell group passes both thresholds.
pub fn run_clusters(cfg: &PipelineConfig) -> Result<StageOutput> {
    let mut out = StageOutput::new("clusters");
    let pop_path = cfg
        .stage_dir("allocate")
        .join(format!("population_{}.asc", cfg.allocation_method));
    require_files([pop_path.as_path()])?;
    let pop = read_grid_ascii(&pop_path)?;
    let map = find_urban_clusters(&pop, cluster_params(cfg))?;
    if map.is_empty() {
        return Err(Error::NoUrbanCluster);
    }
    let dir = cfg.stage_dir("clusters");
    let labels = map.labels.map(Some(NODATA), |v| v as f64);
    out.write_raster(&labels, dir.join("clusters.asc"), cfg)?;
    out.write_raster(&map.km_population, dir.join("km_population.asc"), cfg)?;
    let summary = dir.join("clusters.csv");
    map.write_summary_csv(&summary)?;
    out.files.push(summary);

    let cdfs = with_pool(cfg.threads, || {
        [CdfScope::All, CdfScope::Rural].map(|scope| distance_cdf(&pop, &map, cfg.bin_km, scope))
    })?;
    for cdf in cdfs {
        let cdf = cdf?;
        let name = cdf.scope.to_string();
        let (c, p) = (dir.join(format!("cdf_{name}.csv")), dir.join(format!("percentiles_{name}.csv")));
        cdf.write_csv(&c)?;
        cdf.write_percentiles_csv(&p)?;
        out.files.extend([c, p]);
        let pct: Vec<String> = cdf
            .percentiles
            .iter()
            .map(|(q, d)| match d {
                Some(d) => format!("p{:.0} {d:.1} km", q * 100.0),
                None => format!("p{:.0} n/a", q * 100.0),
            })
            .collect();
        out.note(format!("{name}: {}", pct.join(", ")));
    }

    let image = dir.join("clusters.ppm");
    let legend = render_to_file(&labels, Style::Clusters, cfg.render_scale, &image)?;
    out.files.extend([image, legend]);
    out.note(format!(
        "{} clusters holding {:.0} people",
        map.clusters.len(),
        map.clustered_population()
    ));
    Ok(out)
}
