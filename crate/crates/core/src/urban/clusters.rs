use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{
    aggregate, cell_area_km2, connected_components, AggregateMode, Binary, Connectivity, GeoGrid,
    Raster,
};

/// 30 arcsec cells are roughly 1 km on a side near the equator.
pub const KM_FACTOR: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Persons per km².
    pub density_min: f64,
    pub pop_min: f64,
    pub connectivity: Connectivity,
    /// Input cells per cluster-grid cell along each axis.
    pub factor: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            density_min: 300.0,
            pop_min: 5000.0,
            connectivity: Connectivity::Four,
            factor: KM_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: u32,
    pub population: f64,
    pub cells: usize,
}

#[derive(Debug, Clone)]
pub struct ClusterMap {
    pub km_grid: GeoGrid,
    /// Cluster id per km cell, 0 for rural.
    pub labels: Raster<u32>,
    pub clusters: Vec<Cluster>,
    /// Population summed onto the km grid (nodata counted as zero).
    pub km_population: Raster<f64>,
    pub factor: usize,
}

impl ClusterMap {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clustered_population(&self) -> f64 {
        self.clusters.iter().map(|c| c.population).sum()
    }

    /// Km cells belonging to any cluster.
    pub fn mask(&self) -> Binary {
        Raster::mask_from(&self.labels, |v| v != 0)
    }

    /// Cluster membership resampled onto a finer grid by cell centre.
    pub fn mask_on(&self, grid: &GeoGrid) -> Binary {
        Raster::from_fn(*grid, None, |r, c| {
            let hit = self
                .km_grid
                .locate(grid.cell_center(r, c))
                .is_some_and(|(kr, kc)| self.labels.get(kr, kc) != 0);
            u8::from(hit)
        })
    }

    /// `cluster_id,population,cells`
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::from("cluster_id,population,cells\n");
        for c in &self.clusters {
            s.push_str(&format!("{},{},{}\n", c.id, c.population, c.cells));
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Aggregate to km cells, keep cells at or above the density threshold, and
/// retain connected groups holding at least `pop_min` people.
pub fn find_urban_clusters(pop: &Raster<f64>, params: ClusterParams) -> Result<ClusterMap> {
    if !(params.density_min >= 0.0 && params.pop_min >= 0.0) {
        return Err(Error::InvalidArgument("cluster thresholds must be non-negative".into()));
    }
    if let Some(v) = pop.values().iter().find(|&&v| !pop.is_nodata(v) && !(v >= 0.0)) {
        return Err(Error::Validation(format!("population value {v} is negative or NaN")));
    }
    let summed = aggregate(pop, params.factor, AggregateMode::Sum)?;
    let km_population = Raster::new(
        *summed.grid(),
        summed
            .values()
            .iter()
            .map(|&v| if summed.is_nodata(v) { 0.0 } else { v })
            .collect(),
        None,
    )?;
    let km_grid = *km_population.grid();
    let areas = (0..km_grid.rows())
        .map(|r| cell_area_km2(&km_grid, r))
        .collect::<Result<Vec<_>>>()?;
    let dense = Raster::from_fn(km_grid, None, |r, c| {
        u8::from(km_population.get(r, c) / areas[r] >= params.density_min)
    });
    let comps = connected_components(&dense, params.connectivity);

    let mut totals = vec![0.0; comps.count];
    for (&l, &p) in comps.labels.values().iter().zip(km_population.values()) {
        if l != 0 {
            totals[l as usize - 1] += p;
        }
    }
    let mut remap = vec![0u32; comps.count];
    let mut clusters = Vec::new();
    for (i, &total) in totals.iter().enumerate() {
        if total >= params.pop_min {
            let id = clusters.len() as u32 + 1;
            remap[i] = id;
            clusters.push(Cluster {
                id,
                population: total,
                cells: comps.sizes[i],
            });
        }
    }
    let labels = comps
        .labels
        .map(Some(0), |l| if l == 0 { 0 } else { remap[l as usize - 1] });
    Ok(ClusterMap {
        km_grid,
        labels,
        clusters,
        km_population,
        factor: params.factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Population raster already on a km grid, `per_cell` people in a
    /// `side x side` block at the top-left.
    fn block(side: usize, per_cell: f64) -> Raster<f64> {
        let g = GeoGrid::new(0.5, 10.0, 30.0, 8, 8).unwrap();
        Raster::from_fn(g, Some(-9999.0), |r, c| {
            if r < side && c < side {
                per_cell
            } else {
                0.0
            }
        })
    }

    fn at_km() -> ClusterParams {
        ClusterParams { factor: 1, ..Default::default() }
    }

    #[test]
    fn three_by_three_is_too_small() {
        let m = find_urban_clusters(&block(3, 400.0), at_km()).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.labels.count_where(|v| v != 0), 0);
    }

    #[test]
    fn four_by_four_forms_one_cluster() {
        let m = find_urban_clusters(&block(4, 400.0), at_km()).unwrap();
        assert_eq!(m.clusters, vec![Cluster { id: 1, population: 6400.0, cells: 16 }]);
    }

    #[test]
    fn aggregates_arcsec_input() {
        let g = GeoGrid::new(0.0, 0.0, 1.0, 60, 60).unwrap();
        let pop = Raster::filled(g, 8.0, None);
        let m = find_urban_clusters(&pop, ClusterParams::default()).unwrap();
        assert_eq!(m.km_grid.rows(), 2);
        assert_eq!(m.clusters.len(), 1);
        assert_eq!(m.clusters[0].population, 28800.0);
        let fine = m.mask_on(&g);
        assert_eq!(fine.count_where(|v| v == 1), 3600);
    }

    #[test]
    fn density_uses_true_area() {
        // 200 people per 30" cell: ~233/km² at the equator, ~466/km² at 60°N.
        let g = GeoGrid::new(60.5, 10.0, 30.0, 6, 6).unwrap();
        let pop = Raster::filled(g, 200.0, None);
        let p = ClusterParams { factor: 1, pop_min: 0.0, ..Default::default() };
        assert_eq!(find_urban_clusters(&pop, p).unwrap().clusters.len(), 1);
        let g0 = GeoGrid::new(0.5, 10.0, 30.0, 6, 6).unwrap();
        let pop0 = Raster::filled(g0, 200.0, None);
        assert!(find_urban_clusters(&pop0, p).unwrap().is_empty());
    }

    fn brute_force(pop: &Raster<f64>, p: ClusterParams) -> Vec<Vec<bool>> {
        let g = *pop.grid();
        let (rows, cols) = (g.rows(), g.cols());
        let dense: Vec<Vec<bool>> = (0..rows)
            .map(|r| {
                let a = cell_area_km2(&g, r).unwrap();
                (0..cols).map(|c| pop.get(r, c) / a >= p.density_min).collect()
            })
            .collect();
        let mut seen = vec![vec![false; cols]; rows];
        let mut out = vec![vec![false; cols]; rows];
        for r in 0..rows {
            for c in 0..cols {
                if !dense[r][c] || seen[r][c] {
                    continue;
                }
                let mut comp = vec![(r, c)];
                seen[r][c] = true;
                let mut i = 0;
                while i < comp.len() {
                    let (cr, cc) = comp[i];
                    i += 1;
                    for &(dr, dc) in p.connectivity.offsets() {
                        let (nr, nc) = (cr as isize + dr, cc as isize + dc);
                        if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if dense[nr][nc] && !seen[nr][nc] {
                            seen[nr][nc] = true;
                            comp.push((nr, nc));
                        }
                    }
                }
                let total: f64 = comp.iter().map(|&(a, b)| pop.get(a, b)).sum();
                if total >= p.pop_min {
                    for (a, b) in comp {
                        out[a][b] = true;
                    }
                }
            }
        }
        out
    }

    fn random_km_raster(seed: u64) -> Raster<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (rng.gen_range(1..24), rng.gen_range(1..24));
        let g = GeoGrid::new(rng.gen_range(-60.0..60.0), 0.0, 30.0, rows, cols).unwrap();
        Raster::from_fn(g, None, |_, _| {
            if rng.gen_bool(0.5) {
                rng.gen_range(0.0..2000.0)
            } else {
                0.0
            }
        })
    }

    proptest! {
        #[test]
        fn matches_definition(seed in any::<u64>(), eight in any::<bool>()) {
            let pop = random_km_raster(seed);
            let p = ClusterParams {
                factor: 1,
                connectivity: if eight { Connectivity::Eight } else { Connectivity::Four },
                ..Default::default()
            };
            let m = find_urban_clusters(&pop, p).unwrap();
            let oracle = brute_force(&pop, p);
            for r in 0..pop.rows() {
                for c in 0..pop.cols() {
                    prop_assert_eq!(m.labels.get(r, c) != 0, oracle[r][c]);
                }
            }
        }

        #[test]
        fn thresholds_are_monotone(seed in any::<u64>(), bump in 0.0f64..2000.0) {
            let pop = random_km_raster(seed);
            let base = ClusterParams { factor: 1, ..Default::default() };
            let total = find_urban_clusters(&pop, base).unwrap().clustered_population();
            let dens = ClusterParams { density_min: base.density_min + bump, ..base };
            let size = ClusterParams { pop_min: base.pop_min + bump * 5.0, ..base };
            prop_assert!(find_urban_clusters(&pop, dens).unwrap().clustered_population() <= total);
            prop_assert!(find_urban_clusters(&pop, size).unwrap().clustered_population() <= total);
        }

        #[test]
        fn scaling_up_only_grows(seed in any::<u64>(), k in 1.0f64..4.0) {
            let pop = random_km_raster(seed);
            let p = ClusterParams { factor: 1, ..Default::default() };
            let a = find_urban_clusters(&pop, p).unwrap();
            let b = find_urban_clusters(&pop.map(None, |v| v * k), p).unwrap();
            for (x, y) in a.labels.values().iter().zip(b.labels.values()) {
                prop_assert!(*x == 0 || *y != 0);
            }
        }
    }
}
