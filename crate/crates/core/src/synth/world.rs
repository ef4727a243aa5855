use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;

use super::imagery::render_tile;
use super::spec::WorldSpec;
use crate::allocation::{AdminRaster, CensusTable};
use crate::error::{Error, Result};
use crate::geo::{Binary, GeoGrid, GeoPoint, Raster, EARTH_RADIUS_KM};
use crate::prefilter::{ImageTile, Label, Patch, PatchSet};

const STREAM_LAYOUT: u64 = 0;
const STREAM_CENSUS: u64 = 1;
const STREAM_HOUSEHOLDS: u64 = 2;
const STREAM_CORPUS: u64 = 3;
const STREAM_TILES: u64 = 1000;

/// A rectangular roof inside one cell, in pixels from the cell's top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Building {
    pub row: usize,
    pub col: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub brightness: f64,
}

impl Building {
    pub fn area_px(&self) -> usize {
        self.w * self.h
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub grid: GeoGrid,
    pub buildings: Vec<Building>,
    pub built: Binary,
    pub built_fraction: Raster<f64>,
    pub coarse_census: CensusTable,
    pub fine_census: CensusTable,
    pub coarse_admin: AdminRaster,
    pub fine_admin: AdminRaster,
    pub nesting: BTreeMap<u32, u32>,
    pub households: Vec<GeoPoint>,
    /// Row-major tiles of `tile_cells` cells; empty without imagery.
    pub tiles: Vec<ImageTile>,
    /// Cells crossed by roads or trees.
    pub clutter: Binary,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Coarse unit id per cell, then fine unit id per cell.
fn admin_layout(spec: &WorldSpec, grid: GeoGrid) -> Result<(AdminRaster, AdminRaster)> {
    let (rows, cols) = (spec.rows, spec.cols);
    let band = |i: usize, n: usize, parts: usize| (i * parts) / n;
    let coarse = Raster::from_fn(grid, Some(0), |r, c| {
        let (br, bc) = (band(r, rows, spec.coarse_rows), band(c, cols, spec.coarse_cols));
        (br * spec.coarse_cols + bc) as u32 + 1
    });
    let fine = Raster::from_fn(grid, Some(0), |r, c| {
        let bc = band(c, cols, spec.coarse_cols);
        let c0 = (bc * cols).div_ceil(spec.coarse_cols);
        let c1 = ((bc + 1) * cols).div_ceil(spec.coarse_cols);
        let j = ((c - c0) * spec.fine_split) / (c1 - c0);
        (coarse.get(r, c) - 1) * spec.fine_split as u32 + j as u32 + 1
    });
    Ok((coarse, fine))
}

fn place_buildings(spec: &WorldSpec, coarse: &AdminRaster) -> Vec<Building> {
    let mut rng = rng(spec.seed, STREAM_LAYOUT);
    let units = spec.coarse_rows * spec.coarse_cols;
    let mut cells_of: Vec<Vec<usize>> = vec![Vec::new(); units];
    for (i, &id) in coarse.values().iter().enumerate() {
        cells_of[id as usize - 1].push(i);
    }
    let ppc = spec.pixels_per_cell;
    let margin = spec.shadow_px() + 2;
    let mut chosen: Vec<usize> = Vec::new();
    for (u, cells) in cells_of.iter().enumerate() {
        let d = spec.region_density.get(u).copied().unwrap_or(spec.density);
        let k = ((d * cells.len() as f64).round() as usize).min(cells.len());
        chosen.extend(sample(&mut rng, cells.len(), k).into_iter().map(|i| cells[i]));
    }
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|i| {
            let w = rng.gen_range(spec.building_min_px..=spec.building_max_px);
            let h = rng.gen_range(spec.building_min_px..=spec.building_max_px);
            Building {
                row: i / spec.cols,
                col: i % spec.cols,
                x: rng.gen_range(margin..=ppc - margin - w),
                y: rng.gen_range(margin..=ppc - margin - h),
                w,
                h,
                brightness: rng.gen_range(0.7..0.9),
            }
        })
        .collect()
}

/// Build a world from its spec. Everything is a pure function of the spec.
pub fn generate(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let grid = spec.grid()?;
    let (coarse_admin, fine_admin) = admin_layout(spec, grid)?;
    let buildings = place_buildings(spec, &coarse_admin);

    let cell_px = (spec.pixels_per_cell * spec.pixels_per_cell) as f64;
    let mut fraction = vec![0.0; grid.len()];
    for b in &buildings {
        fraction[b.row * spec.cols + b.col] = b.area_px() as f64 / cell_px;
    }
    let built_fraction = Raster::new(grid, fraction, None)?;
    let built = Raster::mask_from(&built_fraction, |v| v > 0.0);

    let mut nesting = BTreeMap::new();
    for (&f, &c) in fine_admin.values().iter().zip(coarse_admin.values()) {
        nesting.insert(f, c);
    }
    let mut cover: BTreeMap<u32, f64> = nesting.keys().map(|&f| (f, 0.0)).collect();
    for (&f, &v) in fine_admin.values().iter().zip(built_fraction.values()) {
        *cover.get_mut(&f).expect("fine id") += v;
    }
    let mut census_rng = rng(spec.seed, STREAM_CENSUS);
    let jitter = LogNormal::new(0.0, spec.jitter_sigma)
        .map_err(|e| Error::InvalidArgument(format!("jitter_sigma: {e}")))?;
    let fine_pop: Vec<(u32, f64)> = cover
        .iter()
        .map(|(&f, &a)| {
            let j = jitter.sample(&mut census_rng);
            (f, (spec.people_per_cover * a * j).round())
        })
        .collect();
    let mut coarse_pop: BTreeMap<u32, f64> = BTreeMap::new();
    for &(f, p) in &fine_pop {
        *coarse_pop.entry(nesting[&f]).or_insert(0.0) += p;
    }
    let fine_census = CensusTable::new(fine_pop)?;
    let coarse_census = CensusTable::new(coarse_pop)?;

    let households = sample_households(spec, grid, &buildings);

    let (tiles, clutter) = if spec.imagery {
        render_tiles(spec, grid, &buildings)?
    } else {
        (Vec::new(), Raster::filled(grid, 0u8, None))
    };

    Ok(World {
        spec: spec.clone(),
        grid,
        buildings,
        built,
        built_fraction,
        coarse_census,
        fine_census,
        coarse_admin,
        fine_admin,
        nesting,
        households,
        tiles,
        clutter,
    })
}

/// Roof-area weighted choice of building, then a uniform offset within the
/// jitter radius of its centre.
fn sample_households(spec: &WorldSpec, grid: GeoGrid, buildings: &[Building]) -> Vec<GeoPoint> {
    if buildings.is_empty() {
        return Vec::new();
    }
    let mut rng = rng(spec.seed, STREAM_HOUSEHOLDS);
    let total: usize = buildings.iter().map(Building::area_px).sum();
    let px_deg = grid.res_deg() / spec.pixels_per_cell as f64;
    (0..spec.households)
        .map(|_| {
            let mut t = rng.gen_range(0..total);
            let b = buildings
                .iter()
                .find(|b| {
                    if t < b.area_px() {
                        true
                    } else {
                        t -= b.area_px();
                        false
                    }
                })
                .expect("weighted pick");
            let corner = grid.cell_corner(b.row, b.col);
            let lat = corner.lat - (b.y as f64 + b.h as f64 / 2.0) * px_deg;
            let lon = corner.lon + (b.x as f64 + b.w as f64 / 2.0) * px_deg;
            let r_km = spec.household_jitter_m / 1000.0 * rng.gen::<f64>().sqrt();
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let dlat = (r_km * theta.sin() / EARTH_RADIUS_KM).to_degrees();
            let dlon = (r_km * theta.cos() / (EARTH_RADIUS_KM * lat.to_radians().cos())).to_degrees();
            GeoPoint {
                lat: lat + dlat,
                lon: lon + dlon,
            }
        })
        .collect()
}

fn render_tiles(
    spec: &WorldSpec,
    grid: GeoGrid,
    buildings: &[Building],
) -> Result<(Vec<ImageTile>, Binary)> {
    let tc = spec.tile_cells;
    let (tr, tcn) = (spec.rows.div_ceil(tc), spec.cols.div_ceil(tc));
    let rendered: Vec<(ImageTile, Vec<(usize, usize)>)> = (0..tr * tcn)
        .into_par_iter()
        .map(|t| {
            let (r0, c0) = ((t / tcn) * tc, (t % tcn) * tc);
            let rows = tc.min(spec.rows - r0);
            let cols = tc.min(spec.cols - c0);
            let corner = grid.cell_corner(r0, c0);
            let ppc = spec.pixels_per_cell;
            let px_grid = GeoGrid::new(
                corner.lat,
                corner.lon,
                spec.cell_arcsec / ppc as f64,
                rows * ppc,
                cols * ppc,
            )?;
            let local: Vec<Building> = buildings
                .iter()
                .filter(|b| (r0..r0 + rows).contains(&b.row) && (c0..c0 + cols).contains(&b.col))
                .map(|b| Building { row: b.row - r0, col: b.col - c0, ..*b })
                .collect();
            let mut trng = rng(spec.seed, STREAM_TILES + t as u64);
            let (tile, clutter) = render_tile(spec, px_grid, &local, &mut trng)?;
            Ok((tile, clutter.into_iter().map(|(r, c)| (r + r0, c + c0)).collect()))
        })
        .collect::<Result<_>>()?;
    let mut clutter = Raster::filled(grid, 0u8, None);
    let mut tiles = Vec::with_capacity(rendered.len());
    for (tile, cells) in rendered {
        for (r, c) in cells {
            clutter.set(r, c, 1);
        }
        tiles.push(tile);
    }
    Ok((tiles, clutter))
}

impl World {
    /// Pixel grid covering the whole world.
    pub fn pixel_grid(&self) -> Result<GeoGrid> {
        self.grid.refine(self.spec.pixels_per_cell)
    }

    /// Tile index and the tile's first cell for every tile, row-major.
    pub fn tile_origins(&self) -> Vec<(usize, usize)> {
        let tc = self.spec.tile_cells;
        let tcn = self.spec.cols.div_ceil(tc);
        (0..self.tiles.len()).map(|t| ((t / tcn) * tc, (t % tcn) * tc)).collect()
    }

    /// Image window of one cell.
    pub fn cell_patch(&self, row: usize, col: usize) -> Result<Patch> {
        let tc = self.spec.tile_cells;
        let tcn = self.spec.cols.div_ceil(tc);
        let tile = self
            .tiles
            .get((row / tc) * tcn + col / tc)
            .ok_or_else(|| Error::InvalidArgument("world has no imagery".into()))?;
        let ppc = self.spec.pixels_per_cell;
        let (lr, lc) = (row % tc, col % tc);
        let win = tile.window(lc * ppc, lr * ppc, ppc, ppc)?;
        Ok(Patch {
            size: ppc,
            pixels: win.pixels().to_vec(),
            geo_anchor: self.grid.cell_corner(row, col),
            window: (lr, lc),
            label: Some(if self.built.get(row, col) != 0 {
                Label::Building
            } else {
                Label::NoBuilding
            }),
        })
    }

    /// Labelled classification corpus: every building cell plus up to
    /// `negatives_per_positive` background cells per building, half of them
    /// drawn from cluttered cells when available.
    pub fn corpus(&self, negatives_per_positive: usize) -> Result<PatchSet> {
        let mut rng = rng(self.spec.seed, STREAM_CORPUS);
        let cells: Vec<(usize, usize)> = (0..self.spec.rows)
            .flat_map(|r| (0..self.spec.cols).map(move |c| (r, c)))
            .collect();
        let pos: Vec<_> = cells.iter().copied().filter(|&(r, c)| self.built.get(r, c) != 0).collect();
        let (hard, easy): (Vec<_>, Vec<_>) = cells
            .iter()
            .copied()
            .filter(|&(r, c)| self.built.get(r, c) == 0)
            .partition(|&(r, c)| self.clutter.get(r, c) != 0);
        let want = pos.len() * negatives_per_positive;
        let n_hard = (want / 2).min(hard.len());
        let n_easy = (want - n_hard).min(easy.len());
        let mut picked = pos;
        picked.extend(sample(&mut rng, hard.len(), n_hard).into_iter().map(|i| hard[i]));
        picked.extend(sample(&mut rng, easy.len(), n_easy).into_iter().map(|i| easy[i]));
        picked.sort_unstable();
        let patches = picked
            .into_iter()
            .map(|(r, c)| self.cell_patch(r, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(PatchSet {
            size: self.spec.pixels_per_cell,
            patches,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{aggregate, geodesic_distance_km, AggregateMode};

    fn small(seed: u64) -> WorldSpec {
        WorldSpec { seed, ..Default::default() }
    }

    #[test]
    fn zero_density_is_empty() {
        let w = generate(&WorldSpec { density: 0.0, ..small(3) }).unwrap();
        assert!(w.buildings.is_empty());
        assert_eq!(w.built.count_where(|v| v != 0), 0);
        assert!(w.households.is_empty());
        assert_eq!(w.fine_census.total(), 0.0);
    }

    #[test]
    fn same_seed_same_world() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        assert_eq!(a.buildings, b.buildings);
        assert_eq!(a.tiles, b.tiles);
        assert_eq!(a.households, b.households);
        assert_eq!(a.fine_census, b.fine_census);
        assert_ne!(generate(&small(6)).unwrap().tiles, a.tiles);
    }

    #[test]
    fn built_cell_fraction_tracks_density() {
        let mut total = 0.0;
        for seed in 0..20 {
            let spec = WorldSpec { imagery: false, ..small(seed) };
            let w = generate(&spec).unwrap();
            let f = w.built.count_where(|v| v != 0) as f64 / w.grid.len() as f64;
            assert!((f - 0.02).abs() <= 0.3 * 0.02, "seed {seed}: {f}");
            total += f;
        }
        assert!((total / 20.0 - 0.02).abs() <= 0.3 * 0.02);
    }

    #[test]
    fn truth_layers_agree() {
        let w = generate(&WorldSpec { density: 0.2, ..small(2) }).unwrap();
        let a = aggregate(&w.built_fraction, 1, AggregateMode::FractionTrue).unwrap();
        for (x, &b) in a.values().iter().zip(w.built.values()) {
            assert_eq!(*x, f64::from(b));
        }
        let a2 = aggregate(&w.built_fraction, 4, AggregateMode::FractionTrue).unwrap();
        let b2 = aggregate(&w.built, 4, AggregateMode::Mean).unwrap();
        assert_eq!(a2.values(), b2.values());
    }

    #[test]
    fn census_nests_exactly() {
        let spec = WorldSpec {
            rows: 40,
            cols: 60,
            coarse_rows: 2,
            coarse_cols: 3,
            fine_split: 5,
            density: 0.3,
            imagery: false,
            ..small(8)
        };
        let w = generate(&spec).unwrap();
        assert_eq!(w.coarse_census.len(), 6);
        assert_eq!(w.fine_census.len(), 30);
        for (c, pop) in w.coarse_census.iter() {
            let sum: f64 = w
                .nesting
                .iter()
                .filter(|&(_, &p)| p == c)
                .map(|(&f, _)| w.fine_census.get(f).unwrap())
                .sum();
            assert_eq!(sum, pop);
        }
        assert_eq!(
            crate::allocation::derive_nesting(&w.coarse_admin, &w.fine_admin).unwrap(),
            w.nesting
        );
    }

    #[test]
    fn households_stay_near_roofs() {
        let w = generate(&WorldSpec { density: 0.2, households: 300, ..small(4) }).unwrap();
        assert_eq!(w.households.len(), 300);
        let px = w.grid.res_deg() / 64.0;
        for h in &w.households {
            let near = w.buildings.iter().any(|b| {
                let c = w.grid.cell_corner(b.row, b.col);
                let centre = GeoPoint {
                    lat: c.lat - (b.y as f64 + b.h as f64 / 2.0) * px,
                    lon: c.lon + (b.x as f64 + b.w as f64 / 2.0) * px,
                };
                geodesic_distance_km(*h, centre) <= 0.030 + 1e-9
            });
            assert!(near);
        }
    }

    #[test]
    fn region_densities_apply_per_unit() {
        let spec = WorldSpec {
            rows: 20,
            cols: 20,
            coarse_cols: 2,
            fine_split: 2,
            region_density: vec![0.5, 0.0],
            imagery: false,
            ..small(1)
        };
        let w = generate(&spec).unwrap();
        assert_eq!(w.buildings.len(), 100);
        assert!(w.buildings.iter().all(|b| b.col < 10));
    }

    #[test]
    fn corpus_is_labelled_from_truth() {
        let w = generate(&WorldSpec { density: 0.1, ..small(11) }).unwrap();
        let set = w.corpus(3).unwrap();
        let pos = set.count_label(Label::Building);
        assert_eq!(pos, w.buildings.len());
        assert_eq!(set.count_label(Label::NoBuilding), 3 * pos);
        assert!(set.patches.iter().all(|p| p.pixels.len() == 64 * 64));
    }
}
