use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::GeoGrid;
use crate::kv::KvFile;

/// Parameters of a synthetic world. Cells are `cell_arcsec` on a side and
/// each is imaged as `pixels_per_cell` squared pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub seed: u64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_arcsec: f64,
    pub rows: usize,
    pub cols: usize,
    pub pixels_per_cell: usize,
    /// Cells per image tile side.
    pub tile_cells: usize,
    /// Share of cells holding a building.
    pub density: f64,
    /// Per-coarse-unit override of `density`, in unit id order.
    pub region_density: Vec<f64>,
    pub building_min_px: usize,
    pub building_max_px: usize,
    /// Amplitude of the smooth background variation.
    pub texture: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    pub roads_per_tile: usize,
    pub trees_per_tile: usize,
    pub coarse_rows: usize,
    pub coarse_cols: usize,
    /// Fine units per coarse unit.
    pub fine_split: usize,
    /// Log-normal sigma of the per-unit census jitter.
    pub jitter_sigma: f64,
    /// Persons per fully roofed cell.
    pub people_per_cover: f64,
    pub households: usize,
    pub household_jitter_m: f64,
    pub imagery: bool,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 1,
            origin_lat: -13.0,
            origin_lon: 33.5,
            cell_arcsec: 1.0,
            rows: 16,
            cols: 16,
            pixels_per_cell: 64,
            tile_cells: 16,
            density: 0.02,
            region_density: Vec::new(),
            building_min_px: 24,
            building_max_px: 40,
            texture: 0.08,
            noise: 0.02,
            roads_per_tile: 1,
            trees_per_tile: 12,
            coarse_rows: 1,
            coarse_cols: 1,
            fine_split: 4,
            jitter_sigma: 0.3,
            people_per_cover: 150.0,
            households: 100,
            household_jitter_m: 30.0,
            imagery: true,
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "origin_lat",
    "origin_lon",
    "cell_arcsec",
    "rows",
    "cols",
    "pixels_per_cell",
    "tile_cells",
    "density",
    "region_density",
    "building_min_px",
    "building_max_px",
    "texture",
    "noise",
    "roads_per_tile",
    "trees_per_tile",
    "coarse_rows",
    "coarse_cols",
    "fine_split",
    "jitter_sigma",
    "people_per_cover",
    "households",
    "household_jitter_m",
    "imagery",
];

impl WorldSpec {
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(KEYS)?;
        let d = WorldSpec::default();
        let spec = WorldSpec {
            seed: kv.get_or("seed", d.seed)?,
            origin_lat: kv.get_or("origin_lat", d.origin_lat)?,
            origin_lon: kv.get_or("origin_lon", d.origin_lon)?,
            cell_arcsec: kv.get_or("cell_arcsec", d.cell_arcsec)?,
            rows: kv.get_or("rows", d.rows)?,
            cols: kv.get_or("cols", d.cols)?,
            pixels_per_cell: kv.get_or("pixels_per_cell", d.pixels_per_cell)?,
            tile_cells: kv.get_or("tile_cells", d.tile_cells)?,
            density: kv.get_or("density", d.density)?,
            region_density: kv.list("region_density")?,
            building_min_px: kv.get_or("building_min_px", d.building_min_px)?,
            building_max_px: kv.get_or("building_max_px", d.building_max_px)?,
            texture: kv.get_or("texture", d.texture)?,
            noise: kv.get_or("noise", d.noise)?,
            roads_per_tile: kv.get_or("roads_per_tile", d.roads_per_tile)?,
            trees_per_tile: kv.get_or("trees_per_tile", d.trees_per_tile)?,
            coarse_rows: kv.get_or("coarse_rows", d.coarse_rows)?,
            coarse_cols: kv.get_or("coarse_cols", d.coarse_cols)?,
            fine_split: kv.get_or("fine_split", d.fine_split)?,
            jitter_sigma: kv.get_or("jitter_sigma", d.jitter_sigma)?,
            people_per_cover: kv.get_or("people_per_cover", d.people_per_cover)?,
            households: kv.get_or("households", d.households)?,
            household_jitter_m: kv.get_or("household_jitter_m", d.household_jitter_m)?,
            imagery: kv.get_or("imagery", d.imagery)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }

    pub fn to_kv_string(&self) -> String {
        let dens: Vec<String> = self.region_density.iter().map(f64::to_string).collect();
        format!(
            "seed = {}\norigin_lat = {}\norigin_lon = {}\ncell_arcsec = {}\nrows = {}\ncols = {}\n\
             pixels_per_cell = {}\ntile_cells = {}\ndensity = {}\nregion_density = {}\n\
             building_min_px = {}\nbuilding_max_px = {}\ntexture = {}\nnoise = {}\n\
             roads_per_tile = {}\ntrees_per_tile = {}\ncoarse_rows = {}\ncoarse_cols = {}\n\
             fine_split = {}\njitter_sigma = {}\npeople_per_cover = {}\nhouseholds = {}\n\
             household_jitter_m = {}\nimagery = {}\n",
            self.seed,
            self.origin_lat,
            self.origin_lon,
            self.cell_arcsec,
            self.rows,
            self.cols,
            self.pixels_per_cell,
            self.tile_cells,
            self.density,
            dens.join(","),
            self.building_min_px,
            self.building_max_px,
            self.texture,
            self.noise,
            self.roads_per_tile,
            self.trees_per_tile,
            self.coarse_rows,
            self.coarse_cols,
            self.fine_split,
            self.jitter_sigma,
            self.people_per_cover,
            self.households,
            self.household_jitter_m,
            self.imagery,
        )
    }

    /// Cell-level grid of the world.
    pub fn grid(&self) -> Result<GeoGrid> {
        GeoGrid::new(self.origin_lat, self.origin_lon, self.cell_arcsec, self.rows, self.cols)
    }

    /// Shadow width in pixels; buildings keep this much margin plus two.
    pub fn shadow_px(&self) -> usize {
        (self.pixels_per_cell / 21).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.grid()?;
        let unit_density = |d: f64| (0.0..=1.0).contains(&d);
        if !unit_density(self.density) || !self.region_density.iter().all(|&d| unit_density(d)) {
            return bad("densities must lie in [0, 1]".into());
        }
        if !self.region_density.is_empty()
            && self.region_density.len() != self.coarse_rows * self.coarse_cols
        {
            return bad(format!(
                "region_density lists {} values for {} coarse units",
                self.region_density.len(),
                self.coarse_rows * self.coarse_cols
            ));
        }
        if self.fine_split == 0 || self.coarse_rows == 0 || self.coarse_cols == 0 {
            return bad("admin hierarchy sizes must be >= 1".into());
        }
        if self.coarse_rows > self.rows || self.coarse_cols * self.fine_split > self.cols {
            return bad("admin hierarchy has more units than the extent has cells".into());
        }
        let room = self.pixels_per_cell.saturating_sub(2 * (self.shadow_px() + 2));
        if self.building_min_px < 2
            || self.building_min_px > self.building_max_px
            || self.building_max_px > room
        {
            return bad(format!(
                "building size range {}..={} px does not fit a {} px cell",
                self.building_min_px, self.building_max_px, self.pixels_per_cell
            ));
        }
        if self.tile_cells == 0 {
            return bad("tile_cells must be >= 1".into());
        }
        if !(self.texture >= 0.0 && self.noise >= 0.0 && self.jitter_sigma >= 0.0) {
            return bad("texture, noise and jitter_sigma must be >= 0".into());
        }
        if !(self.people_per_cover > 0.0) {
            return bad("people_per_cover must be positive".into());
        }
        if !(0.0..=30.0).contains(&self.household_jitter_m) {
            return bad("household_jitter_m must lie in [0, 30]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let s = WorldSpec {
            seed: 9,
            region_density: vec![0.1, 0.0],
            coarse_cols: 2,
            ..Default::default()
        };
        let kv = KvFile::parse(&s.to_kv_string(), "w").unwrap();
        assert_eq!(WorldSpec::from_kv(&kv).unwrap(), s);
    }

    #[test]
    fn rejects_degenerate() {
        let kv = KvFile::parse("rows = 0", "w").unwrap();
        assert!(WorldSpec::from_kv(&kv).is_err());
        let kv = KvFile::parse("density = 1.5", "w").unwrap();
        assert!(WorldSpec::from_kv(&kv).is_err());
        let kv = KvFile::parse("building_max_px = 64", "w").unwrap();
        assert!(WorldSpec::from_kv(&kv).is_err());
        let kv = KvFile::parse("colour = red", "w").unwrap();
        assert!(WorldSpec::from_kv(&kv).is_err());
    }
}
