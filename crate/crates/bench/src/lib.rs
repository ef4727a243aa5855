//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use settlemap::geo::{Binary, GeoGrid, Raster};
use settlemap::nn::Tensor;
use settlemap::prefilter::ImageTile;
use settlemap::synth::{generate, WorldSpec};

pub fn grid(side: usize, res_arcsec: f64) -> GeoGrid {
    GeoGrid::new(-13.0, 33.5, res_arcsec, side, side).expect("valid grid")
}

/// Population-like raster: a third of the cells settled, heavy tailed.
pub fn population(side: usize, seed: u64) -> Raster<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Raster::from_fn(grid(side, 1.0), None, |_, _| {
        if rng.gen_bool(0.33) {
            rng.gen::<f64>().powi(3) * 40.0
        } else {
            0.0
        }
    })
}

pub fn mask(side: usize, p: f64, seed: u64) -> Binary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Raster::from_fn(grid(side, 1.0), None, |_, _| u8::from(rng.gen_bool(p)))
}

/// One 1024x1024 tile of the default synthetic world.
pub fn tile(seed: u64) -> ImageTile {
    let world = generate(&WorldSpec { seed, ..Default::default() }).expect("default world");
    world.tiles.into_iter().next().expect("one tile")
}

pub fn noise(side: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px: Vec<f64> = (0..side * side).map(|_| rng.gen()).collect();
    Tensor::image(side, side, &px).expect("square image")
}
