use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::census::{validate_admin, AdminRaster, CensusTable};
use crate::error::{Error, Result};
use crate::geo::{Binary, Raster, NODATA};

/// A census unit whose population could not be placed.
#[derive(Debug, Clone, PartialEq)]
pub struct Unallocated {
    pub unit_id: u32,
    pub population: f64,
    pub settled_cells: usize,
}

#[derive(Debug, Clone)]
pub struct Allocation {
    /// Persons per cell; NODATA outside census coverage.
    pub population: Raster<f64>,
    pub unallocated: Vec<Unallocated>,
}

impl Allocation {
    /// Allocated population summed per unit id.
    pub fn unit_sums(&self, admin: &AdminRaster) -> BTreeMap<u32, f64> {
        let mut sums = BTreeMap::new();
        for (&id, &p) in admin.values().iter().zip(self.population.values()) {
            if id != 0 {
                *sums.entry(id).or_insert(0.0) += p;
            }
        }
        sums
    }
}

/// Method I: each unit's population split equally over its settled cells.
pub fn allocate_uniform(
    census: &CensusTable,
    admin: &AdminRaster,
    built: &Binary,
) -> Result<Allocation> {
    admin.ensure_same_grid(built, "settlement raster")?;
    let weights: Vec<f64> = built
        .values()
        .iter()
        .map(|&v| if v != 0 && !built.is_nodata(v) { 1.0 } else { 0.0 })
        .collect();
    distribute(census, admin, &weights, |pop, w, total| {
        if w > 0.0 {
            pop / total
        } else {
            0.0
        }
    })
}

/// Method II: population split in proportion to each cell's built fraction.
pub fn allocate_fractional(
    census: &CensusTable,
    admin: &AdminRaster,
    built_frac: &Raster<f64>,
) -> Result<Allocation> {
    admin.ensure_same_grid(built_frac, "built-fraction raster")?;
    let mut weights = Vec::with_capacity(built_frac.values().len());
    for &v in built_frac.values() {
        if built_frac.is_nodata(v) {
            weights.push(0.0);
        } else if (0.0..=1.0).contains(&v) {
            weights.push(v);
        } else {
            return Err(Error::Validation(format!("built fraction {v} outside [0,1]")));
        }
    }
    distribute(census, admin, &weights, |pop, w, total| {
        if w > 0.0 {
            pop * (w / total)
        } else {
            0.0
        }
    })
}

fn distribute(
    census: &CensusTable,
    admin: &AdminRaster,
    weights: &[f64],
    share: impl Fn(f64, f64, f64) -> f64,
) -> Result<Allocation> {
    validate_admin(admin, census)?;
    let mut totals: BTreeMap<u32, (f64, usize)> = census.iter().map(|(id, _)| (id, (0.0, 0))).collect();
    for (&id, &w) in admin.values().iter().zip(weights) {
        if id != 0 && w > 0.0 {
            let t = totals.get_mut(&id).expect("validated");
            t.0 += w;
            t.1 += 1;
        }
    }
    let values = admin
        .values()
        .iter()
        .zip(weights)
        .map(|(&id, &w)| {
            if id == 0 {
                return NODATA;
            }
            let pop = census.get(id).expect("validated");
            let (total, _) = totals[&id];
            if total > 0.0 {
                share(pop, w, total)
            } else {
                0.0
            }
        })
        .collect();
    let unallocated = census
        .iter()
        .filter(|&(id, pop)| pop > 0.0 && totals[&id].0 == 0.0)
        .map(|(id, pop)| Unallocated {
            unit_id: id,
            population: pop,
            settled_cells: totals[&id].1,
        })
        .collect();
    Ok(Allocation {
        population: Raster::new(*admin.grid(), values, Some(NODATA))?,
        unallocated,
    })
}

/// Largest relative deviation between allocated unit sums and census totals,
/// over units that received any population.
pub fn check_conservation(
    alloc: &Allocation,
    census: &CensusTable,
    admin: &AdminRaster,
) -> f64 {
    let sums = alloc.unit_sums(admin);
    let mut worst = 0.0f64;
    for (id, pop) in census.iter() {
        if alloc.unallocated.iter().any(|u| u.unit_id == id) {
            continue;
        }
        let got = sums.get(&id).copied().unwrap_or(0.0);
        let rel = if pop == 0.0 { got.abs() } else { (got - pop).abs() / pop };
        worst = worst.max(rel);
    }
    worst
}

pub fn write_unallocated_csv(rows: &[Unallocated], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("unit_id,population,settled_cells\n");
    for u in rows {
        s.push_str(&format!("{},{},{}\n", u.unit_id, u.population, u.settled_cells));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoGrid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(rows: usize, cols: usize) -> GeoGrid {
        GeoGrid::new(1.0, 30.0, 1.0, rows, cols).unwrap()
    }

    #[test]
    fn equal_split() {
        let g = grid(2, 3);
        let admin = Raster::new(g, vec![1, 1, 1, 1, 1, 2], Some(0)).unwrap();
        let built = Raster::new(g, vec![1, 1, 0, 1, 1, 0], None).unwrap();
        let c = CensusTable::new([(1, 100.0), (2, 0.0)]).unwrap();
        let a = allocate_uniform(&c, &admin, &built).unwrap();
        assert_eq!(a.population.values(), &[25.0, 25.0, 0.0, 25.0, 25.0, 0.0]);
        assert!(a.unallocated.is_empty());
    }

    #[test]
    fn proportional_split() {
        let g = grid(1, 3);
        let admin = Raster::new(g, vec![4, 4, 4], Some(0)).unwrap();
        let f = Raster::new(g, vec![0.5, 0.25, 0.25], None).unwrap();
        let c = CensusTable::new([(4, 80.0)]).unwrap();
        let a = allocate_fractional(&c, &admin, &f).unwrap();
        assert_eq!(a.population.values(), &[40.0, 20.0, 20.0]);
    }

    #[test]
    fn unsettled_unit_is_reported_not_spread() {
        let g = grid(1, 4);
        let admin = Raster::new(g, vec![1, 1, 2, 0], Some(0)).unwrap();
        let built = Raster::new(g, vec![0, 0, 1, 1], None).unwrap();
        let c = CensusTable::new([(1, 50.0), (2, 10.0), (3, 7.0)]).unwrap();
        let a = allocate_uniform(&c, &admin, &built).unwrap();
        assert_eq!(a.population.values(), &[0.0, 0.0, 10.0, NODATA]);
        assert_eq!(
            a.unallocated,
            vec![
                Unallocated { unit_id: 1, population: 50.0, settled_cells: 0 },
                Unallocated { unit_id: 3, population: 7.0, settled_cells: 0 },
            ]
        );
        assert_eq!(check_conservation(&a, &c, &admin), 0.0);
    }

    #[test]
    fn missing_census_unit_fails() {
        let g = grid(1, 2);
        let admin = Raster::new(g, vec![1, 5], Some(0)).unwrap();
        let built = Raster::new(g, vec![1, 1], None).unwrap();
        let c = CensusTable::new([(1, 5.0)]).unwrap();
        assert!(matches!(allocate_uniform(&c, &admin, &built), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_fraction_out_of_range() {
        let g = grid(1, 1);
        let admin = Raster::new(g, vec![1], Some(0)).unwrap();
        let f = Raster::new(g, vec![1.5], None).unwrap();
        let c = CensusTable::new([(1, 5.0)]).unwrap();
        assert!(allocate_fractional(&c, &admin, &f).is_err());
    }

    fn random_case(seed: u64) -> (CensusTable, AdminRaster, Binary, Raster<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (rng.gen_range(2..20), rng.gen_range(2..20));
        let g = grid(rows, cols);
        let units = rng.gen_range(1..6u32);
        let admin = Raster::from_fn(g, Some(0), |_, _| rng.gen_range(0..=units));
        let frac = Raster::from_fn(g, None, |_, _| {
            if rng.gen_bool(0.4) {
                rng.gen_range(0.0..=1.0)
            } else {
                0.0
            }
        });
        let built = Raster::mask_from(&frac, |v| v > 0.0);
        let census =
            CensusTable::new((1..=units).map(|id| (id, rng.gen_range(0.0..1e6)))).unwrap();
        (census, admin, built, frac)
    }

    proptest! {
        #[test]
        fn both_methods_conserve(seed in any::<u64>()) {
            let (c, admin, built, frac) = random_case(seed);
            for a in [allocate_uniform(&c, &admin, &built).unwrap(),
                      allocate_fractional(&c, &admin, &frac).unwrap()] {
                prop_assert!(check_conservation(&a, &c, &admin) <= 1e-9);
                for (&p, &f) in a.population.values().iter().zip(frac.values()) {
                    prop_assert!(p == NODATA || p >= 0.0);
                    if f == 0.0 && p != NODATA {
                        prop_assert_eq!(p, 0.0);
                    }
                }
            }
        }

        #[test]
        fn power_of_two_scaling_is_exact(seed in any::<u64>(), e in -4i32..8) {
            let (c, admin, built, frac) = random_case(seed);
            let k = 2f64.powi(e);
            let c2 = c.scaled(k).unwrap();
            let a = allocate_fractional(&c, &admin, &frac).unwrap();
            let b = allocate_fractional(&c2, &admin, &frac).unwrap();
            let u = allocate_uniform(&c, &admin, &built).unwrap();
            let v = allocate_uniform(&c2, &admin, &built).unwrap();
            for (x, y) in a.population.values().iter().zip(b.population.values())
                .chain(u.population.values().iter().zip(v.population.values())) {
                if *x != NODATA {
                    prop_assert_eq!(x * k, *y);
                }
            }
        }

        #[test]
        fn constant_fractions_match_uniform(seed in any::<u64>(), f in 0.01f64..=1.0) {
            let (c, admin, built, _) = random_case(seed);
            let frac = built.map(None, |b| if b == 1 { f } else { 0.0 });
            let a = allocate_uniform(&c, &admin, &built).unwrap();
            let b = allocate_fractional(&c, &admin, &frac).unwrap();
            for (x, y) in a.population.values().iter().zip(b.population.values()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
