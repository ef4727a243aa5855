use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{aggregate, AggregateMode, Binary, GeoPoint, MaskIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `TP / (TP + FP)`, absent with no predicted positives.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `TP / (TP + FN)`, absent with no actual positives.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    fn add(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub counts: ConfusionCounts,
}

impl From<ConfusionCounts> for PrecisionRecall {
    fn from(counts: ConfusionCounts) -> Self {
        PrecisionRecall {
            precision: counts.precision(),
            recall: counts.recall(),
            counts,
        }
    }
}

pub fn precision_recall(pred: &[bool], truth: &[bool]) -> Result<PrecisionRecall> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions against {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        c.add(p, t);
    }
    Ok(c.into())
}

/// Cell-level scores; cells that are nodata in either raster are skipped.
pub fn raster_precision_recall(pred: &Binary, truth: &Binary) -> Result<PrecisionRecall> {
    pred.ensure_same_grid(truth, "truth raster")?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        if !pred.is_nodata(p) && !truth.is_nodata(t) {
            c.add(p != 0, t != 0);
        }
    }
    Ok(c.into())
}

/// Recall after max-aggregating both rasters by `factor`, so a detection
/// in the same coarse block counts as a hit.
pub fn region_recall(pred: &Binary, truth: &Binary, factor: usize) -> Result<Option<f64>> {
    pred.ensure_same_grid(truth, "truth raster")?;
    let p = aggregate(pred, factor, AggregateMode::Max)?;
    let t = aggregate(truth, factor, AggregateMode::Max)?;
    let mut c = ConfusionCounts::default();
    for (&a, &b) in p.values().iter().zip(t.values()) {
        if !p.is_nodata(a) && !t.is_nodata(b) {
            c.add(a > 0.0, b > 0.0);
        }
    }
    Ok(c.recall())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coincidence {
    pub fraction: f64,
    pub matched: usize,
    /// Metres from each point to the nearest settled cell centre; `None` when
    /// nothing is settled.
    pub distances_m: Vec<Option<f64>>,
}

/// Share of points within `radius_m` of a settled cell centre.
pub fn household_coincidence(
    points: &[GeoPoint],
    built: &Binary,
    radius_m: f64,
) -> Result<Coincidence> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no household points".into()));
    }
    if !(radius_m >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius {radius_m} must be >= 0")));
    }
    let index = MaskIndex::new(built);
    let distances_m: Vec<Option<f64>> = points
        .par_iter()
        .map(|&p| index.as_ref().map(|i| i.nearest_km(p) * 1000.0))
        .collect();
    let matched = distances_m
        .iter()
        .filter(|d| d.is_some_and(|d| d <= radius_m))
        .count();
    Ok(Coincidence {
        fraction: matched as f64 / points.len() as f64,
        matched,
        distances_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{geodesic_distance_km, GeoGrid, Raster};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn: 0 }
    }

    #[test]
    fn formulas() {
        let c = counts(947, 53, 90);
        assert_eq!(c.precision(), Some(0.947));
        assert!((c.recall().unwrap() - 0.9132).abs() < 1e-4);
        assert_eq!(counts(10, 0, 0).precision(), Some(1.0));
        assert_eq!(counts(10, 0, 0).recall(), Some(1.0));
    }

    #[test]
    fn all_negative_prediction() {
        let r = precision_recall(&[false, false, false], &[true, false, true]).unwrap();
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, Some(0.0));
        assert_eq!(r.counts, ConfusionCounts { tp: 0, fp: 0, fn_: 2, tn: 1 });
        assert!(precision_recall(&[true], &[]).is_err());
    }

    fn grid() -> GeoGrid {
        GeoGrid::new(-13.0, 33.0, 1.0, 8, 8).unwrap()
    }

    #[test]
    fn region_recall_tolerates_shift() {
        let truth = Raster::from_fn(grid(), None, |r, c| u8::from(r % 2 == 0 && c % 2 == 0));
        let pred = Raster::from_fn(grid(), None, |r, c| u8::from(r % 2 == 0 && c % 2 == 1));
        let fine = region_recall(&pred, &truth, 1).unwrap().unwrap();
        let coarse = region_recall(&pred, &truth, 2).unwrap().unwrap();
        assert_eq!(fine, 0.0);
        assert_eq!(coarse, 1.0);
        assert_eq!(region_recall(&truth, &truth, 1).unwrap(), Some(1.0));
        let empty = Raster::filled(grid(), 0u8, None);
        assert_eq!(region_recall(&pred, &empty, 2).unwrap(), None);
    }

    #[test]
    fn coarser_recall_can_drop() {
        // Three hits in one block and one miss in another: 3/4 fine, 1/2 coarse.
        let g = GeoGrid::new(0.0, 0.0, 1.0, 2, 4).unwrap();
        let truth = Raster::new(g, vec![1, 1, 0, 1, 1, 0, 0, 0], None).unwrap();
        let pred = Raster::new(g, vec![1, 1, 0, 0, 1, 0, 0, 0], None).unwrap();
        assert_eq!(region_recall(&pred, &truth, 1).unwrap(), Some(0.75));
        assert_eq!(region_recall(&pred, &truth, 2).unwrap(), Some(0.5));
    }

    #[test]
    fn household_at_cell_centre_matches() {
        let g = grid();
        let mut built = Raster::filled(g, 0u8, None);
        built.set(3, 4, 1);
        let c = household_coincidence(&[g.cell_center(3, 4)], &built, 0.0).unwrap();
        assert_eq!(c.fraction, 1.0);
        assert_eq!(c.distances_m, vec![Some(0.0)]);
    }

    #[test]
    fn household_200m_away_is_unmatched() {
        let g = grid();
        let mut built = Raster::filled(g, 0u8, None);
        built.set(3, 4, 1);
        let centre = g.cell_center(3, 4);
        // 200 m due north.
        let dlat = (0.2 / crate::geo::EARTH_RADIUS_KM).to_degrees();
        let p = GeoPoint::new(centre.lat + dlat, centre.lon).unwrap();
        let c = household_coincidence(&[p], &built, 100.0).unwrap();
        assert_eq!(c.matched, 0);
        assert!((c.distances_m[0].unwrap() - 200.0).abs() < 1e-6);
        assert!(household_coincidence(&[], &built, 100.0).is_err());
    }

    #[test]
    fn no_settlement_means_no_match() {
        let built = Raster::filled(grid(), 0u8, None);
        let c = household_coincidence(&[grid().cell_center(0, 0)], &built, 1e6).unwrap();
        assert_eq!(c.fraction, 0.0);
        assert_eq!(c.distances_m, vec![None]);
    }

    proptest! {
        #[test]
        fn coincidence_matches_all_pairs(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = GeoGrid::new(rng.gen_range(-40.0..40.0), 20.0, 1.0, 32, 32).unwrap();
            let built = Raster::from_fn(g, None, |_, _| u8::from(rng.gen_bool(0.05)));
            let span = 32.0 / 3600.0;
            let pts: Vec<GeoPoint> = (0..40)
                .map(|_| GeoPoint::new(
                    g.origin_lat() - rng.gen_range(0.0..span),
                    20.0 + rng.gen_range(0.0..span),
                ).unwrap())
                .collect();
            let radius = rng.gen_range(0.0..150.0);
            let c = household_coincidence(&pts, &built, radius).unwrap();
            let mut matched = 0;
            for p in &pts {
                let hit = (0..32).any(|r| (0..32).any(|col| {
                    built.get(r, col) == 1
                        && geodesic_distance_km(*p, g.cell_center(r, col)) * 1000.0 <= radius
                }));
                matched += usize::from(hit);
            }
            prop_assert_eq!(c.matched, matched);
            let wider = household_coincidence(&pts, &built, radius + 50.0).unwrap();
            prop_assert!(wider.fraction >= c.fraction);
        }

        #[test]
        fn scores_are_order_invariant(v in prop::collection::vec((any::<bool>(), any::<bool>()), 1..64)) {
            let (p, t): (Vec<bool>, Vec<bool>) = v.iter().copied().unzip();
            let a = precision_recall(&p, &t).unwrap();
            let (p2, t2): (Vec<bool>, Vec<bool>) = v.iter().rev().copied().unzip();
            let b = precision_recall(&p2, &t2).unwrap();
            prop_assert_eq!(a, b);
            for s in [a.precision, a.recall].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
