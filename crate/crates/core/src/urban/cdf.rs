use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::clusters::ClusterMap;
use crate::error::{Error, Result};
use crate::geo::{aggregate, distance_to_mask_km, AggregateMode, Raster};

pub const PERCENTILES: [f64; 3] = [0.90, 0.95, 0.99];

/// Which population the distribution is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfScope {
    All,
    /// Population outside every cluster.
    Rural,
}

impl fmt::Display for CdfScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CdfScope::All => "all",
            CdfScope::Rural => "rural",
        })
    }
}

impl FromStr for CdfScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(CdfScope::All),
            "rural" => Ok(CdfScope::Rural),
            _ => Err(Error::InvalidArgument(format!("unknown cdf scope `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCdf {
    pub scope: CdfScope,
    pub bin_km: f64,
    /// Upper bin edges `0, bin, 2*bin, ...`.
    pub edges: Vec<f64>,
    /// Population share at distance `<= edges[i]`.
    pub cumulative: Vec<f64>,
    pub total_population: f64,
    /// `(p, smallest per-cell distance d with share(<= d) >= p)`.
    pub percentiles: Vec<(f64, Option<f64>)>,
}

impl DistanceCdf {
    pub fn percentile(&self, p: f64) -> Option<f64> {
        self.percentiles.iter().find(|x| x.0 == p).and_then(|x| x.1)
    }

    /// `distance_km,cum_population_fraction`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::from("distance_km,cum_population_fraction\n");
        for (e, c) in self.edges.iter().zip(&self.cumulative) {
            s.push_str(&format!("{e},{c}\n"));
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// `p,distance_km`, empty distance when undefined.
    pub fn write_percentiles_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::from("p,distance_km\n");
        for (p, d) in &self.percentiles {
            let d = d.map(|d| d.to_string()).unwrap_or_default();
            s.push_str(&format!("{p},{d}\n"));
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Population-weighted distribution of distance from each km cell centre to
/// the nearest clustered km cell centre.
pub fn distance_cdf(
    pop: &Raster<f64>,
    clusters: &ClusterMap,
    bin_km: f64,
    scope: CdfScope,
) -> Result<DistanceCdf> {
    if !(bin_km > 0.0 && bin_km.is_finite()) {
        return Err(Error::InvalidArgument(format!("bin width must be positive, got {bin_km}")));
    }
    let km_pop = aggregate(pop, clusters.factor, AggregateMode::Sum)?;
    km_pop.ensure_same_grid(&clusters.labels, "cluster map")?;
    let mask = clusters.mask();
    let dist = distance_to_mask_km(&km_pop, &mask)?;

    let mut samples: Vec<(f64, f64)> = Vec::new();
    for ((&p, &d), &label) in km_pop.values().iter().zip(dist.values()).zip(clusters.labels.values()) {
        if km_pop.is_nodata(p) || p <= 0.0 {
            continue;
        }
        if scope == CdfScope::Rural && label != 0 {
            continue;
        }
        samples.push((d, p));
    }

    let nbins = samples
        .iter()
        .map(|&(d, _)| (d / bin_km).ceil() as usize + 1)
        .max()
        .unwrap_or(1);
    let mut mass = vec![0.0; nbins];
    for &(d, p) in &samples {
        mass[(d / bin_km).ceil() as usize] += p;
    }
    let mut running = 0.0;
    let prefix: Vec<f64> = mass
        .iter()
        .map(|m| {
            running += m;
            running
        })
        .collect();
    let total = running;
    let cumulative = if total > 0.0 {
        prefix.iter().map(|c| c / total).collect()
    } else {
        vec![0.0; nbins]
    };
    let edges = (0..nbins).map(|i| i as f64 * bin_km).collect();

    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut exact = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    for &(d, p) in &samples {
        acc += p;
        exact.push((d, acc));
    }
    let sample_total = acc;
    let percentiles = PERCENTILES
        .iter()
        .map(|&q| {
            let d = (sample_total > 0.0)
                .then(|| exact.iter().find(|&&(_, c)| c / sample_total >= q).map(|x| x.0))
                .flatten();
            (q, d)
        })
        .collect();

    Ok(DistanceCdf {
        scope,
        bin_km,
        edges,
        cumulative,
        total_population: total,
        percentiles,
    })
}
