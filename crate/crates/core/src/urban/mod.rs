//! Urban clusters on a ~1 km grid and the population distance-to-cluster
//! distribution.

mod cdf;
mod clusters;

pub use cdf::{distance_cdf, CdfScope, DistanceCdf, PERCENTILES};
pub use clusters::{find_urban_clusters, Cluster, ClusterMap, ClusterParams, KM_FACTOR};
