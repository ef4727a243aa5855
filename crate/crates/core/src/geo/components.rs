use std::str::FromStr;

use crate::error::Error;

use super::raster::{Binary, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::Config(format!("connectivity must be 4 or 8, got `{other}`"))),
        }
    }
}

/// Labelled components of a binary raster.
#[derive(Debug, Clone)]
pub struct Components {
    /// 0 for background, 1..=count for components in raster-scan order of
    /// their first cell.
    pub labels: Raster<u32>,
    pub count: usize,
    /// Cell count per component, indexed by `label - 1`.
    pub sizes: Vec<usize>,
}

/// Label the nonzero cells of `mask` by flood fill.
pub fn connected_components(mask: &Binary, connectivity: Connectivity) -> Components {
    let (rows, cols) = (mask.rows(), mask.cols());
    let mut labels = vec![0u32; rows * cols];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    let offsets = connectivity.offsets();

    for start in 0..rows * cols {
        if labels[start] != 0 || !mask.is_set(start / cols, start % cols) {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = ((i / cols) as isize, (i % cols) as isize);
            for &(dr, dc) in offsets {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                let j = nr * cols + nc;
                if labels[j] == 0 && mask.is_set(nr, nc) {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }

    Components {
        labels: Raster::new(*mask.grid(), labels, None).expect("same grid"),
        count: sizes.len(),
        sizes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoGrid;

    fn mask(rows: usize, cols: usize, cells: &[(usize, usize)]) -> Binary {
        let g = GeoGrid::new(0.0, 0.0, 1.0, rows, cols).unwrap();
        let mut m = Raster::filled(g, 0u8, None);
        for &(r, c) in cells {
            m.set(r, c, 1);
        }
        m
    }

    #[test]
    fn plus_sign_is_one_component() {
        let m = mask(3, 3, &[(0, 1), (1, 0), (1, 1), (1, 2), (2, 1)]);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.count, 1);
        assert_eq!(cc.sizes, vec![5]);
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = mask(2, 2, &[(0, 0), (1, 1)]);
        assert_eq!(connected_components(&m, Connectivity::Four).count, 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).count, 1);
    }

    #[test]
    fn labels_are_dense_in_scan_order() {
        let m = mask(3, 4, &[(0, 3), (2, 0), (2, 1)]);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.labels.get(0, 3), 1);
        assert_eq!(cc.labels.get(2, 0), 2);
        assert_eq!(cc.labels.get(1, 1), 0);
    }

    #[test]
    fn parses_connectivity() {
        assert_eq!("4".parse::<Connectivity>().unwrap(), Connectivity::Four);
        assert_eq!(" 8".parse::<Connectivity>().unwrap(), Connectivity::Eight);
        assert!("6".parse::<Connectivity>().is_err());
    }
}
