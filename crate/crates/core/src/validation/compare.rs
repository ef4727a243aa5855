use crate::error::Result;
use crate::geo::{connected_components, Binary, Connectivity, Raster};

/// Cell counts per presence code `a<<2 | b<<1 | c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgreementTable {
    pub counts: [u64; 8],
}

impl AgreementTable {
    pub fn code_label(code: usize) -> String {
        format!("{:03b}", code)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, a: bool, b: bool, c: bool) -> u64 {
        self.counts[(usize::from(a) << 2) | (usize::from(b) << 1) | usize::from(c)]
    }
}

/// A connected area where the first dataset disagrees with both others.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disagreement {
    pub cells: usize,
    /// Whether the first dataset marks the area settled.
    pub a_settled: bool,
    /// Inclusive `(row_min, col_min, row_max, col_max)`.
    pub bbox: (usize, usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossComparison {
    pub table: AgreementTable,
    /// Largest first.
    pub disagreements: Vec<Disagreement>,
}

/// Compare three settlement layers cell by cell. Cells that are nodata in
/// any layer are left out.
pub fn cross_compare(a: &Binary, b: &Binary, c: &Binary) -> Result<CrossComparison> {
    a.ensure_same_grid(b, "second dataset")?;
    a.ensure_same_grid(c, "third dataset")?;
    let mut table = AgreementTable::default();
    let mut odd = vec![0u8; a.values().len()];
    for (i, ((&x, &y), &z)) in a.values().iter().zip(b.values()).zip(c.values()).enumerate() {
        if a.is_nodata(x) || b.is_nodata(y) || c.is_nodata(z) {
            continue;
        }
        let (x, y, z) = (x != 0, y != 0, z != 0);
        table.counts[(usize::from(x) << 2) | (usize::from(y) << 1) | usize::from(z)] += 1;
        odd[i] = u8::from(x != y && x != z);
    }
    let odd = Raster::new(*a.grid(), odd, None)?;
    let comps = connected_components(&odd, Connectivity::Eight);
    let cols = a.cols();
    let mut disagreements: Vec<Disagreement> = (0..comps.count)
        .map(|i| Disagreement {
            cells: comps.sizes[i],
            a_settled: false,
            bbox: (usize::MAX, usize::MAX, 0, 0),
        })
        .collect();
    for (i, &l) in comps.labels.values().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (r, col) = (i / cols, i % cols);
        let d = &mut disagreements[l as usize - 1];
        d.a_settled = a.values()[i] != 0;
        d.bbox = (d.bbox.0.min(r), d.bbox.1.min(col), d.bbox.2.max(r), d.bbox.3.max(col));
    }
    disagreements.sort_by_key(|d| std::cmp::Reverse(d.cells));
    Ok(CrossComparison { table, disagreements })
}
