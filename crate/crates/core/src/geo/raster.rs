use std::fmt::Debug;

use crate::error::{Error, Result};

use super::grid::GeoGrid;

/// Default nodata sentinel for real-valued rasters.
pub const NODATA: f64 = -9999.0;

/// Scalar types that can live in a [`Raster`] and round-trip through text.
pub trait Cell: Copy + PartialEq + Debug + Send + Sync + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Cell for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl Cell for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Cell for u8 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as u8
    }
}

impl Cell for u32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as u32
    }
}

impl Cell for i64 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as i64
    }
}

/// Dense row-major grid of values anchored to a [`GeoGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    grid: GeoGrid,
    values: Vec<T>,
    nodata: Option<T>,
}

/// 0/1 settlement flags (or any other mask).
pub type Binary = Raster<u8>;

impl<T: Cell> Raster<T> {
    pub fn new(grid: GeoGrid, values: Vec<T>, nodata: Option<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "raster of {}x{} needs {} values, got {}",
                grid.rows(),
                grid.cols(),
                grid.len(),
                values.len()
            )));
        }
        Ok(Raster {
            grid,
            values,
            nodata,
        })
    }

    pub fn filled(grid: GeoGrid, value: T, nodata: Option<T>) -> Self {
        Raster {
            grid,
            values: vec![value; grid.len()],
            nodata,
        }
    }

    pub fn from_fn(grid: GeoGrid, nodata: Option<T>, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for r in 0..grid.rows() {
            for c in 0..grid.cols() {
                values.push(f(r, c));
            }
        }
        Raster {
            grid,
            values,
            nodata,
        }
    }

    pub fn grid(&self) -> &GeoGrid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.grid.rows()
    }

    pub fn cols(&self) -> usize {
        self.grid.cols()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn nodata(&self) -> Option<T> {
        self.nodata
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[self.grid.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, v: T) {
        let i = self.grid.index(row, col);
        self.values[i] = v;
    }

    pub fn is_nodata(&self, v: T) -> bool {
        match self.nodata {
            Some(nd) => v == nd || (v.to_f64().is_nan() && nd.to_f64().is_nan()),
            None => false,
        }
    }

    /// Value at a cell, or `None` for nodata.
    pub fn valid(&self, row: usize, col: usize) -> Option<T> {
        let v = self.get(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn map<U: Cell>(&self, nodata: Option<U>, f: impl Fn(T) -> U) -> Raster<U> {
        let values = self
            .values
            .iter()
            .map(|&v| match nodata {
                Some(nd) if self.is_nodata(v) => nd,
                _ => f(v),
            })
            .collect();
        Raster {
            grid: self.grid,
            values,
            nodata,
        }
    }

    /// Sum of all valid cells, accumulated in row-major order.
    pub fn sum(&self) -> f64 {
        self.values
            .iter()
            .filter(|&&v| !self.is_nodata(v))
            .map(|&v| v.to_f64())
            .sum()
    }

    pub fn count_where(&self, pred: impl Fn(T) -> bool) -> usize {
        self.values
            .iter()
            .filter(|&&v| !self.is_nodata(v) && pred(v))
            .count()
    }

    pub fn ensure_same_grid<U: Cell>(&self, other: &Raster<U>, what: &str) -> Result<()> {
        self.grid.ensure_same(&other.grid, what)
    }
}

impl Raster<u8> {
    /// True for cells holding a nonzero, valid value.
    pub fn is_set(&self, row: usize, col: usize) -> bool {
        self.valid(row, col).is_some_and(|v| v != 0)
    }

    /// Mask of cells where `f` holds; nodata maps to 0.
    pub fn mask_from<T: Cell>(r: &Raster<T>, f: impl Fn(T) -> bool) -> Binary {
        let values = r
            .values()
            .iter()
            .map(|&v| u8::from(!r.is_nodata(v) && f(v)))
            .collect();
        Raster {
            grid: *r.grid(),
            values,
            nodata: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    Sum,
    Mean,
    Max,
    /// Share of valid cells whose value is nonzero.
    FractionTrue,
}

/// Combine `factor x factor` blocks into one coarse cell.
///
/// Ragged edges are padded with nodata; blocks with no valid cell become
/// [`NODATA`]. Sums are accumulated row-major inside each block.
pub fn aggregate<T: Cell>(r: &Raster<T>, factor: usize, mode: AggregateMode) -> Result<Raster<f64>> {
    let coarse = r.grid().coarsen(factor)?;
    let mut out = vec![NODATA; coarse.len()];
    let has_nodata = r.nodata().is_some();
    for cr in 0..coarse.rows() {
        for cc in 0..coarse.cols() {
            let mut acc = 0.0;
            let mut max = f64::NEG_INFINITY;
            let mut n = 0usize;
            let mut set = 0usize;
            for row in cr * factor..((cr + 1) * factor).min(r.rows()) {
                for col in cc * factor..((cc + 1) * factor).min(r.cols()) {
                    let v = r.get(row, col);
                    if has_nodata && r.is_nodata(v) {
                        continue;
                    }
                    let v = v.to_f64();
                    n += 1;
                    acc += v;
                    max = max.max(v);
                    if v != 0.0 {
                        set += 1;
                    }
                }
            }
            if n == 0 {
                continue;
            }
            out[coarse.index(cr, cc)] = match mode {
                AggregateMode::Sum => acc,
                AggregateMode::Mean => acc / n as f64,
                AggregateMode::Max => max,
                AggregateMode::FractionTrue => set as f64 / n as f64,
            };
        }
    }
    Raster::new(coarse, out, Some(NODATA))
}
