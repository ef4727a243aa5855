//! Raster to PPM rendering with a fixed colour table per style.
//!
//! | style            | value mapping                                  |
//! |------------------|------------------------------------------------|
//! | `binary`         | 0 background, any nonzero value `SETTLED`      |
//! | `fraction`       | `t = v / max` on the ramp                      |
//! | `population-log` | `t = ln(1 + v) / ln(1 + max)` on the ramp      |
//! | `clusters`       | 0 background, label `k` palette `(k - 1) % 10` |
//!
//! The ramp runs through five stops whose channels never increase, so a
//! larger value is always drawn darker. Nodata and non-finite cells are grey.
//! Negative values count as 0.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geo::Raster;

pub type Rgb = [u8; 3];

pub const BACKGROUND: Rgb = [255, 255, 217];
pub const SETTLED: Rgb = [189, 0, 38];
pub const NODATA_COLOR: Rgb = [128, 128, 128];
pub const RAMP: [Rgb; 5] = [
    [255, 255, 217],
    [199, 233, 180],
    [65, 182, 170],
    [34, 94, 168],
    [8, 29, 88],
];
pub const PALETTE: [Rgb; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Binary,
    Fraction,
    PopulationLog,
    Clusters,
}

impl FromStr for Style {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Style::Binary),
            "fraction" => Ok(Style::Fraction),
            "population-log" => Ok(Style::PopulationLog),
            "clusters" => Ok(Style::Clusters),
            _ => Err(Error::Config(format!(
                "unknown render style `{s}` (binary, fraction, population-log, clusters)"
            ))),
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::Binary => "binary",
            Style::Fraction => "fraction",
            Style::PopulationLog => "population-log",
            Style::Clusters => "clusters",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Binary `P6` encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }
}

/// Colour at `t` in [0, 1] along the ramp.
pub fn ramp(t: f64) -> Rgb {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let pos = t * (RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(RAMP.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    std::array::from_fn(|k| (a[k] as f64 + f * (b[k] as f64 - a[k] as f64)).round() as u8)
}

fn valid(r: &Raster<f64>, v: f64) -> Option<f64> {
    (!r.is_nodata(v) && v.is_finite()).then_some(v.max(0.0))
}

fn max_value(r: &Raster<f64>) -> f64 {
    r.values().iter().filter_map(|&v| valid(r, v)).fold(0.0, f64::max)
}

fn color(style: Style, v: f64, max: f64) -> Rgb {
    match style {
        Style::Binary => {
            if v != 0.0 {
                SETTLED
            } else {
                BACKGROUND
            }
        }
        Style::Fraction => ramp(if max > 0.0 { v / max } else { 0.0 }),
        Style::PopulationLog => ramp(if max > 0.0 { v.ln_1p() / max.ln_1p() } else { 0.0 }),
        Style::Clusters => {
            if v < 1.0 {
                BACKGROUND
            } else {
                PALETTE[(v as usize - 1) % PALETTE.len()]
            }
        }
    }
}

/// Draw each cell as a `scale x scale` block.
pub fn render(r: &Raster<f64>, style: Style, scale: usize) -> Image {
    let scale = scale.max(1);
    let max = max_value(r);
    let (w, h) = (r.cols() * scale, r.rows() * scale);
    let mut rgb = Vec::with_capacity(3 * w * h);
    for row in 0..r.rows() {
        let line: Vec<u8> = (0..r.cols())
            .flat_map(|col| {
                let c = valid(r, r.get(row, col)).map_or(NODATA_COLOR, |v| color(style, v, max));
                std::iter::repeat_n(c, scale).flatten()
            })
            .collect();
        for _ in 0..scale {
            rgb.extend_from_slice(&line);
        }
    }
    Image { width: w, height: h, rgb }
}

fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Text legend describing how `r` was coloured.
pub fn legend(r: &Raster<f64>, style: Style) -> String {
    let max = max_value(r);
    let mut s = format!("style {style}\nnodata {}\n", hex(NODATA_COLOR));
    match style {
        Style::Binary => {
            s.push_str(&format!("0 {}\nsettled {}\n", hex(BACKGROUND), hex(SETTLED)));
        }
        Style::Fraction | Style::PopulationLog => {
            let log = style == Style::PopulationLog;
            s.push_str(&format!(
                "scale {}\nmax {max}\n",
                if log { "t = ln(1 + v) / ln(1 + max)" } else { "t = v / max" }
            ));
            for k in 0..=4 {
                let t = k as f64 / 4.0;
                let v = if log { (t * max.ln_1p()).exp_m1() } else { t * max };
                s.push_str(&format!("t {t:.2} value {v:.6} {}\n", hex(ramp(t))));
            }
        }
        Style::Clusters => {
            s.push_str(&format!("0 {}\n", hex(BACKGROUND)));
            let top = max as usize;
            for k in 1..=top.min(PALETTE.len()) {
                s.push_str(&format!("{k} {}\n", hex(PALETTE[k - 1])));
            }
            if top > PALETTE.len() {
                s.push_str(&format!("labels above {} repeat the palette\n", PALETTE.len()));
            }
        }
    }
    s
}

/// Legend path next to an image: `map.ppm` gets `map.legend.txt`.
pub fn legend_path(image: &Path) -> PathBuf {
    image.with_extension("legend.txt")
}

/// Write the PPM and its legend; returns the legend path.
pub fn render_to_file(r: &Raster<f64>, style: Style, scale: usize, path: &Path) -> Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, render(r, style, scale).to_ppm()).map_err(|e| Error::io(path, e))?;
    let lp = legend_path(path);
    fs::write(&lp, legend(r, style)).map_err(|e| Error::io(&lp, e))?;
    Ok(lp)
}
