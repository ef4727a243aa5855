use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{read_grid_ascii, GeoGrid};

/// Grayscale imagery on a pixel-level grid, intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTile {
    grid: GeoGrid,
    pixels: Vec<f64>,
}

impl ImageTile {
    pub fn new(grid: GeoGrid, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "tile of {}x{} needs {} pixels, got {}",
                grid.cols(),
                grid.rows(),
                grid.len(),
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel intensity {bad} outside [0, 1]"
            )));
        }
        Ok(ImageTile { grid, pixels })
    }

    pub fn grid(&self) -> &GeoGrid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.cols()
    }

    pub fn height(&self) -> usize {
        self.grid.rows()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width() + x]
    }

    /// Pixels with an `r`-pixel replicated border; row stride `width + 2r`.
    pub(crate) fn padded(&self, r: usize) -> Vec<f64> {
        let (w, h) = (self.width(), self.height());
        let pw = w + 2 * r;
        let mut out = Vec::with_capacity(pw * (h + 2 * r));
        for y in 0..h + 2 * r {
            let row = &self.pixels[y.saturating_sub(r).min(h - 1) * w..][..w];
            out.extend(std::iter::repeat_n(row[0], r));
            out.extend_from_slice(row);
            out.extend(std::iter::repeat_n(row[w - 1], r));
        }
        out
    }

    /// Copy of the `w x h` window whose top-left pixel is `(x0, y0)`.
    pub fn window(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageTile> {
        if x0 + w > self.width() || y0 + h > self.height() {
            return Err(Error::InvalidArgument(format!(
                "window {w}x{h} at ({x0}, {y0}) leaves {}x{} tile",
                self.width(),
                self.height()
            )));
        }
        let corner = self.grid.cell_corner(y0, x0);
        let grid = GeoGrid::new(corner.lat, corner.lon, self.grid.res_arcsec(), h, w)?;
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let start = y * self.width() + x0;
            pixels.extend_from_slice(&self.pixels[start..start + w]);
        }
        Ok(ImageTile { grid, pixels })
    }
}

/// Read a binary PGM (`P5`, maxval up to 65535) into intensities in [0, 1].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let src = path.display().to_string();
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(&src, 1, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::parse(&src, 1, format!("expected P5 magic, got `{}`", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse(&src, 1, format!("bad header field `{s}`")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(&src, 1, format!("unsupported maxval {maxval}")));
    }
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = w * h * bpp;
    let data = bytes.get(pos..pos + need).ok_or_else(|| {
        Error::parse(&src, 1, format!("expected {need} data bytes for {w}x{h}"))
    })?;
    let scale = maxval as f64;
    let pixels = if bpp == 1 {
        data.iter().map(|&b| (b as f64 / scale).min(1.0)).collect()
    } else {
        data.chunks_exact(2)
            .map(|b| (u16::from_be_bytes([b[0], b[1]]) as f64 / scale).min(1.0))
            .collect()
    };
    Ok((w, h, pixels))
}

/// Write intensities in [0, 1] as an 8-bit (or 16-bit when `deep`) PGM.
pub fn write_pgm(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    pixels: &[f64],
    deep: bool,
) -> Result<()> {
    let path = path.as_ref();
    let maxval: u32 = if deep { 65535 } else { 255 };
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    for &v in pixels {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        if deep {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load a tile from PGM (georeferenced by `grid_hint`) or an ASCII grid.
pub fn read_tile(path: impl AsRef<Path>, grid_hint: Option<GeoGrid>) -> Result<ImageTile> {
    let path = path.as_ref();
    let is_asc = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("asc"));
    if is_asc {
        let r = read_grid_ascii(path)?;
        let pixels = r
            .values()
            .iter()
            .map(|&v| if r.is_nodata(v) { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        return ImageTile::new(*r.grid(), pixels);
    }
    let (w, h, pixels) = read_pgm(path)?;
    let grid = grid_hint.ok_or_else(|| {
        Error::Config(format!("{} has no georeference", path.display()))
    })?;
    if grid.cols() != w || grid.rows() != h {
        return Err(Error::GridMismatch(format!(
            "{} is {w}x{h}, georeference says {}x{}",
            path.display(),
            grid.cols(),
            grid.rows()
        )));
    }
    ImageTile::new(grid, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let px: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        for deep in [false, true] {
            let p = dir.path().join(format!("t{deep}.pgm"));
            write_pgm(&p, 4, 3, &px, deep).unwrap();
            let (w, h, back) = read_pgm(&p).unwrap();
            assert_eq!((w, h), (4, 3));
            let tol = if deep { 1e-5 } else { 0.5 / 255.0 + 1e-12 };
            for (a, b) in back.iter().zip(&px) {
                assert!((a - b).abs() <= tol);
            }
        }
    }

    #[test]
    fn pgm_comment_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        fs::write(&p, &bytes).unwrap();
        assert_eq!(read_pgm(&p).unwrap().2, vec![0.0, 1.0]);
        fs::write(&p, b"P2\n2 1\n255\n0 255\n").unwrap();
        assert!(read_pgm(&p).is_err());
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let g = GeoGrid::new(0.0, 0.0, 0.1, 1, 2).unwrap();
        assert!(ImageTile::new(g, vec![0.0, 1.5]).is_err());
    }
}
