use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

use super::hough::LineSegment;
use super::image::{read_pgm, write_pgm, ImageTile};

/// Side of a classification patch in pixels.
pub const CLASSIFY_PATCH: usize = 64;
/// Side of a segmentation window in pixels.
pub const SEGMENT_PATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Building,
    NoBuilding,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Building => "building",
            Label::NoBuilding => "no_building",
        }
    }

    pub fn target(self) -> f64 {
        match self {
            Label::Building => 1.0,
            Label::NoBuilding => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub pixels: Vec<f64>,
    /// North-west corner of the top-left pixel.
    pub geo_anchor: GeoPoint,
    /// Window position `(row, col)` in units of `size` within its tile.
    pub window: (usize, usize),
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatchSet {
    pub size: usize,
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.patches.iter().filter(|p| p.label == Some(label)).count()
    }
}

fn cut(tile: &ImageTile, size: usize, wr: usize, wc: usize) -> Patch {
    let (x0, y0) = (wc * size, wr * size);
    let mut pixels = Vec::with_capacity(size * size);
    for y in y0..y0 + size {
        let row = &tile.pixels()[y * tile.width() + x0..y * tile.width() + x0 + size];
        pixels.extend_from_slice(row);
    }
    Patch {
        size,
        pixels,
        geo_anchor: tile.grid().cell_corner(y0, x0),
        window: (wr, wc),
        label: None,
    }
}

fn check_size(tile: &ImageTile, size: usize) -> Result<()> {
    if size == 0 || tile.width() < size || tile.height() < size {
        return Err(Error::InvalidArgument(format!(
            "tile {}x{} is smaller than a {size}x{size} patch",
            tile.width(),
            tile.height()
        )));
    }
    Ok(())
}

/// Every complete grid-aligned window of the tile, row-major.
pub fn all_windows(tile: &ImageTile, size: usize) -> Result<PatchSet> {
    check_size(tile, size)?;
    let (nr, nc) = (tile.height() / size, tile.width() / size);
    let patches = (0..nr)
        .flat_map(|r| (0..nc).map(move |c| (r, c)))
        .map(|(r, c)| cut(tile, size, r, c))
        .collect();
    Ok(PatchSet { size, patches })
}

pub fn candidate_patches(tile: &ImageTile, segments: &[LineSegment]) -> Result<PatchSet> {
    candidate_patches_sized(tile, segments, CLASSIFY_PATCH)
}

/// Grid-aligned windows containing at least one segment midpoint,
/// deduplicated, in row-major window order. Midpoints in the ragged
/// right/bottom margin (outside any complete window) are ignored.
pub fn candidate_patches_sized(
    tile: &ImageTile,
    segments: &[LineSegment],
    size: usize,
) -> Result<PatchSet> {
    check_size(tile, size)?;
    let (nr, nc) = (tile.height() / size, tile.width() / size);
    let windows: BTreeSet<(usize, usize)> = segments
        .iter()
        .map(|s| {
            let (x, y) = s.midpoint();
            ((y.floor() as usize) / size, (x.floor() as usize) / size)
        })
        .filter(|&(r, c)| r < nr && c < nc)
        .collect();
    let patches = windows
        .into_iter()
        .map(|(r, c)| cut(tile, size, r, c))
        .collect();
    Ok(PatchSet { size, patches })
}

/// Write `<id>.pgm` files plus `manifest.csv` (`patch_id,lat,lon,label`).
pub fn write_corpus(set: &PatchSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("patch_id,lat,lon,label\n");
    for (i, p) in set.patches.iter().enumerate() {
        let id = format!("{i:06}");
        write_pgm(dir.join(format!("{id}.pgm")), p.size, p.size, &p.pixels, false)?;
        manifest.push_str(&format!(
            "{id},{},{},{}\n",
            p.geo_anchor.lat,
            p.geo_anchor.lon,
            p.label.map(Label::as_str).unwrap_or("")
        ));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn read_corpus(dir: impl AsRef<Path>) -> Result<PatchSet> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.csv");
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let src = path.display().to_string();
    let headers = rdr.headers().map_err(|e| Error::parse(&src, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["patch_id", "lat", "lon", "label"] {
        return Err(Error::parse(&src, 1, "expected header `patch_id,lat,lon,label`"));
    }
    let mut set = PatchSet::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(&src, line, e.to_string()))?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(&src, line, format!("bad coordinate `{s}`")))
        };
        let label = match &rec[3] {
            "building" => Some(Label::Building),
            "no_building" => Some(Label::NoBuilding),
            "" => None,
            other => return Err(Error::parse(&src, line, format!("unknown label `{other}`"))),
        };
        let (w, h, pixels) = read_pgm(dir.join(format!("{}.pgm", &rec[0])))?;
        if w != h || (set.size != 0 && w != set.size) {
            return Err(Error::parse(&src, line, format!("patch {} is {w}x{h}", &rec[0])));
        }
        set.size = w;
        set.patches.push(Patch {
            size: w,
            pixels,
            geo_anchor: GeoPoint {
                lat: num(&rec[1])?,
                lon: num(&rec[2])?,
            },
            window: (0, 0),
            label,
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoGrid;

    fn tile(w: usize, h: usize) -> ImageTile {
        let px = (0..w * h).map(|i| (i % 7) as f64 / 7.0).collect();
        ImageTile::new(GeoGrid::new(1.0, 2.0, 1.0 / 64.0, h, w).unwrap(), px).unwrap()
    }

    fn seg_at(x: usize, y: usize) -> LineSegment {
        LineSegment {
            start: (x - 2, y),
            end: (x + 2, y),
            strength: 5,
        }
    }

    #[test]
    fn no_segments_no_patches() {
        assert!(candidate_patches(&tile(128, 128), &[]).unwrap().is_empty());
    }

    #[test]
    fn midpoint_selects_its_window_once() {
        let t = tile(192, 128);
        let set = candidate_patches(&t, &[seg_at(130, 70), seg_at(140, 80), seg_at(10, 10)]).unwrap();
        let windows: Vec<_> = set.patches.iter().map(|p| p.window).collect();
        assert_eq!(windows, vec![(0, 0), (1, 2)]);
        let p = &set.patches[1];
        assert_eq!(p.pixels.len(), 64 * 64);
        assert_eq!(p.pixels[0], t.get(128, 64));
        assert_eq!(p.geo_anchor, t.grid().cell_corner(64, 128));
    }

    #[test]
    fn small_tile_rejected() {
        assert!(matches!(
            candidate_patches(&tile(63, 100), &[]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = all_windows(&tile(128, 64), 64).unwrap();
        set.patches[0].label = Some(Label::Building);
        set.patches[1].label = Some(Label::NoBuilding);
        write_corpus(&set, dir.path()).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.count_label(Label::Building), 1);
        assert_eq!(back.patches[1].geo_anchor, set.patches[1].geo_anchor);
        for (a, b) in back.patches[0].pixels.iter().zip(&set.patches[0].pixels) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
