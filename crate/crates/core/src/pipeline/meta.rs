use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::geo::{write_grid_ascii, Cell, Raster};
use crate::kv::KvFile;

use super::config::PipelineConfig;

/// Files written by one stage plus anything worth telling the user.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageOutput {
    pub stage: &'static str,
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl StageOutput {
    pub fn new(stage: &'static str) -> Self {
        StageOutput {
            stage,
            ..Default::default()
        }
    }

    pub(crate) fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::info!("{}: {msg}", self.stage);
        self.notes.push(msg);
    }

    pub(crate) fn write_text(&mut self, path: PathBuf, text: impl AsRef<[u8]>) -> Result<()> {
        ensure_parent(&path)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    /// Write an ASCII grid and its `.meta` sidecar.
    pub(crate) fn write_raster<T: Cell>(
        &mut self,
        r: &Raster<T>,
        path: PathBuf,
        cfg: &PipelineConfig,
    ) -> Result<()> {
        ensure_parent(&path)?;
        write_grid_ascii(r, &path)?;
        write_sidecar(&path, self.stage, cfg)?;
        self.files.push(path);
        Ok(())
    }
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// `<file>.meta` with the producing stage and the config hash. The creation
/// time is recorded but is not part of the hash.
pub fn write_sidecar(path: &Path, stage: &str, cfg: &PipelineConfig) -> Result<()> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let text = format!(
        "file = {name}\nstage = {stage}\nconfig_hash = {}\ntool = settlemap {}\ncreated_unix = {created}\n",
        cfg.hash(),
        env!("CARGO_PKG_VERSION"),
    );
    let meta = sidecar_path(path);
    fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
}

pub fn read_sidecar(path: &Path) -> Result<KvFile> {
    KvFile::read(sidecar_path(path))
}

/// Fail with an I/O error naming the first path that does not exist.
pub(crate) fn require_files<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "required input is missing"),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoGrid;

    #[test]
    fn raster_gets_sidecar_with_hash() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::default();
        let mut out = StageOutput::new("detect");
        let r = Raster::filled(GeoGrid::new(0.0, 0.0, 1.0, 2, 2).unwrap(), 1.5f64, None);
        let p = dir.path().join("a/b.asc");
        out.write_raster(&r, p.clone(), &cfg).unwrap();
        assert_eq!(out.files, vec![p.clone()]);
        let meta = read_sidecar(&p).unwrap();
        assert_eq!(meta.raw("stage"), Some("detect"));
        assert_eq!(meta.raw("config_hash"), Some(cfg.hash().as_str()));
        assert_eq!(meta.raw("file"), Some("b.asc"));
        assert!(meta.get::<u64>("created_unix").unwrap().is_some());
    }

    #[test]
    fn missing_input_is_io_error() {
        let err = require_files([Path::new("/no/such/file.asc")]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("/no/such/file.asc"));
    }
}
