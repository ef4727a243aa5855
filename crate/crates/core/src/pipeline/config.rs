use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::allocation::AllocationMethod;
use crate::error::{Error, Result};
use crate::geo::Connectivity;
use crate::kv::KvFile;
use crate::nn::Optimizer;

use super::render::Style;

/// Every setting of a pipeline run. Relative paths are resolved against
/// `base_dir`, the directory holding the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub base_dir: PathBuf,

    pub worldspec: Option<PathBuf>,
    pub imagery_dir: PathBuf,
    pub corpus_dir: PathBuf,
    pub model_file: PathBuf,
    pub census_csv: PathBuf,
    pub admin_file: PathBuf,
    pub fine_census_csv: Option<PathBuf>,
    pub fine_admin_file: Option<PathBuf>,
    pub truth_built: PathBuf,
    pub truth_fraction: PathBuf,
    pub compare_b: Option<PathBuf>,
    pub compare_c: Option<PathBuf>,
    pub households_csv: PathBuf,
    pub output_dir: PathBuf,

    pub corpus_worlds: usize,
    pub corpus_density: f64,
    pub corpus_negatives: usize,

    pub epochs: usize,
    pub feedback_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub init_scale: f64,
    pub optimizer: Optimizer,
    pub momentum: f64,

    pub smooth_radius: usize,
    pub edge_low: f64,
    pub edge_high: f64,
    pub hough_support: usize,
    pub tau: f64,
    pub feedback_passes: usize,
    pub footprint_threshold: f64,

    pub allocation_method: AllocationMethod,

    pub density_min: f64,
    pub pop_min: f64,
    pub connectivity: Connectivity,
    pub km_factor: usize,
    pub bin_km: f64,

    pub household_radius_m: f64,
    pub validation_factor: usize,

    pub render_input: Option<PathBuf>,
    pub render_style: Style,
    pub render_output: Option<PathBuf>,
    pub render_scale: usize,

    /// Worker threads; 0 uses every core. Never changes results.
    pub threads: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            base_dir: PathBuf::from("."),
            worldspec: None,
            imagery_dir: "imagery".into(),
            corpus_dir: "corpus".into(),
            model_file: "model.smv".into(),
            census_csv: "census/coarse.csv".into(),
            admin_file: "census/coarse_admin.asc".into(),
            fine_census_csv: Some("census/fine.csv".into()),
            fine_admin_file: Some("census/fine_admin.asc".into()),
            truth_built: "truth/built.asc".into(),
            truth_fraction: "truth/fraction.asc".into(),
            compare_b: None,
            compare_c: None,
            households_csv: "households.csv".into(),
            output_dir: "out".into(),
            corpus_worlds: 4,
            corpus_density: 0.06,
            corpus_negatives: 3,
            epochs: 15,
            feedback_epochs: 10,
            learning_rate: 0.01,
            batch_size: 8,
            init_scale: 1.0,
            optimizer: Optimizer::Adam,
            momentum: 0.9,
            smooth_radius: 1,
            edge_low: 0.2,
            edge_high: 0.5,
            hough_support: 8,
            tau: 0.5,
            feedback_passes: 2,
            footprint_threshold: 0.5,
            allocation_method: AllocationMethod::Uniform,
            density_min: 300.0,
            pop_min: 5000.0,
            connectivity: Connectivity::Four,
            km_factor: 30,
            bin_km: 1.0,
            household_radius_m: 100.0,
            validation_factor: 2,
            render_input: None,
            render_style: Style::Binary,
            render_output: None,
            render_scale: 4,
            threads: 0,
            seed: 1,
        }
    }
}

const KEYS: &[&str] = &[
    "worldspec",
    "imagery_dir",
    "corpus_dir",
    "model_file",
    "census_csv",
    "admin_file",
    "fine_census_csv",
    "fine_admin_file",
    "truth_built",
    "truth_fraction",
    "compare_b",
    "compare_c",
    "households_csv",
    "output_dir",
    "corpus_worlds",
    "corpus_density",
    "corpus_negatives",
    "epochs",
    "feedback_epochs",
    "learning_rate",
    "batch_size",
    "init_scale",
    "optimizer",
    "momentum",
    "smooth_radius",
    "edge_low",
    "edge_high",
    "hough_support",
    "tau",
    "feedback_passes",
    "footprint_threshold",
    "allocation_method",
    "density_min",
    "pop_min",
    "connectivity",
    "km_factor",
    "bin_km",
    "household_radius_m",
    "validation_factor",
    "render_input",
    "render_style",
    "render_output",
    "render_scale",
    "threads",
    "seed",
];

fn opt_path(kv: &KvFile, key: &str, default: Option<PathBuf>) -> Option<PathBuf> {
    match kv.raw(key) {
        None => default,
        Some("") => None,
        Some(v) => Some(PathBuf::from(v)),
    }
}

fn path(kv: &KvFile, key: &str, default: PathBuf) -> Result<PathBuf> {
    match kv.raw(key) {
        None => Ok(default),
        Some("") => Err(Error::Config(format!("`{key}` must not be empty"))),
        Some(v) => Ok(PathBuf::from(v)),
    }
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl PipelineConfig {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let kv = KvFile::read(path)?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_kv(&kv, base)
    }

    pub fn from_kv(kv: &KvFile, base_dir: impl Into<PathBuf>) -> Result<Self> {
        kv.reject_unknown(KEYS)?;
        let d = PipelineConfig::default();
        let cfg = PipelineConfig {
            base_dir: base_dir.into(),
            worldspec: opt_path(kv, "worldspec", d.worldspec),
            imagery_dir: path(kv, "imagery_dir", d.imagery_dir)?,
            corpus_dir: path(kv, "corpus_dir", d.corpus_dir)?,
            model_file: path(kv, "model_file", d.model_file)?,
            census_csv: path(kv, "census_csv", d.census_csv)?,
            admin_file: path(kv, "admin_file", d.admin_file)?,
            fine_census_csv: opt_path(kv, "fine_census_csv", d.fine_census_csv),
            fine_admin_file: opt_path(kv, "fine_admin_file", d.fine_admin_file),
            truth_built: path(kv, "truth_built", d.truth_built)?,
            truth_fraction: path(kv, "truth_fraction", d.truth_fraction)?,
            compare_b: opt_path(kv, "compare_b", d.compare_b),
            compare_c: opt_path(kv, "compare_c", d.compare_c),
            households_csv: path(kv, "households_csv", d.households_csv)?,
            output_dir: path(kv, "output_dir", d.output_dir)?,
            corpus_worlds: kv.get_or("corpus_worlds", d.corpus_worlds)?,
            corpus_density: kv.get_or("corpus_density", d.corpus_density)?,
            corpus_negatives: kv.get_or("corpus_negatives", d.corpus_negatives)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            feedback_epochs: kv.get_or("feedback_epochs", d.feedback_epochs)?,
            learning_rate: kv.get_or("learning_rate", d.learning_rate)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            init_scale: kv.get_or("init_scale", d.init_scale)?,
            optimizer: kv.get_or("optimizer", d.optimizer)?,
            momentum: kv.get_or("momentum", d.momentum)?,
            smooth_radius: kv.get_or("smooth_radius", d.smooth_radius)?,
            edge_low: kv.get_or("edge_low", d.edge_low)?,
            edge_high: kv.get_or("edge_high", d.edge_high)?,
            hough_support: kv.get_or("hough_support", d.hough_support)?,
            tau: kv.get_or("tau", d.tau)?,
            feedback_passes: kv.get_or("feedback_passes", d.feedback_passes)?,
            footprint_threshold: kv.get_or("footprint_threshold", d.footprint_threshold)?,
            allocation_method: kv.get_or("allocation_method", d.allocation_method)?,
            density_min: kv.get_or("density_min", d.density_min)?,
            pop_min: kv.get_or("pop_min", d.pop_min)?,
            connectivity: kv.get_or("connectivity", d.connectivity)?,
            km_factor: kv.get_or("km_factor", d.km_factor)?,
            bin_km: kv.get_or("bin_km", d.bin_km)?,
            household_radius_m: kv.get_or("household_radius_m", d.household_radius_m)?,
            validation_factor: kv.get_or("validation_factor", d.validation_factor)?,
            render_input: opt_path(kv, "render_input", d.render_input),
            render_style: kv.get_or("render_style", d.render_style)?,
            render_output: opt_path(kv, "render_output", d.render_output),
            render_scale: kv.get_or("render_scale", d.render_scale)?,
            threads: kv.get_or("threads", d.threads)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (k, v) in [
            ("corpus_density", self.corpus_density),
            ("edge_low", self.edge_low),
            ("edge_high", self.edge_high),
            ("tau", self.tau),
            ("footprint_threshold", self.footprint_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{k} = {v} must lie in [0, 1]"));
            }
        }
        if self.edge_low > self.edge_high {
            return bad(format!("edge_low {} exceeds edge_high {}", self.edge_low, self.edge_high));
        }
        for (k, v) in [
            ("epochs", self.epochs),
            ("feedback_epochs", self.feedback_epochs),
            ("batch_size", self.batch_size),
            ("hough_support", self.hough_support),
            ("km_factor", self.km_factor),
            ("validation_factor", self.validation_factor),
            ("render_scale", self.render_scale),
        ] {
            if v == 0 {
                return bad(format!("{k} must be >= 1"));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate {} must be >= 0", self.learning_rate));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return bad(format!("init_scale {} must be > 0", self.init_scale));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must be in [0, 1)", self.momentum));
        }
        if !(self.density_min >= 0.0 && self.pop_min >= 0.0) {
            return bad("density_min and pop_min must be >= 0".into());
        }
        if !(self.bin_km.is_finite() && self.bin_km > 0.0) {
            return bad(format!("bin_km {} must be > 0", self.bin_km));
        }
        if !(self.household_radius_m.is_finite() && self.household_radius_m >= 0.0) {
            return bad(format!("household_radius_m {} must be >= 0", self.household_radius_m));
        }
        Ok(())
    }

    /// Resolve a configured path against the config directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Output directory of one stage.
    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.resolve(&self.output_dir).join(stage)
    }

    /// Canonical `key = value` lines for every setting except `threads`.
    pub fn canonical(&self) -> Vec<(&'static str, String)> {
        let p = |p: &PathBuf| p.display().to_string();
        vec![
            ("worldspec", show(&self.worldspec)),
            ("imagery_dir", p(&self.imagery_dir)),
            ("corpus_dir", p(&self.corpus_dir)),
            ("model_file", p(&self.model_file)),
            ("census_csv", p(&self.census_csv)),
            ("admin_file", p(&self.admin_file)),
            ("fine_census_csv", show(&self.fine_census_csv)),
            ("fine_admin_file", show(&self.fine_admin_file)),
            ("truth_built", p(&self.truth_built)),
            ("truth_fraction", p(&self.truth_fraction)),
            ("compare_b", show(&self.compare_b)),
            ("compare_c", show(&self.compare_c)),
            ("households_csv", p(&self.households_csv)),
            ("output_dir", p(&self.output_dir)),
            ("corpus_worlds", self.corpus_worlds.to_string()),
            ("corpus_density", self.corpus_density.to_string()),
            ("corpus_negatives", self.corpus_negatives.to_string()),
            ("epochs", self.epochs.to_string()),
            ("feedback_epochs", self.feedback_epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("init_scale", self.init_scale.to_string()),
            (
                "optimizer",
                match self.optimizer {
                    Optimizer::Sgd => "sgd",
                    Optimizer::Adam => "adam",
                }
                .into(),
            ),
            ("momentum", self.momentum.to_string()),
            ("smooth_radius", self.smooth_radius.to_string()),
            ("edge_low", self.edge_low.to_string()),
            ("edge_high", self.edge_high.to_string()),
            ("hough_support", self.hough_support.to_string()),
            ("tau", self.tau.to_string()),
            ("feedback_passes", self.feedback_passes.to_string()),
            ("footprint_threshold", self.footprint_threshold.to_string()),
            ("allocation_method", self.allocation_method.to_string()),
            ("density_min", self.density_min.to_string()),
            ("pop_min", self.pop_min.to_string()),
            (
                "connectivity",
                match self.connectivity {
                    Connectivity::Four => "4",
                    Connectivity::Eight => "8",
                }
                .into(),
            ),
            ("km_factor", self.km_factor.to_string()),
            ("bin_km", self.bin_km.to_string()),
            ("household_radius_m", self.household_radius_m.to_string()),
            ("validation_factor", self.validation_factor.to_string()),
            ("render_input", show(&self.render_input)),
            ("render_style", self.render_style.to_string()),
            ("render_output", show(&self.render_output)),
            ("render_scale", self.render_scale.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Flat config text; reading it back gives the same config.
    pub fn to_kv_string(&self) -> String {
        let mut s: String = self
            .canonical()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        s.push_str(&format!("threads = {}\n", self.threads));
        s
    }

    /// SHA-256 of the canonical settings. Thread count is excluded so that
    /// it cannot change stage outputs or their sidecars.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = PipelineConfig::default();
        let kv = KvFile::parse(&cfg.to_kv_string(), "t").unwrap();
        let back = PipelineConfig::from_kv(&kv, ".").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_optional_path_disables_it() {
        let kv = KvFile::parse("fine_census_csv =\ncompare_b = guf.asc", "t").unwrap();
        let cfg = PipelineConfig::from_kv(&kv, ".").unwrap();
        assert_eq!(cfg.fine_census_csv, None);
        assert_eq!(cfg.compare_b, Some(PathBuf::from("guf.asc")));
    }

    #[test]
    fn unknown_and_out_of_range_keys_are_config_errors() {
        for text in ["colour = red", "tau = 1.5", "edge_low = 0.6\nedge_high = 0.5", "epochs = 0", "connectivity = 6"] {
            let kv = KvFile::parse(text, "t").unwrap();
            let err = PipelineConfig::from_kv(&kv, ".").unwrap_err();
            assert_eq!(err.exit_code(), 4, "{text}: {err}");
        }
    }

    #[test]
    fn hash_ignores_threads_only() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { threads: 8, ..a.clone() };
        let c = PipelineConfig { tau: 0.6, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let cfg = PipelineConfig {
            base_dir: PathBuf::from("/data/run"),
            ..Default::default()
        };
        assert_eq!(cfg.resolve(&cfg.model_file), PathBuf::from("/data/run/model.smv"));
        assert_eq!(cfg.resolve(Path::new("/abs/x")), PathBuf::from("/abs/x"));
        assert_eq!(cfg.stage_dir("detect"), PathBuf::from("/data/run/out/detect"));
    }
}
