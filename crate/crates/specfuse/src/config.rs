//! Pipeline configuration: one TOML file drives every stage.
//!
//! Every section and field has a default, so an empty file is a valid
//! config. Unknown keys are rejected so typos surface as config errors
//! instead of silently falling back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sensing::{NoiseKind, NoiseSpec};
use crate::solver::FusionConfig;

/// Where the scene comes from: generated on the fly or loaded from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneConfig {
    Synthetic {
        #[serde(default = "default_scene_rows")]
        rows: usize,
        #[serde(default = "default_scene_rows")]
        cols: usize,
        #[serde(default = "default_scene_bands")]
        bands: usize,
        #[serde(default = "default_scene_classes")]
        classes: u32,
        #[serde(default)]
        seed: u64,
    },
    Files {
        cube: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<PathBuf>,
    },
}

fn default_scene_rows() -> usize {
    64
}

fn default_scene_bands() -> usize {
    16
}

fn default_scene_classes() -> u32 {
    4
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig::Synthetic {
            rows: default_scene_rows(),
            cols: default_scene_rows(),
            bands: default_scene_bands(),
            classes: default_scene_classes(),
            seed: 0,
        }
    }
}

/// Coded-aperture parameters for the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Spectral decimation: bands summed per feature channel.
    pub q: usize,
    /// Spatial decimation: block side of the low-resolution arm.
    pub p: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hs_snapshots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms_snapshots: Option<usize>,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            q: 4,
            p: 4,
            hs_snapshots: None,
            ms_snapshots: None,
            seed: 0,
        }
    }
}

/// Solver parameters plus the sparsifying-transform depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    pub lambda2: f64,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub max_iters: usize,
    pub rel_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    pub record_trace: bool,
    pub wavelet_levels: u32,
}

impl Default for FusionSection {
    fn default() -> Self {
        let solver = FusionConfig::default();
        FusionSection {
            lambda1: solver.lambda1,
            lambda2: solver.lambda2,
            rho: solver.rho,
            beta: solver.beta,
            max_iters: solver.max_iters,
            rel_tol: solver.rel_tol,
            alpha0: solver.alpha0,
            record_trace: solver.record_trace,
            wavelet_levels: 2,
        }
    }
}

impl FusionSection {
    pub fn solver_config(&self) -> FusionConfig {
        FusionConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            rho: self.rho,
            beta: self.beta,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            alpha0: self.alpha0,
            record_trace: self.record_trace,
        }
    }
}

/// Network shape and training schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_layers: 10,
            hidden_width: 10,
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-2,
            train_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    pub design: DesignConfig,
    pub noise: NoiseSpec,
    pub fusion: FusionSection,
    pub classifier: ClassifierConfig,
    pub output: OutputConfig,
}

impl PipelineConfig {
    /// Field-level checks that do not need the scene on disk. Dimension
    /// compatibility for file-backed scenes is checked once the cube header
    /// is read.
    pub fn validate(&self) -> Result<()> {
        if self.design.q == 0 {
            return Err(Error::Config("design.q must be at least 1".into()));
        }
        if self.design.p == 0 {
            return Err(Error::Config("design.p must be at least 1".into()));
        }
        if self.design.hs_snapshots == Some(0) {
            return Err(Error::Config(
                "design.hs_snapshots must be at least 1".into(),
            ));
        }
        if self.design.ms_snapshots == Some(0) {
            return Err(Error::Config(
                "design.ms_snapshots must be at least 1".into(),
            ));
        }

        if let SceneConfig::Synthetic {
            rows,
            cols,
            bands,
            classes,
            ..
        } = self.scene
        {
            if rows == 0 || cols == 0 || bands == 0 {
                return Err(Error::Config(
                    "scene.rows, scene.cols and scene.bands must be positive".into(),
                ));
            }
            if classes < 2 {
                return Err(Error::Config(format!(
                    "scene.classes must be at least 2, got {classes}"
                )));
            }
            self.validate_scene_dims(rows, cols, bands)?;
        }

        match self.noise.kind {
            NoiseKind::None => {}
            NoiseKind::Gaussian | NoiseKind::Poisson => {
                let snr = self.noise.snr_db.ok_or_else(|| {
                    Error::Config("noise.snr_db is required when noise is enabled".into())
                })?;
                if snr.is_nan() {
                    return Err(Error::Config("noise.snr_db must not be NaN".into()));
                }
            }
        }

        self.fusion.solver_config().validate()?;
        if self.fusion.wavelet_levels == 0 {
            return Err(Error::Config(
                "fusion.wavelet_levels must be at least 1".into(),
            ));
        }

        let c = &self.classifier;
        if c.epochs == 0 {
            return Err(Error::Config("classifier.epochs must be at least 1".into()));
        }
        if c.batch_size == 0 {
            return Err(Error::Config(
                "classifier.batch_size must be at least 1".into(),
            ));
        }
        if c.hidden_layers > 0 && c.hidden_width == 0 {
            return Err(Error::Config(
                "classifier.hidden_width must be at least 1".into(),
            ));
        }
        if !c.learning_rate.is_finite() || c.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "classifier.learning_rate must be positive and finite, got {}",
                c.learning_rate
            )));
        }
        if !(c.train_rate > 0.0 && c.train_rate < 1.0) {
            return Err(Error::Config(format!(
                "classifier.train_rate must lie in (0, 1), got {}",
                c.train_rate
            )));
        }
        Ok(())
    }

    /// Compatibility between a scene of the given size and the design,
    /// fusion, and noise sections. Called again by the pipeline for
    /// file-backed scenes once their header is known.
    pub fn validate_scene_dims(&self, rows: usize, cols: usize, bands: usize) -> Result<()> {
        if !bands.is_multiple_of(self.design.q) {
            return Err(Error::Config(format!(
                "scene bands {bands} must be divisible by design.q {}",
                self.design.q
            )));
        }
        if !rows.is_multiple_of(self.design.p) || !cols.is_multiple_of(self.design.p) {
            return Err(Error::Config(format!(
                "scene grid {rows}x{cols} must be divisible by design.p {}",
                self.design.p
            )));
        }
        let div = 1usize << self.fusion.wavelet_levels;
        if !rows.is_multiple_of(div) || !cols.is_multiple_of(div) {
            return Err(Error::Config(format!(
                "scene grid {rows}x{cols} must be divisible by 2^fusion.wavelet_levels = {div}"
            )));
        }
        Ok(())
    }

    /// Deterministic TOML rendering used for hashing and the manifest echo.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("config cannot be rendered as TOML: {e}")))
    }

    pub fn sha256_hex(&self) -> Result<String> {
        let text = self.canonical_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}

/// Reads and parses a config file. Parse failures are config errors (the
/// file exists but says something invalid), not data errors.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
}
