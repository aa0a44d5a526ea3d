//! Stage runner: design -> simulate -> fuse -> classify, with every
//! intermediate artifact written to the output directory.
//!
//! A `manifest.toml` in the output directory records the config hash, a
//! resolved copy of the config, and one record per completed stage. Running
//! a stage again with the same config is a no-op when its artifacts are
//! already present. A changed config invalidates all stage records, so
//! stale artifacts are never mixed into new runs. The manifest is written
//! only after a stage's artifacts, so an interrupted stage never corrupts
//! the records of earlier ones.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aperture::{design_dual_apertures_with, ApertureDesign};
use crate::classifier::{init_network, metrics, split_train_test, ClassificationScores};
use crate::config::{PipelineConfig, SceneConfig};
use crate::cube::{LabelMap, SpectralCube};
use crate::error::{Error, Result};
use crate::io;
use crate::operators::{build_h_hs, build_h_ms, stack_projections, DifferenceOperator, WaveletOperator};
use crate::scene::generate_scene;
use crate::sensing::{
    acquire_chsi, acquire_cmsi, add_gaussian_noise, add_poisson_noise, poisson_scale_for_snr,
    NoiseKind, NoiseSpec,
};
use crate::solver::fuse;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SCENE_HEADER: &str = "scene.toml";
pub const SCENE_DATA: &str = "scene.raw";
pub const LABELS_FILE: &str = "labels.csv";
pub const HS_BANK_FILE: &str = "hs_bank.csv";
pub const MS_BANK_FILE: &str = "ms_bank.csv";
pub const HS_PATTERNS_HEADER: &str = "hs_patterns.toml";
pub const HS_PATTERNS_DATA: &str = "hs_patterns.raw";
pub const MS_PATTERNS_HEADER: &str = "ms_patterns.toml";
pub const MS_PATTERNS_DATA: &str = "ms_patterns.raw";
pub const Y_MS_HEADER: &str = "y_ms.toml";
pub const Y_MS_DATA: &str = "y_ms.raw";
pub const Y_HS_HEADER: &str = "y_hs.toml";
pub const Y_HS_DATA: &str = "y_hs.raw";
pub const FEATURES_HEADER: &str = "features.toml";
pub const FEATURES_DATA: &str = "features.raw";
pub const CONVERGENCE_FILE: &str = "convergence.toml";
pub const NETWORK_FILE: &str = "network.bin";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub scene_rows: usize,
    pub scene_cols: usize,
    pub scene_bands: usize,
    pub feature_bands: usize,
    pub hs_filters: usize,
    pub ms_filters: usize,
    pub hs_snapshots: usize,
    pub ms_snapshots: usize,
    /// Feature channels kept per scene band: 1/q.
    pub spectral_rate: f64,
    /// Measured pixels per scene pixel in the hs arm: 1/p^2.
    pub spatial_rate: f64,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRecord {
    pub ms_measurements: usize,
    pub hs_measurements: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson_alpha_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson_alpha_hs: Option<f64>,
    pub artifacts: Vec<String>,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseRecord {
    pub iterations: usize,
    pub converged: bool,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rho: f64,
    pub beta: f64,
    pub final_objective: f64,
    pub final_rel_change: f64,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRecord {
    pub train_pixels: usize,
    pub test_pixels: usize,
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
    pub artifacts: Vec<String>,
}

/// Held-out evaluation written to `metrics.toml`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub train_pixels: usize,
    pub test_pixels: usize,
    pub final_loss: f64,
    pub scores: ClassificationScores,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fuse: Option<FuseRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyRecord>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct StageOutcome<T> {
    pub record: T,
    pub cached: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub design: StageOutcome<DesignRecord>,
    pub simulate: StageOutcome<SimulateRecord>,
    pub fuse: StageOutcome<FuseRecord>,
    pub classify: StageOutcome<ClassifyRecord>,
}

/// Loads the manifest for this config, dropping all stage records when the
/// stored hash differs so stale artifacts are never reused.
fn open_manifest(config: &PipelineConfig, out: &Path) -> Result<Manifest> {
    let hash = config.sha256_hex()?;
    let path = out.join(MANIFEST_FILE);
    if path.exists() {
        let stored: Manifest = io::read_toml(&path)?;
        if stored.config_sha256 == hash {
            return Ok(stored);
        }
    }
    Ok(Manifest {
        config_sha256: hash,
        config: config.clone(),
        ..Manifest::default()
    })
}

fn save_manifest(manifest: &Manifest, out: &Path) -> Result<()> {
    io::write_toml(manifest, &out.join(MANIFEST_FILE))
}

fn artifacts_present(out: &Path, names: &[String]) -> bool {
    names.iter().all(|n| out.join(n).exists())
}

fn require_artifact(out: &Path, name: &str, produced_by: &str) -> Result<PathBuf> {
    let path = out.join(name);
    if !path.exists() {
        return Err(Error::MissingInput(format!(
            "{} not found; run the {produced_by} stage first",
            path.display()
        )));
    }
    Ok(path)
}

fn scene_dims(config: &PipelineConfig) -> Result<(usize, usize, usize)> {
    match &config.scene {
        SceneConfig::Synthetic {
            rows, cols, bands, ..
        } => Ok((*rows, *cols, *bands)),
        SceneConfig::Files { cube, .. } => {
            let header: io::CubeHeader = io::read_toml(cube)?;
            header.validate()?;
            config.validate_scene_dims(header.rows, header.cols, header.bands)?;
            Ok((header.rows, header.cols, header.bands))
        }
    }
}

fn scene_data_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

/// Loads the scene cube and, when available, its label map.
fn load_scene(config: &PipelineConfig) -> Result<(SpectralCube, Option<LabelMap>)> {
    match &config.scene {
        SceneConfig::Synthetic {
            rows,
            cols,
            bands,
            classes,
            seed,
        } => {
            let (cube, map) = generate_scene(*rows, *cols, *bands, *classes, *seed)?;
            Ok((cube, Some(map)))
        }
        SceneConfig::Files { cube, labels } => {
            let scene = io::read_cube(cube, &scene_data_path(cube))?;
            config.validate_scene_dims(scene.rows(), scene.cols(), scene.bands())?;
            let map = match labels {
                Some(path) => {
                    let map = io::read_labels(path)?;
                    if map.rows() != scene.rows() || map.cols() != scene.cols() {
                        return Err(Error::Dimension(format!(
                            "label map {}x{} does not match scene {}x{}",
                            map.rows(),
                            map.cols(),
                            scene.rows(),
                            scene.cols()
                        )));
                    }
                    Some(map)
                }
                None => None,
            };
            Ok((scene, map))
        }
    }
}

fn load_design(config: &PipelineConfig, out: &Path) -> Result<ApertureDesign> {
    let hs_bank = io::read_bank(&require_artifact(out, HS_BANK_FILE, "design")?)?;
    let ms_bank = io::read_bank(&require_artifact(out, MS_BANK_FILE, "design")?)?;
    let hs_patterns = io::read_patterns(
        &require_artifact(out, HS_PATTERNS_HEADER, "design")?,
        &require_artifact(out, HS_PATTERNS_DATA, "design")?,
    )?;
    let ms_patterns = io::read_patterns(
        &require_artifact(out, MS_PATTERNS_HEADER, "design")?,
        &require_artifact(out, MS_PATTERNS_DATA, "design")?,
    )?;
    Ok(ApertureDesign {
        hs_bank,
        ms_bank,
        hs_patterns,
        ms_patterns,
        q: config.design.q,
        p: config.design.p,
        seed: config.design.seed,
    })
}

pub fn run_design(config: &PipelineConfig) -> Result<StageOutcome<DesignRecord>> {
    config.validate()?;
    let out = config.output.dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut manifest = open_manifest(config, &out)?;
    if let Some(record) = &manifest.design {
        if artifacts_present(&out, &record.artifacts) {
            return Ok(StageOutcome {
                record: record.clone(),
                cached: true,
            });
        }
    }

    let (rows, cols, bands) = scene_dims(config)?;
    let design = design_dual_apertures_with(
        rows,
        cols,
        bands,
        config.design.q,
        config.design.p,
        config.design.hs_snapshots,
        config.design.ms_snapshots,
        config.design.seed,
    )?;
    io::write_bank(&design.hs_bank, &out.join(HS_BANK_FILE))?;
    io::write_bank(&design.ms_bank, &out.join(MS_BANK_FILE))?;
    io::write_patterns(
        &design.hs_patterns,
        &out.join(HS_PATTERNS_HEADER),
        &out.join(HS_PATTERNS_DATA),
    )?;
    io::write_patterns(
        &design.ms_patterns,
        &out.join(MS_PATTERNS_HEADER),
        &out.join(MS_PATTERNS_DATA),
    )?;

    let record = DesignRecord {
        scene_rows: rows,
        scene_cols: cols,
        scene_bands: bands,
        feature_bands: design.feature_bands(),
        hs_filters: design.hs_bank.count(),
        ms_filters: design.ms_bank.count(),
        hs_snapshots: design.hs_snapshots(),
        ms_snapshots: design.ms_snapshots(),
        spectral_rate: 1.0 / config.design.q as f64,
        spatial_rate: 1.0 / (config.design.p * config.design.p) as f64,
        artifacts: vec![
            HS_BANK_FILE.into(),
            MS_BANK_FILE.into(),
            HS_PATTERNS_HEADER.into(),
            HS_PATTERNS_DATA.into(),
            MS_PATTERNS_HEADER.into(),
            MS_PATTERNS_DATA.into(),
        ],
    };
    manifest.design = Some(record.clone());
    save_manifest(&manifest, &out)?;
    Ok(StageOutcome {
        record,
        cached: false,
    })
}

fn apply_noise(y: &SpectralCube, noise: &NoiseSpec, seed: u64) -> Result<SpectralCube> {
    match noise.kind {
        NoiseKind::None => Ok(y.clone()),
        NoiseKind::Gaussian => add_gaussian_noise(y, noise.snr_db.unwrap_or(f64::INFINITY), seed),
        NoiseKind::Poisson => add_poisson_noise(y, noise.snr_db.unwrap_or(f64::INFINITY), seed),
    }
}

fn measurement_provenance(arm: &str, noise: &NoiseSpec, alpha: Option<f64>) -> BTreeMap<String, String> {
    let mut p = BTreeMap::new();
    p.insert("kind".into(), "measurements".into());
    p.insert("arm".into(), arm.into());
    p.insert(
        "noise".into(),
        match noise.kind {
            NoiseKind::None => "none".into(),
            NoiseKind::Gaussian => "gaussian".into(),
            NoiseKind::Poisson => "poisson".into(),
        },
    );
    if let Some(snr) = noise.snr_db {
        p.insert("snr_db".into(), format!("{snr}"));
    }
    if noise.kind != NoiseKind::None {
        p.insert("noise_seed".into(), format!("{}", noise.seed));
    }
    if let Some(a) = alpha {
        p.insert("poisson_alpha".into(), format!("{a}"));
    }
    p
}

pub fn run_simulate(config: &PipelineConfig) -> Result<StageOutcome<SimulateRecord>> {
    config.validate()?;
    let out = config.output.dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut manifest = open_manifest(config, &out)?;
    if let Some(record) = &manifest.simulate {
        if artifacts_present(&out, &record.artifacts) {
            return Ok(StageOutcome {
                record: record.clone(),
                cached: true,
            });
        }
    }
    if manifest.design.is_none() {
        require_artifact(&out, HS_BANK_FILE, "design")?;
        return Err(Error::MissingInput(
            "the design stage has not been run for this config".into(),
        ));
    }

    let design = load_design(config, &out)?;
    let (scene, labels) = load_scene(config)?;
    if scene.rows() != design.scene_rows()
        || scene.cols() != design.scene_cols()
        || scene.bands() != design.hs_bank.bands()
    {
        return Err(Error::Dimension(format!(
            "scene {}x{}x{} does not match the designed apertures {}x{}x{}",
            scene.rows(),
            scene.cols(),
            scene.bands(),
            design.scene_rows(),
            design.scene_cols(),
            design.hs_bank.bands()
        )));
    }

    let mut artifacts: Vec<String> = Vec::new();
    if matches!(config.scene, SceneConfig::Synthetic { .. }) {
        let mut prov = BTreeMap::new();
        prov.insert("kind".into(), "scene".into());
        prov.insert("source".into(), "synthetic".into());
        io::write_cube_with_provenance(&scene, &out.join(SCENE_HEADER), &out.join(SCENE_DATA), prov)?;
        let map = labels
            .as_ref()
            .expect("synthetic scenes always carry labels");
        io::write_labels(map, &out.join(LABELS_FILE))?;
        artifacts.extend([SCENE_HEADER.into(), SCENE_DATA.into(), LABELS_FILE.into()]);
    }

    let clean_ms = acquire_cmsi(&scene, &design.ms_bank, &design.ms_patterns)?;
    let clean_hs = acquire_chsi(&scene, &design.hs_bank, &design.hs_patterns, design.p)?;
    let noise = config.noise;
    let (alpha_ms, alpha_hs) = match (noise.kind, noise.snr_db) {
        (NoiseKind::Poisson, Some(snr)) if snr.is_finite() => (
            poisson_scale_for_snr(&clean_ms, snr),
            poisson_scale_for_snr(&clean_hs, snr),
        ),
        _ => (None, None),
    };
    let y_ms = apply_noise(&clean_ms, &noise, noise.seed)?;
    let y_hs = apply_noise(&clean_hs, &noise, noise.seed.wrapping_add(1))?;

    io::write_cube_with_provenance(
        &y_ms,
        &out.join(Y_MS_HEADER),
        &out.join(Y_MS_DATA),
        measurement_provenance("ms", &noise, alpha_ms),
    )?;
    io::write_cube_with_provenance(
        &y_hs,
        &out.join(Y_HS_HEADER),
        &out.join(Y_HS_DATA),
        measurement_provenance("hs", &noise, alpha_hs),
    )?;
    artifacts.extend([
        Y_MS_HEADER.into(),
        Y_MS_DATA.into(),
        Y_HS_HEADER.into(),
        Y_HS_DATA.into(),
    ]);

    let record = SimulateRecord {
        ms_measurements: y_ms.data().len(),
        hs_measurements: y_hs.data().len(),
        poisson_alpha_ms: alpha_ms,
        poisson_alpha_hs: alpha_hs,
        artifacts,
        noise,
    };
    manifest.simulate = Some(record.clone());
    save_manifest(&manifest, &out)?;
    Ok(StageOutcome {
        record,
        cached: false,
    })
}

pub fn run_fuse(config: &PipelineConfig) -> Result<StageOutcome<FuseRecord>> {
    config.validate()?;
    let out = config.output.dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut manifest = open_manifest(config, &out)?;
    if let Some(record) = &manifest.fuse {
        if artifacts_present(&out, &record.artifacts) {
            return Ok(StageOutcome {
                record: record.clone(),
                cached: true,
            });
        }
    }
    if manifest.design.is_none() || manifest.simulate.is_none() {
        return Err(Error::MissingInput(
            "fusion needs the design and simulate stages to have run for this config".into(),
        ));
    }

    let design = load_design(config, &out)?;
    let y_ms = io::read_cube(
        &require_artifact(&out, Y_MS_HEADER, "simulate")?,
        &require_artifact(&out, Y_MS_DATA, "simulate")?,
    )?;
    let y_hs = io::read_cube(
        &require_artifact(&out, Y_HS_HEADER, "simulate")?,
        &require_artifact(&out, Y_HS_DATA, "simulate")?,
    )?;

    let (rows, cols, k) = (
        design.scene_rows(),
        design.scene_cols(),
        design.feature_bands(),
    );
    let h_ms = build_h_ms(&design.ms_patterns, k, design.q)?;
    let h_hs = build_h_hs(&design.hs_patterns, rows, cols, design.p)?;
    let h = stack_projections(&h_ms, &h_hs)?;
    let mut y = y_ms.data().to_vec();
    y.extend_from_slice(y_hs.data());

    let wavelet = WaveletOperator::new(rows, cols, k, config.fusion.wavelet_levels)?;
    let tv = DifferenceOperator::new(rows, cols, k);
    let (features, report) = fuse(&y, &h, &wavelet, &tv, &config.fusion.solver_config())?;

    let mut prov = BTreeMap::new();
    prov.insert("kind".into(), "features".into());
    prov.insert("lambda1".into(), format!("{}", report.lambda1));
    prov.insert("lambda2".into(), format!("{}", report.lambda2));
    prov.insert("iterations".into(), format!("{}", report.iterations));
    io::write_cube_with_provenance(
        &features,
        &out.join(FEATURES_HEADER),
        &out.join(FEATURES_DATA),
        prov,
    )?;
    io::write_toml(&report, &out.join(CONVERGENCE_FILE))?;

    let record = FuseRecord {
        iterations: report.iterations,
        converged: report.converged,
        lambda1: report.lambda1,
        lambda2: report.lambda2,
        rho: report.rho,
        beta: report.beta,
        final_objective: report.final_objective,
        final_rel_change: report.final_rel_change,
        artifacts: vec![
            FEATURES_HEADER.into(),
            FEATURES_DATA.into(),
            CONVERGENCE_FILE.into(),
        ],
    };
    manifest.fuse = Some(record.clone());
    save_manifest(&manifest, &out)?;
    Ok(StageOutcome {
        record,
        cached: false,
    })
}

/// Ground truth for training and scoring: the synthetic labels materialized
/// by the simulate stage, or the configured label file.
fn load_ground_truth(config: &PipelineConfig, out: &Path) -> Result<LabelMap> {
    match &config.scene {
        SceneConfig::Synthetic { .. } => {
            io::read_labels(&require_artifact(out, LABELS_FILE, "simulate")?)
        }
        SceneConfig::Files { labels, .. } => match labels {
            Some(path) => io::read_labels(path),
            None => Err(Error::Config(
                "scene.labels is required to train and score a classifier".into(),
            )),
        },
    }
}

pub fn run_classify(config: &PipelineConfig) -> Result<StageOutcome<ClassifyRecord>> {
    config.validate()?;
    let out = config.output.dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut manifest = open_manifest(config, &out)?;
    if let Some(record) = &manifest.classify {
        if artifacts_present(&out, &record.artifacts) {
            return Ok(StageOutcome {
                record: record.clone(),
                cached: true,
            });
        }
    }
    if manifest.fuse.is_none() {
        return Err(Error::MissingInput(
            "classification needs the fuse stage to have run for this config".into(),
        ));
    }

    let features = io::read_cube(
        &require_artifact(&out, FEATURES_HEADER, "fuse")?,
        &require_artifact(&out, FEATURES_DATA, "fuse")?,
    )?;
    let gt = load_ground_truth(config, &out)?;
    if gt.rows() != features.rows() || gt.cols() != features.cols() {
        return Err(Error::Dimension(format!(
            "label map {}x{} does not match feature cube {}x{}",
            gt.rows(),
            gt.cols(),
            features.rows(),
            features.cols()
        )));
    }

    let c = &config.classifier;
    let split = split_train_test(&gt, c.train_rate, c.seed)?;
    let mut net = init_network(
        features.bands(),
        c.hidden_layers,
        c.hidden_width,
        gt.class_count(),
        c.seed,
    )?;
    let losses = net.train(
        &features,
        &split,
        c.epochs,
        c.learning_rate,
        c.batch_size,
        c.seed,
    )?;
    let predictions = net.predict_map(&features)?;

    let mut held_out = vec![0u32; gt.labels().len()];
    for &(idx, label) in &split.test {
        held_out[idx] = label;
    }
    let gt_test = LabelMap::new(gt.rows(), gt.cols(), gt.class_count(), held_out)?;
    let scores = metrics(&predictions, &gt_test)?;

    io::write_network(&net, &out.join(NETWORK_FILE))?;
    io::write_labels(&predictions, &out.join(PREDICTIONS_FILE))?;
    let report = MetricsReport {
        train_pixels: split.train.len(),
        test_pixels: split.test.len(),
        final_loss: losses.last().copied().unwrap_or(f64::NAN),
        scores: scores.clone(),
    };
    io::write_toml(&report, &out.join(METRICS_FILE))?;

    let record = ClassifyRecord {
        train_pixels: split.train.len(),
        test_pixels: split.test.len(),
        overall_accuracy: scores.overall_accuracy,
        average_accuracy: scores.average_accuracy,
        kappa: scores.kappa,
        artifacts: vec![
            NETWORK_FILE.into(),
            PREDICTIONS_FILE.into(),
            METRICS_FILE.into(),
        ],
    };
    manifest.classify = Some(record.clone());
    save_manifest(&manifest, &out)?;
    Ok(StageOutcome {
        record,
        cached: false,
    })
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary> {
    let design = run_design(config)?;
    let simulate = run_simulate(config)?;
    let fuse = run_fuse(config)?;
    let classify = run_classify(config)?;
    Ok(PipelineSummary {
        design,
        simulate,
        fuse,
        classify,
    })
}
