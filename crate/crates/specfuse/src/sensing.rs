//! Direct (matrix-free) forward models of the dual-arm imager, ground-truth
//! degradation operators, and measurement noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::aperture::ApertureDesign;
use crate::cube::{FilterBank, PatternCube, SpectralCube};
use crate::error::{Error, Result};

/// Noise applied to a measurement cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
    Poisson,
}

/// Self-describing noise record carried alongside measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            snr_db: None,
            seed: 0,
        }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::none()
    }
}

/// The two arms' measurement cubes plus the design and noise that produced
/// them.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub design: ApertureDesign,
    pub y_ms: SpectralCube,
    pub y_hs: SpectralCube,
    pub noise: NoiseSpec,
}

impl MeasurementSet {
    /// Validates measurement dimensions against the design.
    pub fn new(
        design: ApertureDesign,
        y_ms: SpectralCube,
        y_hs: SpectralCube,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let (m, n, p) = (design.scene_rows(), design.scene_cols(), design.p);
        if y_ms.rows() != m || y_ms.cols() != n || y_ms.bands() != design.ms_snapshots() {
            return Err(Error::Dimension(format!(
                "ms measurements {}x{}x{} do not match design {m}x{n}x{}",
                y_ms.rows(),
                y_ms.cols(),
                y_ms.bands(),
                design.ms_snapshots()
            )));
        }
        if y_hs.rows() != m / p || y_hs.cols() != n / p || y_hs.bands() != design.hs_snapshots() {
            return Err(Error::Dimension(format!(
                "hs measurements {}x{}x{} do not match design {}x{}x{}",
                y_hs.rows(),
                y_hs.cols(),
                y_hs.bands(),
                m / p,
                n / p,
                design.hs_snapshots()
            )));
        }
        Ok(MeasurementSet {
            design,
            y_ms,
            y_hs,
            noise,
        })
    }

    /// Stacked measurement vector [y_ms; y_hs] matching the stacked
    /// projection matrix.
    pub fn stacked_vector(&self) -> Vec<f64> {
        let mut y = self.y_ms.data().to_vec();
        y.extend_from_slice(self.y_hs.data());
        y
    }
}

/// Per-filter scene responses: band i of the output is the scene integrated
/// against filter i. This is the quantity the fusion solver estimates.
pub fn fused_features(scene: &SpectralCube, bank: &FilterBank) -> Result<SpectralCube> {
    if scene.bands() != bank.bands() {
        return Err(Error::Dimension(format!(
            "scene has {} bands but the filter bank expects {}",
            scene.bands(),
            bank.bands()
        )));
    }
    let (rows, cols) = (scene.rows(), scene.cols());
    let mut out = SpectralCube::zeros(rows, cols, bank.count());
    for i in 0..bank.count() {
        for &l in &bank.support(i) {
            for n in 0..cols {
                for m in 0..rows {
                    let v = out.get(m, n, i) + scene.get(m, n, l);
                    out.set(m, n, i, v);
                }
            }
        }
    }
    Ok(out)
}

/// Multispectral-arm acquisition: snapshot w at pixel (m, n) integrates the
/// scene against the multispectral filter chosen by the pattern cube.
pub fn acquire_cmsi(
    scene: &SpectralCube,
    ms_bank: &FilterBank,
    ms_patterns: &PatternCube,
) -> Result<SpectralCube> {
    if scene.bands() != ms_bank.bands() {
        return Err(Error::Dimension(format!(
            "scene has {} bands but the filter bank expects {}",
            scene.bands(),
            ms_bank.bands()
        )));
    }
    if ms_patterns.rows() != scene.rows()
        || ms_patterns.cols() != scene.cols()
        || ms_patterns.filter_count() > ms_bank.count()
    {
        return Err(Error::Dimension(
            "ms pattern cube does not match the scene grid and filter bank".into(),
        ));
    }
    let (rows, cols, w) = (scene.rows(), scene.cols(), ms_patterns.snapshots());
    let mut y = SpectralCube::zeros(rows, cols, w);
    for k in 0..w {
        for n in 0..cols {
            for m in 0..rows {
                let s = ms_patterns.filter_id(m, n, k) as usize - 1;
                let mut acc = 0.0;
                for &l in &ms_bank.support(s) {
                    acc += scene.get(m, n, l);
                }
                y.set(m, n, k, acc);
            }
        }
    }
    Ok(y)
}

/// Hyperspectral-arm acquisition: snapshot k at decimated pixel (mu, nu)
/// averages the p x p block of the scene's response to the chosen filter.
pub fn acquire_chsi(
    scene: &SpectralCube,
    hs_bank: &FilterBank,
    hs_patterns: &PatternCube,
    p: usize,
) -> Result<SpectralCube> {
    if scene.bands() != hs_bank.bands() {
        return Err(Error::Dimension(format!(
            "scene has {} bands but the filter bank expects {}",
            scene.bands(),
            hs_bank.bands()
        )));
    }
    if p == 0 || !scene.rows().is_multiple_of(p) || !scene.cols().is_multiple_of(p) {
        return Err(Error::Dimension(format!(
            "p={p} does not divide the scene grid {}x{}",
            scene.rows(),
            scene.cols()
        )));
    }
    if hs_patterns.rows() * p != scene.rows()
        || hs_patterns.cols() * p != scene.cols()
        || hs_patterns.filter_count() > hs_bank.count()
    {
        return Err(Error::Dimension(
            "hs pattern cube does not match the decimated grid and filter bank".into(),
        ));
    }
    let (mu_rows, nu_cols, k_snaps) = (
        hs_patterns.rows(),
        hs_patterns.cols(),
        hs_patterns.snapshots(),
    );
    let norm = 1.0 / (p * p) as f64;
    let mut y = SpectralCube::zeros(mu_rows, nu_cols, k_snaps);
    for k in 0..k_snaps {
        for nu in 0..nu_cols {
            for mu in 0..mu_rows {
                let s = hs_patterns.filter_id(mu, nu, k) as usize - 1;
                let mut acc = 0.0;
                for &l in &hs_bank.support(s) {
                    for c in nu * p..(nu + 1) * p {
                        for r in mu * p..(mu + 1) * p {
                            acc += scene.get(r, c, l);
                        }
                    }
                }
                y.set(mu, nu, k, acc * norm);
            }
        }
    }
    Ok(y)
}

/// Sums each group of `q` consecutive bands into one output band.
pub fn spectral_decimate(scene: &SpectralCube, q: usize) -> Result<SpectralCube> {
    if q == 0 || !scene.bands().is_multiple_of(q) {
        return Err(Error::Dimension(format!(
            "q={q} does not divide band count {}",
            scene.bands()
        )));
    }
    let (rows, cols) = (scene.rows(), scene.cols());
    let out_bands = scene.bands() / q;
    let mut out = SpectralCube::zeros(rows, cols, out_bands);
    for b in 0..out_bands {
        for a in 0..q {
            for n in 0..cols {
                for m in 0..rows {
                    let v = out.get(m, n, b) + scene.get(m, n, b * q + a);
                    out.set(m, n, b, v);
                }
            }
        }
    }
    Ok(out)
}

/// Replaces every p x p spatial block with its mean, per band.
pub fn spatial_decimate(scene: &SpectralCube, p: usize) -> Result<SpectralCube> {
    if p == 0 || !scene.rows().is_multiple_of(p) || !scene.cols().is_multiple_of(p) {
        return Err(Error::Dimension(format!(
            "p={p} does not divide the scene grid {}x{}",
            scene.rows(),
            scene.cols()
        )));
    }
    let (mu_rows, nu_cols) = (scene.rows() / p, scene.cols() / p);
    let norm = 1.0 / (p * p) as f64;
    let mut out = SpectralCube::zeros(mu_rows, nu_cols, scene.bands());
    for b in 0..scene.bands() {
        for nu in 0..nu_cols {
            for mu in 0..mu_rows {
                let mut acc = 0.0;
                for c in nu * p..(nu + 1) * p {
                    for r in mu * p..(mu + 1) * p {
                        acc += scene.get(r, c, b);
                    }
                }
                out.set(mu, nu, b, acc * norm);
            }
        }
    }
    Ok(out)
}

/// Adds i.i.d. zero-mean Gaussian noise with variance mean(y^2) / 10^(snr/10).
/// An infinite `snr_db` disables the noise.
pub fn add_gaussian_noise(y: &SpectralCube, snr_db: f64, seed: u64) -> Result<SpectralCube> {
    if snr_db.is_nan() {
        return Err(Error::Config("snr_db must not be NaN".into()));
    }
    if snr_db.is_infinite() {
        return Ok(y.clone());
    }
    let power: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / y.data().len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::Config(format!("invalid noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = y
        .data()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    SpectralCube::from_vec(y.rows(), y.cols(), y.bands(), data)
}

/// Photon-limited noise at an explicit scale: y' = Poisson(alpha * y) / alpha.
pub fn add_poisson_noise_with_scale(
    y: &SpectralCube,
    alpha: f64,
    seed: u64,
) -> Result<SpectralCube> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!(
            "poisson scale must be positive and finite, got {alpha}"
        )));
    }
    if let Some(i) = y.data().iter().position(|&v| v < 0.0) {
        return Err(Error::Data(format!(
            "poisson noise requires non-negative intensities; entry {} is negative",
            i + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(y.data().len());
    for &v in y.data() {
        let lambda = alpha * v;
        if lambda == 0.0 {
            data.push(0.0);
        } else {
            let pois = Poisson::new(lambda)
                .map_err(|e| Error::Config(format!("invalid poisson rate {lambda}: {e}")))?;
            data.push(pois.sample(&mut rng) / alpha);
        }
    }
    SpectralCube::from_vec(y.rows(), y.cols(), y.bands(), data)
}

/// Poisson noise at a requested aggregate SNR.
///
/// The photon scale alpha solves mean(alpha*y) = 10^(snr_db/10), i.e. the
/// shot-noise amplitude ratio mean / sqrt(mean) of the scaled intensities
/// matches the requested level. The chosen alpha is what
/// [`poisson_scale_for_snr`] reports, so runs are self-describing.
pub fn add_poisson_noise(y: &SpectralCube, snr_db: f64, seed: u64) -> Result<SpectralCube> {
    if snr_db.is_nan() {
        return Err(Error::Config("snr_db must not be NaN".into()));
    }
    if snr_db.is_infinite() {
        return Ok(y.clone());
    }
    match poisson_scale_for_snr(y, snr_db) {
        Some(alpha) => add_poisson_noise_with_scale(y, alpha, seed),
        None => Ok(y.clone()), // all-zero signal: Poisson(0) is identically 0
    }
}

/// Photon scale used by [`add_poisson_noise`]; `None` for an all-zero cube.
pub fn poisson_scale_for_snr(y: &SpectralCube, snr_db: f64) -> Option<f64> {
    let mean: f64 = y.data().iter().sum::<f64>() / y.data().len() as f64;
    if mean <= 0.0 {
        None
    } else {
        Some(10f64.powf(snr_db / 10.0) / mean)
    }
}
