//! Built-in synthetic scene generator for dataset-free runs.
//!
//! Class regions are Voronoi cells around randomly placed sites (a few per
//! class), so the label map is piecewise constant with irregular borders.
//! Each class has a Gaussian spectral signature bump on a flat floor, and
//! every pixel scales its class signature by a small random brightness
//! factor. All pixels are labeled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::{LabelMap, SpectralCube};
use crate::error::{Error, Result};

const SITES_PER_CLASS: usize = 3;
const BRIGHTNESS_SPREAD: f64 = 0.1;

/// Signature of one class across the bands: 0.2 floor plus a 0.8-high
/// Gaussian bump centered at an evenly spaced per-class position.
pub fn class_signature(bands: usize, classes: u32, class: u32) -> Vec<f64> {
    let center = (class as f64 - 0.5) * bands as f64 / classes as f64;
    let width = bands as f64 / (2.0 * classes as f64);
    (0..bands)
        .map(|l| {
            let d = l as f64 + 0.5 - center;
            0.2 + 0.8 * (-d * d / (2.0 * width * width)).exp()
        })
        .collect()
}

fn voronoi_labels(rows: usize, cols: usize, sites: &[(f64, f64, u32)]) -> Vec<u32> {
    let mut labels = vec![0u32; rows * cols];
    for n in 0..cols {
        for m in 0..rows {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &(sm, sn, _)) in sites.iter().enumerate() {
                let d = (m as f64 - sm) * (m as f64 - sm) + (n as f64 - sn) * (n as f64 - sn);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            labels[m + n * rows] = sites[best].2;
        }
    }
    labels
}

/// Generates a fully labeled scene; deterministic per seed. Every class is
/// guaranteed at least two pixels (sites are redrawn on starvation).
pub fn generate_scene(
    rows: usize,
    cols: usize,
    bands: usize,
    classes: u32,
    seed: u64,
) -> Result<(SpectralCube, LabelMap)> {
    if rows == 0 || cols == 0 || bands == 0 {
        return Err(Error::Config(
            "scene dimensions must be positive".into(),
        ));
    }
    if classes < 2 {
        return Err(Error::Config(format!(
            "a scene needs at least 2 classes, got {classes}"
        )));
    }
    if (rows * cols) < 2 * classes as usize {
        return Err(Error::Config(format!(
            "a {rows}x{cols} grid cannot hold 2 pixels for each of {classes} classes"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::new();
    let mut found = false;
    for _ in 0..100 {
        let sites: Vec<(f64, f64, u32)> = (1..=classes)
            .flat_map(|c| std::iter::repeat_n(c, SITES_PER_CLASS))
            .map(|c| {
                (
                    rng.gen_range(0.0..rows as f64),
                    rng.gen_range(0.0..cols as f64),
                    c,
                )
            })
            .collect();
        labels = voronoi_labels(rows, cols, &sites);
        let mut counts = vec![0usize; classes as usize];
        for &z in &labels {
            counts[(z - 1) as usize] += 1;
        }
        if counts.iter().all(|&c| c >= 2) {
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::Data(format!(
            "could not place {classes} classes with 2+ pixels each on a {rows}x{cols} grid"
        )));
    }

    let signatures: Vec<Vec<f64>> = (1..=classes)
        .map(|c| class_signature(bands, classes, c))
        .collect();
    let mut data = vec![0.0; rows * cols * bands];
    for n in 0..cols {
        for m in 0..rows {
            let pixel = m + n * rows;
            let sig = &signatures[(labels[pixel] - 1) as usize];
            let brightness = 1.0 + rng.gen_range(-BRIGHTNESS_SPREAD..BRIGHTNESS_SPREAD);
            for (b, &s) in sig.iter().enumerate() {
                data[pixel + b * rows * cols] = brightness * s;
            }
        }
    }
    let cube = SpectralCube::from_vec(rows, cols, bands, data)?;
    let map = LabelMap::new(rows, cols, classes, labels)?;
    Ok((cube, map))
}
