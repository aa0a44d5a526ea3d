//! Linear operators of the fusion problem: the sparse projection matrices
//! tying measurements to fused features, the per-band Haar basis, and the
//! first-order difference (TV) operator.
//!
//! Feature vectors follow the cube layout: band k of the M x N x K feature
//! cube holds the scene's response to hyperspectral filter k, flattened
//! column-major within the band.

mod difference;
mod sparse;
mod wavelet;

pub use difference::DifferenceOperator;
pub use sparse::SparseProjection;
pub use wavelet::{haar_pair, WaveletOperator};

use crate::cube::PatternCube;
use crate::error::{Error, Result};

/// Projection matrix of the multispectral arm: (M*N*W) x (M*N*K).
///
/// The measurement at pixel (m, n), snapshot w selects multispectral filter
/// s = S(m,n,w), which is the sum of hyperspectral filters (s-1)*q+1 ..= s*q,
/// so the row has `q` unit entries, one per constituent feature band.
pub fn build_h_ms(
    patterns: &PatternCube,
    feature_bands: usize,
    q: usize,
) -> Result<SparseProjection> {
    if q == 0 {
        return Err(Error::Config("grouping factor q must be positive".into()));
    }
    if patterns.filter_count() * q != feature_bands {
        return Err(Error::Dimension(format!(
            "ms filter count {} times q={q} must equal feature band count {feature_bands}",
            patterns.filter_count()
        )));
    }
    let (m_rows, n_cols, w) = (patterns.rows(), patterns.cols(), patterns.snapshots());
    let plane = m_rows * n_cols;
    // Iterating snapshot-sequential, column-major emits row u = m + n*M + w*M*N
    // in ascending order, matching the measurement cube layout.
    let mut rows = Vec::with_capacity(plane * w);
    for k in 0..w {
        for n in 0..n_cols {
            for m in 0..m_rows {
                let s = patterns.filter_id(m, n, k) as usize; // 1-based
                let pixel = m + n * m_rows;
                let entries = (0..q)
                    .map(|z| (pixel + ((s - 1) * q + z) * plane, 1.0))
                    .collect();
                rows.push(entries);
            }
        }
    }
    SparseProjection::from_rows(plane * feature_bands, rows)
}

/// Projection matrix of the hyperspectral arm:
/// ((M/p)*(N/p)*K) x (M*N*feature_bands).
///
/// The measurement at decimated pixel (mu, nu), snapshot k averages the p x p
/// block of feature band b = S(mu,nu,k), so the row has p^2 entries of 1/p^2.
pub fn build_h_hs(
    patterns: &PatternCube,
    scene_rows: usize,
    scene_cols: usize,
    p: usize,
) -> Result<SparseProjection> {
    if p == 0 {
        return Err(Error::Config("decimation factor p must be positive".into()));
    }
    if patterns.rows() * p != scene_rows || patterns.cols() * p != scene_cols {
        return Err(Error::Dimension(format!(
            "pattern grid {}x{} times p={p} must equal scene grid {scene_rows}x{scene_cols}",
            patterns.rows(),
            patterns.cols()
        )));
    }
    let (mu_rows, nu_cols, k_snaps) = (patterns.rows(), patterns.cols(), patterns.snapshots());
    let feature_bands = patterns.filter_count();
    let plane = scene_rows * scene_cols;
    let weight = 1.0 / (p * p) as f64;
    let mut rows = Vec::with_capacity(mu_rows * nu_cols * k_snaps);
    for k in 0..k_snaps {
        for nu in 0..nu_cols {
            for mu in 0..mu_rows {
                let b = patterns.filter_id(mu, nu, k) as usize - 1;
                let mut entries = Vec::with_capacity(p * p);
                for c in nu * p..(nu + 1) * p {
                    for r in mu * p..(mu + 1) * p {
                        entries.push((r + c * scene_rows + b * plane, weight));
                    }
                }
                rows.push(entries);
            }
        }
    }
    SparseProjection::from_rows(plane * feature_bands, rows)
}

/// Vertical stack [H_ms; H_hs] acting on the shared feature vector.
pub fn stack_projections(
    h_ms: &SparseProjection,
    h_hs: &SparseProjection,
) -> Result<SparseProjection> {
    SparseProjection::vstack(h_ms, h_hs)
}
