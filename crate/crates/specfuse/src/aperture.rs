//! Filter-bank construction and colored coded-aperture pattern design for
//! the two acquisition arms.
//!
//! Each pixel of an arm receives a seeded random permutation of the filter
//! identities, truncated to the snapshot count, so no filter repeats at a
//! pixel and (at full coverage) every filter is seen exactly once.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::{FilterBank, PatternCube};
use crate::error::{Error, Result};

/// Everything needed to simulate the dual-arm system: the two filter banks
/// and the per-arm pattern cubes.
///
/// The multispectral arm works on the full spatial grid (`scene_rows` x
/// `scene_cols`, `ms_snapshots` snapshots); the hyperspectral arm works on
/// the spatially decimated grid (`scene_rows/p` x `scene_cols/p`,
/// `hs_snapshots` snapshots).
#[derive(Debug, Clone)]
pub struct ApertureDesign {
    pub hs_bank: FilterBank,
    pub ms_bank: FilterBank,
    pub hs_patterns: PatternCube,
    pub ms_patterns: PatternCube,
    pub q: usize,
    pub p: usize,
    pub seed: u64,
}

impl ApertureDesign {
    /// Number of fused feature bands (one per hyperspectral filter).
    pub fn feature_bands(&self) -> usize {
        self.hs_bank.count()
    }

    pub fn scene_rows(&self) -> usize {
        self.ms_patterns.rows()
    }

    pub fn scene_cols(&self) -> usize {
        self.ms_patterns.cols()
    }

    pub fn hs_snapshots(&self) -> usize {
        self.hs_patterns.snapshots()
    }

    pub fn ms_snapshots(&self) -> usize {
        self.ms_patterns.snapshots()
    }
}

/// Contiguous partition of `bands` spectral bands into `count` equal filters:
/// filter i passes bands i*(bands/count) .. (i+1)*(bands/count) (0-based).
pub fn box_filter_bank(bands: usize, count: usize) -> Result<FilterBank> {
    if count == 0 || bands == 0 {
        return Err(Error::Config(
            "filter bank needs positive band and filter counts".into(),
        ));
    }
    if !bands.is_multiple_of(count) {
        return Err(Error::Config(format!(
            "filter count {count} does not divide band count {bands}"
        )));
    }
    let width = bands / count;
    let mut responses = vec![0u8; bands * count];
    for i in 0..count {
        for l in i * width..(i + 1) * width {
            responses[l + i * bands] = 1;
        }
    }
    FilterBank::new(bands, count, responses)
}

/// Coarse bank whose filter i is the sum of `q` consecutive fine filters
/// (i*q .. i*q+q-1, 0-based). Non-overlap of the fine bank keeps the result
/// binary.
pub fn coarsen_filter_bank(fine: &FilterBank, q: usize) -> Result<FilterBank> {
    if q == 0 {
        return Err(Error::Config("grouping factor must be positive".into()));
    }
    if !fine.count().is_multiple_of(q) {
        return Err(Error::Config(format!(
            "grouping factor {q} does not divide filter count {}",
            fine.count()
        )));
    }
    let bands = fine.bands();
    let count = fine.count() / q;
    let mut responses = vec![0u8; bands * count];
    for i in 0..count {
        for a in 0..q {
            let src = i * q + a;
            for l in 0..bands {
                if fine.passes(src, l) {
                    responses[l + i * bands] = 1;
                }
            }
        }
    }
    FilterBank::new(bands, count, responses)
}

/// One independent, reproducible RNG stream per pixel.
fn pixel_rng(seed: u64, m: usize, n: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(m as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(n as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Per-pixel filter schedule: the first `snapshots` entries of a seeded
/// random permutation of {1..=filter_count}, independently per pixel.
pub fn design_patterns(
    rows: usize,
    cols: usize,
    snapshots: usize,
    filter_count: usize,
    seed: u64,
) -> Result<PatternCube> {
    if snapshots > filter_count {
        return Err(Error::Config(format!(
            "snapshot count {snapshots} exceeds filter count {filter_count}; \
             each pixel can use a filter at most once"
        )));
    }
    if rows == 0 || cols == 0 || snapshots == 0 {
        return Err(Error::Config(
            "pattern grid and snapshot count must be positive".into(),
        ));
    }
    let mut indices = vec![0u32; rows * cols * snapshots];
    let mut perm: Vec<u32> = (1..=filter_count as u32).collect();
    for n in 0..cols {
        for m in 0..rows {
            let mut rng = pixel_rng(seed, m, n);
            perm.sort_unstable();
            perm.shuffle(&mut rng);
            for (k, &s) in perm.iter().take(snapshots).enumerate() {
                indices[m + n * rows + k * rows * cols] = s;
            }
        }
    }
    PatternCube::new(rows, cols, snapshots, filter_count, indices)
}

/// Designs both arms for a scene of `rows` x `cols` pixels and `bands`
/// spectral bands, with spectral grouping factor `q` and spatial decimation
/// factor `p`.
///
/// Defaults reproduce full coverage: the hyperspectral bank has bands/q
/// filters and as many snapshots, the multispectral arm groups them by `q`
/// into (bands/q)/q filters with (bands/q)/q snapshots. Pass `hs_snapshots`
/// or `ms_snapshots` to measure fewer snapshots than filters.
#[allow(clippy::too_many_arguments)]
pub fn design_dual_apertures_with(
    rows: usize,
    cols: usize,
    bands: usize,
    q: usize,
    p: usize,
    hs_snapshots: Option<usize>,
    ms_snapshots: Option<usize>,
    seed: u64,
) -> Result<ApertureDesign> {
    if q == 0 || p == 0 {
        return Err(Error::Config("q and p must be positive".into()));
    }
    if !bands.is_multiple_of(q) {
        return Err(Error::Config(format!(
            "spectral factor q={q} does not divide band count {bands}"
        )));
    }
    if !rows.is_multiple_of(p) || !cols.is_multiple_of(p) {
        return Err(Error::Config(format!(
            "spatial factor p={p} does not divide grid {rows}x{cols}"
        )));
    }
    let hs_filters = bands / q;
    if !hs_filters.is_multiple_of(q) {
        return Err(Error::Config(format!(
            "q={q} does not divide the hyperspectral filter count {hs_filters}; \
             the multispectral bank cannot group them"
        )));
    }
    let ms_filters = hs_filters / q;
    let k = hs_snapshots.unwrap_or(hs_filters);
    let w = match ms_snapshots {
        Some(w) => w,
        None => {
            if !k.is_multiple_of(q) {
                return Err(Error::Config(format!(
                    "hs snapshot count {k} is not a multiple of q={q}; \
                     pass an explicit ms snapshot count"
                )));
            }
            (k / q).max(1)
        }
    };
    if k > hs_filters {
        return Err(Error::Config(format!(
            "hs snapshot count {k} exceeds filter count {hs_filters}"
        )));
    }
    if w > ms_filters {
        return Err(Error::Config(format!(
            "ms snapshot count {w} exceeds filter count {ms_filters}"
        )));
    }

    let hs_bank = box_filter_bank(bands, hs_filters)?;
    let ms_bank = coarsen_filter_bank(&hs_bank, q)?;
    // Fixed sub-seed offsets keep the two arms' streams independent.
    let hs_patterns = design_patterns(rows / p, cols / p, k, hs_filters, seed)?;
    let ms_patterns = design_patterns(rows, cols, w, ms_filters, seed.wrapping_add(1))?;
    Ok(ApertureDesign {
        hs_bank,
        ms_bank,
        hs_patterns,
        ms_patterns,
        q,
        p,
        seed,
    })
}

/// [`design_dual_apertures_with`] at the full-coverage defaults.
pub fn design_dual_apertures(
    rows: usize,
    cols: usize,
    bands: usize,
    q: usize,
    p: usize,
    seed: u64,
) -> Result<ApertureDesign> {
    design_dual_apertures_with(rows, cols, bands, q, p, None, None, seed)
}
