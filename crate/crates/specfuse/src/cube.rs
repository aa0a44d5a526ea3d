//! Core value types: spectral cubes, filter banks, coded-aperture pattern
//! cubes, and label maps.
//!
//! All rasters share one linear layout: band-sequential, column-major within
//! a band. In 1-based notation the element (m, n, b) of an M x N x B cube
//! lives at index m + (n-1)*M + (b-1)*M*N. The Rust API is 0-based; file
//! formats and error messages use the 1-based convention.

use crate::error::{Error, Result};

/// Real-valued 3-D raster (rows x cols x bands) holding scenes, features,
/// or measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<f64>,
}

impl SpectralCube {
    /// Builds a cube from flat data in the documented linear order.
    /// Rejects length mismatches and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::Dimension(format!(
                "cube dimensions must be positive, got {rows}x{cols}x{bands}"
            )));
        }
        let expect = rows * cols * bands;
        if data.len() != expect {
            return Err(Error::Dimension(format!(
                "cube data length {} does not match {rows}x{cols}x{bands} = {expect}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "cube entry at linear index {} (1-based) is not finite",
                i + 1
            )));
        }
        Ok(SpectralCube {
            rows,
            cols,
            bands,
            data,
        })
    }

    /// All-zero cube.
    pub fn zeros(rows: usize, cols: usize, bands: usize) -> Self {
        SpectralCube::from_vec(rows, cols, bands, vec![0.0; rows * cols * bands])
            .expect("zero cube is always valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Linear index of (m, n, b), all 0-based.
    #[inline]
    pub fn index(&self, m: usize, n: usize, b: usize) -> usize {
        debug_assert!(m < self.rows && n < self.cols && b < self.bands);
        m + n * self.rows + b * self.rows * self.cols
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize, b: usize) -> f64 {
        self.data[self.index(m, n, b)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, b: usize, v: f64) {
        let i = self.index(m, n, b);
        self.data[i] = v;
    }

    /// Flat view in the documented linear order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Consumes the cube, returning the flat data.
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Binary optical-filter bank: `bands` x `count` responses whose columns
/// partition the spectrum (non-overlapping, covering every band).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    bands: usize,
    count: usize,
    /// Column-major: responses[l + i*bands] is filter i at band l.
    responses: Vec<u8>,
}

impl FilterBank {
    /// Validates the partition property: every entry 0/1, every filter
    /// nonempty, every band covered by exactly one filter.
    pub fn new(bands: usize, count: usize, responses: Vec<u8>) -> Result<Self> {
        if bands == 0 || count == 0 {
            return Err(Error::Dimension(
                "filter bank dimensions must be positive".into(),
            ));
        }
        if responses.len() != bands * count {
            return Err(Error::Dimension(format!(
                "filter bank response length {} does not match {bands}x{count}",
                responses.len()
            )));
        }
        if responses.iter().any(|&r| r > 1) {
            return Err(Error::Data("filter responses must be binary".into()));
        }
        for i in 0..count {
            if (0..bands).all(|l| responses[l + i * bands] == 0) {
                return Err(Error::Data(format!("filter {} has empty support", i + 1)));
            }
        }
        for l in 0..bands {
            let row_sum: u32 = (0..count).map(|i| responses[l + i * bands] as u32).sum();
            if row_sum != 1 {
                return Err(Error::Data(format!(
                    "band {} is covered by {} filters; filters must partition the spectrum",
                    l + 1,
                    row_sum
                )));
            }
        }
        Ok(FilterBank {
            bands,
            count,
            responses,
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// True when filter `i` passes band `l` (0-based).
    #[inline]
    pub fn passes(&self, i: usize, l: usize) -> bool {
        self.responses[l + i * self.bands] == 1
    }

    /// 0-based band indices in the support of filter `i`.
    pub fn support(&self, i: usize) -> Vec<usize> {
        (0..self.bands).filter(|&l| self.passes(i, l)).collect()
    }

    /// Raw column-major 0/1 responses.
    pub fn responses(&self) -> &[u8] {
        &self.responses
    }
}

/// Integer raster (rows x cols x snapshots) of per-pixel filter identities,
/// stored 1-based in {1..=filter_count}.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternCube {
    rows: usize,
    cols: usize,
    snapshots: usize,
    filter_count: usize,
    indices: Vec<u32>,
}

impl PatternCube {
    /// Validates the index range, and per-pixel distinctness whenever
    /// `snapshots <= filter_count`.
    pub fn new(
        rows: usize,
        cols: usize,
        snapshots: usize,
        filter_count: usize,
        indices: Vec<u32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || snapshots == 0 || filter_count == 0 {
            return Err(Error::Dimension(
                "pattern cube dimensions must be positive".into(),
            ));
        }
        if indices.len() != rows * cols * snapshots {
            return Err(Error::Dimension(format!(
                "pattern data length {} does not match {rows}x{cols}x{snapshots}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices
            .iter()
            .find(|&&s| s == 0 || s as usize > filter_count)
        {
            return Err(Error::Data(format!(
                "pattern entry {bad} outside filter range 1..={filter_count}"
            )));
        }
        let cube = PatternCube {
            rows,
            cols,
            snapshots,
            filter_count,
            indices,
        };
        if snapshots <= filter_count {
            for m in 0..rows {
                for n in 0..cols {
                    let mut seen = vec![false; filter_count];
                    for k in 0..snapshots {
                        let s = cube.filter_id(m, n, k) as usize - 1;
                        if seen[s] {
                            return Err(Error::Data(format!(
                                "pixel ({}, {}) repeats filter {} across snapshots",
                                m + 1,
                                n + 1,
                                s + 1
                            )));
                        }
                        seen[s] = true;
                    }
                }
            }
        }
        Ok(cube)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn filter_count(&self) -> usize {
        self.filter_count
    }

    /// 1-based filter identity at pixel (m, n), snapshot k (0-based args).
    #[inline]
    pub fn filter_id(&self, m: usize, n: usize, k: usize) -> u32 {
        debug_assert!(m < self.rows && n < self.cols && k < self.snapshots);
        self.indices[m + n * self.rows + k * self.rows * self.cols]
    }

    /// Raw 1-based indices in the documented linear order.
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// Per-pixel class labels; 0 marks an unlabeled pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    rows: usize,
    cols: usize,
    class_count: u32,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(rows: usize, cols: usize, class_count: u32, labels: Vec<u32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(
                "label map dimensions must be positive".into(),
            ));
        }
        if labels.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "label data length {} does not match {rows}x{cols}",
                labels.len()
            )));
        }
        if class_count == 0 {
            return Err(Error::Data("label map needs at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&z| z > class_count) {
            return Err(Error::Data(format!(
                "label {bad} exceeds class count {class_count}"
            )));
        }
        if labels.iter().all(|&z| z == 0) {
            return Err(Error::Data("label map has no labeled pixels".into()));
        }
        Ok(LabelMap {
            rows,
            cols,
            class_count,
            labels,
        })
    }

    /// Infers the class count from the largest label present.
    pub fn from_labels(rows: usize, cols: usize, labels: Vec<u32>) -> Result<Self> {
        let max = labels.iter().copied().max().unwrap_or(0);
        LabelMap::new(rows, cols, max, labels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    /// Label at (m, n), 0-based coordinates; 0 means unlabeled.
    #[inline]
    pub fn label(&self, m: usize, n: usize) -> u32 {
        self.labels[m + n * self.rows]
    }

    /// Raw labels in column-major order.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// (m, n, class) triples for every labeled pixel, column-major order.
    pub fn labeled_pixels(&self) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for n in 0..self.cols {
            for m in 0..self.rows {
                let z = self.label(m, n);
                if z != 0 {
                    out.push((m, n, z));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_matches_convention() {
        // (m=2, n=1, b=2) in 1-based notation sits at 2 + 0 + 4 = 6.
        let cube = SpectralCube::zeros(2, 2, 2);
        assert_eq!(cube.index(1, 0, 1), 5); // 0-based: 6 - 1
    }

    #[test]
    fn single_pixel_two_bands_flattens_in_band_order() {
        let cube = SpectralCube::from_vec(1, 1, 2, vec![3.0, 7.0]).unwrap();
        assert_eq!(cube.data(), &[3.0, 7.0]);
        assert_eq!(cube.get(0, 0, 0), 3.0);
        assert_eq!(cube.get(0, 0, 1), 7.0);
    }

    #[test]
    fn two_rows_single_band_flattens_in_row_order() {
        let cube = SpectralCube::from_vec(2, 1, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(cube.data(), &[1.0, 2.0]);
        assert_eq!(cube.get(0, 0, 0), 1.0);
        assert_eq!(cube.get(1, 0, 0), 2.0);
    }

    #[test]
    fn vector_round_trip_is_identity() {
        let data: Vec<f64> = (0..24).map(|i| i as f64 * 0.37 - 2.0).collect();
        let cube = SpectralCube::from_vec(4, 3, 2, data.clone()).unwrap();
        assert_eq!(cube.clone().into_vec(), data);
        let back = SpectralCube::from_vec(4, 3, 2, cube.into_vec()).unwrap();
        assert_eq!(back.data(), &data[..]);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(matches!(
            SpectralCube::from_vec(2, 2, 2, vec![0.0; 5]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_vector_gives_zero_cube() {
        let cube = SpectralCube::from_vec(2, 2, 2, vec![0.0; 8]).unwrap();
        assert!(cube.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        assert!(SpectralCube::from_vec(1, 1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(SpectralCube::from_vec(1, 1, 2, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn filter_bank_requires_partition() {
        // Two filters over two bands, each covering one band: valid.
        assert!(FilterBank::new(2, 2, vec![1, 0, 0, 1]).is_ok());
        // Overlapping support: band 1 covered twice.
        assert!(FilterBank::new(2, 2, vec![1, 0, 1, 1]).is_err());
        // Uncovered band.
        assert!(FilterBank::new(2, 2, vec![1, 0, 0, 0]).is_err());
    }

    #[test]
    fn filter_bank_support_lists_band_indices() {
        let bank = FilterBank::new(4, 2, vec![1, 1, 0, 0, 0, 0, 1, 1]).unwrap();
        assert_eq!(bank.support(0), vec![0, 1]);
        assert_eq!(bank.support(1), vec![2, 3]);
        assert!(bank.passes(1, 3));
        assert!(!bank.passes(0, 2));
    }

    #[test]
    fn pattern_cube_rejects_out_of_range_and_repeats() {
        assert!(PatternCube::new(1, 1, 2, 3, vec![1, 4]).is_err());
        assert!(PatternCube::new(1, 1, 2, 3, vec![0, 1]).is_err());
        assert!(PatternCube::new(1, 1, 2, 3, vec![2, 2]).is_err());
        assert!(PatternCube::new(1, 1, 2, 3, vec![2, 3]).is_ok());
    }

    #[test]
    fn label_map_requires_a_labeled_pixel_and_valid_range() {
        assert!(LabelMap::new(2, 2, 2, vec![0, 0, 0, 0]).is_err());
        assert!(LabelMap::new(2, 2, 2, vec![0, 3, 0, 0]).is_err());
        let map = LabelMap::new(2, 2, 2, vec![0, 1, 2, 0]).unwrap();
        assert_eq!(map.labeled_pixels(), vec![(1, 0, 1), (0, 1, 2)]);
    }

    #[test]
    fn from_labels_infers_class_count() {
        let map = LabelMap::from_labels(2, 2, vec![0, 1, 3, 0]).unwrap();
        assert_eq!(map.class_count(), 3);
    }
}
