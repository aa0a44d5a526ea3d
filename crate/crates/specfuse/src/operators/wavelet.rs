//! Per-band 2-D orthonormal Haar transform used as the sparsifying basis.
//!
//! Each spectral band is decomposed independently with `levels` dyadic
//! stages; the approximation block shrinks into the top-left corner in the
//! usual pyramid layout. The transform is exactly orthonormal, so the
//! synthesis map is both the inverse and the adjoint of the analysis map.

use crate::error::{Error, Result};

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// One orthonormal Haar butterfly: (a, b) -> ((a+b)/sqrt(2), (a-b)/sqrt(2)).
#[inline]
pub fn haar_pair(a: f64, b: f64) -> (f64, f64) {
    ((a + b) * SQRT_HALF, (a - b) * SQRT_HALF)
}

/// Orthonormal per-band 2-D Haar analysis/synthesis on an M x N x K grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletOperator {
    rows: usize,
    cols: usize,
    bands: usize,
    levels: u32,
}

impl WaveletOperator {
    pub fn new(rows: usize, cols: usize, bands: usize, levels: u32) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::Config(
                "wavelet grid dimensions must be positive".into(),
            ));
        }
        if levels == 0 {
            return Err(Error::Config(
                "wavelet decomposition needs at least one level".into(),
            ));
        }
        let div = 1usize << levels;
        if !rows.is_multiple_of(div) || !cols.is_multiple_of(div) {
            return Err(Error::Config(format!(
                "grid {rows}x{cols} is not divisible by 2^{levels}"
            )));
        }
        Ok(WaveletOperator {
            rows,
            cols,
            bands,
            levels,
        })
    }

    /// Length of both the input vector and the coefficient vector.
    pub fn input_len(&self) -> usize {
        self.rows * self.cols * self.bands
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Analysis step on `take` leading entries of a strided sequence.
    fn step(data: &mut [f64], start: usize, stride: usize, take: usize, scratch: &mut Vec<f64>) {
        let half = take / 2;
        scratch.clear();
        scratch.extend((0..take).map(|t| data[start + t * stride]));
        for t in 0..half {
            let (lo, hi) = haar_pair(scratch[2 * t], scratch[2 * t + 1]);
            data[start + t * stride] = lo;
            data[start + (half + t) * stride] = hi;
        }
    }

    /// Synthesis step: inverse of `step`.
    fn unstep(data: &mut [f64], start: usize, stride: usize, take: usize, scratch: &mut Vec<f64>) {
        let half = take / 2;
        scratch.clear();
        scratch.extend((0..take).map(|t| data[start + t * stride]));
        for t in 0..half {
            let (a, b) = haar_pair(scratch[t], scratch[half + t]);
            data[start + 2 * t * stride] = a;
            data[start + (2 * t + 1) * stride] = b;
        }
    }

    /// c = Psi' x (analysis; coefficient vector, same length as x).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_len() {
            return Err(Error::Dimension(format!(
                "wavelet forward: length {} does not match grid {}",
                x.len(),
                self.input_len()
            )));
        }
        let mut c = x.to_vec();
        let plane = self.rows * self.cols;
        let mut scratch = Vec::with_capacity(self.rows.max(self.cols));
        for b in 0..self.bands {
            let base = b * plane;
            for j in 0..self.levels {
                let mj = self.rows >> j;
                let nj = self.cols >> j;
                // Along rows (stride 1) within each active column.
                for n in 0..nj {
                    Self::step(&mut c, base + n * self.rows, 1, mj, &mut scratch);
                }
                // Along columns (stride = rows) within each active row.
                for m in 0..mj {
                    Self::step(&mut c, base + m, self.rows, nj, &mut scratch);
                }
            }
        }
        Ok(c)
    }

    /// x = Psi c (synthesis; exact inverse of `forward`).
    pub fn inverse(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.input_len() {
            return Err(Error::Dimension(format!(
                "wavelet inverse: length {} does not match grid {}",
                c.len(),
                self.input_len()
            )));
        }
        let mut x = c.to_vec();
        let plane = self.rows * self.cols;
        let mut scratch = Vec::with_capacity(self.rows.max(self.cols));
        for b in 0..self.bands {
            let base = b * plane;
            for j in (0..self.levels).rev() {
                let mj = self.rows >> j;
                let nj = self.cols >> j;
                for m in 0..mj {
                    Self::unstep(&mut x, base + m, self.rows, nj, &mut scratch);
                }
                for n in 0..nj {
                    Self::unstep(&mut x, base + n * self.rows, 1, mj, &mut scratch);
                }
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn haar_pair_of_equal_values_concentrates_energy() {
        let (lo, hi) = haar_pair(1.0, 1.0);
        assert!((lo - std::f64::consts::SQRT_2).abs() <= 1e-15);
        assert_eq!(hi, 0.0);
    }

    #[test]
    fn divisibility_is_enforced() {
        assert!(WaveletOperator::new(6, 8, 2, 1).is_ok());
        assert!(WaveletOperator::new(6, 8, 2, 2).is_err());
        assert!(WaveletOperator::new(8, 8, 1, 0).is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let op = WaveletOperator::new(8, 4, 3, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x: Vec<f64> = (0..op.input_len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let c = op.forward(&x).unwrap();
            let back = op.inverse(&c).unwrap();
            let err = x
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-12);
        }
    }

    #[test]
    fn transform_preserves_l2_norm() {
        let op = WaveletOperator::new(4, 4, 2, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x: Vec<f64> = (0..op.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c = op.forward(&x).unwrap();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nc: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nx - nc).abs() <= 1e-12 * nx.max(1.0));
        }
    }

    #[test]
    fn constant_band_compresses_to_single_coefficient() {
        let op = WaveletOperator::new(4, 4, 1, 2).unwrap();
        let x = vec![1.0; 16];
        let c = op.forward(&x).unwrap();
        // All energy in the level-2 approximation coefficient: sqrt(16) = 4.
        assert!((c[0] - 4.0).abs() <= 1e-12);
        assert!(c[1..].iter().all(|&v| v.abs() <= 1e-12));
    }

    #[test]
    fn synthesis_is_adjoint_of_analysis() {
        let op = WaveletOperator::new(4, 8, 2, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..op.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..op.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fx = op.forward(&x).unwrap();
            let ic = op.inverse(&c).unwrap();
            let lhs: f64 = fx.iter().zip(&c).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&ic).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }
}
