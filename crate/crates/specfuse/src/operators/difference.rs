//! Matrix-free first-order difference operator along the three cube axes,
//! used as the total-variation regularizer.

use crate::error::{Error, Result};

/// First-order differences of an M x N x K cube along rows, columns, and
/// bands. The forward map emits the three difference fields concatenated
/// (3*M*N*K values); positions whose forward neighbor falls outside the
/// grid emit 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferenceOperator {
    rows: usize,
    cols: usize,
    bands: usize,
}

impl DifferenceOperator {
    pub fn new(rows: usize, cols: usize, bands: usize) -> Self {
        DifferenceOperator { rows, cols, bands }
    }

    pub fn input_len(&self) -> usize {
        self.rows * self.cols * self.bands
    }

    pub fn output_len(&self) -> usize {
        3 * self.input_len()
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

    #[inline]
    fn at(&self, m: usize, n: usize, b: usize) -> usize {
        m + n * self.rows + b * self.rows * self.cols
    }

    /// d = Phi x: differences toward the next row, column, and band.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_len() {
            return Err(Error::Dimension(format!(
                "difference forward: length {} does not match grid {}",
                x.len(),
                self.input_len()
            )));
        }
        let len = self.input_len();
        let mut d = vec![0.0; 3 * len];
        for b in 0..self.bands {
            for n in 0..self.cols {
                for m in 0..self.rows {
                    let i = self.at(m, n, b);
                    if m + 1 < self.rows {
                        d[i] = x[i] - x[self.at(m + 1, n, b)];
                    }
                    if n + 1 < self.cols {
                        d[len + i] = x[i] - x[self.at(m, n + 1, b)];
                    }
                    if b + 1 < self.bands {
                        d[2 * len + i] = x[i] - x[self.at(m, n, b + 1)];
                    }
                }
            }
        }
        Ok(d)
    }

    /// x = Phi' d: exact transpose of `forward`.
    pub fn adjoint(&self, d: &[f64]) -> Result<Vec<f64>> {
        if d.len() != self.output_len() {
            return Err(Error::Dimension(format!(
                "difference adjoint: length {} does not match 3*grid {}",
                d.len(),
                self.output_len()
            )));
        }
        let len = self.input_len();
        let mut x = vec![0.0; len];
        for b in 0..self.bands {
            for n in 0..self.cols {
                for m in 0..self.rows {
                    let i = self.at(m, n, b);
                    if m + 1 < self.rows {
                        x[i] += d[i];
                        x[self.at(m + 1, n, b)] -= d[i];
                    }
                    if n + 1 < self.cols {
                        x[i] += d[len + i];
                        x[self.at(m, n + 1, b)] -= d[len + i];
                    }
                    if b + 1 < self.bands {
                        x[i] += d[2 * len + i];
                        x[self.at(m, n, b + 1)] -= d[2 * len + i];
                    }
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
    fn constant_cube_has_zero_differences() {
        let op = DifferenceOperator::new(3, 4, 2);
        let x = vec![2.5; op.input_len()];
        let d = op.forward(&x).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_horizontal_steps_have_l1_norm_two() {
        // 2x2x1 cube, values [[0, 1], [0, 1]] in (row, col) layout.
        let op = DifferenceOperator::new(2, 2, 1);
        let x = vec![0.0, 0.0, 1.0, 1.0]; // column-major: (1,1) (2,1) (1,2) (2,2)
        let d = op.forward(&x).unwrap();
        let l1: f64 = d.iter().map(|v| v.abs()).sum();
        assert_eq!(l1, 2.0);
    }

    #[test]
    fn forward_matches_brute_force_sum_on_3x3x2() {
        let op = DifferenceOperator::new(3, 3, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..op.input_len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let d = op.forward(&x).unwrap();
        let l1: f64 = d.iter().map(|v| v.abs()).sum();

        // Brute-force enumeration of |x(i,j,k) - x(i+1,j,k)| + ... over the grid.
        let at = |m: usize, n: usize, b: usize| x[m + n * 3 + b * 9];
        let mut want = 0.0;
        for b in 0..2 {
            for n in 0..3 {
                for m in 0..3 {
                    if m + 1 < 3 {
                        want += (at(m, n, b) - at(m + 1, n, b)).abs();
                    }
                    if n + 1 < 3 {
                        want += (at(m, n, b) - at(m, n + 1, b)).abs();
                    }
                    if b + 1 < 2 {
                        want += (at(m, n, b) - at(m, n, b + 1)).abs();
                    }
                }
            }
        }
        assert!((l1 - want).abs() <= 1e-12);
    }

    #[test]
    fn adjoint_is_exact_transpose() {
        let op = DifferenceOperator::new(3, 2, 2);
        let n_in = op.input_len();
        let n_out = op.output_len();
        // Build dense Phi column by column, then compare Phi' rows.
        let mut dense = vec![vec![0.0; n_in]; n_out];
        for j in 0..n_in {
            let mut e = vec![0.0; n_in];
            e[j] = 1.0;
            let col = op.forward(&e).unwrap();
            for (i, &v) in col.iter().enumerate() {
                dense[i][j] = v;
            }
        }
        for i in 0..n_out {
            let mut e = vec![0.0; n_out];
            e[i] = 1.0;
            let row = op.adjoint(&e).unwrap();
            for j in 0..n_in {
                assert_eq!(row[j], dense[i][j]);
            }
        }
    }

    #[test]
    fn adjoint_identity_on_random_pairs() {
        let op = DifferenceOperator::new(4, 3, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let x: Vec<f64> = (0..op.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..op.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fx = op.forward(&x).unwrap();
            let ad = op.adjoint(&d).unwrap();
            let lhs: f64 = fx.iter().zip(&d).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&ad).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }
}
