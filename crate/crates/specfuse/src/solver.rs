//! Accelerated ADMM solver for the feature-fusion inverse problem
//!
//!   minimize 0.5*||y - H x||^2 + lambda1*||Psi' x||_1 + lambda2*||Phi x||_1
//!
//! over the flattened feature cube x, where H stacks the two arms'
//! projection matrices, Psi is the orthonormal per-band Haar basis, and Phi
//! is the first-order difference operator.
//!
//! Each iteration evaluates the smooth augmented-term gradient at a momentum
//! blend of the two primal sequences, advances the fast sequence by the
//! gradient over (alpha * beta), and folds it into the averaged sequence,
//! which is equivalent to a step of length 1/beta from the blended point.
//! The auxiliary blocks are then soft-thresholded at the averaged iterate,
//! the scaled duals ascend against those fresh values, and momentum blends
//! of the auxiliaries are maintained as the reported estimates. The averaged
//! sequence is the returned solution.

use serde::{Deserialize, Serialize};

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::operators::{DifferenceOperator, SparseProjection, WaveletOperator};

/// Solver parameters. `lambda1 = None` resolves to 0.001 * max|H'y| at
/// solve time; `beta = None` auto-estimates the step bound by power
/// iteration; `alpha0 = None` starts the momentum schedule at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub lambda1: Option<f64>,
    pub lambda2: f64,
    pub rho: f64,
    pub beta: Option<f64>,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub alpha0: Option<f64>,
    /// Record the objective value after every iteration (costs one extra
    /// operator pass per iteration).
    pub record_trace: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            lambda1: None,
            lambda2: 5e-4,
            rho: 1.0,
            beta: None,
            max_iters: 200,
            rel_tol: 1e-4,
            alpha0: None,
            record_trace: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l1) = self.lambda1 {
            if !(l1 >= 0.0) || !l1.is_finite() {
                return Err(Error::Config(format!(
                    "lambda1 must be finite and non-negative, got {l1}"
                )));
            }
        }
        if !(self.lambda2 >= 0.0) || !self.lambda2.is_finite() {
            return Err(Error::Config(format!(
                "lambda2 must be finite and non-negative, got {}",
                self.lambda2
            )));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::Config(format!("beta must be positive, got {b}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if let Some(a) = self.alpha0 {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config(format!(
                    "alpha0 must lie in (0, 1], got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// What the solver did, with the resolved parameters it used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub final_rel_change: f64,
    /// ||Psi' x - gamma1||_2 at exit.
    pub residual_sparsity: f64,
    /// ||Phi x - gamma2||_2 at exit.
    pub residual_tv: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rho: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

/// Element-wise sign(v) * max(|v| - tau, 0).
pub fn soft_threshold(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!(
            "soft threshold needs tau >= 0, got {tau}"
        )));
    }
    Ok(v.iter()
        .map(|&x| x.signum() * (x.abs() - tau).max(0.0))
        .collect())
}

fn soft_threshold_into(v: &[f64], tau: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(v.iter().map(|&x| x.signum() * (x.abs() - tau).max(0.0)));
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// 0.5*||y - H x||^2 + lambda1*||Psi' x||_1 + lambda2*||Phi x||_1.
pub fn fusion_objective(
    x: &[f64],
    y: &[f64],
    h: &SparseProjection,
    wavelet: &WaveletOperator,
    tv: &DifferenceOperator,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    let hx = h.apply(x)?;
    if hx.len() != y.len() {
        return Err(Error::Dimension(format!(
            "objective: measurement length {} does not match H rows {}",
            y.len(),
            hx.len()
        )));
    }
    let data: f64 = hx
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        * 0.5;
    let sparsity: f64 = wavelet.forward(x)?.iter().map(|v| v.abs()).sum();
    let tv_term: f64 = tv.forward(x)?.iter().map(|v| v.abs()).sum();
    Ok(data + lambda1 * sparsity + lambda2 * tv_term)
}

/// Gradient of the smooth augmented surrogate
///   0.5*||y - H x||^2 + rho/2*||Psi' x - gamma1 + delta1||^2
///                     + rho/2*||Phi  x - gamma2 + delta2||^2
/// at x, namely H'(H x - y) + rho*Psi(Psi' x - gamma1 + delta1)
///            + rho*Phi'(Phi x - gamma2 + delta2).
#[allow(clippy::too_many_arguments)]
pub fn smooth_gradient(
    x: &[f64],
    y: &[f64],
    h: &SparseProjection,
    wavelet: &WaveletOperator,
    tv: &DifferenceOperator,
    gamma1: &[f64],
    delta1: &[f64],
    gamma2: &[f64],
    delta2: &[f64],
    rho: f64,
) -> Result<Vec<f64>> {
    let mut residual = h.apply(x)?;
    for (r, yy) in residual.iter_mut().zip(y) {
        *r -= yy;
    }
    let mut g = h.apply_adjoint(&residual)?;

    let mut coeff = wavelet.forward(x)?;
    for ((c, g1), d1) in coeff.iter_mut().zip(gamma1).zip(delta1) {
        *c = *c - g1 + d1;
    }
    let back = wavelet.inverse(&coeff)?;
    for (gi, b) in g.iter_mut().zip(&back) {
        *gi += rho * b;
    }

    let mut diff = tv.forward(x)?;
    for ((d, g2), d2) in diff.iter_mut().zip(gamma2).zip(delta2) {
        *d = *d - g2 + d2;
    }
    let back = tv.adjoint(&diff)?;
    for (gi, b) in g.iter_mut().zip(&back) {
        *gi += rho * b;
    }
    Ok(g)
}

/// One linearized update: x - g / beta with g the smooth-surrogate gradient.
#[allow(clippy::too_many_arguments)]
pub fn gradient_step(
    x: &[f64],
    y: &[f64],
    h: &SparseProjection,
    wavelet: &WaveletOperator,
    tv: &DifferenceOperator,
    gamma1: &[f64],
    delta1: &[f64],
    gamma2: &[f64],
    delta2: &[f64],
    rho: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let g = smooth_gradient(x, y, h, wavelet, tv, gamma1, delta1, gamma2, delta2, rho)?;
    Ok(x.iter().zip(&g).map(|(xi, gi)| xi - gi / beta).collect())
}

/// Momentum weight for iteration j (0-based): 2 / (j + 2), so the first
/// blend passes the fresh iterate through unchanged.
pub fn alpha_schedule(j: usize) -> f64 {
    2.0 / (j as f64 + 2.0)
}

/// Step bound beta = 1.05 * lambda_max(H'H + rho*I + rho*Phi'Phi), estimated
/// with at least 50 power iterations from a fixed seeded start.
pub fn estimate_step(h: &SparseProjection, tv: &DifferenceOperator, rho: f64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let n = h.cols();
    if tv.input_len() != n {
        return Err(Error::Dimension(format!(
            "step estimate: H cols {} vs difference grid {}",
            n,
            tv.input_len()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5f3759df);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = norm2(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut rayleigh = 0.0;
    for _ in 0..60 {
        let hv = h.apply(&v)?;
        let mut av = h.apply_adjoint(&hv)?;
        let dv = tv.forward(&v)?;
        let dtv = tv.adjoint(&dv)?;
        for ((a, &vi), &d) in av.iter_mut().zip(&v).zip(&dtv) {
            *a += rho * vi + rho * d;
        }
        let na = norm2(&av);
        if na == 0.0 {
            // Operator is identically zero on this start vector.
            rayleigh = 0.0;
            break;
        }
        rayleigh = v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>();
        for (vi, a) in v.iter_mut().zip(&av) {
            *vi = a / na;
        }
    }
    Ok(1.05 * rayleigh.max(f64::MIN_POSITIVE))
}

fn blend_into(acc: &mut [f64], fresh: &[f64], alpha: f64) {
    for (a, f) in acc.iter_mut().zip(fresh) {
        *a = (1.0 - alpha) * *a + alpha * f;
    }
}

fn check_finite(v: &[f64], iteration: usize, what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence {
            iteration,
            detail: format!("non-finite value in {what}"),
        });
    }
    Ok(())
}

/// Runs the accelerated ADMM loop on the stacked measurement vector `y` and
/// returns the fused feature cube (momentum average) plus a report.
///
/// The feature grid is taken from the difference operator; the wavelet
/// operator must agree with it, and `h` must map that grid to `y`.
pub fn fuse(
    y: &[f64],
    h: &SparseProjection,
    wavelet: &WaveletOperator,
    tv: &DifferenceOperator,
    config: &FusionConfig,
) -> Result<(SpectralCube, ConvergenceReport)> {
    config.validate()?;
    let n = tv.input_len();
    if wavelet.input_len() != n {
        return Err(Error::Dimension(format!(
            "wavelet grid {} does not match difference grid {n}",
            wavelet.input_len()
        )));
    }
    if h.cols() != n {
        return Err(Error::Dimension(format!(
            "H has {} columns but the feature grid holds {n} values",
            h.cols()
        )));
    }
    if y.len() != h.rows() {
        return Err(Error::Dimension(format!(
            "measurement vector length {} does not match H rows {}",
            y.len(),
            h.rows()
        )));
    }

    let rho = config.rho;
    let lambda1 = match config.lambda1 {
        Some(l1) => l1,
        None => 0.001 * max_abs(&h.apply_adjoint(y)?),
    };
    let lambda2 = config.lambda2;
    let beta = match config.beta {
        Some(b) => b,
        None => estimate_step(h, tv, rho)?,
    };

    // Fast momentum carrier, averaged estimate, auxiliaries, duals.
    let mut x_fast = vec![0.0; n];
    let mut x_avg = vec![0.0; n];
    let mut gamma1 = vec![0.0; n];
    let mut gamma2 = vec![0.0; tv.output_len()];
    let mut delta1 = vec![0.0; n];
    let mut delta2 = vec![0.0; tv.output_len()];

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut rel_change = f64::INFINITY;

    for j in 0..config.max_iters {
        let alpha = if j == 0 {
            config.alpha0.unwrap_or_else(|| alpha_schedule(0))
        } else {
            alpha_schedule(j)
        };

        // Gradient at the momentum blend of the two primal sequences.
        let mut x_blend = x_avg.clone();
        blend_into(&mut x_blend, &x_fast, alpha);
        let g = smooth_gradient(
            &x_blend, y, h, wavelet, tv, &gamma1, &delta1, &gamma2, &delta2, rho,
        )?;

        // Fast step of length 1/(alpha*beta); folding it into the average
        // equals a step of length 1/beta from the blended point.
        let scale = 1.0 / (alpha * beta);
        for (xf, gi) in x_fast.iter_mut().zip(&g) {
            *xf -= gi * scale;
        }
        check_finite(&x_fast, j + 1, "fast primal sequence")?;
        let x_prev_norm = norm2(&x_avg);
        let dx = alpha
            * x_avg
                .iter()
                .zip(&x_fast)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        blend_into(&mut x_avg, &x_fast, alpha);
        check_finite(&x_avg, j + 1, "averaged primal sequence")?;

        // Proximal updates at the new averaged iterate, then scaled dual
        // ascent.
        let mut arg1 = wavelet.forward(&x_avg)?;
        let coeff = arg1.clone();
        for (a, d) in arg1.iter_mut().zip(&delta1) {
            *a += d;
        }
        soft_threshold_into(&arg1, lambda1 / rho, &mut gamma1);

        let mut arg2 = tv.forward(&x_avg)?;
        let diff = arg2.clone();
        for (a, d) in arg2.iter_mut().zip(&delta2) {
            *a += d;
        }
        soft_threshold_into(&arg2, lambda2 / rho, &mut gamma2);

        for ((d, c), g) in delta1.iter_mut().zip(&coeff).zip(&gamma1) {
            *d += c - g;
        }
        for ((d, c), g) in delta2.iter_mut().zip(&diff).zip(&gamma2) {
            *d += c - g;
        }

        rel_change = if x_prev_norm > 0.0 {
            dx / x_prev_norm
        } else {
            f64::INFINITY
        };
        iterations = j + 1;

        if config.record_trace {
            trace.push(fusion_objective(
                &x_avg, y, h, wavelet, tv, lambda1, lambda2,
            )?);
        }

        if rel_change < config.rel_tol {
            converged = true;
            break;
        }
    }

    // Standard split-feasibility residuals: at a fixed point the
    // auxiliaries agree with the transforms of the estimate.
    let coeff = wavelet.forward(&x_avg)?;
    let diff = tv.forward(&x_avg)?;
    let residual_sparsity = {
        let mut r = coeff;
        for (c, g) in r.iter_mut().zip(&gamma1) {
            *c -= g;
        }
        norm2(&r)
    };
    let residual_tv = {
        let mut r = diff;
        for (c, g) in r.iter_mut().zip(&gamma2) {
            *c -= g;
        }
        norm2(&r)
    };
    let final_objective = fusion_objective(&x_avg, y, h, wavelet, tv, lambda1, lambda2)?;

    let cube = SpectralCube::from_vec(tv.rows(), tv.cols(), tv.bands(), x_avg)?;
    let report = ConvergenceReport {
        iterations,
        converged,
        final_objective,
        final_rel_change: rel_change,
        residual_sparsity,
        residual_tv,
        lambda1,
        lambda2,
        rho,
        beta,
        objective_trace: trace,
    };
    Ok((cube, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::design_dual_apertures;
    use crate::operators::{build_h_hs, build_h_ms, stack_projections};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn build_stack(
        rows: usize,
        cols: usize,
        bands: usize,
        q: usize,
        p: usize,
        seed: u64,
    ) -> (SparseProjection, WaveletOperator, DifferenceOperator) {
        let d = design_dual_apertures(rows, cols, bands, q, p, seed).unwrap();
        let h_ms = build_h_ms(&d.ms_patterns, d.feature_bands(), d.q).unwrap();
        let h_hs = build_h_hs(&d.hs_patterns, rows, cols, d.p).unwrap();
        let h = stack_projections(&h_ms, &h_hs).unwrap();
        let k = d.feature_bands();
        let wavelet = WaveletOperator::new(rows, cols, k, 2).unwrap();
        let tv = DifferenceOperator::new(rows, cols, k);
        (h, wavelet, tv)
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero() {
        assert_eq!(soft_threshold(&[3.0, -3.0], 1.0).unwrap(), vec![2.0, -2.0]);
        assert_eq!(soft_threshold(&[0.5, -0.5], 1.0).unwrap(), vec![0.0, 0.0]);
        let v = vec![1.5, -0.25, 0.0];
        assert_eq!(soft_threshold(&v, 0.0).unwrap(), v);
        assert!(soft_threshold(&v, -0.1).is_err());
    }

    #[test]
    fn objective_of_zero_is_half_signal_energy() {
        let (h, wavelet, tv) = build_stack(4, 4, 4, 2, 2, 1);
        let y: Vec<f64> = (0..h.rows()).map(|i| (i as f64 * 0.3).cos()).collect();
        let x = vec![0.0; h.cols()];
        let obj = fusion_objective(&x, &y, &h, &wavelet, &tv, 0.3, 0.7).unwrap();
        let want: f64 = y.iter().map(|v| v * v).sum::<f64>() * 0.5;
        assert!((obj - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn objective_matches_direct_recomputation() {
        let (h, wavelet, tv) = build_stack(4, 4, 4, 2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..h.cols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..h.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (l1, l2) = (0.013, 0.41);
        let obj = fusion_objective(&x, &y, &h, &wavelet, &tv, l1, l2).unwrap();

        let mut want = 0.0;
        for r in 0..h.rows() {
            let (cols, vals) = h.row(r);
            let hx: f64 = cols.iter().zip(vals).map(|(c, v)| v * x[*c]).sum();
            want += (y[r] - hx) * (y[r] - hx) * 0.5;
        }
        want += l1 * wavelet.forward(&x).unwrap().iter().map(|v| v.abs()).sum::<f64>();
        want += l2 * tv.forward(&x).unwrap().iter().map(|v| v.abs()).sum::<f64>();
        assert!((obj - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let (h, wavelet, tv) = build_stack(4, 4, 8, 2, 2, 3);
        let n = h.cols();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..h.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gamma1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let delta1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gamma2: Vec<f64> = (0..tv.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let delta2: Vec<f64> = (0..tv.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rho = 0.8;

        let smooth = |x: &[f64]| -> f64 {
            let hx = h.apply(x).unwrap();
            let data: f64 = hx.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
            let c = wavelet.forward(x).unwrap();
            let s1: f64 = c
                .iter()
                .zip(&gamma1)
                .zip(&delta1)
                .map(|((c, g), d)| (c - g + d) * (c - g + d))
                .sum::<f64>()
                * rho
                * 0.5;
            let dvec = tv.forward(x).unwrap();
            let s2: f64 = dvec
                .iter()
                .zip(&gamma2)
                .zip(&delta2)
                .map(|((c, g), d)| (c - g + d) * (c - g + d))
                .sum::<f64>()
                * rho
                * 0.5;
            data + s1 + s2
        };

        let g = smooth_gradient(
            &x, &y, &h, &wavelet, &tv, &gamma1, &delta1, &gamma2, &delta2, rho,
        )
        .unwrap();
        let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let hstep = 1e-6;
        for i in (0..n).step_by(3) {
            let mut xp = x.clone();
            xp[i] += hstep;
            let mut xm = x.clone();
            xm[i] -= hstep;
            let fd = (smooth(&xp) - smooth(&xm)) / (2.0 * hstep);
            assert!(
                (fd - g[i]).abs() <= 1e-5 * scale.max(1.0),
                "coordinate {i}: fd {fd} vs analytic {}",
                g[i]
            );
        }
    }

    #[test]
    fn stationary_point_is_a_fixed_point() {
        // With H = I (q=1 style), rho = 0 surrogate: minimum at x = y.
        let h = SparseProjection::from_rows(
            4,
            (0..4).map(|i| vec![(i, 1.0)]).collect(),
        )
        .unwrap();
        let wavelet = WaveletOperator::new(2, 2, 1, 1).unwrap();
        let tv = DifferenceOperator::new(2, 2, 1);
        let y = vec![1.0, -2.0, 0.5, 3.0];
        let zeros1 = vec![0.0; 4];
        let zeros2 = vec![0.0; tv.output_len()];
        let step = gradient_step(
            &y, &y, &h, &wavelet, &tv, &zeros1, &zeros1, &zeros2, &zeros2, 0.0, 2.0,
        )
        .unwrap();
        for (a, b) in step.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn identity_system_step_moves_by_error_over_beta() {
        let h = SparseProjection::from_rows(
            4,
            (0..4).map(|i| vec![(i, 1.0)]).collect(),
        )
        .unwrap();
        let wavelet = WaveletOperator::new(2, 2, 1, 1).unwrap();
        let tv = DifferenceOperator::new(2, 2, 1);
        let x = vec![1.0, 1.0, 1.0, 1.0];
        let e = vec![0.4, -0.2, 0.1, 0.0];
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + b).collect();
        let beta = 2.5;
        let zeros1 = vec![0.0; 4];
        let zeros2 = vec![0.0; tv.output_len()];
        let step = gradient_step(
            &x, &y, &h, &wavelet, &tv, &zeros1, &zeros1, &zeros2, &zeros2, 0.0, beta,
        )
        .unwrap();
        for i in 0..4 {
            assert!((step[i] - (x[i] + e[i] / beta)).abs() <= 1e-14);
        }
    }

    #[test]
    fn alpha_schedule_decays_from_one() {
        assert_eq!(alpha_schedule(0), 1.0);
        assert_eq!(alpha_schedule(2), 0.5);
        let mut prev = alpha_schedule(0);
        for j in 1..50 {
            let a = alpha_schedule(j);
            assert!(a < prev);
            prev = a;
        }
        assert!(alpha_schedule(10_000) < 1e-3);
    }

    #[test]
    fn step_estimate_for_identity_is_near_one() {
        let h = SparseProjection::from_rows(1, vec![vec![(0, 1.0)]]).unwrap();
        let tv = DifferenceOperator::new(1, 1, 1);
        let beta = estimate_step(&h, &tv, 0.0).unwrap();
        assert!((beta - 1.05).abs() <= 0.0105, "beta {beta}");
    }

    #[test]
    fn step_estimate_dominates_rayleigh_quotients() {
        let (h, _, tv) = build_stack(4, 4, 4, 2, 2, 4);
        let beta = estimate_step(&h, &tv, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x: Vec<f64> = (0..h.cols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hx = h.apply(&x).unwrap();
            let q = hx.iter().map(|v| v * v).sum::<f64>()
                / x.iter().map(|v| v * v).sum::<f64>();
            assert!(beta >= q, "beta {beta} vs Rayleigh {q}");
        }
    }

    #[test]
    fn step_estimate_grows_with_rho() {
        let (h, _, tv) = build_stack(4, 4, 4, 2, 2, 5);
        let b1 = estimate_step(&h, &tv, 0.5).unwrap();
        let b2 = estimate_step(&h, &tv, 1.0).unwrap();
        assert!(b2 > b1);
    }

    #[test]
    fn unregularized_fuse_recovers_consistent_measurements() {
        // q=1, p=1: both arms are selections, the system is exactly
        // determined, and the fused cube must reproduce it.
        let rows = 4;
        let cols = 4;
        let bands = 4;
        let d = design_dual_apertures_with_unit_factors(rows, cols, bands);
        let (h, wavelet, tv, x_true) = d;
        let y = h.apply(&x_true).unwrap();
        let config = FusionConfig {
            lambda1: Some(0.0),
            lambda2: 0.0,
            max_iters: 20_000,
            rel_tol: 1e-12,
            ..FusionConfig::default()
        };
        let (cube, report) = fuse(&y, &h, &wavelet, &tv, &config).unwrap();
        let residual = {
            let hx = h.apply(cube.data()).unwrap();
            hx.iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        assert!(residual <= 1e-8, "residual {residual}");
        assert!(report.iterations > 0);
    }

    fn design_dual_apertures_with_unit_factors(
        rows: usize,
        cols: usize,
        bands: usize,
    ) -> (SparseProjection, WaveletOperator, DifferenceOperator, Vec<f64>) {
        let d = crate::aperture::design_dual_apertures(rows, cols, bands, 1, 1, 8).unwrap();
        let h_ms = build_h_ms(&d.ms_patterns, d.feature_bands(), d.q).unwrap();
        let h_hs = build_h_hs(&d.hs_patterns, rows, cols, d.p).unwrap();
        let h = stack_projections(&h_ms, &h_hs).unwrap();
        let wavelet = WaveletOperator::new(rows, cols, d.feature_bands(), 2).unwrap();
        let tv = DifferenceOperator::new(rows, cols, d.feature_bands());
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let x: Vec<f64> = (0..h.cols()).map(|_| rng.gen_range(0.0..2.0)).collect();
        (h, wavelet, tv, x)
    }

    #[test]
    fn fuse_reports_divergence_with_iteration() {
        let (h, wavelet, tv) = build_stack(4, 4, 4, 2, 2, 6);
        let y: Vec<f64> = (0..h.rows()).map(|i| 1.0 + i as f64).collect();
        let config = FusionConfig {
            beta: Some(1e-12),
            max_iters: 200,
            ..FusionConfig::default()
        };
        match fuse(&y, &h, &wavelet, &tv, &config) {
            Err(Error::Divergence { iteration, .. }) => assert!(iteration >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn fuse_validates_config_and_dimensions() {
        let (h, wavelet, tv) = build_stack(4, 4, 4, 2, 2, 7);
        let y = vec![0.0; h.rows()];
        let bad = FusionConfig {
            rho: -1.0,
            ..FusionConfig::default()
        };
        assert!(matches!(
            fuse(&y, &h, &wavelet, &tv, &bad),
            Err(Error::Config(_))
        ));
        let short = vec![0.0; h.rows() - 1];
        assert!(matches!(
            fuse(&short, &h, &wavelet, &tv, &FusionConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn objective_trace_is_recorded_when_requested() {
        let (h, wavelet, tv) = build_stack(4, 4, 4, 2, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let y: Vec<f64> = (0..h.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let config = FusionConfig {
            record_trace: true,
            max_iters: 30,
            rel_tol: 1e-14,
            ..FusionConfig::default()
        };
        let (_, report) = fuse(&y, &h, &wavelet, &tv, &config).unwrap();
        assert_eq!(report.objective_trace.len(), report.iterations);
        // Accelerated iterations need not decrease monotonically, but the
        // final objective must not exceed the early-iteration value.
        assert!(report.objective_trace[report.iterations - 1] <= report.objective_trace[4]);
    }
}
