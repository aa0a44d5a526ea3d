//! Multilayer perceptron pixel classifier over fused-feature vectors, with
//! stratified train/test splitting and accuracy metrics.
//!
//! Hidden layers use ReLU, the output layer softmax, trained by mini-batch
//! gradient descent on the categorical cross-entropy. Inputs are
//! standardized per band with statistics fitted on the training split and
//! stored in the network, so inference applies the identical transform.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{LabelMap, SpectralCube};
use crate::error::{Error, Result};

const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major out_dim x in_dim.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.out_dim {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(z + self.biases[r]);
        }
    }
}

/// Feed-forward classifier mapping a feature vector to class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
    input_dim: usize,
    class_count: u32,
    band_mean: Vec<f64>,
    band_std: Vec<f64>,
}

/// Weights drawn uniformly from +-sqrt(6/fan_in), biases zero; hidden
/// layers all share `hidden_width`. The bound keeps activation variance
/// constant through deep ReLU stacks. Deterministic per seed.
pub fn init_network(
    input_dim: usize,
    hidden_layers: usize,
    hidden_width: usize,
    class_count: u32,
    seed: u64,
) -> Result<MlpNetwork> {
    if hidden_width == 0 {
        return Err(Error::Config(
            "network dimensions must be positive".into(),
        ));
    }
    let mut dims = Vec::with_capacity(hidden_layers + 2);
    dims.push(input_dim);
    dims.extend(std::iter::repeat_n(hidden_width, hidden_layers));
    dims.push(class_count as usize);
    init_network_layers(&dims, seed)
}

/// Like `init_network` but with an explicit size per layer, input first and
/// class count last.
pub fn init_network_layers(dims: &[usize], seed: u64) -> Result<MlpNetwork> {
    if dims.len() < 2 {
        return Err(Error::Config(
            "a network needs an input and an output layer".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::Config(
            "network dimensions must be positive".into(),
        ));
    }
    let input_dim = dims[0];
    let class_count = *dims.last().unwrap() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        layers.push(Layer {
            in_dim: fan_in,
            out_dim: fan_out,
            weights,
            biases: vec![0.0; fan_out],
        });
    }
    Ok(MlpNetwork {
        layers,
        input_dim,
        class_count,
        band_mean: vec![0.0; input_dim],
        band_std: vec![1.0; input_dim],
    })
}

fn softmax_in_place(v: &mut [f64]) {
    let peak = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - peak).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

impl MlpNetwork {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    /// (in_dim, out_dim) per layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect()
    }

    /// Per-band standardization as (mean, std) pairs.
    pub fn standardization(&self) -> (&[f64], &[f64]) {
        (&self.band_mean, &self.band_std)
    }

    pub fn set_standardization(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        if mean.len() != self.input_dim || std.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "standardization length must be {}",
                self.input_dim
            )));
        }
        if std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Data(
                "standardization needs positive finite deviations".into(),
            ));
        }
        self.band_mean = mean;
        self.band_std = std;
        Ok(())
    }

    fn standardize(&self, s: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            s.iter()
                .zip(&self.band_mean)
                .zip(&self.band_std)
                .map(|((x, m), d)| (x - m) / d),
        );
    }

    /// Class probabilities for one feature vector.
    pub fn forward(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "feature vector length {} does not match network input {}",
                s.len(),
                self.input_dim
            )));
        }
        let mut a = Vec::new();
        self.standardize(s, &mut a);
        let mut scratch = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut scratch);
            if l < last {
                for z in scratch.iter_mut() {
                    *z = z.max(0.0);
                }
            }
            std::mem::swap(&mut a, &mut scratch);
        }
        softmax_in_place(&mut a);
        Ok(a)
    }

    /// Predicted class (1-based); argmax ties break toward the lowest class.
    pub fn predict(&self, s: &[f64]) -> Result<u32> {
        let p = self.forward(s)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Ok(best as u32 + 1)
    }

    /// Classifies every pixel of the feature cube.
    pub fn predict_map(&self, features: &SpectralCube) -> Result<LabelMap> {
        if features.bands() != self.input_dim {
            return Err(Error::Dimension(format!(
                "feature cube has {} bands but the network expects {}",
                features.bands(),
                self.input_dim
            )));
        }
        let (rows, cols) = (features.rows(), features.cols());
        let mut labels = vec![0u32; rows * cols];
        let mut s = vec![0.0; self.input_dim];
        for n in 0..cols {
            for m in 0..rows {
                for (b, v) in s.iter_mut().enumerate() {
                    *v = features.get(m, n, b);
                }
                labels[m + n * rows] = self.predict(&s)?;
            }
        }
        LabelMap::new(rows, cols, self.class_count, labels)
    }

    /// All parameters as one flat vector: per layer, weights row-major then
    /// biases. The layout backs both serialization and gradient checks.
    pub fn parameters(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            flat.extend_from_slice(&l.weights);
            flat.extend_from_slice(&l.biases);
        }
        flat
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "parameter vector length {} does not match network size {}",
                flat.len(),
                self.parameter_count()
            )));
        }
        if let Some(bad) = flat.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "network parameters must be finite, got {bad}"
            )));
        }
        let mut at = 0;
        for l in self.layers.iter_mut() {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Mean categorical cross-entropy over a batch of raw feature vectors,
    /// with probabilities floored at 1e-12 inside the logarithm.
    pub fn batch_loss(&self, inputs: &[Vec<f64>], labels: &[u32]) -> Result<f64> {
        let (loss, _) = self.batch_eval(inputs, labels, false)?;
        Ok(loss)
    }

    /// Mean loss plus its gradient in the flat parameter layout.
    pub fn batch_gradients(&self, inputs: &[Vec<f64>], labels: &[u32]) -> Result<(f64, Vec<f64>)> {
        let (loss, grad) = self.batch_eval(inputs, labels, true)?;
        Ok((loss, grad.unwrap()))
    }

    fn batch_eval(
        &self,
        inputs: &[Vec<f64>],
        labels: &[u32],
        with_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        if inputs.is_empty() {
            return Err(Error::Data("empty training batch".into()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "batch has {} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let count = inputs.len() as f64;
        let mut grad = if with_grad {
            Some(vec![0.0; self.parameter_count()])
        } else {
            None
        };
        let mut loss = 0.0;
        // Post-activation values per layer, input first.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for (s, &label) in inputs.iter().zip(labels) {
            if s.len() != self.input_dim {
                return Err(Error::Dimension(format!(
                    "feature vector length {} does not match network input {}",
                    s.len(),
                    self.input_dim
                )));
            }
            if label == 0 || label > self.class_count {
                return Err(Error::Data(format!(
                    "training label {label} outside 1..={}",
                    self.class_count
                )));
            }
            acts.clear();
            let mut a = Vec::new();
            self.standardize(s, &mut a);
            acts.push(a);
            let last = self.layers.len() - 1;
            for (l, layer) in self.layers.iter().enumerate() {
                let mut z = Vec::new();
                layer.apply(acts.last().unwrap(), &mut z);
                if l < last {
                    for v in z.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
                acts.push(z);
            }
            let mut p = acts.last().unwrap().clone();
            softmax_in_place(&mut p);
            let truth = (label - 1) as usize;
            // The floor keeps the loss finite for finite activations; NaN
            // from overflowed parameters must pass through for divergence
            // detection, and f64::max would swallow it.
            loss -= if p[truth].is_nan() {
                f64::NAN
            } else {
                p[truth].max(PROBABILITY_FLOOR).ln()
            };

            if let Some(grad) = grad.as_mut() {
                // dL/dz at the output, then walk the layers backward.
                let mut dz = p;
                dz[truth] -= 1.0;
                let mut offset = self.parameter_count();
                for (l, layer) in self.layers.iter().enumerate().rev() {
                    offset -= layer.weights.len() + layer.biases.len();
                    let a_in = &acts[l];
                    let gw = &mut grad[offset..offset + layer.weights.len()];
                    for (r, dzr) in dz.iter().enumerate() {
                        let row = &mut gw[r * layer.in_dim..(r + 1) * layer.in_dim];
                        for (g, x) in row.iter_mut().zip(a_in) {
                            *g += dzr * x;
                        }
                    }
                    let gb = &mut grad
                        [offset + layer.weights.len()..offset + layer.weights.len() + layer.biases.len()];
                    for (g, dzr) in gb.iter_mut().zip(&dz) {
                        *g += dzr;
                    }
                    if l > 0 {
                        let mut da = vec![0.0; layer.in_dim];
                        for (r, dzr) in dz.iter().enumerate() {
                            let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                            for (d, w) in da.iter_mut().zip(row) {
                                *d += dzr * w;
                            }
                        }
                        // ReLU mask from the stored post-activations.
                        for (d, &a) in da.iter_mut().zip(&acts[l]) {
                            if a <= 0.0 {
                                *d = 0.0;
                            }
                        }
                        dz = da;
                    }
                }
            }
        }
        loss /= count;
        if let Some(grad) = grad.as_mut() {
            for g in grad.iter_mut() {
                *g /= count;
            }
        }
        Ok((loss, grad))
    }

    fn step(&mut self, grad: &[f64], learning_rate: f64) {
        let mut at = 0;
        for l in self.layers.iter_mut() {
            for w in l.weights.iter_mut() {
                *w -= learning_rate * grad[at];
                at += 1;
            }
            for b in l.biases.iter_mut() {
                *b -= learning_rate * grad[at];
                at += 1;
            }
        }
    }

    /// Fits per-band standardization on the training pixels, then runs
    /// mini-batch gradient descent for `epochs` passes. Returns the
    /// per-epoch mean loss trace. Deterministic per seed.
    pub fn train(
        &mut self,
        features: &SpectralCube,
        split: &TrainTestSplit,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if features.bands() != self.input_dim {
            return Err(Error::Dimension(format!(
                "feature cube has {} bands but the network expects {}",
                features.bands(),
                self.input_dim
            )));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        let plane = features.rows() * features.cols();
        let mut samples = Vec::with_capacity(split.train.len());
        for &(pixel, label) in &split.train {
            if pixel >= plane {
                return Err(Error::Dimension(format!(
                    "training pixel index {pixel} outside the {plane}-pixel grid"
                )));
            }
            let (m, n) = (pixel % features.rows(), pixel / features.rows());
            let s: Vec<f64> = (0..self.input_dim).map(|b| features.get(m, n, b)).collect();
            samples.push((s, label));
        }
        if samples.is_empty() {
            return Err(Error::Data("training split holds no pixels".into()));
        }

        let mut mean = vec![0.0; self.input_dim];
        for (s, _) in &samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= samples.len() as f64;
        }
        let mut std = vec![0.0; self.input_dim];
        for (s, _) in &samples {
            for ((d, v), m) in std.iter_mut().zip(s).zip(&mean) {
                *d += (v - m) * (v - m);
            }
        }
        for d in std.iter_mut() {
            *d = (*d / samples.len() as f64).sqrt();
            if !(*d > 1e-12) {
                *d = 1.0;
            }
        }
        self.set_standardization(mean, std)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut trace = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(batch_size) {
                let inputs: Vec<Vec<f64>> =
                    chunk.iter().map(|&i| samples[i].0.clone()).collect();
                let labels: Vec<u32> = chunk.iter().map(|&i| samples[i].1).collect();
                let (loss, grad) = self.batch_gradients(&inputs, &labels)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        iteration: epoch + 1,
                        detail: "non-finite training loss".into(),
                    });
                }
                self.step(&grad, learning_rate);
                epoch_loss += loss * chunk.len() as f64;
            }
            trace.push(epoch_loss / samples.len() as f64);
        }
        Ok(trace)
    }
}

/// Stratified partition of the labeled pixels; indices are column-major
/// linear pixel positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTestSplit {
    pub train: Vec<(usize, u32)>,
    pub test: Vec<(usize, u32)>,
    pub rate: f64,
    pub seed: u64,
}

/// Splits each class separately: round(rate * class size) training pixels,
/// clamped to leave at least one pixel on each side. Deterministic per seed.
pub fn split_train_test(gt: &LabelMap, rate: f64, seed: u64) -> Result<TrainTestSplit> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Config(format!(
            "training rate must lie in (0, 1), got {rate}"
        )));
    }
    let rows = gt.rows();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); gt.class_count() as usize];
    for (m, n, z) in gt.labeled_pixels() {
        by_class[(z - 1) as usize].push(m + n * rows);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, pixels) in by_class.iter_mut().enumerate() {
        if pixels.is_empty() {
            continue;
        }
        if pixels.len() < 2 {
            return Err(Error::Data(format!(
                "class {} has fewer than 2 labeled pixels; cannot split",
                c + 1
            )));
        }
        pixels.shuffle(&mut rng);
        let want = (rate * pixels.len() as f64).round() as usize;
        let take = want.clamp(1, pixels.len() - 1);
        let label = c as u32 + 1;
        train.extend(pixels[..take].iter().map(|&p| (p, label)));
        test.extend(pixels[take..].iter().map(|&p| (p, label)));
    }
    if train.is_empty() {
        return Err(Error::Data("label map has no labeled pixels".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(TrainTestSplit {
        train,
        test,
        rate,
        seed,
    })
}

/// Accuracy of one class: `correct` of `total` ground-truth pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: u32,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Agreement summary between a prediction map and ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// confusion[t][p] counts pixels of true class t+1 predicted as p+1.
    pub confusion: Vec<Vec<usize>>,
    pub evaluated_pixels: usize,
}

/// Scores `pred` against `gt` over the gt-labeled pixels only.
pub fn metrics(pred: &LabelMap, gt: &LabelMap) -> Result<ClassificationScores> {
    if pred.rows() != gt.rows() || pred.cols() != gt.cols() {
        return Err(Error::Dimension(format!(
            "prediction map {}x{} does not match ground truth {}x{}",
            pred.rows(),
            pred.cols(),
            gt.rows(),
            gt.cols()
        )));
    }
    let classes = gt.class_count().max(pred.class_count()) as usize;
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut evaluated = 0usize;
    for (m, n, truth) in gt.labeled_pixels() {
        let guess = pred.label(m, n);
        if guess == 0 {
            return Err(Error::Data(format!(
                "prediction leaves evaluated pixel ({}, {}) unlabeled",
                m + 1,
                n + 1
            )));
        }
        confusion[(truth - 1) as usize][(guess - 1) as usize] += 1;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::Data("ground truth has no labeled pixels".into()));
    }

    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let overall = correct as f64 / evaluated as f64;

    let mut per_class = Vec::new();
    for c in 0..classes {
        let total: usize = confusion[c].iter().sum();
        if total == 0 {
            continue;
        }
        per_class.push(ClassAccuracy {
            class: c as u32 + 1,
            correct: confusion[c][c],
            total,
            accuracy: confusion[c][c] as f64 / total as f64,
        });
    }
    let average = per_class.iter().map(|c| c.accuracy).sum::<f64>() / per_class.len() as f64;

    let n = evaluated as f64;
    let mut expected = 0.0;
    for c in 0..classes {
        let row: usize = confusion[c].iter().sum();
        let col: usize = (0..classes).map(|r| confusion[r][c]).sum();
        expected += (row as f64 / n) * (col as f64 / n);
    }
    let kappa = if (1.0 - expected).abs() < 1e-15 {
        1.0
    } else {
        (overall - expected) / (1.0 - expected)
    };

    Ok(ClassificationScores {
        overall_accuracy: overall,
        average_accuracy: average,
        kappa,
        per_class,
        confusion,
        evaluated_pixels: evaluated,
    })
}
