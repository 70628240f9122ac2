//! Neural reconstruction error (NRE).
//!
//! A fully connected ReLU decoder is trained to map embedding coordinates
//! back onto the original data. Its test-set mean squared error, divided by
//! the mean per-column variance of the same test points, measures how much
//! information the chosen components retain: 0 is perfect reconstruction and
//! 1 is no better than predicting the mean.
//!
//! Embedding columns are standardized before entering the decoder, because
//! the `lambda^t` factors shrink higher components towards zero. An ideal
//! decoder is unaffected by such per-column affine maps.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::DataMatrix;
use crate::error::{Error, Result};
use crate::pca::{pca_transform, PcaModel};
use crate::seed;
use crate::spectral::Embedding;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Smallest learning-rate change the plateau scheduler will apply.
const PLATEAU_MIN_DELTA: f64 = 1e-8;

/// Tag mixed into the base seed for the shared train/test split.
pub const SPLIT_TAG: u64 = 0x5917;
const SHUFFLE_TAG: u64 = 0x5f1e;
const INIT_TAG: u64 = 0x1417;

fn default_patience() -> usize {
    10
}

/// Learning-rate schedule, stepped once per epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// Multiply the rate by `factor` once the test loss has failed to improve
    /// by a relative `threshold` for more than `patience` epochs.
    ReduceOnPlateau {
        threshold: f64,
        factor: f64,
        #[serde(default = "default_patience")]
        patience: usize,
    },
    /// Multiply the rate by `factor` every `step_size` epochs.
    Step { step_size: usize, factor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_beta: f64,
    pub initial_lr: f64,
    pub schedule: Schedule,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![50, 50, 50],
            epochs: 100,
            batch_size: 32,
            l2_beta: 1e-6,
            initial_lr: 0.05,
            schedule: Schedule::ReduceOnPlateau {
                threshold: 0.01,
                factor: 0.1,
                patience: default_patience(),
            },
            train_fraction: 2500.0 / 3000.0,
            seed: 0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return Err(Error::param("hidden layer widths must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be >= 1"));
        }
        if !(self.l2_beta >= 0.0) || !self.l2_beta.is_finite() {
            return Err(Error::param(format!("l2 beta must be >= 0, got {}", self.l2_beta)));
        }
        if !(self.initial_lr > 0.0) || !self.initial_lr.is_finite() {
            return Err(Error::param(format!("learning rate must be > 0, got {}", self.initial_lr)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::param(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        let factor = match self.schedule {
            Schedule::ReduceOnPlateau { threshold, factor, .. } => {
                if !(threshold >= 0.0) {
                    return Err(Error::param("plateau threshold must be >= 0"));
                }
                factor
            }
            Schedule::Step { step_size, factor } => {
                if step_size == 0 {
                    return Err(Error::param("step size must be >= 1"));
                }
                factor
            }
        };
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::param(format!("schedule factor must lie in (0, 1), got {factor}")));
        }
        Ok(())
    }
}

/// Fully connected network, ReLU after every hidden layer and a linear
/// output layer. Parameters live in one flat vector, layer by layer, each
/// layer storing its `out x in` weights row-major followed by its biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl Decoder {
    fn layer_offsets(sizes: &[usize]) -> Vec<usize> {
        let mut offs = vec![0];
        for w in sizes.windows(2) {
            let last = *offs.last().unwrap();
            offs.push(last + w[0] * w[1] + w[1]);
        }
        offs
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Euclidean norm of all weights (biases excluded).
    pub fn weight_norm(&self) -> f64 {
        let offs = Self::layer_offsets(&self.sizes);
        let mut acc = 0.0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let start = offs[l];
            acc += self.params[start..start + w[0] * w[1]].iter().map(|v| v * v).sum::<f64>();
        }
        acc.sqrt()
    }

    /// Predictions for `inputs` (`n x input_dim`), as an `n x output_dim` matrix.
    pub fn predict(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = inputs.nrows();
        let x = row_major(inputs);
        let mut ws = Workspace::new(&self.sizes, n);
        let out = self.forward(&x, n, &mut ws);
        DMatrix::from_row_slice(n, self.output_dim(), out)
    }

    fn forward<'a>(&self, x: &[f64], rows: usize, ws: &'a mut Workspace) -> &'a [f64] {
        let offs = Self::layer_offsets(&self.sizes);
        let layers = self.sizes.len() - 1;
        ws.acts[0][..rows * self.sizes[0]].copy_from_slice(&x[..rows * self.sizes[0]]);
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offs[l]..offs[l] + fan_in * fan_out];
            let b = &self.params[offs[l] + fan_in * fan_out..offs[l + 1]];
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let input = &before[l];
            let output = &mut after[0];
            for r in 0..rows {
                let a = &input[r * fan_in..(r + 1) * fan_in];
                let z = &mut output[r * fan_out..(r + 1) * fan_out];
                for o in 0..fan_out {
                    let wr = &w[o * fan_in..(o + 1) * fan_in];
                    let mut s = b[o];
                    for i in 0..fan_in {
                        s += wr[i] * a[i];
                    }
                    z[o] = if l + 1 < layers { s.max(0.0) } else { s };
                }
            }
        }
        &ws.acts[layers][..rows * self.output_dim()]
    }

    /// Cost `MSE + beta/2 * sum(theta^2)` over the given rows and its
    /// gradient, written into `grad`. Returns `(cost, mse)`.
    fn cost_and_grad(
        &self,
        x: &[f64],
        y: &[f64],
        rows: usize,
        beta: f64,
        ws: &mut Workspace,
        grad: &mut [f64],
    ) -> (f64, f64) {
        let offs = Self::layer_offsets(&self.sizes);
        let layers = self.sizes.len() - 1;
        let p = self.output_dim();
        self.forward(x, rows, ws);

        let scale = 2.0 / (rows * p) as f64;
        let mut sse = 0.0;
        {
            let out = &ws.acts[layers];
            let delta = &mut ws.deltas[layers];
            for k in 0..rows * p {
                let e = out[k] - y[k];
                sse += e * e;
                delta[k] = scale * e;
            }
        }
        let mse = sse / (rows * p) as f64;

        grad.iter_mut().for_each(|g| *g = 0.0);
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                let act = &ws.acts[l + 1];
                let delta = &mut ws.deltas[l + 1];
                for k in 0..rows * fan_out {
                    if act[k] <= 0.0 {
                        delta[k] = 0.0;
                    }
                }
            }
            let w_start = offs[l];
            let b_start = offs[l] + fan_in * fan_out;
            let (lower, upper) = ws.deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            let input = &ws.acts[l];
            {
                let (gw, gb) = grad[w_start..offs[l + 1]].split_at_mut(fan_in * fan_out);
                for r in 0..rows {
                    let a = &input[r * fan_in..(r + 1) * fan_in];
                    let d = &delta[r * fan_out..(r + 1) * fan_out];
                    for o in 0..fan_out {
                        let dv = d[o];
                        if dv == 0.0 {
                            continue;
                        }
                        gb[o] += dv;
                        let g = &mut gw[o * fan_in..(o + 1) * fan_in];
                        for i in 0..fan_in {
                            g[i] += dv * a[i];
                        }
                    }
                }
            }
            if l > 0 {
                let w = &self.params[w_start..b_start];
                let prev = &mut lower[l];
                prev[..rows * fan_in].iter_mut().for_each(|v| *v = 0.0);
                for r in 0..rows {
                    let d = &delta[r * fan_out..(r + 1) * fan_out];
                    let pd = &mut prev[r * fan_in..(r + 1) * fan_in];
                    for o in 0..fan_out {
                        let dv = d[o];
                        if dv == 0.0 {
                            continue;
                        }
                        let wr = &w[o * fan_in..(o + 1) * fan_in];
                        for i in 0..fan_in {
                            pd[i] += dv * wr[i];
                        }
                    }
                }
            }
        }

        let mut reg = 0.0;
        if beta > 0.0 {
            for (g, t) in grad.iter_mut().zip(&self.params) {
                *g += beta * t;
                reg += t * t;
            }
        }
        (mse + 0.5 * beta * reg, mse)
    }

    /// Cost and gradient for an `n x input_dim` batch; exposed for gradient
    /// checking.
    pub fn cost_and_gradient(&self, inputs: &DMatrix<f64>, targets: &DMatrix<f64>, beta: f64) -> (f64, Vec<f64>) {
        let n = inputs.nrows();
        let mut ws = Workspace::new(&self.sizes, n);
        let mut grad = vec![0.0; self.params.len()];
        let (cost, _) = self.cost_and_grad(&row_major(inputs), &row_major(targets), n, beta, &mut ws, &mut grad);
        (cost, grad)
    }

    /// Mean squared error over the listed rows of row-major data.
    fn mse_on(&self, x: &[f64], y: &[f64], rows: &[usize], ws: &mut Workspace) -> f64 {
        let (din, dout) = (self.input_dim(), self.output_dim());
        let chunk = ws.capacity;
        let mut sse = 0.0;
        let mut xb = vec![0.0; chunk * din];
        for block in rows.chunks(chunk) {
            for (r, &i) in block.iter().enumerate() {
                xb[r * din..(r + 1) * din].copy_from_slice(&x[i * din..(i + 1) * din]);
            }
            let out = self.forward(&xb, block.len(), ws);
            for (r, &i) in block.iter().enumerate() {
                for o in 0..dout {
                    let e = out[r * dout + o] - y[i * dout + o];
                    sse += e * e;
                }
            }
        }
        sse / (rows.len() * dout) as f64
    }
}

struct Workspace {
    capacity: usize,
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(sizes: &[usize], capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            capacity,
            acts: sizes.iter().map(|s| vec![0.0; s * capacity]).collect(),
            deltas: sizes.iter().map(|s| vec![0.0; s * capacity]).collect(),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter());
    }
    out
}

/// Fresh decoder: weights uniform in `+-sqrt(6 / fan_in)`, biases zero.
/// With `input_dim = 0` the network can only learn a constant output.
pub fn decoder_init(input_dim: usize, output_dim: usize, config: &DecoderConfig) -> Decoder {
    let mut sizes = Vec::with_capacity(config.hidden_layers.len() + 2);
    sizes.push(input_dim);
    sizes.extend(&config.hidden_layers);
    sizes.push(output_dim);
    let offs = Decoder::layer_offsets(&sizes);
    let mut params = vec![0.0; *offs.last().unwrap()];
    let mut rng = seed::rng(seed::derive(config.seed, &[INIT_TAG]));
    for (l, w) in sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        if fan_in == 0 {
            continue;
        }
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in &mut params[offs[l]..offs[l] + fan_in * fan_out] {
            *v = rng.random_range(-bound..bound);
        }
    }
    Decoder { sizes, params }
}

/// Training trajectory and final errors of one decoder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    /// Per epoch: (mean minibatch training MSE, test MSE).
    pub loss_history: Vec<(f64, f64)>,
    /// Learning rate used during each epoch.
    pub lr_history: Vec<f64>,
    /// Mean per-column variance of the test targets.
    pub epsilon_0_test: f64,
    /// Mean per-column variance of the training targets.
    pub epsilon_0_train: f64,
    /// Test MSE over the test-set variance.
    pub epsilon_k_normalized: f64,
    /// Train MSE over the training-set variance.
    pub epsilon_k_normalized_train: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Seeded split of `0..n` into training and test rows.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n_train = ((n as f64) * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::param(format!(
            "train fraction {train_fraction} leaves an empty split of {n} rows"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

fn mean_column_variance(y: &[f64], rows: &[usize], p: usize) -> f64 {
    let n = rows.len() as f64;
    let mut total = 0.0;
    for j in 0..p {
        let mean = rows.iter().map(|&i| y[i * p + j]).sum::<f64>() / n;
        total += rows.iter().map(|&i| (y[i * p + j] - mean).powi(2)).sum::<f64>() / n;
    }
    total / p as f64
}

/// Train with a split derived from `config.seed`.
pub fn decoder_train(
    decoder: &mut Decoder,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    config: &DecoderConfig,
) -> Result<TrainReport> {
    let (train, test) = train_test_split(
        inputs.nrows(),
        config.train_fraction,
        seed::derive(config.seed, &[SPLIT_TAG]),
    )?;
    train_on_split(decoder, inputs, targets, &train, &test, config)
}

/// Minimize `MSE + beta/2 |theta|^2` with Adam over shuffled minibatches of
/// the training rows; the schedule watches the test loss.
pub fn train_on_split(
    decoder: &mut Decoder,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    train: &[usize],
    test: &[usize],
    config: &DecoderConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let n = inputs.nrows();
    if targets.nrows() != n {
        return Err(Error::Dimension(format!("{n} input rows but {} target rows", targets.nrows())));
    }
    if inputs.ncols() != decoder.input_dim() || targets.ncols() != decoder.output_dim() {
        return Err(Error::Dimension(format!(
            "decoder maps {} -> {}, data is {} -> {}",
            decoder.input_dim(),
            decoder.output_dim(),
            inputs.ncols(),
            targets.ncols()
        )));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::param("training and test splits must be nonempty"));
    }
    let (din, dout) = (decoder.input_dim(), decoder.output_dim());
    let x = row_major(inputs);
    let y = row_major(targets);

    let batch = config.batch_size.min(train.len());
    let mut ws = Workspace::new(&decoder.sizes, batch.max(256));
    let n_params = decoder.params.len();
    let mut grad = vec![0.0; n_params];
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut step: i32 = 0;
    let mut lr = config.initial_lr;

    let mut plateau_best = f64::INFINITY;
    let mut plateau_bad = 0usize;

    let mut order = train.to_vec();
    let mut shuffle_rng = seed::rng(seed::derive(config.seed, &[SHUFFLE_TAG]));
    let mut xb = vec![0.0; batch * din];
    let mut yb = vec![0.0; batch * dout];

    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut lr_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if let Schedule::Step { step_size, factor } = config.schedule {
            lr = config.initial_lr * factor.powi((epoch / step_size) as i32);
        }
        lr_history.push(lr);
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let rows = chunk.len();
            for (r, &i) in chunk.iter().enumerate() {
                xb[r * din..(r + 1) * din].copy_from_slice(&x[i * din..(i + 1) * din]);
                yb[r * dout..(r + 1) * dout].copy_from_slice(&y[i * dout..(i + 1) * dout]);
            }
            let (_, mse) = decoder.cost_and_grad(&xb, &yb, rows, config.l2_beta, &mut ws, &mut grad);
            if !mse.is_finite() {
                return Err(Error::Divergence { epoch, loss: mse });
            }
            epoch_loss += mse * rows as f64;

            step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(step);
            let bc2 = 1.0 - ADAM_BETA2.powi(step);
            for k in 0..n_params {
                let g = grad[k];
                m1[k] = ADAM_BETA1 * m1[k] + (1.0 - ADAM_BETA1) * g;
                m2[k] = ADAM_BETA2 * m2[k] + (1.0 - ADAM_BETA2) * g * g;
                let mhat = m1[k] / bc1;
                let vhat = m2[k] / bc2;
                decoder.params[k] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        let train_loss = epoch_loss / train.len() as f64;
        let test_loss = decoder.mse_on(&x, &y, test, &mut ws);
        if !test_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: test_loss,
            });
        }
        loss_history.push((train_loss, test_loss));

        if let Schedule::ReduceOnPlateau {
            threshold,
            factor,
            patience,
        } = config.schedule
        {
            if test_loss < plateau_best * (1.0 - threshold) {
                plateau_best = test_loss;
                plateau_bad = 0;
            } else {
                plateau_bad += 1;
            }
            if plateau_bad > patience {
                let reduced = lr * factor;
                if lr - reduced > PLATEAU_MIN_DELTA {
                    lr = reduced;
                }
                plateau_bad = 0;
            }
        }
    }

    let final_train_loss = decoder.mse_on(&x, &y, train, &mut ws);
    let final_test_loss = decoder.mse_on(&x, &y, test, &mut ws);
    let epsilon_0_train = mean_column_variance(&y, train, dout);
    let epsilon_0_test = mean_column_variance(&y, test, dout);
    let normalize = |err: f64, var: f64| if var > 0.0 { err / var } else { 0.0 };
    Ok(TrainReport {
        final_train_loss,
        final_test_loss,
        loss_history,
        lr_history,
        epsilon_0_test,
        epsilon_0_train,
        epsilon_k_normalized: normalize(final_test_loss, epsilon_0_test),
        epsilon_k_normalized_train: normalize(final_train_loss, epsilon_0_train),
        n_train: train.len(),
        n_test: test.len(),
    })
}

/// Zero mean and unit population variance per column; constant columns are
/// only centered.
fn standardize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows() as f64;
    for j in 0..m.ncols() {
        let mean = m.column(j).sum() / n;
        let var = m.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        out.column_mut(j)
            .apply(|v| *v = if sd > 0.0 { (*v - mean) / sd } else { *v - mean });
    }
    out
}

/// Seed for one component set; independent of the order the set is listed in.
pub fn component_seed(base: u64, components: &[usize]) -> u64 {
    let mut sorted: Vec<u64> = components.iter().map(|&c| c as u64).collect();
    sorted.sort_unstable();
    let mut tags = vec![components.len() as u64];
    tags.extend(sorted);
    seed::derive(base, &tags)
}

/// Normalized reconstruction error of `data` from the listed embedding
/// components. The train/test split depends only on `config.seed`, so every
/// component set is scored on the same test rows.
pub fn nre(embedding: &Embedding, data: &DataMatrix, components: &[usize], config: &DecoderConfig) -> Result<TrainReport> {
    config.validate()?;
    if embedding.n() != data.nrows() {
        return Err(Error::Dimension(format!(
            "embedding has {} rows, data has {}",
            embedding.n(),
            data.nrows()
        )));
    }
    let mut dedup = components.to_vec();
    dedup.sort_unstable();
    dedup.dedup();
    if dedup.len() != components.len() {
        return Err(Error::param(format!("duplicate components in {components:?}")));
    }
    let inputs = standardize_columns(&embedding.select(components)?);
    let (train, test) = train_test_split(
        data.nrows(),
        config.train_fraction,
        seed::derive(config.seed, &[SPLIT_TAG]),
    )?;
    let run_config = DecoderConfig {
        seed: component_seed(config.seed, components),
        ..config.clone()
    };
    let mut decoder = decoder_init(components.len(), data.ncols(), &run_config);
    train_on_split(&mut decoder, &inputs, data.values(), &train, &test, &run_config)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NreEntry {
    pub components: Vec<usize>,
    pub nre: f64,
    pub report: TrainReport,
}

/// Nested component sets, each one larger than the previous.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct NreCurve {
    pub entries: Vec<NreEntry>,
}

fn check_available(embedding: &Embedding, k_max: usize) -> Result<()> {
    for c in 1..=k_max {
        if !embedding.component_indices.contains(&c) {
            return Err(Error::param(format!("component {c} is not part of the embedding")));
        }
    }
    Ok(())
}

/// NRE of `(1)`, `(1, 2)`, ..., `(1..k_max)`, each trained independently.
pub fn nre_curve_consecutive(
    embedding: &Embedding,
    data: &DataMatrix,
    k_max: usize,
    config: &DecoderConfig,
) -> Result<NreCurve> {
    check_available(embedding, k_max)?;
    let sets: Vec<Vec<usize>> = (1..=k_max).map(|k| (1..=k).collect()).collect();
    let reports: Vec<Result<TrainReport>> = sets
        .par_iter()
        .map(|set| nre(embedding, data, set, config))
        .collect();
    let mut entries = Vec::with_capacity(k_max);
    for (set, rep) in sets.into_iter().zip(reports) {
        let report = rep?;
        entries.push(NreEntry {
            components: set,
            nre: report.epsilon_k_normalized,
            report,
        });
    }
    Ok(NreCurve { entries })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub component: usize,
    pub nre: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchRound {
    pub round: usize,
    pub chosen_before: Vec<usize>,
    pub candidates: Vec<Candidate>,
    pub picked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchResult {
    pub order: Vec<usize>,
    pub curve: NreCurve,
    pub rounds: Vec<SearchRound>,
}

/// Greedy forward selection: each round trains one decoder per unused
/// component in `1..=k_max` on top of the components chosen so far and keeps
/// the one with the lowest NRE (smaller index on ties). Candidates whose
/// training fails are logged and skipped.
pub fn greedy_search(
    embedding: &Embedding,
    data: &DataMatrix,
    k_max: usize,
    t_max: usize,
    config: &DecoderConfig,
) -> Result<SearchResult> {
    if t_max > k_max {
        return Err(Error::param(format!("t_max = {t_max} exceeds k_max = {k_max}")));
    }
    check_available(embedding, k_max)?;
    let mut chosen: Vec<usize> = Vec::new();
    let mut entries = Vec::new();
    let mut rounds = Vec::new();
    for round in 0..t_max {
        let pool: Vec<usize> = (1..=k_max).filter(|c| !chosen.contains(c)).collect();
        let results: Vec<(usize, Result<TrainReport>)> = pool
            .par_iter()
            .map(|&j| {
                let mut set = chosen.clone();
                set.push(j);
                (j, nre(embedding, data, &set, config))
            })
            .collect();

        let mut best: Option<(usize, TrainReport)> = None;
        let mut candidates = Vec::with_capacity(results.len());
        let mut first_error = None;
        for (j, res) in results {
            match res {
                Ok(rep) => {
                    candidates.push(Candidate {
                        component: j,
                        nre: Some(rep.epsilon_k_normalized),
                        error: None,
                    });
                    let better = best
                        .as_ref()
                        .is_none_or(|(_, b)| rep.epsilon_k_normalized < b.epsilon_k_normalized);
                    if better {
                        best = Some((j, rep));
                    }
                }
                Err(e) => {
                    log::warn!("greedy search round {round}: candidate {j} failed: {e}");
                    candidates.push(Candidate {
                        component: j,
                        nre: None,
                        error: Some(e.to_string()),
                    });
                    first_error.get_or_insert(e);
                }
            }
        }
        let Some((picked, report)) = best else {
            return Err(first_error.unwrap_or_else(|| Error::param("no candidates left")));
        };
        rounds.push(SearchRound {
            round,
            chosen_before: chosen.clone(),
            candidates,
            picked,
        });
        chosen.push(picked);
        entries.push(NreEntry {
            components: chosen.clone(),
            nre: report.epsilon_k_normalized,
            report,
        });
    }
    Ok(SearchResult {
        order: chosen,
        curve: NreCurve { entries },
        rounds,
    })
}

/// NRE of the first `k` principal components.
pub fn nre_for_pca(model: &PcaModel, data: &DataMatrix, k: usize, config: &DecoderConfig) -> Result<TrainReport> {
    if k > model.k() {
        return Err(Error::param(format!("model keeps {} components, asked for {k}", model.k())));
    }
    let embedding = pca_transform(model, data)?;
    let comps: Vec<usize> = (1..=k).collect();
    nre(&embedding, data, &comps, config)
}
