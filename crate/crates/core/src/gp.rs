//! Gaussian-process model of a walker's response to cues.
//!
//! Training pairs map `(previous cadence, cue)` to the cadence observed one
//! increment later. The prior is a zero-mean GP with a squared-exponential
//! kernel plus an explicit constant basis `H beta`, where `beta` is the
//! generalized-least-squares estimate under the current kernel:
//!
//! ```text
//! K     = k(X, X) + (sigma^2 + jitter) I
//! beta  = (1' K^-1 Y) / (1' K^-1 1)
//! mean  = beta + k(q, X) K^-1 (Y - beta)
//! var   = k(q, q) - k(q, X) K^-1 k(X, q)
//! ```
//!
//! [`GpModel`] keeps a Cholesky factor of `K` and extends it by one row per
//! appended pair, so an update costs `O(n^2)` instead of a fresh `O(n^3)`
//! factorization.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal jitter added on top of the noise variance before factorization.
pub const JITTER: f64 = 1e-8;

/// Slack allowed below zero before a posterior variance counts as a failure.
pub const VARIANCE_TOLERANCE: f64 = 1e-9;

/// One model input: the cadence at the previous increment and the cue in
/// force over the following interval (0 Hz when silent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseInput {
    pub prev_cadence: f64,
    pub cue: f64,
}

impl ResponseInput {
    pub fn new(prev_cadence: f64, cue: f64) -> Self {
        Self { prev_cadence, cue }
    }
}

/// Ordered training pairs collected during a trial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponseDataset {
    inputs: Vec<ResponseInput>,
    outputs: Vec<f64>,
}

impl ResponseDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append one `(prev_cadence, cue) -> next_cadence` pair.
    pub fn append(&mut self, prev_cadence: f64, cue: f64, next_cadence: f64) -> Result<()> {
        validate_pair(prev_cadence, cue, next_cadence)?;
        self.inputs.push(ResponseInput::new(prev_cadence, cue));
        self.outputs.push(next_cadence);
        Ok(())
    }

    /// Number of increments `k`.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[ResponseInput] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// First `k` pairs as a new dataset.
    pub fn prefix(&self, k: usize) -> Self {
        Self {
            inputs: self.inputs[..k].to_vec(),
            outputs: self.outputs[..k].to_vec(),
        }
    }

    /// Write `k,prev_cadence_hz,cue_hz,next_cadence_hz` rows (k is 1-based).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        use crate::signal_io::fmt_num;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "prev_cadence_hz", "cue_hz", "next_cadence_hz"])?;
        for (i, (x, y)) in self.inputs.iter().zip(&self.outputs).enumerate() {
            w.write_record([
                (i + 1).to_string(),
                fmt_num(x.prev_cadence),
                fmt_num(x.cue),
                fmt_num(*y),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the format produced by [`ResponseDataset::write_csv`]. Rows are
    /// replayed through [`ResponseDataset::append`] in `k` order.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            k: usize,
            prev_cadence_hz: f64,
            cue_hz: f64,
            next_cadence_hz: f64,
        }
        let mut rows: Vec<Row> = csv::Reader::from_reader(reader)
            .deserialize()
            .collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|r| r.k);
        let mut out = Self::new();
        for (i, r) in rows.iter().enumerate() {
            if r.k != i + 1 {
                return Err(Error::input(format!("dataset rows must number k = 1..n, found k = {}", r.k)));
            }
            out.append(r.prev_cadence_hz, r.cue_hz, r.next_cadence_hz)?;
        }
        Ok(out)
    }
}

fn validate_pair(prev: f64, cue: f64, next: f64) -> Result<()> {
    for (name, v) in [("prev_cadence", prev), ("cue", cue), ("next_cadence", next)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::input(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    Ok(())
}

/// Kernel and basis hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpHyperparams {
    /// Length scales in Hz for (previous cadence, cue).
    pub length_scales: [f64; 2],
    /// Kernel amplitude in Hz^2.
    pub signal_variance: f64,
    /// Observation noise variance in Hz^2.
    pub noise_variance: f64,
    /// Constant basis coefficient in Hz.
    pub basis_coefficient: f64,
}

impl Default for GpHyperparams {
    fn default() -> Self {
        Self {
            length_scales: [0.3, 0.3],
            signal_variance: 0.05,
            noise_variance: 0.005,
            basis_coefficient: 0.0,
        }
    }
}

impl GpHyperparams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gp.length_scales[0]", self.length_scales[0]),
            ("gp.length_scales[1]", self.length_scales[1]),
            ("gp.signal_variance", self.signal_variance),
            ("gp.noise_variance", self.noise_variance),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !self.basis_coefficient.is_finite() {
            return Err(Error::config("gp.basis_coefficient must be finite"));
        }
        Ok(())
    }

    /// Squared-exponential covariance between two inputs.
    pub fn kernel(&self, a: &ResponseInput, b: &ResponseInput) -> f64 {
        let d0 = (a.prev_cadence - b.prev_cadence) / self.length_scales[0];
        let d1 = (a.cue - b.cue) / self.length_scales[1];
        self.signal_variance * (-0.5 * (d0 * d0 + d1 * d1)).exp()
    }

    /// Diagonal regularization: noise variance plus [`JITTER`].
    pub fn diagonal_offset(&self) -> f64 {
        self.noise_variance + JITTER
    }
}

/// Posterior at a single query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpPrediction {
    /// Predicted next cadence in Hz.
    pub mean: f64,
    /// Variance of the latent response in Hz^2.
    pub variance: f64,
}

/// Exact GP with an incrementally maintained Cholesky factor.
#[derive(Debug, Clone)]
pub struct GpModel {
    dataset: ResponseDataset,
    hyper: GpHyperparams,
    /// Lower-triangular factor of `K`; row `i` holds `i + 1` entries.
    chol: Vec<Vec<f64>>,
    /// `L^-1 1`
    ones_half: Vec<f64>,
    /// `L^-1 Y`
    y_half: Vec<f64>,
    /// `K^-1 (Y - beta 1)`
    weights: Vec<f64>,
}

impl GpModel {
    /// Empty model with the given kernel settings.
    pub fn new(hyper: GpHyperparams) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            dataset: ResponseDataset::new(),
            hyper,
            chol: Vec::new(),
            ones_half: Vec::new(),
            y_half: Vec::new(),
            weights: Vec::new(),
        })
    }

    /// Condition on a whole dataset.
    pub fn fit(dataset: &ResponseDataset, hyper: GpHyperparams) -> Result<Self> {
        let mut model = Self::new(hyper)?;
        for (x, &y) in dataset.inputs.iter().zip(&dataset.outputs) {
            model.push_row(*x, y)?;
        }
        model.refresh_basis();
        Ok(model)
    }

    /// Append one pair and update the factor, basis coefficient and weights.
    pub fn append(&mut self, prev_cadence: f64, cue: f64, next_cadence: f64) -> Result<()> {
        validate_pair(prev_cadence, cue, next_cadence)?;
        self.push_row(ResponseInput::new(prev_cadence, cue), next_cadence)?;
        self.refresh_basis();
        Ok(())
    }

    pub fn dataset(&self) -> &ResponseDataset {
        &self.dataset
    }

    /// Hyperparameters with the current GLS basis coefficient.
    pub fn hyperparams(&self) -> GpHyperparams {
        self.hyper
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    fn push_row(&mut self, x: ResponseInput, y: f64) -> Result<()> {
        let n = self.chol.len();
        let kx: Vec<f64> = self
            .dataset
            .inputs
            .iter()
            .map(|xi| self.hyper.kernel(xi, &x))
            .collect();
        let mut row = forward_substitute(&self.chol, &kx);
        let diag2 = self.hyper.kernel(&x, &x) + self.hyper.diagonal_offset()
            - row.iter().map(|v| v * v).sum::<f64>();
        if !(diag2.is_finite() && diag2 > 0.0) {
            return Err(Error::Numerical(format!(
                "kernel matrix not positive definite when adding point {} (pivot {diag2:e})",
                n + 1
            )));
        }
        let d = diag2.sqrt();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let u = (1.0 - dot(&row, &self.ones_half)) / d;
        let v = (y - dot(&row, &self.y_half)) / d;
        row.push(d);
        self.chol.push(row);
        self.ones_half.push(u);
        self.y_half.push(v);
        self.dataset.inputs.push(x);
        self.dataset.outputs.push(y);
        Ok(())
    }

    fn refresh_basis(&mut self) {
        if self.chol.is_empty() {
            return;
        }
        let uu: f64 = self.ones_half.iter().map(|u| u * u).sum();
        let uv: f64 = self.ones_half.iter().zip(&self.y_half).map(|(u, v)| u * v).sum();
        let beta = uv / uu;
        self.hyper.basis_coefficient = beta;
        let resid: Vec<f64> = self
            .y_half
            .iter()
            .zip(&self.ones_half)
            .map(|(v, u)| v - beta * u)
            .collect();
        self.weights = back_substitute(&self.chol, &resid);
    }

    /// Standard error of the GLS basis coefficient, `(1' K^-1 1)^-1/2`.
    pub fn basis_standard_error(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let uu: f64 = self.ones_half.iter().map(|u| u * u).sum();
        Some(uu.recip().sqrt())
    }

    /// Posterior mean only; `O(n)`.
    pub fn mean(&self, query: &ResponseInput) -> Result<f64> {
        self.require_data()?;
        Ok(self.mean_unchecked(query))
    }

    fn mean_unchecked(&self, query: &ResponseInput) -> f64 {
        let mut m = self.hyper.basis_coefficient;
        for (xi, w) in self.dataset.inputs.iter().zip(&self.weights) {
            m += w * self.hyper.kernel(query, xi);
        }
        m
    }

    /// Posterior mean and its derivative with respect to the cue coordinate.
    pub fn mean_and_cue_slope(&self, query: &ResponseInput) -> Result<(f64, f64)> {
        self.require_data()?;
        let l2 = self.hyper.length_scales[1] * self.hyper.length_scales[1];
        let mut m = self.hyper.basis_coefficient;
        let mut slope = 0.0;
        for (xi, w) in self.dataset.inputs.iter().zip(&self.weights) {
            let k = w * self.hyper.kernel(query, xi);
            m += k;
            slope -= k * (query.cue - xi.cue) / l2;
        }
        Ok((m, slope))
    }

    /// Posterior mean and variance.
    pub fn predict(&self, query: &ResponseInput) -> Result<GpPrediction> {
        self.require_data()?;
        if !(query.prev_cadence.is_finite() && query.cue.is_finite()) {
            return Err(Error::input("query must be finite"));
        }
        let mean = self.mean_unchecked(query);
        let kx: Vec<f64> = self
            .dataset
            .inputs
            .iter()
            .map(|xi| self.hyper.kernel(xi, query))
            .collect();
        let half = forward_substitute(&self.chol, &kx);
        let variance = self.hyper.kernel(query, query) - half.iter().map(|v| v * v).sum::<f64>();
        if !mean.is_finite() || !variance.is_finite() || variance < -VARIANCE_TOLERANCE {
            return Err(Error::Numerical(format!(
                "posterior out of range (mean {mean}, variance {variance})"
            )));
        }
        Ok(GpPrediction {
            mean,
            variance: variance.max(0.0),
        })
    }

    /// Log marginal likelihood of the outputs with `beta` at its GLS value.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        self.require_data()?;
        let beta = self.hyper.basis_coefficient;
        let quad: f64 = self
            .y_half
            .iter()
            .zip(&self.ones_half)
            .map(|(v, u)| (v - beta * u).powi(2))
            .sum();
        let log_det: f64 = self.chol.iter().map(|row| row[row.len() - 1].ln()).sum();
        let n = self.len() as f64;
        Ok(-0.5 * quad - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
    }

    fn require_data(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::InsufficientData("GP has no training data".into()))
        } else {
            Ok(())
        }
    }
}

fn forward_substitute(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(b.len());
    for (i, row) in l.iter().enumerate() {
        let mut s = b[i];
        for j in 0..i {
            s -= row[j] * x[j];
        }
        x.push(s / row[i]);
    }
    x
}

fn back_substitute(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for (j, xj) in x.iter().enumerate().skip(i + 1) {
            s -= l[j][i] * xj;
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Hyperparameters with `beta` set to its GLS estimate for `dataset`.
pub fn fit_basis(dataset: &ResponseDataset, hyper: &GpHyperparams) -> Result<GpHyperparams> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData("fit_basis needs at least one point".into()));
    }
    Ok(GpModel::fit(dataset, *hyper)?.hyperparams())
}

/// One-shot posterior at `query`; `beta` is re-estimated from `dataset`.
pub fn predict(
    dataset: &ResponseDataset,
    hyper: &GpHyperparams,
    query: &ResponseInput,
) -> Result<GpPrediction> {
    GpModel::fit(dataset, *hyper)?.predict(query)
}

/// One point of the prediction-error/variance trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    /// Number of pairs the model was trained on.
    pub increment: usize,
    /// `|mean - realized next cadence|` in Hz.
    pub abs_error: f64,
    /// Posterior variance at the realized input, Hz^2.
    pub variance: f64,
}

/// One-step-ahead error and variance along an ordered dataset.
///
/// For every `k >= 1` the model trained on the first `k` pairs predicts pair
/// `k + 1` at its realized input.
pub fn error_variance_trace(dataset: &ResponseDataset, hyper: &GpHyperparams) -> Result<Vec<TracePoint>> {
    let mut model = GpModel::new(*hyper)?;
    let mut out = Vec::with_capacity(dataset.len().saturating_sub(1));
    for (i, (x, &y)) in dataset.inputs.iter().zip(&dataset.outputs).enumerate() {
        if i > 0 {
            let p = model.predict(x)?;
            out.push(TracePoint {
                increment: i,
                abs_error: (p.mean - y).abs(),
                variance: p.variance,
            });
        }
        model.append(x.prev_cadence, x.cue, y)?;
    }
    Ok(out)
}

/// Coordinate search over log-spaced kernel settings maximizing the marginal
/// likelihood. Returns the best setting found (including the starting one).
pub fn refit_hyperparams(dataset: &ResponseDataset, start: &GpHyperparams) -> Result<GpHyperparams> {
    if dataset.len() < 2 {
        return Err(Error::InsufficientData("refit needs at least two points".into()));
    }
    let score = |h: &GpHyperparams| -> f64 {
        GpModel::fit(dataset, *h)
            .and_then(|m| m.log_marginal_likelihood())
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut best = *start;
    let mut best_score = score(&best);
    let factors = [0.25, 0.5, 0.8, 1.25, 2.0, 4.0];
    for _ in 0..3 {
        let mut improved = false;
        for coord in 0..4 {
            for f in factors {
                let mut cand = best;
                match coord {
                    0 => cand.length_scales[0] = (cand.length_scales[0] * f).clamp(0.02, 5.0),
                    1 => cand.length_scales[1] = (cand.length_scales[1] * f).clamp(0.02, 5.0),
                    2 => cand.signal_variance = (cand.signal_variance * f).clamp(1e-4, 10.0),
                    _ => cand.noise_variance = (cand.noise_variance * f).clamp(1e-6, 1.0),
                }
                let s = score(&cand);
                if s > best_score + 1e-9 {
                    best = cand;
                    best_score = s;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    fit_basis(dataset, &best)
}
