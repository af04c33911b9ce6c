//! Online phase, frequency and waveform estimation for a periodic signal.
//!
//! The estimator is an adaptive frequency oscillator that carries a truncated
//! Fourier series of the tracked signal:
//!
//! ```text
//! y_hat = sum_{m=0..M} alpha_m sin(m phi) + beta_m cos(m phi)
//! ```
//!
//! Every sample drives one update of the phase `phi`, the frequency `omega`
//! and the `2(M+1)` coefficients from the prediction error `e = y - y_hat`.
//! Phase wraparound marks the completion of one period (one stride when the
//! input is a thigh gyroscope trace).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the Fourier coefficients are corrected from the prediction error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientUpdate {
    /// Each coefficient moves along its own basis function:
    /// `alpha_m += T eta e sin(m phi)`, `beta_m += T eta e cos(m phi)`.
    /// This is gradient descent on `e^2` for the series above.
    #[default]
    Gradient,
    /// Crossed basis: `alpha_m += T eta e cos(m phi)`, `beta_m += T eta e sin(m phi)`.
    /// Kept for comparison only; with the sine/cosine series above one mode
    /// of every harmonic grows without bound and the DC term is never learned.
    Crossed,
}

/// Estimator constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdsConfig {
    /// Number of harmonics `M`; the series holds `M + 1` terms including DC.
    pub harmonic_count: usize,
    /// Frequency/phase coupling gain `mu`.
    pub freq_learn_rate: f64,
    /// Coefficient learning rate `eta`.
    pub coeff_learn_rate: f64,
    /// Sampling period in seconds.
    pub sample_period: f64,
    /// Initial phase in radians.
    pub initial_phase: f64,
    /// Initial frequency in rad/s.
    pub initial_frequency: f64,
    pub coefficient_update: CoefficientUpdate,
}

impl Default for CdsConfig {
    fn default() -> Self {
        Self {
            harmonic_count: 7,
            freq_learn_rate: 0.1,
            coeff_learn_rate: 1.0,
            sample_period: 1.0 / 285.0,
            initial_phase: 0.0,
            initial_frequency: TAU * 4.0 / 5.0,
            coefficient_update: CoefficientUpdate::Gradient,
        }
    }
}

impl CdsConfig {
    /// Default constants at a different sampling rate (Hz).
    pub fn with_sample_rate(rate_hz: f64) -> Self {
        Self {
            sample_period: 1.0 / rate_hz,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.harmonic_count < 1 {
            return Err(Error::config("cds.harmonic_count must be >= 1"));
        }
        let positive = [
            ("cds.freq_learn_rate", self.freq_learn_rate),
            ("cds.coeff_learn_rate", self.coeff_learn_rate),
            ("cds.sample_period", self.sample_period),
            ("cds.initial_frequency", self.initial_frequency),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        if !self.initial_phase.is_finite() {
            return Err(Error::config("cds.initial_phase must be finite"));
        }
        Ok(())
    }
}

/// Estimator state: phase, frequency and Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CdsState {
    /// Phase in `[0, 2pi)`.
    pub phase: f64,
    /// Frequency in rad/s, never negative.
    pub frequency: f64,
    /// Sine coefficients `alpha_0..alpha_M`.
    pub alpha: Vec<f64>,
    /// Cosine coefficients `beta_0..beta_M`.
    pub beta: Vec<f64>,
    /// Prediction used by the most recent update.
    pub last_prediction: f64,
    /// Completed periods, counted on phase wraparound.
    pub stride_count: u64,
}

/// Result of a single [`CdsState::update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    /// Prediction error `y - y_hat` that drove the update.
    pub error: f64,
    /// True when the phase wrapped past `2pi` on this update.
    pub stride_completed: bool,
}

impl CdsState {
    /// Cold-start state from the configured initial phase and frequency, zero coefficients.
    pub fn new(config: &CdsConfig) -> Self {
        let n = config.harmonic_count + 1;
        Self {
            phase: wrap_phase(config.initial_phase),
            frequency: config.initial_frequency.abs(),
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
            last_prediction: 0.0,
            stride_count: 0,
        }
    }

    pub fn harmonic_count(&self) -> usize {
        self.alpha.len() - 1
    }

    /// Evaluate the Fourier series at the current phase.
    pub fn predict(&self) -> f64 {
        self.predict_at(self.phase)
    }

    /// Evaluate the Fourier series at an arbitrary phase.
    pub fn predict_at(&self, phase: f64) -> f64 {
        let mut sum = 0.0;
        for (m, (s, c)) in Harmonics::new(phase, self.harmonic_count()).enumerate() {
            sum += self.alpha[m] * s + self.beta[m] * c;
        }
        sum
    }

    /// Estimated signal frequency in Hz (`omega / 2pi`).
    pub fn cadence(&self) -> f64 {
        self.frequency / TAU
    }

    /// Consume one sample. Non-finite samples are rejected and leave the state untouched.
    pub fn update(&mut self, sample: f64, config: &CdsConfig) -> Result<UpdateOutcome> {
        if !sample.is_finite() {
            return Err(Error::input(format!("non-finite sample {sample}")));
        }
        let t = config.sample_period;
        let mu = config.freq_learn_rate;
        let eta = config.coeff_learn_rate;
        let m_max = self.harmonic_count();

        let prediction = self.predict();
        let error = sample - prediction;
        let coupling = mu * error * self.phase.sin();

        let old_phase = self.phase;
        let new_phase = wrap_phase(old_phase + t * (self.frequency - coupling));
        let new_frequency = (self.frequency - t * coupling).abs();

        let gain = t * eta * error;
        for (m, (s, c)) in Harmonics::new(old_phase, m_max).enumerate() {
            match config.coefficient_update {
                CoefficientUpdate::Gradient => {
                    self.alpha[m] += gain * s;
                    self.beta[m] += gain * c;
                }
                CoefficientUpdate::Crossed => {
                    self.alpha[m] += gain * c;
                    self.beta[m] += gain * s;
                }
            }
        }

        self.phase = new_phase;
        self.frequency = new_frequency;
        self.last_prediction = prediction;
        let stride_completed = new_phase < old_phase;
        if stride_completed {
            self.stride_count += 1;
        }
        Ok(UpdateOutcome {
            error,
            stride_completed,
        })
    }
}

/// Reduce a phase to `[0, 2pi)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    // rem_euclid rounds up to exactly TAU for tiny negative inputs.
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Iterator over `(sin(m phi), cos(m phi))` for `m = 0..=max`, built by
/// repeated rotation from a single `sin_cos` evaluation.
struct Harmonics {
    s1: f64,
    c1: f64,
    s: f64,
    c: f64,
    remaining: usize,
}

impl Harmonics {
    fn new(phase: f64, max: usize) -> Self {
        let (s1, c1) = phase.sin_cos();
        Self {
            s1,
            c1,
            s: 0.0,
            c: 1.0,
            remaining: max + 1,
        }
    }
}

impl Iterator for Harmonics {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = (self.s, self.c);
        let s = self.s * self.c1 + self.c * self.s1;
        let c = self.c * self.c1 - self.s * self.s1;
        self.s = s;
        self.c = c;
        Some(out)
    }
}

/// Runs the estimator over a whole uniformly sampled trace.
///
/// Returns the state after every sample; convenient for offline inspection.
pub fn estimate_trace(samples: &[f64], config: &CdsConfig) -> Result<Vec<CdsState>> {
    config.validate()?;
    let mut state = CdsState::new(config);
    let mut out = Vec::with_capacity(samples.len());
    for &y in samples {
        state.update(y, config)?;
        out.push(state.clone());
    }
    Ok(out)
}
