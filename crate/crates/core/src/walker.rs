//! Simulated walker standing in for a study participant.
//!
//! Cadence follows first-order dynamics. An accepted burst pulls it toward
//! the cue; the effective baseline pulls it back, during bursts too unless
//! `pull_while_cued` is off, so a strong baseline pull means the walker only
//! partly adopts a cue. The effective baseline starts at the pace of the last
//! followed burst when that burst ends and relaxes to the walker's own
//! baseline with a configurable half-life, which models fading memory of the
//! cue pace. An Ornstein-Uhlenbeck term adds cadence variability. The walker
//! emits a thigh-gyroscope-like signal: a few harmonics of the gait phase.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor on the simulated cadence, Hz.
const MIN_CADENCE: f64 = 0.05;

/// One harmonic of the emitted signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    /// Phase offset in radians.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkerParams {
    /// Natural cadence, Hz.
    pub baseline_cadence: f64,
    /// Rate of convergence toward a followed cue, 1/s.
    pub cue_follow_gain: f64,
    /// Rate of convergence toward the effective baseline in silence, 1/s.
    pub baseline_pull_gain: f64,
    /// Probability that a burst is followed at all (drawn once per burst).
    pub follow_probability: f64,
    /// Stationary standard deviation of the cadence noise, Hz.
    pub cadence_noise_std: f64,
    /// Correlation time of the cadence noise, s.
    #[serde(default = "default_noise_time")]
    pub noise_correlation_time: f64,
    /// Harmonic `h` (1-based) has frequency `h * cadence`.
    #[serde(default = "default_harmonics")]
    pub signal_harmonics: Vec<Harmonic>,
    /// Half-life of the remembered cue pace, s.
    pub memory_halflife: f64,
    /// Keep the baseline pull active while a burst is followed.
    #[serde(default = "default_pull_while_cued")]
    pub pull_while_cued: bool,
}

fn default_pull_while_cued() -> bool {
    true
}

fn default_noise_time() -> f64 {
    2.0
}

/// Three-harmonic waveform resembling a sagittal thigh gyroscope, deg/s.
pub fn default_harmonics() -> Vec<Harmonic> {
    vec![
        Harmonic { amplitude: 150.0, phase: 0.0 },
        Harmonic { amplitude: 40.0, phase: 0.6 },
        Harmonic { amplitude: 15.0, phase: 1.9 },
    ]
}

impl WalkerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_cadence.is_finite() && self.baseline_cadence > 0.0) {
            return Err(Error::config("walker.baseline_cadence must be > 0"));
        }
        let non_negative = [
            ("cue_follow_gain", self.cue_follow_gain),
            ("baseline_pull_gain", self.baseline_pull_gain),
            ("cadence_noise_std", self.cadence_noise_std),
            ("memory_halflife", self.memory_halflife),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("walker.{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.follow_probability) {
            return Err(Error::config("walker.follow_probability must lie in [0, 1]"));
        }
        if !(self.noise_correlation_time.is_finite() && self.noise_correlation_time > 0.0) {
            return Err(Error::config("walker.noise_correlation_time must be > 0"));
        }
        if self.signal_harmonics.is_empty() {
            return Err(Error::config("walker.signal_harmonics must not be empty"));
        }
        Ok(())
    }

    /// Follows cues quickly and barely drifts back.
    pub fn compliant() -> Self {
        Self {
            baseline_cadence: 1.67,
            cue_follow_gain: 2.5,
            baseline_pull_gain: 0.02,
            follow_probability: 1.0,
            cadence_noise_std: 0.01,
            noise_correlation_time: default_noise_time(),
            signal_harmonics: default_harmonics(),
            memory_halflife: 120.0,
            pull_while_cued: true,
        }
    }

    /// Follows cues but returns to its natural pace as soon as they stop.
    pub fn baseline_puller() -> Self {
        Self {
            baseline_cadence: 1.67,
            cue_follow_gain: 1.5,
            baseline_pull_gain: 0.3,
            follow_probability: 1.0,
            cadence_noise_std: 0.01,
            noise_correlation_time: default_noise_time(),
            signal_harmonics: default_harmonics(),
            memory_halflife: 40.0,
            pull_while_cued: true,
        }
    }

    /// Ignores a sizeable share of bursts.
    pub fn inconsistent() -> Self {
        Self {
            baseline_cadence: 1.67,
            cue_follow_gain: 0.8,
            baseline_pull_gain: 0.1,
            follow_probability: 0.6,
            cadence_noise_std: 0.015,
            noise_correlation_time: default_noise_time(),
            signal_harmonics: default_harmonics(),
            memory_halflife: 20.0,
            pull_while_cued: true,
        }
    }

    /// Built-in persona by name.
    pub fn persona(name: &str) -> Option<Self> {
        match name {
            "compliant" => Some(Self::compliant()),
            "baseline-puller" => Some(Self::baseline_puller()),
            "inconsistent" => Some(Self::inconsistent()),
            _ => None,
        }
    }

    pub const PERSONAS: [&'static str; 3] = ["compliant", "baseline-puller", "inconsistent"];

    /// Emitted signal at a gait phase.
    pub fn signal_at(&self, phase: f64) -> f64 {
        self.signal_harmonics
            .iter()
            .enumerate()
            .map(|(i, h)| h.amplitude * ((i + 1) as f64 * phase + h.phase).sin())
            .sum()
    }
}

/// A cue burst as seen by the walker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveCue {
    pub frequency: f64,
    /// Distinguishes consecutive bursts; acceptance is drawn on the first step of each.
    pub burst_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkerState {
    /// Cadence including noise, Hz.
    pub true_cadence: f64,
    /// Gait phase, radians in `[0, 2pi)`.
    pub true_phase: f64,
    /// Pace of the last followed cue, if any.
    pub remembered_target: Option<f64>,
    pub time: f64,
    drift_cadence: f64,
    noise: f64,
    memory_since: f64,
    /// Current burst: id, accepted, frequency.
    burst: Option<(u64, bool, f64)>,
}

impl WalkerState {
    pub fn new(params: &WalkerParams) -> Self {
        Self {
            true_cadence: params.baseline_cadence,
            true_phase: 0.0,
            remembered_target: None,
            time: 0.0,
            drift_cadence: params.baseline_cadence,
            noise: 0.0,
            memory_since: 0.0,
            burst: None,
        }
    }

    /// Start from a chosen cadence instead of the baseline.
    pub fn with_cadence(params: &WalkerParams, cadence: f64) -> Self {
        Self {
            true_cadence: cadence,
            drift_cadence: cadence,
            ..Self::new(params)
        }
    }

    /// Noise-free cadence component.
    pub fn drift_cadence(&self) -> f64 {
        self.drift_cadence
    }

    /// Whether the current burst (if any) is being followed.
    pub fn following(&self) -> bool {
        matches!(self.burst, Some((_, true, _)))
    }

    /// Silent-phase attractor: remembered pace relaxing toward the baseline.
    pub fn effective_baseline(&self, params: &WalkerParams) -> f64 {
        match self.remembered_target {
            None => params.baseline_cadence,
            Some(target) => {
                if params.memory_halflife <= 0.0 {
                    return params.baseline_cadence;
                }
                let age = (self.time - self.memory_since).max(0.0);
                let w = (-age / params.memory_halflife * std::f64::consts::LN_2).exp();
                params.baseline_cadence + (target - params.baseline_cadence) * w
            }
        }
    }

    /// Advance by `dt` seconds and return the emitted sample at the new phase.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        params: &WalkerParams,
        cue: Option<ActiveCue>,
        dt: f64,
        rng: &mut R,
    ) -> f64 {
        let same_burst = matches!((self.burst, cue), (Some((id, ..)), Some(c)) if id == c.burst_id);
        if !same_burst {
            if let Some((_, true, frequency)) = self.burst {
                self.remembered_target = Some(frequency);
                self.memory_since = self.time;
            }
            self.burst = cue.map(|c| (c.burst_id, rng.random::<f64>() < params.follow_probability, c.frequency));
        }

        let attractor = self.effective_baseline(params);
        let (rate, goal) = match (self.burst, cue) {
            (Some((_, true, _)), Some(c)) => {
                let pull = if params.pull_while_cued { params.baseline_pull_gain } else { 0.0 };
                let rate = params.cue_follow_gain + pull;
                let goal = if rate > 0.0 {
                    (params.cue_follow_gain * c.frequency + pull * attractor) / rate
                } else {
                    c.frequency
                };
                (rate, goal)
            }
            _ => (params.baseline_pull_gain, attractor),
        };
        let step = -(-rate * dt).exp_m1();
        self.drift_cadence += (goal - self.drift_cadence) * step;

        let a = (-dt / params.noise_correlation_time).exp();
        let z: f64 = StandardNormal.sample(rng);
        self.noise = self.noise * a + params.cadence_noise_std * (1.0 - a * a).sqrt() * z;

        self.true_cadence = (self.drift_cadence + self.noise).max(MIN_CADENCE);
        self.true_phase = (self.true_phase + TAU * self.true_cadence * dt).rem_euclid(TAU);
        self.time += dt;
        params.signal_at(self.true_phase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet(params: WalkerParams) -> WalkerParams {
        WalkerParams {
            cadence_noise_std: 0.0,
            ..params
        }
    }

    const DT: f64 = 1.0 / 285.0;

    #[test]
    fn personas_validate() {
        for name in WalkerParams::PERSONAS {
            WalkerParams::persona(name).unwrap().validate().unwrap();
        }
        assert!(WalkerParams::persona("nobody").is_none());
    }

    #[test]
    fn no_pull_no_cue_no_noise_is_constant() {
        let p = WalkerParams {
            baseline_pull_gain: 0.0,
            ..quiet(WalkerParams::compliant())
        };
        let mut s = WalkerState::with_cadence(&p, 1.9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..285 * 60 {
            s.step(&p, None, DT, &mut rng);
        }
        assert_eq!(s.true_cadence, 1.9);
    }

    #[test]
    fn accepted_cue_closes_gap_within_three_seconds() {
        let p = WalkerParams {
            cue_follow_gain: 1.0,
            follow_probability: 1.0,
            pull_while_cued: false,
            ..quiet(WalkerParams::compliant())
        };
        let mut s = WalkerState::with_cadence(&p, 1.6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cue = Some(ActiveCue { frequency: 2.0, burst_id: 1 });
        let mut prev = s.true_cadence;
        let n = (3.0 / DT).round() as usize;
        for _ in 0..n {
            s.step(&p, cue, DT, &mut rng);
            assert!(s.true_cadence > prev && s.true_cadence < 2.0);
            prev = s.true_cadence;
        }
        // Closed form: 2.0 - 0.4 e^{-3} = 1.980, within 5% of 2.0.
        let expected = 2.0 - 0.4 * (-(n as f64) * DT).exp();
        assert!((s.true_cadence - expected).abs() < 1e-9);
        assert!((2.0 - s.true_cadence) / 2.0 < 0.05);
    }

    #[test]
    fn pull_while_cued_settles_between_cue_and_baseline() {
        let p = quiet(WalkerParams::baseline_puller());
        let mut s = WalkerState::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cue = Some(ActiveCue { frequency: 2.0, burst_id: 1 });
        let n = 285 * 8;
        for _ in 0..n {
            s.step(&p, cue, DT, &mut rng);
        }
        let g = p.cue_follow_gain + p.baseline_pull_gain;
        let goal = (p.cue_follow_gain * 2.0 + p.baseline_pull_gain * 1.67) / g;
        let expected = goal + (1.67 - goal) * (-g * n as f64 * DT).exp();
        assert!((s.true_cadence - expected).abs() < 1e-9, "{} vs {expected}", s.true_cadence);
        assert!(s.true_cadence < 2.0 - 0.05);
    }

    #[test]
    fn silent_decay_matches_closed_form() {
        let p = WalkerParams {
            baseline_cadence: 1.67,
            baseline_pull_gain: 0.1,
            ..quiet(WalkerParams::compliant())
        };
        let mut s = WalkerState::with_cadence(&p, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 1..=285 * 30 {
            s.step(&p, None, DT, &mut rng);
            let t = i as f64 * DT;
            let expected = 1.67 + (2.0 - 1.67) * (-0.1 * t).exp();
            assert!((s.true_cadence - expected).abs() < 1e-4);
        }
    }

    #[test]
    fn memory_relaxes_to_baseline() {
        let p = quiet(WalkerParams::baseline_puller());
        let mut s = WalkerState::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cue = Some(ActiveCue { frequency: 2.0, burst_id: 7 });
        for _ in 0..285 * 5 {
            s.step(&p, cue, DT, &mut rng);
        }
        // Committed only once the burst is over.
        assert_eq!(s.remembered_target, None);
        s.step(&p, None, DT, &mut rng);
        assert_eq!(s.remembered_target, Some(2.0));
        let just_after = s.effective_baseline(&p);
        assert!((just_after - 2.0).abs() < 1e-3);
        for _ in 1..(285.0 * p.memory_halflife) as usize {
            s.step(&p, None, DT, &mut rng);
        }
        let mid = s.effective_baseline(&p);
        assert!((mid - (1.67 + 0.33 / 2.0)).abs() < 2e-3, "{mid}");
    }

    #[test]
    fn rejected_burst_is_ignored() {
        let p = WalkerParams {
            follow_probability: 0.0,
            ..quiet(WalkerParams::inconsistent())
        };
        let mut s = WalkerState::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cue = Some(ActiveCue { frequency: 2.0, burst_id: 1 });
        for _ in 0..285 * 5 {
            s.step(&p, cue, DT, &mut rng);
        }
        assert!(!s.following());
        assert_eq!(s.true_cadence, p.baseline_cadence);
    }

    #[test]
    fn acceptance_drawn_once_per_burst() {
        let p = WalkerParams {
            follow_probability: 0.5,
            ..quiet(WalkerParams::inconsistent())
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut followed = 0;
        for id in 0..400u64 {
            let mut s = WalkerState::new(&p);
            let cue = Some(ActiveCue { frequency: 2.0, burst_id: id });
            s.step(&p, cue, DT, &mut rng);
            let first = s.following();
            for _ in 0..50 {
                s.step(&p, cue, DT, &mut rng);
                assert_eq!(s.following(), first);
            }
            followed += first as usize;
        }
        assert!((150..250).contains(&followed), "{followed}");
    }

    #[test]
    fn same_seed_same_trajectory() {
        let p = WalkerParams::inconsistent();
        let run = |seed| {
            let mut s = WalkerState::new(&p);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..2000)
                .map(|i| {
                    let cue = (i > 500 && i < 1500).then_some(ActiveCue { frequency: 2.0, burst_id: 1 });
                    s.step(&p, cue, DT, &mut rng)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn noise_has_requested_spread() {
        let p = WalkerParams {
            cadence_noise_std: 0.02,
            ..WalkerParams::compliant()
        };
        let mut s = WalkerState::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xs = Vec::new();
        for i in 0..285 * 600 {
            s.step(&p, None, DT, &mut rng);
            if i % 285 == 0 {
                xs.push(s.true_cadence - s.drift_cadence());
            }
        }
        let sd = (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((sd - 0.02).abs() < 0.006, "{sd}");
    }
}
