//! Cue-provision policies and the shared acceptance gate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::optimizer::{select_cue, CueBounds, CuePhase, OptimizerConfig};

/// Half-width of the acceptance band as a fraction of the target.
pub const ACCEPTANCE_BAND: f64 = 0.01;

pub const DEFAULT_BEAT_COUNT: u32 = 8;

pub const DEFAULT_P_GAIN: f64 = 0.5;

/// A cueing policy. `Control` never cues and serves the baseline session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StrategyKind {
    Control,
    Fixed,
    Proportional { p_gain: f64 },
    Adaptive,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Control => "control",
            StrategyKind::Fixed => "fixed",
            StrategyKind::Proportional { .. } => "proportional",
            StrategyKind::Adaptive => "adaptive",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let StrategyKind::Proportional { p_gain } = self {
            if !(p_gain.is_finite() && *p_gain > 0.0) {
                return Err(Error::config(format!("p_gain must be > 0, got {p_gain}")));
            }
        }
        Ok(())
    }

    /// Parse a strategy name; `proportional` takes `p_gain`.
    pub fn parse_with_gain(name: &str, p_gain: f64) -> Result<Self> {
        let kind = match name {
            "control" => StrategyKind::Control,
            "fixed" => StrategyKind::Fixed,
            "proportional" => StrategyKind::Proportional { p_gain },
            "adaptive" => StrategyKind::Adaptive,
            other => return Err(Error::config(format!("unknown strategy '{other}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_with_gain(s, DEFAULT_P_GAIN)
    }
}

/// What to play next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CueCommand {
    Silence,
    Burst {
        /// Beat rate in Hz.
        frequency: f64,
        beat_count: u32,
        /// Trial time the burst starts, seconds.
        issued_at: f64,
        /// Optimizer regime, for adaptive bursts only.
        phase_label: Option<CuePhase>,
    },
}

impl CueCommand {
    /// Burst length in seconds (`beat_count / frequency`); zero for silence.
    pub fn duration(&self) -> f64 {
        match *self {
            CueCommand::Silence => 0.0,
            CueCommand::Burst {
                frequency,
                beat_count,
                ..
            } => beat_count as f64 / frequency,
        }
    }

    pub fn frequency(&self) -> Option<f64> {
        match *self {
            CueCommand::Silence => None,
            CueCommand::Burst { frequency, .. } => Some(frequency),
        }
    }
}

/// True when the cadence is outside the closed ±1% band around the target.
pub fn gate(current_cadence: f64, target: f64) -> bool {
    gate_with_band(current_cadence, target, ACCEPTANCE_BAND)
}

pub fn gate_with_band(current_cadence: f64, target: f64, band: f64) -> bool {
    // Relative epsilon on the edge: 1.98 against 2.0 is inside the 1% band.
    let tol = band * target;
    (current_cadence - target).abs() > tol * (1.0 + 1e-12)
}

/// Everything a policy may look at when the gate fires.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub current_cadence: f64,
    pub target: f64,
    pub bounds: CueBounds,
    /// Response model, required by the adaptive policy.
    pub model: Option<&'a GpModel>,
    pub seed: u64,
    pub time: f64,
    pub beat_count: u32,
    pub optimizer: &'a OptimizerConfig,
}

/// Produce the cue command for a policy once the gate has fired.
pub fn decide(kind: StrategyKind, ctx: &DecisionContext<'_>) -> Result<CueCommand> {
    kind.validate()?;
    ctx.bounds.validate()?;
    if !(ctx.target.is_finite() && ctx.target > 0.0) {
        return Err(Error::input(format!("target must be > 0, got {}", ctx.target)));
    }
    if !(ctx.current_cadence.is_finite() && ctx.current_cadence >= 0.0) {
        return Err(Error::input(format!(
            "current cadence must be >= 0, got {}",
            ctx.current_cadence
        )));
    }
    if ctx.beat_count == 0 {
        return Err(Error::input("beat_count must be >= 1"));
    }
    let (frequency, phase_label) = match kind {
        StrategyKind::Control => return Ok(CueCommand::Silence),
        StrategyKind::Fixed => {
            if !ctx.bounds.contains(ctx.target) {
                return Err(Error::input(format!(
                    "target {} outside cue bounds [{}, {}]",
                    ctx.target, ctx.bounds.lower, ctx.bounds.upper
                )));
            }
            (ctx.target, None)
        }
        StrategyKind::Proportional { p_gain } => {
            let raw = ctx.current_cadence + p_gain * (ctx.target - ctx.current_cadence);
            (ctx.bounds.clamp(raw), None)
        }
        StrategyKind::Adaptive => {
            let model = ctx
                .model
                .ok_or_else(|| Error::input("adaptive strategy needs a response model"))?;
            let d = select_cue(
                model,
                ctx.current_cadence,
                ctx.target,
                &ctx.bounds,
                ctx.seed,
                ctx.optimizer,
            )?;
            (d.cue, Some(d.phase_label))
        }
    };
    Ok(CueCommand::Burst {
        frequency,
        beat_count: ctx.beat_count,
        issued_at: ctx.time,
        phase_label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpHyperparams;
    use crate::gp::ResponseInput;
    use proptest::prelude::*;

    fn ctx<'a>(current: f64, target: f64, model: Option<&'a GpModel>, opt: &'a OptimizerConfig) -> DecisionContext<'a> {
        DecisionContext {
            current_cadence: current,
            target,
            bounds: CueBounds::from_baseline(1.67).unwrap(),
            model,
            seed: 3,
            time: 12.5,
            beat_count: DEFAULT_BEAT_COUNT,
            optimizer: opt,
        }
    }

    #[test]
    fn gate_band_edges() {
        assert!(!gate(2.0, 2.0));
        assert!(gate(2.025, 2.0));
        assert!(!gate(1.98, 2.0));
        assert!(!gate(2.02, 2.0));
        assert!(gate(1.97, 2.0));
    }

    #[test]
    fn fixed_cues_at_target() {
        let opt = OptimizerConfig::default();
        let c = decide(StrategyKind::Fixed, &ctx(1.6, 1.92, None, &opt)).unwrap();
        assert_eq!(
            c,
            CueCommand::Burst { frequency: 1.92, beat_count: 8, issued_at: 12.5, phase_label: None }
        );
        assert!((c.duration() - 8.0 / 1.92).abs() < 1e-15);
    }

    #[test]
    fn proportional_halfway() {
        let opt = OptimizerConfig::default();
        let c = decide(StrategyKind::Proportional { p_gain: 0.5 }, &ctx(1.6, 2.0, None, &opt)).unwrap();
        assert!((c.frequency().unwrap() - 1.8).abs() < 1e-12);
    }

    #[test]
    fn control_is_silent() {
        let opt = OptimizerConfig::default();
        let c = decide(StrategyKind::Control, &ctx(1.6, 2.0, None, &opt)).unwrap();
        assert_eq!(c, CueCommand::Silence);
        assert_eq!(c.duration(), 0.0);
    }

    #[test]
    fn adaptive_with_identity_model_cues_near_target() {
        let mut model = GpModel::new(GpHyperparams::default()).unwrap();
        for p in [1.5, 1.6, 1.7, 1.8, 1.9] {
            for i in 0..25 {
                let c = 1.05 + 1.25 * i as f64 / 24.0;
                model.append(p, c, c).unwrap();
            }
        }
        let opt = OptimizerConfig::default();
        let c = decide(StrategyKind::Adaptive, &ctx(1.6, 2.0, Some(&model), &opt)).unwrap();
        let f = c.frequency().unwrap();
        // Grid oracle on the same model.
        let b = CueBounds::from_baseline(1.67).unwrap();
        let grid_best = (0..1000)
            .map(|i| b.lower + (b.upper - b.lower) * i as f64 / 999.0)
            .min_by(|a, z| {
                let ja = (2.0 - model.mean(&ResponseInput::new(1.6, *a)).unwrap()).powi(2);
                let jz = (2.0 - model.mean(&ResponseInput::new(1.6, *z)).unwrap()).powi(2);
                ja.total_cmp(&jz)
            })
            .unwrap();
        assert!((grid_best - 2.0).abs() < 0.02);
        assert!((f - 2.0).abs() < 0.02, "cue {f}");
        assert!(matches!(c, CueCommand::Burst { phase_label: Some(CuePhase::Converged), .. }));
    }

    #[test]
    fn adaptive_without_model_is_an_error() {
        let opt = OptimizerConfig::default();
        assert!(decide(StrategyKind::Adaptive, &ctx(1.6, 2.0, None, &opt)).is_err());
    }

    #[test]
    fn fixed_target_outside_bounds_is_an_error() {
        let opt = OptimizerConfig::default();
        assert!(decide(StrategyKind::Fixed, &ctx(1.6, 3.0, None, &opt)).is_err());
    }

    #[test]
    fn names_round_trip() {
        for n in ["control", "fixed", "proportional", "adaptive"] {
            assert_eq!(n.parse::<StrategyKind>().unwrap().name(), n);
        }
        assert!("nope".parse::<StrategyKind>().is_err());
        assert!(StrategyKind::parse_with_gain("proportional", 0.0).is_err());
    }

    proptest! {
        #[test]
        fn proportional_lies_strictly_between(current in 1.1f64..2.2, target in 1.1f64..2.2, gain in 0.01f64..0.99) {
            prop_assume!((current - target).abs() > 1e-6);
            let opt = OptimizerConfig::default();
            let c = decide(StrategyKind::Proportional { p_gain: gain }, &ctx(current, target, None, &opt)).unwrap();
            let f = c.frequency().unwrap();
            prop_assert!(f > current.min(target) && f < current.max(target));
        }

        #[test]
        fn every_policy_respects_bounds(current in 0.5f64..3.0, up in any::<bool>()) {
            let opt = OptimizerConfig::default();
            let b = CueBounds::from_baseline(1.67).unwrap();
            let target = if up { 1.2 * 1.67 } else { 0.8 * 1.67 };
            let mut model = GpModel::new(GpHyperparams::default()).unwrap();
            model.append(1.67, 1.9, 1.8).unwrap();
            for kind in [StrategyKind::Fixed, StrategyKind::Proportional { p_gain: 0.5 }, StrategyKind::Adaptive] {
                let c = decide(kind, &ctx(current, target, Some(&model), &opt)).unwrap();
                prop_assert!(b.contains(c.frequency().unwrap()));
            }
        }
    }
}
