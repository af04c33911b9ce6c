//! Cue selection against a learned response model.
//!
//! The cue minimizes `J(c) = (target - mean(current, c))^2` over a box around
//! the walker's baseline cadence. Descent starts from a uniform random draw.
//! When the model is flat at that draw (the start lies far from every
//! training input) the draw itself is returned and the decision is labelled
//! exploration; otherwise the box is searched by projected gradient descent
//! and the decision is labelled converged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpModel, ResponseInput};

/// Fractional half-width of the cue box around the baseline cadence.
pub const CUE_BOUND_FRACTION: f64 = 0.35;

/// Analysis boundary between the exploration and converged phases, seconds.
pub const EXPLORATION_WINDOW_S: f64 = 70.0;

/// Admissible cue frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueBounds {
    pub lower: f64,
    pub upper: f64,
    pub baseline: f64,
}

impl CueBounds {
    /// `[0.65, 1.35] x baseline`.
    pub fn from_baseline(baseline: f64) -> Result<Self> {
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::input(format!("baseline cadence must be > 0, got {baseline}")));
        }
        Ok(Self {
            lower: baseline * (1.0 - CUE_BOUND_FRACTION),
            upper: baseline * (1.0 + CUE_BOUND_FRACTION),
            baseline,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower >= 0.0 && self.lower < self.upper) {
            return Err(Error::input(format!(
                "invalid cue bounds [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn contains(&self, cue: f64) -> bool {
        cue >= self.lower && cue <= self.upper
    }

    pub fn clamp(&self, cue: f64) -> f64 {
        cue.clamp(self.lower, self.upper)
    }
}

/// Which regime produced a decision, or which analysis window a time falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuePhase {
    Exploration,
    Converged,
}

impl CuePhase {
    pub fn as_str(self) -> &'static str {
        match self {
            CuePhase::Exploration => "exp",
            CuePhase::Converged => "cvg",
        }
    }
}

impl std::str::FromStr for CuePhase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" | "exploration" => Ok(CuePhase::Exploration),
            "cvg" | "converged" => Ok(CuePhase::Converged),
            other => Err(Error::input(format!("unknown phase '{other}'"))),
        }
    }
}

/// Outcome of [`select_cue`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CueDecision {
    pub cue: f64,
    pub phase_label: CuePhase,
    /// `J` at the returned cue, Hz^2.
    pub objective_value: f64,
    /// Descent iterations spent (0 for exploration).
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Gradient magnitude (Hz^2/Hz) under which the random start is kept.
    pub optimality_tolerance: f64,
    /// Iteration cap per descent run.
    pub max_iterations: usize,
    /// Extra evenly spaced starts that guard against local minima.
    pub grid_starts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            optimality_tolerance: 1e-6,
            max_iterations: 200,
            grid_starts: 32,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.optimality_tolerance.is_finite() && self.optimality_tolerance > 0.0) {
            return Err(Error::config("optimizer.optimality_tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("optimizer.max_iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Analysis phase of a trial time: exploration for the first 70 s.
pub fn classify_phase(trial_time: f64) -> CuePhase {
    if trial_time < EXPLORATION_WINDOW_S {
        CuePhase::Exploration
    } else {
        CuePhase::Converged
    }
}

struct Objective<'a> {
    model: &'a GpModel,
    current: f64,
    target: f64,
}

impl Objective<'_> {
    fn value(&self, cue: f64) -> f64 {
        let m = self
            .model
            .mean(&ResponseInput::new(self.current, cue))
            .expect("model has data");
        (self.target - m).powi(2)
    }

    fn value_and_slope(&self, cue: f64) -> (f64, f64) {
        let (m, dm) = self
            .model
            .mean_and_cue_slope(&ResponseInput::new(self.current, cue))
            .expect("model has data");
        let r = self.target - m;
        (r * r, -2.0 * r * dm)
    }
}

/// Pick the cue for the next interval.
pub fn select_cue(
    model: &GpModel,
    current_cadence: f64,
    target: f64,
    bounds: &CueBounds,
    seed: u64,
    config: &OptimizerConfig,
) -> Result<CueDecision> {
    bounds.validate()?;
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::input(format!("target must be > 0, got {target}")));
    }
    if !(current_cadence.is_finite() && current_cadence >= 0.0) {
        return Err(Error::input(format!("current cadence must be >= 0, got {current_cadence}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(bounds.lower..=bounds.upper);

    if model.is_empty() {
        // No response data: predict persistence of the current cadence.
        return Ok(CueDecision {
            cue: start,
            phase_label: CuePhase::Exploration,
            objective_value: (target - current_cadence).powi(2),
            iterations: 0,
        });
    }

    let objective = Objective {
        model,
        current: current_cadence,
        target,
    };
    let (j0, g0) = objective.value_and_slope(start);
    if g0.abs() < config.optimality_tolerance {
        return Ok(CueDecision {
            cue: start,
            phase_label: CuePhase::Exploration,
            objective_value: j0,
            iterations: 0,
        });
    }

    let mut best = descend(&objective, start, bounds, config);
    let n = config.grid_starts;
    for i in 0..n {
        let c0 = if n == 1 {
            0.5 * (bounds.lower + bounds.upper)
        } else {
            bounds.lower + (bounds.upper - bounds.lower) * i as f64 / (n - 1) as f64
        };
        let run = descend(&objective, c0, bounds, config);
        let iterations = best.iterations + run.iterations;
        let better = run.objective_value < best.objective_value - 1e-15
            || ((run.objective_value - best.objective_value).abs() <= 1e-15 && run.cue < best.cue);
        if better {
            best = CueDecision { iterations, ..run };
        } else {
            best.iterations = iterations;
        }
    }
    best.cue = bounds.clamp(best.cue);
    best.phase_label = CuePhase::Converged;
    Ok(best)
}

/// Projected gradient descent with Armijo backtracking on the scalar cue.
fn descend(objective: &Objective<'_>, start: f64, bounds: &CueBounds, config: &OptimizerConfig) -> CueDecision {
    let width = bounds.upper - bounds.lower;
    let mut c = bounds.clamp(start);
    let (mut j, mut g) = objective.value_and_slope(c);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        // Projected gradient: zero when the slope pushes against an active bound.
        let blocked = (c <= bounds.lower && g > 0.0) || (c >= bounds.upper && g < 0.0);
        if blocked || g.abs() < config.optimality_tolerance * 1e-3 {
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while step * g.abs() > 1e-13 * width {
            let cand = bounds.clamp(c - step * g);
            let jc = objective.value(cand);
            if jc <= j + 1e-4 * g * (cand - c) {
                let moved = (cand - c).abs();
                c = cand;
                (j, g) = objective.value_and_slope(c);
                step *= 2.0;
                accepted = moved > 0.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    CueDecision {
        cue: c,
        phase_label: CuePhase::Converged,
        objective_value: j,
        iterations,
    }
}
