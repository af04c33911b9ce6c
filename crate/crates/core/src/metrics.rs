//! Outcome metrics over trial logs and their stratified summary.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizer::{CuePhase, EXPLORATION_WINDOW_S};
use crate::record::{round_sig, Direction, TrialRecord};
use crate::signal_io::{fmt_num, fmt_opt};
use crate::strategy::StrategyKind;

/// Minimum number of tail samples for an exponential fit.
pub const MIN_TAIL_SAMPLES: usize = 10;

/// Initial decay rates tried by the exponential fit, 1/s.
pub const DECAY_STARTS: [f64; 3] = [0.01, 0.05, 0.2];

/// Modeled change over the tail below which the fit is reported flat, Hz.
pub const FLAT_SPAN: f64 = 1e-6;

/// Half-open time window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Whole cueing window of a record.
    pub fn cueing(record: &TrialRecord) -> Self {
        Self::new(0.0, record.cueing_duration)
    }

    /// Window analysed for one adaptive regime.
    pub fn for_phase(record: &TrialRecord, phase: CuePhase) -> Self {
        let split = EXPLORATION_WINDOW_S.min(record.cueing_duration);
        match phase {
            CuePhase::Exploration => Self::new(0.0, split),
            CuePhase::Converged => Self::new(split, record.cueing_duration),
        }
    }
}

fn check_record(record: &TrialRecord) -> Result<()> {
    if record.samples.is_empty() {
        return Err(Error::input("trial record has no samples"));
    }
    Ok(())
}

/// Mean |cadence − target| over samples in `window`.
pub fn target_mae_in(record: &TrialRecord, window: Window) -> Result<f64> {
    check_record(record)?;
    let (sum, n) = record
        .samples
        .iter()
        .filter(|s| window.contains(s.t))
        .fold((0.0, 0usize), |(sum, n), s| (sum + (s.estimated_cadence - record.target).abs(), n + 1));
    if n == 0 {
        return Err(Error::input(format!("no samples in [{}, {})", window.start, window.end)));
    }
    Ok(sum / n as f64)
}

pub fn target_mae(record: &TrialRecord) -> Result<f64> {
    target_mae_in(record, Window::cueing(record))
}

/// Target MAE restricted to silent samples. `Ok(None)` when the window has no
/// silent sample.
pub fn intermediate_mae_in(record: &TrialRecord, window: Window) -> Result<Option<f64>> {
    check_record(record)?;
    let (sum, n) = record
        .samples
        .iter()
        .filter(|s| window.contains(s.t) && !s.cue_active)
        .fold((0.0, 0usize), |(sum, n), s| (sum + (s.estimated_cadence - record.target).abs(), n + 1));
    Ok((n > 0).then(|| sum / n as f64))
}

pub fn intermediate_mae(record: &TrialRecord) -> Result<Option<f64>> {
    intermediate_mae_in(record, Window::cueing(record))
}

/// Fraction of `window` with beats playing. Each sample's state holds until
/// the next sample; the final sample covers nothing.
pub fn percent_on_in(record: &TrialRecord, window: Window) -> Result<f64> {
    check_record(record)?;
    let mut on = 0.0;
    for w in record.samples.windows(2) {
        if !w[0].cue_active {
            continue;
        }
        let a = w[0].t.max(window.start);
        let b = w[1].t.min(window.end);
        if b > a {
            on += b - a;
        }
    }
    Ok(on / window.length())
}

pub fn percent_on(record: &TrialRecord) -> Result<f64> {
    percent_on_in(record, Window::cueing(record))
}

/// Result of fitting `a + b·exp(−λ(t − t_last))` to the post-cue tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// λ, 1/s.
    pub rate: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub residual_rms: f64,
    /// True when the tail shows no decay; `rate` is then 0.
    pub flat: bool,
}

/// Fit the exponential relaxation after the final cue.
pub fn decay_rate(record: &TrialRecord) -> Result<DecayFit> {
    check_record(record)?;
    let t_last = record
        .last_cue_end()
        .ok_or_else(|| Error::InsufficientData("no cue was issued, so there is no post-cue tail".into()))?;
    let (tau, y): (Vec<f64>, Vec<f64>) = record
        .samples
        .iter()
        .filter(|s| s.t >= t_last)
        .map(|s| (s.t - t_last, s.estimated_cadence))
        .unzip();
    fit_decay(&tau, &y)
}

/// Least-squares fit of `a + b·exp(−λτ)` with `λ ≥ 0`.
pub fn fit_decay(tau: &[f64], y: &[f64]) -> Result<DecayFit> {
    if tau.len() != y.len() {
        return Err(Error::input("tail times and values differ in length"));
    }
    if tau.len() < MIN_TAIL_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "tail has {} samples, need at least {MIN_TAIL_SAMPLES}",
            tau.len()
        )));
    }
    if tau.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite value in decay tail"));
    }
    let a0 = y[y.len() - 1];
    let b0 = y[0] - a0;
    let mut best: Option<([f64; 3], f64)> = None;
    for &l0 in &DECAY_STARTS {
        let (p, sse) = levenberg_marquardt(tau, y, [a0, b0, l0]);
        if best.is_none_or(|(_, s)| sse < s) {
            best = Some((p, sse));
        }
    }
    let ([a, b, l], sse) = best.expect("at least one start");
    let tau_max = tau.iter().cloned().fold(0.0, f64::max);
    let span = (b * -(-l * tau_max).exp_m1()).abs();
    let residual_rms = (sse / tau.len() as f64).sqrt();
    if span < FLAT_SPAN * a.abs().max(1.0) {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let rms = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        return Ok(DecayFit { rate: 0.0, offset: mean, amplitude: 0.0, residual_rms: rms, flat: true });
    }
    Ok(DecayFit { rate: l, offset: a, amplitude: b, residual_rms, flat: false })
}

fn sse(tau: &[f64], y: &[f64], p: [f64; 3]) -> f64 {
    tau.iter()
        .zip(y)
        .map(|(&t, &v)| (p[0] + p[1] * (-p[2] * t).exp() - v).powi(2))
        .sum()
}

fn levenberg_marquardt(tau: &[f64], y: &[f64], start: [f64; 3]) -> ([f64; 3], f64) {
    let mut p = start;
    p[2] = p[2].max(0.0);
    let mut cost = sse(tau, y, p);
    let mut damping = 1e-3;
    for _ in 0..500 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&t, &v) in tau.iter().zip(y) {
            let e = (-p[2] * t).exp();
            let r = p[0] + p[1] * e - v;
            let j = [1.0, e, -p[1] * t * e];
            for i in 0..3 {
                jtr[i] += j[i] * r;
                for k in 0..3 {
                    jtj[i][k] += j[i] * j[k];
                }
            }
        }
        let mut improved = false;
        while damping < 1e12 {
            let mut m = jtj;
            for (i, row) in m.iter_mut().enumerate() {
                row[i] += damping * jtj[i][i].max(1e-12);
            }
            let Some(step) = solve3(m, [-jtr[0], -jtr[1], -jtr[2]]) else {
                damping *= 10.0;
                continue;
            };
            let cand = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).max(0.0)];
            let c = sse(tau, y, cand);
            if c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = cand;
                cost = c;
                damping = (damping * 0.3).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost)
}

/// Gaussian elimination with partial pivoting on a 3×3 system.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Median |cue − estimated cadence at issue| over cues issued in `window`.
pub fn median_cue_distance_in(record: &TrialRecord, window: Window) -> Option<f64> {
    let mut d: Vec<f64> = record
        .cues
        .iter()
        .filter(|c| window.contains(c.issued_at))
        .map(|c| (c.frequency - c.cadence_at_issue).abs())
        .collect();
    median(&mut d)
}

pub fn median_cue_distance(record: &TrialRecord) -> Option<f64> {
    median_cue_distance_in(record, Window::cueing(record))
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Metrics for one trial, or one regime of an adaptive trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub seed: u64,
    pub strategy: String,
    pub direction: Direction,
    /// `None` for non-adaptive trials, which are summarised over the whole window.
    pub phase: Option<CuePhase>,
    pub target_mae: f64,
    pub intermediate_mae: Option<f64>,
    pub decay_rate: Option<f64>,
    pub percent_on: f64,
    pub cue_distance: Option<f64>,
}

fn phase_str(phase: Option<CuePhase>) -> &'static str {
    phase.map(CuePhase::as_str).unwrap_or("all")
}

/// Per-trial metric rows: one for fixed and proportional trials, exp and cvg
/// rows for adaptive trials. Control sessions yield no rows.
pub fn trial_metrics(record: &TrialRecord) -> Result<Vec<TrialMetrics>> {
    let Some(direction) = record.direction else {
        return Ok(Vec::new());
    };
    if record.strategy == StrategyKind::Control {
        return Ok(Vec::new());
    }
    let decay = match decay_rate(record) {
        Ok(fit) => Some(fit.rate),
        Err(Error::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    let phases: Vec<(Option<CuePhase>, Window, Option<f64>)> = match record.strategy {
        StrategyKind::Adaptive => vec![
            (Some(CuePhase::Exploration), Window::for_phase(record, CuePhase::Exploration), None),
            (Some(CuePhase::Converged), Window::for_phase(record, CuePhase::Converged), decay),
        ],
        _ => vec![(None, Window::cueing(record), decay)],
    };
    phases
        .into_iter()
        .map(|(phase, window, decay_rate)| {
            Ok(TrialMetrics {
                seed: record.seed,
                strategy: record.strategy.name().to_string(),
                direction,
                phase,
                target_mae: target_mae_in(record, window)?,
                intermediate_mae: intermediate_mae_in(record, window)?,
                decay_rate,
                percent_on: percent_on_in(record, window)?,
                cue_distance: median_cue_distance_in(record, window),
            })
        })
        .collect()
}

/// Mean and sample standard deviation over the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        let n = v.len();
        if n == 0 {
            return Self { mean: None, std: None, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self { mean: Some(round_sig(mean)), std: std.map(round_sig), n }
    }
}

/// One row of the stratified table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub strategy: String,
    pub direction: Direction,
    pub phase: String,
    pub trials: usize,
    pub target_mae: Summary,
    pub intermediate_mae: Summary,
    pub decay_rate: Summary,
    pub percent_on: Summary,
    pub cue_distance: Summary,
}

fn strategy_rank(name: &str) -> usize {
    match name {
        "fixed" => 0,
        "proportional" => 1,
        "adaptive" => 2,
        _ => 3,
    }
}

/// Group per-trial rows by (direction, strategy, phase) and summarise across seeds.
pub fn stratify(rows: &[TrialMetrics]) -> Vec<MetricRow> {
    let mut groups: BTreeMap<(Direction, usize, String, Option<CuePhase>), Vec<&TrialMetrics>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.direction, strategy_rank(&r.strategy), r.strategy.clone(), r.phase))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((direction, _, strategy, phase), g)| MetricRow {
            strategy,
            direction,
            phase: phase_str(phase).to_string(),
            trials: g.len(),
            target_mae: Summary::of(g.iter().map(|r| Some(r.target_mae))),
            intermediate_mae: Summary::of(g.iter().map(|r| r.intermediate_mae)),
            decay_rate: Summary::of(g.iter().map(|r| r.decay_rate)),
            percent_on: Summary::of(g.iter().map(|r| Some(r.percent_on))),
            cue_distance: Summary::of(g.iter().map(|r| r.cue_distance)),
        })
        .collect()
}

/// Metric rows for a set of records.
pub fn stratify_records(records: &[TrialRecord]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for r in records {
        rows.extend(trial_metrics(r)?);
    }
    Ok(stratify(&rows))
}

const METRIC_NAMES: [&str; 5] = ["target_mae_hz", "intermediate_mae_hz", "decay_rate_per_s", "percent_on", "cue_distance_hz"];

pub fn write_trial_metrics_csv<W: Write>(rows: &[TrialMetrics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["seed", "strategy", "direction", "phase"];
    header.extend(METRIC_NAMES);
    w.write_record(&header)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.strategy.clone(),
            r.direction.to_string(),
            phase_str(r.phase).to_string(),
            fmt_num(r.target_mae),
            fmt_opt(r.intermediate_mae),
            fmt_opt(r.decay_rate),
            fmt_num(r.percent_on),
            fmt_opt(r.cue_distance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Stratified table; undefined summaries are empty cells.
pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["strategy".to_string(), "direction".into(), "phase".into(), "trials".into()];
    for m in METRIC_NAMES {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
        header.push(format!("{m}_n"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.strategy.clone(), r.direction.to_string(), r.phase.clone(), r.trials.to_string()];
        for s in [r.target_mae, r.intermediate_mae, r.decay_rate, r.percent_on, r.cue_distance] {
            rec.push(fmt_opt(s.mean));
            rec.push(fmt_opt(s.std));
            rec.push(s.n.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON summary of the stratified table; undefined values are `null`.
pub fn metrics_json(rows: &[MetricRow]) -> Result<String> {
    serde_json::to_string_pretty(rows).map_err(|e| Error::Numerical(format!("cannot serialise metrics: {e}")))
}
