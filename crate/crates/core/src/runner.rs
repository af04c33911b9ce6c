//! Closed-loop sessions and batch suites.
//!
//! A session couples the walker, the estimator, the acceptance gate and one
//! cueing policy on a shared clock. A suite runs a control session and every
//! condition for each seed, writes logs and summarises them.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cds::CdsState;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gp::{refit_hyperparams, GpModel, ResponseDataset};
use crate::metrics::{self, MetricRow, TrialMetrics};
use crate::optimizer::CueBounds;
use crate::record::{round_sig, CueEvent, Direction, TrialMeta, TrialRecord, TrialSample};
use crate::signal_io::fmt_num;
use crate::strategy::{decide, gate_with_band, CueCommand, DecisionContext, StrategyKind};
use crate::walker::{ActiveCue, WalkerParams, WalkerState};

/// Number of recent cadence estimates reported when the estimator diverges.
const DIVERGENCE_HISTORY: usize = 16;

/// One acceptance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckEvent {
    pub t: f64,
    /// 0 for the first check; pair `k` of the response dataset was appended at check `k`.
    pub increment: usize,
    pub cadence: f64,
    /// Cadence was outside the acceptance band.
    pub outside_band: bool,
    /// A burst was already playing, so no decision was made.
    pub burst_active: bool,
    /// Frequency of the burst issued at this check.
    pub issued: Option<f64>,
}

/// A finished session.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub checks: Vec<CheckEvent>,
    /// Mean estimated cadence over the session after the baseline warm-up.
    pub settled_cadence: f64,
}

#[derive(Debug, Clone, Copy)]
struct Burst {
    id: u64,
    frequency: f64,
    start: f64,
    end: f64,
}

impl Burst {
    fn active_at(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Session target for a direction.
pub fn target_for(config: &ExperimentConfig, baseline: f64, direction: Direction) -> f64 {
    baseline * (1.0 + direction.sign() * config.protocol.target_offset)
}

/// Simulate one session. `direction = None` runs without a target (control).
pub fn simulate_trial(
    config: &ExperimentConfig,
    walker: &WalkerParams,
    strategy: StrategyKind,
    direction: Option<Direction>,
    baseline: f64,
    seed: u64,
) -> Result<TrialOutcome> {
    if !(baseline.is_finite() && baseline > 0.0) {
        return Err(Error::input(format!("baseline must be > 0, got {baseline}")));
    }
    if strategy != StrategyKind::Control && direction.is_none() {
        return Err(Error::input("a cueing strategy needs a direction"));
    }
    let proto = &config.protocol;
    let cds_config = config.cds_config();
    let dt = cds_config.sample_period;
    let target = direction.map_or(baseline, |d| target_for(config, baseline, d));
    let bounds = CueBounds::from_baseline(baseline)?;

    let mut walker_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decision_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut walker_state = WalkerState::new(walker);
    let mut cds = CdsState::new(&cds_config);
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(DIVERGENCE_HISTORY);
    let [lo, hi] = proto.divergence_range;

    let check_divergence = |cds: &CdsState, t: f64, recent: &mut VecDeque<f64>| -> Result<()> {
        let c = cds.cadence();
        if recent.len() == DIVERGENCE_HISTORY {
            recent.pop_front();
        }
        recent.push_back(c);
        if !(c >= lo && c <= hi) {
            return Err(Error::EstimatorDiverged { time_s: t, cadence_hz: c, recent: recent.iter().copied().collect() });
        }
        Ok(())
    };

    let pre_roll = (proto.pre_roll / dt).round() as usize;
    for i in 0..pre_roll {
        let y = walker_state.step(walker, None, dt, &mut walker_rng);
        cds.update(y, &cds_config)?;
        if (i + 1) % proto.log_every == 0 {
            check_divergence(&cds, (i + 1) as f64 * dt - proto.pre_roll, &mut recent)?;
        }
    }
    walker_state.time = 0.0;

    let hyper = config.gp.hyperparams();
    let mut model = match strategy {
        StrategyKind::Adaptive => Some(GpModel::new(hyper)?),
        _ => None,
    };

    let steps = (proto.session_duration / dt).round() as usize;
    let mut samples = Vec::with_capacity(steps / proto.log_every + 1);
    let mut cues = Vec::new();
    let mut checks = Vec::new();
    let mut burst: Option<Burst> = None;
    let mut next_burst_id = 0u64;
    let mut strides = 0u32;
    let mut previous: Option<(f64, f64)> = None;
    let mut settled = (0.0, 0usize);

    for i in 0..steps {
        let t = i as f64 * dt;
        let active = burst.filter(|b| b.active_at(t)).map(|b| ActiveCue { frequency: b.frequency, burst_id: b.id });
        let y = walker_state.step(walker, active, dt, &mut walker_rng);
        let outcome = cds.update(y, &cds_config)?;
        let t_new = (i + 1) as f64 * dt;
        let cadence = cds.cadence();
        if t_new >= proto.baseline_warmup {
            settled.0 += cadence;
            settled.1 += 1;
        }

        if outcome.stride_completed && t_new < proto.cueing_duration {
            strides += 1;
            if strides == proto.check_interval {
                strides = 0;
                check_divergence(&cds, t_new, &mut recent)?;
                let increment = checks.len();
                if let (Some(m), Some((prev_cadence, prev_cue))) = (model.as_mut(), previous) {
                    m.append(prev_cadence, prev_cue, cadence)?;
                    let every = config.gp.refit_every;
                    if every > 0 && m.len() % every == 0 {
                        let h = refit_hyperparams(m.dataset(), &m.hyperparams())?;
                        *m = GpModel::fit(m.dataset(), h)?;
                    }
                }
                let outside_band = gate_with_band(cadence, target, proto.acceptance_band);
                let playing = burst.is_some_and(|b| b.active_at(t_new));
                let mut issued = None;
                if outside_band && !playing && strategy != StrategyKind::Control {
                    let ctx = DecisionContext {
                        current_cadence: cadence,
                        target,
                        bounds,
                        model: model.as_ref(),
                        seed: decision_rng.next_u64(),
                        time: t_new,
                        beat_count: proto.beat_count,
                        optimizer: &config.optimizer,
                    };
                    if let CueCommand::Burst { frequency, beat_count, phase_label, .. } = decide(strategy, &ctx)? {
                        let end = (t_new + beat_count as f64 / frequency).min(proto.cueing_duration);
                        burst = Some(Burst { id: next_burst_id, frequency, start: t_new, end });
                        next_burst_id += 1;
                        issued = Some(frequency);
                        cues.push(CueEvent {
                            issued_at: round_sig(t_new),
                            frequency: round_sig(frequency),
                            beat_count,
                            cadence_at_issue: round_sig(cadence),
                            end: round_sig(end),
                            phase_label,
                        });
                    }
                }
                let cue_now = burst.filter(|b| b.active_at(t_new)).map_or(0.0, |b| b.frequency);
                previous = Some((cadence, cue_now));
                checks.push(CheckEvent {
                    t: round_sig(t_new),
                    increment,
                    cadence: round_sig(cadence),
                    outside_band,
                    burst_active: playing,
                    issued,
                });
            }
        }

        if (i + 1) % proto.log_every == 0 {
            if checks.last().is_none_or(|c| c.t != round_sig(t_new)) {
                check_divergence(&cds, t_new, &mut recent)?;
            }
            let on = burst.filter(|b| b.active_at(t_new));
            samples.push(TrialSample {
                t: round_sig(t_new),
                estimated_cadence: round_sig(cadence),
                cue_active: on.is_some(),
                cue_frequency: on.map(|b| round_sig(b.frequency)),
            });
        }
    }

    let record = TrialRecord {
        samples,
        target: round_sig(target),
        baseline: round_sig(baseline),
        strategy,
        direction,
        seed,
        cueing_duration: proto.cueing_duration,
        session_duration: proto.session_duration,
        cues,
        dataset: model.map(|m| m.dataset().clone()),
    };
    record.validate()?;
    let settled_cadence = if settled.1 > 0 { settled.0 / settled.1 as f64 } else { cds.cadence() };
    Ok(TrialOutcome { record, checks, settled_cadence })
}

/// Control session: no cues. Returns the baseline and the session itself.
pub fn run_control_trial(config: &ExperimentConfig, walker_seed: u64) -> Result<(f64, TrialOutcome)> {
    let walker = config.walker.params()?;
    let outcome = simulate_trial(config, &walker, StrategyKind::Control, None, walker.baseline_cadence, walker_seed)?;
    Ok((outcome.settled_cadence, outcome))
}

/// Baseline cadence measured in a control session.
pub fn run_control(config: &ExperimentConfig, walker_seed: u64) -> Result<f64> {
    run_control_trial(config, walker_seed).map(|(b, _)| b)
}

/// One cueing condition.
pub fn run_condition(
    config: &ExperimentConfig,
    strategy: StrategyKind,
    direction: Direction,
    baseline: f64,
    walker_seed: u64,
) -> Result<TrialOutcome> {
    let walker = config.walker.params()?;
    simulate_trial(config, &walker, strategy, Some(direction), baseline, walker_seed)
}

/// splitmix64 finaliser.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Walker seed for one session of a suite seed. Depends only on the suite seed
/// and the condition, never on the run order.
pub fn trial_seed(seed: u64, strategy: StrategyKind, direction: Option<Direction>) -> u64 {
    let s = match strategy {
        StrategyKind::Control => 0,
        StrategyKind::Fixed => 1,
        StrategyKind::Proportional { .. } => 2,
        StrategyKind::Adaptive => 3,
    };
    let d = match direction {
        None => 0,
        Some(Direction::Up) => 1,
        Some(Direction::Down) => 2,
    };
    mix(seed, 1 + s * 4 + d)
}

/// Manifest row for one session of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub seed: u64,
    /// Position in the seed's randomized run order; 0 is the control session.
    pub order: usize,
    pub strategy: String,
    pub p_gain: Option<f64>,
    pub direction: String,
    pub walker_seed: u64,
    pub baseline_hz: Option<f64>,
    pub target_hz: Option<f64>,
    pub cueing_duration_s: f64,
    pub session_duration_s: f64,
    pub status: String,
    pub error: String,
    pub samples_file: String,
    pub cues_file: String,
    pub checks_file: String,
    pub gp_file: String,
}

impl ManifestRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn meta(&self) -> Result<Option<TrialMeta>> {
        if !self.ok() || self.direction == "NONE" {
            return Ok(None);
        }
        let strategy = StrategyKind::parse_with_gain(&self.strategy, self.p_gain.unwrap_or(crate::strategy::DEFAULT_P_GAIN))?;
        let (Some(baseline), Some(target)) = (self.baseline_hz, self.target_hz) else {
            return Err(Error::input(format!("manifest row for seed {} lacks baseline or target", self.seed)));
        };
        Ok(Some(TrialMeta {
            seed: self.seed,
            strategy,
            direction: Some(self.direction.parse()?),
            baseline,
            target,
            cueing_duration: self.cueing_duration_s,
            session_duration: self.session_duration_s,
        }))
    }
}

/// Result of a suite run.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub manifest: Vec<ManifestRow>,
    pub trial_metrics: Vec<TrialMetrics>,
    pub rows: Vec<MetricRow>,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &ManifestRow> {
        self.manifest.iter().filter(|r| !r.ok())
    }
}

fn trial_stem(seed: u64, strategy: StrategyKind, direction: Option<Direction>) -> String {
    match direction {
        Some(d) => format!("seed{seed}_{}_{}", strategy.name(), d.as_str().to_ascii_lowercase()),
        None => format!("seed{seed}_control"),
    }
}

fn write_checks_csv(checks: &[CheckEvent], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["t_s", "increment", "est_cadence_hz", "outside_band", "burst_active", "issued_cue_hz"])?;
    for c in checks {
        w.write_record([
            fmt_num(c.t),
            c.increment.to_string(),
            fmt_num(c.cadence),
            u8::from(c.outside_band).to_string(),
            u8::from(c.burst_active).to_string(),
            c.issued.map(fmt_num).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_trial(outcome: &TrialOutcome, logs: &Path, stem: &str, row: &mut ManifestRow) -> Result<()> {
    let rec = &outcome.record;
    row.samples_file = format!("logs/{stem}.csv");
    rec.write_samples_csv(BufWriter::new(File::create(logs.join(format!("{stem}.csv")))?))?;
    row.cues_file = format!("logs/{stem}_cues.csv");
    rec.write_cues_csv(BufWriter::new(File::create(logs.join(format!("{stem}_cues.csv")))?))?;
    row.checks_file = format!("logs/{stem}_checks.csv");
    write_checks_csv(&outcome.checks, &logs.join(format!("{stem}_checks.csv")))?;
    if let Some(ds) = &rec.dataset {
        row.gp_file = format!("logs/{stem}_gp.csv");
        ds.write_csv(BufWriter::new(File::create(logs.join(format!("{stem}_gp.csv")))?))?;
    }
    Ok(())
}

fn run_seed(config: &ExperimentConfig, seed: u64, logs: &Path) -> Result<Vec<ManifestRow>> {
    let proto = &config.protocol;
    let kinds = config.strategies.kinds()?;
    let mut conditions: Vec<(StrategyKind, Direction)> =
        kinds.iter().flat_map(|&k| [(k, Direction::Up), (k, Direction::Down)]).collect();
    conditions.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, 0x0bde_7000)));

    let blank = |strategy: StrategyKind, direction: Option<Direction>, order: usize| ManifestRow {
        seed,
        order,
        strategy: strategy.name().to_string(),
        p_gain: match strategy {
            StrategyKind::Proportional { p_gain } => Some(p_gain),
            _ => None,
        },
        direction: direction.map_or("NONE", Direction::as_str).to_string(),
        walker_seed: trial_seed(seed, strategy, direction),
        baseline_hz: None,
        target_hz: None,
        cueing_duration_s: proto.cueing_duration,
        session_duration_s: proto.session_duration,
        status: "ok".into(),
        error: String::new(),
        samples_file: String::new(),
        cues_file: String::new(),
        checks_file: String::new(),
        gp_file: String::new(),
    };

    let mut rows = Vec::with_capacity(conditions.len() + 1);
    let mut control = blank(StrategyKind::Control, None, 0);
    let baseline = match run_control_trial(config, control.walker_seed) {
        Ok((baseline, outcome)) => {
            control.baseline_hz = Some(round_sig(baseline));
            control.target_hz = Some(outcome.record.target);
            write_trial(&outcome, logs, &trial_stem(seed, StrategyKind::Control, None), &mut control)?;
            Some(round_sig(baseline))
        }
        Err(e) => {
            log::error!("seed {seed}: control session failed: {e}");
            control.status = "failed".into();
            control.error = e.to_string();
            None
        }
    };
    rows.push(control);

    for (order, &(strategy, direction)) in conditions.iter().enumerate() {
        let mut row = blank(strategy, Some(direction), order + 1);
        let Some(baseline) = baseline else {
            row.status = "skipped".into();
            row.error = "control session failed".into();
            rows.push(row);
            continue;
        };
        row.baseline_hz = Some(baseline);
        row.target_hz = Some(round_sig(target_for(config, baseline, direction)));
        match run_condition(config, strategy, direction, baseline, row.walker_seed) {
            Ok(outcome) => write_trial(&outcome, logs, &trial_stem(seed, strategy, Some(direction)), &mut row)?,
            Err(e) => {
                log::error!("seed {seed}: {} {direction} failed: {e}", strategy.name());
                row.status = "failed".into();
                row.error = e.to_string();
            }
        }
        rows.push(row);
    }
    log::info!("seed {seed} done");
    Ok(rows)
}

/// Run control plus every condition for each seed, write logs under
/// `out/logs`, and write the manifest and metric tables to `out`.
pub fn run_suite(config: &ExperimentConfig, out: &Path) -> Result<SuiteReport> {
    config.validate()?;
    let logs = out.join("logs");
    fs::create_dir_all(&logs)?;
    let seeds = config.protocol.seed_list();
    let per_seed: Vec<Result<Vec<ManifestRow>>> = if config.protocol.parallel {
        seeds.par_iter().map(|&s| run_seed(config, s, &logs)).collect()
    } else {
        seeds.iter().map(|&s| run_seed(config, s, &logs)).collect()
    };
    let mut manifest = Vec::new();
    for rows in per_seed {
        manifest.extend(rows?);
    }
    write_manifest(&manifest, &out.join("trials.csv"))?;
    fs::write(out.join("config.toml"), config.to_toml())?;
    report(out)
}

fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        let r = ManifestRow {
            baseline_hz: r.baseline_hz.map(round_sig),
            target_hz: r.target_hz.map(round_sig),
            ..r.clone()
        };
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut rows = Vec::new();
    for r in csv::Reader::from_path(path)?.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

/// Load every successful cueing session listed in `dir/trials.csv`.
pub fn load_records(dir: &Path) -> Result<(Vec<ManifestRow>, Vec<TrialRecord>)> {
    let manifest = read_manifest(&dir.join("trials.csv"))?;
    let mut records = Vec::new();
    for row in &manifest {
        let Some(meta) = row.meta()? else { continue };
        let open = |f: &str| -> Result<File> {
            let p: PathBuf = dir.join(f);
            File::open(&p).map_err(|e| Error::Parse { path: p, message: e.to_string() })
        };
        let mut rec = TrialRecord::read_csv(open(&row.samples_file)?, open(&row.cues_file)?, &meta)?;
        if !row.gp_file.is_empty() {
            rec.dataset = Some(ResponseDataset::read_csv(open(&row.gp_file)?)?);
        }
        records.push(rec);
    }
    Ok((manifest, records))
}

/// Recompute metrics from the logs in `dir` and write `trial_metrics.csv`,
/// `metrics.csv` and `summary.json` there.
pub fn report(dir: &Path) -> Result<SuiteReport> {
    let (manifest, records) = load_records(dir)?;
    let per_trial: Vec<Vec<TrialMetrics>> =
        records.par_iter().map(metrics::trial_metrics).collect::<Result<Vec<_>>>()?;
    let trial_metrics: Vec<TrialMetrics> = per_trial.into_iter().flatten().collect();
    let rows = metrics::stratify(&trial_metrics);
    metrics::write_trial_metrics_csv(&trial_metrics, BufWriter::new(File::create(dir.join("trial_metrics.csv"))?))?;
    metrics::write_metrics_csv(&rows, BufWriter::new(File::create(dir.join("metrics.csv"))?))?;

    #[derive(Serialize)]
    struct Summary<'a> {
        trials: usize,
        failed: Vec<&'a ManifestRow>,
        rows: &'a [MetricRow],
    }
    let summary = Summary { trials: manifest.len(), failed: manifest.iter().filter(|r| !r.ok()).collect(), rows: &rows };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(SuiteReport { manifest, trial_metrics, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::CuePhase;

    fn quiet_config(persona: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.walker.persona = persona.into();
        cfg
    }

    #[test]
    fn noiseless_control_recovers_baseline() {
        let mut cfg = quiet_config("compliant");
        let mut p = WalkerParams::compliant();
        p.cadence_noise_std = 0.0;
        cfg.walker.custom.insert("still".into(), p);
        cfg.walker.persona = "still".into();
        let b = run_control(&cfg, 4).unwrap();
        assert!((b - 1.67).abs() < 0.02 * 1.67, "baseline {b}");
        assert_eq!(run_control(&cfg, 4).unwrap().to_bits(), b.to_bits());
    }

    #[test]
    fn noisy_control_within_five_percent() {
        let mut cfg = quiet_config("compliant");
        let mut p = WalkerParams::compliant();
        p.cadence_noise_std = 0.02;
        cfg.walker.custom.insert("noisy".into(), p);
        cfg.walker.persona = "noisy".into();
        for seed in 0..10 {
            let b = run_control(&cfg, seed).unwrap();
            assert!((b - 1.67).abs() < 0.05 * 1.67, "seed {seed}: {b}");
        }
    }

    #[test]
    fn control_has_no_cues() {
        let cfg = quiet_config("baseline-puller");
        let (_, out) = run_control_trial(&cfg, 1).unwrap();
        assert!(out.record.cues.is_empty());
        assert!(out.record.samples.iter().all(|s| !s.cue_active));
    }

    #[test]
    fn personas_are_distinguishable_by_metrics() {
        // Mean (percent-on, target MAE) of fixed UP sessions over five seeds.
        let summary = |persona: &str| {
            let cfg = quiet_config(persona);
            let (mut on, mut mae) = (0.0, 0.0);
            for seed in 1..=5 {
                let out = run_condition(&cfg, StrategyKind::Fixed, Direction::Up, 1.67, seed).unwrap();
                assert!(out.checks.iter().any(|c| !c.outside_band), "{persona} never entered the band");
                for c in &out.checks {
                    assert_eq!(c.outside_band, gate_with_band(c.cadence, out.record.target, 0.01));
                }
                on += metrics::percent_on(&out.record).unwrap() / 5.0;
                mae += metrics::target_mae(&out.record).unwrap() / 5.0;
            }
            (on, mae)
        };
        let compliant = summary("compliant");
        let puller = summary("baseline-puller");
        let inconsistent = summary("inconsistent");
        assert!(compliant.0 < puller.0, "percent-on compliant {compliant:?} puller {puller:?}");
        assert!(compliant.1 < inconsistent.1, "MAE compliant {compliant:?} inconsistent {inconsistent:?}");
        assert!(puller.1 < inconsistent.1, "MAE puller {puller:?} inconsistent {inconsistent:?}");
    }

    #[test]
    fn protocol_invariants_hold() {
        let cfg = quiet_config("baseline-puller");
        for strategy in [StrategyKind::Fixed, StrategyKind::Proportional { p_gain: 0.5 }, StrategyKind::Adaptive] {
            let out = run_condition(&cfg, strategy, Direction::Down, 1.67, 2).unwrap();
            let rec = &out.record;
            assert!(rec.cues.iter().all(|c| c.issued_at <= 360.0));
            for w in rec.cues.windows(2) {
                assert!(w[1].issued_at >= w[0].end, "overlapping bursts");
            }
            if let Some(ds) = &rec.dataset {
                assert_eq!(ds.len(), out.checks.iter().filter(|c| c.increment > 0).count());
            }
            assert!(rec.samples.iter().filter(|s| s.t > 360.0).all(|s| !s.cue_active));
        }
    }

    #[test]
    fn adaptive_down_explores_then_converges() {
        let cfg = quiet_config("baseline-puller");
        let out = run_condition(&cfg, StrategyKind::Adaptive, Direction::Down, 1.67, 5).unwrap();
        let rec = &out.record;
        let bounds = CueBounds::from_baseline(1.67).unwrap();
        assert!(
            rec.cues.iter().any(|c| c.issued_at < 70.0 && c.phase_label == Some(CuePhase::Exploration) && c.frequency > rec.target),
            "no early exploratory cue above the target"
        );
        let late: Vec<_> = rec.cues.iter().filter(|c| c.issued_at >= 70.0 && c.phase_label == Some(CuePhase::Converged)).collect();
        assert!(!late.is_empty());
        assert!(late.iter().all(|c| bounds.contains(c.frequency)));
    }

    #[test]
    fn sessions_are_deterministic() {
        let cfg = quiet_config("inconsistent");
        let a = run_condition(&cfg, StrategyKind::Adaptive, Direction::Up, 1.67, 11).unwrap();
        let b = run_condition(&cfg, StrategyKind::Adaptive, Direction::Up, 1.67, 11).unwrap();
        assert_eq!(a.record, b.record);
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..5 {
            for s in [StrategyKind::Control, StrategyKind::Fixed, StrategyKind::Proportional { p_gain: 0.5 }, StrategyKind::Adaptive] {
                for d in [None, Some(Direction::Up), Some(Direction::Down)] {
                    assert!(seen.insert(trial_seed(seed, s, d)));
                }
            }
        }
    }
}
