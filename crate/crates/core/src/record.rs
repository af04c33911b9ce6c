//! Trial logs: sampled cadence trace, cue events and metadata.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::ResponseDataset;
use crate::optimizer::CuePhase;
use crate::signal_io::{fmt_num, fmt_opt};
use crate::strategy::StrategyKind;

/// Round to the 9 significant digits used in every log.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Whether the target sits above (UP) or below (DOWN) the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "UP")]
    Up,
    #[serde(rename = "DOWN")]
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "UP",
            Direction::Down => "DOWN",
        }
    }

    /// Signed fractional target offset for this direction.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UP" => Ok(Direction::Up),
            "DOWN" => Ok(Direction::Down),
            other => Err(Error::input(format!("unknown direction '{other}'"))),
        }
    }
}

/// One logged sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSample {
    pub t: f64,
    pub estimated_cadence: f64,
    pub cue_active: bool,
    pub cue_frequency: Option<f64>,
}

/// One issued burst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CueEvent {
    pub issued_at: f64,
    pub frequency: f64,
    pub beat_count: u32,
    /// Estimated cadence when the burst was decided.
    pub cadence_at_issue: f64,
    /// When the last beat stops; earlier than `issued_at + beat_count / frequency`
    /// only if the cueing window closed mid-burst.
    pub end: f64,
    pub phase_label: Option<CuePhase>,
}

impl CueEvent {
    pub fn duration(&self) -> f64 {
        self.end - self.issued_at
    }
}

/// Everything logged for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub samples: Vec<TrialSample>,
    pub target: f64,
    pub baseline: f64,
    pub strategy: StrategyKind,
    /// `None` for the control session.
    pub direction: Option<Direction>,
    pub seed: u64,
    /// End of the cueing window, s.
    pub cueing_duration: f64,
    pub session_duration: f64,
    pub cues: Vec<CueEvent>,
    /// Response pairs collected by the adaptive policy.
    pub dataset: Option<ResponseDataset>,
}

impl TrialRecord {
    /// Time at which the final burst stopped, if any burst played.
    pub fn last_cue_end(&self) -> Option<f64> {
        self.cues.last().map(|c| c.end)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::input("trial record has no samples"));
        }
        for w in self.samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::input(format!("timestamps not increasing at t = {}", w[1].t)));
            }
        }
        if let Some(c) = self.cues.iter().find(|c| c.issued_at > self.cueing_duration) {
            return Err(Error::input(format!("cue issued after the cueing window at {}", c.issued_at)));
        }
        Ok(())
    }

    /// Sample log: `t_s,est_cadence_hz,cue_active,cue_hz,strategy,direction,seed`.
    pub fn write_samples_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_s", "est_cadence_hz", "cue_active", "cue_hz", "strategy", "direction", "seed"])?;
        let strategy = self.strategy.name();
        let direction = self.direction.map(Direction::as_str).unwrap_or("NONE");
        let seed = self.seed.to_string();
        for s in &self.samples {
            w.write_record([
                fmt_num(s.t).as_str(),
                fmt_num(s.estimated_cadence).as_str(),
                if s.cue_active { "1" } else { "0" },
                fmt_opt(s.cue_frequency).as_str(),
                strategy,
                direction,
                seed.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Cue log: `issued_at_s,end_s,cue_hz,beat_count,cadence_at_issue_hz,phase_label`.
    pub fn write_cues_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["issued_at_s", "end_s", "cue_hz", "beat_count", "cadence_at_issue_hz", "phase_label"])?;
        for c in &self.cues {
            w.write_record([
                fmt_num(c.issued_at),
                fmt_num(c.end),
                fmt_num(c.frequency),
                c.beat_count.to_string(),
                fmt_num(c.cadence_at_issue),
                c.phase_label.map(|p| p.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuild a record from its sample and cue logs plus manifest metadata.
    pub fn read_csv<R1: Read, R2: Read>(samples: R1, cues: R2, meta: &TrialMeta) -> Result<Self> {
        #[derive(Deserialize)]
        struct SampleRow {
            t_s: f64,
            est_cadence_hz: f64,
            cue_active: u8,
            cue_hz: Option<f64>,
        }
        #[derive(Deserialize)]
        struct CueRow {
            issued_at_s: f64,
            end_s: f64,
            cue_hz: f64,
            beat_count: u32,
            cadence_at_issue_hz: f64,
            phase_label: Option<String>,
        }
        let mut out_samples = Vec::new();
        for row in csv::Reader::from_reader(samples).deserialize() {
            let r: SampleRow = row?;
            out_samples.push(TrialSample {
                t: r.t_s,
                estimated_cadence: r.est_cadence_hz,
                cue_active: r.cue_active != 0,
                cue_frequency: r.cue_hz,
            });
        }
        let mut out_cues = Vec::new();
        for row in csv::Reader::from_reader(cues).deserialize() {
            let r: CueRow = row?;
            let phase_label = match r.phase_label.as_deref() {
                None | Some("") => None,
                Some(s) => Some(s.parse()?),
            };
            out_cues.push(CueEvent {
                issued_at: r.issued_at_s,
                frequency: r.cue_hz,
                beat_count: r.beat_count,
                cadence_at_issue: r.cadence_at_issue_hz,
                end: r.end_s,
                phase_label,
            });
        }
        let record = TrialRecord {
            samples: out_samples,
            target: meta.target,
            baseline: meta.baseline,
            strategy: meta.strategy,
            direction: meta.direction,
            seed: meta.seed,
            cueing_duration: meta.cueing_duration,
            session_duration: meta.session_duration,
            cues: out_cues,
            dataset: None,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn meta(&self) -> TrialMeta {
        TrialMeta {
            seed: self.seed,
            strategy: self.strategy,
            direction: self.direction,
            baseline: self.baseline,
            target: self.target,
            cueing_duration: self.cueing_duration,
            session_duration: self.session_duration,
        }
    }
}

/// Per-trial metadata stored in the suite manifest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMeta {
    pub seed: u64,
    pub strategy: StrategyKind,
    pub direction: Option<Direction>,
    pub baseline: f64,
    pub target: f64,
    pub cueing_duration: f64,
    pub session_duration: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(samples: Vec<TrialSample>, cues: Vec<CueEvent>) -> TrialRecord {
        TrialRecord {
            samples,
            target: 2.004,
            baseline: 1.67,
            strategy: StrategyKind::Proportional { p_gain: 0.5 },
            direction: Some(Direction::Up),
            seed: 17,
            cueing_duration: 360.0,
            session_duration: 420.0,
            cues,
            dataset: None,
        }
    }

    #[test]
    fn round_sig_is_idempotent() {
        for x in [1.0 / 3.0, 1.6712345678912, 359.99999999, 1e-7 / 3.0] {
            let r = round_sig(x);
            assert_eq!(round_sig(r), r);
            assert_eq!(fmt_num(r).parse::<f64>().unwrap(), r);
        }
    }

    #[test]
    fn rejects_cue_after_window() {
        let s = vec![TrialSample { t: 0.1, estimated_cadence: 1.7, cue_active: false, cue_frequency: None }];
        let c = vec![CueEvent {
            issued_at: 361.0,
            frequency: 2.0,
            beat_count: 8,
            cadence_at_issue: 1.8,
            end: 365.0,
            phase_label: None,
        }];
        assert!(record(s, c).validate().is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(
            raw in proptest::collection::vec((0.5f64..3.0, any::<bool>(), 1.0f64..2.5), 1..60),
            cue_times in proptest::collection::vec(0.0f64..300.0, 0..5),
        ) {
            let samples: Vec<TrialSample> = raw
                .iter()
                .enumerate()
                .map(|(i, &(c, on, f))| TrialSample {
                    t: round_sig((i + 1) as f64 / 28.5),
                    estimated_cadence: round_sig(c),
                    cue_active: on,
                    cue_frequency: on.then_some(round_sig(f)),
                })
                .collect();
            let cues: Vec<CueEvent> = cue_times
                .iter()
                .map(|&t| CueEvent {
                    issued_at: round_sig(t),
                    frequency: 1.9,
                    beat_count: 8,
                    cadence_at_issue: round_sig(1.0 + t / 1000.0),
                    end: round_sig(t + 8.0 / 1.9),
                    phase_label: Some(CuePhase::Converged),
                })
                .collect();
            let rec = record(samples, cues);
            let mut s_buf = Vec::new();
            let mut c_buf = Vec::new();
            rec.write_samples_csv(&mut s_buf).unwrap();
            rec.write_cues_csv(&mut c_buf).unwrap();
            let back = TrialRecord::read_csv(&s_buf[..], &c_buf[..], &rec.meta()).unwrap();
            prop_assert_eq!(back, rec);
        }
    }
}
