//! Recorded gyroscope traces and shared CSV number formatting.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Format with 9 significant digits, shortest decimal form. Every log and
/// report number goes through here so outputs are byte-stable.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

/// Optional value: empty cell for `None`.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Single-axis gyroscope recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    /// Seconds, strictly increasing.
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    /// Expected sampling rate in Hz.
    pub nominal_rate: f64,
}

/// Non-fatal findings from [`load_trace`].
#[derive(Debug, Clone, PartialEq)]
pub enum TraceWarning {
    /// Measured rate differs from the expected one by more than 5%.
    RateMismatch { expected: f64, measured: f64 },
    /// Gap longer than three nominal periods, starting at `at` seconds.
    Gap { at: f64, length: f64 },
}

impl std::fmt::Display for TraceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TraceWarning::RateMismatch { expected, measured } => write!(
                f,
                "measured sample rate {measured:.2} Hz differs from expected {expected:.2} Hz"
            ),
            TraceWarning::Gap { at, length } => write!(f, "gap of {length:.4} s at t = {at:.4} s"),
        }
    }
}

impl SignalTrace {
    pub fn new(timestamps: Vec<f64>, values: Vec<f64>, nominal_rate: f64) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::input("timestamps and values differ in length"));
        }
        if timestamps.len() < 2 {
            return Err(Error::input("a trace needs at least two samples"));
        }
        if !(nominal_rate.is_finite() && nominal_rate > 0.0) {
            return Err(Error::input(format!("rate must be > 0, got {nominal_rate}")));
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::input(format!(
                    "timestamps not strictly increasing at row {} ({} then {})",
                    i + 2,
                    w[0],
                    w[1]
                )));
            }
        }
        if let Some(v) = values.iter().chain(&timestamps).find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite value {v} in trace")));
        }
        Ok(Self {
            timestamps,
            values,
            nominal_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.timestamps[self.len() - 1] - self.timestamps[0]
    }

    /// Average rate over the whole trace.
    pub fn measured_rate(&self) -> f64 {
        (self.len() - 1) as f64 / self.duration()
    }

    pub fn warnings(&self) -> Vec<TraceWarning> {
        let mut out = Vec::new();
        let measured = self.measured_rate();
        if ((measured - self.nominal_rate) / self.nominal_rate).abs() > 0.05 {
            out.push(TraceWarning::RateMismatch {
                expected: self.nominal_rate,
                measured,
            });
        }
        let max_gap = 3.0 / self.nominal_rate;
        for w in self.timestamps.windows(2) {
            if w[1] - w[0] > max_gap {
                out.push(TraceWarning::Gap {
                    at: w[0],
                    length: w[1] - w[0],
                });
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_s", "gyro_y"])?;
        for (t, v) in self.timestamps.iter().zip(&self.values) {
            w.write_record([fmt_num(*t), fmt_num(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parse a `t_s,gyro_y` CSV.
pub fn read_trace<R: Read>(reader: R, expected_rate: f64) -> Result<SignalTrace> {
    #[derive(Deserialize)]
    struct Row {
        t_s: f64,
        gyro_y: f64,
    }
    let mut t = Vec::new();
    let mut y = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = row?;
        t.push(row.t_s);
        y.push(row.gyro_y);
    }
    if t.is_empty() {
        return Err(Error::input("trace file has no samples"));
    }
    SignalTrace::new(t, y, expected_rate)
}

/// Load and validate a trace file. Warnings are logged and returned.
pub fn load_trace(path: &Path, expected_rate: f64) -> Result<(SignalTrace, Vec<TraceWarning>)> {
    let file = File::open(path)?;
    let trace = read_trace(file, expected_rate).map_err(|e| match e {
        Error::Io(io) => Error::Io(io),
        other => Error::Parse {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let warnings = trace.warnings();
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok((trace, warnings))
}

/// Linear interpolation onto a uniform grid starting at the first timestamp.
pub fn resample(trace: &SignalTrace, rate: f64) -> Result<SignalTrace> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::input(format!("rate must be > 0, got {rate}")));
    }
    let t0 = trace.timestamps[0];
    let t_end = trace.timestamps[trace.len() - 1];
    let n = ((t_end - t0) * rate * (1.0 + 1e-12)).floor() as usize + 1;
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let t = (t0 + i as f64 / rate).min(t_end);
        while j + 2 < trace.len() && trace.timestamps[j + 1] <= t {
            j += 1;
        }
        let (ta, tb) = (trace.timestamps[j], trace.timestamps[j + 1]);
        let (ya, yb) = (trace.values[j], trace.values[j + 1]);
        let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        times.push(t);
        values.push(ya + w * (yb - ya));
    }
    if times.len() < 2 {
        // Rate too low to place two grid points inside the span: keep the endpoints.
        return SignalTrace::new(
            vec![t0, t_end],
            vec![trace.values[0], trace.values[trace.len() - 1]],
            rate,
        );
    }
    SignalTrace::new(times, values, rate)
}
