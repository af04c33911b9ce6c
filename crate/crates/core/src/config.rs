//! Experiment configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cds::CdsConfig;
use crate::error::{Error, Result};
use crate::gp::GpHyperparams;
use crate::optimizer::{OptimizerConfig, CUE_BOUND_FRACTION};
use crate::strategy::{StrategyKind, ACCEPTANCE_BAND, DEFAULT_BEAT_COUNT, DEFAULT_P_GAIN};
use crate::walker::WalkerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Length of every session, s.
    pub session_duration: f64,
    /// Cues are only played before this time, s.
    pub cueing_duration: f64,
    /// Fractional target offsets from the baseline; positive is UP.
    pub target_offset: f64,
    /// Strides between consecutive acceptance checks.
    pub check_interval: u32,
    /// Half-width of the acceptance band, fraction of the target.
    pub acceptance_band: f64,
    pub beat_count: u32,
    /// Simulation and estimator rate, Hz.
    pub sample_rate: f64,
    /// Walking time before the session clock starts, s. The estimator runs
    /// during it so that checks start from a settled cadence estimate.
    pub pre_roll: f64,
    /// Control-session time discarded before the baseline is averaged, s.
    pub baseline_warmup: f64,
    /// Every n-th simulation sample is written to the trial log.
    pub log_every: usize,
    /// Estimated cadence outside this range aborts the trial, Hz.
    pub divergence_range: [f64; 2],
    /// Explicit walker seeds. Overrides `seed_count` when non-empty.
    pub seeds: Vec<u64>,
    /// Seeds `1..=seed_count` when `seeds` is empty.
    pub seed_count: u64,
    /// Run seeds in parallel.
    pub parallel: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            session_duration: 420.0,
            cueing_duration: 360.0,
            target_offset: 0.2,
            check_interval: 4,
            acceptance_band: ACCEPTANCE_BAND,
            beat_count: DEFAULT_BEAT_COUNT,
            sample_rate: 285.0,
            pre_roll: 20.0,
            baseline_warmup: 60.0,
            log_every: 10,
            divergence_range: [0.1, 5.0],
            seeds: Vec::new(),
            seed_count: 20,
            parallel: true,
        }
    }
}

impl ProtocolConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (1..=self.seed_count).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("session_duration", self.session_duration),
            ("cueing_duration", self.cueing_duration),
            ("target_offset", self.target_offset),
            ("acceptance_band", self.acceptance_band),
            ("sample_rate", self.sample_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("protocol.{name} must be > 0, got {v}")));
            }
        }
        if self.cueing_duration >= self.session_duration {
            return Err(Error::config("protocol.cueing_duration must be shorter than session_duration"));
        }
        if self.baseline_warmup < 0.0 || self.baseline_warmup >= self.session_duration {
            return Err(Error::config("protocol.baseline_warmup must lie in [0, session_duration)"));
        }
        if !(self.pre_roll.is_finite() && self.pre_roll >= 0.0) {
            return Err(Error::config("protocol.pre_roll must be >= 0"));
        }
        if self.target_offset >= CUE_BOUND_FRACTION {
            return Err(Error::config(format!(
                "protocol.target_offset {} puts targets outside the ±{CUE_BOUND_FRACTION} cue bounds",
                self.target_offset
            )));
        }
        if self.check_interval == 0 || self.beat_count == 0 || self.log_every == 0 {
            return Err(Error::config("protocol.check_interval, beat_count and log_every must be >= 1"));
        }
        let [lo, hi] = self.divergence_range;
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::config("protocol.divergence_range must be [low, high] with low < high"));
        }
        if self.seed_list().is_empty() {
            return Err(Error::config("no seeds configured"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub length_scales: [f64; 2],
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Re-estimate kernel hyperparameters every this many increments; 0 disables.
    pub refit_every: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        let h = GpHyperparams::default();
        Self {
            length_scales: h.length_scales,
            signal_variance: h.signal_variance,
            noise_variance: h.noise_variance,
            refit_every: 0,
        }
    }
}

impl GpConfig {
    pub fn hyperparams(&self) -> GpHyperparams {
        GpHyperparams {
            length_scales: self.length_scales,
            signal_variance: self.signal_variance,
            noise_variance: self.noise_variance,
            basis_coefficient: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerConfig {
    /// Built-in persona name or a key of `custom`.
    pub persona: String,
    pub custom: BTreeMap<String, WalkerParams>,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        Self { persona: "baseline-puller".into(), custom: BTreeMap::new() }
    }
}

impl WalkerConfig {
    pub fn resolve(&self, name: &str) -> Result<WalkerParams> {
        let params = self
            .custom
            .get(name)
            .cloned()
            .or_else(|| WalkerParams::persona(name))
            .ok_or_else(|| Error::config(format!("unknown walker persona '{name}'")))?;
        params.validate()?;
        Ok(params)
    }

    pub fn params(&self) -> Result<WalkerParams> {
        self.resolve(&self.persona)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategiesConfig {
    pub list: Vec<String>,
    pub p_gain: f64,
}

impl Default for StrategiesConfig {
    fn default() -> Self {
        Self {
            list: vec!["fixed".into(), "proportional".into(), "adaptive".into()],
            p_gain: DEFAULT_P_GAIN,
        }
    }
}

impl StrategiesConfig {
    pub fn kinds(&self) -> Result<Vec<StrategyKind>> {
        let kinds = self
            .list
            .iter()
            .map(|n| StrategyKind::parse_with_gain(n, self.p_gain))
            .collect::<Result<Vec<_>>>()?;
        if kinds.is_empty() {
            return Err(Error::config("strategies.list is empty"));
        }
        if kinds.contains(&StrategyKind::Control) {
            return Err(Error::config("control runs automatically and cannot be listed as a strategy"));
        }
        Ok(kinds)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolConfig,
    pub cds: CdsConfig,
    pub gp: GpConfig,
    pub optimizer: OptimizerConfig,
    pub walker: WalkerConfig,
    pub strategies: StrategiesConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Estimator settings with the sample period tied to the protocol rate.
    pub fn cds_config(&self) -> CdsConfig {
        CdsConfig { sample_period: 1.0 / self.protocol.sample_rate, ..self.cds.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.cds_config().validate().map_err(as_config)?;
        self.gp.hyperparams().validate().map_err(as_config)?;
        self.optimizer.validate().map_err(as_config)?;
        self.walker.params()?;
        self.strategies.kinds()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Config(m),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.protocol.seed_list().len(), 20);
        assert!((cfg.cds_config().sample_period - 1.0 / 285.0).abs() < 1e-18);
    }

    #[test]
    fn sections_parse() {
        let text = r#"
[protocol]
seeds = [3, 5]
target_offset = 0.2

[gp]
noise_variance = 0.01

[walker]
persona = "slow"

[walker.custom.slow]
baseline_cadence = 1.4
cue_follow_gain = 0.5
baseline_pull_gain = 0.2
follow_probability = 0.9
cadence_noise_std = 0.0
memory_halflife = 10.0

[strategies]
list = ["fixed", "adaptive"]
p_gain = 0.3
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.protocol.seed_list(), vec![3, 5]);
        assert_eq!(cfg.gp.noise_variance, 0.01);
        assert_eq!(cfg.walker.params().unwrap().baseline_cadence, 1.4);
        assert_eq!(cfg.strategies.kinds().unwrap().len(), 2);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[protocol]\ncueing_duration = 500.0",
            "[protocol]\ntarget_offset = 0.4",
            "[protocol]\nsample_rate = 0.0",
            "[walker]\npersona = \"nobody\"",
            "[strategies]\nlist = [\"control\"]",
            "[strategies]\nlist = [\"random\"]",
            "[gp]\nnoise_variance = -1.0",
            "[protocol]\nunknown_key = 1",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }
}
