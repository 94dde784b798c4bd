//! Experiment configuration: one flat key = value section per module,
//! read from TOML. Every simulation parameter has a default so a
//! minimal file (or none at all) runs the reference setup.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::AutoencoderDims;
use crate::channel::ChannelConfig;
use crate::mlsd::PamConfig;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Which transmission system a sweep evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Sbrnn,
    Pam2Mlsd,
    Pam4Mlsd,
}

impl SystemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SystemKind::Sbrnn => "sbrnn",
            SystemKind::Pam2Mlsd => "pam2_mlsd",
            SystemKind::Pam4Mlsd => "pam4_mlsd",
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sbrnn" => Ok(SystemKind::Sbrnn),
            "pam2_mlsd" | "pam2" => Ok(SystemKind::Pam2Mlsd),
            "pam4_mlsd" | "pam4" => Ok(SystemKind::Pam4Mlsd),
            other => Err(Error::config(format!("unknown system `{other}`"))),
        }
    }
}

/// Sweep-level settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub system: SystemKind,
    pub distances_km: Vec<f64>,
    pub seed: u64,
    /// Test set: `test_sequences` sequences of `test_length` messages.
    pub test_sequences: usize,
    pub test_length: usize,
    /// If training is requested, missing checkpoints are trained;
    /// otherwise they are an error.
    pub train: bool,
    /// Detection block length for the MLSD systems, in symbols.
    pub block_symbols: usize,
    /// Pre-FEC BER threshold drawn as a reference line in plots.
    pub hd_fec_ber: f64,
    /// Bit labeling variants to evaluate: optimized | gray | random.
    pub labeling_variants: Vec<String>,
    /// Combining weight variants to evaluate: optimized | uniform.
    pub weight_variants: Vec<String>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            system: SystemKind::Sbrnn,
            distances_km: vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0],
            seed: 1,
            test_sequences: 250,
            test_length: 10_000,
            train: false,
            block_symbols: 10_000,
            hd_fec_ber: 3.8e-3,
            labeling_variants: vec!["optimized".into(), "gray".into()],
            weight_variants: vec!["optimized".into(), "uniform".into()],
        }
    }
}

/// Sliding-window settings of the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub window: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { window: 10 }
    }
}

/// MLSD settings beyond the PAM transmitter itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlsdConfig {
    #[serde(flatten)]
    pub pam: PamConfig,
    /// Trellis memory mu (pre- plus post-cursor symbols, even).
    pub memory: usize,
    /// Symbols transmitted to estimate the expectation table.
    pub train_symbols: usize,
}

impl Default for MlsdConfig {
    fn default() -> Self {
        MlsdConfig { pam: PamConfig::pam2(), memory: 12, train_symbols: 10_000_000 }
    }
}

/// Everything an experiment needs, one section per module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub harness: HarnessConfig,
    pub channel: ChannelConfig,
    pub autoencoder: AutoencoderDimsConfig,
    pub estimator: EstimatorConfig,
    pub trainer: TrainConfig,
    pub mlsd: MlsdConfig,
}

/// Serde-facing shape for the transceiver dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderDimsConfig {
    pub alphabet: usize,
    pub block_len: usize,
}

impl Default for AutoencoderDimsConfig {
    fn default() -> Self {
        AutoencoderDimsConfig { alphabet: 64, block_len: 48 }
    }
}

impl AutoencoderDimsConfig {
    pub fn dims(&self) -> Result<AutoencoderDims> {
        AutoencoderDims::new(self.alphabet, self.block_len)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.autoencoder.dims()?;
        self.trainer.validate()?;
        self.mlsd.pam.validate()?;
        if self.mlsd.memory % 2 != 0 {
            return Err(Error::config("mlsd memory must be even"));
        }
        if self.estimator.window < 1 {
            return Err(Error::config("estimator window must be >= 1"));
        }
        if self.harness.test_sequences < 1 || self.harness.test_length < 1 {
            return Err(Error::config("test set must be non-empty"));
        }
        if self.harness.test_length < 100 * self.estimator.window {
            return Err(Error::config("test_length must be at least 100x the window"));
        }
        for d in &self.harness.distances_km {
            if *d < 0.0 {
                return Err(Error::config("distances must be nonnegative"));
            }
        }
        if !(0.0..1.0).contains(&self.harness.hd_fec_ber) {
            return Err(Error::config("hd_fec_ber must be a BER in [0, 1)"));
        }
        Ok(())
    }

    /// Memory-matching parameter: bits inside the processing window
    /// (SBRNN) or inside a Viterbi state (MLSD).
    pub fn eta(&self) -> usize {
        match self.harness.system {
            SystemKind::Sbrnn => {
                self.estimator.window * (self.autoencoder.alphabet as f64).log2() as usize
            }
            SystemKind::Pam2Mlsd | SystemKind::Pam4Mlsd => {
                self.mlsd.memory * (self.mlsd.pam.order as f64).log2() as usize
            }
        }
    }

    /// Applies a command-line seed override: the harness seed is
    /// replaced and the trainer seeds are re-derived from it.
    pub fn with_seed_override(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.harness.seed = s;
            self.trainer.seed_train = crate::rng::derive_seed(s, 0x7421);
            self.trainer.seed_test = crate::rng::derive_seed(s, 0x7e57);
        }
        self
    }

    /// Hash over the canonical serialized configuration; stamped into
    /// every output path so differing configs never collide.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
