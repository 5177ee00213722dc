//! Key=value config files and their merge with command-line flags.
//!
//! Precedence: flag > config file > built-in default. Keys mirror the
//! training and synthesis parameter structs; anything else is rejected so
//! typos fail loudly instead of silently using a default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;

use entrain_core::measures::{ModelDims, TrainConfig};
use entrain_core::nn::AdamConfig;
use entrain_core::synth::SynthParams;

const KNOWN_KEYS: [&str; 18] = [
    // training
    "batch_size",
    "max_epochs",
    "patience",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "grl_lambda",
    "seed",
    "feat",
    "hidden",
    "code",
    // synthesis
    "n_sessions",
    "turns_per_session",
    "feature_dim",
    "consistency",
    "entrainment",
    "noise_sigma",
];

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&PathBuf>) -> Result<ConfigFile> {
        match path {
            None => Ok(ConfigFile::default()),
            Some(p) => ConfigFile::parse_file(p),
        }
    }

    fn parse_file(path: &Path) -> Result<ConfigFile> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{lineno}: expected key=value, got {raw:?}", path.display());
            };
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                bail!("{}:{lineno}: unknown config key {key:?}", path.display());
            }
            if values.insert(key.to_owned(), value.to_owned()).is_some() {
                bail!("{}:{lineno}: duplicate config key {key:?}", path.display());
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key));
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key} = {raw:?}: {e}")),
        }
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Training hyperparameters, shared by every command that trains models.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Base RNG seed (run i of an experiment uses seed + i)
    #[arg(long, alias = "seeds")]
    pub seed: Option<u64>,
    /// Minibatch size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epoch cap per training stage
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without validation improvement before early stopping
    #[arg(long)]
    pub patience: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Adam first-moment decay
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Adam second-moment decay
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Adam denominator epsilon
    #[arg(long)]
    pub adam_eps: Option<f64>,
    /// Scale on the reversed consistency gradient (adversarial measure)
    #[arg(long)]
    pub grl_lambda: Option<f64>,
    /// Input feature dimensionality
    #[arg(long)]
    pub feat: Option<usize>,
    /// Hidden layer width
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Bottleneck code dimensionality
    #[arg(long)]
    pub code: Option<usize>,
}

impl TrainFlags {
    pub fn resolve(&self, file: &ConfigFile) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        Ok(TrainConfig {
            batch_size: pick(self.batch_size, file.get("batch_size")?, d.batch_size),
            max_epochs: pick(self.max_epochs, file.get("max_epochs")?, d.max_epochs),
            patience: pick(self.patience, file.get("patience")?, d.patience),
            adam: AdamConfig {
                lr: pick(self.lr, file.get("lr")?, d.adam.lr),
                beta1: pick(self.beta1, file.get("beta1")?, d.adam.beta1),
                beta2: pick(self.beta2, file.get("beta2")?, d.adam.beta2),
                eps: pick(self.adam_eps, file.get("adam_eps")?, d.adam.eps),
            },
            grl_lambda: pick(self.grl_lambda, file.get("grl_lambda")?, d.grl_lambda),
            seed: pick(self.seed, file.get("seed")?, d.seed),
            dims: ModelDims {
                feat: pick(self.feat, file.get("feat")?, d.dims.feat),
                hidden: pick(self.hidden, file.get("hidden")?, d.dims.hidden),
                code: pick(self.code, file.get("code")?, d.dims.code),
            },
        })
    }
}

/// Synthetic-corpus parameters.
#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    /// Number of dyadic sessions
    #[arg(long)]
    pub n_sessions: Option<usize>,
    /// Turns per session (exchanges = turns - 1)
    #[arg(long)]
    pub turns_per_session: Option<usize>,
    /// Feature dimensionality
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Speaker-consistency coefficient in [0, 1]
    #[arg(long)]
    pub consistency: Option<f64>,
    /// Entrainment-coupling ceiling in [0, 1]
    #[arg(long)]
    pub entrainment: Option<f64>,
    /// Observation noise scale
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SynthFlags {
    pub fn resolve(&self, file: &ConfigFile) -> Result<SynthParams> {
        let d = SynthParams::default();
        Ok(SynthParams {
            n_sessions: pick(self.n_sessions, file.get("n_sessions")?, d.n_sessions),
            turns_per_session: pick(
                self.turns_per_session,
                file.get("turns_per_session")?,
                d.turns_per_session,
            ),
            feature_dim: pick(self.feature_dim, file.get("feature_dim")?, d.feature_dim),
            consistency: pick(self.consistency, file.get("consistency")?, d.consistency),
            entrainment: pick(self.entrainment, file.get("entrainment")?, d.entrainment),
            noise_sigma: pick(self.noise_sigma, file.get("noise_sigma")?, d.noise_sigma),
            seed: pick(self.seed, file.get("seed")?, d.seed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_cfg(contents: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, contents).unwrap();
        (dir, path)
    }

    fn no_flags() -> TrainFlags {
        TrainFlags {
            seed: None,
            batch_size: None,
            max_epochs: None,
            patience: None,
            lr: None,
            beta1: None,
            beta2: None,
            adam_eps: None,
            grl_lambda: None,
            feat: None,
            hidden: None,
            code: None,
        }
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let (_dir, path) = write_cfg("batch_size = 64\nlr = 0.01 # tuned\nseed=7\n");
        let file = ConfigFile::load(Some(&path)).unwrap();
        let flags = TrainFlags {
            batch_size: Some(32),
            ..no_flags()
        };
        let cfg = flags.resolve(&file).unwrap();
        assert_eq!(cfg.batch_size, 32); // flag wins
        assert_eq!(cfg.adam.lr, 0.01); // file wins over default
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.max_epochs, TrainConfig::default().max_epochs); // default
    }

    #[test]
    fn unknown_and_malformed_keys_are_rejected() {
        let (_dir, path) = write_cfg("learning_rate = 0.1\n");
        let err = format!("{:#}", ConfigFile::load(Some(&path)).unwrap_err());
        assert!(err.contains("unknown config key"), "{err}");
        assert!(err.contains(":1:"), "{err}");

        let (_dir, path) = write_cfg("batch_size\n");
        assert!(ConfigFile::load(Some(&path)).is_err());

        let (_dir, path) = write_cfg("seed=1\nseed=2\n");
        let err = format!("{:#}", ConfigFile::load(Some(&path)).unwrap_err());
        assert!(err.contains("duplicate"), "{err}");

        let (_dir, path) = write_cfg("batch_size = many\n");
        let file = ConfigFile::load(Some(&path)).unwrap();
        assert!(no_flags().resolve(&file).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let (_dir, path) = write_cfg("# run settings\n\n  consistency = 0.5\n");
        let file = ConfigFile::load(Some(&path)).unwrap();
        let flags = SynthFlags {
            n_sessions: None,
            turns_per_session: None,
            feature_dim: None,
            consistency: None,
            entrainment: None,
            noise_sigma: None,
            seed: None,
        };
        let params = flags.resolve(&file).unwrap();
        assert_eq!(params.consistency, 0.5);
        assert_eq!(params.n_sessions, SynthParams::default().n_sessions);
    }
}
