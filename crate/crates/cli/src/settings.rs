//! Run settings: built-in defaults, then an optional JSON config file, then
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use bertcaps_core::trainer::TrainConfig;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Folds for `kfold`.
    pub k: usize,
    /// Train share of the stratified split used by `train`.
    pub split_ratio: f64,
    /// Declared domain names; inferred from the corpus in first-seen order when absent.
    pub domains: Option<Vec<String>>,
    /// Worker threads for `kfold`.
    pub threads: usize,
    pub train: TrainConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { k: 5, split_ratio: 0.8, domains: None, threads: 1, train: TrainConfig::default() }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::usage("k must be at least 2"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::usage("split_ratio must lie in (0, 1)"));
        }
        if self.threads == 0 {
            return Err(Error::usage("threads must be at least 1"));
        }
        if let Some(d) = &self.domains {
            if d.is_empty() || d.iter().any(|x| x.trim().is_empty()) {
                return Err(Error::usage("domain names must be non-empty"));
            }
        }
        self.train.validate()?;
        Ok(())
    }
}

/// Flags shared by every subcommand that trains or reads a corpus.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON settings file; flags given on the command line win over it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_name = "LR")]
    pub learning_rate: Option<f64>,
    /// Weight of the reconstruction term in the loss.
    #[arg(long, value_name = "LAMBDA")]
    pub reconstruction_weight: Option<f64>,
    /// Epochs without validation improvement before stopping (0 disables).
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Inverse-frequency weighting of the sentiment loss.
    #[arg(long, value_name = "BOOL")]
    pub class_weighting: Option<bool>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
    /// Worker threads for k-fold runs.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Comma-separated domain names, fixing their label order.
    #[arg(long, value_delimiter = ',')]
    pub domains: Option<Vec<String>>,
}

pub fn load_file(path: &Path) -> Result<Settings> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::usage(format!("{}: {e}", path.display())))
}

impl Overrides {
    /// Defaults, then the config file, then flags; validated.
    pub fn resolve(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => load_file(p)?,
            None => Settings::default(),
        };
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        let t = &mut s.train;
        set(&mut t.seed, &self.seed);
        set(&mut t.epochs, &self.epochs);
        set(&mut t.batch_size, &self.batch_size);
        set(&mut t.learning_rate, &self.learning_rate);
        set(&mut t.reconstruction_weight, &self.reconstruction_weight);
        set(&mut t.early_stop_patience, &self.patience);
        set(&mut t.validation_fraction, &self.validation_fraction);
        set(&mut t.class_weighting, &self.class_weighting);
        let e = &mut t.encoder;
        set(&mut e.d_model, &self.d_model);
        set(&mut e.layers, &self.layers);
        set(&mut e.heads, &self.heads);
        set(&mut e.d_ff, &self.d_ff);
        set(&mut e.max_seq_len, &self.max_seq_len);
        set(&mut e.min_count, &self.min_count);
        set(&mut s.k, &self.k);
        set(&mut s.split_ratio, &self.split_ratio);
        set(&mut s.threads, &self.threads);
        if let Some(d) = &self.domains {
            s.domains = Some(d.iter().map(|x| x.trim().to_string()).collect());
        }
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beats_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"k": 3, "train": {"epochs": 7, "learning_rate": 0.01}}"#).unwrap();
        let o = Overrides { config: Some(path), epochs: Some(9), ..Default::default() };
        let s = o.resolve().unwrap();
        assert_eq!(s.k, 3);
        assert_eq!(s.train.epochs, 9);
        assert_eq!(s.train.learning_rate, 0.01);
        assert_eq!(s.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"kk": 3}"#).unwrap();
        let e = Overrides { config: Some(path), ..Default::default() }.resolve().unwrap_err();
        assert_eq!(e.kind, crate::error::Kind::Usage);
        let e = Overrides { k: Some(1), ..Default::default() }.resolve().unwrap_err();
        assert_eq!(e.kind, crate::error::Kind::Usage);
        let e = Overrides { epochs: Some(0), ..Default::default() }.resolve().unwrap_err();
        assert_eq!(e.kind, crate::error::Kind::Usage);
    }
}
