//! Self-describing JSON checkpoints holding a whole [`Model`] plus the
//! training settings that produced it.

use std::fs;
use std::path::Path;

use bertcaps_core::trainer::TrainConfig;
use bertcaps_core::Model;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outdir::write_atomic;

pub const FORMAT: &str = "bertcaps-checkpoint";
pub const VERSION: u32 = 1;

/// How the checkpointed model was trained; `evaluate` uses it to rebuild
/// the held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub train: TrainConfig,
    /// Train share of the stratified split, or `None` when trained on everything.
    pub split_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub provenance: Option<Provenance>,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(model: Model, provenance: Option<Provenance>) -> Self {
        Checkpoint { format: FORMAT.into(), version: VERSION, provenance, model }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(self).map_err(|e| Error::numeric(format!("cannot serialize checkpoint: {e}")))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header =
            serde_json::from_slice(bytes).map_err(|e| Error::data(format!("corrupt checkpoint: {e}")))?;
        if header.format != FORMAT {
            return Err(Error::data(format!("not a checkpoint (format {:?})", header.format)));
        }
        if header.version != VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {} (expected {VERSION})", header.version)));
        }
        let ck: Checkpoint = serde_json::from_slice(bytes).map_err(|e| Error::data(format!("corrupt checkpoint: {e}")))?;
        ck.model.validate().map_err(|e| Error::data(format!("inconsistent checkpoint: {e}")))?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::head_only(3, vec!["a".into(), "b".into()], 0.25, 9).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = Checkpoint::new(model(), None);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.model.config.reconstruction_weight, 0.25);
    }

    #[test]
    fn truncated_and_foreign_files_fail() {
        let bytes = Checkpoint::new(model(), None).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() / 2]).is_err());
        let other = String::from_utf8(bytes.clone()).unwrap().replace("\"version\":1", "\"version\":2");
        assert!(Checkpoint::from_bytes(other.as_bytes()).unwrap_err().message.contains("version"));
        let other = String::from_utf8(bytes).unwrap().replace(FORMAT, "something-else");
        assert!(Checkpoint::from_bytes(other.as_bytes()).is_err());
    }
}
