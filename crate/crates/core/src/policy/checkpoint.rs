use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Policy, PolicyDims, Vocab};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "memeguard-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training stage a checkpoint was produced by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageTag {
    Init,
    Stage1,
    Stage2,
    Stage3,
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StageTag::Init => "init",
            StageTag::Stage1 => "stage1",
            StageTag::Stage2 => "stage2",
            StageTag::Stage3 => "stage3",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub stage: StageTag,
    pub dims: PolicyDims,
    pub vocab: Vocab,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(policy: &Policy, stage: StageTag) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            stage,
            dims: policy.dims(),
            vocab: policy.vocab().clone(),
            params: policy.params().to_vec(),
        }
    }

    pub fn into_policy(self) -> Result<Policy> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown checkpoint format `{}`",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        Policy::from_parts(self.vocab, self.dims, self.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
