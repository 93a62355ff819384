//! Versioned JSON snapshots of engine configuration plus memory state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::memory::MemoryState;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub config: EngineConfig,
    pub state: MemoryState,
}

impl Snapshot {
    pub fn new(config: EngineConfig, state: MemoryState) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            config,
            state,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(text)?;
        snap.check()?;
        Ok(snap)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let snap: Snapshot = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        snap.check()?;
        Ok(snap)
    }

    fn check(&self) -> Result<()> {
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::Contract(format!(
                "snapshot version {} unsupported (expected {SNAPSHOT_VERSION})",
                self.version
            )));
        }
        self.config.validate()?;
        let dim = self.config.embedder.dim;
        if self.state.episodic.state().dim() != dim {
            return Err(Error::Contract(format!(
                "snapshot state dimension {} does not match config dimension {dim}",
                self.state.episodic.state().dim()
            )));
        }
        Ok(())
    }
}
