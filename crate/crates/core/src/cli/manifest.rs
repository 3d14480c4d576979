use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Command;
use crate::error::{Error, Result};
use crate::optim::TrainConfig;
use crate::trajdata::{SceneSpec, SynthParams};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Content digest of a file the command read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub fnv64: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self { path: path.to_path_buf(), fnv64: format!("{:016x}", fnv64(&std::fs::read(path)?)) })
    }

    pub fn verify(&self) -> Result<()> {
        let now = Self::of(&self.path)?;
        if now.fnv64 != self.fnv64 {
            return Err(Error::Config(format!("input {} changed since the manifest was written", self.path.display())));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Everything needed to repeat a command: its arguments, resolved
/// configuration snapshots, input digests and the artifacts it writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: Command,
    pub seed: Option<u64>,
    /// Scene as TOML text.
    pub scene: Option<String>,
    pub config: Option<TrainConfig>,
    pub synth: Option<SynthParams>,
    pub inputs: Vec<InputDigest>,
    pub artifacts: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: Command) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            command,
            seed: None,
            scene: None,
            config: None,
            synth: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn with_scene(mut self, scene: &SceneSpec) -> Self {
        self.scene = Some(scene.to_toml());
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest::of(path)?);
        Ok(())
    }

    pub fn scene_spec(&self) -> Result<Option<SceneSpec>> {
        self.scene.as_deref().map(SceneSpec::from_toml).transpose()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Config(format!("bad manifest: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv64(b"foobar"), 0x85944171f73967e8);
    }
}
