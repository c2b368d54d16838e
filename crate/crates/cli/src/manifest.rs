use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one run. `args` replays the run; `outputs` lists every file the
/// command wrote, the manifest itself included.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<PathBuf>,
}

pub struct Recorder {
    manifest: RunManifest,
    out_dir: PathBuf,
    stage: Option<(String, Instant)>,
}

impl Recorder {
    pub fn new(command: &str, out_dir: &Path, config: serde_json::Value, seed: Option<u64>) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(Self {
            manifest: RunManifest {
                command: command.into(),
                args: std::env::args().skip(1).collect(),
                config,
                seed,
                version: env!("CARGO_PKG_VERSION").into(),
                timings: BTreeMap::new(),
                outputs: Vec::new(),
            },
            out_dir: out_dir.to_path_buf(),
            stage: None,
        })
    }

    /// Path of an output file inside the run directory; registers it.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let path = self.out_dir.join(name);
        self.manifest.outputs.push(path.clone());
        path
    }

    pub fn start(&mut self, stage: &str) {
        self.finish_stage();
        self.stage = Some((stage.into(), Instant::now()));
    }

    fn finish_stage(&mut self) {
        if let Some((name, t0)) = self.stage.take() {
            self.manifest.timings.insert(name, t0.elapsed().as_secs_f64());
        }
    }

    pub fn write(mut self) -> anyhow::Result<PathBuf> {
        self.finish_stage();
        let path = self.output(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
