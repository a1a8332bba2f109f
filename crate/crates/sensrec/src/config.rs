//! Run configuration and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sensrec_core::eval::{SyntheticConfig, DEFAULT_KS, DEFAULT_RESAMPLES};
use sensrec_core::rec::{ModelKind, SeqModelConfig};
use sensrec_core::student::{DistillConfig, StudentConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub bootstrap_resamples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            bootstrap_resamples: DEFAULT_RESAMPLES,
        }
    }
}

/// Every tunable of every command. Seeds inside the blocks are overwritten
/// by the top-level `seed` when the config is resolved, so a single number
/// controls all randomness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    /// Label written into metric reports.
    pub domain: String,
    pub synth: SyntheticConfig,
    pub student: StudentConfig,
    pub distill: DistillConfig,
    /// Share of items held out to validate the student.
    pub distill_holdout: f64,
    /// Backbone settings shared by every trained model; `kind` and
    /// `use_sensory` are set per run.
    pub model: SeqModelConfig,
    pub kinds: Vec<ModelKind>,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            domain: "synthetic".into(),
            synth: SyntheticConfig::default(),
            student: StudentConfig::default(),
            distill: DistillConfig::default(),
            distill_holdout: 0.1,
            model: SeqModelConfig::default(),
            kinds: ModelKind::ALL.to_vec(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file, or the config embedded in a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
        let mut v: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parse {}", path.display()))?;
        if v.get("command").is_some() && v.get("config").is_some() {
            let inner = v["config"].take();
            v = inner;
        }
        let cfg: RunConfig = serde_json::from_value(v).with_context(|| format!("config {}", path.display()))?;
        if cfg.version != CONFIG_VERSION {
            bail!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            );
        }
        Ok(cfg)
    }

    /// Applies the seed override and pushes the seed into every block.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.synth.seed = self.seed;
        self.distill.seed = self.seed;
        self.model.seed = self.seed;
        self.synth.check()?;
        self.distill.check()?;
        self.model.check()?;
        if !(0.0..1.0).contains(&self.distill_holdout) {
            bail!("distill_holdout must lie in [0, 1)");
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            bail!("eval.ks must be non-empty and positive");
        }
        if self.eval.bootstrap_resamples == 0 {
            bail!("eval.bootstrap_resamples must be positive");
        }
        Ok(self)
    }

    /// Model config for one backbone and setting.
    pub fn model_for(&self, kind: ModelKind, use_sensory: bool) -> SeqModelConfig {
        SeqModelConfig {
            kind,
            use_sensory,
            ..self.model.clone()
        }
    }
}

/// Everything needed to rerun a command: the resolved config and content
/// hashes of its inputs and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, threads: usize) -> Self {
        Self {
            version: CONFIG_VERSION,
            command: command.into(),
            seed: config.seed,
            threads,
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Records `path` under its file name (outputs live in the out dir).
    pub fn output(&mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into());
        self.outputs.insert(name, sha256_file(path)?);
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hash {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
