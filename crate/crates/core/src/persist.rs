//! JSON artifacts: checkpoints, experiment manifests and metrics logs.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! reader sees either the old file or the complete new one.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::agents::{AgentDims, Receiver, Sender};
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::scalar::Scalar;
use crate::trainer::{BaselineState, MetricsRecord, RngDescriptor, TrainConfig, TrainOutcome};
use crate::worldgen::WorldConfig;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One named parameter tensor, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

fn records<F: Scalar, P: Parameters<F>>(params: &P) -> Vec<TensorRecord> {
    params
        .tensors()
        .into_iter()
        .map(|t| TensorRecord {
            name: t.name,
            shape: t.shape,
            data: t.data.iter().map(|v| v.as_f64()).collect(),
        })
        .collect()
}

/// Copies `saved` into `target`, which fixes the expected names and shapes.
fn fill_from<F: Scalar, P: Parameters<F>>(target: &mut P, saved: &[TensorRecord], prefix: &str) -> Result<()> {
    let expected: Vec<(String, Vec<usize>)> = target
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.shape))
        .collect();
    for rec in saved {
        let product: usize = rec.shape.iter().product();
        if rec.data.len() != product {
            return Err(Error::Corrupt(format!(
                "tensor `{prefix}.{}` declares shape {:?} but holds {} values",
                rec.name,
                rec.shape,
                rec.data.len()
            )));
        }
        if rec.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("checkpoint tensor `{prefix}.{}`", rec.name)));
        }
    }
    for (name, shape) in &expected {
        let rec = saved
            .iter()
            .find(|r| &r.name == name)
            .ok_or_else(|| Error::Corrupt(format!("missing tensor `{prefix}.{name}`")))?;
        if &rec.shape != shape {
            return Err(Error::TensorShape {
                tensor: format!("{prefix}.{name}"),
                expected: shape.clone(),
                found: rec.shape.clone(),
            });
        }
    }
    if let Some(extra) = saved.iter().find(|r| !expected.iter().any(|(n, _)| n == &r.name)) {
        return Err(Error::Corrupt(format!("unexpected tensor `{prefix}.{}`", extra.name)));
    }
    let names: Vec<String> = expected.into_iter().map(|(n, _)| n).collect();
    for (dst, name) in target.tensors_mut().into_iter().zip(&names) {
        let rec = saved.iter().find(|r| &r.name == name).expect("checked above");
        for (d, &s) in dst.iter_mut().zip(&rec.data) {
            *d = F::of(s);
        }
    }
    Ok(())
}

/// Complete trained state of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub world: WorldConfig,
    pub iteration: usize,
    pub sender: Vec<TensorRecord>,
    pub receiver: Vec<TensorRecord>,
    pub baseline: BaselineState,
    pub rng: RngDescriptor,
}

impl Checkpoint {
    pub fn from_outcome<F: Scalar>(config: &TrainConfig, world: &WorldConfig, outcome: &TrainOutcome<F>) -> Self {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config: config.clone(),
            world: world.clone(),
            iteration: outcome.iterations,
            sender: records(&outcome.sender),
            receiver: records(&outcome.receiver),
            baseline: outcome.baseline,
            rng: outcome.rng.clone(),
        }
    }

    pub fn dims(&self) -> Result<AgentDims> {
        self.config.dims(self.world.feature_dim)
    }

    /// Rebuilds the agents this checkpoint was saved from.
    pub fn agents<F: Scalar>(&self) -> Result<(Sender<F>, Receiver<F>)> {
        self.agents_for(&self.config, self.world.feature_dim)
    }

    /// Loads the saved parameters into agents shaped by `config`; any
    /// disagreement is reported against the offending tensor.
    pub fn agents_for<F: Scalar>(&self, config: &TrainConfig, feature_dim: usize) -> Result<(Sender<F>, Receiver<F>)> {
        let dims = config.dims(feature_dim)?;
        if config.arch != self.config.arch {
            return Err(Error::config(
                "arch",
                format!("checkpoint holds a {:?} sender, run expects {:?}", self.config.arch, config.arch),
            ));
        }
        let mut sender = Sender::<F>::zeros(config.arch, &dims);
        let mut receiver = Receiver::<F>::zeros(&dims);
        fill_from(&mut sender, &self.sender, "sender")?;
        fill_from(&mut receiver, &self.receiver, "receiver")?;
        Ok((sender, receiver))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Corrupt(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Corrupt(format!("checkpoint is not valid JSON: {e}")))?;
        let version = value
            .get("schema_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Corrupt("checkpoint has no schema_version".into()))?;
        if version != u64::from(CHECKPOINT_SCHEMA_VERSION) {
            return Err(Error::SchemaVersion {
                found: version.min(u64::from(u32::MAX)) as u32,
                expected: CHECKPOINT_SCHEMA_VERSION,
            });
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| Error::Corrupt(format!("malformed checkpoint: {e}")))?;
        ckpt.config.validate()?;
        ckpt.world.validate()?;
        // shapes must agree with the declared architecture
        ckpt.agents::<f64>()?;
        Ok(ckpt)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    atomic_write(path, ckpt.to_json()?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_json(&read_to_string(path)?)
}

/// Where a run writes its artifacts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Parent directory; each run gets `dir/<run_id>/`.
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("runs") }
    }
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const WORLD_FILE: &str = "world.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentManifest {
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
    /// Derived from the world and training configs when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

impl ExperimentManifest {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate_for(self.world.n_concepts())?;
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return Err(Error::config("run_id", "must be a plain non-empty file name"));
            }
        }
        Ok(())
    }

    /// Explicit id, or the first 12 hex digits of the SHA-256 of the
    /// canonical world and training configs.
    pub fn run_id(&self) -> String {
        if let Some(id) = &self.run_id {
            return id.clone();
        }
        let canonical = serde_json::to_string(&(&self.world, &self.train)).expect("configs serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(digest)[..12].to_string()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.dir.join(self.run_id())
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|source| Error::Parse {
            path: origin.to_path_buf(),
            source,
        })?;
        Self::from_value(value, origin, &[])
    }

    /// Builds a manifest from a JSON tree after applying `key=value`
    /// overrides with dotted keys, such as `train.lr=0.1`.
    pub fn from_value(mut value: Value, origin: &Path, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let manifest: ExperimentManifest = serde_json::from_value(value).map_err(|source| Error::Parse {
            path: origin.to_path_buf(),
            source,
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Corrupt(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

/// Loads, defaults and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    load_manifest_with(path, &[])
}

pub fn load_manifest_with(path: &Path, overrides: &[String]) -> Result<ExperimentManifest> {
    let text = read_to_string(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentManifest::from_value(value, path, overrides)
}

/// Sets `a.b.c=value` inside a JSON object tree. The value is read as JSON
/// when it parses as such and as a plain string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config("override", format!("`{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config("override", format!("bad key `{key}`")));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(Error::config(key, "does not name a nested table"));
        }
        node = node
            .as_object_mut()
            .expect("checked")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Error::config(key, "does not name a nested table"))?;
    obj.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

pub fn metrics_to_jsonl(records: &[MetricsRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Corrupt(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_metrics_jsonl(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    atomic_write(path, metrics_to_jsonl(records)?.as_bytes())
}

pub fn read_metrics_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Parse {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}
