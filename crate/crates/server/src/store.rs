//! Read-only checkpoint lookup by id under a root directory.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use siglab_core::persist::{load_checkpoint, CHECKPOINT_FILE};
use siglab_core::worldgen::generate_world;
use siglab_core::{Checkpoint, Error, Receiver, Sender, World};

/// A checkpoint with its world regenerated and agents rebuilt.
#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub id: String,
    pub checkpoint: Checkpoint,
    pub world: World,
    pub sender: Sender,
    pub receiver: Receiver,
    /// symbol -> concept name, present only for grounded checkpoints.
    pub labels: Option<BTreeMap<usize, String>>,
}

impl LoadedCheckpoint {
    pub fn from_checkpoint(id: impl Into<String>, checkpoint: Checkpoint) -> siglab_core::Result<Self> {
        let world = generate_world::<f64>(&checkpoint.world)?;
        let (sender, receiver) = checkpoint.agents::<f64>()?;
        let labels = if checkpoint.config.grounding {
            let set = checkpoint.config.effective_label_set(world.n_concepts());
            let mut map = BTreeMap::new();
            for e in set.entries() {
                map.insert(e.symbol, world.concept(e.concept)?.name.clone());
            }
            Some(map)
        } else {
            None
        };
        Ok(LoadedCheckpoint {
            id: id.into(),
            checkpoint,
            world,
            sender,
            receiver,
            labels,
        })
    }

    pub fn label_for(&self, symbol: usize) -> Option<String> {
        self.labels.as_ref().and_then(|m| m.get(&symbol).cloned())
    }
}

#[derive(Debug)]
pub enum StoreError {
    NotFound(String),
    Load(String, Error),
}

#[derive(Debug)]
pub struct CheckpointStore {
    root: PathBuf,
    cache: Mutex<HashMap<String, Arc<LoadedCheckpoint>>>,
}

impl CheckpointStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CheckpointStore {
            root: root.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Accepts `id` as a file under the root, `id.json`, or a run directory
    /// holding `checkpoint.json`. Ids may not climb out of the root.
    pub fn resolve(&self, id: &str) -> Option<PathBuf> {
        let safe = !id.is_empty()
            && !id.starts_with('.')
            && !id.contains(['/', '\\'])
            && !id.contains("..");
        if !safe {
            return None;
        }
        [
            self.root.join(id),
            self.root.join(format!("{id}.json")),
            self.root.join(id).join(CHECKPOINT_FILE),
        ]
        .into_iter()
        .find(|p| p.is_file())
    }

    pub fn get(&self, id: &str) -> Result<Arc<LoadedCheckpoint>, StoreError> {
        if let Some(hit) = self.cache.lock().expect("store lock").get(id) {
            return Ok(hit.clone());
        }
        let path = self.resolve(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        let ckpt = load_checkpoint(&path).map_err(|e| StoreError::Load(id.to_string(), e))?;
        let loaded = Arc::new(
            LoadedCheckpoint::from_checkpoint(id, ckpt).map_err(|e| StoreError::Load(id.to_string(), e))?,
        );
        self.cache
            .lock()
            .expect("store lock")
            .insert(id.to_string(), loaded.clone());
        Ok(loaded)
    }

    /// Registers an already-built checkpoint under `id`, bypassing the disk.
    pub fn insert(&self, loaded: LoadedCheckpoint) {
        self.cache
            .lock()
            .expect("store lock")
            .insert(loaded.id.clone(), Arc::new(loaded));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_cannot_escape_root() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ok.json"), "{}").unwrap();
        let store = CheckpointStore::new(dir.path().join("sub"));
        assert!(store.resolve("../ok").is_none());
        assert!(store.resolve("..").is_none());
        assert!(store.resolve("").is_none());
        let store = CheckpointStore::new(dir.path());
        assert_eq!(store.resolve("ok"), Some(dir.path().join("ok.json")));
        assert!(store.resolve("a/b").is_none());
    }
}
