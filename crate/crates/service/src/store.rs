//! File-backed store: one JSON document per network and per scenario.
//!
//! ```text
//! <root>/networks/net-000001.json   network document (same format as the CLI)
//! <root>/scenarios/scn-000001.json  scenario lineage
//! ```
//!
//! Documents are written to a temporary sibling and renamed into place, so a reader never
//! sees a half-written file. The in-memory index holds shared snapshots that are swapped
//! whole on every write.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use systemic_core::network::NetworkSummary;
use systemic_core::{Network, Scenario, Stage};

use crate::error::{ApiError, ApiResult};

const NETWORK_PREFIX: &str = "net-";
const SCENARIO_PREFIX: &str = "scn-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    pub network_id: String,
    pub summary: NetworkSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub scenario_id: String,
    pub network_id: String,
    pub created_at: u64,
    pub revision: u32,
    pub stages: Vec<Stage>,
}

impl From<&Scenario> for ScenarioEntry {
    fn from(s: &Scenario) -> Self {
        Self {
            scenario_id: s.id.clone(),
            network_id: s.network_id.clone(),
            created_at: s.created_at,
            revision: s.revision,
            stages: s.stages(),
        }
    }
}

pub struct Store {
    root: PathBuf,
    networks: RwLock<BTreeMap<String, Arc<Network>>>,
    scenarios: RwLock<BTreeMap<String, Arc<Scenario>>>,
    next_network: AtomicU64,
    next_scenario: AtomicU64,
    next_temp: AtomicU64,
    writers: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> ApiError {
    ApiError::internal(format!("{}: {e}", path.display()))
}

fn sequence_number(stem: &str, prefix: &str) -> Option<u64> {
    stem.strip_prefix(prefix)?.parse().ok()
}

/// `(stem, path)` of every `*.json` document in `dir`. Stale temporaries are deleted.
fn documents(dir: &Path) -> ApiResult<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if name.starts_with('.') && name.contains(".tmp") {
            let _ = fs::remove_file(&path);
            continue;
        }
        if let Some(stem) = name.strip_suffix(".json") {
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

impl Store {
    /// Open (or create) a store rooted at `root` and load every document in it.
    pub fn open(root: impl Into<PathBuf>) -> ApiResult<Self> {
        let root = root.into();
        for sub in ["networks", "scenarios"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        }

        let mut networks = BTreeMap::new();
        let mut max_network = 0;
        for (stem, path) in documents(&root.join("networks"))? {
            let Some(k) = sequence_number(&stem, NETWORK_PREFIX) else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
            let net = Network::from_json(&text).map_err(|e| io_error(&path, e))?;
            networks.insert(stem, Arc::new(net));
            max_network = max_network.max(k);
        }

        let mut scenarios = BTreeMap::new();
        let mut max_scenario = 0;
        for (stem, path) in documents(&root.join("scenarios"))? {
            let Some(k) = sequence_number(&stem, SCENARIO_PREFIX) else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
            let scenario: Scenario = serde_json::from_str(&text).map_err(|e| io_error(&path, e))?;
            scenarios.insert(stem, Arc::new(scenario));
            max_scenario = max_scenario.max(k);
        }

        Ok(Self {
            root,
            networks: RwLock::new(networks),
            scenarios: RwLock::new(scenarios),
            next_network: AtomicU64::new(max_network + 1),
            next_scenario: AtomicU64::new(max_scenario + 1),
            next_temp: AtomicU64::new(0),
            writers: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_atomic(&self, path: &Path, contents: &str) -> ApiResult<()> {
        let dir = path.parent().expect("document paths have a parent");
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("doc");
        let k = self.next_temp.fetch_add(1, Ordering::Relaxed);
        let tmp = dir.join(format!(".{name}.tmp-{}-{k}", std::process::id()));
        let result = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        })();
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            return Err(io_error(path, e));
        }
        Ok(())
    }

    pub fn insert_network(&self, net: Network) -> ApiResult<String> {
        let k = self.next_network.fetch_add(1, Ordering::SeqCst);
        let id = format!("{NETWORK_PREFIX}{k:06}");
        let path = self.root.join("networks").join(format!("{id}.json"));
        self.write_atomic(&path, &net.to_json()?)?;
        self.networks
            .write()
            .expect("network index poisoned")
            .insert(id.clone(), Arc::new(net));
        Ok(id)
    }

    pub fn network(&self, id: &str) -> ApiResult<Arc<Network>> {
        self.networks
            .read()
            .expect("network index poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("network", id))
    }

    pub fn list_networks(&self) -> Vec<NetworkEntry> {
        self.networks
            .read()
            .expect("network index poisoned")
            .iter()
            .map(|(id, net)| NetworkEntry {
                network_id: id.clone(),
                summary: net.summary(),
            })
            .collect()
    }

    pub fn allocate_scenario_id(&self) -> String {
        let k = self.next_scenario.fetch_add(1, Ordering::SeqCst);
        format!("{SCENARIO_PREFIX}{k:06}")
    }

    /// Persist a scenario and publish it to readers.
    pub fn put_scenario(&self, scenario: Scenario) -> ApiResult<Arc<Scenario>> {
        let path = self
            .root
            .join("scenarios")
            .join(format!("{}.json", scenario.id));
        let text = serde_json::to_string_pretty(&scenario)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        self.write_atomic(&path, &text)?;
        let scenario = Arc::new(scenario);
        self.scenarios
            .write()
            .expect("scenario index poisoned")
            .insert(scenario.id.clone(), scenario.clone());
        Ok(scenario)
    }

    pub fn scenario(&self, id: &str) -> ApiResult<Arc<Scenario>> {
        self.scenarios
            .read()
            .expect("scenario index poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("scenario", id))
    }

    pub fn list_scenarios(&self) -> Vec<ScenarioEntry> {
        self.scenarios
            .read()
            .expect("scenario index poisoned")
            .values()
            .map(|s| ScenarioEntry::from(s.as_ref()))
            .collect()
    }

    /// Write lock serializing mutations of one scenario.
    pub fn writer(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.writers
            .lock()
            .expect("writer table poisoned")
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}
