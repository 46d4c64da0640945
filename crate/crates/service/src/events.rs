//! Per-scenario broadcast of long-running computation progress.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use systemic_core::Stage;
use tokio::sync::broadcast;

const CHANNEL_CAPACITY: usize = 1024;

/// Layout progress is reported every this many iterations.
pub const PROGRESS_STRIDE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioEvent {
    LayoutStarted {
        stage: Stage,
        config_hash: String,
        iterations: usize,
    },
    LayoutProgress {
        stage: Stage,
        config_hash: String,
        iteration: usize,
        kl: f64,
    },
    LayoutFinished {
        stage: Stage,
        config_hash: String,
        final_kl: f64,
    },
    InterventionApplied {
        revision: u32,
        label: String,
    },
    CompareFinished {
        plans: usize,
    },
}

impl ScenarioEvent {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioEvent::LayoutStarted { .. } => "layout_started",
            ScenarioEvent::LayoutProgress { .. } => "layout_progress",
            ScenarioEvent::LayoutFinished { .. } => "layout_finished",
            ScenarioEvent::InterventionApplied { .. } => "intervention_applied",
            ScenarioEvent::CompareFinished { .. } => "compare_finished",
        }
    }
}

#[derive(Default)]
pub struct EventHub {
    channels: Mutex<HashMap<String, broadcast::Sender<ScenarioEvent>>>,
}

impl EventHub {
    fn sender(&self, scenario_id: &str) -> broadcast::Sender<ScenarioEvent> {
        self.channels
            .lock()
            .expect("event table poisoned")
            .entry(scenario_id.to_string())
            .or_insert_with(|| broadcast::channel(CHANNEL_CAPACITY).0)
            .clone()
    }

    pub fn subscribe(&self, scenario_id: &str) -> broadcast::Receiver<ScenarioEvent> {
        self.sender(scenario_id).subscribe()
    }

    /// Dropped silently when nobody listens.
    pub fn publish(&self, scenario_id: &str, event: ScenarioEvent) {
        let _ = self.sender(scenario_id).send(event);
    }
}
