//! Interbank systemic-risk toolkit.
//!
//! * [`network`]: banks, exposure matrices, validation and the JSON/CSV document formats.
//! * [`generator`]: exposure estimation from marginals (maximum entropy, minimum density).
//! * [`contagion`]: shock propagation (threshold cascade, linear and hybrid stress dynamics).
//! * [`centrality`] and [`metrics`]: per-bank indicators and system-level aggregates.
//! * [`layout`] and [`render`]: the risk-island map and its SVG export.
//! * [`intervention`]: edge cuts, node removal, re-shock and assessment.
//! * [`scenario`]: the FN_o → FN_s → FN_i → FN_is lineage of one shock.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! `f64`.

pub mod centrality;
pub mod contagion;
pub mod error;
pub mod generator;
pub mod intervention;
pub mod layout;
pub mod metrics;
pub mod network;
pub mod render;
pub mod scalar;
pub mod scenario;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use contagion::{PropagationModel, ShockMagnitude, ShockSpec, ShockTargets};
pub use generator::{EstimationMethod, GeneratorConfig};
pub use intervention::{InterventionBase, InterventionPlan, Operation, RankingKey};
pub use layout::LayoutConfig;
pub use metrics::MetricsConfig;
pub use network::{Adjacency, Stage};

pub type Bank = network::Bank<f64>;
pub type ExposureMatrix = network::ExposureMatrix<f64>;
pub type Network = network::FinancialNetwork<f64>;
pub type Marginals = generator::Marginals<f64>;
pub type PropagationResult = contagion::PropagationResult<f64>;
pub type RiskMatrix = metrics::RiskMatrix<f64>;
pub type SystemRisk = metrics::SystemRisk<f64>;
pub type Layout = layout::Layout<f64>;
pub type Assessment = intervention::Assessment<f64>;
pub type ScenarioRun = intervention::ScenarioRun<f64>;
pub type Scenario = scenario::Scenario<f64>;
