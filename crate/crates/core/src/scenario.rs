//! Scenario lineage: one original network, one shock, at most one applied intervention.

use serde::{Deserialize, Serialize};

use crate::contagion::{PropagationResult, ShockSpec};
use crate::error::{Error, Result};
use crate::intervention::{
    candidate_strategies, compare_strategies, run_scenario_from, shock_network, Assessment,
    InterventionBase, InterventionPlan, RankedAssessment, RankingKey,
};
use crate::layout::{compute_layout_with_progress, Layout, LayoutConfig};
use crate::metrics::{risk_matrix, systemic_indicators, MetricsConfig, RiskMatrix, SystemRisk};
use crate::network::{FinancialNetwork, NetworkSummary, Stage};
use crate::scalar::Scalar;

pub const SCENARIO_VERSION: u32 = 1;

/// FN_i and FN_is together with the plan that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct AppliedIntervention<T> {
    pub plan: InterventionPlan,
    pub base: InterventionBase,
    pub intervened: FinancialNetwork<T>,
    pub propagation: PropagationResult<T>,
    pub intervened_shocked: FinancialNetwork<T>,
    pub assessment: Assessment<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct Scenario<T> {
    pub version: u32,
    pub id: String,
    pub network_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    /// Bumped whenever the intervention changes.
    pub revision: u32,
    pub original: FinancialNetwork<T>,
    pub shock: ShockSpec,
    pub propagation: PropagationResult<T>,
    pub shocked: FinancialNetwork<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention: Option<AppliedIntervention<T>>,
}

/// Compact view returned after a shock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct ShockOutcome<T> {
    pub scenario_id: String,
    pub summary: NetworkSummary,
    pub propagation: PropagationResult<T>,
    pub system_risk: SystemRisk<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct InterventionOutcome<T> {
    pub scenario_id: String,
    pub intervened: NetworkSummary,
    pub intervened_shocked: NetworkSummary,
    pub assessment: Assessment<T>,
}

impl<T: Scalar> Scenario<T> {
    /// Shock `original` and record FN_o and FN_s.
    pub fn shock(
        id: impl Into<String>,
        network_id: impl Into<String>,
        original: FinancialNetwork<T>,
        spec: ShockSpec,
        created_at: u64,
    ) -> Result<Self> {
        let original = original.with_stage(Stage::Original);
        let (propagation, shocked) = shock_network(&original, &spec)?;
        Ok(Self {
            version: SCENARIO_VERSION,
            id: id.into(),
            network_id: network_id.into(),
            created_at,
            revision: 0,
            original,
            shock: spec,
            propagation,
            shocked,
            intervention: None,
        })
    }

    pub fn shock_outcome(&self) -> Result<ShockOutcome<T>> {
        Ok(ShockOutcome {
            scenario_id: self.id.clone(),
            summary: self.shocked.summary(),
            propagation: self.propagation.clone(),
            system_risk: systemic_indicators(&self.original, &self.propagation)?,
        })
    }

    /// Apply `plan`. Replacing an existing intervention requires `overwrite`.
    pub fn intervene(
        &mut self,
        plan: &InterventionPlan,
        base: InterventionBase,
        overwrite: bool,
    ) -> Result<InterventionOutcome<T>> {
        if self.intervention.is_some() && !overwrite {
            return Err(Error::Conflict(format!(
                "scenario {} already has an intervention; set overwrite to replace it",
                self.id
            )));
        }
        let run = run_scenario_from(
            &self.original,
            &self.shock,
            &self.propagation,
            &self.shocked,
            plan,
            base,
        )?;
        self.intervention = Some(AppliedIntervention {
            plan: run.plan,
            base,
            intervened: run.intervened,
            propagation: run.intervened_propagation,
            intervened_shocked: run.intervened_shocked,
            assessment: run.assessment,
        });
        self.revision += 1;
        self.intervention_outcome()
    }

    pub fn intervention_outcome(&self) -> Result<InterventionOutcome<T>> {
        let applied = self
            .intervention
            .as_ref()
            .ok_or(Error::MissingStage(Stage::Intervened))?;
        Ok(InterventionOutcome {
            scenario_id: self.id.clone(),
            intervened: applied.intervened.summary(),
            intervened_shocked: applied.intervened_shocked.summary(),
            assessment: applied.assessment.clone(),
        })
    }

    pub fn network(&self, stage: Stage) -> Result<&FinancialNetwork<T>> {
        match (stage, &self.intervention) {
            (Stage::Original, _) => Ok(&self.original),
            (Stage::Shocked, _) => Ok(&self.shocked),
            (Stage::Intervened, Some(a)) => Ok(&a.intervened),
            (Stage::IntervenedShocked, Some(a)) => Ok(&a.intervened_shocked),
            (stage, None) => Err(Error::MissingStage(stage)),
        }
    }

    /// Stages produced so far, in lineage order.
    pub fn stages(&self) -> Vec<Stage> {
        let mut out = vec![Stage::Original, Stage::Shocked];
        if self.intervention.is_some() {
            out.extend([Stage::Intervened, Stage::IntervenedShocked]);
        }
        out
    }

    /// Risk matrix of a stage. Shocked stages carry the shock columns of their propagation,
    /// measured against the network the shock was applied to.
    pub fn metrics(&self, stage: Stage, cfg: &MetricsConfig) -> Result<RiskMatrix<T>> {
        let net = self.network(stage)?;
        match (stage, &self.intervention) {
            (Stage::Original, _) => risk_matrix(net, net, None, cfg),
            (Stage::Shocked, _) => risk_matrix(net, &self.original, Some(&self.propagation), cfg),
            (Stage::Intervened, _) => risk_matrix(net, net, None, cfg),
            (Stage::IntervenedShocked, Some(a)) => {
                risk_matrix(net, &a.intervened, Some(&a.propagation), cfg)
            }
            (stage, None) => Err(Error::MissingStage(stage)),
        }
    }

    pub fn layout(
        &self,
        stage: Stage,
        metrics: &MetricsConfig,
        cfg: &LayoutConfig,
        progress: &mut dyn FnMut(usize, T),
    ) -> Result<Layout<T>> {
        let risk = self.metrics(stage, metrics)?;
        compute_layout_with_progress(self.network(stage)?, &risk, cfg, progress)
    }

    /// The S0..S4 candidate plans for this shock.
    pub fn candidate_plans(&self, cfg: &MetricsConfig) -> Result<Vec<InterventionPlan>> {
        let risk = self.metrics(Stage::Shocked, cfg)?;
        let susceptibility = risk
            .column("impact_susceptibility")
            .expect("risk matrix has a susceptibility column");
        candidate_strategies(&self.original, &self.propagation, &susceptibility)
    }

    /// Evaluate plans against this scenario's shock without changing it.
    pub fn compare(
        &self,
        plans: &[InterventionPlan],
        key: &RankingKey,
        base: InterventionBase,
    ) -> Result<Vec<RankedAssessment<T>>> {
        compare_strategies(&self.original, &self.shock, plans, key, base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contagion::{PropagationModel, ShockTargets};
    use crate::network::{Bank, ExposureMatrix};

    fn scenario() -> Scenario<f64> {
        let banks = vec![
            Bank::new("b0", 100.0, 100.0, 0.5),
            Bank::new("b1", 100.0, 100.0, 0.5),
        ];
        let m = ExposureMatrix::from_rows(vec![vec![0.0, 0.0], vec![50.0, 0.0]]).unwrap();
        let net = FinancialNetwork::new(banks, m, Stage::Original).unwrap();
        let spec = ShockSpec::new(
            PropagationModel::Linear,
            ShockTargets::Banks(vec!["b0".into()]),
            1.0,
        );
        Scenario::shock("scn-000001", "net-000001", net, spec, 0).unwrap()
    }

    #[test]
    fn stages_follow_the_lineage() {
        let mut s = scenario();
        assert_eq!(s.stages(), vec![Stage::Original, Stage::Shocked]);
        assert!(matches!(
            s.network(Stage::IntervenedShocked),
            Err(Error::MissingStage(Stage::IntervenedShocked))
        ));
        s.intervene(
            &InterventionPlan::default(),
            InterventionBase::Original,
            false,
        )
        .unwrap();
        assert_eq!(s.stages().len(), 4);
        assert_eq!(s.revision, 1);
        assert!(matches!(
            s.intervene(
                &InterventionPlan::default(),
                InterventionBase::Original,
                false
            ),
            Err(Error::Conflict(_))
        ));
        s.intervene(
            &InterventionPlan::removing("S0", &["b0"]),
            InterventionBase::Original,
            true,
        )
        .unwrap();
        assert_eq!(s.revision, 2);
        assert_eq!(s.network(Stage::IntervenedShocked).unwrap().len(), 1);
    }

    #[test]
    fn shocked_metrics_carry_the_propagation() {
        let s = scenario();
        let risk = s
            .metrics(Stage::Shocked, &MetricsConfig::default())
            .unwrap();
        assert_eq!(risk.column("stress").unwrap(), vec![1.0, 0.5]);
        let original = s
            .metrics(Stage::Original, &MetricsConfig::default())
            .unwrap();
        assert_eq!(original.column("stress").unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn document_round_trips() {
        let mut s = scenario();
        s.intervene(
            &InterventionPlan::removing("S0", &["b0"]),
            InterventionBase::Original,
            false,
        )
        .unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: Scenario<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
