//! Network surgery and before/after assessment.
//!
//! A plan is an ordered list of edge cuts and node removals. Removing a bank clears its
//! liabilities: its creditors lose the corresponding interbank assets and the cleared amount is
//! booked as the rescue cost. A scenario applies the plan, re-runs the same shock and compares
//! the systemic indicators of both runs.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contagion::{settle_network, simulate, PropagationResult, ShockSpec};
use crate::error::{Error, Result};
use crate::metrics::{fragility, systemic_indicators, SystemRisk, SYSTEM_INDICATORS};
use crate::network::{ExposureMatrix, FinancialNetwork, Stage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Operation {
    CutEdge { from: String, to: String },
    RemoveNode { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionPlan {
    pub label: String,
    #[serde(default)]
    pub operations: Vec<Operation>,
}

impl InterventionPlan {
    pub fn new(label: impl Into<String>, operations: Vec<Operation>) -> Self {
        Self {
            label: label.into(),
            operations,
        }
    }

    pub fn removing(label: impl Into<String>, ids: &[&str]) -> Self {
        Self::new(
            label,
            ids.iter()
                .map(|id| Operation::RemoveNode { id: id.to_string() })
                .collect(),
        )
    }

    pub fn removed_ids(&self) -> Vec<String> {
        self.operations
            .iter()
            .filter_map(|op| match op {
                Operation::RemoveNode { id } => Some(id.clone()),
                Operation::CutEdge { .. } => None,
            })
            .collect()
    }
}

/// Delete a bank and clear its liabilities. Returns the new network and the cleared amount
/// `Σ_j exposure(j → id)`.
pub fn remove_node<T: Scalar>(
    net: &FinancialNetwork<T>,
    id: &str,
) -> Result<(FinancialNetwork<T>, T)> {
    let k = net.require_index(id)?;
    let cleared = net.exposures.col_sums()[k];
    let mut banks = net.banks.clone();
    banks.remove(k);
    let mut out = FinancialNetwork {
        banks,
        exposures: net.exposures.without(k),
        stage: net.stage,
    };
    out.refresh_marginals();
    out.renormalize_weights();
    Ok((out, cleared))
}

/// Zero one exposure. Returns the new network and the cleared amount.
pub fn cut_edge<T: Scalar>(
    net: &FinancialNetwork<T>,
    from: &str,
    to: &str,
) -> Result<(FinancialNetwork<T>, T)> {
    let i = net.require_index(from)?;
    let j = net.require_index(to)?;
    let amount = net.exposures.get(i, j);
    if !(amount > T::zero()) {
        return Err(Error::MissingEdge {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    let mut out = net.clone();
    out.exposures.set(i, j, T::zero());
    out.refresh_marginals();
    Ok((out, amount))
}

/// Apply every operation in order. Returns the intervened network (stage `FN_i`) and the total
/// rescue cost.
pub fn apply_plan<T: Scalar>(
    net: &FinancialNetwork<T>,
    plan: &InterventionPlan,
) -> Result<(FinancialNetwork<T>, T)> {
    let mut current = net.clone();
    let mut cost = T::zero();
    for op in &plan.operations {
        let (next, cleared) = match op {
            Operation::CutEdge { from, to } => cut_edge(&current, from, to)?,
            Operation::RemoveNode { id } => remove_node(&current, id)?,
        };
        current = next;
        cost += cleared;
    }
    current.stage = Stage::Intervened;
    Ok((current, cost))
}

/// Percentage reduction per systemic indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct Relief<T> {
    pub concentration: T,
    pub fragility: T,
    pub max_stress: T,
    pub total_defaults: T,
    pub total_loss: T,
    pub total_stress: T,
}

impl<T: Scalar> Relief<T> {
    /// `100·(before − after)/before`, or 0 when `before` is 0.
    pub fn between(before: &SystemRisk<T>, after: &SystemRisk<T>) -> Self {
        let pct = |b: T, a: T| {
            if b == T::zero() {
                T::zero()
            } else {
                T::lit(100.0) * (b - a) / b
            }
        };
        let [b0, b1, b2, b3, b4, b5] = before.values();
        let [a0, a1, a2, a3, a4, a5] = after.values();
        Self {
            concentration: pct(b0, a0),
            fragility: pct(b1, a1),
            max_stress: pct(b2, a2),
            total_defaults: pct(b3, a3),
            total_loss: pct(b4, a4),
            total_stress: pct(b5, a5),
        }
    }

    /// Values in [`SYSTEM_INDICATORS`] order.
    pub fn values(&self) -> [T; 6] {
        [
            self.concentration,
            self.fragility,
            self.max_stress,
            self.total_defaults,
            self.total_loss,
            self.total_stress,
        ]
    }

    pub fn get(&self, indicator: &str) -> Option<T> {
        SYSTEM_INDICATORS
            .iter()
            .position(|&c| c == indicator)
            .map(|k| self.values()[k])
    }
}

/// Per-bank change (after − before) for banks present in both runs. Fragility is `None` when
/// either side is undefined (zero buffer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct BankDelta<T> {
    pub id: String,
    pub stress: T,
    pub loss: T,
    pub fragility: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct Assessment<T> {
    pub label: String,
    pub before: SystemRisk<T>,
    pub after: SystemRisk<T>,
    pub rescue_cost: T,
    pub relief: Relief<T>,
    pub per_bank_delta: Vec<BankDelta<T>>,
}

/// Network the plan operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionBase {
    /// Operate on the original network, then shock again.
    #[default]
    Original,
    /// Operate on the settled shocked network, then shock again.
    Shocked,
}

/// The full lineage FN_o → FN_s and FN_o → FN_i → FN_is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct ScenarioRun<T> {
    pub plan: InterventionPlan,
    pub base: InterventionBase,
    pub shocked: FinancialNetwork<T>,
    pub propagation: PropagationResult<T>,
    pub intervened: FinancialNetwork<T>,
    pub intervened_propagation: PropagationResult<T>,
    pub intervened_shocked: FinancialNetwork<T>,
    pub assessment: Assessment<T>,
}

/// First leg of a scenario: shock the original network and settle it.
pub fn shock_network<T: Scalar>(
    original: &FinancialNetwork<T>,
    spec: &ShockSpec,
) -> Result<(PropagationResult<T>, FinancialNetwork<T>)> {
    let result = simulate(original, spec)?;
    let settled = settle_network(original, &result)?;
    Ok((result, settled))
}

pub fn run_scenario<T: Scalar>(
    original: &FinancialNetwork<T>,
    spec: &ShockSpec,
    plan: &InterventionPlan,
    base: InterventionBase,
) -> Result<ScenarioRun<T>> {
    let (propagation, shocked) = shock_network(original, spec)?;
    run_scenario_from(original, spec, &propagation, &shocked, plan, base)
}

/// Second leg of a scenario when the first leg is already known.
pub fn run_scenario_from<T: Scalar>(
    original: &FinancialNetwork<T>,
    spec: &ShockSpec,
    propagation: &PropagationResult<T>,
    shocked: &FinancialNetwork<T>,
    plan: &InterventionPlan,
    base: InterventionBase,
) -> Result<ScenarioRun<T>> {
    let start = match base {
        InterventionBase::Original => original,
        InterventionBase::Shocked => shocked,
    };
    let (intervened, rescue_cost) = apply_plan(start, plan)?;
    let reshock = spec.without_targets(&plan.removed_ids());
    let intervened_propagation = simulate(&intervened, &reshock)?;
    let mut intervened_shocked = settle_network(&intervened, &intervened_propagation)?;
    intervened_shocked.stage = Stage::IntervenedShocked;

    let before = systemic_indicators(original, propagation)?;
    let after = systemic_indicators(&intervened, &intervened_propagation)?;
    let frag_before = fragility(original, propagation)?;
    let frag_after = fragility(&intervened, &intervened_propagation)?;
    let per_bank_delta = intervened
        .banks
        .iter()
        .enumerate()
        .map(|(j, bank)| {
            let i = original.require_index(&bank.id)?;
            let (fb, fa) = (frag_before[i], frag_after[j]);
            Ok(BankDelta {
                id: bank.id.clone(),
                stress: intervened_propagation.final_stress[j] - propagation.final_stress[i],
                loss: intervened_propagation.losses[j] - propagation.losses[i],
                fragility: (fb.is_finite() && fa.is_finite()).then(|| fa - fb),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let assessment = Assessment {
        label: plan.label.clone(),
        relief: Relief::between(&before, &after),
        before,
        after,
        rescue_cost,
        per_bank_delta,
    };
    Ok(ScenarioRun {
        plan: plan.clone(),
        base,
        shocked: shocked.clone(),
        propagation: propagation.clone(),
        intervened,
        intervened_propagation,
        intervened_shocked,
        assessment,
    })
}

/// Ranking rule for [`compare_strategies`]: relief on `indicator`, optionally divided by the
/// rescue cost. Higher ranks first; equal scores fall back to the plan label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingKey {
    pub indicator: String,
    pub per_cost: bool,
}

impl Default for RankingKey {
    fn default() -> Self {
        Self {
            indicator: "total_loss".into(),
            per_cost: true,
        }
    }
}

impl RankingKey {
    pub fn validate(&self) -> Result<()> {
        if SYSTEM_INDICATORS.contains(&self.indicator.as_str()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "unknown ranking indicator `{}`",
                self.indicator
            )))
        }
    }

    /// Free relief ranks above any paid relief.
    pub fn score<T: Scalar>(&self, a: &Assessment<T>) -> f64 {
        let relief = a
            .relief
            .get(&self.indicator)
            .unwrap_or_else(T::zero)
            .as_f64();
        if !self.per_cost {
            return relief;
        }
        let cost = a.rescue_cost.as_f64();
        if cost > 0.0 {
            relief / cost
        } else if relief > 0.0 {
            f64::INFINITY
        } else if relief < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct RankedAssessment<T> {
    pub rank: usize,
    pub score: f64,
    pub assessment: Assessment<T>,
}

/// Evaluate every plan against the same shock (in parallel) and rank the assessments.
pub fn compare_strategies<T: Scalar>(
    original: &FinancialNetwork<T>,
    spec: &ShockSpec,
    plans: &[InterventionPlan],
    key: &RankingKey,
    base: InterventionBase,
) -> Result<Vec<RankedAssessment<T>>> {
    if plans.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one plan is required".into(),
        ));
    }
    key.validate()?;
    let (propagation, shocked) = shock_network(original, spec)?;
    let assessments = plans
        .par_iter()
        .map(|plan| {
            run_scenario_from(original, spec, &propagation, &shocked, plan, base)
                .map(|run| run.assessment)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_assessments(assessments, key))
}

pub fn rank_assessments<T: Scalar>(
    assessments: Vec<Assessment<T>>,
    key: &RankingKey,
) -> Vec<RankedAssessment<T>> {
    let mut scored: Vec<(f64, Assessment<T>)> = assessments
        .into_iter()
        .map(|a| (key.score(&a), a))
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.partial_cmp(sa)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    scored
        .into_iter()
        .enumerate()
        .map(|(k, (score, assessment))| RankedAssessment {
            rank: k + 1,
            score,
            assessment,
        })
        .collect()
}

/// `strategy,cost,<relief per indicator>` rows in the given order.
pub fn relief_table<T: Scalar>(assessments: &[&Assessment<T>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["strategy".to_string(), "cost".to_string()];
    header.extend(SYSTEM_INDICATORS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for a in assessments {
        let mut row = vec![a.label.clone(), a.rescue_cost.as_f64().to_string()];
        row.extend(a.relief.values().iter().map(|v| v.as_f64().to_string()));
        w.write_record(&row)?;
    }
    Ok(
        String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
            .expect("csv output is utf-8"),
    )
}

/// Metric-driven candidate plans on a shocked scenario:
///
/// * `S0`: remove the bank with the highest stress (ties: larger loss, then id);
/// * `S1`: `S0` plus the runner-up;
/// * `S2`: `S0` plus a moderately stressed bank (closest to the median positive stress);
/// * `S3`: `S0` plus the most impact-susceptible bank;
/// * `S4`: `S0` plus a bankrupt bank (lowest fragility).
pub fn candidate_strategies<T: Scalar>(
    original: &FinancialNetwork<T>,
    result: &PropagationResult<T>,
    susceptibility: &[T],
) -> Result<Vec<InterventionPlan>> {
    let n = original.len();
    if result.final_stress.len() != n || susceptibility.len() != n {
        return Err(Error::Dimension(
            "indicator vectors do not match the network".into(),
        ));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(
            "candidate strategies need at least two banks".into(),
        ));
    }
    let ids = original.ids();
    let stress = |i: usize| result.final_stress[i].as_f64();
    let loss = |i: usize| result.losses[i].as_f64();
    let mut by_stress: Vec<usize> = (0..n).collect();
    by_stress.sort_by(|&a, &b| {
        stress(b)
            .total_cmp(&stress(a))
            .then(loss(b).total_cmp(&loss(a)))
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let top = by_stress[0];
    let second = by_stress[1];

    let best_by = |score: &dyn Fn(usize) -> f64| -> usize {
        (0..n)
            .filter(|&i| i != top)
            .max_by(|&a, &b| {
                score(a)
                    .total_cmp(&score(b))
                    .then_with(|| ids[b].cmp(&ids[a]))
            })
            .expect("at least two banks")
    };

    let mut positive: Vec<f64> = (0..n).map(stress).filter(|&h| h > 0.0).collect();
    positive.sort_by(f64::total_cmp);
    let median = if positive.is_empty() {
        0.0
    } else {
        positive[positive.len() / 2]
    };
    let moderate = best_by(&|i| {
        if i == second {
            f64::NEG_INFINITY
        } else {
            -(stress(i) - median).abs()
        }
    });
    let susceptible = best_by(&|i| susceptibility[i].as_f64());
    let frag = fragility(original, result)?;
    let bankrupt = best_by(&|i| {
        let f = frag[i].as_f64();
        if f.is_finite() {
            -f
        } else {
            f64::NEG_INFINITY
        }
    });

    let plan = |label: &str, extra: Option<usize>| {
        let mut ops = vec![Operation::RemoveNode {
            id: ids[top].clone(),
        }];
        if let Some(k) = extra {
            ops.push(Operation::RemoveNode { id: ids[k].clone() });
        }
        InterventionPlan::new(label, ops)
    };
    Ok(vec![
        plan("S0", None),
        plan("S1", Some(second)),
        plan("S2", Some(moderate)),
        plan("S3", Some(susceptible)),
        plan("S4", Some(bankrupt)),
    ])
}

/// True when both networks hold the same banks and exposures, ignoring stage.
pub fn same_state<T: Scalar>(a: &FinancialNetwork<T>, b: &FinancialNetwork<T>) -> bool {
    a.banks == b.banks && a.exposures == b.exposures
}

/// Exposure matrix restricted to the given banks, in the order given.
pub fn restrict<T: Scalar>(net: &FinancialNetwork<T>, ids: &[String]) -> Result<ExposureMatrix<T>> {
    let idx = ids
        .iter()
        .map(|id| net.require_index(id))
        .collect::<Result<Vec<_>>>()?;
    let mut m = ExposureMatrix::zeros(idx.len());
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            m.set(a, b, net.exposures.get(i, j));
        }
    }
    Ok(m)
}
