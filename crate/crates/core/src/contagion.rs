//! Shock application and contagion dynamics.
//!
//! A shock first destroys a fraction of each target's capital buffer. Losses then travel from
//! borrowers to their lenders through one of three models:
//!
//! * threshold: default cascade. A bank defaults once its cumulative losses reach its original
//!   buffer, and each default costs every creditor `lgd · exposure`;
//! * linear: DebtRank stress dynamics `h_i(t+1) = min(1, h_i(t) + Σ_j Λ_ij (h_j(t) - h_j(t-1)))`
//!   with interbank leverage `Λ_ij = exposure(i, j) / buffer_i` frozen at the original buffers;
//! * hybrid: linear dynamics, plus the threshold lump `lgd · Λ_ij` on every creditor in the round
//!   after a debtor first reaches `h = 1`. Losses may then exceed the buffer.
//!
//! Stress `h` is the relative equity loss in `[0, 1]`.

use std::fmt;

use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{FinancialNetwork, Stage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationModel {
    Threshold,
    Linear,
    Hybrid,
}

impl fmt::Display for PropagationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PropagationModel::Threshold => "threshold",
            PropagationModel::Linear => "linear",
            PropagationModel::Hybrid => "hybrid",
        })
    }
}

/// Either every bank or an explicit id list. Serialized as `"all"` or `["b0", ...]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShockTargets {
    All,
    Banks(Vec<String>),
}

impl Serialize for ShockTargets {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ShockTargets::All => s.serialize_str("all"),
            ShockTargets::Banks(ids) => ids.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ShockTargets {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<String>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "all" => Ok(ShockTargets::All),
            Raw::Word(w) => Err(de::Error::custom(format!(
                "targets must be \"all\" or a list of bank ids, got \"{w}\""
            ))),
            Raw::List(ids) => Ok(ShockTargets::Banks(ids)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShockMagnitude {
    /// Fraction φ ∈ (0, 1] of each target's buffer destroyed.
    Fraction(f64),
    /// Currency amount destroyed per target.
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSpec {
    pub model: PropagationModel,
    pub targets: ShockTargets,
    pub magnitude: ShockMagnitude,
    #[serde(default = "default_lgd")]
    pub lgd: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Reserved for stochastic shock variants; unused by the deterministic models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_lgd() -> f64 {
    1.0
}
fn default_max_rounds() -> usize {
    1000
}
fn default_epsilon() -> f64 {
    1e-10
}

impl ShockSpec {
    pub fn new(model: PropagationModel, targets: ShockTargets, phi: f64) -> Self {
        Self {
            model,
            targets,
            magnitude: ShockMagnitude::Fraction(phi),
            lgd: default_lgd(),
            max_rounds: default_max_rounds(),
            epsilon: default_epsilon(),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.magnitude {
            ShockMagnitude::Fraction(phi) if !(phi > 0.0 && phi <= 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "shock fraction must lie in (0, 1], got {phi}"
                )))
            }
            ShockMagnitude::Absolute(a) if !(a > 0.0 && a.is_finite()) => {
                return Err(Error::InvalidParameter(format!(
                    "absolute shock must be positive, got {a}"
                )))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.lgd) {
            return Err(Error::InvalidParameter(format!(
                "lgd must lie in [0, 1], got {}",
                self.lgd
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidParameter("max_rounds must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        Ok(())
    }

    /// Same shock with the given banks removed from an explicit target list.
    pub fn without_targets(&self, removed: &[String]) -> Self {
        let mut out = self.clone();
        if let ShockTargets::Banks(ids) = &mut out.targets {
            ids.retain(|id| !removed.contains(id));
        }
        out
    }
}

/// Network state right after the initial shock, before any propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockState<T> {
    /// Initial stress `h(1)`.
    pub stress: Vec<T>,
    /// Buffers after the shock.
    pub buffers: Vec<T>,
    /// Currency destroyed by the shock per bank.
    pub shock_loss: Vec<T>,
}

/// Shrink every target's buffer by the shock and record its initial stress.
pub fn apply_initial_shock<T: Scalar>(
    net: &FinancialNetwork<T>,
    spec: &ShockSpec,
) -> Result<ShockState<T>> {
    spec.validate()?;
    let n = net.len();
    let targets: Vec<usize> = match &spec.targets {
        ShockTargets::All => (0..n).collect(),
        ShockTargets::Banks(ids) => ids
            .iter()
            .map(|id| net.require_index(id))
            .collect::<Result<_>>()?,
    };
    let mut stress = vec![T::zero(); n];
    let mut buffers = net.buffers();
    let mut shock_loss = vec![T::zero(); n];
    for i in targets {
        // buffers may be negative on settled snapshots; those banks are already exhausted
        let buffer = buffers[i].max(T::zero());
        let (h, loss) = match spec.magnitude {
            ShockMagnitude::Fraction(phi) => {
                let phi = T::lit(phi);
                (phi, phi * buffer)
            }
            ShockMagnitude::Absolute(a) => {
                let a = T::lit(a);
                if buffer > T::zero() {
                    let loss = a.min(buffer);
                    (loss / buffer, loss)
                } else {
                    (T::one(), T::zero())
                }
            }
        };
        stress[i] = h;
        shock_loss[i] = loss;
        buffers[i] = buffers[i] - loss;
    }
    Ok(ShockState {
        stress,
        buffers,
        shock_loss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct PropagationResult<T> {
    pub model: PropagationModel,
    pub bank_ids: Vec<String>,
    pub rounds: usize,
    /// `h(t)` for `t = 1..=rounds`.
    pub stress_trajectory: Vec<Vec<T>>,
    pub final_stress: Vec<T>,
    /// Currency loss per bank. Can exceed the buffer under the threshold and hybrid models.
    pub losses: Vec<T>,
    pub defaulted: Vec<bool>,
    /// Defaults caused downstream when the bank alone fails (counterfactual threshold runs).
    pub additional_defaults: Vec<usize>,
    pub converged: bool,
    pub lgd: T,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl<T: Scalar> PropagationResult<T> {
    pub fn default_count(&self) -> usize {
        self.defaulted.iter().filter(|&&d| d).count()
    }

    /// `bank_id,h_star,loss,defaulted,additional_defaults` rows in bank order.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "bank_id",
            "h_star",
            "loss",
            "defaulted",
            "additional_defaults",
        ])?;
        for i in 0..self.bank_ids.len() {
            w.write_record([
                self.bank_ids[i].clone(),
                self.final_stress[i].as_f64().to_string(),
                self.losses[i].as_f64().to_string(),
                self.defaulted[i].to_string(),
                self.additional_defaults[i].to_string(),
            ])?;
        }
        Ok(
            String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
                .expect("csv output is utf-8"),
        )
    }
}

/// Run the model selected by `spec.model` from an initial state.
pub fn propagate<T: Scalar>(
    net: &FinancialNetwork<T>,
    state: &ShockState<T>,
    spec: &ShockSpec,
) -> Result<PropagationResult<T>> {
    match spec.model {
        PropagationModel::Threshold => propagate_threshold(net, state, spec),
        PropagationModel::Linear => propagate_linear(net, state, spec),
        PropagationModel::Hybrid => propagate_hybrid(net, state, spec),
    }
}

/// Apply the shock and propagate it.
pub fn simulate<T: Scalar>(
    net: &FinancialNetwork<T>,
    spec: &ShockSpec,
) -> Result<PropagationResult<T>> {
    let state = apply_initial_shock(net, spec)?;
    propagate(net, &state, spec)
}

pub fn propagate_linear<T: Scalar>(
    net: &FinancialNetwork<T>,
    state: &ShockState<T>,
    spec: &ShockSpec,
) -> Result<PropagationResult<T>> {
    stress_dynamics(net, state, spec, false)
}

pub fn propagate_hybrid<T: Scalar>(
    net: &FinancialNetwork<T>,
    state: &ShockState<T>,
    spec: &ShockSpec,
) -> Result<PropagationResult<T>> {
    stress_dynamics(net, state, spec, true)
}

pub fn propagate_threshold<T: Scalar>(
    net: &FinancialNetwork<T>,
    state: &ShockState<T>,
    spec: &ShockSpec,
) -> Result<PropagationResult<T>> {
    spec.validate()?;
    check_state(net, state)?;
    let lgd = T::lit(spec.lgd);
    let c = cascade(net, &state.stress, &state.shock_loss, lgd, spec.max_rounds);
    Ok(PropagationResult {
        model: PropagationModel::Threshold,
        bank_ids: net.ids(),
        rounds: c.trajectory.len(),
        final_stress: c.trajectory.last().cloned().unwrap_or_default(),
        stress_trajectory: c.trajectory,
        losses: c.losses,
        defaulted: c.defaulted,
        additional_defaults: additional_defaults(net, lgd, spec.max_rounds),
        converged: c.converged,
        lgd,
        warnings: Vec::new(),
    })
}

fn check_state<T: Scalar>(net: &FinancialNetwork<T>, state: &ShockState<T>) -> Result<()> {
    let n = net.len();
    if state.stress.len() != n || state.buffers.len() != n || state.shock_loss.len() != n {
        return Err(Error::Dimension(format!(
            "shock state does not match a network of {n} banks"
        )));
    }
    Ok(())
}

struct Cascade<T> {
    trajectory: Vec<Vec<T>>,
    losses: Vec<T>,
    defaulted: Vec<bool>,
    converged: bool,
}

/// `buffer > 0 ? loss >= buffer : credit_loss > 0`.
#[inline]
fn defaults_on<T: Scalar>(buffer: T, loss: T, credit_loss: T) -> bool {
    if buffer > T::zero() {
        loss >= buffer
    } else {
        credit_loss > T::zero()
    }
}

fn cascade<T: Scalar>(
    net: &FinancialNetwork<T>,
    initial_stress: &[T],
    shock_loss: &[T],
    lgd: T,
    max_rounds: usize,
) -> Cascade<T> {
    let n = net.len();
    let e = &net.exposures;
    let buffers: Vec<T> = net
        .buffers()
        .into_iter()
        .map(|b| b.max(T::zero()))
        .collect();
    let mut defaulted: Vec<bool> = initial_stress.iter().map(|&h| h >= T::one()).collect();
    let mut credit = vec![T::zero(); n];
    let mut losses = shock_loss.to_vec();
    let mut stress = initial_stress.to_vec();
    let mut trajectory = vec![stress.clone()];
    let mut frontier: Vec<usize> = (0..n).filter(|&i| defaulted[i]).collect();

    while !frontier.is_empty() && trajectory.len() < max_rounds {
        for i in 0..n {
            let hit: T = frontier.iter().map(|&j| lgd * e.get(i, j)).sum();
            credit[i] += hit;
            losses[i] += hit;
        }
        let mut next = Vec::new();
        for i in 0..n {
            if !defaulted[i] && defaults_on(buffers[i], losses[i], credit[i]) {
                defaulted[i] = true;
                next.push(i);
            }
            stress[i] = if defaulted[i] {
                T::one()
            } else if buffers[i] > T::zero() {
                (losses[i] / buffers[i]).min(T::one()).max(stress[i])
            } else {
                stress[i]
            };
        }
        trajectory.push(stress.clone());
        frontier = next;
    }
    Cascade {
        trajectory,
        losses,
        defaulted,
        converged: frontier.is_empty(),
    }
}

/// For every bank, the number of other banks that default in a threshold cascade seeded by
/// that bank's failure alone. Runs are independent and evaluated in parallel.
pub fn additional_defaults<T: Scalar>(
    net: &FinancialNetwork<T>,
    lgd: T,
    max_rounds: usize,
) -> Vec<usize> {
    let n = net.len();
    let zeros = vec![T::zero(); n];
    (0..n)
        .into_par_iter()
        .map(|seed| {
            let mut h = zeros.clone();
            h[seed] = T::one();
            let c = cascade(net, &h, &zeros, lgd, max_rounds);
            c.defaulted.iter().filter(|&&d| d).count() - 1
        })
        .collect()
}

fn stress_dynamics<T: Scalar>(
    net: &FinancialNetwork<T>,
    state: &ShockState<T>,
    spec: &ShockSpec,
    lump: bool,
) -> Result<PropagationResult<T>> {
    spec.validate()?;
    check_state(net, state)?;
    let n = net.len();
    let e = &net.exposures;
    let buffers: Vec<T> = net.buffers();
    let lgd = T::lit(spec.lgd);
    let eps = T::lit(spec.epsilon);
    let mut warnings = Vec::new();

    // sparse leverage rows: creditor i -> [(debtor j, Λ_ij)]
    let mut leverage: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    let mut raw = state.stress.clone();
    for i in 0..n {
        let has_exposure = e.row(i).iter().any(|&x| x > T::zero());
        if buffers[i] > T::zero() {
            leverage[i] = e
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > T::zero())
                .map(|(j, &x)| (j, x / buffers[i]))
                .collect();
        } else if has_exposure {
            raw[i] = T::one();
            warnings.push(format!(
                "bank {} has no capital buffer but holds interbank exposures; treated as fully distressed",
                net.banks[i].id
            ));
        }
    }

    let mut stress: Vec<T> = raw.iter().map(|&h| h.min(T::one())).collect();
    let mut previous = vec![T::zero(); n];
    let mut trajectory = vec![stress.clone()];
    let mut converged = false;

    while trajectory.len() < spec.max_rounds {
        let delta: Vec<T> = stress.iter().zip(&previous).map(|(&h, &p)| h - p).collect();
        let newly_defaulted: Vec<bool> = stress
            .iter()
            .zip(&previous)
            .map(|(&h, &p)| lump && h >= T::one() && p < T::one())
            .collect();
        let mut next_raw = raw.clone();
        let mut change = T::zero();
        for i in 0..n {
            let mut acc = stress_base(lump, raw[i], stress[i]);
            for &(j, lev) in &leverage[i] {
                acc += lev * delta[j];
            }
            let mut lumps = T::zero();
            for &(j, lev) in &leverage[i] {
                if newly_defaulted[j] {
                    lumps += lgd * lev;
                }
            }
            if lumps > T::zero() {
                acc += lumps;
            }
            let next = if lump { acc } else { acc.min(T::one()) };
            change = change.max((next - raw[i]).abs());
            next_raw[i] = next;
        }
        if change < eps {
            converged = true;
            break;
        }
        previous = std::mem::replace(
            &mut stress,
            next_raw.iter().map(|&h| h.min(T::one())).collect(),
        );
        raw = next_raw;
        trajectory.push(stress.clone());
    }

    let losses: Vec<T> = raw
        .iter()
        .zip(&buffers)
        .map(|(&h, &b)| h * b.max(T::zero()))
        .collect();
    let defaulted = stress.iter().map(|&h| h >= T::one()).collect();
    Ok(PropagationResult {
        model: if lump {
            PropagationModel::Hybrid
        } else {
            PropagationModel::Linear
        },
        bank_ids: net.ids(),
        rounds: trajectory.len(),
        final_stress: stress,
        stress_trajectory: trajectory,
        losses,
        defaulted,
        additional_defaults: additional_defaults(net, lgd, spec.max_rounds),
        converged,
        lgd,
        warnings,
    })
}

/// Linear dynamics advance from the capped stress; hybrid keeps the uncapped loss ratio.
#[inline]
fn stress_base<T: Scalar>(lump: bool, raw: T, capped: T) -> T {
    if lump {
        raw
    } else {
        capped
    }
}

/// Book the propagation outcome onto the original network.
///
/// Buffers absorb the losses (and may turn negative). Every creditor's claim on a defaulted
/// bank is written down by `lgd`. Marginals are recomputed and the stage becomes `FN_s`.
pub fn settle_network<T: Scalar>(
    net: &FinancialNetwork<T>,
    result: &PropagationResult<T>,
) -> Result<FinancialNetwork<T>> {
    let n = net.len();
    if result.losses.len() != n || result.defaulted.len() != n {
        return Err(Error::Dimension(format!(
            "propagation result for {} banks applied to a network of {n}",
            result.losses.len()
        )));
    }
    let mut out = net.clone();
    for (bank, &loss) in out.banks.iter_mut().zip(&result.losses) {
        bank.capital_buffer = bank.capital_buffer - loss;
    }
    let keep = T::one() - result.lgd;
    for j in (0..n).filter(|&j| result.defaulted[j]) {
        for i in 0..n {
            let x = out.exposures.get(i, j);
            if x > T::zero() {
                out.exposures.set(i, j, x * keep);
            }
        }
    }
    out.refresh_marginals();
    out.stage = Stage::Shocked;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Bank, ExposureMatrix};

    /// Banks with the given buffers; `edges` are `(lender, borrower, amount)`.
    pub(crate) fn net(buffers: &[f64], edges: &[(usize, usize, f64)]) -> FinancialNetwork<f64> {
        let n = buffers.len();
        let banks = buffers
            .iter()
            .enumerate()
            .map(|(i, &b)| Bank::new(format!("b{i}"), 100.0, b, 1.0 / n as f64))
            .collect();
        let mut m = ExposureMatrix::zeros(n);
        for &(i, j, x) in edges {
            m.set(i, j, x);
        }
        FinancialNetwork::new(banks, m, Stage::Original).unwrap()
    }

    fn spec(model: PropagationModel, targets: &[&str], phi: f64) -> ShockSpec {
        ShockSpec::new(
            model,
            ShockTargets::Banks(targets.iter().map(|s| s.to_string()).collect()),
            phi,
        )
    }

    #[test]
    fn full_shock_empties_buffer() {
        let n = net(&[100.0, 50.0], &[]);
        let s = apply_initial_shock(&n, &spec(PropagationModel::Linear, &["b0"], 1.0)).unwrap();
        assert_eq!(s.stress, vec![1.0, 0.0]);
        assert_eq!(s.buffers, vec![0.0, 50.0]);
    }

    #[test]
    fn zero_fraction_is_rejected() {
        let n = net(&[100.0], &[]);
        let r = apply_initial_shock(&n, &spec(PropagationModel::Linear, &["b0"], 0.0));
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
        let r = apply_initial_shock(&n, &spec(PropagationModel::Linear, &["zz"], 0.5));
        assert!(matches!(r, Err(Error::UnknownBank(_))));
    }

    #[test]
    fn half_shock_on_all() {
        let n = net(&[100.0, 200.0, 300.0], &[]);
        let mut sp = spec(PropagationModel::Linear, &[], 0.5);
        sp.targets = ShockTargets::All;
        let s = apply_initial_shock(&n, &sp).unwrap();
        assert_eq!(s.buffers, vec![50.0, 100.0, 150.0]);
        assert_eq!(s.stress, vec![0.5; 3]);
    }

    #[test]
    fn linear_two_bank_closed_form() {
        // b1 lends 50 to b0
        let n = net(&[100.0, 100.0], &[(1, 0, 50.0)]);
        let r = simulate(&n, &spec(PropagationModel::Linear, &["b0"], 1.0)).unwrap();
        assert_eq!(r.final_stress, vec![1.0, 0.5]);
        assert_eq!(r.rounds, 2);
        assert!(r.converged);
        assert_eq!(r.losses, vec![100.0, 50.0]);
    }

    #[test]
    fn linear_without_shock_is_fixed_point() {
        let n = net(&[100.0, 100.0], &[(1, 0, 50.0)]);
        let state = ShockState {
            stress: vec![0.0; 2],
            buffers: n.buffers(),
            shock_loss: vec![0.0; 2],
        };
        let r =
            propagate_linear(&n, &state, &spec(PropagationModel::Linear, &["b0"], 1.0)).unwrap();
        assert_eq!(r.final_stress, vec![0.0, 0.0]);
        assert_eq!(r.rounds, 1);
    }

    #[test]
    fn linear_chain_closed_form() {
        // b1 -> b0 leverage 0.6, b2 -> b1 leverage 0.5
        let n = net(&[100.0, 100.0, 100.0], &[(1, 0, 60.0), (2, 1, 50.0)]);
        let r = simulate(&n, &spec(PropagationModel::Linear, &["b0"], 1.0)).unwrap();
        assert!((r.final_stress[1] - 0.6).abs() < 1e-12);
        assert!((r.final_stress[2] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_buffer_lender_is_fully_distressed() {
        let n = net(&[0.0, 100.0], &[(0, 1, 10.0), (1, 0, 40.0)]);
        let r = simulate(&n, &spec(PropagationModel::Linear, &["b1"], 0.1)).unwrap();
        assert_eq!(r.final_stress[0], 1.0);
        assert_eq!(r.warnings.len(), 1);
        assert!((r.final_stress[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn threshold_hand_cascade() {
        // b1 holds 60 on b0 with buffer 50; b2 holds 30 on b1 with buffer 40
        let n = net(&[100.0, 50.0, 40.0], &[(1, 0, 60.0), (2, 1, 30.0)]);
        let r = simulate(&n, &spec(PropagationModel::Threshold, &["b0"], 1.0)).unwrap();
        assert_eq!(r.defaulted, vec![true, true, false]);
        assert_eq!(r.stress_trajectory[1][1], 1.0);
        assert_eq!(r.losses[2], 30.0);
        assert_eq!(r.final_stress[2], 0.75);
        assert!(r.converged);
        assert_eq!(r.additional_defaults, vec![1, 0, 0]);
    }

    #[test]
    fn threshold_without_lgd_does_not_propagate() {
        let n = net(&[100.0, 50.0, 40.0], &[(1, 0, 60.0), (2, 1, 30.0)]);
        let mut sp = spec(PropagationModel::Threshold, &["b0"], 1.0);
        sp.lgd = 0.0;
        let r = simulate(&n, &sp).unwrap();
        assert_eq!(r.defaulted, vec![true, false, false]);
        assert_eq!(r.final_stress, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn hybrid_matches_linear_without_defaults() {
        let n = net(
            &[100.0, 100.0, 100.0],
            &[(1, 0, 20.0), (2, 1, 50.0), (0, 2, 10.0)],
        );
        let lin = simulate(&n, &spec(PropagationModel::Linear, &["b0"], 0.5)).unwrap();
        let hyb = simulate(&n, &spec(PropagationModel::Hybrid, &["b0"], 0.5)).unwrap();
        assert_eq!(lin.stress_trajectory, hyb.stress_trajectory);
        assert_eq!(lin.losses, hyb.losses);
    }

    #[test]
    fn hybrid_single_bank() {
        let n = net(&[100.0], &[]);
        let r = simulate(&n, &spec(PropagationModel::Hybrid, &["b0"], 0.3)).unwrap();
        assert_eq!(r.final_stress, vec![0.3]);
    }

    #[test]
    fn hybrid_hand_trace() {
        // b1 holds 80 on b0 (buffer 100), b2 holds 50 on b1 (buffer 100), lgd 1.
        // t=1: h = (1, 0, 0)
        // t=2: b1 = 0.8 + lump 0.8 = 1.6 -> capped 1, newly defaulted; b2 = 0
        // t=3: b2 = 0.5·1 (Δh_b1) + lump 0.5 = 1.0
        // t=4: b2 newly defaulted but has no creditors; no change
        let n = net(&[100.0, 100.0, 100.0], &[(1, 0, 80.0), (2, 1, 50.0)]);
        let r = simulate(&n, &spec(PropagationModel::Hybrid, &["b0"], 1.0)).unwrap();
        assert_eq!(r.stress_trajectory[1], vec![1.0, 1.0, 0.0]);
        assert_eq!(r.stress_trajectory[2], vec![1.0, 1.0, 1.0]);
        assert!((r.losses[1] - 160.0).abs() < 1e-9);
        assert!((r.losses[2] - 100.0).abs() < 1e-9);
        assert_eq!(r.defaulted, vec![true, true, true]);
        // the linear model alone stops at h = (1, 0.8, 0.4)
        let lin = simulate(&n, &spec(PropagationModel::Linear, &["b0"], 1.0)).unwrap();
        assert!((lin.final_stress[2] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn settle_zero_loss_only_changes_stage() {
        let n = net(&[100.0, 100.0], &[(1, 0, 50.0)]);
        let state = ShockState {
            stress: vec![0.0; 2],
            buffers: n.buffers(),
            shock_loss: vec![0.0; 2],
        };
        let r =
            propagate_linear(&n, &state, &spec(PropagationModel::Linear, &["b0"], 1.0)).unwrap();
        let s = settle_network(&n, &r).unwrap();
        assert_eq!(s.stage, Stage::Shocked);
        assert_eq!(s.with_stage(Stage::Original), n);
    }

    #[test]
    fn settle_writes_down_defaulted_debt() {
        // b0 holds 60 on b1; b1 defaults
        let n = net(&[100.0, 50.0], &[(0, 1, 60.0)]);
        let r = simulate(&n, &spec(PropagationModel::Threshold, &["b1"], 1.0)).unwrap();
        let s = settle_network(&n, &r).unwrap();
        assert_eq!(s.exposures.get(0, 1), 0.0);
        assert_eq!(
            n.banks[0].interbank_assets - s.banks[0].interbank_assets,
            60.0
        );
        assert_eq!(s.banks[0].capital_buffer, 40.0);
    }

    #[test]
    fn settle_partial_stress_keeps_exposures() {
        let n = net(&[100.0, 100.0], &[(1, 0, 50.0)]);
        let r = simulate(&n, &spec(PropagationModel::Linear, &["b0"], 0.5)).unwrap();
        assert!(r.defaulted.iter().all(|&d| !d));
        let s = settle_network(&n, &r).unwrap();
        assert_eq!(s.exposures, n.exposures);
        assert_eq!(s.banks[0].capital_buffer, 50.0);
        assert_eq!(s.banks[1].capital_buffer, 75.0);
    }

    #[test]
    fn shock_spec_json_shape() {
        let sp = spec(PropagationModel::Linear, &["b0"], 1.0);
        let text = serde_json::to_string(&sp).unwrap();
        assert_eq!(
            text,
            r#"{"model":"linear","targets":["b0"],"magnitude":{"fraction":1.0},"lgd":1.0,"max_rounds":1000,"epsilon":1e-10}"#
        );
        let all: ShockSpec = serde_json::from_str(
            r#"{"model":"hybrid","targets":"all","magnitude":{"absolute":5.0}}"#,
        )
        .unwrap();
        assert_eq!(all.targets, ShockTargets::All);
        assert!(serde_json::from_str::<ShockSpec>(
            r#"{"model":"linear","targets":"some","magnitude":{"fraction":1.0}}"#
        )
        .is_err());
    }

    #[test]
    fn result_csv() {
        let n = net(&[100.0, 100.0], &[(1, 0, 50.0)]);
        let r = simulate(&n, &spec(PropagationModel::Linear, &["b0"], 1.0)).unwrap();
        assert_eq!(
            r.to_csv().unwrap(),
            "bank_id,h_star,loss,defaulted,additional_defaults\nb0,1,100,true,0\nb1,0.5,50,false,0\n"
        );
    }
}
