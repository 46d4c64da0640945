//! Entity and systemic risk indicators and the per-bank risk matrix.
//!
//! Impact susceptibility and impact diffusion are both read off the accumulated impact matrix
//! `M = Σ_{k=1..K} S^k` of the stress matrix `S_ij = min(1, exposure(i, j) / buffer_i)`.
//! `M_ij` measures how much distress of `j` reaches `i` along walks of any length; the sum is
//! truncated once `‖S^k‖∞` falls below [`ImpactConfig::tail`] or after
//! [`ImpactConfig::max_power`] terms.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::centrality::centralities;
use crate::contagion::PropagationResult;
use crate::error::{Error, Result};
use crate::network::FinancialNetwork;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpactConfig {
    /// Minimum accumulated impact that counts as material.
    pub materiality: f64,
    pub max_power: usize,
    pub tail: f64,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        Self {
            materiality: 1e-6,
            max_power: 50,
            tail: 1e-12,
        }
    }
}

/// Row-sparse stress matrix.
fn stress_rows<T: Scalar>(net: &FinancialNetwork<T>) -> Vec<Vec<(usize, T)>> {
    let e = &net.exposures;
    net.banks
        .iter()
        .enumerate()
        .map(|(i, bank)| {
            e.row(i)
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > T::zero())
                .map(|(j, &x)| {
                    let s = if bank.capital_buffer > T::zero() {
                        (x / bank.capital_buffer).min(T::one())
                    } else {
                        T::one()
                    };
                    (j, s)
                })
                .collect()
        })
        .collect()
}

/// `M = Σ S^k` as a dense row-major matrix. Rows/columns listed in `skip` are treated as
/// removed from `S`.
fn accumulate<T: Scalar>(
    rows: &[Vec<(usize, T)>],
    skip: Option<usize>,
    cfg: &ImpactConfig,
) -> Vec<T> {
    let n = rows.len();
    let keep = |k: usize| Some(k) != skip;
    let mut power = vec![T::zero(); n * n];
    for (i, row) in rows.iter().enumerate().filter(|(i, _)| keep(*i)) {
        for &(j, s) in row.iter().filter(|(j, _)| keep(*j)) {
            power[i * n + j] = s;
        }
    }
    let mut m = vec![T::zero(); n * n];
    let tail = T::lit(cfg.tail);
    for k in 1..=cfg.max_power {
        for (a, &p) in m.iter_mut().zip(&power) {
            *a += p;
        }
        let norm = (0..n)
            .map(|i| power[i * n..(i + 1) * n].iter().copied().sum::<T>())
            .fold(T::zero(), T::max);
        if norm < tail || k == cfg.max_power {
            break;
        }
        let mut next = vec![T::zero(); n * n];
        for (i, row) in rows.iter().enumerate().filter(|(i, _)| keep(*i)) {
            let out = &mut next[i * n..(i + 1) * n];
            for &(j, s) in row.iter().filter(|(j, _)| keep(*j)) {
                for (o, &p) in out.iter_mut().zip(&power[j * n..(j + 1) * n]) {
                    *o += s * p;
                }
            }
        }
        power = next;
    }
    m
}

/// Accumulated impact matrix `M`, row-major.
pub fn impact_matrix<T: Scalar>(net: &FinancialNetwork<T>, cfg: &ImpactConfig) -> Vec<T> {
    accumulate(&stress_rows(net), None, cfg)
}

/// Share of non-neighbouring banks whose distress materially reaches each bank.
pub fn impact_susceptibility<T: Scalar>(net: &FinancialNetwork<T>, cfg: &ImpactConfig) -> Vec<T> {
    let n = net.len();
    if n < 2 {
        return vec![T::zero(); n];
    }
    let m = impact_matrix(net, cfg);
    let e = &net.exposures;
    let materiality = T::lit(cfg.materiality);
    (0..n)
        .map(|i| {
            let count = (0..n)
                .filter(|&j| j != i)
                .filter(|&j| !(e.get(i, j) > T::zero() || e.get(j, i) > T::zero()))
                .filter(|&j| m[i * n + j] > materiality)
                .count();
            T::from_count(count) / T::from_count(n - 1)
        })
        .collect()
}

/// Network-wide impact lost when a bank stops intermediating, normalized by the maximum.
///
/// For bank `i`: `Σ [M - M⁽⁻ⁱ⁾]_+` over ordered pairs of distinct banks other than `i`, where
/// `M⁽⁻ⁱ⁾` is accumulated with `i`'s edges removed.
pub fn impact_diffusion<T: Scalar>(net: &FinancialNetwork<T>, cfg: &ImpactConfig) -> Vec<T> {
    let n = net.len();
    let rows = stress_rows(net);
    let base = accumulate(&rows, None, cfg);
    let raw: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let without = accumulate(&rows, Some(i), cfg);
            let mut total = T::zero();
            for k in (0..n).filter(|&k| k != i) {
                for l in (0..n).filter(|&l| l != i && l != k) {
                    let d = base[k * n + l] - without[k * n + l];
                    if d > T::zero() {
                        total += d;
                    }
                }
            }
            total
        })
        .collect();
    let top = raw.iter().copied().fold(T::zero(), T::max);
    if top > T::zero() {
        raw.into_iter().map(|v| v / top).collect()
    } else {
        raw
    }
}

/// Remaining-equity ratio `(buffer - loss) / buffer` against the original buffers. Negative
/// values mean the bank is bankrupt; banks without a buffer get `-∞`.
pub fn fragility<T: Scalar>(
    original: &FinancialNetwork<T>,
    result: &PropagationResult<T>,
) -> Result<Vec<T>> {
    if result.losses.len() != original.len() {
        return Err(Error::Dimension(format!(
            "propagation result for {} banks, network has {}",
            result.losses.len(),
            original.len()
        )));
    }
    Ok(original
        .banks
        .iter()
        .zip(&result.losses)
        .map(|(b, &loss)| {
            if b.capital_buffer > T::zero() {
                (b.capital_buffer - loss) / b.capital_buffer
            } else {
                T::neg_infinity()
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct SystemRisk<T> {
    /// Herfindahl index of loss shares; 0 without losses.
    pub concentration: T,
    /// Weighted remaining-equity ratio.
    pub fragility: T,
    pub max_stress: T,
    pub total_defaults: usize,
    pub total_loss: T,
    /// Weighted stress `Σ w_i h*_i`.
    pub total_stress: T,
}

impl<T: Scalar> SystemRisk<T> {
    /// Indicator values in [`SYSTEM_INDICATORS`] order.
    pub fn values(&self) -> [T; 6] {
        [
            self.concentration,
            self.fragility,
            self.max_stress,
            T::from_count(self.total_defaults),
            self.total_loss,
            self.total_stress,
        ]
    }
}

pub const SYSTEM_INDICATORS: [&str; 6] = [
    "concentration",
    "fragility",
    "max_stress",
    "total_defaults",
    "total_loss",
    "total_stress",
];

/// Aggregate a settled propagation result. Banks without a buffer are left out of the
/// weighted fragility.
pub fn systemic_indicators<T: Scalar>(
    original: &FinancialNetwork<T>,
    result: &PropagationResult<T>,
) -> Result<SystemRisk<T>> {
    let frag = fragility(original, result)?;
    let weights = original.weights();
    let total_loss: T = result.losses.iter().copied().sum();
    let concentration = if total_loss > T::zero() {
        result
            .losses
            .iter()
            .map(|&l| {
                let s = l / total_loss;
                s * s
            })
            .sum()
    } else {
        T::zero()
    };
    Ok(SystemRisk {
        concentration,
        fragility: weights
            .iter()
            .zip(&frag)
            .filter(|(_, f)| f.is_finite())
            .map(|(&w, &f)| w * f)
            .sum(),
        max_stress: result.final_stress.iter().copied().fold(T::zero(), T::max),
        total_defaults: result.default_count(),
        total_loss,
        total_stress: weights
            .iter()
            .zip(&result.final_stress)
            .map(|(&w, &h)| w * h)
            .sum(),
    })
}

/// Risk-matrix columns in storage order.
pub const INDICATORS: [&str; 21] = [
    "assets",
    "liabilities",
    "capital_buffer",
    "weight",
    "in_degree",
    "out_degree",
    "authority",
    "hub",
    "pagerank",
    "k_shell",
    "betweenness",
    "closeness",
    "eigen_centrality",
    "alpha_centrality",
    "fragility",
    "impact_diffusion",
    "impact_susceptibility",
    "stress",
    "loss",
    "defaults",
    "defaulted",
];

pub fn indicator_index(name: &str) -> Option<usize> {
    INDICATORS.iter().position(|&c| c == name)
}

/// Per-bank indicator rows plus a min-max normalized copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct RiskMatrix<T> {
    pub bank_ids: Vec<String>,
    pub columns: Vec<String>,
    /// Non-finite sentinels travel as `null` in JSON.
    #[serde(serialize_with = "ser_rows", deserialize_with = "de_rows")]
    pub raw: Vec<Vec<T>>,
    pub normalized: Vec<Vec<T>>,
}

fn ser_rows<T: Scalar, S: Serializer>(
    rows: &[Vec<T>],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let view: Vec<Vec<Option<T>>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| v.is_finite().then_some(v)).collect())
        .collect();
    view.serialize(s)
}

fn de_rows<'de, T: Scalar, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Vec<Vec<T>>, D::Error> {
    let view: Vec<Vec<Option<T>>> = Vec::deserialize(d)?;
    Ok(view
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|v| v.unwrap_or(T::neg_infinity()))
                .collect()
        })
        .collect())
}

impl<T: Scalar> RiskMatrix<T> {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<T>> {
        let c = self.columns.iter().position(|x| x == name)?;
        Some(self.raw.iter().map(|r| r[c]).collect())
    }

    pub fn normalized_column(&self, name: &str) -> Option<Vec<T>> {
        let c = self.columns.iter().position(|x| x == name)?;
        Some(self.normalized.iter().map(|r| r[c]).collect())
    }

    /// Raw values with a `bank_id` column first.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["bank_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.bank_ids.iter().zip(&self.raw) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.as_f64().to_string()));
            w.write_record(&rec)?;
        }
        Ok(
            String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
                .expect("csv output is utf-8"),
        )
    }
}

/// Per-column min-max scaling into `[0, 1]`. Constant columns map to 0; `-∞` sentinels map
/// to 0 and the remaining values are scaled over their finite range.
pub fn normalize<T: Scalar>(matrix: &RiskMatrix<T>) -> RiskMatrix<T> {
    let mut out = matrix.clone();
    out.normalized = normalize_rows(&matrix.raw);
    out
}

pub(crate) fn normalize_rows<T: Scalar>(raw: &[Vec<T>]) -> Vec<Vec<T>> {
    let Some(width) = raw.first().map(Vec::len) else {
        return Vec::new();
    };
    let mut out = vec![vec![T::zero(); width]; raw.len()];
    for c in 0..width {
        let finite = raw.iter().map(|r| r[c]).filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        let span = hi - lo;
        for (o, r) in out.iter_mut().zip(raw) {
            let v = r[c];
            o[c] = if v.is_finite() && span > T::zero() {
                (v - lo) / span
            } else {
                T::zero()
            };
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Exposures at or below this amount are not links for the centralities.
    pub adjacency_threshold: f64,
    pub impact: ImpactConfig,
}

/// Build the risk matrix for a network stage.
///
/// Topology and balance-sheet columns come from `stage`; fragility compares the propagation
/// losses against the buffers of `baseline` (the network the shock was applied to). Without a
/// propagation result the shock columns are zero.
pub fn risk_matrix<T: Scalar>(
    stage: &FinancialNetwork<T>,
    baseline: &FinancialNetwork<T>,
    result: Option<&PropagationResult<T>>,
    cfg: &MetricsConfig,
) -> Result<RiskMatrix<T>> {
    let n = stage.len();
    if baseline.len() != n {
        return Err(Error::Dimension(format!(
            "stage has {n} banks, baseline {}",
            baseline.len()
        )));
    }
    let adj = stage.degree_adjacency(T::lit(cfg.adjacency_threshold));
    let c = centralities::<T>(&adj);
    let diffusion = impact_diffusion(stage, &cfg.impact);
    let susceptibility = impact_susceptibility(stage, &cfg.impact);
    let zeros = vec![T::zero(); n];
    let (frag, stress, loss, defaults, defaulted) = match result {
        Some(r) => (
            fragility(baseline, r)?,
            r.final_stress.clone(),
            r.losses.clone(),
            r.additional_defaults
                .iter()
                .map(|&d| T::from_count(d))
                .collect(),
            r.defaulted
                .iter()
                .map(|&d| if d { T::one() } else { T::zero() })
                .collect(),
        ),
        None => (
            baseline
                .banks
                .iter()
                .map(|b| {
                    if b.capital_buffer > T::zero() {
                        T::one()
                    } else {
                        T::neg_infinity()
                    }
                })
                .collect(),
            zeros.clone(),
            zeros.clone(),
            zeros.clone(),
            zeros,
        ),
    };
    let count = T::from_count;
    let raw: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let b = &stage.banks[i];
            vec![
                b.interbank_assets,
                b.interbank_liabilities,
                b.capital_buffer,
                b.weight,
                count(c.in_degree[i]),
                count(c.out_degree[i]),
                c.authority[i],
                c.hub[i],
                c.pagerank[i],
                count(c.k_shell[i]),
                c.betweenness[i],
                c.closeness[i],
                c.eigen_centrality[i],
                c.alpha_centrality[i],
                frag[i],
                diffusion[i],
                susceptibility[i],
                stress[i],
                loss[i],
                defaults[i],
                defaulted[i],
            ]
        })
        .collect();
    Ok(RiskMatrix {
        bank_ids: stage.ids(),
        columns: INDICATORS.iter().map(|s| s.to_string()).collect(),
        normalized: normalize_rows(&raw),
        raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contagion::{simulate, PropagationModel, ShockSpec, ShockTargets};
    use crate::network::{Bank, ExposureMatrix, Stage};

    fn net(buffers: &[f64], edges: &[(usize, usize, f64)]) -> FinancialNetwork<f64> {
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

    fn result_with_losses(n: &FinancialNetwork<f64>, losses: &[f64]) -> PropagationResult<f64> {
        let stress: Vec<f64> = losses
            .iter()
            .zip(n.buffers())
            .map(|(l, b)| (l / b).min(1.0))
            .collect();
        PropagationResult {
            model: PropagationModel::Hybrid,
            bank_ids: n.ids(),
            rounds: 1,
            stress_trajectory: vec![stress.clone()],
            defaulted: stress.iter().map(|&h| h >= 1.0).collect(),
            final_stress: stress,
            losses: losses.to_vec(),
            additional_defaults: vec![0; n.len()],
            converged: true,
            lgd: 1.0,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn fragility_values() {
        let n = net(&[100.0, 100.0, 100.0, 0.0], &[]);
        let r = result_with_losses(&n, &[0.0, 100.0, 130.0, 0.0]);
        let f = fragility(&n, &r).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 0.0);
        assert!((f[2] + 0.3).abs() < 1e-12);
        assert!(f[3].is_infinite() && f[3] < 0.0);
    }

    #[test]
    fn susceptibility_chain() {
        // C <- B <- A : b2 exposed to b1, b1 exposed to b0, S entries 1
        let n = net(&[10.0, 10.0, 10.0], &[(2, 1, 10.0), (1, 0, 10.0)]);
        let s = impact_susceptibility(&n, &ImpactConfig::default());
        assert_eq!(s, vec![0.0, 0.0, 0.5]);
    }

    #[test]
    fn isolated_bank_scores_zero() {
        let n = net(&[10.0, 10.0, 10.0, 10.0], &[(2, 1, 5.0), (1, 0, 5.0)]);
        let cfg = ImpactConfig::default();
        assert_eq!(impact_susceptibility(&n, &cfg)[3], 0.0);
        assert_eq!(impact_diffusion(&n, &cfg)[3], 0.0);
    }

    #[test]
    fn diffusion_of_chain_middle() {
        let n = net(&[10.0, 10.0, 10.0], &[(2, 1, 5.0), (1, 0, 5.0)]);
        let d = impact_diffusion(&n, &ImpactConfig::default());
        assert_eq!(d, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn diffusion_of_complete_triangle_is_uniform() {
        let edges: Vec<_> = (0..3)
            .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j, 2.0)))
            .collect();
        let n = net(&[10.0, 10.0, 10.0], &edges);
        let d = impact_diffusion(&n, &ImpactConfig::default());
        for v in d {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn systemic_boundaries() {
        let n = net(&[100.0, 100.0, 100.0], &[]);
        let none = result_with_losses(&n, &[0.0, 0.0, 0.0]);
        let s = systemic_indicators(&n, &none).unwrap();
        assert_eq!(
            (s.total_stress, s.concentration, s.total_defaults),
            (0.0, 0.0, 0)
        );
        let one = result_with_losses(&n, &[0.0, 40.0, 0.0]);
        assert_eq!(systemic_indicators(&n, &one).unwrap().concentration, 1.0);
        let two = result_with_losses(&n, &[30.0, 30.0, 0.0]);
        assert_eq!(systemic_indicators(&n, &two).unwrap().concentration, 0.5);
    }

    #[test]
    fn normalize_rules() {
        let raw = vec![
            vec![1.0, 5.0, f64::NEG_INFINITY],
            vec![2.0, 5.0, 0.0],
            vec![3.0, 5.0, 1.0],
        ];
        let m = RiskMatrix {
            bank_ids: vec!["a".into(), "b".into(), "c".into()],
            columns: vec!["x".into(), "y".into(), "z".into()],
            raw,
            normalized: Vec::new(),
        };
        let n = normalize(&m);
        assert_eq!(n.normalized_column("x").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(n.normalized_column("y").unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(n.normalized_column("z").unwrap(), vec![0.0, 0.0, 1.0]);
        let json = serde_json::to_string(&n).unwrap();
        assert!(json.contains("null"));
        let back: RiskMatrix<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, n);
    }

    #[test]
    fn risk_matrix_shape() {
        let n = net(&[100.0, 50.0, 40.0], &[(1, 0, 60.0), (2, 1, 30.0)]);
        let spec = ShockSpec::new(
            PropagationModel::Threshold,
            ShockTargets::Banks(vec!["b0".into()]),
            1.0,
        );
        let r = simulate(&n, &spec).unwrap();
        let m = risk_matrix(&n, &n, Some(&r), &MetricsConfig::default()).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.columns.len(), INDICATORS.len());
        assert!(m
            .normalized
            .iter()
            .flatten()
            .all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(m.column("defaults").unwrap(), vec![1.0, 0.0, 0.0]);
        let csv = m.to_csv().unwrap();
        assert!(csv.starts_with("bank_id,assets,liabilities"));
    }
}
