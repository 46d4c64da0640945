//! Synthetic interbank networks from balance-sheet marginals.
//!
//! Two estimators reconstruct an exposure matrix whose row sums match the banks' interbank
//! assets and whose column sums match their interbank liabilities:
//!
//! * maximum entropy, solved by iterative proportional fitting (RAS) started from the outer
//!   product `a lᵀ / total` with the diagonal zeroed. The fixed point has the log-linear form
//!   `x_ij = r_i c_j` off the diagonal, which spreads exposures as evenly as the marginals allow;
//! * minimum density, approximated by greedy largest-residual matching. The result is sparse
//!   (at most `2n - 1` links before any repair step) and deterministic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Bank, ExposureMatrix, FinancialNetwork, Stage};
use crate::scalar::Scalar;

/// Relative tolerance for `Σ assets = Σ liabilities`.
pub const MARKET_CLEARING_TOLERANCE: f64 = 1e-6;

/// Scaling factors beyond this bound mean the fit is diverging.
const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals<T> {
    /// Target row sums.
    pub assets: Vec<T>,
    /// Target column sums.
    pub liabilities: Vec<T>,
}

impl<T: Scalar> Marginals<T> {
    pub fn new(assets: Vec<T>, liabilities: Vec<T>) -> Result<Self> {
        let m = Self {
            assets,
            liabilities,
        };
        m.check()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn total_assets(&self) -> T {
        self.assets.iter().copied().sum()
    }

    pub fn total_liabilities(&self) -> T {
        self.liabilities.iter().copied().sum()
    }

    fn check(&self) -> Result<()> {
        if self.assets.len() != self.liabilities.len() {
            return Err(Error::Dimension(format!(
                "{} asset marginals but {} liability marginals",
                self.assets.len(),
                self.liabilities.len()
            )));
        }
        for (what, v) in [("assets", &self.assets), ("liabilities", &self.liabilities)] {
            if let Some(i) = v.iter().position(|x| !x.is_finite() || *x < T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "{what} marginal of bank b{i} must be finite and non-negative"
                )));
            }
        }
        let a = self.total_assets();
        let l = self.total_liabilities();
        let scale = T::one().max(a).max(l);
        if (a - l).abs() > T::lit(MARKET_CLEARING_TOLERANCE) * scale {
            return Err(Error::Infeasible(format!(
                "market does not clear: total assets {a} vs total liabilities {l}"
            )));
        }
        Ok(())
    }

    /// Zero-diagonal feasibility: no bank may lend more than all other banks borrow, nor
    /// borrow more than all other banks lend.
    fn check_feasible(&self) -> Result<()> {
        let a_tot = self.total_assets();
        let l_tot = self.total_liabilities();
        let slack = T::lit(MARKET_CLEARING_TOLERANCE) * T::one().max(a_tot);
        for i in 0..self.len() {
            let others = l_tot - self.liabilities[i];
            if self.assets[i] > others + slack {
                return Err(Error::Infeasible(format!(
                    "bank b{i}: interbank assets {} exceed the liabilities of all other banks {}",
                    self.assets[i], others
                )));
            }
            let others = a_tot - self.assets[i];
            if self.liabilities[i] > others + slack {
                return Err(Error::Infeasible(format!(
                    "bank b{i}: interbank liabilities {} exceed the assets of all other banks {}",
                    self.liabilities[i], others
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMethod {
    MaxEntropy,
    MinDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSampler {
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Pareto {
        alpha: f64,
        x_min: f64,
    },
    Explicit {
        assets: Vec<f64>,
        liabilities: Vec<f64>,
    },
}

/// How the rest of each balance sheet is derived from the interbank marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceSheetConfig {
    /// Share of interbank assets in total assets, in (0, 1].
    pub interbank_share: f64,
    /// Capital buffer as a fraction of total assets, in (0, 1].
    pub capital_ratio: f64,
}

impl Default for BalanceSheetConfig {
    fn default() -> Self {
        Self {
            interbank_share: 0.2,
            capital_ratio: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub method: EstimationMethod,
    pub seed: u64,
    pub ras_tolerance: f64,
    pub ras_max_iters: usize,
    /// Sparsity pressure of the exact minimum-density program. The greedy heuristic only
    /// validates it.
    pub min_density_link_cost: f64,
    pub marginal_sampler: MarginalSampler,
    pub balance_sheet: BalanceSheetConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            method: EstimationMethod::MinDensity,
            seed: 0,
            ras_tolerance: 1e-9,
            ras_max_iters: 10_000,
            min_density_link_cost: 1.0,
            marginal_sampler: MarginalSampler::Lognormal {
                mu: 0.0,
                sigma: 1.0,
            },
            balance_sheet: BalanceSheetConfig::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ras_tolerance > 0.0) {
            return Err(Error::InvalidParameter("ras_tolerance must be > 0".into()));
        }
        if self.ras_max_iters == 0 {
            return Err(Error::InvalidParameter("ras_max_iters must be >= 1".into()));
        }
        if !(self.min_density_link_cost > 0.0) {
            return Err(Error::InvalidParameter(
                "min_density_link_cost must be > 0".into(),
            ));
        }
        let bs = &self.balance_sheet;
        if !(bs.interbank_share > 0.0 && bs.interbank_share <= 1.0) {
            return Err(Error::InvalidParameter(
                "interbank_share must lie in (0, 1]".into(),
            ));
        }
        if !(bs.capital_ratio > 0.0 && bs.capital_ratio <= 1.0) {
            return Err(Error::InvalidParameter(
                "capital_ratio must lie in (0, 1]".into(),
            ));
        }
        match self.marginal_sampler {
            MarginalSampler::Lognormal { mu, sigma }
                if !(mu.is_finite() && sigma > 0.0 && sigma.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "lognormal sampler needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
                )))
            }
            MarginalSampler::Pareto { alpha, x_min } if !(alpha > 0.0 && x_min > 0.0) => {
                Err(Error::InvalidParameter(format!(
                    "pareto sampler needs alpha > 0 and x_min > 0, got alpha={alpha}, x_min={x_min}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Draw interbank marginals for `n` banks. Liabilities are rescaled so the market clears.
pub fn sample_marginals<T: Scalar>(n: usize, config: &GeneratorConfig) -> Result<Marginals<T>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 banks, got {n}"
        )));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (assets, mut liabilities): (Vec<f64>, Vec<f64>) = match &config.marginal_sampler {
        MarginalSampler::Lognormal { mu, sigma } => {
            let dist = LogNormal::new(*mu, *sigma).map_err(|e| {
                Error::InvalidParameter(format!("lognormal(mu={mu}, sigma={sigma}): {e}"))
            })?;
            let a = (0..n).map(|_| dist.sample(&mut rng)).collect();
            let l = (0..n).map(|_| dist.sample(&mut rng)).collect();
            (a, l)
        }
        MarginalSampler::Pareto { alpha, x_min } => {
            let dist = Pareto::new(*x_min, *alpha).map_err(|e| {
                Error::InvalidParameter(format!("pareto(alpha={alpha}, x_min={x_min}): {e}"))
            })?;
            let a = (0..n).map(|_| dist.sample(&mut rng)).collect();
            let l = (0..n).map(|_| dist.sample(&mut rng)).collect();
            (a, l)
        }
        MarginalSampler::Explicit {
            assets,
            liabilities,
        } => {
            if assets.len() != n || liabilities.len() != n {
                return Err(Error::Dimension(format!(
                    "explicit marginals have lengths {}/{}, expected {n}",
                    assets.len(),
                    liabilities.len()
                )));
            }
            (assets.clone(), liabilities.clone())
        }
    };
    if assets
        .iter()
        .chain(&liabilities)
        .any(|x| !x.is_finite() || *x < 0.0)
    {
        return Err(Error::InvalidParameter(
            "marginals must be finite and non-negative".into(),
        ));
    }
    let explicit = matches!(config.marginal_sampler, MarginalSampler::Explicit { .. });
    let a_tot: f64 = assets.iter().sum();
    let l_tot: f64 = liabilities.iter().sum();
    if !explicit && l_tot > 0.0 && a_tot != l_tot {
        let factor = a_tot / l_tot;
        for l in &mut liabilities {
            *l *= factor;
        }
    }
    Marginals::new(
        assets.into_iter().map(T::lit).collect(),
        liabilities.into_iter().map(T::lit).collect(),
    )
}

/// Zero-diagonal maximum-entropy matrix for the given marginals, fitted by RAS.
pub fn max_entropy_estimate<T: Scalar>(
    m: &Marginals<T>,
    config: &GeneratorConfig,
) -> Result<ExposureMatrix<T>> {
    config.validate()?;
    m.check()?;
    m.check_feasible()?;
    let n = m.len();
    let total = m.total_assets();
    let mut x = ExposureMatrix::zeros(n);
    if total <= T::zero() {
        return Ok(x);
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                x.set(i, j, m.assets[i] * m.liabilities[j] / total);
            }
        }
    }

    let tol = T::lit(config.ras_tolerance);
    let bound = T::lit(DIVERGENCE_BOUND);
    let floor = T::lit(64.0) * T::epsilon() * total;
    let mut row_scale = vec![T::one(); n];
    let mut col_scale = vec![T::one(); n];
    let mut previous = T::infinity();

    for _ in 0..config.ras_max_iters {
        let rows = x.row_sums();
        for i in 0..n {
            let f = scale_factor(m.assets[i], rows[i], i, "assets")?;
            row_scale[i] *= f;
            if row_scale[i] > bound {
                return Err(divergence(i, "row"));
            }
            if f != T::one() {
                for j in 0..n {
                    x.set(i, j, x.get(i, j) * f);
                }
            }
        }
        let cols = x.col_sums();
        for j in 0..n {
            let f = scale_factor(m.liabilities[j], cols[j], j, "liabilities")?;
            col_scale[j] *= f;
            if col_scale[j] > bound {
                return Err(divergence(j, "column"));
            }
            if f != T::one() {
                for i in 0..n {
                    x.set(i, j, x.get(i, j) * f);
                }
            }
        }
        let residual = marginal_residual(&x, m);
        if residual <= tol || (residual <= floor && residual >= previous) {
            return Ok(x);
        }
        previous = residual;
    }

    let rows = x.row_sums();
    let worst = (0..n)
        .max_by(|&a, &b| {
            (rows[a] - m.assets[a])
                .abs()
                .partial_cmp(&(rows[b] - m.assets[b]).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    Err(Error::Infeasible(format!(
        "proportional fitting did not converge after {} iterations; worst bank b{worst}",
        config.ras_max_iters
    )))
}

fn scale_factor<T: Scalar>(target: T, current: T, i: usize, what: &str) -> Result<T> {
    if target == T::zero() {
        return Ok(if current == T::zero() {
            T::one()
        } else {
            T::zero()
        });
    }
    if current <= T::zero() {
        return Err(Error::Infeasible(format!(
            "bank b{i}: {what} {target} cannot be placed on any counterparty"
        )));
    }
    Ok(target / current)
}

fn divergence(i: usize, what: &str) -> Error {
    Error::Infeasible(format!(
        "bank b{i}: {what} scaling factor diverged beyond {DIVERGENCE_BOUND:e}"
    ))
}

/// `max(|rowSums - assets|∞, |colSums - liabilities|∞)`.
pub fn marginal_residual<T: Scalar>(x: &ExposureMatrix<T>, m: &Marginals<T>) -> T {
    let rows = x.row_sums();
    let cols = x.col_sums();
    let r = rows
        .iter()
        .zip(&m.assets)
        .map(|(&s, &a)| (s - a).abs())
        .fold(T::zero(), T::max);
    let c = cols
        .iter()
        .zip(&m.liabilities)
        .map(|(&s, &l)| (s - l).abs())
        .fold(T::zero(), T::max);
    r.max(c)
}

/// Sparse matrix matching the marginals, built by greedy largest-residual matching.
///
/// Repeatedly links the bank with the largest unallocated assets to the bank with the largest
/// unallocated liabilities other than itself, allocating the smaller of the two residuals.
/// Ties go to the lower bank index. When only one bank is left holding both residuals, an
/// existing link `i -> j` is rerouted through it as `i -> k -> j`.
pub fn min_density_estimate<T: Scalar>(
    m: &Marginals<T>,
    config: &GeneratorConfig,
) -> Result<ExposureMatrix<T>> {
    config.validate()?;
    m.check()?;
    m.check_feasible()?;
    let n = m.len();
    let mut x = ExposureMatrix::zeros(n);
    let mut res_a = m.assets.clone();
    let mut res_l = m.liabilities.clone();
    let eps = T::lit(1e-12) * T::one().max(m.total_assets());

    // each greedy step exhausts at least one residual; repairs are bounded by the same count
    let max_steps = 4 * n * n + 16;
    for _ in 0..max_steps {
        let Some(lender) = argmax(&res_a, None).filter(|&i| res_a[i] > eps) else {
            return Ok(x);
        };
        match argmax(&res_l, Some(lender)).filter(|&j| res_l[j] > eps) {
            Some(borrower) => {
                let amount = res_a[lender].min(res_l[borrower]);
                x.set(lender, borrower, x.get(lender, borrower) + amount);
                res_a[lender] -= amount;
                res_l[borrower] -= amount;
            }
            None if res_l[lender] > eps => {
                reroute_through(&mut x, lender, &mut res_a, &mut res_l)?;
            }
            // remaining asset residual is market-clearing slack
            None => return Ok(x),
        }
    }
    Err(Error::Numerical("greedy matching did not terminate".into()))
}

fn argmax<T: Scalar>(v: &[T], exclude: Option<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        if best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}

fn reroute_through<T: Scalar>(
    x: &mut ExposureMatrix<T>,
    k: usize,
    res_a: &mut [T],
    res_l: &mut [T],
) -> Result<()> {
    let n = x.dim();
    let mut best: Option<(usize, usize)> = None;
    for i in (0..n).filter(|&i| i != k) {
        for j in (0..n).filter(|&j| j != k && j != i) {
            let v = x.get(i, j);
            if v > T::zero() && best.is_none_or(|(bi, bj)| v > x.get(bi, bj)) {
                best = Some((i, j));
            }
        }
    }
    let Some((i, j)) = best else {
        return Err(Error::Infeasible(format!(
            "bank b{k}: residual assets and liabilities cannot be matched without a self-loan"
        )));
    };
    let amount = x.get(i, j).min(res_a[k]).min(res_l[k]);
    x.set(i, j, x.get(i, j) - amount);
    x.set(i, k, x.get(i, k) + amount);
    x.set(k, j, x.get(k, j) + amount);
    res_a[k] -= amount;
    res_l[k] -= amount;
    Ok(())
}

pub fn estimate<T: Scalar>(
    m: &Marginals<T>,
    config: &GeneratorConfig,
) -> Result<ExposureMatrix<T>> {
    match config.method {
        EstimationMethod::MaxEntropy => max_entropy_estimate(m, config),
        EstimationMethod::MinDensity => min_density_estimate(m, config),
    }
}

/// Wrap an exposure matrix into a full network with ids `b0..b{n-1}`.
///
/// External assets make interbank assets the configured share of total assets (using the
/// larger interbank marginal so pure borrowers still hold assets), buffers are the capital ratio
/// of total assets and weights are total-asset shares.
pub fn build_network<T: Scalar>(
    exposures: ExposureMatrix<T>,
    balance_sheet: &BalanceSheetConfig,
) -> Result<FinancialNetwork<T>> {
    let n = exposures.dim();
    let rows = exposures.row_sums();
    let cols = exposures.col_sums();
    let share = T::lit(balance_sheet.interbank_share);
    let ratio = T::lit(balance_sheet.capital_ratio);
    let mut banks: Vec<Bank<T>> = (0..n)
        .map(|i| {
            let size = rows[i].max(cols[i]);
            let external = size * (T::one() - share) / share;
            let total = external + rows[i];
            Bank::new(format!("b{i}"), external, ratio * total, total)
        })
        .collect();
    let total: T = banks.iter().map(|b| b.weight).sum();
    for b in &mut banks {
        b.weight = if total > T::zero() {
            b.weight / total
        } else {
            T::one() / T::from_count(n)
        };
    }
    FinancialNetwork::new(banks, exposures, Stage::Original)
}

/// Sample marginals, estimate exposures and assemble the network.
pub fn generate<T: Scalar>(n: usize, config: &GeneratorConfig) -> Result<FinancialNetwork<T>> {
    config.validate()?;
    let m = sample_marginals(n, config)?;
    let x = estimate(&m, config)?;
    build_network(x, &config.balance_sheet)
}

/// Try seeds `config.seed, config.seed + 1, ...` until the generated edge count lies within
/// `rel_tol` of `target_edges`. Returns the accepted seed with its network.
pub fn sweep_seeds<T: Scalar>(
    n: usize,
    config: &GeneratorConfig,
    target_edges: usize,
    rel_tol: f64,
    max_attempts: usize,
) -> Result<(u64, FinancialNetwork<T>)> {
    let lo = target_edges as f64 * (1.0 - rel_tol);
    let hi = target_edges as f64 * (1.0 + rel_tol);
    let mut cfg = config.clone();
    for k in 0..max_attempts as u64 {
        cfg.seed = config.seed.wrapping_add(k);
        let net = generate::<T>(n, &cfg)?;
        let e = net.edge_count() as f64;
        if e >= lo && e <= hi {
            return Ok((cfg.seed, net));
        }
    }
    Err(Error::Infeasible(format!(
        "no seed in {}..{} produced {target_edges} ± {:.0}% edges",
        config.seed,
        config.seed.wrapping_add(max_attempts as u64),
        rel_tol * 100.0
    )))
}
