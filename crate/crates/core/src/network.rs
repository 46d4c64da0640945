//! Interbank network data model.
//!
//! Exposures follow a single lending convention everywhere in the crate: entry `(i, j)` of the
//! exposure matrix is the amount lender `i` is owed by borrower `j`. Row sums are therefore
//! interbank assets and column sums interbank liabilities. Bank order in
//! [`FinancialNetwork::banks`] is the canonical index order for every matrix and layout.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{close, Scalar};

/// Relative tolerance used when checking stored marginals and weight normalization.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

/// Current version of the network document format.
pub const DOCUMENT_VERSION: u32 = 1;

/// Lineage stage of a network snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Stage {
    /// Original network.
    #[default]
    #[serde(rename = "FN_o")]
    Original,
    /// Original network after shock propagation was settled.
    #[serde(rename = "FN_s")]
    Shocked,
    /// Network after surgical intervention.
    #[serde(rename = "FN_i")]
    Intervened,
    /// Intervened network after the same shock was applied again.
    #[serde(rename = "FN_is")]
    IntervenedShocked,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Original => "FN_o",
            Stage::Shocked => "FN_s",
            Stage::Intervened => "FN_i",
            Stage::IntervenedShocked => "FN_is",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "FN_o" => Some(Stage::Original),
            "FN_s" => Some(Stage::Shocked),
            "FN_i" => Some(Stage::Intervened),
            "FN_is" => Some(Stage::IntervenedShocked),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bank<T> {
    pub id: String,
    pub external_assets: T,
    /// Row sum of the exposure matrix.
    pub interbank_assets: T,
    /// Column sum of the exposure matrix.
    pub interbank_liabilities: T,
    /// Equity cushion. Non-negative at [`Stage::Original`]; may turn negative after settlement
    /// to record the depth of insolvency.
    pub capital_buffer: T,
    /// Relative economic value used in systemic aggregates, summing to one over the network.
    pub weight: T,
}

impl<T: Scalar> Bank<T> {
    /// Bank with zero interbank marginals; call [`FinancialNetwork::recompute_marginals`] once
    /// the exposure matrix is known.
    pub fn new(id: impl Into<String>, external_assets: T, capital_buffer: T, weight: T) -> Self {
        Self {
            id: id.into(),
            external_assets,
            interbank_assets: T::zero(),
            interbank_liabilities: T::zero(),
            capital_buffer,
            weight,
        }
    }

    pub fn total_assets(&self) -> T {
        self.external_assets + self.interbank_assets
    }
}

/// Dense `n x n` matrix of non-negative exposures with a zero diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureMatrix<T> {
    n: usize,
    entries: Vec<T>,
}

impl<T: Scalar> ExposureMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![T::zero(); n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            entries.extend(row);
        }
        Ok(Self { n, entries })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, lender: usize, borrower: usize) -> T {
        self.entries[lender * self.n + borrower]
    }

    #[inline]
    pub fn set(&mut self, lender: usize, borrower: usize, amount: T) {
        self.entries[lender * self.n + borrower] = amount;
    }

    pub fn row(&self, lender: usize) -> &[T] {
        &self.entries[lender * self.n..(lender + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.entries
            .chunks(self.n.max(1))
            .map(<[T]>::to_vec)
            .collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).iter().copied().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.n];
        for i in 0..self.n {
            for (s, &x) in sums.iter_mut().zip(self.row(i)) {
                *s += x;
            }
        }
        sums
    }

    pub fn total(&self) -> T {
        self.entries.iter().copied().sum()
    }

    /// Positive entries as `(lender, borrower, amount)` in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let n = self.n;
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > T::zero())
            .map(move |(k, &x)| (k / n, k % n, x))
    }

    pub fn edge_count(&self) -> usize {
        self.entries.iter().filter(|&&x| x > T::zero()).count()
    }

    /// Copy without row and column `k`.
    pub fn without(&self, k: usize) -> Self {
        let n = self.n - 1;
        let mut entries = Vec::with_capacity(n * n);
        for i in (0..self.n).filter(|&i| i != k) {
            entries.extend(
                self.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .map(|(_, &x)| x),
            );
        }
        Self { n, entries }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> ExposureMatrix<U> {
        ExposureMatrix {
            n: self.n,
            entries: self.entries.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Binary adjacency `a_ij = [exposure(i, j) > threshold]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                bits[i * n + j] = i != j && f(i, j);
            }
        }
        Self { n, bits }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut bits = vec![false; n * n];
        for &(i, j) in edges {
            if i != j {
                bits[i * n + j] = true;
            }
        }
        Self { n, bits }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.n * (self.n - 1)) as f64
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has(i, j))
    }

    pub fn predecessors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.has(i, j))
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| u8::from(self.has(i, j))).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinancialNetwork<T> {
    pub banks: Vec<Bank<T>>,
    pub exposures: ExposureMatrix<T>,
    pub stage: Stage,
}

impl<T: Scalar> FinancialNetwork<T> {
    /// Assemble a network and derive the interbank marginals from the matrix.
    pub fn new(banks: Vec<Bank<T>>, exposures: ExposureMatrix<T>, stage: Stage) -> Result<Self> {
        let net = Self {
            banks,
            exposures,
            stage,
        };
        net.check_structure()?;
        net.recompute_marginals()
    }

    pub fn len(&self) -> usize {
        self.banks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.banks.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.banks.iter().position(|b| b.id == id)
    }

    pub fn require_index(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::UnknownBank(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        self.banks.iter().map(|b| b.id.clone()).collect()
    }

    pub fn buffers(&self) -> Vec<T> {
        self.banks.iter().map(|b| b.capital_buffer).collect()
    }

    pub fn weights(&self) -> Vec<T> {
        self.banks.iter().map(|b| b.weight).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.exposures.edge_count()
    }

    fn check_structure(&self) -> Result<()> {
        if self.exposures.dim() != self.banks.len() {
            return Err(Error::Dimension(format!(
                "{} banks but {}x{} exposure matrix",
                self.banks.len(),
                self.exposures.dim(),
                self.exposures.dim()
            )));
        }
        let mut seen = HashSet::new();
        for b in &self.banks {
            if !seen.insert(b.id.as_str()) {
                return Err(Error::DuplicateBank(b.id.clone()));
            }
        }
        Ok(())
    }

    /// Copy with interbank assets and liabilities refreshed from the exposure matrix.
    pub fn recompute_marginals(&self) -> Result<Self> {
        if self.exposures.dim() != self.banks.len() {
            return Err(Error::Dimension(format!(
                "{} banks but {}x{} exposure matrix",
                self.banks.len(),
                self.exposures.dim(),
                self.exposures.dim()
            )));
        }
        let mut out = self.clone();
        out.refresh_marginals();
        Ok(out)
    }

    pub(crate) fn refresh_marginals(&mut self) {
        let rows = self.exposures.row_sums();
        let cols = self.exposures.col_sums();
        for ((bank, a), l) in self.banks.iter_mut().zip(rows).zip(cols) {
            bank.interbank_assets = a;
            bank.interbank_liabilities = l;
        }
    }

    /// Rescale weights to sum to one. Leaves all-zero weights untouched.
    pub(crate) fn renormalize_weights(&mut self) {
        let total: T = self.banks.iter().map(|b| b.weight).sum();
        if total > T::zero() {
            for b in &mut self.banks {
                b.weight /= total;
            }
        }
    }

    pub fn with_stage(&self, stage: Stage) -> Self {
        let mut out = self.clone();
        out.stage = stage;
        out
    }

    /// Binary adjacency with `a_ij = 1` iff `exposure(i, j) > threshold`.
    pub fn degree_adjacency(&self, threshold: T) -> Adjacency {
        let m = &self.exposures;
        Adjacency::from_fn(m.dim(), |i, j| m.get(i, j) > threshold)
    }

    /// Convert every amount to another scalar type.
    pub fn cast<U: Scalar>(&self) -> FinancialNetwork<U> {
        let conv = |x: T| U::lit(x.as_f64());
        FinancialNetwork {
            banks: self
                .banks
                .iter()
                .map(|b| Bank {
                    id: b.id.clone(),
                    external_assets: conv(b.external_assets),
                    interbank_assets: conv(b.interbank_assets),
                    interbank_liabilities: conv(b.interbank_liabilities),
                    capital_buffer: conv(b.capital_buffer),
                    weight: conv(b.weight),
                })
                .collect(),
            exposures: self.exposures.map(conv),
            stage: self.stage,
        }
    }

    pub fn summary(&self) -> NetworkSummary {
        NetworkSummary {
            n: self.len(),
            edges: self.edge_count(),
            total_exposure: self.exposures.total().as_f64(),
            total_external_assets: self.banks.iter().map(|b| b.external_assets.as_f64()).sum(),
            total_capital: self.banks.iter().map(|b| b.capital_buffer.as_f64()).sum(),
            stage: self.stage,
        }
    }
}

/// Free-function form of [`FinancialNetwork::recompute_marginals`].
pub fn recompute_marginals<T: Scalar>(net: &FinancialNetwork<T>) -> Result<FinancialNetwork<T>> {
    net.recompute_marginals()
}

/// Free-function form of [`FinancialNetwork::degree_adjacency`].
pub fn degree_adjacency<T: Scalar>(net: &FinancialNetwork<T>, threshold: T) -> Adjacency {
    net.degree_adjacency(threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSummary {
    pub n: usize,
    pub edges: usize,
    pub total_exposure: f64,
    pub total_external_assets: f64,
    pub total_capital: f64,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension {
        banks: usize,
        matrix: usize,
    },
    DuplicateId(String),
    NegativeExposure {
        lender: usize,
        borrower: usize,
        amount: f64,
    },
    NonzeroDiagonal(usize),
    NonFinite(String),
    NegativeExternalAssets(String),
    NegativeBuffer(String),
    NegativeWeight(String),
    WeightSum(f64),
    AssetMismatch {
        id: String,
        stored: f64,
        recomputed: f64,
    },
    LiabilityMismatch {
        id: String,
        stored: f64,
        recomputed: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { banks, matrix } => {
                write!(
                    f,
                    "dimension mismatch: {banks} banks, {matrix}x{matrix} matrix"
                )
            }
            Violation::DuplicateId(id) => write!(f, "duplicate bank id {id}"),
            Violation::NegativeExposure {
                lender,
                borrower,
                amount,
            } => write!(f, "negative exposure {amount} at ({lender},{borrower})"),
            Violation::NonzeroDiagonal(i) => write!(f, "nonzero diagonal at ({i},{i})"),
            Violation::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Violation::NegativeExternalAssets(id) => write!(f, "negative external assets for {id}"),
            Violation::NegativeBuffer(id) => {
                write!(f, "negative capital buffer for {id} at stage FN_o")
            }
            Violation::NegativeWeight(id) => write!(f, "negative weight for {id}"),
            Violation::WeightSum(s) => write!(f, "weights sum {s} ≠ 1"),
            Violation::AssetMismatch {
                id,
                stored,
                recomputed,
            } => write!(
                f,
                "interbank assets of {id}: stored {stored}, row sum {recomputed}"
            ),
            Violation::LiabilityMismatch {
                id,
                stored,
                recomputed,
            } => write!(
                f,
                "interbank liabilities of {id}: stored {stored}, column sum {recomputed}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

/// Report every invariant violation of `net`. Never fails.
pub fn validate_network<T: Scalar>(net: &FinancialNetwork<T>) -> ValidationReport {
    let mut violations = Vec::new();
    let n = net.banks.len();
    let m = &net.exposures;

    let mut seen = HashSet::new();
    for b in &net.banks {
        if !seen.insert(b.id.as_str()) {
            violations.push(Violation::DuplicateId(b.id.clone()));
        }
    }

    if m.dim() != n {
        violations.push(Violation::Dimension {
            banks: n,
            matrix: m.dim(),
        });
        return ValidationReport { violations };
    }

    for i in 0..n {
        for j in 0..n {
            let x = m.get(i, j);
            if !x.is_finite() {
                violations.push(Violation::NonFinite(format!("exposure ({i},{j})")));
            } else if i == j && x != T::zero() {
                violations.push(Violation::NonzeroDiagonal(i));
            } else if x < T::zero() {
                violations.push(Violation::NegativeExposure {
                    lender: i,
                    borrower: j,
                    amount: x.as_f64(),
                });
            }
        }
    }

    for b in &net.banks {
        for (what, v) in [
            ("external_assets", b.external_assets),
            ("capital_buffer", b.capital_buffer),
            ("weight", b.weight),
        ] {
            if !v.is_finite() {
                violations.push(Violation::NonFinite(format!("{what} of {}", b.id)));
            }
        }
        if b.external_assets < T::zero() {
            violations.push(Violation::NegativeExternalAssets(b.id.clone()));
        }
        if net.stage == Stage::Original && b.capital_buffer < T::zero() {
            violations.push(Violation::NegativeBuffer(b.id.clone()));
        }
        if b.weight < T::zero() {
            violations.push(Violation::NegativeWeight(b.id.clone()));
        }
    }

    if n > 0 {
        let total: T = net.banks.iter().map(|b| b.weight).sum();
        if (total - T::one()).abs().as_f64() > BALANCE_TOLERANCE {
            violations.push(Violation::WeightSum(total.as_f64()));
        }
    }

    let tol = T::lit(BALANCE_TOLERANCE);
    let rows = m.row_sums();
    let cols = m.col_sums();
    for (b, (&a, &l)) in net.banks.iter().zip(rows.iter().zip(&cols)) {
        if !close(b.interbank_assets, a, tol) {
            violations.push(Violation::AssetMismatch {
                id: b.id.clone(),
                stored: b.interbank_assets.as_f64(),
                recomputed: a.as_f64(),
            });
        }
        if !close(b.interbank_liabilities, l, tol) {
            violations.push(Violation::LiabilityMismatch {
                id: b.id.clone(),
                stored: b.interbank_liabilities.as_f64(),
                recomputed: l.as_f64(),
            });
        }
    }

    ValidationReport { violations }
}

// ---------------------------------------------------------------------------
// Canonical document format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankRecord {
    pub id: String,
    pub external_assets: f64,
    pub capital_buffer: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureRecord {
    pub from: String,
    pub to: String,
    pub amount: f64,
}

/// Versioned on-disk representation: bank balance sheets plus a sparse exposure triplet list
/// sorted by `(from, to)` bank index. Interbank marginals are derived on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub version: u32,
    pub banks: Vec<BankRecord>,
    pub exposures: Vec<ExposureRecord>,
    /// Omitted for original networks.
    #[serde(default, skip_serializing_if = "is_original")]
    pub stage: Stage,
}

fn is_original(stage: &Stage) -> bool {
    *stage == Stage::Original
}

impl<T: Scalar> From<&FinancialNetwork<T>> for NetworkDocument {
    fn from(net: &FinancialNetwork<T>) -> Self {
        let banks = net
            .banks
            .iter()
            .map(|b| BankRecord {
                id: b.id.clone(),
                external_assets: b.external_assets.as_f64(),
                capital_buffer: b.capital_buffer.as_f64(),
                weight: b.weight.as_f64(),
            })
            .collect();
        let exposures = net
            .exposures
            .edges()
            .map(|(i, j, x)| ExposureRecord {
                from: net.banks[i].id.clone(),
                to: net.banks[j].id.clone(),
                amount: x.as_f64(),
            })
            .collect();
        NetworkDocument {
            version: DOCUMENT_VERSION,
            banks,
            exposures,
            stage: net.stage,
        }
    }
}

impl<T: Scalar> TryFrom<NetworkDocument> for FinancialNetwork<T> {
    type Error = Error;

    fn try_from(doc: NetworkDocument) -> Result<Self> {
        if doc.version != DOCUMENT_VERSION {
            return Err(Error::Version(doc.version));
        }
        let banks: Vec<Bank<T>> = doc
            .banks
            .iter()
            .map(|b| {
                Bank::new(
                    b.id.clone(),
                    T::lit(b.external_assets),
                    T::lit(b.capital_buffer),
                    T::lit(b.weight),
                )
            })
            .collect();
        let n = banks.len();
        let index: std::collections::HashMap<&str, usize> = doc
            .banks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect();
        if index.len() != n {
            let mut seen = HashSet::new();
            let dup = doc
                .banks
                .iter()
                .find(|b| !seen.insert(b.id.as_str()))
                .map(|b| b.id.clone())
                .unwrap_or_default();
            return Err(Error::DuplicateBank(dup));
        }
        let mut exposures = ExposureMatrix::zeros(n);
        let mut seen_pairs = HashSet::new();
        for e in &doc.exposures {
            let i = *index
                .get(e.from.as_str())
                .ok_or_else(|| Error::UnknownBank(e.from.clone()))?;
            let j = *index
                .get(e.to.as_str())
                .ok_or_else(|| Error::UnknownBank(e.to.clone()))?;
            if !seen_pairs.insert((i, j)) {
                return Err(Error::InvalidNetwork(format!(
                    "repeated exposure {} -> {}",
                    e.from, e.to
                )));
            }
            exposures.set(i, j, T::lit(e.amount));
        }
        FinancialNetwork::new(banks, exposures, doc.stage)
    }
}

impl<T: Scalar> Serialize for FinancialNetwork<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDocument::from(self).serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for FinancialNetwork<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = NetworkDocument::deserialize(d)?;
        FinancialNetwork::try_from(doc).map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> FinancialNetwork<T> {
    /// Canonical UTF-8 JSON encoding.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&NetworkDocument::from(self))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDocument = serde_json::from_str(text)?;
        FinancialNetwork::try_from(doc)
    }

    /// Edge list with a `from,to,amount` header.
    pub fn to_edge_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["from", "to", "amount"])?;
        for (i, j, x) in self.exposures.edges() {
            w.write_record([
                self.banks[i].id.as_str(),
                self.banks[j].id.as_str(),
                &x.as_f64().to_string(),
            ])?;
        }
        Ok(
            String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
                .expect("csv output is utf-8"),
        )
    }
}
