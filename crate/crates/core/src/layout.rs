//! Risk-island layout.
//!
//! Banks are placed so that similar multi-risk profiles end up close together:
//!
//! 1. Gaussian affinities `p_{j|i}` over Euclidean distances between normalized risk rows, with
//!    each bandwidth chosen by bisection to hit the target perplexity, symmetrized into a joint
//!    distribution `P`.
//! 2. Positions minimizing `KL(P ‖ Q)` where `Q` uses the heavy-tailed kernel
//!    `(1 + ‖y_i - y_j‖²)⁻¹ / Z`, by gradient descent with momentum and early exaggeration.
//!    The gradient is `4 Σ_j (p_ij - q_ij) q_ij Z (y_i - y_j)`.
//! 3. Overlap removal with the repulsive displacement `k² / d` between intersecting discs.
//! 4. Force-directed edge bundling of the exposure edges.
//! 5. Density-based island detection on the final positions.
//!
//! All stages run on banks sorted by id, and random draws are keyed by bank id, so relabelling
//! the bank order permutes the output without changing it.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::RiskMatrix;
use crate::network::FinancialNetwork;
use crate::scalar::Scalar;

pub type Point<T> = [T; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// Standard deviation of the seeded Gaussian start positions.
    pub init_sigma: f64,
    pub seed: u64,
    /// Repulsion constant; `None` means twice the mean radius.
    pub repulsion_k: Option<f64>,
    pub max_overlap_passes: usize,
    /// Risk indicator mapped linearly onto the radius range.
    pub radius_encoding: String,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Side of the square the embedding is scaled into before overlap removal.
    pub canvas: f64,
    pub bundling: BundleConfig,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            perplexity: 15.0,
            learning_rate: 100.0,
            iterations: 1000,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            early_exaggeration: 4.0,
            exaggeration_iterations: 100,
            init_sigma: 1e-2,
            seed: 0,
            repulsion_k: None,
            max_overlap_passes: 500,
            radius_encoding: "stress".into(),
            min_radius: 4.0,
            max_radius: 18.0,
            canvas: 1000.0,
            bundling: BundleConfig::default(),
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.perplexity > 0.0) {
            return bad("perplexity must be > 0");
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.min_radius > 0.0 && self.max_radius >= self.min_radius) {
            return bad("radii must satisfy 0 < min_radius <= max_radius");
        }
        if !(self.canvas > 0.0) {
            return bad("canvas must be > 0");
        }
        if matches!(self.repulsion_k, Some(k) if !(k > 0.0)) {
            return bad("repulsion_k must be > 0");
        }
        Ok(())
    }

    /// Stable hash of the full configuration, usable as a cache key.
    pub fn fingerprint(&self) -> u64 {
        let text = serde_json::to_string(self).expect("layout config serializes");
        fnv1a(text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleConfig {
    pub segments: usize,
    pub cycles: usize,
    pub initial_iterations: usize,
    /// Iteration count multiplier between cycles.
    pub iteration_rate: f64,
    /// First-cycle step as a fraction of the mean edge length; halves every cycle.
    pub initial_step: f64,
    pub spring: f64,
    pub compatibility_threshold: f64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            segments: 16,
            cycles: 6,
            initial_iterations: 60,
            iteration_rate: 2.0 / 3.0,
            initial_step: 0.01,
            spring: 0.1,
            compatibility_threshold: 0.6,
        }
    }
}

// ---------------------------------------------------------------------------
// Affinities
// ---------------------------------------------------------------------------

const PERPLEXITY_TOLERANCE: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 64;

fn squared_distances<T: Scalar>(rows: &[Vec<T>]) -> Vec<T> {
    let n = rows.len();
    let mut d = vec![T::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v: T = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional affinities `p_{j|i}` (row-major, zero diagonal) with per-row precision found by
/// bisection on the entropy.
pub fn conditional_affinities<T: Scalar>(rows: &[Vec<T>], perplexity: f64) -> Result<Vec<T>> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "affinities need at least 3 banks, got {n}"
        )));
    }
    if !(perplexity > 0.0 && perplexity < n as f64) {
        return Err(Error::InvalidParameter(format!(
            "perplexity {perplexity} must lie in (0, {n})"
        )));
    }
    let d = squared_distances(rows);
    let target = perplexity.ln();
    let mut p = vec![T::zero(); n * n];
    for i in 0..n {
        let di: Vec<f64> = (0..n).map(|j| d[i * n + j].as_f64()).collect();
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| di[j])
            .fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
        let mut row = vec![0.0f64; n];
        for _ in 0..MAX_BISECTION_STEPS {
            let mut sum = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                row[j] = (-(di[j] - dmin) * beta).exp();
                sum += row[j];
            }
            let mut weighted = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                row[j] /= sum;
                weighted += (di[j] - dmin) * row[j];
            }
            let entropy = sum.ln() + beta * weighted;
            let gap = entropy - target;
            if gap.abs() < PERPLEXITY_TOLERANCE {
                break;
            }
            if gap > 0.0 {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        for j in (0..n).filter(|&j| j != i) {
            p[i * n + j] = T::lit(row[j]);
        }
    }
    Ok(p)
}

/// Joint affinities `P = (p_{j|i} + p_{i|j}) / 2n`: symmetric, zero diagonal, summing to one.
pub fn feature_similarities<T: Scalar>(rows: &[Vec<T>], perplexity: f64) -> Result<Vec<T>> {
    let n = rows.len();
    let cond = conditional_affinities(rows, perplexity)?;
    let two_n = T::from_count(2 * n);
    let mut p = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / two_n;
            }
        }
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

/// FNV-1a, used to key random streams by bank id.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn keyed_rng(seed: u64, keys: &[&str]) -> ChaCha8Rng {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for k in keys {
        h = fnv1a(&[h.to_le_bytes().as_slice(), k.as_bytes()].concat());
    }
    ChaCha8Rng::seed_from_u64(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub positions: Vec<Point<T>>,
    /// `KL(P ‖ Q)` after each iteration.
    pub kl_trace: Vec<T>,
}

pub fn kl_divergence<T: Scalar>(p: &[T], positions: &[Point<T>]) -> T {
    let n = positions.len();
    let (num, z) = student_kernel(positions);
    let mut kl = T::zero();
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > T::zero() {
                let q = (num[i * n + j] / z).max(T::min_positive_value());
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

fn student_kernel<T: Scalar>(y: &[Point<T>]) -> (Vec<T>, T) {
    let n = y.len();
    let mut num = vec![T::zero(); n * n];
    let mut z = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = T::one() / (T::one() + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += v + v;
        }
    }
    (num, z)
}

/// Minimize `KL(P ‖ Q)` over 2-D positions. `ids` key the seeded start positions.
pub fn embed<T: Scalar>(p: &[T], ids: &[String], cfg: &LayoutConfig) -> Result<Embedding<T>> {
    embed_with_progress(p, ids, cfg, &mut |_, _| {})
}

/// [`embed`] reporting `(iteration, kl)` after every iteration.
pub fn embed_with_progress<T: Scalar>(
    p: &[T],
    ids: &[String],
    cfg: &LayoutConfig,
    progress: &mut dyn FnMut(usize, T),
) -> Result<Embedding<T>> {
    cfg.validate()?;
    let n = ids.len();
    if p.len() != n * n {
        return Err(Error::Dimension(format!(
            "affinity matrix has {} entries, expected {}",
            p.len(),
            n * n
        )));
    }
    let mut y: Vec<Point<T>> = ids
        .iter()
        .map(|id| {
            let mut rng = keyed_rng(cfg.seed, &["init", id]);
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [T::lit(a * cfg.init_sigma), T::lit(b * cfg.init_sigma)]
        })
        .collect();
    let mut velocity = vec![[T::zero(); 2]; n];
    let eta = T::lit(cfg.learning_rate);
    let four = T::lit(4.0);
    let mut kl_trace = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let exaggeration = if it < cfg.exaggeration_iterations {
            T::lit(cfg.early_exaggeration)
        } else {
            T::one()
        };
        let momentum = T::lit(if it < cfg.momentum_switch {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        });
        let (num, z) = student_kernel(&y);
        for i in 0..n {
            let mut g = [T::zero(); 2];
            for j in (0..n).filter(|&j| j != i) {
                let w = num[i * n + j];
                let coeff = (exaggeration * p[i * n + j] - w / z) * w;
                g[0] += coeff * (y[i][0] - y[j][0]);
                g[1] += coeff * (y[i][1] - y[j][1]);
            }
            let g = [four * g[0], four * g[1]];
            if !(g[0].is_finite() && g[1].is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient at iteration {it} (learning rate {} too high?)",
                    cfg.learning_rate
                )));
            }
            for d in 0..2 {
                velocity[i][d] = momentum * velocity[i][d] - eta * g[d];
            }
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
        recenter(&mut y);
        let kl = kl_divergence(p, &y);
        if !kl.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite objective at iteration {it} (learning rate {} too high?)",
                cfg.learning_rate
            )));
        }
        progress(it + 1, kl);
        kl_trace.push(kl);
    }
    Ok(Embedding {
        positions: y,
        kl_trace,
    })
}

fn recenter<T: Scalar>(y: &mut [Point<T>]) {
    if y.is_empty() {
        return;
    }
    let n = T::from_count(y.len());
    let mx = y.iter().map(|p| p[0]).sum::<T>() / n;
    let my = y.iter().map(|p| p[1]).sum::<T>() / n;
    for p in y.iter_mut() {
        p[0] -= mx;
        p[1] -= my;
    }
}

/// Scale positions into `[0.05, 0.95]·canvas` preserving aspect ratio.
pub fn fit_to_canvas<T: Scalar>(positions: &mut [Point<T>], canvas: f64) {
    if positions.is_empty() {
        return;
    }
    let (mut lo, mut hi) = ([T::infinity(); 2], [T::neg_infinity(); 2]);
    for p in positions.iter() {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let canvas = T::lit(canvas);
    let half = canvas / T::lit(2.0);
    let scale = if extent > T::zero() {
        T::lit(0.9) * canvas / extent
    } else {
        T::zero()
    };
    let mid = [(lo[0] + hi[0]) / T::lit(2.0), (lo[1] + hi[1]) / T::lit(2.0)];
    for p in positions.iter_mut() {
        for d in 0..2 {
            p[d] = half + (p[d] - mid[d]) * scale;
        }
    }
}

// ---------------------------------------------------------------------------
// Overlap removal
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapRemoval<T> {
    pub positions: Vec<Point<T>>,
    pub passes: usize,
    pub max_displacement: T,
    pub resolved: bool,
}

/// Push intersecting discs apart with displacement `k² / d`, capped at the overlap depth and
/// shared equally. Coincident pairs first get a seeded direction keyed by their ids. Stops when
/// a pass finds no overlap or after `max_passes`.
pub fn remove_overlaps<T: Scalar>(
    positions: &[Point<T>],
    radii: &[T],
    ids: &[String],
    k: T,
    seed: u64,
    max_passes: usize,
) -> Result<OverlapRemoval<T>> {
    let n = positions.len();
    if radii.len() != n || ids.len() != n {
        return Err(Error::Dimension(
            "positions, radii and ids differ in length".into(),
        ));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > T::zero())) {
        return Err(Error::InvalidParameter(format!("radius {r} must be > 0")));
    }
    let mut pos = positions.to_vec();
    let k2 = k * k;
    let half = T::lit(0.5);
    let slack = T::lit(1e-3);
    let mut passes = 0;
    let mut resolved = false;
    while passes < max_passes {
        passes += 1;
        let mut moved = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let min = radii[i] + radii[j];
                let dx = pos[i][0] - pos[j][0];
                let dy = pos[i][1] - pos[j][1];
                let d = (dx * dx + dy * dy).sqrt();
                if d >= min {
                    continue;
                }
                moved = true;
                let dir = if d > T::lit(1e-9) {
                    [dx / d, dy / d]
                } else {
                    let mut rng = keyed_rng(seed, &["jitter", &ids[i], &ids[j]]);
                    let angle: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                    [T::lit(angle.cos()), T::lit(angle.sin())]
                };
                let force = if d > T::zero() { k2 / d } else { T::infinity() };
                let shift = force.min(min - d + slack) * half;
                pos[i][0] += dir[0] * shift;
                pos[i][1] += dir[1] * shift;
                pos[j][0] -= dir[0] * shift;
                pos[j][1] -= dir[1] * shift;
            }
        }
        if !moved {
            resolved = true;
            break;
        }
    }
    if !resolved {
        resolved = count_overlaps(&pos, radii, T::zero()) == 0;
    }
    let max_displacement = pos
        .iter()
        .zip(positions)
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
        .fold(T::zero(), T::max);
    Ok(OverlapRemoval {
        positions: pos,
        passes,
        max_displacement,
        resolved,
    })
}

/// Pairs with `dist < r_i + r_j - tolerance`.
pub fn count_overlaps<T: Scalar>(positions: &[Point<T>], radii: &[T], tolerance: T) -> usize {
    let n = positions.len();
    let mut count = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            if (dx * dx + dy * dy).sqrt() < radii[i] + radii[j] - tolerance {
                count += 1;
            }
        }
    }
    count
}

// ---------------------------------------------------------------------------
// Edge bundling
// ---------------------------------------------------------------------------

fn sub<T: Scalar>(a: Point<T>, b: Point<T>) -> Point<T> {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm<T: Scalar>(a: Point<T>) -> T {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

/// Angle × scale × position compatibility of two segments, and whether their directions are
/// opposite.
pub fn edge_compatibility<T: Scalar>(
    p: (Point<T>, Point<T>),
    q: (Point<T>, Point<T>),
) -> (T, bool) {
    let vp = sub(p.1, p.0);
    let vq = sub(q.1, q.0);
    let (lp, lq) = (norm(vp), norm(vq));
    if lp <= T::zero() || lq <= T::zero() {
        return (T::zero(), false);
    }
    let dot = vp[0] * vq[0] + vp[1] * vq[1];
    let angle = (dot / (lp * lq)).abs();
    let avg = (lp + lq) / T::lit(2.0);
    let scale = T::lit(2.0) / (avg / lp.min(lq) + lp.max(lq) / avg);
    let two = T::lit(2.0);
    let mp = [(p.0[0] + p.1[0]) / two, (p.0[1] + p.1[1]) / two];
    let mq = [(q.0[0] + q.1[0]) / two, (q.0[1] + q.1[1]) / two];
    let position = avg / (avg + norm(sub(mp, mq)));
    (angle * scale * position, dot < T::zero())
}

/// Force-directed edge bundling. Each edge becomes `segments + 1` points whose endpoints stay
/// on the node positions.
pub fn bundle_edges<T: Scalar>(
    positions: &[Point<T>],
    edges: &[(usize, usize)],
    cfg: &BundleConfig,
) -> Vec<Vec<Point<T>>> {
    let segs = cfg.segments.max(1);
    let m = edges.len();
    let ends: Vec<(Point<T>, Point<T>)> = edges
        .iter()
        .map(|&(a, b)| (positions[a], positions[b]))
        .collect();
    let mut lines: Vec<Vec<Point<T>>> = ends
        .iter()
        .map(|&(a, b)| {
            (0..=segs)
                .map(|s| {
                    let t = T::from_count(s) / T::from_count(segs);
                    if s == 0 {
                        a
                    } else if s == segs {
                        b
                    } else {
                        [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
                    }
                })
                .collect()
        })
        .collect();
    if m < 2 || segs < 2 {
        return lines;
    }
    let lengths: Vec<T> = ends.iter().map(|&(a, b)| norm(sub(b, a))).collect();
    let mean_len = lengths.iter().copied().sum::<T>() / T::from_count(m);
    let threshold = T::lit(cfg.compatibility_threshold);
    let partners: Vec<Vec<(usize, bool)>> = (0..m)
        .map(|e| {
            (0..m)
                .filter(|&f| f != e)
                .filter_map(|f| {
                    let (c, flipped) = edge_compatibility(ends[e], ends[f]);
                    (c > threshold).then_some((f, flipped))
                })
                .collect()
        })
        .collect();

    let mut step = T::lit(cfg.initial_step) * mean_len;
    let mut iterations = cfg.initial_iterations as f64;
    let spring = T::lit(cfg.spring);
    for _ in 0..cfg.cycles {
        for _ in 0..(iterations.round() as usize).max(1) {
            let mut next = lines.clone();
            for e in 0..m {
                if partners[e].is_empty() || lengths[e] <= T::zero() {
                    continue;
                }
                let kp = spring / (lengths[e] * T::from_count(segs));
                for s in 1..segs {
                    let p = lines[e][s];
                    let prev = lines[e][s - 1];
                    let nxt = lines[e][s + 1];
                    let mut f = [
                        kp * (prev[0] - p[0] + nxt[0] - p[0]),
                        kp * (prev[1] - p[1] + nxt[1] - p[1]),
                    ];
                    for &(o, flipped) in &partners[e] {
                        let q = lines[o][if flipped { segs - s } else { s }];
                        let d = sub(q, p);
                        let dist = norm(d);
                        if dist > T::lit(1e-12) {
                            f[0] += d[0] / dist;
                            f[1] += d[1] / dist;
                        }
                    }
                    next[e][s] = [p[0] + step * f[0], p[1] + step * f[1]];
                }
            }
            lines = next;
        }
        step = step / T::lit(2.0);
        iterations *= cfg.iteration_rate;
    }
    lines
}

// ---------------------------------------------------------------------------
// Islands
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IslandKind {
    /// High systemic stress, loss and defaults.
    Threatening,
    /// High impact susceptibility.
    Vulnerable,
    /// Moderate risk.
    SuboptimalStatus,
    /// Low risk.
    Resilient,
}

impl IslandKind {
    pub fn abbreviation(self) -> &'static str {
        match self {
            IslandKind::Threatening => "TI",
            IslandKind::Vulnerable => "VI",
            IslandKind::SuboptimalStatus => "SSI",
            IslandKind::Resilient => "RI",
        }
    }

    /// Classify a mean normalized profile.
    pub fn classify(profile: &BTreeMap<String, f64>) -> Self {
        let get = |k: &str| profile.get(k).copied().unwrap_or(0.0);
        let systemic = (get("stress") + get("loss") + get("defaults")) / 3.0;
        if systemic >= 0.5 {
            IslandKind::Threatening
        } else if get("impact_susceptibility") >= 0.5 {
            IslandKind::Vulnerable
        } else if systemic >= 0.2 {
            IslandKind::SuboptimalStatus
        } else {
            IslandKind::Resilient
        }
    }
}

pub const MIN_ISLAND_SIZE: usize = 3;
/// Neighbourhood radius as a multiple of the median nearest-neighbour distance.
pub const ISLAND_RADIUS_FACTOR: f64 = 3.0;

/// Density-based clustering (DBSCAN). `None` marks noise.
pub fn label_islands<T: Scalar>(positions: &[Point<T>]) -> Vec<Option<usize>> {
    let n = positions.len();
    if n < MIN_ISLAND_SIZE {
        return vec![None; n];
    }
    let dist = |a: usize, b: usize| norm(sub(positions[a], positions[b]));
    let mut nearest: Vec<T> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| dist(i, j))
                .fold(T::infinity(), T::min)
        })
        .collect();
    nearest.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = if n % 2 == 1 {
        nearest[n / 2]
    } else {
        (nearest[n / 2 - 1] + nearest[n / 2]) / T::lit(2.0)
    };
    let eps = T::lit(ISLAND_RADIUS_FACTOR) * median;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(i, j) <= eps).collect())
        .collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_label = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        if neighbours[i].len() < MIN_ISLAND_SIZE {
            continue;
        }
        let label = next_label;
        next_label += 1;
        labels[i] = Some(label);
        let mut seeds: Vec<usize> = neighbours[i].clone();
        let mut cursor = 0;
        while cursor < seeds.len() {
            let q = seeds[cursor];
            cursor += 1;
            if labels[q].is_none() {
                labels[q] = Some(label);
            }
            if !visited[q] {
                visited[q] = true;
                if neighbours[q].len() >= MIN_ISLAND_SIZE {
                    seeds.extend(&neighbours[q]);
                }
            }
        }
    }
    labels
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct NodePlacement<T> {
    pub id: String,
    pub x: T,
    pub y: T,
    pub r: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct BundledEdge<T> {
    pub from: String,
    pub to: String,
    pub amount: T,
    pub points: Vec<Point<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct Island<T> {
    pub label: usize,
    pub kind: IslandKind,
    pub member_ids: Vec<String>,
    /// Mean normalized value of every indicator over the members.
    pub profile: BTreeMap<String, T>,
}

/// Layout export document. Positions follow the network's bank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct Layout<T> {
    pub positions: Vec<NodePlacement<T>>,
    pub edges: Vec<BundledEdge<T>>,
    pub islands: Vec<Island<T>>,
    pub kl_trace: Vec<T>,
    pub max_displacement: T,
}

impl<T: Scalar> Layout<T> {
    pub fn position_of(&self, id: &str) -> Option<&NodePlacement<T>> {
        self.positions.iter().find(|p| p.id == id)
    }
}

/// Run the whole layout pipeline for a network and its risk matrix.
pub fn compute_layout<T: Scalar>(
    net: &FinancialNetwork<T>,
    risk: &RiskMatrix<T>,
    cfg: &LayoutConfig,
) -> Result<Layout<T>> {
    compute_layout_with_progress(net, risk, cfg, &mut |_, _| {})
}

pub fn compute_layout_with_progress<T: Scalar>(
    net: &FinancialNetwork<T>,
    risk: &RiskMatrix<T>,
    cfg: &LayoutConfig,
    progress: &mut dyn FnMut(usize, T),
) -> Result<Layout<T>> {
    cfg.validate()?;
    let n = net.len();
    if risk.bank_ids != net.ids() {
        return Err(Error::Dimension(
            "risk matrix rows do not match the network banks".into(),
        ));
    }
    let encoding = risk
        .columns
        .iter()
        .position(|c| *c == cfg.radius_encoding)
        .ok_or_else(|| {
            Error::InvalidParameter(format!("unknown radius encoding `{}`", cfg.radius_encoding))
        })?;

    // canonical order: banks sorted by id
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| net.banks[a].id.cmp(&net.banks[b].id));
    let ids: Vec<String> = order.iter().map(|&i| net.banks[i].id.clone()).collect();
    let rows: Vec<Vec<T>> = order.iter().map(|&i| risk.normalized[i].clone()).collect();

    let (mut pos, kl_trace) = if n >= 3 {
        let perplexity = cfg.perplexity.min((n - 1) as f64 / 3.0).max(1.0);
        let p = feature_similarities(&rows, perplexity)?;
        let e = embed_with_progress(&p, &ids, cfg, progress)?;
        (e.positions, e.kl_trace)
    } else {
        let pos = (0..n)
            .map(|k| [T::from_count(k), T::zero()])
            .collect::<Vec<_>>();
        (pos, Vec::new())
    };
    fit_to_canvas(&mut pos, cfg.canvas);

    let (rmin, rmax) = (T::lit(cfg.min_radius), T::lit(cfg.max_radius));
    let radii: Vec<T> = rows
        .iter()
        .map(|r| rmin + (rmax - rmin) * r[encoding])
        .collect();
    let k = match cfg.repulsion_k {
        Some(k) => T::lit(k),
        None if n > 0 => T::lit(2.0) * radii.iter().copied().sum::<T>() / T::from_count(n),
        None => T::one(),
    };
    let removal = remove_overlaps(&pos, &radii, &ids, k, cfg.seed, cfg.max_overlap_passes)?;
    let pos = removal.positions;

    // edges sorted by (from id, to id) in canonical index space
    let mut rank = vec![0usize; n];
    for (k, &i) in order.iter().enumerate() {
        rank[i] = k;
    }
    let mut edges: Vec<(usize, usize, T)> = net
        .exposures
        .edges()
        .map(|(i, j, x)| (rank[i], rank[j], x))
        .collect();
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let pairs: Vec<(usize, usize)> = edges.iter().map(|&(a, b, _)| (a, b)).collect();
    let lines = bundle_edges(&pos, &pairs, &cfg.bundling);

    let labels = label_islands(&pos);
    let island_count = labels.iter().flatten().map(|l| l + 1).max().unwrap_or(0);
    let islands = (0..island_count)
        .map(|label| {
            let members: Vec<usize> = (0..n).filter(|&k| labels[k] == Some(label)).collect();
            let size = T::from_count(members.len());
            let profile: BTreeMap<String, T> = risk
                .columns
                .iter()
                .enumerate()
                .map(|(c, name)| {
                    let mean = members.iter().map(|&k| rows[k][c]).sum::<T>() / size;
                    (name.clone(), mean)
                })
                .collect();
            let as_f64 = profile
                .iter()
                .map(|(k, v)| (k.clone(), v.as_f64()))
                .collect();
            Island {
                label,
                kind: IslandKind::classify(&as_f64),
                member_ids: members.iter().map(|&k| ids[k].clone()).collect(),
                profile,
            }
        })
        .collect();

    let positions = (0..n)
        .map(|i| {
            let k = rank[i];
            NodePlacement {
                id: ids[k].clone(),
                x: pos[k][0],
                y: pos[k][1],
                r: radii[k],
            }
        })
        .collect();
    let edges = edges
        .iter()
        .zip(lines)
        .map(|(&(a, b, x), points)| BundledEdge {
            from: ids[a].clone(),
            to: ids[b].clone(),
            amount: x,
            points,
        })
        .collect();

    Ok(Layout {
        positions,
        edges,
        islands,
        kl_trace,
        max_displacement: removal.max_displacement,
    })
}
