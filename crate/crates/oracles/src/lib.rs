//! Slow, independent reference implementations for the test suites.
//!
//! Nothing here shares code with `systemic-core`: graphs are plain boolean matrices, linear
//! algebra goes through nalgebra and combinatorial quantities are enumerated exhaustively.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `g[i][j]` is the directed link `i -> j`.
pub type Digraph = Vec<Vec<bool>>;

// ---------------------------------------------------------------------------
// Isomorphism classes
// ---------------------------------------------------------------------------

fn code_under(g: &Digraph, perm: &[usize]) -> u64 {
    let n = g.len();
    let mut code = 0u64;
    for k in 0..n {
        for l in 0..n {
            if k != l && g[perm[k]][perm[l]] {
                code |= 1 << (k * n + l);
            }
        }
    }
    code
}

/// Vertex invariant preserved by isomorphisms: own degrees plus the sorted degrees of the
/// out- and in-neighbourhoods.
fn invariant(g: &Digraph, v: usize) -> (usize, usize, Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let n = g.len();
    let deg = |u: usize| {
        let out = (0..n).filter(|&w| g[u][w]).count();
        let inn = (0..n).filter(|&w| g[w][u]).count();
        (out, inn)
    };
    let (o, i) = deg(v);
    let mut outs: Vec<_> = (0..n).filter(|&w| g[v][w]).map(deg).collect();
    let mut ins: Vec<_> = (0..n).filter(|&w| g[w][v]).map(deg).collect();
    outs.sort_unstable();
    ins.sort_unstable();
    (o, i, outs, ins)
}

/// Canonical code: the minimum adjacency bit code over all relabellings that list vertices in
/// increasing invariant order.
pub fn canonical_code(g: &Digraph) -> u64 {
    let n = g.len();
    let mut keyed: Vec<_> = (0..n).map(|v| (invariant(g, v), v)).collect();
    keyed.sort();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (k, (key, v)) in keyed.iter().enumerate() {
        if k > 0 && keyed[k - 1].0 == *key {
            classes.last_mut().expect("class exists").push(*v);
        } else {
            classes.push(vec![*v]);
        }
    }
    let mut best = u64::MAX;
    let mut perm = Vec::with_capacity(n);
    search(g, &classes, 0, &mut perm, &mut vec![false; n], &mut best);
    best
}

fn search(
    g: &Digraph,
    classes: &[Vec<usize>],
    class: usize,
    perm: &mut Vec<usize>,
    used: &mut Vec<bool>,
    best: &mut u64,
) {
    if class == classes.len() {
        *best = (*best).min(code_under(g, perm));
        return;
    }
    let members = &classes[class];
    let filled = perm.len() - classes[..class].iter().map(Vec::len).sum::<usize>();
    if filled == members.len() {
        search(g, classes, class + 1, perm, used, best);
        return;
    }
    for &v in members {
        if !used[v] {
            used[v] = true;
            perm.push(v);
            search(g, classes, class, perm, used, best);
            perm.pop();
            used[v] = false;
        }
    }
}

/// One representative of every isomorphism class of digraphs (no self-loops) on `n` vertices,
/// built by vertex augmentation.
pub fn nonisomorphic_digraphs(n: usize) -> Vec<Digraph> {
    augment(n, true)
}

/// Connected simple undirected graphs on `n` vertices, as symmetric digraphs.
pub fn connected_graphs(n: usize) -> Vec<Digraph> {
    augment(n, false)
        .into_iter()
        .filter(|g| is_weakly_connected(g))
        .collect()
}

fn augment(n: usize, directed: bool) -> Vec<Digraph> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut level: Vec<Digraph> = vec![vec![vec![false]]];
    for m in 2..=n {
        let prev = m - 1;
        let patterns: u64 = if directed { 1 << (2 * prev) } else { 1 << prev };
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for g in &level {
            for p in 0..patterns {
                let mut h: Digraph = vec![vec![false; m]; m];
                for i in 0..prev {
                    h[i][..prev].copy_from_slice(&g[i][..prev]);
                }
                for v in 0..prev {
                    let out = p >> v & 1 == 1;
                    let inn = if directed {
                        p >> (prev + v) & 1 == 1
                    } else {
                        out
                    };
                    h[prev][v] = out;
                    h[v][prev] = inn;
                }
                if seen.insert(canonical_code(&h)) {
                    next.push(h);
                }
            }
        }
        level = next;
    }
    level
}

pub fn is_weakly_connected(g: &Digraph) -> bool {
    let n = g.len();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for w in 0..n {
            if (g[v][w] || g[w][v]) && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

// ---------------------------------------------------------------------------
// Centralities
// ---------------------------------------------------------------------------

fn edges(g: &Digraph) -> usize {
    g.iter().flatten().filter(|&&b| b).count()
}

fn matrix(g: &Digraph) -> DMatrix<f64> {
    let n = g.len();
    DMatrix::from_fn(n, n, |i, j| if g[i][j] { 1.0 } else { 0.0 })
}

fn sum_normalized(v: DVector<f64>) -> Vec<f64> {
    let s = v.sum();
    if s.abs() > 0.0 {
        v.iter().map(|x| x / s).collect()
    } else {
        vec![0.0; v.len()]
    }
}

pub fn in_out_degrees(g: &Digraph) -> (Vec<usize>, Vec<usize>) {
    let n = g.len();
    let ins = (0..n)
        .map(|j| (0..n).filter(|&i| g[i][j]).count())
        .collect();
    let outs = (0..n)
        .map(|i| (0..n).filter(|&j| g[i][j]).count())
        .collect();
    (ins, outs)
}

/// Core number on total degree: the largest `k` such that the vertex lies in a vertex subset
/// where every member has at least `k` link ends inside the subset. Exhaustive over subsets.
pub fn k_shell(g: &Digraph) -> Vec<usize> {
    let n = g.len();
    let mut shell = vec![0usize; n];
    for mask in 1u32..(1 << n) {
        let inside = |v: usize| mask >> v & 1 == 1;
        let min_degree = (0..n)
            .filter(|&v| inside(v))
            .map(|v| {
                (0..n)
                    .filter(|&u| inside(u))
                    .map(|u| usize::from(g[v][u]) + usize::from(g[u][v]))
                    .sum::<usize>()
            })
            .min()
            .unwrap_or(0);
        for v in (0..n).filter(|&v| inside(v)) {
            shell[v] = shell[v].max(min_degree);
        }
    }
    shell
}

fn simple_paths(g: &Digraph, s: usize, t: usize) -> Vec<Vec<usize>> {
    fn walk(g: &Digraph, t: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let v = *path.last().expect("non-empty path");
        if v == t {
            out.push(path.clone());
            return;
        }
        for w in 0..g.len() {
            if g[v][w] && !path.contains(&w) {
                path.push(w);
                walk(g, t, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(g, t, &mut vec![s], &mut out);
    out
}

/// Shortest-path betweenness by enumerating every simple path, normalized by `(n-1)(n-2)`.
pub fn betweenness(g: &Digraph) -> Vec<f64> {
    let n = g.len();
    let mut cb = vec![0.0; n];
    if n < 3 {
        return cb;
    }
    for s in 0..n {
        for t in (0..n).filter(|&t| t != s) {
            let paths = simple_paths(g, s, t);
            let Some(shortest) = paths.iter().map(Vec::len).min() else {
                continue;
            };
            let geodesics: Vec<&Vec<usize>> =
                paths.iter().filter(|p| p.len() == shortest).collect();
            let total = geodesics.len() as f64;
            for v in (0..n).filter(|&v| v != s && v != t) {
                let through = geodesics.iter().filter(|p| p.contains(&v)).count() as f64;
                cb[v] += through / total;
            }
        }
    }
    let scale = ((n - 1) * (n - 2)) as f64;
    cb.into_iter().map(|c| c / scale).collect()
}

/// All-pairs hop distances (Floyd–Warshall); `None` when unreachable.
pub fn distances(g: &Digraph) -> Vec<Vec<Option<usize>>> {
    let n = g.len();
    let mut d: Vec<Vec<Option<usize>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Some(0)
                    } else if g[i][j] {
                        Some(1)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Outward closeness `(r/(n-1))·(r/Σd)` over the `r` vertices reachable from each vertex.
pub fn closeness(g: &Digraph) -> Vec<f64> {
    let n = g.len();
    let d = distances(g);
    (0..n)
        .map(|u| {
            let reach: Vec<usize> = (0..n).filter(|&v| v != u).filter_map(|v| d[u][v]).collect();
            let total: usize = reach.iter().sum();
            if total == 0 {
                0.0
            } else {
                let r = reach.len() as f64;
                (r / (n - 1) as f64) * (r / total as f64)
            }
        })
        .collect()
}

/// PageRank as the solution of `(I - d P) x = (1-d)/n · 1` with `P` column-stochastic and
/// dangling columns uniform.
pub fn pagerank(g: &Digraph, damping: f64) -> Vec<f64> {
    let n = g.len();
    let (_, outs) = in_out_degrees(g);
    let p = DMatrix::from_fn(n, n, |j, i| {
        if outs[i] == 0 {
            1.0 / n as f64
        } else if g[i][j] {
            1.0 / outs[i] as f64
        } else {
            0.0
        }
    });
    let lhs = DMatrix::identity(n, n) - p * damping;
    let rhs = DVector::from_element(n, (1.0 - damping) / n as f64);
    sum_normalized(lhs.lu().solve(&rhs).expect("I - dP is invertible"))
}

/// Projection of the all-ones vector onto the top eigenspace of a symmetric matrix, normalized
/// to sum one.
pub fn top_eigenspace_projection(m: DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let top = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let ones = DVector::from_element(n, 1.0);
    let mut proj = DVector::zeros(n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda >= top - 1e-9 * top.abs().max(1.0) {
            let v = eig.eigenvectors.column(k);
            proj += v * v.dot(&ones);
        }
    }
    sum_normalized(proj)
}

/// `(hub, authority)` from the eigen-decompositions of `A Aᵀ` and `Aᵀ A`.
pub fn hits(g: &Digraph) -> (Vec<f64>, Vec<f64>) {
    let n = g.len();
    if edges(g) == 0 {
        return (vec![0.0; n], vec![0.0; n]);
    }
    let a = matrix(g);
    let hub = top_eigenspace_projection(&a * a.transpose());
    let authority = top_eigenspace_projection(a.transpose() * &a);
    (hub, authority)
}

/// Leading eigenvector of the undirected skeleton.
pub fn eigen_centrality(g: &Digraph) -> Vec<f64> {
    let n = g.len();
    if edges(g) == 0 {
        return vec![0.0; n];
    }
    let s = DMatrix::from_fn(n, n, |i, j| if g[i][j] || g[j][i] { 1.0 } else { 0.0 });
    top_eigenspace_projection(s)
}

/// Mutual reachability classes from the transitive closure.
pub fn strong_components(g: &Digraph) -> Vec<Vec<usize>> {
    let n = g.len();
    let d = distances(g);
    let mut assigned = vec![false; n];
    let mut out = Vec::new();
    for v in 0..n {
        if assigned[v] {
            continue;
        }
        let class: Vec<usize> = (0..n)
            .filter(|&u| d[v][u].is_some() && d[u][v].is_some())
            .collect();
        for &u in &class {
            assigned[u] = true;
        }
        out.push(class);
    }
    out
}

/// Spectral radius as the largest eigenvalue modulus over the irreducible diagonal blocks.
/// Acyclic graphs have radius zero.
pub fn spectral_radius(g: &Digraph) -> f64 {
    strong_components(g)
        .into_iter()
        .filter(|c| c.len() > 1)
        .map(|c| {
            let m: DMatrix<f64> =
                DMatrix::from_fn(
                    c.len(),
                    c.len(),
                    |a, b| if g[c[a]][c[b]] { 1.0 } else { 0.0 },
                );
            if m == m.transpose() {
                m.symmetric_eigenvalues()
                    .iter()
                    .map(|v: &f64| v.abs())
                    .fold(0.0, f64::max)
            } else {
                m.complex_eigenvalues()
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            }
        })
        .fold(0.0, f64::max)
}

/// Alpha centrality `(I - α Aᵀ)⁻¹ 1` with `α = factor / ρ(A)` (or `factor` when `ρ = 0`).
pub fn alpha_centrality(g: &Digraph, factor: f64) -> Vec<f64> {
    let n = g.len();
    let rho = spectral_radius(g);
    let alpha = if rho > 0.0 { factor / rho } else { factor };
    let lhs = DMatrix::identity(n, n) - matrix(g).transpose() * alpha;
    sum_normalized(
        lhs.lu()
            .solve(&DVector::from_element(n, 1.0))
            .expect("I - αAᵀ is invertible"),
    )
}

// ---------------------------------------------------------------------------
// Contagion
// ---------------------------------------------------------------------------

/// Least fixed point of the default map, found as the intersection of every default set `D`
/// that is closed (`F(D) ⊆ D`). Exhaustive over `2^n` subsets.
///
/// A bank with a positive buffer defaults once `shock_loss + lgd · Σ_{j∈D} exposure(i, j)`
/// reaches the buffer; a bank without buffer defaults on any positive credit loss. Banks in
/// `seeds` are in default from the start. Returns the default set and the losses it implies.
pub fn threshold_fixed_point(
    exposure: &[Vec<f64>],
    buffers: &[f64],
    shock_loss: &[f64],
    seeds: &[bool],
    lgd: f64,
) -> (Vec<bool>, Vec<f64>) {
    let n = exposure.len();
    assert!(n <= 20, "exhaustive oracle is limited to small networks");
    let credit = |mask: u32, i: usize| -> f64 {
        (0..n)
            .filter(|&j| mask >> j & 1 == 1)
            .map(|j| lgd * exposure[i][j])
            .sum()
    };
    let image = |mask: u32| -> u32 {
        let mut out = 0u32;
        for i in 0..n {
            let c = credit(mask, i);
            let hit = seeds[i]
                || if buffers[i] > 0.0 {
                    shock_loss[i] + c >= buffers[i]
                } else {
                    c > 0.0
                };
            if hit {
                out |= 1 << i;
            }
        }
        out
    };
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut least = full;
    for mask in 0..=full {
        if image(mask) & !mask == 0 {
            least &= mask;
        }
    }
    let defaulted: Vec<bool> = (0..n).map(|i| least >> i & 1 == 1).collect();
    let losses = (0..n).map(|i| shock_loss[i] + credit(least, i)).collect();
    (defaulted, losses)
}
