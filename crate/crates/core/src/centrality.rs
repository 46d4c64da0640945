//! Traditional network centralities on the directed binary adjacency.
//!
//! Iterative measures share one convention: results are normalized to sum to one and the
//! power iterations start from the uniform vector, so degenerate leading eigenspaces resolve to
//! the projection of that start vector.

use serde::{Deserialize, Serialize};

use crate::network::Adjacency;
use crate::scalar::Scalar;

/// Convergence tolerance of every power iteration (L1 change between iterates).
pub const ITERATION_TOLERANCE: f64 = 1e-12;
pub const PAGERANK_DAMPING: f64 = 0.85;
/// Alpha centrality uses `α = ALPHA_FACTOR / ρ(A)` (or `ALPHA_FACTOR` when `ρ(A) = 0`).
pub const ALPHA_FACTOR: f64 = 0.9;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Centralities<T> {
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
    pub authority: Vec<T>,
    pub hub: Vec<T>,
    pub pagerank: Vec<T>,
    pub k_shell: Vec<usize>,
    pub betweenness: Vec<T>,
    pub closeness: Vec<T>,
    pub eigen_centrality: Vec<T>,
    pub alpha_centrality: Vec<T>,
}

pub fn centralities<T: Scalar>(adj: &Adjacency) -> Centralities<T> {
    let (in_degree, out_degree) = degrees(adj);
    let (hub, authority) = hits(adj);
    Centralities {
        in_degree,
        out_degree,
        authority,
        hub,
        pagerank: pagerank(adj),
        k_shell: k_shell(adj),
        betweenness: betweenness(adj),
        closeness: closeness(adj),
        eigen_centrality: eigen_centrality(adj),
        alpha_centrality: alpha_centrality(adj),
    }
}

pub fn degrees(adj: &Adjacency) -> (Vec<usize>, Vec<usize>) {
    let n = adj.dim();
    let mut ins = vec![0; n];
    let mut outs = vec![0; n];
    for i in 0..n {
        for j in adj.successors(i) {
            outs[i] += 1;
            ins[j] += 1;
        }
    }
    (ins, outs)
}

fn normalize_sum<T: Scalar>(x: &mut [T]) -> bool {
    let s: T = x.iter().copied().sum();
    if s > T::zero() && s.is_finite() {
        for v in x.iter_mut() {
            *v /= s;
        }
        true
    } else {
        false
    }
}

/// Iterate `x <- step(x)` with sum normalization from the uniform vector until the L1 change
/// drops below the tolerance. Returns zeros if the iterate vanishes.
fn power_iterate<T: Scalar>(n: usize, step: impl Fn(&[T]) -> Vec<T>) -> Vec<T> {
    let tol = T::lit(ITERATION_TOLERANCE);
    let mut x = vec![T::one() / T::from_count(n); n];
    for _ in 0..MAX_ITERATIONS {
        let mut next = step(&x);
        if !normalize_sum(&mut next) {
            return vec![T::zero(); n];
        }
        let diff: T = next.iter().zip(&x).map(|(&a, &b)| (a - b).abs()).sum();
        x = next;
        if diff < tol {
            break;
        }
    }
    x
}

fn mul<T: Scalar>(adj: &Adjacency, x: &[T]) -> Vec<T> {
    // (A x)_i = Σ_j a_ij x_j
    (0..adj.dim())
        .map(|i| adj.successors(i).map(|j| x[j]).sum())
        .collect()
}

fn mul_transpose<T: Scalar>(adj: &Adjacency, x: &[T]) -> Vec<T> {
    // (Aᵀ x)_j = Σ_i a_ij x_i
    let mut out = vec![T::zero(); adj.dim()];
    for i in 0..adj.dim() {
        for j in adj.successors(i) {
            out[j] += x[i];
        }
    }
    out
}

/// HITS `(hub, authority)`: leading eigenvectors of `A Aᵀ` and `Aᵀ A`.
pub fn hits<T: Scalar>(adj: &Adjacency) -> (Vec<T>, Vec<T>) {
    let n = adj.dim();
    if adj.edge_count() == 0 {
        return (vec![T::zero(); n], vec![T::zero(); n]);
    }
    let authority = power_iterate(n, |x| mul_transpose(adj, &mul(adj, x)));
    let hub = power_iterate(n, |x| mul(adj, &mul_transpose(adj, x)));
    (hub, authority)
}

/// PageRank with uniform teleportation; dangling banks spread their mass uniformly.
pub fn pagerank<T: Scalar>(adj: &Adjacency) -> Vec<T> {
    let n = adj.dim();
    if n == 0 {
        return Vec::new();
    }
    let d = T::lit(PAGERANK_DAMPING);
    let nt = T::from_count(n);
    let (_, outs) = degrees(adj);
    power_iterate(n, |x| {
        let dangling: T = (0..n).filter(|&i| outs[i] == 0).map(|i| x[i]).sum();
        let base = (T::one() - d) / nt + d * dangling / nt;
        let mut next = vec![base; n];
        for i in (0..n).filter(|&i| outs[i] > 0) {
            let share = d * x[i] / T::from_count(outs[i]);
            for j in adj.successors(i) {
                next[j] += share;
            }
        }
        next
    })
}

/// Core number on total degree (in + out), by iterative pruning.
pub fn k_shell(adj: &Adjacency) -> Vec<usize> {
    let n = adj.dim();
    let mut degree: Vec<usize> = {
        let (ins, outs) = degrees(adj);
        ins.iter().zip(&outs).map(|(a, b)| a + b).collect()
    };
    let mut removed = vec![false; n];
    let mut core = vec![0; n];
    let mut remaining = n;
    let mut k = 0;
    while remaining > 0 {
        let Some(v) = (0..n).find(|&v| !removed[v] && degree[v] <= k) else {
            k += 1;
            continue;
        };
        removed[v] = true;
        remaining -= 1;
        core[v] = k;
        for u in (0..n).filter(|&u| !removed[u]) {
            let links = usize::from(adj.has(u, v)) + usize::from(adj.has(v, u));
            degree[u] -= links;
        }
    }
    core
}

fn bfs(adj: &Adjacency, s: usize) -> Vec<Option<usize>> {
    let n = adj.dim();
    let mut dist = vec![None; n];
    dist[s] = Some(0);
    let mut queue = std::collections::VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v].unwrap_or(0);
        for w in adj.successors(v) {
            if dist[w].is_none() {
                dist[w] = Some(dv + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Brandes betweenness on the directed graph, normalized by `(n-1)(n-2)`.
pub fn betweenness<T: Scalar>(adj: &Adjacency) -> Vec<T> {
    let n = adj.dim();
    let mut cb = vec![T::zero(); n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![T::zero(); n];
        let mut dist: Vec<Option<usize>> = vec![None; n];
        sigma[s] = T::one();
        dist[s] = Some(0);
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            let dv = dist[v].unwrap_or(0);
            for w in adj.successors(v) {
                if dist[w].is_none() {
                    dist[w] = Some(dv + 1);
                    queue.push_back(w);
                }
                if dist[w] == Some(dv + 1) {
                    let sv = sigma[v];
                    sigma[w] += sv;
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![T::zero(); n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                let dv = sigma[v] / sigma[w] * (T::one() + delta[w]);
                delta[v] += dv;
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    if n > 2 {
        let scale = T::from_count((n - 1) * (n - 2));
        for c in &mut cb {
            *c /= scale;
        }
    } else {
        cb.iter_mut().for_each(|c| *c = T::zero());
    }
    cb
}

/// Outward closeness with the Wasserman–Faust correction for unreachable banks:
/// `(r / (n-1)) · (r / Σ d)` over the `r` banks reachable from the node.
pub fn closeness<T: Scalar>(adj: &Adjacency) -> Vec<T> {
    let n = adj.dim();
    (0..n)
        .map(|u| {
            let dist = bfs(adj, u);
            let (r, total) = dist
                .iter()
                .enumerate()
                .filter(|(v, _)| *v != u)
                .filter_map(|(_, d)| *d)
                .fold((0usize, 0usize), |(r, s), d| (r + 1, s + d));
            if total == 0 || n < 2 {
                T::zero()
            } else {
                let r = T::from_count(r);
                (r / T::from_count(n - 1)) * (r / T::from_count(total))
            }
        })
        .collect()
}

/// Leading eigenvector of the undirected skeleton `S = [A + Aᵀ > 0]`, obtained by power
/// iteration on `S + I`.
pub fn eigen_centrality<T: Scalar>(adj: &Adjacency) -> Vec<T> {
    let n = adj.dim();
    if adj.edge_count() == 0 {
        return vec![T::zero(); n];
    }
    power_iterate(n, |x| {
        (0..n)
            .map(|i| {
                x[i] + (0..n)
                    .filter(|&j| adj.has(i, j) || adj.has(j, i))
                    .map(|j| x[j])
                    .sum::<T>()
            })
            .collect()
    })
}

/// Alpha centrality `x = 1 + α Aᵀ x` with `α = 0.9 / ρ(A)`.
pub fn alpha_centrality<T: Scalar>(adj: &Adjacency) -> Vec<T> {
    let n = adj.dim();
    let rho = spectral_radius::<T>(adj);
    let alpha = if rho > T::zero() {
        T::lit(ALPHA_FACTOR) / rho
    } else {
        T::lit(ALPHA_FACTOR)
    };
    let tol = T::lit(ITERATION_TOLERANCE);
    let mut x = vec![T::one(); n];
    for _ in 0..MAX_ITERATIONS {
        let next: Vec<T> = mul_transpose(adj, &x)
            .into_iter()
            .map(|v| T::one() + alpha * v)
            .collect();
        let diff: T = next.iter().zip(&x).map(|(&a, &b)| (a - b).abs()).sum();
        let size: T = next.iter().copied().sum();
        x = next;
        if diff <= tol * size {
            break;
        }
    }
    normalize_sum(&mut x);
    x
}

/// Strongly connected components (Kosaraju), each as a sorted index list.
pub fn strongly_connected_components(adj: &Adjacency) -> Vec<Vec<usize>> {
    let n = adj.dim();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        // iterative post-order DFS
        let mut stack = vec![(s, 0usize)];
        seen[s] = true;
        while let Some(top) = stack.last_mut() {
            let (v, next) = *top;
            match (next..n).find(|&w| adj.has(v, w)) {
                Some(w) => {
                    top.1 = w + 1;
                    if !seen[w] {
                        seen[w] = true;
                        stack.push((w, 0));
                    }
                }
                None => {
                    order.push(v);
                    stack.pop();
                }
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut components = Vec::new();
    for &s in order.iter().rev() {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut k = 0;
        while k < members.len() {
            let v = members[k];
            for u in adj.predecessors(v) {
                if comp[u] == usize::MAX {
                    comp[u] = id;
                    members.push(u);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// Spectral radius of the binary adjacency: the largest Perron root over its strongly
/// connected components, each found by Collatz–Wielandt bracketing on `B + I`.
pub fn spectral_radius<T: Scalar>(adj: &Adjacency) -> T {
    let mut rho = T::zero();
    for members in strongly_connected_components(adj) {
        if members.len() < 2 {
            continue;
        }
        rho = rho.max(perron_root(adj, &members));
    }
    rho
}

fn perron_root<T: Scalar>(adj: &Adjacency, members: &[usize]) -> T {
    let m = members.len();
    let tol = T::lit(1e-15);
    let mut x = vec![T::one(); m];
    let mut estimate = T::zero();
    for _ in 0..MAX_ITERATIONS {
        let y: Vec<T> = (0..m)
            .map(|a| {
                x[a] + (0..m)
                    .filter(|&b| adj.has(members[a], members[b]))
                    .map(|b| x[b])
                    .sum::<T>()
            })
            .collect();
        let mut lo = T::infinity();
        let mut hi = T::zero();
        for (a, b) in y.iter().zip(&x) {
            let r = *a / *b;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        estimate = (lo + hi) / T::lit(2.0);
        let top = y.iter().copied().fold(T::zero(), T::max);
        x = y.into_iter().map(|v| v / top).collect();
        if hi - lo <= tol * hi {
            break;
        }
    }
    estimate - T::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_degrees_and_betweenness() {
        let adj = Adjacency::from_edges(4, &[(0, 1), (0, 2), (0, 3)]);
        let c: Centralities<f64> = centralities(&adj);
        assert_eq!(c.out_degree, vec![3, 0, 0, 0]);
        assert_eq!(c.in_degree, vec![0, 1, 1, 1]);
        assert!(c.betweenness.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn cycle_pagerank_is_uniform() {
        let adj = Adjacency::from_edges(3, &[(0, 1), (1, 2), (2, 0)]);
        let pr: Vec<f64> = pagerank(&adj);
        for p in pr {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((spectral_radius::<f64>(&adj) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn path_betweenness() {
        let adj = Adjacency::from_edges(3, &[(0, 1), (1, 2)]);
        let b: Vec<f64> = betweenness(&adj);
        assert_eq!(b, vec![0.0, 0.5, 0.0]);
    }

    #[test]
    fn k_shell_of_triangle_with_tail() {
        // mutual triangle 0-1-2 plus pendant 3 <- 2
        let adj =
            Adjacency::from_edges(4, &[(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0), (2, 3)]);
        assert_eq!(k_shell(&adj), vec![4, 4, 4, 1]);
    }

    #[test]
    fn empty_graph_gives_zeros() {
        let adj = Adjacency::from_edges(3, &[]);
        let c: Centralities<f64> = centralities(&adj);
        assert!(c
            .authority
            .iter()
            .chain(&c.hub)
            .chain(&c.eigen_centrality)
            .all(|&v| v == 0.0));
        assert!(c.closeness.iter().all(|&v| v == 0.0));
        let none = Adjacency::from_edges(0, &[]);
        let c: Centralities<f64> = centralities(&none);
        assert!(c.pagerank.is_empty());
    }

    #[test]
    fn scc_split() {
        let adj = Adjacency::from_edges(5, &[(0, 1), (1, 0), (1, 2), (3, 4), (4, 3)]);
        let mut comps = strongly_connected_components(&adj);
        comps.sort();
        assert_eq!(comps, vec![vec![0, 1], vec![2], vec![3, 4]]);
    }
}
