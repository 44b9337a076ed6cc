use std::collections::{BTreeMap, VecDeque};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{GraphError, OverlayGraph, UndirectedAdj};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Components {
    /// Sizes in descending order.
    pub wcc_sizes: Vec<usize>,
    pub scc_sizes: Vec<usize>,
    pub wcc_fraction: f64,
    pub scc_fraction: f64,
}

/// Component label of every node in an undirected graph; labels are
/// assigned in order of the smallest member.
pub fn component_labels(adj: &UndirectedAdj) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; adj.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..adj.len() {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        stack.push(s);
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if label[w as usize] == usize::MAX {
                    label[w as usize] = next;
                    stack.push(w as usize);
                }
            }
        }
        next += 1;
    }
    (label, next)
}

/// Members of the largest component (ties: the one with the smallest node).
pub fn largest_component(adj: &UndirectedAdj) -> Vec<usize> {
    let (label, k) = component_labels(adj);
    if k == 0 {
        return Vec::new();
    }
    let mut sizes = vec![0usize; k];
    for &l in &label {
        sizes[l] += 1;
    }
    let best = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
    (0..adj.len()).filter(|&v| label[v] == best).collect()
}

/// Iterative Tarjan; returns the SCC id of every node.
pub fn strong_components(g: &OverlayGraph) -> (Vec<usize>, usize) {
    let n = g.node_count();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut n_comp = 0;
    // (node, position in its out list)
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let succ = g.out_neighbors(v);
            if *pos < succ.len() {
                let w = succ[*pos] as usize;
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w] = false;
                    comp[w] = n_comp;
                    if w == v {
                        break;
                    }
                }
                n_comp += 1;
            }
        }
    }
    (comp, n_comp)
}

fn sizes_desc(labels: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

pub fn components(g: &OverlayGraph) -> Components {
    let n = g.node_count();
    let (wl, wk) = component_labels(&g.undirected());
    let (sl, sk) = strong_components(g);
    let wcc_sizes = sizes_desc(&wl, wk);
    let scc_sizes = sizes_desc(&sl, sk);
    let frac = |s: &[usize]| if n == 0 { 0.0 } else { s[0] as f64 / n as f64 };
    Components {
        wcc_fraction: frac(&wcc_sizes),
        scc_fraction: frac(&scc_sizes),
        wcc_sizes,
        scc_sizes,
    }
}

/// BFS hop counts from `src`; unreachable nodes are `u32::MAX`.
pub fn bfs_distances(adj: &UndirectedAdj, src: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; adj.len()];
    let mut q = VecDeque::new();
    dist[src] = 0;
    q.push_back(src);
    while let Some(v) = q.pop_front() {
        for &w in &adj[v] {
            if dist[w as usize] == u32::MAX {
                dist[w as usize] = dist[v] + 1;
                q.push_back(w as usize);
            }
        }
    }
    dist
}

fn farthest(dist: &[u32]) -> (usize, u32) {
    let mut best = (0, 0);
    for (v, &d) in dist.iter().enumerate() {
        if d != u32::MAX && d > best.1 {
            best = (v, d);
        }
    }
    best
}

/// Undirected projection of the largest weak component, reindexed.
pub fn lcc_projection(g: &OverlayGraph) -> UndirectedAdj {
    let adj = g.undirected();
    restrict(&adj, &largest_component(&adj))
}

/// Subgraph on `members`, reindexed in the given order.
pub fn restrict(adj: &UndirectedAdj, members: &[usize]) -> UndirectedAdj {
    let mut map = vec![u32::MAX; adj.len()];
    for (i, &v) in members.iter().enumerate() {
        map[v] = i as u32;
    }
    members
        .iter()
        .map(|&v| {
            adj[v]
                .iter()
                .filter_map(|&w| (map[w as usize] != u32::MAX).then(|| map[w as usize]))
                .collect()
        })
        .collect()
}

/// Exact diameter by BFS from every node of a connected graph.
pub fn exact_diameter(adj: &UndirectedAdj) -> u32 {
    (0..adj.len())
        .map(|s| farthest(&bfs_distances(adj, s)).1)
        .max()
        .unwrap_or(0)
}

/// Lower bound on the diameter of the undirected LCC by repeated
/// double-sweep BFS. With `sweeps >= N` every node is a start and the
/// result is exact.
pub fn approx_diameter(g: &OverlayGraph, sweeps: usize, seed: u64) -> Result<u32, GraphError> {
    let adj = lcc_projection(g);
    diameter_of(&adj, sweeps, seed)
}

/// [`approx_diameter`] on an already connected undirected graph.
pub fn diameter_of(adj: &UndirectedAdj, sweeps: usize, seed: u64) -> Result<u32, GraphError> {
    let n = adj.len();
    if n == 0 {
        return Err(GraphError::EmptyGraph);
    }
    if sweeps >= n {
        return Ok(exact_diameter(adj));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0;
    let mut start = rand::Rng::random_range(&mut rng, 0..n);
    for i in 0..sweeps.max(1) {
        let (u, _) = farthest(&bfs_distances(adj, start));
        let (w, d) = farthest(&bfs_distances(adj, u));
        best = best.max(d);
        // alternate between continuing from the far end and a fresh random start
        start = if i % 2 == 0 { w } else { rand::Rng::random_range(&mut rng, 0..n) };
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    /// Transitivity: 3·triangles / connected triples.
    pub global: f64,
    /// Mean of the local coefficients.
    pub average: f64,
    pub local: Vec<f64>,
    /// Mean local coefficient per undirected degree.
    pub by_degree: BTreeMap<usize, f64>,
    /// Expected coefficient of a random graph of the same mean degree, `k̄/N`.
    pub random_baseline: f64,
}

/// Triangles through each node.
pub fn triangles(adj: &UndirectedAdj) -> Vec<u64> {
    let mut t = vec![0u64; adj.len()];
    for (v, nv) in adj.iter().enumerate() {
        for &w in nv.iter().filter(|&&w| w as usize > v) {
            let nw = &adj[w as usize];
            // common neighbours above w close a triangle v<w<x counted once
            let (mut i, mut j) = (0, 0);
            while i < nv.len() && j < nw.len() {
                match nv[i].cmp(&nw[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        let x = nv[i];
                        if x > w {
                            t[v] += 1;
                            t[w as usize] += 1;
                            t[x as usize] += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    t
}

pub fn clustering_of(adj: &UndirectedAdj) -> Clustering {
    let n = adj.len();
    let tri = triangles(adj);
    let mut local = vec![0.0; n];
    let (mut closed, mut triples) = (0u64, 0u64);
    let mut by_deg: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for v in 0..n {
        let k = adj[v].len() as u64;
        let pairs = k * k.saturating_sub(1) / 2;
        triples += pairs;
        closed += tri[v];
        if pairs > 0 {
            local[v] = tri[v] as f64 / pairs as f64;
        }
        let e = by_deg.entry(k as usize).or_default();
        e.0 += local[v];
        e.1 += 1;
    }
    let m2: usize = adj.iter().map(Vec::len).sum();
    Clustering {
        global: if triples == 0 { 0.0 } else { closed as f64 / triples as f64 },
        average: if n == 0 { 0.0 } else { local.iter().sum::<f64>() / n as f64 },
        by_degree: by_deg.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
        random_baseline: if n == 0 { 0.0 } else { m2 as f64 / n as f64 / n as f64 },
        local,
    }
}

pub fn clustering(g: &OverlayGraph) -> Clustering {
    clustering_of(&g.undirected())
}

/// Degree assortativity over undirected edges, counting both orientations.
pub fn assortativity(g: &OverlayGraph) -> Result<f64, GraphError> {
    let adj = g.undirected();
    let mut m = 0.0;
    let (mut sx, mut sxx, mut sxy) = (0.0, 0.0, 0.0);
    for nv in &adj {
        let dv = nv.len() as f64;
        for &w in nv {
            let dw = adj[w as usize].len() as f64;
            m += 1.0;
            sx += dv;
            sxx += dv * dv;
            sxy += dv * dw;
        }
    }
    if m == 0.0 {
        return Err(GraphError::EmptyGraph);
    }
    let mean = sx / m;
    let var = sxx / m - mean * mean;
    if var.abs() <= 1e-12 * mean * mean.max(1.0) {
        return Err(GraphError::Degenerate("zero degree variance"));
    }
    Ok((sxy / m - mean * mean) / var)
}

/// Fraction of directed edges whose reverse also exists.
pub fn reciprocity(g: &OverlayGraph) -> Result<f64, GraphError> {
    if g.edge_count() == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let mutual = g.edges().filter(|&(a, b)| g.has_edge(b, a)).count();
    Ok(mutual as f64 / g.edge_count() as f64)
}

/// Mean BFS distance to all reachable nodes from sampled sources on the
/// undirected LCC; exact when `sources >= N`.
pub fn avg_shortest_path(g: &OverlayGraph, sources: usize, seed: u64) -> Result<f64, GraphError> {
    avg_path_of(&lcc_projection(g), sources, seed)
}

pub(crate) fn avg_path_of(adj: &UndirectedAdj, sources: usize, seed: u64) -> Result<f64, GraphError> {
    let n = adj.len();
    if n == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let srcs: Vec<usize> = if sources >= n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = sample(&mut rng, n, sources.max(1)).into_vec();
        s.sort_unstable();
        s
    };
    use rayon::prelude::*;
    let parts: Vec<(u64, u64)> = srcs
        .par_iter()
        .map(|&s| {
            let d = bfs_distances(adj, s);
            d.iter()
                .filter(|&&x| x != u32::MAX && x > 0)
                .fold((0u64, 0u64), |(t, c), &x| (t + x as u64, c + 1))
        })
        .collect();
    let (total, count) = parts.iter().fold((0, 0), |(t, c), &(a, b)| (t + a, c + b));
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total as f64 / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutInRatio {
    /// `None` marks in-degree 0 (the infinite bucket).
    pub ratios: Vec<Option<f64>>,
    pub infinite: usize,
    /// Empirical CDF over finite ratios: (ratio, fraction ≤ ratio).
    pub cdf: Vec<(f64, f64)>,
    pub within_20pct: f64,
}

pub fn out_in_ratio(g: &OverlayGraph) -> OutInRatio {
    let (outd, ind) = (g.out_degrees(), g.in_degrees());
    let n = g.node_count();
    let ratios: Vec<Option<f64>> = (0..n)
        .map(|v| (ind[v] > 0).then(|| outd[v] as f64 / ind[v] as f64))
        .collect();
    let within = (0..n)
        .filter(|&v| {
            let (o, i) = (outd[v] as f64, ind[v] as f64);
            (o - i).abs() <= 0.2 * o.max(i)
        })
        .count();
    let mut finite: Vec<f64> = ratios.iter().flatten().copied().collect();
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = finite.len() as f64;
    let mut cdf: Vec<(f64, f64)> = Vec::new();
    for (i, &r) in finite.iter().enumerate() {
        let f = (i + 1) as f64 / m;
        match cdf.last_mut() {
            Some(last) if last.0 == r => last.1 = f,
            _ => cdf.push((r, f)),
        }
    }
    OutInRatio {
        infinite: n - finite.len(),
        ratios,
        cdf,
        within_20pct: if n == 0 { 0.0 } else { within as f64 / n as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dg(n: usize, e: &[(u32, u32)]) -> OverlayGraph {
        let mut out = vec![Vec::new(); n];
        for &(a, b) in e {
            out[a as usize].push(b);
        }
        OverlayGraph::from_adjacency(&out)
    }

    fn path(n: usize) -> OverlayGraph {
        let e: Vec<_> = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
        dg(n, &e)
    }

    #[test]
    fn component_examples() {
        let c = components(&dg(3, &[(0, 1), (1, 2), (2, 0)]));
        assert_eq!((c.wcc_fraction, c.scc_fraction), (1.0, 1.0));
        let c = components(&path(3));
        assert_eq!(c.wcc_fraction, 1.0);
        assert!((c.scc_fraction - 1.0 / 3.0).abs() < 1e-15);
        let c = components(&dg(4, &[(0, 1), (2, 3)]));
        assert_eq!(c.wcc_fraction, 0.5);
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(approx_diameter(&path(5), 1, 0).unwrap(), 4);
        let star = dg(10, &(1..10).map(|i| (0, i)).collect::<Vec<_>>());
        assert_eq!(approx_diameter(&star, 1, 3).unwrap(), 2);
        assert_eq!(approx_diameter(&dg(0, &[]), 4, 0), Err(GraphError::EmptyGraph));
    }

    #[test]
    fn clustering_examples() {
        let tri = clustering(&dg(3, &[(0, 1), (1, 2), (2, 0)]));
        assert_eq!(tri.global, 1.0);
        assert!(tri.local.iter().all(|&c| c == 1.0));
        let star = dg(5, &(1..5).map(|i| (0, i)).collect::<Vec<_>>());
        assert_eq!(clustering(&star).global, 0.0);
    }

    #[test]
    fn assortativity_examples() {
        let c4 = dg(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert!(matches!(assortativity(&c4), Err(GraphError::Degenerate(_))));
        assert!((assortativity(&path(4)).unwrap() + 0.5).abs() < 1e-12);
        let two_tri = dg(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]);
        assert!(assortativity(&two_tri).is_err());
    }

    #[test]
    fn reciprocity_examples() {
        assert_eq!(reciprocity(&dg(2, &[(0, 1), (1, 0)])).unwrap(), 1.0);
        assert_eq!(reciprocity(&dg(2, &[(0, 1)])).unwrap(), 0.0);
        let r = reciprocity(&dg(3, &[(0, 1), (1, 0), (0, 2)])).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn path_length_examples() {
        assert!((avg_shortest_path(&path(3), 1024, 0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let k5: Vec<_> = (0..5u32)
            .flat_map(|a| (0..5u32).filter(move |&b| b != a).map(move |b| (a, b)))
            .collect();
        assert_eq!(avg_shortest_path(&dg(5, &k5), 1024, 0).unwrap(), 1.0);
    }

    #[test]
    fn out_in_examples() {
        let r = out_in_ratio(&dg(2, &[(0, 1), (1, 0)]));
        assert_eq!(r.ratios, vec![Some(1.0), Some(1.0)]);
        assert_eq!(r.within_20pct, 1.0);
        let r = out_in_ratio(&dg(2, &[(0, 1)]));
        assert_eq!(r.ratios, vec![None, Some(0.0)]);
        assert_eq!(r.infinite, 1);
    }

    #[test]
    fn scc_on_two_cycles_joined() {
        let g = dg(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)]);
        let (comp, k) = strong_components(&g);
        assert_eq!(k, 2);
        assert_eq!(comp[0], comp[1]);
        assert_ne!(comp[0], comp[3]);
    }

    fn digraph() -> impl Strategy<Value = OverlayGraph> {
        (1usize..40).prop_flat_map(|n| {
            prop::collection::vec((0..n as u32, 0..n as u32), 0..120).prop_map(move |e| {
                let e: Vec<_> = e.into_iter().filter(|(a, b)| a != b).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
                dg(n, &e)
            })
        })
    }

    proptest! {
        #[test]
        fn degree_sums_match_edge_count(g in digraph()) {
            let m = g.edge_count();
            prop_assert_eq!(g.out_degrees().iter().sum::<usize>(), m);
            prop_assert_eq!(g.in_degrees().iter().sum::<usize>(), m);
        }

        #[test]
        fn components_partition_nodes(g in digraph()) {
            let c = components(&g);
            prop_assert_eq!(c.wcc_sizes.iter().sum::<usize>(), g.node_count());
            prop_assert_eq!(c.scc_sizes.iter().sum::<usize>(), g.node_count());
            prop_assert!(c.scc_sizes.len() >= c.wcc_sizes.len());
        }

        #[test]
        fn exact_diameter_bounds_the_estimate(g in digraph(), seed in 0u64..50) {
            let lcc = lcc_projection(&g);
            prop_assert!(diameter_of(&lcc, 2, seed).unwrap() <= exact_diameter(&lcc));
        }
    }
}
