use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{GraphError, OverlayGraph};
use crate::stats::minmax_normalize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Betweenness {
    /// Unnormalized (ordered pairs, directed).
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub exact: bool,
    pub sources: usize,
}

/// Dependencies of every node on shortest paths from `s`.
fn brandes_from(g: &OverlayGraph, s: usize, delta: &mut [f64]) {
    let n = g.node_count();
    let mut sigma = vec![0f64; n];
    let mut dist = vec![u32::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut q = VecDeque::new();
    sigma[s] = 1.0;
    dist[s] = 0;
    q.push_back(s);
    while let Some(v) = q.pop_front() {
        order.push(v);
        for &w in g.out_neighbors(v) {
            let w = w as usize;
            if dist[w] == u32::MAX {
                dist[w] = dist[v] + 1;
                q.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
            }
        }
    }
    let mut dep = vec![0f64; n];
    for &w in order.iter().rev() {
        // predecessors are in-neighbours one level closer
        for &v in g.in_neighbors(w) {
            let v = v as usize;
            if dist[v] != u32::MAX && dist[v] + 1 == dist[w] {
                dep[v] += sigma[v] / sigma[w] * (1.0 + dep[w]);
            }
        }
        if w != s {
            delta[w] += dep[w];
        }
    }
}

const CHUNK: usize = 64;

/// Brandes accumulation on the directed graph. Exact when
/// `N <= exact_threshold` or `pivots >= N`; otherwise sampled from `pivots`
/// sources and scaled by `N/pivots`. Partial sums are combined in a fixed
/// order so results do not depend on thread count.
pub fn betweenness(g: &OverlayGraph, exact_threshold: usize, pivots: usize, seed: u64) -> Betweenness {
    let n = g.node_count();
    let exact = n <= exact_threshold || pivots >= n;
    let sources: Vec<usize> = if exact {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = sample(&mut rng, n, pivots.max(1)).into_vec();
        s.sort_unstable();
        s
    };
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0f64; n];
            for &s in chunk {
                brandes_from(g, s, &mut acc);
            }
            acc
        })
        .collect();
    let mut raw = vec![0f64; n];
    for p in &partials {
        for (r, v) in raw.iter_mut().zip(p) {
            *r += v;
        }
    }
    if !exact {
        let scale = n as f64 / sources.len() as f64;
        raw.iter_mut().for_each(|v| *v *= scale);
    }
    Betweenness {
        normalized: minmax_normalize(&raw),
        raw,
        exact,
        sources: sources.len(),
    }
}

/// Power iteration with uniform teleport; the rank of dangling nodes is
/// spread uniformly.
pub fn pagerank(g: &OverlayGraph, damping: f64, tol: f64, max_iter: usize) -> Result<Vec<f64>, GraphError> {
    let n = g.node_count();
    if n == 0 {
        return Ok(Vec::new());
    }
    let nf = n as f64;
    let outd = g.out_degrees();
    let mut pr = vec![1.0 / nf; n];
    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&v| outd[v] == 0).map(|v| pr[v]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        let next: Vec<f64> = (0..n)
            .map(|v| {
                base + damping
                    * g.in_neighbors(v)
                        .iter()
                        .map(|&u| pr[u as usize] / outd[u as usize] as f64)
                        .sum::<f64>()
            })
            .collect();
        let diff: f64 = next.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
        pr = next;
        if diff < tol {
            let s: f64 = pr.iter().sum();
            pr.iter_mut().for_each(|v| *v /= s);
            return Ok(pr);
        }
    }
    Err(GraphError::NonConvergence(max_iter))
}
