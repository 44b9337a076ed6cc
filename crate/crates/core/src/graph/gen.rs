//! Random and regular graph generators over undirected adjacency lists.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::UndirectedAdj;

fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> UndirectedAdj {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in pairs {
        if a != b {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

/// G(n, p).
pub fn gnp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> UndirectedAdj {
    let mut pairs = Vec::new();
    for a in 0..n as u32 {
        for b in a + 1..n as u32 {
            if rng.random::<f64>() < p {
                pairs.push((a, b));
            }
        }
    }
    from_pairs(n, pairs)
}

/// G(n, m): `m` distinct edges chosen uniformly.
pub fn gnm<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> UndirectedAdj {
    let max = n * n.saturating_sub(1) / 2;
    let m = m.min(max);
    let mut set = BTreeSet::new();
    while set.len() < m {
        let a = rng.random_range(0..n as u32);
        let b = rng.random_range(0..n as u32);
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    from_pairs(n, set)
}

/// Preferential attachment: each new node links to `m` distinct existing
/// nodes chosen proportionally to degree, starting from a clique of `m + 1`.
pub fn barabasi_albert<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> UndirectedAdj {
    assert!(m >= 1 && n > m);
    let mut pairs = Vec::new();
    let mut repeated: Vec<u32> = Vec::new();
    for a in 0..=m as u32 {
        for b in a + 1..=m as u32 {
            pairs.push((a, b));
            repeated.push(a);
            repeated.push(b);
        }
    }
    for v in (m + 1) as u32..n as u32 {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(*repeated.choose(rng).unwrap());
        }
        for &t in &targets {
            pairs.push((v, t));
            repeated.push(v);
            repeated.push(t);
        }
    }
    from_pairs(n, pairs)
}

/// Ring where each node links to its `k/2` nearest neighbours on each side.
pub fn ring_lattice(n: usize, k: usize) -> UndirectedAdj {
    let half = (k / 2).min(n.saturating_sub(1) / 2);
    let pairs = (0..n).flat_map(|i| (1..=half).map(move |j| (i as u32, ((i + j) % n) as u32)));
    from_pairs(n, pairs)
}

/// Watts–Strogatz: ring lattice with each edge's far end rewired with
/// probability `p`.
pub fn watts_strogatz<R: Rng + ?Sized>(n: usize, k: usize, p: f64, rng: &mut R) -> UndirectedAdj {
    let half = k / 2;
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    let key = |a: u32, b: u32| (a.min(b), a.max(b));
    for i in 0..n {
        for j in 1..=half {
            edges.insert(key(i as u32, ((i + j) % n) as u32));
        }
    }
    for j in 1..=half {
        for i in 0..n {
            let (a, b) = (i as u32, ((i + j) % n) as u32);
            if rng.random::<f64>() >= p || !edges.contains(&key(a, b)) {
                continue;
            }
            let deg_a = edges.iter().filter(|&&(x, y)| x == a || y == a).count();
            if deg_a >= n - 1 {
                continue;
            }
            loop {
                let c = rng.random_range(0..n as u32);
                if c != a && !edges.contains(&key(a, c)) {
                    edges.remove(&key(a, b));
                    edges.insert(key(a, c));
                    break;
                }
            }
        }
    }
    from_pairs(n, edges)
}

/// Random `d`-regular graph: stubs are paired one random valid pair at a
/// time, restarting when the remaining stubs cannot be matched.
pub fn random_regular<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Option<UndirectedAdj> {
    if (n * d) % 2 == 1 || d >= n {
        return None;
    }
    'attempt: for _ in 0..1000 {
        let mut stubs: Vec<u32> = (0..n as u32).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        let mut set = BTreeSet::new();
        while !stubs.is_empty() {
            let mut paired = false;
            for _ in 0..100 {
                let i = rng.random_range(0..stubs.len());
                let j = rng.random_range(0..stubs.len());
                let (a, b) = (stubs[i].min(stubs[j]), stubs[i].max(stubs[j]));
                if i == j || a == b || set.contains(&(a, b)) {
                    continue;
                }
                set.insert((a, b));
                let (hi, lo) = (i.max(j), i.min(j));
                stubs.swap_remove(hi);
                stubs.swap_remove(lo);
                paired = true;
                break;
            }
            if !paired {
                continue 'attempt;
            }
        }
        return Some(from_pairs(n, set));
    }
    None
}

/// Degree-preserving double-edge swaps.
pub fn rewire<R: Rng + ?Sized>(adj: &UndirectedAdj, swaps: usize, rng: &mut R) -> UndirectedAdj {
    let mut edges: Vec<(u32, u32)> = adj
        .iter()
        .enumerate()
        .flat_map(|(a, l)| l.iter().filter(move |&&b| b > a as u32).map(move |&b| (a as u32, b)))
        .collect();
    let mut set: BTreeSet<(u32, u32)> = edges.iter().copied().collect();
    if edges.len() < 2 {
        return adj.clone();
    }
    let key = |a: u32, b: u32| (a.min(b), a.max(b));
    let mut done = 0;
    let mut tries = 0;
    while done < swaps && tries < swaps * 20 {
        tries += 1;
        let i = rng.random_range(0..edges.len());
        let j = rng.random_range(0..edges.len());
        if i == j {
            continue;
        }
        let (a, b) = edges[i];
        let (c, d) = if rng.random::<bool>() { edges[j] } else { (edges[j].1, edges[j].0) };
        if a == d || c == b || a == c || b == d {
            continue;
        }
        let (e1, e2) = (key(a, d), key(c, b));
        if set.contains(&e1) || set.contains(&e2) {
            continue;
        }
        set.remove(&edges[i]);
        set.remove(&edges[j]);
        set.insert(e1);
        set.insert(e2);
        edges[i] = e1;
        edges[j] = e2;
        done += 1;
    }
    from_pairs(adj.len(), edges)
}

pub fn is_connected(adj: &UndirectedAdj) -> bool {
    if adj.is_empty() {
        return true;
    }
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w as usize] {
                seen[w as usize] = true;
                count += 1;
                stack.push(w as usize);
            }
        }
    }
    count == adj.len()
}

/// Directed G(n, p): every ordered pair independently.
pub fn gnp_directed<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<Vec<u32>> {
    (0..n)
        .map(|a| {
            (0..n as u32)
                .filter(|&b| b as usize != a && rng.random::<f64>() < p)
                .collect()
        })
        .collect()
}

/// Both orientations of every undirected edge.
pub fn symmetric_digraph(adj: &UndirectedAdj) -> Vec<Vec<u32>> {
    adj.clone()
}
