use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ResilienceError;
use crate::graph::{component_labels, OverlayGraph, UndirectedAdj};

const RESIDUAL_TOL: f64 = 1e-8;
const MAX_OUTER: usize = 5000;
/// Entries this small (of a unit vector) count as exact zeros.
const ZERO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralCut {
    pub lambda2: f64,
    /// Side sizes, larger first.
    pub sizes: (usize, usize),
    pub edges_removed: usize,
    /// Larger side over all nodes.
    pub cut_ratio: f64,
    /// `true` marks the larger side, per node index.
    #[serde(skip)]
    pub side: Vec<bool>,
    pub iterations: usize,
}

/// `y = L x` for the graph Laplacian of `adj`.
pub fn laplacian_matvec(adj: &UndirectedAdj, x: &[f64], y: &mut [f64]) {
    for (v, nb) in adj.iter().enumerate() {
        y[v] = nb.len() as f64 * x[v] - nb.iter().map(|&w| x[w as usize]).sum::<f64>();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

fn normalize(x: &mut [f64]) {
    let n = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

/// Conjugate gradients for `L y = b` with `b ⟂ 1`; L is positive definite
/// on that subspace when the graph is connected.
fn cg_solve(adj: &UndirectedAdj, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let stop = 1e-28 * rr.max(f64::MIN_POSITIVE);
    for _ in 0..(20 * n).max(100) {
        if rr <= stop {
            break;
        }
        laplacian_matvec(adj, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        remove_mean(&mut r);
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    remove_mean(&mut x);
    x
}

/// λ2 and a unit Fiedler vector by inverse iteration on the complement of
/// the all-ones vector.
pub fn fiedler_vector(adj: &UndirectedAdj) -> Result<(f64, Vec<f64>, usize), ResilienceError> {
    let n = adj.len();
    if n < 3 {
        return Err(ResilienceError::TooSmall(3));
    }
    if component_labels(adj).1 != 1 {
        return Err(ResilienceError::Disconnected);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    remove_mean(&mut v);
    normalize(&mut v);
    let mut lv = vec![0.0; n];
    for it in 1..=MAX_OUTER {
        v = cg_solve(adj, &v);
        normalize(&mut v);
        laplacian_matvec(adj, &v, &mut lv);
        let lambda = dot(&v, &lv);
        let res = lv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        if res <= RESIDUAL_TOL {
            if lambda < 1e-10 {
                return Err(ResilienceError::Disconnected);
            }
            return Ok((lambda, v, it));
        }
    }
    Err(ResilienceError::NonConvergence(MAX_OUTER))
}

/// Splits the undirected projection by the sign of the Fiedler vector.
/// Zero entries join the side with fewer members.
pub fn fiedler_cut(g: &OverlayGraph) -> Result<SpectralCut, ResilienceError> {
    cut_of(&g.undirected())
}

pub fn cut_of(adj: &UndirectedAdj) -> Result<SpectralCut, ResilienceError> {
    let (lambda2, mut v, iterations) = fiedler_vector(adj)?;
    // canonical sign: first clearly nonzero entry positive
    if let Some(&first) = v.iter().find(|x| x.abs() > ZERO) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let pos = v.iter().filter(|&&x| x > ZERO).count();
    let neg = v.iter().filter(|&&x| x < -ZERO).count();
    let zeros_positive = pos <= neg;
    let on_pos: Vec<bool> = v
        .iter()
        .map(|&x| if x.abs() <= ZERO { zeros_positive } else { x > 0.0 })
        .collect();
    let n = adj.len();
    let a = on_pos.iter().filter(|&&b| b).count();
    let larger_is_pos = a >= n - a;
    let side: Vec<bool> = on_pos.iter().map(|&b| b == larger_is_pos).collect();
    let edges_removed = adj
        .iter()
        .enumerate()
        .flat_map(|(u, nb)| nb.iter().map(move |&w| (u, w as usize)))
        .filter(|&(u, w)| u < w && side[u] != side[w])
        .count();
    let big = a.max(n - a);
    Ok(SpectralCut {
        lambda2,
        sizes: (big, n - big),
        edges_removed,
        cut_ratio: big as f64 / n as f64,
        side,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn path(n: usize) -> UndirectedAdj {
        (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i as u32 - 1);
                }
                if i + 1 < n {
                    v.push(i as u32 + 1);
                }
                v
            })
            .collect()
    }

    fn dense_lambda2(adj: &UndirectedAdj) -> f64 {
        let n = adj.len();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (u, nb) in adj.iter().enumerate() {
            m[(u, u)] = nb.len() as f64;
            for &w in nb {
                m[(u, w as usize)] = -1.0;
            }
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev[1]
    }

    #[test]
    fn p4_middle_edge() {
        let c = cut_of(&path(4)).unwrap();
        assert!((c.lambda2 - (2.0 - 2f64.sqrt())).abs() < 1e-8);
        assert!((c.lambda2 - dense_lambda2(&path(4))).abs() < 1e-8);
        assert_eq!(c.edges_removed, 1);
        assert_eq!(c.cut_ratio, 0.5);
        assert_eq!(c.side[0], c.side[1]);
        assert_ne!(c.side[1], c.side[2]);
    }

    #[test]
    fn odd_path_zero_goes_to_smaller_side() {
        let c = cut_of(&path(5)).unwrap();
        assert_eq!(c.sizes, (3, 2));
        assert_eq!(c.edges_removed, 1);
    }

    #[test]
    fn triangles_bridge() {
        let adj: UndirectedAdj = vec![vec![1, 2], vec![0, 2], vec![0, 1, 3], vec![2, 4, 5], vec![3, 5], vec![3, 4]];
        let c = cut_of(&adj).unwrap();
        assert_eq!(c.edges_removed, 1);
        assert_eq!(c.cut_ratio, 0.5);
        assert!((c.lambda2 - dense_lambda2(&adj)).abs() < 1e-8);
    }

    #[test]
    fn cycle_closed_form() {
        for n in [5usize, 12, 40] {
            let adj: UndirectedAdj = (0..n)
                .map(|i| vec![((i + n - 1) % n) as u32, ((i + 1) % n) as u32])
                .collect();
            let c = cut_of(&adj).unwrap();
            let want = 2.0 * (1.0 - (2.0 * std::f64::consts::PI / n as f64).cos());
            assert!((c.lambda2 - want).abs() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn disconnected_and_tiny() {
        assert_eq!(cut_of(&vec![vec![1], vec![0], vec![3], vec![2]]).unwrap_err(), ResilienceError::Disconnected);
        assert_eq!(cut_of(&path(2)).unwrap_err(), ResilienceError::TooSmall(3));
    }
}
