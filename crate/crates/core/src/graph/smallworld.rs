use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gen::{gnm, is_connected, rewire, ring_lattice};
use super::metrics::{avg_path_of, clustering_of, lcc_projection};
use super::{undirected_edge_count, GraphError, OverlayGraph};

const RESAMPLE_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaBaseline {
    /// Erdős–Rényi with the same node and edge count.
    #[default]
    Er,
    /// Degree-preserving double-edge swaps of the graph itself.
    Rewire,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaReport {
    pub omega: f64,
    pub path_length: f64,
    pub clustering: f64,
    pub random_path_length: f64,
    pub lattice_clustering: f64,
    pub baseline: OmegaBaseline,
}

/// `ω = L_r/L − C/C_l` on the undirected projection of the largest weak
/// component. `C` is the mean local clustering coefficient, `C_l` that of
/// a ring lattice with the same size and mean degree (rounded down to even).
pub fn small_world_omega(
    g: &OverlayGraph,
    n_random: usize,
    baseline: OmegaBaseline,
    sources: usize,
    seed: u64,
) -> Result<OmegaReport, GraphError> {
    let adj = lcc_projection(g);
    let n = adj.len();
    let m = undirected_edge_count(&adj);
    if n < 3 || m == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let l = avg_path_of(&adj, sources, seed)?;
    let c = clustering_of(&adj).average;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lr_sum = 0.0;
    for _ in 0..n_random.max(1) {
        let mut sample = None;
        for _ in 0..RESAMPLE_LIMIT {
            let r = match baseline {
                OmegaBaseline::Er => gnm(n, m, &mut rng),
                OmegaBaseline::Rewire => rewire(&adj, 10 * m, &mut rng),
            };
            if is_connected(&r) {
                sample = Some(r);
                break;
            }
        }
        let r = sample.ok_or(GraphError::DisconnectedRandomSample(RESAMPLE_LIMIT))?;
        lr_sum += avg_path_of(&r, sources, seed)?;
    }
    let lr = lr_sum / n_random.max(1) as f64;
    let mean_deg = 2.0 * m as f64 / n as f64;
    let k = ((mean_deg.floor() as usize) & !1).max(2);
    let cl = clustering_of(&ring_lattice(n, k)).average;
    if cl == 0.0 {
        return Err(GraphError::Degenerate("lattice clustering is zero"));
    }
    Ok(OmegaReport {
        omega: lr / l - c / cl,
        path_length: l,
        clustering: c,
        random_path_length: lr,
        lattice_clustering: cl,
        baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen::{gnp, watts_strogatz};

    fn from_undirected(adj: &super::super::UndirectedAdj) -> OverlayGraph {
        OverlayGraph::from_adjacency(adj)
    }

    #[test]
    fn ring_lattice_is_negative() {
        let g = from_undirected(&ring_lattice(200, 6));
        let r = small_world_omega(&g, 3, OmegaBaseline::Er, 4096, 1).unwrap();
        assert!((r.clustering / r.lattice_clustering - 1.0).abs() < 1e-12);
        assert!(r.omega < 0.0);
    }

    #[test]
    fn dense_random_graph_is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = from_undirected(&gnp(200, 0.1, &mut rng));
        let r = small_world_omega(&g, 3, OmegaBaseline::Er, 4096, 1).unwrap();
        assert!(r.omega > 0.5, "{r:?}");
    }

    #[test]
    fn watts_strogatz_is_small_world() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = from_undirected(&watts_strogatz(1000, 10, 0.05, &mut rng));
        for baseline in [OmegaBaseline::Er, OmegaBaseline::Rewire] {
            let r = small_world_omega(&g, 2, baseline, 200, 1).unwrap();
            assert!(r.omega.abs() < 0.3, "{r:?}");
        }
    }
}
