use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{lcc_projection, diameter_of, avg_path_of};
use super::{
    assortativity, betweenness, clustering, components, out_in_ratio, pagerank, reciprocity,
    small_world_omega, undirected_edge_count, GraphError, OmegaBaseline, OmegaReport,
    OverlayGraph,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeOptions {
    pub diameter_sweeps: usize,
    pub betweenness_exact_threshold: usize,
    pub betweenness_pivots: usize,
    pub path_sources: usize,
    pub damping: f64,
    pub pagerank_tol: f64,
    pub pagerank_max_iter: usize,
    /// Number of random baselines for ω; `0` skips it.
    pub omega_samples: usize,
    pub omega_baseline: OmegaBaseline,
    pub seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            diameter_sweeps: 16,
            betweenness_exact_threshold: 20_000,
            betweenness_pivots: 2048,
            path_sources: 1024,
            damping: 0.85,
            pagerank_tol: 1e-10,
            pagerank_max_iter: 200,
            omega_samples: 0,
            omega_baseline: OmegaBaseline::Er,
            seed: 0,
        }
    }
}

/// Whole-graph metrics. Undefined values (e.g. assortativity with zero
/// degree variance) serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub wcc_fraction: f64,
    pub scc_fraction: f64,
    pub lcc_nodes: usize,
    /// Lower bound from double sweeps on the undirected LCC.
    pub diameter: Option<u32>,
    pub density: f64,
    /// `2|E_u|/N` on the undirected projection.
    pub avg_degree_undirected: f64,
    /// `|E|/N`, equal for in- and out-degree.
    pub mean_in_out_degree: f64,
    pub assortativity: Option<f64>,
    pub reciprocity: Option<f64>,
    pub global_clustering: f64,
    pub avg_clustering: f64,
    pub random_clustering: f64,
    pub clustering_by_degree: BTreeMap<usize, f64>,
    pub avg_shortest_path: Option<f64>,
    pub out_in_within_20pct: f64,
    pub out_in_infinite: usize,
    pub betweenness_exact: bool,
    pub omega: Option<OmegaReport>,
}

/// Per-node vectors, indexed like the graph's ids.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMetrics {
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
    pub local_clustering: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub betweenness_norm: Vec<f64>,
    pub pagerank: Vec<f64>,
    pub out_in_ratio: Vec<Option<f64>>,
}

impl NodeMetrics {
    pub const COLUMNS: [&'static str; 8] = [
        "node",
        "in_degree",
        "out_degree",
        "local_clustering",
        "betweenness",
        "betweenness_norm",
        "pagerank",
        "out_in_ratio",
    ];

    pub fn to_tsv(&self, g: &OverlayGraph) -> String {
        let mut s = Self::COLUMNS.join("\t");
        s.push('\n');
        for (v, id) in g.ids().iter().enumerate() {
            let ratio = match self.out_in_ratio[v] {
                Some(r) => r.to_string(),
                None => "inf".into(),
            };
            writeln!(
                s,
                "{id}\t{}\t{}\t{}\t{}\t{}\t{}\t{ratio}",
                self.in_degree[v],
                self.out_degree[v],
                self.local_clustering[v],
                self.betweenness[v],
                self.betweenness_norm[v],
                self.pagerank[v],
            )
            .unwrap();
        }
        s
    }

    /// One metric column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let f = |v: &[usize]| v.iter().map(|&x| x as f64).collect();
        Some(match name {
            "in_degree" => f(&self.in_degree),
            "out_degree" => f(&self.out_degree),
            "local_clustering" | "clustering" => self.local_clustering.clone(),
            "betweenness" => self.betweenness.clone(),
            "betweenness_norm" => self.betweenness_norm.clone(),
            "pagerank" => self.pagerank.clone(),
            _ => return None,
        })
    }
}

pub fn analyze(g: &OverlayGraph, opts: &AnalyzeOptions) -> Result<(MetricReport, NodeMetrics), GraphError> {
    let n = g.node_count();
    let comps = components(g);
    let lcc = lcc_projection(g);
    let cl = clustering(g);
    let ratio = out_in_ratio(g);
    let bc = betweenness(g, opts.betweenness_exact_threshold, opts.betweenness_pivots, opts.seed);
    let pr = pagerank(g, opts.damping, opts.pagerank_tol, opts.pagerank_max_iter)?;
    let omega = if opts.omega_samples > 0 {
        small_world_omega(g, opts.omega_samples, opts.omega_baseline, opts.path_sources, opts.seed).ok()
    } else {
        None
    };
    let nf = n.max(1) as f64;
    let report = MetricReport {
        n_nodes: n,
        n_edges: g.edge_count(),
        wcc_fraction: comps.wcc_fraction,
        scc_fraction: comps.scc_fraction,
        lcc_nodes: lcc.len(),
        diameter: diameter_of(&lcc, opts.diameter_sweeps, opts.seed).ok(),
        density: g.density(),
        avg_degree_undirected: 2.0 * undirected_edge_count(&g.undirected()) as f64 / nf,
        mean_in_out_degree: g.edge_count() as f64 / nf,
        assortativity: assortativity(g).ok(),
        reciprocity: reciprocity(g).ok(),
        global_clustering: cl.global,
        avg_clustering: cl.average,
        random_clustering: cl.random_baseline,
        clustering_by_degree: cl.by_degree,
        avg_shortest_path: avg_path_of(&lcc, opts.path_sources, opts.seed).ok(),
        out_in_within_20pct: ratio.within_20pct,
        out_in_infinite: ratio.infinite,
        betweenness_exact: bc.exact,
        omega,
    };
    let nodes = NodeMetrics {
        in_degree: g.in_degrees(),
        out_degree: g.out_degrees(),
        local_clustering: cl.local,
        betweenness: bc.raw,
        betweenness_norm: bc.normalized,
        pagerank: pr,
        out_in_ratio: ratio.ratios,
    };
    Ok((report, nodes))
}
