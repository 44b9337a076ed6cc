//! Command-line front end. Results go to stdout as JSON (tables as TSV
//! files under `--out-dir`); failures print one JSON object on stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::RngCore;
use serde::Serialize;
use serde_json::{json, Value};

use crate::addr::PeerAddr;
use crate::churn::{self, DegreeRule, PresenceMatrix};
use crate::config::{CrawlConfig, Identity, Protocol};
use crate::crawler::{snapshot_cycle, BitcoinProber, ChainCrawler, CycleConfig, EthProber, Prober, TickPolicy};
use crate::fit::{self, BestFit, Family};
use crate::graph::{self, build_graph, AnalyzeOptions, OverlayGraph};
use crate::harness::{self, LoopbackNet, SimCrawlOptions, SimTopology, SimTransport};
use crate::overlap;
use crate::proto::discv4::DiscClient;
use crate::resilience::{self, PercolateOptions, Strategy};
use crate::snapstore::{self, format_ts, parse_ts, EdgeSetSnapshot, Pseudonymizer};
use crate::transport::{SystemClock, TcpDialer};

#[derive(Debug, Parser)]
#[command(name = "p2pscope", version, about = "Crawl blockchain P2P overlays and analyze their snapshots")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for analysis (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for TSV and snapshot outputs.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl the configured chains until interrupted.
    Crawl(CrawlArgs),
    /// Run a simulated overlay and score the crawler against it.
    Simnet(SimnetArgs),
    /// Structural metrics of one snapshot.
    Analyze(AnalyzeArgs),
    /// Heavy-tailed distribution fits.
    Fit(FitArgs),
    /// Cross-chain node and edge overlap.
    Overlap(OverlapArgs),
    /// Session lengths and uptime-degree relations.
    Churn(ChurnArgs),
    /// Static node-removal attack.
    Attack(AttackArgs),
    /// Spectral minimum edge cut.
    Cut(CutArgs),
    /// Fail if any file under a directory contains a raw IPv4 address.
    Audit(AuditArgs),
    /// Write a fresh 32-byte pseudonymization key.
    Keygen(KeygenArgs),
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Stop after this many snapshots.
    #[arg(long)]
    pub ticks: Option<usize>,
    /// Append `address<TAB>pseudonym` pairs here (keep private).
    #[arg(long)]
    pub private_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimnetArgs {
    /// e.g. `er:n=500,p=0.02,seed=7,adv=0.8`
    #[arg(long)]
    pub topology: String,
    /// Keep the fake peers listening on loopback until interrupted.
    #[arg(long, conflicts_with = "crawl_and_score")]
    pub serve: bool,
    /// Crawl the network and print recall (the default).
    #[arg(long)]
    pub crawl_and_score: bool,
    #[arg(long, default_value = "in_memory")]
    pub transport: String,
    #[arg(long, default_value_t = 2)]
    pub rounds: u64,
    #[arg(long, default_value_t = 2)]
    pub getaddr: usize,
    #[arg(long, default_value_t = 1)]
    pub ticks: usize,
    #[arg(long, default_value_t = 16)]
    pub workers: usize,
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Also write per-node metrics as TSV to `--out-dir`.
    #[arg(long)]
    pub all: bool,
    /// Print a single report field.
    #[arg(long)]
    pub metric: Option<String>,
    /// Random baselines for the small-world coefficient (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub omega: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FitKind {
    Degree,
    Session,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum DegreeKind {
    In,
    Out,
    Total,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// One sample per line.
    #[arg(long, conflicts_with = "dir")]
    pub input: Option<PathBuf>,
    /// Batch mode over a snapshot directory.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "degree")]
    pub kind: FitKind,
    #[arg(long, value_enum, default_value = "out")]
    pub degree: DegreeKind,
    /// Fit one family only (PL, LN, PLEC, SE).
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long, default_value_t = fit::DEFAULT_P_THRESHOLD)]
    pub p_threshold: f64,
    /// Session batches: split each chain into this many periods.
    #[arg(long, default_value_t = 1)]
    pub periods: usize,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub aggregate: bool,
    #[arg(long)]
    pub series: bool,
    #[arg(long)]
    pub kstest: bool,
}

#[derive(Debug, Args)]
pub struct ChurnArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub periods: usize,
    /// Comma-separated snapshot timestamps to drop.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    #[arg(long, default_value = "mean")]
    pub degree_rule: String,
    #[arg(long, default_value_t = 0.10)]
    pub top_frac: f64,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long, conflicts_with = "dir")]
    pub snapshot: Option<PathBuf>,
    /// With `--strategy overlap`: the snapshot directory.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// out_degree, betweenness, random[:seed] or overlap.
    #[arg(long)]
    pub strategy: String,
    #[arg(long, default_value_t = 0.12)]
    pub max_frac: f64,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Timestamp for `--strategy overlap`.
    #[arg(long)]
    pub at: Option<String>,
}

#[derive(Debug, Args)]
pub struct CutArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Cut the largest weakly connected component instead of failing on a
    /// disconnected graph.
    #[arg(long)]
    pub lcc: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure reported as `{"error": kind, "message": ...}`.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub code: i32,
}

impl CliError {
    fn new(kind: &'static str, message: impl ToString) -> Self {
        CliError {
            kind,
            message: message.to_string(),
            code: 1,
        }
    }

    pub fn to_json(&self) -> String {
        json!({"error": self.kind, "message": self.message}).to_string()
    }
}

macro_rules! from_err {
    ($($t:ty => $k:literal),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new($k, e)
            }
        })*
    };
}

from_err!(
    std::io::Error => "io",
    snapstore::SnapError => "snapshot",
    crate::config::ConfigError => "config",
    fit::FitError => "fit",
    graph::GraphError => "graph",
    harness::HarnessError => "harness",
    resilience::ResilienceError => "resilience",
    churn::ChurnError => "churn",
    serde_json::Error => "json",
);

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl ToString) -> CliError {
    CliError {
        code: 2,
        ..CliError::new("usage", msg)
    }
}

/// `Ok` serializes as its value, `Err` as `{"error": message}`.
fn or_error<T: Serialize, E: ToString>(r: Result<T, E>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn print_json<T: Serialize>(v: &T) -> CliResult {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_out(dir: Option<&Path>, name: &str, text: &str) -> CliResult<Option<PathBuf>> {
    let Some(dir) = dir else { return Ok(None) };
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(Some(path))
}

fn load_dir(dir: &Path) -> CliResult<Vec<EdgeSetSnapshot>> {
    let cat = snapstore::catalog(dir)?;
    if cat.entries.is_empty() {
        return Err(CliError::new("snapshot", format!("no snapshots in {}", dir.display())));
    }
    cat.entries
        .iter()
        .map(|e| snapstore::read_snapshot(&e.path).map_err(CliError::from))
        .collect()
}

fn snap_stem(s: &EdgeSetSnapshot) -> String {
    s.file_name().trim_end_matches(".snap").to_string()
}

fn analyze_opts(seed: u64) -> AnalyzeOptions {
    AnalyzeOptions {
        seed,
        ..Default::default()
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).try_init();
    if let Some(j) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> CliResult {
    let out = cli.out_dir.as_deref();
    match &cli.command {
        Command::Crawl(a) => crawl(a, cli.seed, out),
        Command::Simnet(a) => simnet(a, cli.seed, out),
        Command::Analyze(a) => analyze(a, cli.seed, out),
        Command::Fit(a) => fit_cmd(a),
        Command::Overlap(a) => overlap_cmd(a, cli.seed, out),
        Command::Churn(a) => churn_cmd(a, out),
        Command::Attack(a) => attack(a, cli.seed, out),
        Command::Cut(a) => cut(a),
        Command::Audit(a) => audit(a),
        Command::Keygen(a) => keygen(a),
    }
}

fn stop_flag() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    let s = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || s.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    stop
}

fn crawl(a: &CrawlArgs, seed: u64, out: Option<&Path>) -> CliResult {
    let cfg = CrawlConfig::load(&a.config)?;
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone());
    let mut pseud = match &cfg.pseudonym_key_file {
        Some(p) => Pseudonymizer::from_key_file(p)?,
        None => Pseudonymizer::from_env()?,
    };
    if let Some(m) = &a.private_map {
        pseud = pseud.with_private_map(m)?;
    }
    fs::create_dir_all(&out_dir)?;
    let mut chains = Vec::new();
    for c in &cfg.chains {
        let prober: Arc<dyn Prober> = match c.protocol {
            Protocol::Bitcoin => Arc::new(BitcoinProber {
                params: c.params.clone(),
                dialer: Arc::new(TcpDialer),
                connect_timeout: Duration::from_millis(cfg.connect_timeout_ms),
                handshake_timeout: Duration::from_millis(cfg.handshake_timeout_ms),
                addr_wait: Duration::from_millis(cfg.addr_wait_ms),
                getaddr_per_conn: c.getaddr_per_conn,
            }),
            Protocol::Discv4 => {
                let sock = UdpSocket::bind("0.0.0.0:0")?;
                let key = k256::ecdsa::SigningKey::random(&mut k256::elliptic_curve::rand_core::OsRng);
                let client = DiscClient::new(key, Arc::new(sock), Arc::new(SystemClock::default()));
                Arc::new(EthProber::new(Arc::new(client), c.targets_per_peer, c.identity, seed))
            }
        };
        if c.protocol == Protocol::Discv4 && c.identity == Identity::Ip {
            log::info!("{}: peers named by address", c.name);
        }
        let seeds: Vec<PeerAddr> = c.seeds.iter().map(|s| s.addr).collect();
        chains.push(
            ChainCrawler::new(c.name.clone(), prober, seeds, cfg.workers)
                .map_err(|e| CliError::new("config", e))?,
        );
    }
    let stop = stop_flag();
    let cycle = CycleConfig {
        interval: Duration::from_secs(cfg.interval_secs),
        policy: TickPolicy::WallClock,
        ticks: a.ticks,
        start: Utc::now(),
    };
    snapshot_cycle(&chains, &cycle, &stop, |snap| {
        let published = pseud.apply(&snap).map_err(|e| e.to_string())?;
        snapstore::write_snapshot(&out_dir, &published)
            .map(|p| p.display().to_string())
            .map_err(|e| e.to_string())
    });
    Ok(())
}

fn simnet(a: &SimnetArgs, seed: u64, out: Option<&Path>) -> CliResult {
    let mut topo: SimTopology = a.topology.parse()?;
    if !a.topology.contains("seed=") {
        topo.seed = seed;
    }
    if a.serve {
        let mut truth = topo.build()?;
        let params = crate::config::chain_params("bitcoin").expect("bitcoin is shipped");
        let net = LoopbackNet::spawn(&mut truth, params)?;
        print_json(&json!({
            "nodes": truth.node_count(),
            "port": truth.port,
            "seed_peer": truth.addr(0).to_string(),
        }))?;
        let stop = stop_flag();
        while !stop.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(200));
        }
        drop(net);
        return Ok(());
    }
    let transport: SimTransport = a.transport.parse()?;
    let opts = SimCrawlOptions {
        rounds: a.rounds,
        getaddr_per_conn: a.getaddr,
        workers: a.workers,
        ticks: a.ticks,
        seeds: a.seeds,
        transport,
        ..Default::default()
    };
    let res = harness::crawl_simnet(&topo, &opts)?;
    if let Some(dir) = out {
        let snaps = dir.join("snapshots");
        fs::create_dir_all(&snaps)?;
        for s in &res.snapshots {
            snapstore::write_snapshot(&snaps, s)?;
        }
        let truth_dir = dir.join("truth");
        fs::create_dir_all(&truth_dir)?;
        snapstore::write_snapshot(&truth_dir, &harness::truth_snapshot(&res.truth, "simnet", opts.start))?;
    }
    print_json(&json!({
        "topology": a.topology,
        "nodes": res.truth.node_count(),
        "edges": res.truth.edge_count(),
        "recall": res.recall,
    }))
}

fn analyze(a: &AnalyzeArgs, seed: u64, out: Option<&Path>) -> CliResult {
    let snap = snapstore::read_snapshot(&a.snapshot)?;
    let g = build_graph(&snap);
    let opts = AnalyzeOptions {
        omega_samples: a.omega,
        ..analyze_opts(seed)
    };
    let (report, nodes) = graph::analyze(&g, &opts)?;
    if a.all {
        write_out(out, &format!("{}.nodes.tsv", snap_stem(&snap)), &nodes.to_tsv(&g))?;
    }
    let mut v = serde_json::to_value(&report)?;
    if let Some(m) = &a.metric {
        let field = v
            .get(m)
            .cloned()
            .ok_or_else(|| usage(format!("unknown metric {m:?}")))?;
        v = json!({ m.as_str(): field });
    } else if let Value::Object(o) = &mut v {
        o.insert("chain".into(), json!(snap.chain));
        o.insert("timestamp".into(), json!(format_ts(&snap.timestamp)));
    }
    print_json(&v)
}

fn degree_samples(g: &OverlayGraph, kind: DegreeKind) -> Vec<f64> {
    let (i, o) = (g.in_degrees(), g.out_degrees());
    (0..g.node_count())
        .map(|v| match kind {
            DegreeKind::In => i[v],
            DegreeKind::Out => o[v],
            DegreeKind::Total => i[v] + o[v],
        })
        .filter(|&d| d > 0)
        .map(|d| d as f64)
        .collect()
}

struct BatchFit {
    chain: String,
    label: String,
    n: usize,
    fit: Result<BestFit, fit::FitError>,
}

fn fit_cmd(a: &FitArgs) -> CliResult {
    if let Some(path) = &a.input {
        let xs = fit::parse_samples(&fs::read_to_string(path)?)?;
        return match a.family {
            Some(f) => print_json(&fit::fit(&xs, f, true)?),
            None => print_json(&fit::best_fit(&xs, true, a.p_threshold)?),
        };
    }
    let dir = a.dir.as_ref().ok_or_else(|| usage("fit needs --input or --dir"))?;
    let snaps = load_dir(dir)?;
    let mut batches: Vec<(String, String, Vec<f64>)> = Vec::new();
    match a.kind {
        FitKind::Degree => {
            for s in &snaps {
                batches.push((s.chain.clone(), format_ts(&s.timestamp), degree_samples(&build_graph(s), a.degree)));
            }
        }
        FitKind::Session => {
            let mut by_chain: BTreeMap<&str, Vec<EdgeSetSnapshot>> = BTreeMap::new();
            for s in &snaps {
                by_chain.entry(&s.chain).or_default().push(s.clone());
            }
            for (chain, ss) in by_chain {
                let m = PresenceMatrix::from_snapshots(&ss)?;
                let periods = churn::split_periods(&m.timestamps, a.periods, &[])?;
                for (i, cols) in periods.iter().enumerate() {
                    let lengths = churn::sessions(&m, cols).iter().map(|s| s.length as f64).collect();
                    batches.push((chain.to_string(), format!("period{}", i + 1), lengths));
                }
            }
        }
    }
    use rayon::prelude::*;
    let results: Vec<BatchFit> = batches
        .par_iter()
        .map(|(chain, label, xs)| BatchFit {
            chain: chain.clone(),
            label: label.clone(),
            n: xs.len(),
            fit: fit::best_fit(xs, true, a.p_threshold),
        })
        .collect();
    let mut per_chain: BTreeMap<&str, Vec<BestFit>> = BTreeMap::new();
    for r in &results {
        if let Ok(b) = &r.fit {
            per_chain.entry(&r.chain).or_default().push(b.clone());
        }
    }
    let tally: BTreeMap<String, BTreeMap<String, f64>> =
        per_chain.iter().map(|(c, v)| (c.to_string(), fit::tally(v))).collect();
    let results: Vec<Value> = results
        .into_iter()
        .map(|r| json!({"chain": r.chain, "label": r.label, "n": r.n, "result": or_error(r.fit)}))
        .collect();
    print_json(&json!({ "results": results, "tally": tally }))
}

fn overlap_cmd(a: &OverlapArgs, seed: u64, out: Option<&Path>) -> CliResult {
    let snaps = load_dir(&a.dir)?;
    let all = !(a.aggregate || a.series || a.kstest);
    let mut v = serde_json::Map::new();
    if all || a.aggregate {
        v.insert("aggregate".into(), serde_json::to_value(overlap::aggregate_overlaps(&snaps))?);
    }
    if all || a.series {
        let series = overlap::overlap_ratio_series(&snaps);
        let mut tsv = String::from("chain\ttimestamp\toverlapping\ttotal\tratio\n");
        for p in &series {
            let _ = writeln!(tsv, "{}\t{}\t{}\t{}\t{}", p.chain, format_ts(&p.timestamp), p.overlapping, p.total, p.ratio);
        }
        write_out(out, "overlap_ratio.tsv", &tsv)?;
        v.insert("series".into(), serde_json::to_value(series)?);
    }
    if all || a.kstest {
        let r = overlap::ks_overlap_report(&snaps, &overlap::DEFAULT_METRICS, &analyze_opts(seed));
        v.insert("kstest".into(), serde_json::to_value(r)?);
    }
    print_json(&Value::Object(v))
}

fn churn_cmd(a: &ChurnArgs, out: Option<&Path>) -> CliResult {
    let rule = match a.degree_rule.as_str() {
        "mean" => DegreeRule::Mean,
        "max" => DegreeRule::Max,
        other => return Err(usage(format!("unknown degree rule {other:?}"))),
    };
    let exclude = a
        .exclude
        .iter()
        .map(|t| parse_ts(t).ok_or_else(|| usage(format!("bad timestamp {t:?}"))))
        .collect::<CliResult<Vec<DateTime<Utc>>>>()?;
    let snaps = load_dir(&a.dir)?;
    let mut by_chain: BTreeMap<String, Vec<EdgeSetSnapshot>> = BTreeMap::new();
    for s in snaps {
        by_chain.entry(s.chain.clone()).or_default().push(s);
    }
    let mut report = BTreeMap::new();
    for (chain, ss) in &by_chain {
        let m = PresenceMatrix::from_snapshots(ss)?;
        let periods = churn::split_periods(&m.timestamps, a.periods, &exclude)?;
        let mut per = Vec::new();
        for (i, cols) in periods.iter().enumerate() {
            let sessions = churn::sessions(&m, cols);
            let hours: Vec<f64> = sessions.iter().map(|s| s.duration_secs as f64 / 3600.0).collect();
            let mut tsv = String::from("hours\tccdf\n");
            for (x, p) in churn::ccdf(&hours) {
                let _ = writeln!(tsv, "{x}\t{p}");
            }
            write_out(out, &format!("{chain}.period{}.sessions.tsv", i + 1), &tsv)?;
            let ud = churn::uptime_and_degree(&m, cols, rule);
            let pairs: Vec<(f64, f64)> = ud.values().copied().collect();
            per.push(json!({
                "period": i + 1,
                "from": format_ts(&m.timestamps[cols[0]]),
                "to": format_ts(&m.timestamps[*cols.last().unwrap()]),
                "sessions": sessions.len(),
                "correlation": or_error(churn::correlate(&pairs)),
                "jaccard": or_error(churn::uptime_degree_jaccard(&ud, a.top_frac)),
            }));
        }
        report.insert(chain.clone(), per);
    }
    print_json(&report)
}

#[derive(Serialize)]
struct AttackSummary {
    chain: String,
    timestamp: String,
    strategy: String,
    n_nodes: usize,
    initial_lcc: usize,
    nodes_to_50: Option<usize>,
    f_c: Option<f64>,
    complete: bool,
}

fn summarize(snap: &EdgeSetSnapshot, t: &resilience::AttackTrace) -> AttackSummary {
    AttackSummary {
        chain: snap.chain.clone(),
        timestamp: format_ts(&snap.timestamp),
        strategy: t.strategy.clone(),
        n_nodes: t.n_nodes,
        initial_lcc: t.initial_lcc,
        nodes_to_50: t.nodes_to_50,
        f_c: t.f_c,
        complete: t.complete,
    }
}

fn attack(a: &AttackArgs, seed: u64, out: Option<&Path>) -> CliResult {
    let popts = PercolateOptions {
        max_frac: a.max_frac,
        stride: a.stride,
        seed,
        ..Default::default()
    };
    let aopts = analyze_opts(seed);
    if a.strategy == "overlap" {
        let dir = a.dir.as_ref().ok_or_else(|| usage("overlap attack needs --dir"))?;
        let at = a.at.as_deref().ok_or_else(|| usage("overlap attack needs --at"))?;
        let ts = parse_ts(at).ok_or_else(|| usage(format!("bad timestamp {at:?}")))?;
        let snaps: Vec<EdgeSetSnapshot> = load_dir(dir)?.into_iter().filter(|s| s.timestamp == ts).collect();
        let refs: Vec<&EdgeSetSnapshot> = snaps.iter().collect();
        let bet: BTreeMap<String, BTreeMap<String, f64>> = snaps
            .iter()
            .map(|s| (s.chain.clone(), resilience::chain_betweenness(s, &aopts)))
            .collect();
        let keys = resilience::overlap_attack_order(&refs, &bet)?;
        let mut summaries = Vec::new();
        for s in &snaps {
            let g = build_graph(s);
            let t = resilience::percolate(&g, &resilience::order_for(&g, &keys), "overlap", &popts);
            write_out(out, &format!("{}.overlap.tsv", snap_stem(s)), &t.to_tsv())?;
            summaries.push(summarize(s, &t));
        }
        return print_json(&summaries);
    }
    let path = a.snapshot.as_ref().ok_or_else(|| usage("attack needs --snapshot"))?;
    let strategy: Strategy = a.strategy.parse().map_err(usage)?;
    let snap = snapstore::read_snapshot(path)?;
    let g = build_graph(&snap);
    let order = resilience::rank_nodes(&g, strategy, &aopts);
    let t = resilience::percolate(&g, &order, &strategy.name(), &popts);
    write_out(out, &format!("{}.{}.tsv", snap_stem(&snap), strategy.name().replace(':', "_")), &t.to_tsv())?;
    print_json(&summarize(&snap, &t))
}

fn cut(a: &CutArgs) -> CliResult {
    let snap = snapstore::read_snapshot(&a.snapshot)?;
    let g = build_graph(&snap);
    let c = if a.lcc {
        resilience::cut_of(&graph::lcc_projection(&g))?
    } else {
        resilience::fiedler_cut(&g)?
    };
    let mut v = serde_json::to_value(&c)?;
    if let Value::Object(o) = &mut v {
        o.insert("chain".into(), json!(snap.chain));
        o.insert("timestamp".into(), json!(format_ts(&snap.timestamp)));
    }
    print_json(&v)
}

fn audit(a: &AuditArgs) -> CliResult {
    let findings = snapstore::audit(&a.dir)?;
    if findings.is_empty() {
        return print_json(&json!({"clean": true}));
    }
    let list: Vec<Value> = findings
        .iter()
        .map(|f| json!({"path": f.path.display().to_string(), "line": f.line}))
        .collect();
    Err(CliError {
        code: 3,
        ..CliError::new("audit", format!("{} raw addresses found: {}", findings.len(), Value::Array(list)))
    })
}

fn keygen(a: &KeygenArgs) -> CliResult {
    let mut key = [0u8; 32];
    rand::rng().fill_bytes(&mut key);
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    use std::io::Write;
    opts.open(&a.out)?.write_all(&key)?;
    print_json(&json!({"written": a.out.display().to_string()}))
}
