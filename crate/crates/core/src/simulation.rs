//! Run orchestration: network setup, the tick loop, and the trust time series.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, BehaviorContext, Camouflage, ThreatModel, ThreatModelSpec};
use crate::marketplace::{self, MarketError, MarketState, TransactionRecord};
use crate::network::{self, NetworkError, Roster, TradeGraph};
use crate::trust::{self, IterationParams, RatingLedger};

/// How often the global trust vector is recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecomputeMode {
    #[default]
    PerTick,
    PerTransaction,
}

/// Full parameter set of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: ThreatModel,
    pub seed: u64,
    pub nodes: usize,
    /// Initial out-degree of the trade graph.
    pub k: usize,
    /// Preferential-attachment base weight.
    pub alpha: f64,
    pub pretrust_count: usize,
    pub attacker_ratio: f64,
    pub spy_ratio: f64,
    pub c: f64,
    pub e: f64,
    pub f: f64,
    pub incubation_period: u32,
    pub total_ticks: u32,
    /// Purchases per tick; `None` means every node buys once per tick.
    pub transactions_per_tick: Option<usize>,
    pub recompute: RecomputeMode,
    pub damping: f64,
    pub eps: f64,
    pub max_iter: usize,
    /// Probability that a colluder deliberately trades with an ally.
    pub ally_bias: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            model: ThreatModel::A,
            seed: 0,
            nodes: 100,
            k: 2,
            alpha: 1.0,
            pretrust_count: 32,
            attacker_ratio: 0.10,
            spy_ratio: 0.5,
            c: 0.5,
            e: 0.5,
            f: 0.5,
            incubation_period: 50,
            total_ticks: 100,
            transactions_per_tick: None,
            recompute: RecomputeMode::PerTick,
            damping: 0.1,
            eps: 1e-6,
            max_iter: 1000,
            ally_bias: 0.5,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

impl SimConfig {
    /// Checks every field and reports all failures at once.
    pub fn validate(&self) -> Result<(), SimError> {
        let mut problems = Vec::new();
        let mut prob = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                problems.push(format!("{name} = {v} is not a probability"));
            }
        };
        prob("attacker_ratio", self.attacker_ratio);
        prob("spy_ratio", self.spy_ratio);
        prob("c", self.c);
        prob("e", self.e);
        prob("f", self.f);
        prob("damping", self.damping);
        prob("ally_bias", self.ally_bias);
        if self.nodes < 2 {
            problems.push(format!("nodes = {} leaves no counterparty", self.nodes));
        }
        if self.k == 0 || self.k >= self.nodes {
            problems.push(format!("k = {} must be in 1..nodes", self.k));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            problems.push(format!("alpha = {} must be positive", self.alpha));
        }
        if self.incubation_period > self.total_ticks {
            problems.push(format!(
                "incubation_period = {} exceeds total_ticks = {}",
                self.incubation_period, self.total_ticks
            ));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            problems.push(format!("eps = {} must be positive", self.eps));
        }
        if self.max_iter == 0 {
            problems.push("max_iter must be at least 1".to_string());
        }
        if self.transactions_per_tick == Some(0) {
            problems.push("transactions_per_tick must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(problems))
        }
    }

    pub fn threat_spec(&self) -> ThreatModelSpec {
        ThreatModelSpec::new(
            self.model,
            Camouflage {
                c: self.c,
                e: self.e,
                f: self.f,
            },
        )
    }

    pub fn iteration_params(&self) -> IterationParams {
        IterationParams {
            damping: self.damping,
            eps: self.eps,
            max_iter: self.max_iter,
        }
    }
}

/// Independent random streams derived from one seed, so that changing how
/// one subsystem draws does not shift another's sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Graph = 1,
    Roles = 2,
    Adjacency = 3,
    Shuffle = 4,
    Selection = 5,
    Behavior = 6,
    Reports = 7,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSnapshot {
    pub tick: u32,
    pub trust: Vec<f64>,
    pub attacker_mean: f64,
    pub normal_mean: f64,
    pub converged: bool,
}

/// Global trust after every tick; entry 0 is the state before any purchase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrustTimeSeries {
    pub snapshots: Vec<TickSnapshot>,
}

impl TrustTimeSeries {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn attacker_means(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.attacker_mean).collect()
    }

    pub fn normal_means(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.normal_mean).collect()
    }

    /// Trust of one node over time.
    pub fn node_series(&self, id: usize) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.trust[id]).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.snapshots.iter().all(|s| s.converged)
    }

    /// `tick,node_0,...,node_{n-1}`
    pub fn write_trust_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.snapshots.first().map_or(0, |s| s.trust.len());
        write!(out, "tick")?;
        for i in 0..n {
            write!(out, ",node_{i}")?;
        }
        writeln!(out)?;
        for snap in &self.snapshots {
            write!(out, "{}", snap.tick)?;
            for x in &snap.trust {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// `tick,attacker_mean,normal_mean`
    pub fn write_cohorts_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "tick,attacker_mean,normal_mean")?;
        for snap in &self.snapshots {
            writeln!(
                out,
                "{},{},{}",
                snap.tick, snap.attacker_mean, snap.normal_mean
            )?;
        }
        Ok(())
    }
}

fn mean_over(trust: &[f64], ids: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    ids.iter().map(|&i| trust[i]).sum::<f64>() / ids.len() as f64
}

/// Per-tick mean trust of the malicious cohort and of the normal cohort.
pub fn cohort_means(series: &TrustTimeSeries, roster: &Roster) -> (Vec<f64>, Vec<f64>) {
    let malicious = roster.malicious_ids();
    let normal = roster.normal_ids();
    series
        .snapshots
        .iter()
        .map(|s| {
            (
                mean_over(&s.trust, &malicious),
                mean_over(&s.trust, &normal),
            )
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub config: SimConfig,
    pub roster: Roster,
    pub initial_graph: TradeGraph,
    pub series: TrustTimeSeries,
    pub transactions: Vec<TransactionRecord>,
}

/// Builds the network and roster for a config.
pub fn build_network(config: &SimConfig) -> Result<(TradeGraph, Roster), SimError> {
    let roster = network::assign_roles(
        config.nodes,
        config.attacker_ratio,
        config.spy_ratio,
        config.pretrust_count,
        config.model,
        &mut stream_rng(config.seed, Stream::Roles),
    )?;
    let mut graph = network::generate_k_out_graph(
        config.nodes,
        config.k,
        config.alpha,
        &mut stream_rng(config.seed, Stream::Graph),
    )?;
    network::ensure_attacker_adjacency(
        &mut graph,
        &roster,
        &mut stream_rng(config.seed, Stream::Adjacency),
    );
    Ok((graph, roster))
}

struct TrustEngine<'a> {
    roster: &'a Roster,
    spec: ThreatModelSpec,
    pretrust: Vec<f64>,
    params: IterationParams,
    malicious: Vec<usize>,
    normal: Vec<usize>,
    rng: ChaCha8Rng,
}

impl TrustEngine<'_> {
    /// One trust round: collect each node's reported opinions and iterate.
    fn compute(&mut self, ledger: &RatingLedger, ctx: &BehaviorContext) -> trust::GlobalTrust {
        let reports = agents::report_stances(self.roster, ctx, &self.spec, &mut self.rng);
        let c = if reports.iter().all(|r| *r == agents::Report::Honest) {
            trust::local_trust_matrix(ledger, &self.pretrust)
        } else {
            let reported = agents::reported_ledger(ledger, self.roster, &self.spec, &reports);
            trust::local_trust_matrix(&reported, &self.pretrust)
        };
        trust::compute_global_trust(&c, &self.pretrust, &self.params)
    }

    fn snapshot(&self, tick: u32, global: trust::GlobalTrust) -> TickSnapshot {
        TickSnapshot {
            tick,
            attacker_mean: mean_over(&global.scores, &self.malicious),
            normal_mean: mean_over(&global.scores, &self.normal),
            converged: global.converged,
            trust: global.scores,
        }
    }
}

/// Runs one simulation.
///
/// Tick 0 records the trust of the empty ledger. In each following tick the
/// buyers act in a freshly shuffled order, after which trust is recomputed
/// (or after every purchase in [`RecomputeMode::PerTransaction`]).
pub fn run_simulation(config: &SimConfig) -> Result<SimulationOutput, SimError> {
    config.validate()?;
    let (initial_graph, roster) = build_network(config)?;
    let spec = config.threat_spec();
    let n = config.nodes;

    let mut engine = TrustEngine {
        roster: &roster,
        spec,
        pretrust: trust::pretrust_vector(roster.pretrusted()),
        params: config.iteration_params(),
        malicious: roster.malicious_ids(),
        normal: roster.normal_ids(),
        rng: stream_rng(config.seed, Stream::Reports),
    };

    let mut state = MarketState {
        ledger: RatingLedger::new(n),
        graph: initial_graph.clone(),
    };
    let mut shuffle_rng = stream_rng(config.seed, Stream::Shuffle);
    let mut selection_rng = stream_rng(config.seed, Stream::Selection);
    let mut behavior_rng = stream_rng(config.seed, Stream::Behavior);

    let per_tick = config.transactions_per_tick.unwrap_or(n);
    let mut transactions = Vec::with_capacity(per_tick * config.total_ticks as usize);
    let mut series = TrustTimeSeries::default();

    let ctx0 = BehaviorContext {
        tick: 0,
        incubation_period: config.incubation_period,
    };
    let mut current = engine.compute(&state.ledger, &ctx0);
    let mut trust = current.scores.clone();
    series.snapshots.push(engine.snapshot(0, current));

    let mut order: Vec<usize> = (0..n).collect();
    for tick in 1..=config.total_ticks {
        let ctx = BehaviorContext {
            tick,
            incubation_period: config.incubation_period,
        };
        for i in 0..per_tick {
            if i % n == 0 {
                order.shuffle(&mut shuffle_rng);
            }
            let buyer = order[i % n];
            let seller = marketplace::select_seller(
                buyer,
                &state.graph,
                &trust,
                &roster,
                &spec,
                &ctx,
                config.ally_bias,
                &mut selection_rng,
            )?;
            let record = marketplace::execute_transaction(
                buyer,
                seller,
                &mut state,
                &roster,
                &spec,
                &ctx,
                &mut behavior_rng,
            )?;
            transactions.push(record);
            if config.recompute == RecomputeMode::PerTransaction {
                trust = engine.compute(&state.ledger, &ctx).scores;
            }
        }
        current = engine.compute(&state.ledger, &ctx);
        trust.clone_from(&current.scores);
        series.snapshots.push(engine.snapshot(tick, current));
    }

    Ok(SimulationOutput {
        config: config.clone(),
        roster,
        initial_graph,
        series,
        transactions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: ThreatModel, seed: u64) -> SimConfig {
        SimConfig {
            model,
            seed,
            nodes: 30,
            pretrust_count: 8,
            total_ticks: 20,
            incubation_period: 10,
            ..SimConfig::default()
        }
    }

    #[test]
    fn defaults_match_reference_parameters() {
        let c = SimConfig::default();
        assert_eq!(c.nodes, 100);
        assert_eq!(c.pretrust_count, 32);
        assert_eq!(c.attacker_ratio, 0.10);
        assert_eq!(c.spy_ratio, 0.5);
        assert_eq!((c.c, c.e, c.f), (0.5, 0.5, 0.5));
        assert_eq!(c.incubation_period, 50);
        assert_eq!(c.total_ticks, 100);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn validation_lists_every_problem() {
        let c = SimConfig {
            c: 1.5,
            damping: -0.1,
            incubation_period: 200,
            ..SimConfig::default()
        };
        match c.validate() {
            Err(SimError::InvalidConfig(problems)) => assert_eq!(problems.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_run_has_only_initial_state() {
        let cfg = SimConfig {
            total_ticks: 0,
            incubation_period: 0,
            ..small(ThreatModel::A, 1)
        };
        let out = run_simulation(&cfg).unwrap();
        assert_eq!(out.series.len(), 1);
        assert!(out.transactions.is_empty());
        let p = trust::pretrust_vector(out.roster.pretrusted());
        assert_eq!(out.series.snapshots[0].trust, p);
    }

    #[test]
    fn every_node_buys_once_per_tick() {
        let out = run_simulation(&small(ThreatModel::E, 3)).unwrap();
        assert_eq!(out.series.len(), 21);
        assert_eq!(out.transactions.len(), 30 * 20);
        for tick in 1..=20 {
            let mut buyers: Vec<usize> = out
                .transactions
                .iter()
                .filter(|r| r.tick == tick)
                .map(|r| r.buyer)
                .collect();
            buyers.sort_unstable();
            assert_eq!(buyers, (0..30).collect::<Vec<_>>());
        }
        for snap in &out.series.snapshots {
            assert!((snap.trust.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_transaction_ticks() {
        let cfg = SimConfig {
            transactions_per_tick: Some(1),
            recompute: RecomputeMode::PerTransaction,
            ..small(ThreatModel::B, 4)
        };
        let out = run_simulation(&cfg).unwrap();
        assert_eq!(out.transactions.len(), 20);
    }

    #[test]
    fn graph_only_grows() {
        let out = run_simulation(&small(ThreatModel::C, 5)).unwrap();
        let mut graph = out.initial_graph.clone();
        for r in &out.transactions {
            graph.add_edge(r.buyer, r.seller);
        }
        for (u, v) in out.initial_graph.edges() {
            assert!(graph.has_edge(u, v));
        }
    }

    #[test]
    fn same_seed_same_run() {
        let a = run_simulation(&small(ThreatModel::F, 11)).unwrap();
        let b = run_simulation(&small(ThreatModel::F, 11)).unwrap();
        assert_eq!(a, b);
        let c = run_simulation(&small(ThreatModel::F, 12)).unwrap();
        assert_ne!(a.transactions, c.transactions);
    }

    #[test]
    fn cohort_means_of_uniform_and_point_mass() {
        let mut roles = vec![network::Role::Normal; 100];
        roles[10..20].fill(network::Role::Attacker);
        let roster = Roster::new(roles, vec![false; 100]);
        let uniform = TickSnapshot {
            tick: 0,
            trust: vec![0.01; 100],
            attacker_mean: 0.0,
            normal_mean: 0.0,
            converged: true,
        };
        let mut point = uniform.clone();
        point.trust = vec![0.0; 100];
        point.trust[12] = 1.0;
        let series = TrustTimeSeries {
            snapshots: vec![uniform, point],
        };
        let (att, norm) = cohort_means(&series, &roster);
        assert!((att[0] - 0.01).abs() < 1e-15 && (norm[0] - 0.01).abs() < 1e-15);
        assert!((att[1] - 0.1).abs() < 1e-15);
        assert_eq!(norm[1], 0.0);
    }

    #[test]
    fn stored_cohort_means_match_recomputation() {
        let out = run_simulation(&small(ThreatModel::D, 2)).unwrap();
        let (att, norm) = cohort_means(&out.series, &out.roster);
        assert_eq!(att, out.series.attacker_means());
        assert_eq!(norm, out.series.normal_means());
    }

    #[test]
    fn csv_headers() {
        let out = run_simulation(&SimConfig {
            total_ticks: 1,
            incubation_period: 1,
            ..small(ThreatModel::A, 0)
        })
        .unwrap();
        let mut buf = Vec::new();
        out.series.write_trust_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("tick,node_0,node_1,"));
        assert!(header.ends_with(",node_29"));
        assert_eq!(text.lines().count(), 3);
        let mut buf = Vec::new();
        out.series.write_cohorts_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("tick,attacker_mean,normal_mean\n0,"));
    }
}
