//! The per-transaction protocol: choose a seller, deliver, rate both ways.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, BehaviorContext, Quality, ThreatModelSpec};
use crate::network::{Roster, TradeGraph};
use crate::trust::{NodeId, RatingLedger, TrustError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarketError {
    #[error("no counterparty: a marketplace needs at least two nodes (n = {0})")]
    NoCounterparty(usize),
    #[error("buyer {0} cannot trade with itself")]
    SelfTrade(NodeId),
    #[error(transparent)]
    Rating(#[from] TrustError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub tick: u32,
    pub buyer: NodeId,
    pub seller: NodeId,
    pub quality: Quality,
    pub buyer_rating: bool,
    pub seller_rating: bool,
}

pub const TRANSACTION_CSV_HEADER: &str = "tick,buyer,seller,quality,buyer_rating,seller_rating";

/// Writes the transaction log as CSV.
pub fn write_transactions_csv<W: Write>(log: &[TransactionRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRANSACTION_CSV_HEADER}")?;
    for r in log {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.tick, r.buyer, r.seller, r.quality, r.buyer_rating, r.seller_rating
        )?;
    }
    Ok(())
}

/// Mutable marketplace state touched by a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketState {
    pub ledger: RatingLedger,
    pub graph: TradeGraph,
}

/// Samples one candidate with probability proportional to its trust score,
/// or uniformly when every candidate has zero trust.
///
/// Panics on an empty candidate list.
pub fn sample_by_trust<R: Rng + ?Sized>(
    candidates: &[NodeId],
    trust: &[f64],
    rng: &mut R,
) -> NodeId {
    assert!(!candidates.is_empty(), "cannot sample from an empty pool");
    let total: f64 = candidates.iter().map(|&c| trust[c].max(0.0)).sum();
    if total <= 0.0 {
        return candidates[rng.gen_range(0..candidates.len())];
    }
    let mut target = rng.gen::<f64>() * total;
    let mut last_positive = candidates[0];
    for &c in candidates {
        let w = trust[c].max(0.0);
        if w <= 0.0 {
            continue;
        }
        last_positive = c;
        if target < w {
            return c;
        }
        target -= w;
    }
    last_positive
}

/// Two-stage seller choice.
///
/// With probability one half the pool is the buyer's proven partners (its
/// out-neighbors), otherwise every other node; an empty pool falls through to
/// the other one. A seller is then drawn from the pool with probability
/// proportional to trust. Post-incubation colluders first divert to a random
/// ally with probability `ally_bias`.
#[allow(clippy::too_many_arguments)]
pub fn select_seller<R: Rng + ?Sized>(
    buyer: NodeId,
    graph: &TradeGraph,
    trust: &[f64],
    roster: &Roster,
    spec: &ThreatModelSpec,
    ctx: &BehaviorContext,
    ally_bias: f64,
    rng: &mut R,
) -> Result<NodeId, MarketError> {
    let n = graph.node_count();
    if n < 2 {
        return Err(MarketError::NoCounterparty(n));
    }
    let role = roster.role(buyer);
    if ctx.attacks_active() && spec.collusion && role.is_malicious() && ally_bias > 0.0 {
        let allies: Vec<NodeId> = roster
            .malicious_ids()
            .into_iter()
            .filter(|&v| v != buyer)
            .collect();
        if !allies.is_empty() && rng.gen::<f64>() < ally_bias {
            return Ok(allies[rng.gen_range(0..allies.len())]);
        }
    }

    let proven: Vec<NodeId> = graph
        .out_neighbors(buyer)
        .iter()
        .copied()
        .filter(|&v| v != buyer)
        .collect();
    let unproven: Vec<NodeId> = (0..n)
        .filter(|&v| v != buyer && !graph.has_edge(buyer, v))
        .collect();
    let prefer_proven = rng.gen::<f64>() < 0.5;
    let pool = match (prefer_proven, proven.is_empty(), unproven.is_empty()) {
        (true, false, _) | (false, false, true) => &proven,
        _ => &unproven,
    };
    Ok(sample_by_trust(pool, trust, rng))
}

/// Runs one purchase: service, buyer rating, seller satisfaction rating, then
/// records both ratings and the `buyer -> seller` edge.
pub fn execute_transaction<R: Rng + ?Sized>(
    buyer: NodeId,
    seller: NodeId,
    state: &mut MarketState,
    roster: &Roster,
    spec: &ThreatModelSpec,
    ctx: &BehaviorContext,
    rng: &mut R,
) -> Result<TransactionRecord, MarketError> {
    if buyer == seller {
        return Err(MarketError::SelfTrade(buyer));
    }
    let (buyer_role, seller_role) = (roster.role(buyer), roster.role(seller));
    let quality = agents::service_quality(seller_role, buyer_role, ctx, spec, rng);
    let buyer_rating = agents::buyer_rating(buyer_role, seller_role, quality, ctx, spec, rng);
    let seller_rating = agents::seller_rating(
        seller_role,
        buyer_role,
        quality,
        buyer_rating,
        ctx,
        spec,
        rng,
    );
    state.ledger.record_rating(buyer, seller, buyer_rating)?;
    state.ledger.record_rating(seller, buyer, seller_rating)?;
    state.graph.add_edge(buyer, seller);
    Ok(TransactionRecord {
        tick: ctx.tick,
        buyer,
        seller,
        quality,
        buyer_rating,
        seller_rating,
    })
}
