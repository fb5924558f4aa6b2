//! Per-model majority verdicts compared against the expected detectability.

use std::collections::BTreeMap;
use std::fmt::Write;

use trustsim_core::analysis::Shape;
use trustsim_core::ThreatModel;

use crate::experiment::RunSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detectability {
    Detectable,
    NotDetectable,
    Oscillating,
    Inconclusive,
}

impl Detectability {
    pub fn expected(model: ThreatModel) -> Self {
        match model {
            ThreatModel::A | ThreatModel::B => Detectability::Detectable,
            ThreatModel::C | ThreatModel::D => Detectability::NotDetectable,
            ThreatModel::E | ThreatModel::F => Detectability::Oscillating,
        }
    }

    pub fn of(shape: Shape) -> Self {
        match shape {
            Shape::MonotoneDecrease | Shape::SpikeThenDecrease => Detectability::Detectable,
            Shape::SpikeThenPlateau => Detectability::NotDetectable,
            Shape::Oscillating => Detectability::Oscillating,
            Shape::Inconclusive => Detectability::Inconclusive,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Detectability::Detectable => "detectable",
            Detectability::NotDetectable => "not detectable",
            Detectability::Oscillating => "oscillating",
            Detectability::Inconclusive => "inconclusive",
        }
    }
}

/// Most frequent shape and its count; ties go to the shape listed first.
fn majority(shapes: &[Shape]) -> (Shape, usize) {
    let order = [
        Shape::MonotoneDecrease,
        Shape::SpikeThenDecrease,
        Shape::SpikeThenPlateau,
        Shape::Oscillating,
        Shape::Inconclusive,
    ];
    order
        .iter()
        .map(|&s| (s, shapes.iter().filter(|&&x| x == s).count()))
        .fold((Shape::Inconclusive, 0), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        })
}

pub fn render(summaries: &[RunSummary]) -> String {
    let mut by_model: BTreeMap<ThreatModel, Vec<Shape>> = BTreeMap::new();
    for s in summaries {
        by_model
            .entry(s.config.model)
            .or_default()
            .push(s.verdict.shape);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<32} {:<16} {:<16} match",
        "model: majority shape", "observed", "expected"
    );
    for (model, shapes) in &by_model {
        let (shape, count) = majority(shapes);
        let observed = Detectability::of(shape);
        let expected = Detectability::expected(*model);
        let row = format!("{model}: {shape} ({count}/{})", shapes.len());
        let _ = writeln!(
            out,
            "{row:<32} {:<16} {:<16} {}",
            observed.label(),
            expected.label(),
            if observed == expected { "yes" } else { "no" }
        );
    }
    out
}
