//! Behavior policies for normal users and the six threat models.
//!
//! | model | attacker service / rating attack | spy service / rating attack | collusion |
//! |-------|----------------------------------|-----------------------------|-----------|
//! | A     | 1 / 1                            | -                           | no        |
//! | B     | 1 / 1                            | -                           | yes       |
//! | C     | 1-c / 0                          | -                           | yes       |
//! | D     | 1 / 0                            | 0 / 1                       | yes       |
//! | E     | 1-c / 1-e                        | -                           | yes       |
//! | F     | 1 / 0                            | 0 / 1-f                     | yes       |
//!
//! Attackers and spies behave exactly like normal users until the incubation
//! period has elapsed.
//!
//! Colluders also shape the opinions they submit to the trust computation.
//! Once a round, each colluder either reports its honest opinion row or a
//! collusive row that vouches for allies only. Model E attackers and Model F
//! spies report honestly with probability `e` and `f` respectively; every
//! other colluder always reports collusively.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::network::{Role, Roster};
use crate::trust::RatingLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ThreatModel {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl ThreatModel {
    pub const ALL: [ThreatModel; 6] = [
        ThreatModel::A,
        ThreatModel::B,
        ThreatModel::C,
        ThreatModel::D,
        ThreatModel::E,
        ThreatModel::F,
    ];

    pub fn has_spies(self) -> bool {
        matches!(self, ThreatModel::D | ThreatModel::F)
    }

    pub fn colludes(self) -> bool {
        !matches!(self, ThreatModel::A)
    }
}

impl fmt::Display for ThreatModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ThreatModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ThreatModel::A),
            "B" => Ok(ThreatModel::B),
            "C" => Ok(ThreatModel::C),
            "D" => Ok(ThreatModel::D),
            "E" => Ok(ThreatModel::E),
            "F" => Ok(ThreatModel::F),
            other => Err(format!("unknown threat model {other:?} (expected A-F)")),
        }
    }
}

/// Camouflage probabilities: the chance an attacker skips an attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camouflage {
    pub c: f64,
    pub e: f64,
    pub f: f64,
}

impl Default for Camouflage {
    fn default() -> Self {
        Self {
            c: 0.5,
            e: 0.5,
            f: 0.5,
        }
    }
}

/// Attack probabilities for one malicious role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackProfile {
    pub service: f64,
    pub rating: f64,
    /// Chance of submitting an honest opinion row in a trust round.
    pub honest_report: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreatModelSpec {
    pub model: ThreatModel,
    pub attacker: AttackProfile,
    pub spy: AttackProfile,
    pub collusion: bool,
    pub has_spies: bool,
}

impl ThreatModelSpec {
    pub fn new(model: ThreatModel, camo: Camouflage) -> Self {
        let profile = |service, rating, honest_report| AttackProfile {
            service,
            rating,
            honest_report,
        };
        let (attacker, spy) = match model {
            // Model A does not collude, so its reports are always honest.
            ThreatModel::A => (profile(1.0, 1.0, 1.0), profile(1.0, 1.0, 1.0)),
            ThreatModel::B => (profile(1.0, 1.0, 0.0), profile(1.0, 1.0, 0.0)),
            ThreatModel::C => (
                profile(1.0 - camo.c, 0.0, 0.0),
                profile(1.0 - camo.c, 0.0, 0.0),
            ),
            ThreatModel::D => (profile(1.0, 0.0, 0.0), profile(0.0, 1.0, 0.0)),
            ThreatModel::E => (
                profile(1.0 - camo.c, 1.0 - camo.e, camo.e),
                profile(1.0 - camo.c, 1.0 - camo.e, camo.e),
            ),
            ThreatModel::F => (profile(1.0, 0.0, 0.0), profile(0.0, 1.0 - camo.f, camo.f)),
        };
        Self {
            model,
            attacker,
            spy,
            collusion: model.colludes(),
            has_spies: model.has_spies(),
        }
    }

    /// Attack profile for a role; `None` for normal users.
    pub fn profile(&self, role: Role) -> Option<AttackProfile> {
        match role {
            Role::Normal => None,
            Role::Attacker => Some(self.attacker),
            Role::Spy => Some(self.spy),
        }
    }

    /// Whether two roles belong to the same colluding group.
    pub fn allies(&self, a: Role, b: Role) -> bool {
        self.collusion && a.is_malicious() && b.is_malicious()
    }
}

/// Time context of a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorContext {
    pub tick: u32,
    pub incubation_period: u32,
}

impl BehaviorContext {
    pub fn attacks_active(&self) -> bool {
        self.tick >= self.incubation_period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quality {
    Good,
    Defective,
}

impl Quality {
    pub fn is_good(self) -> bool {
        self == Quality::Good
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quality::Good => "good",
            Quality::Defective => "defective",
        })
    }
}

/// `true` with probability `p`. Certain outcomes consume no randomness.
fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.gen::<f64>() < p
    }
}

/// Quality of the product the seller ships.
pub fn service_quality<R: Rng + ?Sized>(
    seller: Role,
    buyer: Role,
    ctx: &BehaviorContext,
    spec: &ThreatModelSpec,
    rng: &mut R,
) -> Quality {
    let Some(profile) = spec.profile(seller) else {
        return Quality::Good;
    };
    if !ctx.attacks_active() || spec.allies(seller, buyer) {
        return Quality::Good;
    }
    if bernoulli(rng, profile.service) {
        Quality::Defective
    } else {
        Quality::Good
    }
}

/// The buyer's rating of the seller (`true` = satisfied).
pub fn buyer_rating<R: Rng + ?Sized>(
    buyer: Role,
    seller: Role,
    quality: Quality,
    ctx: &BehaviorContext,
    spec: &ThreatModelSpec,
    rng: &mut R,
) -> bool {
    let honest = quality.is_good();
    let Some(profile) = spec.profile(buyer) else {
        return honest;
    };
    if !ctx.attacks_active() {
        return honest;
    }
    if spec.allies(buyer, seller) {
        return true;
    }
    if bernoulli(rng, profile.rating) {
        false
    } else {
        honest
    }
}

/// The seller's satisfaction rating of the buyer.
///
/// An honest seller rates the buyer down only for a detectably unfair
/// complaint: a bad rating for a good product. Seller-side rating attacks are
/// part of collusive behavior only; an independent attacker (Model A) rates
/// its buyers like a normal seller.
pub fn seller_rating<R: Rng + ?Sized>(
    seller: Role,
    buyer: Role,
    quality: Quality,
    buyer_rating_value: bool,
    ctx: &BehaviorContext,
    spec: &ThreatModelSpec,
    rng: &mut R,
) -> bool {
    let honest = !(quality.is_good() && !buyer_rating_value);
    let Some(profile) = spec.profile(seller) else {
        return honest;
    };
    if !ctx.attacks_active() || !spec.collusion {
        return honest;
    }
    if spec.allies(seller, buyer) {
        return true;
    }
    if bernoulli(rng, profile.rating) {
        false
    } else {
        honest
    }
}

/// The opinion row a node submits in one trust round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Report {
    Honest,
    /// Positive opinions of allies only.
    Collusive,
}

/// Draws the report stance of a node for the current trust round.
pub fn report_stance<R: Rng + ?Sized>(
    role: Role,
    ctx: &BehaviorContext,
    spec: &ThreatModelSpec,
    rng: &mut R,
) -> Report {
    match spec.profile(role) {
        Some(profile) if spec.collusion && ctx.attacks_active() => {
            if bernoulli(rng, profile.honest_report) {
                Report::Honest
            } else {
                Report::Collusive
            }
        }
        _ => Report::Honest,
    }
}

/// Draws one stance per node, in id order.
pub fn report_stances<R: Rng + ?Sized>(
    roster: &Roster,
    ctx: &BehaviorContext,
    spec: &ThreatModelSpec,
    rng: &mut R,
) -> Vec<Report> {
    roster
        .roles()
        .iter()
        .map(|&role| report_stance(role, ctx, spec, rng))
        .collect()
}

/// The ledger as submitted to the trust computation.
///
/// A collusive row keeps its positive entries for allies and drops every
/// other entry. If it holds no positive opinion of any ally yet, it vouches
/// for all allies equally.
pub fn reported_ledger(
    ledger: &RatingLedger,
    roster: &Roster,
    spec: &ThreatModelSpec,
    reports: &[Report],
) -> RatingLedger {
    let mut out = ledger.clone();
    let n = ledger.node_count();
    for (i, report) in reports.iter().enumerate() {
        if *report == Report::Honest {
            continue;
        }
        let ally = |j: usize| j != i && spec.allies(roster.role(i), roster.role(j));
        let vouched = (0..n).any(|j| ally(j) && ledger.get(i, j) > 0);
        for j in (0..n).filter(|&j| j != i) {
            let value = match (ally(j), vouched) {
                (true, true) => ledger.get(i, j).max(0),
                (true, false) => 1,
                (false, _) => 0,
            };
            out.set(i, j, value).expect("ids within ledger");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ATTACK: BehaviorContext = BehaviorContext {
        tick: 60,
        incubation_period: 50,
    };
    const INCUBATING: BehaviorContext = BehaviorContext {
        tick: 10,
        incubation_period: 50,
    };

    fn spec(model: ThreatModel) -> ThreatModelSpec {
        ThreatModelSpec::new(model, Camouflage::default())
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn table_of_attack_probabilities() {
        let s = spec(ThreatModel::A);
        assert!(!s.collusion && !s.has_spies);
        assert_eq!((s.attacker.service, s.attacker.rating), (1.0, 1.0));
        let s = spec(ThreatModel::C);
        assert!(s.collusion);
        assert_eq!((s.attacker.service, s.attacker.rating), (0.5, 0.0));
        let s = spec(ThreatModel::D);
        assert!(s.has_spies);
        assert_eq!((s.attacker.service, s.attacker.rating), (1.0, 0.0));
        assert_eq!((s.spy.service, s.spy.rating), (0.0, 1.0));
        let s = ThreatModelSpec::new(
            ThreatModel::E,
            Camouflage {
                c: 0.2,
                e: 0.7,
                f: 0.0,
            },
        );
        assert!((s.attacker.service - 0.8).abs() < 1e-12);
        assert!((s.attacker.rating - 0.3).abs() < 1e-12);
        let s = spec(ThreatModel::F);
        assert_eq!((s.spy.service, s.spy.rating), (0.0, 0.5));
    }

    #[test]
    fn model_parsing() {
        assert_eq!("e".parse::<ThreatModel>().unwrap(), ThreatModel::E);
        assert!("G".parse::<ThreatModel>().is_err());
        assert_eq!(ThreatModel::B.to_string(), "B");
    }

    #[test]
    fn model_a_attacker_ships_defective_after_incubation() {
        let s = spec(ThreatModel::A);
        let q = service_quality(Role::Attacker, Role::Normal, &ATTACK, &s, &mut rng());
        assert_eq!(q, Quality::Defective);
        let q = service_quality(Role::Attacker, Role::Normal, &INCUBATING, &s, &mut rng());
        assert_eq!(q, Quality::Good);
    }

    #[test]
    fn model_a_attackers_do_not_spare_each_other() {
        let s = spec(ThreatModel::A);
        let q = service_quality(Role::Attacker, Role::Attacker, &ATTACK, &s, &mut rng());
        assert_eq!(q, Quality::Defective);
        assert!(!buyer_rating(
            Role::Attacker,
            Role::Attacker,
            Quality::Good,
            &ATTACK,
            &s,
            &mut rng()
        ));
    }

    #[test]
    fn model_c_service_attack_is_camouflaged() {
        let s = spec(ThreatModel::C);
        let mut r = rng();
        let defective = (0..10_000)
            .filter(|_| {
                service_quality(Role::Attacker, Role::Normal, &ATTACK, &s, &mut r)
                    == Quality::Defective
            })
            .count();
        let freq = defective as f64 / 10_000.0;
        assert!((freq - 0.5).abs() < 0.03, "frequency {freq}");
    }

    #[test]
    fn normal_buyer_is_honest() {
        let s = spec(ThreatModel::B);
        assert!(!buyer_rating(
            Role::Normal,
            Role::Attacker,
            Quality::Defective,
            &ATTACK,
            &s,
            &mut rng()
        ));
        assert!(buyer_rating(
            Role::Normal,
            Role::Normal,
            Quality::Good,
            &ATTACK,
            &s,
            &mut rng()
        ));
    }

    #[test]
    fn colluders_praise_each_other() {
        let s = spec(ThreatModel::B);
        for quality in [Quality::Good, Quality::Defective] {
            assert!(buyer_rating(
                Role::Attacker,
                Role::Attacker,
                quality,
                &ATTACK,
                &s,
                &mut rng()
            ));
        }
        assert!(seller_rating(
            Role::Attacker,
            Role::Attacker,
            Quality::Good,
            true,
            &ATTACK,
            &s,
            &mut rng()
        ));
    }

    #[test]
    fn model_d_spy_always_rates_normal_seller_down() {
        let s = spec(ThreatModel::D);
        let mut r = rng();
        for _ in 0..100 {
            assert!(!buyer_rating(
                Role::Spy,
                Role::Normal,
                Quality::Good,
                &ATTACK,
                &s,
                &mut r
            ));
        }
        assert_eq!(
            service_quality(Role::Spy, Role::Normal, &ATTACK, &s, &mut r),
            Quality::Good
        );
    }

    #[test]
    fn honest_seller_punishes_only_unfair_complaints() {
        let s = spec(ThreatModel::A);
        let mut r = rng();
        assert!(!seller_rating(
            Role::Normal,
            Role::Attacker,
            Quality::Good,
            false,
            &ATTACK,
            &s,
            &mut r
        ));
        assert!(seller_rating(
            Role::Normal,
            Role::Normal,
            Quality::Defective,
            false,
            &ATTACK,
            &s,
            &mut r
        ));
        assert!(seller_rating(
            Role::Normal,
            Role::Normal,
            Quality::Good,
            true,
            &ATTACK,
            &s,
            &mut r
        ));
    }

    #[test]
    fn incubating_attackers_behave_like_normal_users() {
        let mut r = rng();
        for model in ThreatModel::ALL {
            let s = spec(model);
            for role in [Role::Attacker, Role::Spy] {
                for other in [Role::Normal, Role::Attacker] {
                    assert_eq!(
                        service_quality(role, other, &INCUBATING, &s, &mut r),
                        Quality::Good
                    );
                    for q in [Quality::Good, Quality::Defective] {
                        assert_eq!(
                            buyer_rating(role, other, q, &INCUBATING, &s, &mut r),
                            buyer_rating(Role::Normal, other, q, &INCUBATING, &s, &mut r)
                        );
                        for br in [true, false] {
                            assert_eq!(
                                seller_rating(role, other, q, br, &INCUBATING, &s, &mut r),
                                seller_rating(Role::Normal, other, q, br, &INCUBATING, &s, &mut r)
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn collusion_closure() {
        let mut r = rng();
        for model in &ThreatModel::ALL[1..] {
            let s = spec(*model);
            for seller in [Role::Attacker, Role::Spy] {
                for buyer in [Role::Attacker, Role::Spy] {
                    for _ in 0..200 {
                        let q = service_quality(seller, buyer, &ATTACK, &s, &mut r);
                        assert_eq!(q, Quality::Good);
                        let br = buyer_rating(buyer, seller, q, &ATTACK, &s, &mut r);
                        assert!(br);
                        assert!(seller_rating(seller, buyer, q, br, &ATTACK, &s, &mut r));
                    }
                }
            }
        }
    }

    fn roster_with_pair() -> Roster {
        // 0, 1 normal; 2, 3 attackers.
        Roster::new(
            vec![Role::Normal, Role::Normal, Role::Attacker, Role::Attacker],
            vec![true, false, false, false],
        )
    }

    #[test]
    fn only_active_colluders_report_collusively() {
        let mut r = rng();
        let b = spec(ThreatModel::B);
        assert_eq!(
            report_stance(Role::Attacker, &ATTACK, &b, &mut r),
            Report::Collusive
        );
        assert_eq!(
            report_stance(Role::Attacker, &INCUBATING, &b, &mut r),
            Report::Honest
        );
        assert_eq!(
            report_stance(Role::Normal, &ATTACK, &b, &mut r),
            Report::Honest
        );
        let a = spec(ThreatModel::A);
        assert_eq!(
            report_stance(Role::Attacker, &ATTACK, &a, &mut r),
            Report::Honest
        );
        let d = spec(ThreatModel::D);
        assert_eq!(
            report_stance(Role::Spy, &ATTACK, &d, &mut r),
            Report::Collusive
        );
    }

    #[test]
    fn camouflaged_reports_follow_e_and_f() {
        let camo = Camouflage {
            c: 0.5,
            e: 0.3,
            f: 0.8,
        };
        let mut r = rng();
        let trials = 20_000;
        let e = ThreatModelSpec::new(ThreatModel::E, camo);
        let honest = (0..trials)
            .filter(|_| report_stance(Role::Attacker, &ATTACK, &e, &mut r) == Report::Honest)
            .count() as f64
            / trials as f64;
        assert!((honest - 0.3).abs() < 0.02, "{honest}");
        let f = ThreatModelSpec::new(ThreatModel::F, camo);
        let honest = (0..trials)
            .filter(|_| report_stance(Role::Spy, &ATTACK, &f, &mut r) == Report::Honest)
            .count() as f64
            / trials as f64;
        assert!((honest - 0.8).abs() < 0.02, "{honest}");
        assert_eq!(
            report_stance(Role::Attacker, &ATTACK, &f, &mut r),
            Report::Collusive
        );
    }

    #[test]
    fn collusive_rows_keep_only_ally_praise() {
        let roster = roster_with_pair();
        let s = spec(ThreatModel::B);
        let mut ledger = RatingLedger::new(4);
        ledger.set(2, 0, 5).unwrap();
        ledger.set(2, 3, 2).unwrap();
        ledger.set(3, 1, 4).unwrap();
        ledger.set(3, 2, -1).unwrap();
        ledger.set(0, 2, 3).unwrap();
        let reports = [
            Report::Honest,
            Report::Honest,
            Report::Collusive,
            Report::Collusive,
        ];
        let out = reported_ledger(&ledger, &roster, &s, &reports);
        assert_eq!(out.row(2), &[0, 0, 0, 2]);
        // No positive opinion of an ally yet: vouch for the allies uniformly.
        assert_eq!(out.row(3), &[0, 0, 1, 0]);
        assert_eq!(out.row(0), ledger.row(0));
    }

    #[test]
    fn honest_reports_leave_the_ledger_untouched() {
        let roster = roster_with_pair();
        let mut ledger = RatingLedger::new(4);
        ledger.set(2, 0, 5).unwrap();
        let out = reported_ledger(
            &ledger,
            &roster,
            &spec(ThreatModel::C),
            &[Report::Honest; 4],
        );
        assert_eq!(out, ledger);
    }
}
