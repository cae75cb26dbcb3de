//! Brute-force reference semantics shared by the integration suites.
//!
//! Everything here grounds rules against explicit ownership assignments and
//! never calls into the library's evaluator.

#![allow(dead_code)]

use ownership_norms::dsl::{Arg, Atom, Rule, Sort, PALETTE, TRASH};
use ownership_norms::eval::ObjectFacts;
use proptest::prelude::*;

pub const AGENTS: [&str; 3] = ["a", "b", "c"];

/// One grounded object: observed color and the set of owners as a bitmask
/// over the agent list.
#[derive(Clone, Debug)]
pub struct Ground<'a> {
    pub color: Option<&'a str>,
    pub area: Option<&'a str>,
    pub owners: u32,
    pub agents: &'a [&'a str],
}

pub fn atom_holds(atom: &Atom, g: &Ground) -> bool {
    let positive = match (&atom.sort, &atom.arg) {
        (Sort::Agent, Arg::Any) => g.owners != 0,
        (Sort::Agent, Arg::Const(a)) => {
            let i = g.agents.iter().position(|x| x == a).expect("agent in grounding");
            g.owners & (1 << i) != 0
        }
        (Sort::Color, Arg::Const(c)) => g.color == Some(c.as_str()),
        (Sort::Area, Arg::Const(c)) => g.area == Some(c.as_str()),
        (_, Arg::Any) => panic!("`any` only quantifies agents"),
    };
    positive != atom.negated
}

pub fn rule_fires(rule: &Rule, g: &Ground) -> bool {
    rule.conditions().iter().all(|a| atom_holds(a, g))
}

pub fn any_fires<'r>(rules: impl IntoIterator<Item = &'r Rule>, g: &Ground) -> bool {
    rules.into_iter().any(|r| rule_fires(r, g))
}

/// Weight of an owner assignment under independent marginals.
pub fn weight(owners: u32, probs: &[f64]) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(i, p)| if owners & (1 << i) != 0 { *p } else { 1.0 - p })
        .product()
}

/// Joint table over every owner assignment: (owners, weight, fires).
pub fn joint<'r>(rules: &[&'r Rule], facts: &ObjectFacts) -> Vec<(u32, f64, bool)> {
    let agents: Vec<&str> = facts.ownership.iter().map(|(a, _)| a.as_str()).collect();
    let probs: Vec<f64> = facts.ownership.iter().map(|(_, p)| *p).collect();
    (0..1u32 << agents.len())
        .map(|owners| {
            let g = Ground {
                color: facts.color.as_deref(),
                area: facts.area.as_deref(),
                owners,
                agents: &agents,
            };
            (owners, weight(owners, &probs), any_fires(rules.iter().copied(), &g))
        })
        .collect()
}

/// P(some rule fires) by enumeration.
pub fn fire_probability(rules: &[&Rule], facts: &ObjectFacts) -> f64 {
    joint(rules, facts).iter().filter(|(_, _, f)| *f).map(|(_, w, _)| w).sum()
}

/// Every grounding of the listed agents with each palette color or none.
pub fn groundings<'a>(agents: &'a [&'a str]) -> Vec<Ground<'a>> {
    let mut out = Vec::new();
    for color in std::iter::once(None).chain(PALETTE.iter().map(|c| Some(*c))) {
        for owners in 0..1u32 << agents.len() {
            out.push(Ground {
                color,
                area: None,
                owners,
                agents,
            });
        }
    }
    out
}

pub fn facts(agents: &[&str], probs: &[f64], color: Option<&str>) -> ObjectFacts {
    ObjectFacts {
        object: "o".into(),
        color: color.map(str::to_owned),
        area: None,
        ownership: agents.iter().zip(probs).map(|(a, p)| ((*a).into(), *p)).collect(),
    }
}

pub fn atom_strategy(n_agents: usize) -> impl Strategy<Value = Atom> {
    let owner = (0..n_agents).prop_map(|i| Atom::owned_by(AGENTS[i]));
    let color = prop::sample::select(PALETTE.to_vec()).prop_map(Atom::colored);
    (prop_oneof![owner, Just(Atom::owned_by_any()), color], any::<bool>())
        .prop_map(|(a, neg)| if neg { a.not() } else { a })
}

pub fn rule_strategy(n_agents: usize) -> impl Strategy<Value = Rule> {
    prop::collection::vec(atom_strategy(n_agents), 0..=3)
        .prop_filter_map("contradictory conditions", |atoms| Rule::forbid(TRASH, atoms).ok())
}

/// Probabilities with the endpoints over-represented.
pub fn prob_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 1 => Just(1.0), 6 => 0.0..=1.0f64]
}

pub fn facts_strategy(n_agents: usize) -> impl Strategy<Value = ObjectFacts> {
    (
        prop::collection::vec(prob_strategy(), n_agents),
        prop::option::of(prop::sample::select(PALETTE.to_vec())),
    )
        .prop_map(move |(probs, color)| facts(&AGENTS[..n_agents], &probs, color))
}

/// A world size together with rules and facts over that many agents.
pub fn scenario(max_rules: usize) -> impl Strategy<Value = (Vec<Rule>, ObjectFacts)> {
    (1..=3usize).prop_flat_map(move |n| {
        (
            prop::collection::vec(rule_strategy(n), 0..=max_rules),
            facts_strategy(n),
        )
    })
}
