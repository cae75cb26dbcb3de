//! Purely logical operations on rules: subsumption, redundancy-removing
//! merge, rule subtraction and refinement generation.

use crate::dsl::{Arg, Atom, Polarity, Rule, Vocabulary};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Default cap on conditions per rule.
pub const MAX_CONDITIONS: usize = 3;

/// Forbid-polarity rules with no member subsumed by another.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet {
    rules: BTreeSet<Rule>,
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rules(rules: impl IntoIterator<Item = Rule>) -> Self {
        let mut set = Self::new();
        for r in rules {
            set.merge(r);
        }
        set
    }

    pub fn iter(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter()
    }

    pub fn for_action<'a>(&'a self, action: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| r.action == action)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn contains(&self, rule: &Rule) -> bool {
        self.rules.contains(rule)
    }

    pub fn remove(&mut self, rule: &Rule) -> bool {
        self.rules.remove(rule)
    }

    /// Adds `rule` unless already subsumed, then drops members it subsumes.
    /// Returns whether the set changed.
    pub fn merge(&mut self, rule: Rule) -> bool {
        debug_assert_eq!(rule.polarity, Polarity::Forbid);
        if self.rules.iter().any(|r| subsumes(r, &rule)) {
            return false;
        }
        self.rules.retain(|r| !subsumes(&rule, r));
        self.rules.insert(rule);
        true
    }

    /// No member subsumes another.
    pub fn is_irredundant(&self) -> bool {
        self.rules
            .iter()
            .all(|a| self.rules.iter().all(|b| a == b || !subsumes(a, b)))
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.rules.iter().map(Rule::to_string).collect()
    }
}

impl<'a> IntoIterator for &'a RuleSet {
    type Item = &'a Rule;
    type IntoIter = std::collections::btree_set::Iter<'a, Rule>;

    fn into_iter(self) -> Self::IntoIter {
        self.rules.iter()
    }
}

/// Whether `general` fires on every grounded object `specific` fires on,
/// decided syntactically: each condition of `general` must be implied by
/// some condition of `specific`.
pub fn subsumes(general: &Rule, specific: &Rule) -> bool {
    general.action == specific.action
        && general.polarity == specific.polarity
        && general
            .conditions()
            .iter()
            .all(|g| specific.conditions().iter().any(|s| s.implies(g)))
}

pub fn merge_rule(set: &RuleSet, rule: Rule) -> RuleSet {
    let mut out = set.clone();
    out.merge(rule);
    out
}

pub fn is_covered(rule: &Rule, set: &RuleSet) -> bool {
    set.iter().any(|r| subsumes(r, rule))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("`{subtrahend}` is not a refinement of `{minuend}`")]
    NotRefinement { minuend: String, subtrahend: String },
}

/// Rewrites `minuend ∧ ¬(d1 ∧ … ∧ dk)` as pairwise-disjoint rules
/// `minuend ∧ ¬d1`, `minuend ∧ d1 ∧ ¬d2`, …, where `d1..dk` are the
/// subtrahend's extra conditions in canonical order. The subtrahend must be
/// subsumed by the minuend.
///
/// Extra conditions already implied by the accumulated prefix add nothing
/// and are skipped; one whose negation is implied empties the intersection,
/// so the remaining prefix is emitted whole.
pub fn rule_diff(minuend: &Rule, subtrahend: &Rule) -> Result<Vec<Rule>, DiffError> {
    let not_refinement = || DiffError::NotRefinement {
        minuend: minuend.to_string(),
        subtrahend: subtrahend.to_string(),
    };
    if minuend.action != subtrahend.action
        || !minuend
            .conditions()
            .iter()
            .all(|m| subtrahend.conditions().iter().any(|s| s.implies(m)))
    {
        return Err(not_refinement());
    }
    let mut prefix = minuend.clone();
    let mut remainder = Vec::new();
    for d in subtrahend.conditions().difference(minuend.conditions()) {
        if prefix.conditions().iter().any(|c| c.implies(d)) {
            continue;
        }
        if prefix.conditions().iter().any(|c| c.excludes(d)) {
            remainder.push(prefix.simplified());
            return Ok(remainder);
        }
        let carved = prefix
            .with_condition(d.negate())
            .expect("negation is neither implied nor excluded by the prefix");
        remainder.push(carved.simplified());
        prefix = prefix.with_condition(d.clone()).map_err(|_| not_refinement())?;
    }
    Ok(remainder)
}

/// Every legal one-atom specialization of `rule`, in deterministic order.
///
/// Candidates cover every schema × (each ground constant, plus `any` where
/// allowed) × {positive, negated}. Atoms already present, contradicting, or
/// implied by an existing condition are skipped. When the new atom implies
/// an existing one, the weaker condition is dropped so the result stays
/// irredundant.
pub fn refinements(rule: &Rule, vocab: &Vocabulary, max_conditions: usize) -> Vec<Rule> {
    if rule.len() >= max_conditions {
        return Vec::new();
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for schema in vocab.schemas() {
        let args = schema
            .allows_any
            .then_some(Arg::Any)
            .into_iter()
            .chain(vocab.constants(schema.sort).map(Arg::constant));
        for arg in args {
            for negated in [false, true] {
                let atom = Atom {
                    predicate: schema.name.clone(),
                    arg: arg.clone(),
                    negated,
                    sort: schema.sort,
                };
                let conds = rule.conditions();
                if conds.iter().any(|c| c.implies(&atom) || c.excludes(&atom)) {
                    continue;
                }
                let kept: Vec<Atom> = conds.iter().filter(|c| !atom.implies(c)).cloned().collect();
                let Ok(candidate) = Rule::new(rule.polarity, rule.action.clone(), kept.into_iter().chain([atom])) else {
                    continue;
                };
                if candidate != *rule && seen.insert(candidate.clone()) {
                    out.push(candidate);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Sort, COLLECT, PICK_UP, TRASH};

    fn vocab() -> Vocabulary {
        let mut v = Vocabulary::builtin();
        for a in ["agent1", "agent2", "agent3"] {
            v.add_constant(Sort::Agent, a).unwrap();
        }
        v
    }

    fn forbid(action: &str, conds: impl IntoIterator<Item = Atom>) -> Rule {
        Rule::forbid(action, conds).unwrap()
    }

    #[test]
    fn subsumption_examples() {
        let any = forbid(TRASH, [Atom::owned_by_any()]);
        let a2 = forbid(TRASH, [Atom::owned_by("agent2")]);
        assert!(subsumes(&any, &a2));
        assert!(!subsumes(&a2, &any));
        let bare = forbid(TRASH, []);
        assert!(subsumes(&bare, &forbid(TRASH, [Atom::colored("red")])));
        assert!(!subsumes(
            &forbid(TRASH, [Atom::colored("red")]),
            &forbid(TRASH, [Atom::colored("blue")])
        ));
        assert!(!subsumes(&bare, &forbid(PICK_UP, [])));
        assert!(!subsumes(&bare, &bare.with_polarity(Polarity::Allow)));
    }

    #[test]
    fn merge_removes_redundant() {
        let mut set = RuleSet::from_rules([forbid(TRASH, [Atom::owned_by("agent2")])]);
        assert!(set.merge(forbid(TRASH, [Atom::owned_by_any()])));
        assert_eq!(set.to_strings(), vec!["forbid trash if ownedBy any"]);
        let r = forbid(COLLECT, [Atom::colored("red")]);
        assert!(set.merge(r.clone()));
        assert!(!set.merge(r.clone()));
        assert_eq!(set.len(), 2);
        assert_eq!(merge_rule(&RuleSet::new(), r.clone()).len(), 1);
    }

    #[test]
    fn diff_examples() {
        let any = forbid(TRASH, [Atom::owned_by_any()]);
        let sub = forbid(TRASH, [Atom::owned_by_any(), Atom::colored("red")]);
        let rem = rule_diff(&any, &sub).unwrap();
        assert_eq!(rem, vec![forbid(TRASH, [Atom::owned_by_any(), Atom::colored("red").not()])]);
        assert!(rule_diff(&any, &any).unwrap().is_empty());

        let sub2 = forbid(TRASH, [Atom::owned_by_any(), Atom::colored("red"), Atom::owned_by("agent1").not()]);
        let rem = rule_diff(&any, &sub2).unwrap();
        assert_eq!(rem.len(), 2);
        assert_eq!(rem[0].to_string(), "forbid trash if not isColored red and ownedBy any");
        assert_eq!(
            rem[1].to_string(),
            "forbid trash if isColored red and ownedBy agent1"
        );
    }

    #[test]
    fn diff_requires_refinement() {
        let a = forbid(TRASH, [Atom::colored("red")]);
        let b = forbid(TRASH, [Atom::colored("blue").not()]);
        assert!(rule_diff(&a, &b).is_err());
        assert!(rule_diff(&a, &forbid(PICK_UP, [Atom::colored("red")])).is_err());
    }

    #[test]
    fn refinement_count_and_membership() {
        let v = vocab();
        let bare = Rule::unconditional(Polarity::Forbid, TRASH);
        let refs = refinements(&bare, &v, MAX_CONDITIONS);
        assert_eq!(refs.len(), 2 * ((3 + 1) + 4));
        assert!(refs.contains(&forbid(TRASH, [Atom::owned_by_any()])));
        assert!(refs.contains(&forbid(TRASH, [Atom::colored("red").not()])));
        let unique: BTreeSet<_> = refs.iter().collect();
        assert_eq!(unique.len(), refs.len());
    }

    #[test]
    fn refinements_skip_contradictions_and_redundancy() {
        let v = vocab();
        let red = forbid(TRASH, [Atom::colored("red")]);
        for r in refinements(&red, &v, MAX_CONDITIONS) {
            assert!(r.conditions().contains(&Atom::colored("red")));
            assert!(!r.conditions().contains(&Atom::colored("red").not()));
            assert!(r.conditions().iter().all(|a| a.predicate != "isColored" || a == &Atom::colored("red")));
        }
        let any = forbid(TRASH, [Atom::owned_by_any()]);
        let refs = refinements(&any, &v, MAX_CONDITIONS);
        assert!(refs.contains(&forbid(TRASH, [Atom::owned_by("agent2")])));
        assert!(refinements(&forbid(TRASH, [Atom::colored("red"), Atom::owned_by_any(), Atom::owned_by("agent1").not()]), &v, 3).is_empty());
    }

    #[test]
    fn coverage_check() {
        let set = RuleSet::from_rules([forbid(PICK_UP, [Atom::owned_by_any()])]);
        assert!(is_covered(&forbid(PICK_UP, [Atom::owned_by("agent2")]), &set));
        assert!(!is_covered(&forbid(PICK_UP, []), &RuleSet::new()));
        let r = forbid(TRASH, [Atom::colored("red")]);
        assert!(is_covered(&r, &RuleSet::from_rules([r.clone()])));
    }
}
