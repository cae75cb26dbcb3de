//! Probabilistic evaluation of atoms, rules and rule sets when ownership
//! is uncertain, plus the coverage values that drive induction.
//!
//! Ownership facts `ownedBy(object, agent)` are independent Bernoulli
//! variables; color and area are observed. A rule fires in a world when all
//! of its conditions hold, and a rule set forbids when any of its rules
//! fires. Probabilities are computed exactly by enumerating the ownership
//! variables a rule set actually mentions, so rules that share a variable
//! (say `ownedBy any` and `ownedBy agent2`) are not treated as independent.

use crate::dsl::{Arg, Atom, Rule, Sort};
use crate::logic::RuleSet;
use crate::world::{AgentId, ObjectId, Permission, PermissionDb};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coverage threshold: a rule covers an example when it forbids the
/// example's object with at least this probability.
pub const COVERAGE_THRESHOLD: f64 = 0.5;

/// Above this many distinct ownership variables, fall back to treating
/// atoms and rules as independent.
const MAX_ENUMERATED_VARIABLES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("`{constant}` is not a known agent for `{predicate}`")]
    UnknownConstant { predicate: String, constant: String },
}

/// Truth values of the predicates on one object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectFacts {
    pub object: ObjectId,
    pub color: Option<String>,
    pub area: Option<String>,
    /// Ownership probability for every known agent.
    pub ownership: Vec<(AgentId, f64)>,
}

impl ObjectFacts {
    pub fn owner_probability(&self, agent: &str) -> Option<f64> {
        self.ownership.iter().find(|(a, _)| a.as_str() == agent).map(|(_, p)| *p)
    }

    /// Copy with one agent's ownership pinned to `p`.
    pub fn clamped(&self, agent: &AgentId, p: f64) -> Self {
        let mut out = self.clone();
        for (a, q) in &mut out.ownership {
            if a == agent {
                *q = p;
            }
        }
        out
    }

    fn agent_index(&self, predicate: &str, agent: &str) -> Result<usize, EvalError> {
        self.ownership
            .iter()
            .position(|(a, _)| a.as_str() == agent)
            .ok_or_else(|| EvalError::UnknownConstant {
                predicate: predicate.to_owned(),
                constant: agent.to_owned(),
            })
    }
}

fn observed(atom: &Atom, facts: &ObjectFacts) -> f64 {
    let value = match &atom.sort {
        Sort::Color => facts.color.as_deref(),
        Sort::Area => facts.area.as_deref(),
        Sort::Agent => unreachable!("ownership is not observed"),
    };
    let holds = matches!(&atom.arg, Arg::Const(c) if Some(c.as_str()) == value);
    if holds != atom.negated {
        1.0
    } else {
        0.0
    }
}

/// Probability that `atom` holds on the object.
pub fn eval_atom(atom: &Atom, facts: &ObjectFacts) -> Result<f64, EvalError> {
    if atom.sort != Sort::Agent {
        return Ok(observed(atom, facts));
    }
    let positive = match &atom.arg {
        Arg::Any => 1.0 - facts.ownership.iter().map(|(_, p)| 1.0 - p).product::<f64>(),
        Arg::Const(a) => facts.ownership[facts.agent_index(&atom.predicate, a)?].1,
    };
    Ok(if atom.negated { 1.0 - positive } else { positive })
}

/// Ownership literal over variable indices into `ObjectFacts::ownership`.
#[derive(Clone, Copy, Debug)]
enum Literal {
    Owned(usize),
    NotOwned(usize),
    SomeOwned,
    NoneOwned,
}

/// A rule reduced to its ownership literals after checking the observed
/// conditions. `None` means an observed condition is false.
fn reduce(rule: &Rule, facts: &ObjectFacts) -> Result<Option<Vec<Literal>>, EvalError> {
    let mut lits = Vec::new();
    for atom in rule.conditions() {
        if atom.sort != Sort::Agent {
            if observed(atom, facts) == 0.0 {
                return Ok(None);
            }
            continue;
        }
        lits.push(match (&atom.arg, atom.negated) {
            (Arg::Any, false) => Literal::SomeOwned,
            (Arg::Any, true) => Literal::NoneOwned,
            (Arg::Const(a), neg) => {
                let i = facts.agent_index(&atom.predicate, a)?;
                if neg {
                    Literal::NotOwned(i)
                } else {
                    Literal::Owned(i)
                }
            }
        });
    }
    Ok(Some(lits))
}

fn literal_holds(lit: Literal, mask: u64) -> bool {
    match lit {
        Literal::Owned(i) => mask & (1 << i) != 0,
        Literal::NotOwned(i) => mask & (1 << i) == 0,
        Literal::SomeOwned => mask != 0,
        Literal::NoneOwned => mask == 0,
    }
}

fn literal_probability(lit: Literal, probs: &[f64]) -> f64 {
    match lit {
        Literal::Owned(i) => probs[i],
        Literal::NotOwned(i) => 1.0 - probs[i],
        Literal::SomeOwned => 1.0 - probs.iter().map(|p| 1.0 - p).product::<f64>(),
        Literal::NoneOwned => probs.iter().map(|p| 1.0 - p).product(),
    }
}

/// Probability that at least one of `rules` fires on the object.
pub fn eval_disjunction<'a>(
    rules: impl IntoIterator<Item = &'a Rule>,
    facts: &ObjectFacts,
) -> Result<f64, EvalError> {
    let mut clauses = Vec::new();
    for rule in rules {
        match reduce(rule, facts)? {
            None => {}
            Some(lits) if lits.is_empty() => return Ok(1.0),
            Some(lits) => clauses.push(lits),
        }
    }
    if clauses.is_empty() {
        return Ok(0.0);
    }
    let probs: Vec<f64> = facts.ownership.iter().map(|(_, p)| *p).collect();
    let n = probs.len();
    let uses_all = clauses
        .iter()
        .flatten()
        .any(|l| matches!(l, Literal::SomeOwned | Literal::NoneOwned));
    let mut vars: Vec<usize> = if uses_all {
        (0..n).collect()
    } else {
        clauses
            .iter()
            .flatten()
            .filter_map(|l| match l {
                Literal::Owned(i) | Literal::NotOwned(i) => Some(*i),
                _ => None,
            })
            .collect()
    };
    vars.sort_unstable();
    vars.dedup();

    if vars.len() > MAX_ENUMERATED_VARIABLES {
        let miss: f64 = clauses
            .iter()
            .map(|c| 1.0 - c.iter().map(|l| literal_probability(*l, &probs)).product::<f64>())
            .product();
        return Ok(1.0 - miss);
    }

    // Enumerate assignments of the mentioned variables. Unmentioned
    // variables cannot affect any literal when `uses_all` is false.
    let mut total = 0.0;
    for bits in 0u64..(1u64 << vars.len()) {
        let mut mask = 0u64;
        let mut weight = 1.0;
        for (k, &v) in vars.iter().enumerate() {
            if bits & (1 << k) != 0 {
                mask |= 1 << v;
                weight *= probs[v];
            } else {
                weight *= 1.0 - probs[v];
            }
        }
        if weight == 0.0 {
            continue;
        }
        if clauses.iter().any(|c| c.iter().all(|l| literal_holds(*l, mask))) {
            total += weight;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Probability that every condition of `rule` holds.
pub fn eval_rule(rule: &Rule, facts: &ObjectFacts) -> Result<f64, EvalError> {
    eval_disjunction([rule], facts)
}

/// Forbiddenness of `action` on the object under the rules alone.
pub fn eval_rules(set: &RuleSet, action: &str, facts: &ObjectFacts) -> Result<f64, EvalError> {
    eval_disjunction(set.for_action(action), facts)
}

/// Forbiddenness of `action` on the object. A certain object-specific
/// permission overrides the rules; otherwise unforbidden actions are
/// allowed.
pub fn eval_rule_set(
    set: &RuleSet,
    action: &str,
    facts: &ObjectFacts,
    db: Option<&PermissionDb>,
) -> Result<f64, EvalError> {
    if let Some(p) = db.and_then(|db| db.get(action, &facts.object)) {
        if p.is_certain() {
            return Ok(p.certainty);
        }
    }
    eval_rules(set, action, facts)
}

/// An object-specific permission with the predicate values of its object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub permission: Permission,
    pub facts: ObjectFacts,
}

impl Example {
    pub fn new(permission: Permission, facts: ObjectFacts) -> Self {
        Self { permission, facts }
    }
}

/// Per-example coverage values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub true_positive: f64,
    pub false_positive: f64,
}

pub fn coverage(rule: &Rule, example: &Example) -> Result<Coverage, EvalError> {
    let p = eval_rule(rule, &example.facts)?;
    let c = example.permission.certainty;
    Ok(Coverage {
        true_positive: c * p,
        false_positive: (1.0 - c) * p,
    })
}

fn mean_coverage(
    rule: &Rule,
    examples: &[Example],
    pick: impl Fn(Coverage) -> f64,
) -> Result<f64, EvalError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for e in examples {
        sum += pick(coverage(rule, e)?);
    }
    Ok(sum / examples.len() as f64)
}

/// Mean forbidden mass of `examples` the rule covers.
pub fn true_positive_val(rule: &Rule, examples: &[Example]) -> Result<f64, EvalError> {
    mean_coverage(rule, examples, |c| c.true_positive)
}

/// Mean allowed mass of `examples` the rule covers.
pub fn false_positive_val(rule: &Rule, examples: &[Example]) -> Result<f64, EvalError> {
    mean_coverage(rule, examples, |c| c.false_positive)
}

/// Rules of the example's action covering its object at `tau` or more.
pub fn find_cover_rules(set: &RuleSet, example: &Example, tau: f64) -> Result<Vec<Rule>, EvalError> {
    let mut out = Vec::new();
    for r in set.for_action(&example.permission.action) {
        if eval_rule(r, &example.facts)? >= tau {
            out.push(r.clone());
        }
    }
    Ok(out)
}

/// Examples of the rule's action whose objects the rule covers at `tau`.
pub fn find_covered_examples(rule: &Rule, examples: &[Example], tau: f64) -> Result<Vec<Example>, EvalError> {
    let mut out = Vec::new();
    for e in examples.iter().filter(|e| e.permission.action == rule.action) {
        if eval_rule(rule, &e.facts)? >= tau {
            out.push(e.clone());
        }
    }
    Ok(out)
}
