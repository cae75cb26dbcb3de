//! Incremental rule induction under dual-mode instruction.
//!
//! Object-specific permissions arrive one at a time and are either covered
//! (forbidden examples) or uncovered (allowed examples); directly stated
//! rules are specialized against the examples seen so far before they are
//! added or subtracted. Every search only adds conditions to its starting
//! rule.

use crate::dsl::{Polarity, Rule, Vocabulary};
use crate::eval::{
    eval_rule, eval_rules, false_positive_val, find_cover_rules, find_covered_examples, true_positive_val,
    EvalError, Example, ObjectFacts, COVERAGE_THRESHOLD,
};
use crate::logic::{is_covered, refinements, rule_diff, RuleSet, MAX_CONDITIONS};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;

/// Scores closer than this are ties.
const SCORE_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnerConfig {
    /// A refinement is accepted only when its score is strictly below this.
    pub score_thresh: f64,
    pub beam_width: usize,
    pub max_conditions: usize,
    /// Coverage threshold τ.
    pub coverage_threshold: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            score_thresh: 0.1,
            beam_width: 3,
            max_conditions: MAX_CONDITIONS,
            coverage_threshold: COVERAGE_THRESHOLD,
        }
    }
}

/// Search objective. `value` is minimized; `tiebreak` decides between
/// candidates whose values tie, then fewer conditions, then canonical order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub value: f64,
    pub tiebreak: f64,
}

impl From<f64> for Score {
    fn from(value: f64) -> Self {
        Self { value, tiebreak: 0.0 }
    }
}

fn cmp_scored(a: &(Score, Rule), b: &(Score, Rule)) -> Ordering {
    let close = |x: f64, y: f64| (x - y).abs() <= SCORE_EPSILON;
    let by = |x: f64, y: f64| if close(x, y) { Ordering::Equal } else { x.total_cmp(&y) };
    by(a.0.value, b.0.value)
        .then_with(|| by(a.0.tiebreak, b.0.tiebreak))
        .then_with(|| a.1.len().cmp(&b.1.len()))
        .then_with(|| a.1.cmp(&b.1))
}

/// Beam search over specializations of `init`.
///
/// Candidates that fail to cover `must_cover` at τ are pruned (adding
/// conditions can only lower coverage, so their descendants would fail
/// too). Returns the best admissible rule, `init` included; when nothing is
/// admissible, `init` is returned with an infinite score.
pub fn rule_search<F>(
    init: &Rule,
    must_cover: Option<&ObjectFacts>,
    mut score_fn: F,
    vocab: &Vocabulary,
    config: &LearnerConfig,
) -> Result<(Rule, f64), EvalError>
where
    F: FnMut(&Rule) -> Result<Score, EvalError>,
{
    let admissible = |r: &Rule| -> Result<bool, EvalError> {
        match must_cover {
            Some(f) => Ok(eval_rule(r, f)? >= config.coverage_threshold),
            None => Ok(true),
        }
    };
    let mut best: Option<(Score, Rule)> = None;
    if admissible(init)? {
        best = Some((score_fn(init)?, init.clone()));
    }
    let mut visited = BTreeSet::from([init.clone()]);
    let mut beam = vec![init.clone()];
    for _ in 0..config.max_conditions {
        let mut candidates = Vec::new();
        for rule in &beam {
            for cand in refinements(rule, vocab, config.max_conditions) {
                if visited.insert(cand.clone()) && admissible(&cand)? {
                    candidates.push((score_fn(&cand)?, cand));
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(cmp_scored);
        candidates.truncate(config.beam_width.max(1));
        if best.as_ref().is_none_or(|b| cmp_scored(&candidates[0], b) == Ordering::Less) {
            best = Some(candidates[0].clone());
        }
        beam = candidates.into_iter().map(|(_, r)| r).collect();
    }
    Ok(match best {
        Some((score, rule)) => (rule, score.value),
        None => (init.clone(), f64::INFINITY),
    })
}

fn of_action<'a>(examples: &'a [Example], action: &str) -> Vec<Example> {
    examples
        .iter()
        .filter(|e| e.permission.action == action)
        .cloned()
        .collect()
}

/// What an operation did to the rule set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnOutcome {
    pub changed: bool,
    /// Best score found by the search, when one ran.
    pub score: Option<f64>,
}

impl LearnOutcome {
    fn unchanged() -> Self {
        Self {
            changed: false,
            score: None,
        }
    }
}

/// The active rule set plus the rules humans stated directly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Learner {
    pub config: LearnerConfig,
    rules: RuleSet,
    /// Directly instructed rules, as later carved by subtraction.
    pinned: BTreeSet<Rule>,
}

impl Learner {
    pub fn new(config: LearnerConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn with_rules(config: LearnerConfig, rules: RuleSet) -> Self {
        Self {
            config,
            rules,
            pinned: BTreeSet::new(),
        }
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn pinned(&self) -> impl Iterator<Item = &Rule> {
        self.pinned.iter()
    }

    /// Pins `rule` and merges it without any search.
    pub fn pin(&mut self, rule: Rule) {
        self.pinned.insert(rule.clone());
        self.rules.merge(rule);
    }

    fn tau(&self) -> f64 {
        self.config.coverage_threshold
    }

    fn replace(&mut self, old: &Rule, remainder: Vec<Rule>) {
        let was_pinned = self.pinned.remove(old);
        if was_pinned && remainder.is_empty() {
            // Instructed rules are carved, never deleted.
            self.pinned.insert(old.clone());
            return;
        }
        self.rules.remove(old);
        for r in remainder {
            if was_pinned {
                self.pinned.insert(r.clone());
            }
            self.rules.merge(r);
        }
    }

    /// Learns a rule covering a forbidden example unless one already does.
    pub fn cover_example(
        &mut self,
        examples: &[Example],
        new_example: &Example,
        vocab: &Vocabulary,
    ) -> Result<LearnOutcome, EvalError> {
        let action = &new_example.permission.action;
        if eval_rules(&self.rules, action, &new_example.facts)? >= self.tau() {
            return Ok(LearnOutcome::unchanged());
        }
        let examples = of_action(examples, action);
        let init = Rule::unconditional(Polarity::Forbid, action.clone());
        let (rule, score) = rule_search(
            &init,
            Some(&new_example.facts),
            |r| {
                Ok(Score {
                    value: false_positive_val(r, &examples)?,
                    tiebreak: -true_positive_val(r, &examples)?,
                })
            },
            vocab,
            &self.config,
        )?;
        let mut changed = false;
        if score < self.config.score_thresh {
            changed = self.rules.merge(rule);
        }
        Ok(LearnOutcome {
            changed,
            score: Some(score),
        })
    }

    /// Carves an allowed example out of every rule covering it.
    pub fn uncover_example(
        &mut self,
        examples: &[Example],
        new_example: &Example,
        vocab: &Vocabulary,
    ) -> Result<LearnOutcome, EvalError> {
        let examples = of_action(examples, &new_example.permission.action);
        let mut outcome = LearnOutcome::unchanged();
        for cov_rule in find_cover_rules(&self.rules, new_example, self.tau())? {
            if !self.rules.contains(&cov_rule) {
                continue;
            }
            let covered = find_covered_examples(&cov_rule, &examples, self.tau())?;
            let (refined, score) = rule_search(
                &cov_rule,
                Some(&new_example.facts),
                |r| {
                    Ok(Score {
                        value: true_positive_val(r, &covered)?,
                        tiebreak: -false_positive_val(r, &covered)?,
                    })
                },
                vocab,
                &self.config,
            )?;
            outcome.score = Some(outcome.score.map_or(score, |s: f64| s.min(score)));
            if score < self.config.score_thresh {
                let remainder = rule_diff(&cov_rule, &refined).expect("search only specializes");
                self.replace(&cov_rule, remainder);
                outcome.changed = true;
            }
        }
        Ok(outcome)
    }

    /// Adds a directly stated forbid rule after specializing it away from
    /// the allowed examples.
    pub fn cover_rule(
        &mut self,
        examples: &[Example],
        given: &Rule,
        vocab: &Vocabulary,
    ) -> Result<LearnOutcome, EvalError> {
        debug_assert_eq!(given.polarity, Polarity::Forbid);
        if is_covered(given, &self.rules) {
            return Ok(LearnOutcome::unchanged());
        }
        let examples = of_action(examples, &given.action);
        let (rule, score) = rule_search(
            given,
            None,
            |r| {
                Ok(Score {
                    value: false_positive_val(r, &examples)?,
                    tiebreak: -true_positive_val(r, &examples)?,
                })
            },
            vocab,
            &self.config,
        )?;
        let mut changed = false;
        if score < self.config.score_thresh {
            self.pinned.insert(rule.clone());
            changed = self.rules.merge(rule);
        }
        Ok(LearnOutcome {
            changed,
            score: Some(score),
        })
    }

    /// Subtracts a directly stated allow rule, specialized away from the
    /// forbidden examples, from every active rule of the same action.
    pub fn uncover_rule(
        &mut self,
        examples: &[Example],
        given: &Rule,
        vocab: &Vocabulary,
    ) -> Result<LearnOutcome, EvalError> {
        let examples = of_action(examples, &given.action);
        let (refined, score) = rule_search(
            given,
            None,
            |r| {
                Ok(Score {
                    value: true_positive_val(r, &examples)?,
                    tiebreak: -false_positive_val(r, &examples)?,
                })
            },
            vocab,
            &self.config,
        )?;
        let mut outcome = LearnOutcome {
            changed: false,
            score: Some(score),
        };
        if score >= self.config.score_thresh {
            return Ok(outcome);
        }
        let active: Vec<Rule> = self.rules.for_action(&given.action).cloned().collect();
        for rule in active {
            let Ok(subtrahend) = Rule::forbid(
                rule.action.clone(),
                rule.conditions().iter().chain(refined.conditions()).cloned(),
            ) else {
                // Disjoint from the allowed region.
                continue;
            };
            let remainder = rule_diff(&rule, &subtrahend).expect("union refines the rule");
            if remainder.len() == 1 && remainder[0] == rule {
                continue;
            }
            self.replace(&rule, remainder);
            outcome.changed = true;
        }
        Ok(outcome)
    }

    /// Rebuilds the rule set from the pinned rules by replaying `examples`
    /// in instruction order.
    pub fn batch_reinduce(&mut self, examples: &[Example], vocab: &Vocabulary) -> Result<LearnOutcome, EvalError> {
        let before = self.rules.clone();
        self.rules = RuleSet::from_rules(self.pinned.iter().cloned());
        for i in 0..examples.len() {
            let seen = &examples[..=i];
            let e = &examples[i];
            if e.permission.is_forbidden() {
                self.cover_example(seen, e, vocab)?;
            } else {
                self.uncover_example(seen, e, vocab)?;
            }
        }
        Ok(LearnOutcome {
            changed: self.rules != before,
            score: None,
        })
    }

    /// Dispatches one permission to cover or uncover.
    pub fn learn_example(
        &mut self,
        examples: &[Example],
        new_example: &Example,
        vocab: &Vocabulary,
    ) -> Result<LearnOutcome, EvalError> {
        if new_example.permission.is_forbidden() {
            self.cover_example(examples, new_example, vocab)
        } else {
            self.uncover_example(examples, new_example, vocab)
        }
    }

    /// Dispatches a stated rule by polarity.
    pub fn learn_rule(&mut self, examples: &[Example], rule: &Rule, vocab: &Vocabulary) -> Result<LearnOutcome, EvalError> {
        match rule.polarity {
            Polarity::Forbid => self.cover_rule(examples, rule, vocab),
            Polarity::Allow => self.uncover_rule(examples, rule, vocab),
        }
    }
}
