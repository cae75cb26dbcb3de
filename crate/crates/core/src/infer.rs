//! Rule-based ownership inference and the integration of induction,
//! percept prediction and inference behind a single instruction entry
//! point.
//!
//! Information flows one way: claims train the percept models, whose
//! predictions (or the claims themselves) are the priors; priors feed both
//! induction and Bayesian inference; inferences never flow back.

use crate::dsl::Rule;
use crate::eval::{eval_rules, EvalError, Example, ObjectFacts};
use crate::induction::{LearnOutcome, Learner, LearnerConfig};
use crate::logic::RuleSet;
use crate::percept::{KlrConfig, KlrModel};
use crate::world::{AgentId, Belief, Claim, Instruction, ObjectId, Permission, World, WorldError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Outcome of one Bayes update for one agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BayesUpdate {
    pub prior: f64,
    pub posterior: f64,
    /// The observation had zero probability under the rules; the prior was
    /// kept.
    pub inconsistent: bool,
}

/// Evidence at or below this is treated as zero: rounding in the
/// enumeration can leave a tautology's complement a few ulps above zero.
pub const MIN_EVIDENCE: f64 = 1e-12;

/// P(owned | observation) for one agent, where the likelihood
/// evaluates the rules with that agent's ownership pinned to true and the
/// evidence evaluates them on the marginals as they are.
pub fn bayes_update(
    rules: &RuleSet,
    action: &str,
    facts: &ObjectFacts,
    agent: &AgentId,
    observed_forbid: bool,
) -> Result<BayesUpdate, EvalError> {
    let prior = facts.owner_probability(agent.as_str()).ok_or_else(|| EvalError::UnknownConstant {
        predicate: crate::dsl::OWNED_BY.to_owned(),
        constant: agent.to_string(),
    })?;
    let p_f = eval_rules(rules, action, facts)?;
    let p_f_owned = eval_rules(rules, action, &facts.clamped(agent, 1.0))?;
    let (num, den) = if observed_forbid {
        (p_f_owned * prior, p_f)
    } else {
        ((1.0 - p_f_owned) * prior, 1.0 - p_f)
    };
    if den <= MIN_EVIDENCE {
        return Ok(BayesUpdate {
            prior,
            posterior: prior,
            inconsistent: true,
        });
    }
    Ok(BayesUpdate {
        prior,
        posterior: (num / den).clamp(0.0, 1.0),
        inconsistent: false,
    })
}

/// Updates every agent's marginal from the same pre-update marginals.
pub fn bayes_update_all(
    rules: &RuleSet,
    action: &str,
    facts: &ObjectFacts,
    observed_forbid: bool,
) -> Result<(ObjectFacts, bool), EvalError> {
    let mut out = facts.clone();
    let mut consistent = true;
    for (i, (agent, _)) in facts.ownership.iter().enumerate() {
        let u = bayes_update(rules, action, facts, agent, observed_forbid)?;
        out.ownership[i].1 = u.posterior;
        consistent &= !u.inconsistent;
    }
    Ok((out, consistent))
}

/// Share of stored permissions the rules mispredict at τ, read on priors.
pub fn conflict_fraction(rules: &RuleSet, world: &World, tau: f64) -> Result<f64, SystemError> {
    let db = &world.permissions;
    if db.is_empty() {
        return Ok(0.0);
    }
    let mut wrong = 0usize;
    for p in db.permissions() {
        let facts = world.facts(&p.object, Belief::Prior)?;
        let predicted = eval_rules(rules, &p.action, &facts)? >= tau;
        if predicted != p.is_forbidden() {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / db.len() as f64)
}

/// Where a percept training target came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Provenance {
    Claim,
    Prediction,
    Inference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainingPoint {
    pub object: ObjectId,
    pub target: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SystemConfig {
    pub learner: LearnerConfig,
    pub klr: KlrConfig,
    /// Re-induce when the conflict fraction strictly exceeds this.
    pub conflict_threshold: f64,
    /// Let permissions change the rule set (direct rules still apply).
    pub induction: bool,
    /// Apply rule-based Bayes updates.
    pub inference: bool,
    /// Train percept models from claims; otherwise priors are set
    /// externally.
    pub percept: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            learner: LearnerConfig::default(),
            klr: KlrConfig::default(),
            conflict_threshold: 0.10,
            induction: true,
            inference: true,
            percept: true,
        }
    }
}

/// What one instruction did.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstructionReport {
    /// Conflict fraction measured before the permission was stored.
    pub conflict_fraction: Option<f64>,
    pub reinduced: bool,
    pub inferred: bool,
    pub rule_outcome: Option<LearnOutcome>,
    /// Permissions revoked by an exclusive claim.
    pub revoked: usize,
    pub inconsistent: bool,
}

/// World, learner and percept models wired together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OwnershipSystem {
    pub world: World,
    pub learner: Learner,
    pub config: SystemConfig,
    models: BTreeMap<AgentId, KlrModel>,
    /// Permissions explained by inference, in arrival order.
    observations: Vec<Permission>,
    inconsistent: Vec<Permission>,
}

impl OwnershipSystem {
    pub fn new(world: World, config: SystemConfig) -> Self {
        Self {
            world,
            learner: Learner::new(config.learner),
            config,
            models: BTreeMap::new(),
            observations: Vec::new(),
            inconsistent: Vec::new(),
        }
    }

    pub fn rules(&self) -> &RuleSet {
        self.learner.rules()
    }

    pub fn model(&self, agent: &AgentId) -> Option<&KlrModel> {
        self.models.get(agent)
    }

    pub fn observations(&self) -> &[Permission] {
        &self.observations
    }

    /// Observations that had zero probability under the rules in force.
    pub fn inconsistencies(&self) -> &[Permission] {
        &self.inconsistent
    }

    /// Installs rules as if instructed directly, without specialization.
    pub fn pin_rules(&mut self, rules: impl IntoIterator<Item = Rule>) -> Result<(), SystemError> {
        for r in rules {
            self.learner.pin(r);
        }
        self.recompute_posteriors()
    }

    pub fn ownership_posterior(&self, o: &ObjectId, a: &AgentId) -> Result<f64, SystemError> {
        Ok(self.world.ownership_posterior(o, a)?)
    }

    pub fn conflict_fraction(&self) -> Result<f64, SystemError> {
        conflict_fraction(self.rules(), &self.world, self.config.learner.coverage_threshold)
    }

    /// Stored permissions as induction examples, read on priors.
    pub fn examples(&self) -> Result<Vec<Example>, SystemError> {
        self.world
            .permissions
            .permissions()
            .map(|p| Ok(Example::new(p.clone(), self.world.facts(&p.object, Belief::Prior)?)))
            .collect()
    }

    /// Percept training set for one agent: explicit claims only.
    pub fn training_set(&self, agent: &AgentId) -> Vec<TrainingPoint> {
        self.world
            .ownership
            .claimed
            .iter()
            .filter_map(|(o, m)| {
                m.get(agent).map(|p| TrainingPoint {
                    object: o.clone(),
                    target: *p,
                    provenance: Provenance::Claim,
                })
            })
            .collect()
    }

    fn retrain(&mut self) -> Result<(), SystemError> {
        let agents = self.world.drain_retrain_queue();
        if !self.config.percept {
            return Ok(());
        }
        for agent in agents {
            let set = self.training_set(&agent);
            assert!(set.iter().all(|t| t.provenance == Provenance::Claim));
            let data = set
                .iter()
                .map(|t| Ok((self.world.object(&t.object)?, t.target)))
                .collect::<Result<Vec<_>, WorldError>>()?;
            let model = KlrModel::train(&agent, &data, self.world.now, &self.config.klr);
            self.world.clear_predictions(&agent);
            if let Some(model) = model {
                let ids: Vec<ObjectId> = self.world.object_ids().cloned().collect();
                for o in ids {
                    let p = model.predict(self.world.object(&o)?, self.world.now);
                    self.world.set_predicted(&o, &agent, p)?;
                }
                self.models.insert(agent, model);
            } else {
                self.models.remove(&agent);
            }
        }
        Ok(())
    }

    fn record_claims(&mut self, claims: &[Claim]) -> Result<usize, SystemError> {
        let mut revoked = 0;
        for c in claims {
            self.world.record_claim(c)?;
            if c.exclusive {
                revoked += self.world.permissions.revoke_for_object(&c.object, Some(&c.agent));
            }
        }
        if revoked > 0 {
            let db = &self.world.permissions;
            self.observations.retain(|p| db.get(&p.action, &p.object) == Some(p));
        }
        self.retrain()?;
        Ok(revoked)
    }

    /// Posteriors from scratch: priors updated by every recorded
    /// observation, in order, under the current rules.
    pub fn recompute_posteriors(&mut self) -> Result<(), SystemError> {
        self.world.clear_inferences();
        self.inconsistent.clear();
        if !self.config.inference {
            return Ok(());
        }
        let mut current: BTreeMap<ObjectId, ObjectFacts> = BTreeMap::new();
        for p in &self.observations {
            let facts = match current.remove(&p.object) {
                Some(f) => f,
                None => self.world.facts(&p.object, Belief::Prior)?,
            };
            let (updated, consistent) = bayes_update_all(self.learner.rules(), &p.action, &facts, p.is_forbidden())?;
            if !consistent {
                self.inconsistent.push(p.clone());
            }
            current.insert(p.object.clone(), updated);
        }
        for (o, facts) in current {
            for (a, p) in facts.ownership {
                self.world.set_inferred(&o, &a, p)?;
            }
        }
        Ok(())
    }

    /// Applies a dual-mode instruction: claims, then the permission
    /// (re-induction when the stored permissions conflict with the rules,
    /// inference otherwise), then the rule.
    pub fn handle_instruction(&mut self, instr: &Instruction) -> Result<InstructionReport, SystemError> {
        if instr.is_empty() {
            return Err(WorldError::EmptyInstruction.into());
        }
        if let Some(p) = &instr.permission {
            self.world.object(&p.object)?;
            if !self.world.actions.contains(&p.action) {
                return Err(WorldError::UnknownAction(p.action.clone()).into());
            }
        }
        let mut report = InstructionReport {
            revoked: self.record_claims(&instr.claims)?,
            ..InstructionReport::default()
        };
        if let Some(p) = &instr.permission {
            let conflict = self.conflict_fraction()?;
            report.conflict_fraction = Some(conflict);
            self.world.record_permission(p.clone(), instr.source.clone())?;
            self.observations.retain(|q| q.action != p.action || q.object != p.object);
            if self.config.induction && conflict > self.config.conflict_threshold {
                let examples = self.examples()?;
                self.learner.batch_reinduce(&examples, &self.world.vocabulary)?;
                report.reinduced = true;
            } else if self.config.inference {
                self.observations.push(p.clone());
                report.inferred = true;
            }
        }
        if let Some(rule) = &instr.rule {
            let examples = self.examples()?;
            report.rule_outcome = Some(self.learner.learn_rule(&examples, rule, &self.world.vocabulary)?);
        }
        self.recompute_posteriors()?;
        report.inconsistent = !self.inconsistent.is_empty();
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Atom, PICK_UP, TRASH};
    use crate::world::ObjectState;

    fn facts(owners: &[(&str, f64)]) -> ObjectFacts {
        ObjectFacts {
            object: "o".into(),
            color: Some("red".into()),
            area: None,
            ownership: owners.iter().map(|(a, p)| ((*a).into(), *p)).collect(),
        }
    }

    fn any_rule() -> RuleSet {
        RuleSet::from_rules([Rule::forbid(TRASH, [Atom::owned_by_any()]).unwrap()])
    }

    #[test]
    fn single_agent_forbid_implies_owned() {
        let u = bayes_update(&any_rule(), TRASH, &facts(&[("a", 0.5)]), &"a".into(), true).unwrap();
        assert!((u.posterior - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_agents_two_thirds() {
        let f = facts(&[("a", 0.5), ("b", 0.5)]);
        let (out, ok) = bayes_update_all(&any_rule(), TRASH, &f, true).unwrap();
        assert!(ok);
        for (_, p) in out.ownership {
            assert!((p - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn irrelevant_rules_are_identity() {
        let rules = RuleSet::from_rules([Rule::forbid(TRASH, [Atom::colored("red")]).unwrap()]);
        let u = bayes_update(&rules, TRASH, &facts(&[("a", 0.3)]), &"a".into(), true).unwrap();
        assert_eq!(u.posterior, 0.3);
        let u = bayes_update(&RuleSet::new(), TRASH, &facts(&[("a", 0.3)]), &"a".into(), false).unwrap();
        assert_eq!(u.posterior, 0.3);
    }

    #[test]
    fn impossible_observation_flags() {
        let u = bayes_update(&RuleSet::new(), TRASH, &facts(&[("a", 0.3)]), &"a".into(), true).unwrap();
        assert!(u.inconsistent);
        assert_eq!(u.posterior, 0.3);
    }

    #[test]
    fn allowed_observation_lowers_ownership() {
        let u = bayes_update(&any_rule(), TRASH, &facts(&[("a", 0.5)]), &"a".into(), false).unwrap();
        assert_eq!(u.posterior, 0.0);
    }

    fn world(n: usize) -> World {
        let mut w = World::new();
        for a in ["casey", "jake"] {
            w.add_agent(a).unwrap();
        }
        for i in 0..n {
            w.add_object(ObjectState::new(format!("o{i}"), [i as f64 * 0.1, 0.0, 0.0], "blue")).unwrap();
        }
        w
    }

    #[test]
    fn thats_caseys_has_three_effects() {
        let mut sys = OwnershipSystem::new(world(3), SystemConfig::default());
        let rule = Rule::forbid(PICK_UP, [Atom::owned_by("casey")]).unwrap();
        let instr = Instruction::default()
            .claim(Claim::new("o1", "casey", 1.0))
            .permission(Permission::forbid(PICK_UP, "o1"))
            .rule(rule.clone());
        sys.handle_instruction(&instr).unwrap();
        assert_eq!(sys.world.ownership_prior(&"o1".into(), &"casey".into()).unwrap(), 1.0);
        assert_eq!(sys.world.permissions.len(), 1);
        assert!(sys.rules().contains(&rule));
        assert!(sys.model(&"casey".into()).is_some());
    }

    #[test]
    fn empty_instruction_rejected() {
        let mut sys = OwnershipSystem::new(world(1), SystemConfig::default());
        assert!(sys.handle_instruction(&Instruction::default()).is_err());
    }

    #[test]
    fn conflict_boundary_is_strict() {
        let mut sys = OwnershipSystem::new(world(10), SystemConfig::default());
        for i in 0..9 {
            sys.world.record_permission(Permission::allow(TRASH, format!("o{i}")), None).unwrap();
        }
        sys.world.record_permission(Permission::forbid(TRASH, "o9"), None).unwrap();
        assert!((sys.conflict_fraction().unwrap() - 0.1).abs() < 1e-12);
        let r = sys
            .handle_instruction(&Instruction::default().permission(Permission::allow(TRASH, "o0")))
            .unwrap();
        assert!(!r.reinduced);
        assert!(r.inferred);
        sys.world.record_permission(Permission::forbid(TRASH, "o8"), None).unwrap();
        let r = sys
            .handle_instruction(&Instruction::default().permission(Permission::allow(TRASH, "o1")))
            .unwrap();
        assert!(r.reinduced);
    }

    #[test]
    fn posteriors_follow_observations() {
        let mut sys = OwnershipSystem::new(world(2), SystemConfig::default());
        sys.pin_rules([Rule::forbid(TRASH, [Atom::owned_by_any()]).unwrap()]).unwrap();
        let o: ObjectId = "o0".into();
        let casey: AgentId = "casey".into();
        assert_eq!(sys.ownership_posterior(&o, &casey).unwrap(), 0.5);
        sys.handle_instruction(&Instruction::default().permission(Permission::forbid(TRASH, "o0")))
            .unwrap();
        assert!((sys.ownership_posterior(&o, &casey).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(sys.world.ownership_prior(&o, &casey).unwrap(), 0.5);
        sys.handle_instruction(&Instruction::default().claim(Claim::new("o0", "casey", 1.0)))
            .unwrap();
        assert_eq!(sys.ownership_posterior(&o, &casey).unwrap(), 1.0);
    }

    #[test]
    fn exclusive_claim_revokes_other_sources() {
        let mut sys = OwnershipSystem::new(world(2), SystemConfig::default());
        let instr = Instruction::default()
            .claim(Claim::new("o0", "casey", 1.0))
            .permission(Permission::forbid(TRASH, "o0"))
            .from_source("casey");
        sys.handle_instruction(&instr).unwrap();
        let r = sys
            .handle_instruction(
                &Instruction::default()
                    .claim(Claim::new("o0", "jake", 1.0).exclusive())
                    .from_source("jake"),
            )
            .unwrap();
        assert_eq!(r.revoked, 1);
        assert!(sys.world.permissions.is_empty());
        assert_eq!(sys.world.ownership_prior(&"o0".into(), &"casey".into()).unwrap(), 0.0);
        assert!(sys.training_set(&"casey".into()).iter().all(|t| t.provenance == Provenance::Claim));
    }
}
