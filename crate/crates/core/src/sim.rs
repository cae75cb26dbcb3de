//! The simulated block world and the three experiments run on it.

use crate::agent::{run_task_with_feedback, Oracle, Task, OBEDIENCE_THRESHOLD};
use crate::dsl::{Atom, Rule, COLLECT, PALETTE, PICK_UP, TRASH};
use crate::eval::{eval_rules, EvalError, Example, ObjectFacts};
use crate::induction::Learner;
use crate::infer::{OwnershipSystem, SystemConfig, SystemError};
use crate::logic::RuleSet;
use crate::world::{AgentId, Belief, Claim, Instruction, ObjectId, ObjectState, Permission, World};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Actions scored in every experiment, in report order.
pub const ACTIONS: [&str; 3] = [PICK_UP, COLLECT, TRASH];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimConfig {
    pub n_objects_per_category: usize,
    pub n_agents: usize,
    pub cluster_radius_range: (f64, f64),
    pub block_scatter: f64,
    pub owner_interaction_rate: f64,
    pub non_owner_interaction_rate: f64,
    pub n_colors: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Simulation clock at the moment of evaluation, seconds.
    pub clock: f64,
    /// Noisy priors: true owner ~ U(range).
    pub noisy_owner_prior: (f64, f64),
    /// Noisy priors: every other agent ~ U(range).
    pub noisy_non_owner_prior: (f64, f64),
    pub system: SystemConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_objects_per_category: 5,
            n_agents: 3,
            cluster_radius_range: (0.4, 0.8),
            block_scatter: 0.3,
            owner_interaction_rate: 0.1,
            non_owner_interaction_rate: 0.001,
            n_colors: 4,
            n_trials: 100,
            seed: 0,
            clock: 1e5,
            noisy_owner_prior: (0.4, 0.8),
            noisy_non_owner_prior: (0.2, 0.6),
            system: SystemConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_owned()));
        let (lo, hi) = self.cluster_radius_range;
        if self.n_objects_per_category == 0 || self.n_agents == 0 || self.n_trials == 0 {
            return bad("object, agent and trial counts must be positive");
        }
        if self.n_colors == 0 || self.n_colors > PALETTE.len() {
            return bad("color count must be between 1 and 4");
        }
        if !(0.0 < lo && lo <= hi) || self.block_scatter <= 0.0 {
            return bad("distances must be positive");
        }
        if !(self.owner_interaction_rate > self.non_owner_interaction_rate && self.non_owner_interaction_rate > 0.0) {
            return bad("owner interaction rate must exceed the positive non-owner rate");
        }
        for (lo, hi) in [self.noisy_owner_prior, self.noisy_non_owner_prior] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad("prior ranges must lie in [0, 1]");
            }
        }
        Ok(())
    }

    fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(trial as u64))
    }
}

pub fn agent_name(i: usize) -> AgentId {
    format!("agent{}", i + 1).into()
}

/// The norms every experiment teaches.
pub fn true_rules() -> RuleSet {
    RuleSet::from_rules([
        Rule::forbid(TRASH, [Atom::owned_by_any()]).expect("consistent"),
        Rule::forbid(PICK_UP, [Atom::owned_by("agent2")]).expect("consistent"),
        Rule::forbid(COLLECT, [Atom::colored("red")]).expect("consistent"),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    pub owner_of: BTreeMap<ObjectId, Option<AgentId>>,
    pub agents: Vec<AgentId>,
    pub rules: RuleSet,
    colors: BTreeMap<ObjectId, String>,
}

impl GroundTruth {
    /// Object facts under the true, certain ownership.
    pub fn facts(&self, object: &ObjectId) -> ObjectFacts {
        let owner = self.owner_of.get(object).cloned().flatten();
        ObjectFacts {
            object: object.clone(),
            color: self.colors.get(object).cloned(),
            area: None,
            ownership: self
                .agents
                .iter()
                .map(|a| (a.clone(), if Some(a) == owner.as_ref() { 1.0 } else { 0.0 }))
                .collect(),
        }
    }

    pub fn owns(&self, object: &ObjectId, agent: &AgentId) -> bool {
        self.owner_of.get(object).and_then(|o| o.as_ref()) == Some(agent)
    }

    pub fn permission(&self, action: &str, object: &ObjectId) -> Permission {
        if self.is_forbidden(action, object) {
            Permission::forbid(action, object.clone())
        } else {
            Permission::allow(action, object.clone())
        }
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectId> {
        self.owner_of.keys()
    }

    /// Claims stating the true ownership of `object` for every agent.
    pub fn claims(&self, object: &ObjectId) -> Vec<Claim> {
        self.agents
            .iter()
            .map(|a| Claim::new(object.clone(), a.clone(), if self.owns(object, a) { 1.0 } else { 0.0 }))
            .collect()
    }
}

impl Oracle for GroundTruth {
    fn is_forbidden(&self, action: &str, object: &ObjectId) -> bool {
        eval_rules(&self.rules, action, &self.facts(object)).expect("truth uses known agents") >= 0.5
    }

    /// Reveals the true relation for every agent named by an ownership
    /// rule of these actions; `ownedBy any` names every agent.
    fn relevant_claims(&self, actions: &[String], object: &ObjectId) -> Vec<Claim> {
        let mut named = Vec::new();
        for rule in self.rules.iter().filter(|r| actions.contains(&r.action)) {
            for atom in rule.conditions().iter().filter(|a| a.is_ownership()) {
                match atom.agent() {
                    Some(a) => named.push(AgentId::from(a)),
                    None => named.extend(self.agents.iter().cloned()),
                }
            }
        }
        named.sort();
        named.dedup();
        named
            .into_iter()
            .map(|a| {
                let p = if self.owns(object, &a) { 1.0 } else { 0.0 };
                Claim::new(object.clone(), a, p)
            })
            .collect()
    }
}

/// Places the clusters, scatters the blocks and samples interaction gaps.
///
/// Objects are `o01`, `o02`, ...: the unowned cluster first, then each
/// agent's cluster in turn.
pub fn generate_world(config: &SimConfig, rng: &mut impl Rng) -> Result<(World, GroundTruth), SimError> {
    config.validate()?;
    let mut world = World::new();
    world.now = config.clock;
    let agents: Vec<AgentId> = (0..config.n_agents).map(agent_name).collect();
    for a in &agents {
        world.add_agent(a.clone()).map_err(SystemError::from)?;
    }
    let owner_gap = Exp::new(config.owner_interaction_rate).expect("positive rate");
    let other_gap = Exp::new(config.non_owner_interaction_rate).expect("positive rate");
    let sector = 2.0 * PI / config.n_agents as f64;
    let (r_lo, r_hi) = config.cluster_radius_range;
    let mut owner_of = BTreeMap::new();
    let mut colors = BTreeMap::new();
    let mut index = 0;
    for category in 0..=config.n_agents {
        let owner = category.checked_sub(1).map(|i| agents[i].clone());
        let center = match category {
            0 => [0.0, 0.0],
            k => {
                let r = rng.random_range(r_lo..=r_hi);
                let theta = sector * ((k - 1) as f64 + rng.random::<f64>());
                [r * theta.cos(), r * theta.sin()]
            }
        };
        for _ in 0..config.n_objects_per_category {
            index += 1;
            let id: ObjectId = format!("o{index:02}").into();
            let rho = config.block_scatter * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let color = PALETTE[rng.random_range(0..config.n_colors)];
            let mut obj = ObjectState::new(
                id.clone(),
                [center[0] + rho * phi.cos(), center[1] + rho * phi.sin(), 0.0],
                color,
            );
            for a in &agents {
                let gap = if Some(a) == owner.as_ref() {
                    owner_gap.sample(rng)
                } else {
                    other_gap.sample(rng)
                };
                obj = obj.with_interaction(a.clone(), (config.clock - gap).max(0.0));
            }
            world.add_object(obj).map_err(SystemError::from)?;
            owner_of.insert(id.clone(), owner.clone());
            colors.insert(id, color.to_owned());
        }
    }
    Ok((
        world,
        GroundTruth {
            owner_of,
            agents,
            rules: true_rules(),
            colors,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("prediction and truth keys differ")]
    KeyMismatch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Metrics>) -> Metrics {
        let mut n = 0.0;
        let mut sum = Metrics::default();
        for m in items {
            n += 1.0;
            sum.accuracy += m.accuracy;
            sum.f1 += m.f1;
        }
        if n == 0.0 {
            return sum;
        }
        Metrics {
            accuracy: sum.accuracy / n,
            f1: sum.f1 / n,
        }
    }
}

/// Accuracy and F1 of thresholded predictions; F1 is 0 without true
/// positives.
pub fn metrics_accuracy_f1<K: Ord>(
    predicted: &BTreeMap<K, f64>,
    truth: &BTreeMap<K, bool>,
    threshold: f64,
) -> Result<Metrics, MetricsError> {
    if predicted.len() != truth.len() || predicted.keys().zip(truth.keys()).any(|(a, b)| a != b) {
        return Err(MetricsError::KeyMismatch);
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (p, t) in predicted.values().zip(truth.values()) {
        let pos = *p >= threshold;
        match (pos, *t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        if pos == *t {
            correct += 1;
        }
    }
    let n = predicted.len();
    let accuracy = if n == 0 { 1.0 } else { correct as f64 / n as f64 };
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    Ok(Metrics { accuracy, f1 })
}

/// Rule accuracy/F1 over every object, averaged across `actions`.
pub fn rule_metrics(
    rules: &RuleSet,
    truth: &GroundTruth,
    actions: &[&str],
    facts: impl Fn(&ObjectId) -> Result<ObjectFacts, SimError>,
) -> Result<Metrics, SimError> {
    let mut per_action = Vec::new();
    for &action in actions {
        let mut predicted = BTreeMap::new();
        let mut actual = BTreeMap::new();
        for o in truth.objects() {
            predicted.insert(o.clone(), eval_rules(rules, action, &facts(o)?)?);
            actual.insert(o.clone(), truth.is_forbidden(action, o));
        }
        per_action.push(metrics_accuracy_f1(&predicted, &actual, 0.5)?);
    }
    Ok(Metrics::mean(&per_action))
}

/// Ownership accuracy/F1 over every (object, agent) pair of `objects`.
pub fn ownership_metrics<'a>(
    world: &World,
    truth: &GroundTruth,
    objects: impl IntoIterator<Item = &'a ObjectId>,
) -> Result<Metrics, SimError> {
    let mut predicted = BTreeMap::new();
    let mut actual = BTreeMap::new();
    for o in objects {
        for a in &truth.agents {
            let p = world.ownership_posterior(o, a).map_err(SystemError::from)?;
            predicted.insert((o.clone(), a.clone()), p);
            actual.insert((o.clone(), a.clone()), truth.owns(o, a));
        }
    }
    Ok(metrics_accuracy_f1(&predicted, &actual, 0.5)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Noise {
    Noiseless,
    Noisy,
}

impl fmt::Display for Noise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Noise::Noiseless => "off",
            Noise::Noisy => "on",
        })
    }
}

impl FromStr for Noise {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" | "noiseless" => Ok(Noise::Noiseless),
            "on" | "noisy" => Ok(Noise::Noisy),
            other => Err(format!("unknown noise setting `{other}` (expected off or on)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormTrial {
    pub trial: usize,
    pub learned: Metrics,
    pub baseline: Metrics,
    pub rules: Vec<String>,
}

/// Sets every ownership prior from the truth, exactly or with noise.
fn set_priors(world: &mut World, truth: &GroundTruth, noise: Noise, config: &SimConfig, rng: &mut impl Rng) -> Result<(), SimError> {
    for o in truth.objects() {
        for a in &truth.agents {
            let owns = truth.owns(o, a);
            let p = match (noise, owns) {
                (Noise::Noiseless, true) => 1.0,
                (Noise::Noiseless, false) => 0.0,
                (Noise::Noisy, true) => rng.random_range(config.noisy_owner_prior.0..=config.noisy_owner_prior.1),
                (Noise::Noisy, false) => {
                    rng.random_range(config.noisy_non_owner_prior.0..=config.noisy_non_owner_prior.1)
                }
            };
            world.set_predicted(o, a, p).map_err(SystemError::from)?;
        }
    }
    Ok(())
}

fn prior_facts(world: &World) -> impl Fn(&ObjectId) -> Result<ObjectFacts, SimError> + '_ {
    |o| Ok(world.facts(o, Belief::Prior).map_err(SystemError::from)?)
}

/// Number of objects a fraction selects out of `n`.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// One norm-learning trial: stream the true permissions of a random
/// `fraction` of the objects through incremental induction, then score the
/// induced rules on every object.
pub fn norm_learning_trial(config: &SimConfig, trial: usize, fraction: f64, noise: Noise) -> Result<NormTrial, SimError> {
    let mut rng = config.trial_rng(trial);
    let (mut world, truth) = generate_world(config, &mut rng)?;
    set_priors(&mut world, &truth, noise, config, &mut rng)?;
    let mut objects: Vec<ObjectId> = truth.objects().cloned().collect();
    objects.shuffle(&mut rng);
    objects.truncate(fraction_count(fraction, objects.len()));
    let mut stream: Vec<Permission> = objects
        .iter()
        .flat_map(|o| ACTIONS.iter().map(|a| truth.permission(a, o)))
        .collect();
    stream.shuffle(&mut rng);

    let mut learner = Learner::new(config.system.learner);
    let mut seen: Vec<Example> = Vec::with_capacity(stream.len());
    for p in stream {
        let facts = world.facts(&p.object, Belief::Prior).map_err(SystemError::from)?;
        seen.push(Example::new(p, facts));
        let e = seen.last().expect("just pushed").clone();
        learner.learn_example(&seen, &e, &world.vocabulary)?;
    }
    let learned = rule_metrics(learner.rules(), &truth, &ACTIONS, prior_facts(&world))?;
    let baseline = rule_metrics(&RuleSet::new(), &truth, &ACTIONS, prior_facts(&world))?;
    Ok(NormTrial {
        trial,
        learned,
        baseline,
        rules: learner.rules().to_strings(),
    })
}

pub fn run_norm_learning(config: &SimConfig, fraction: f64, noise: Noise) -> Result<Vec<NormTrial>, SimError> {
    config.validate()?;
    (0..config.n_trials)
        .into_par_iter()
        .map(|t| norm_learning_trial(config, t, fraction, noise))
        .collect()
}

/// Rule learning / inference wiring of the prediction experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Condition {
    /// No rules, no inference.
    NoneOff,
    /// Rules induced from the permissions, inference on.
    LearnOn,
    /// True rules given up front, inference on.
    GivenOn,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::NoneOff, Condition::LearnOn, Condition::GivenOn];
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::NoneOff => "noneOff",
            Condition::LearnOn => "learnOn",
            Condition::GivenOn => "givenOn",
        })
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noneOff" => Ok(Condition::NoneOff),
            "learnOn" => Ok(Condition::LearnOn),
            "givenOn" => Ok(Condition::GivenOn),
            other => Err(format!("unknown condition `{other}` (expected noneOff, learnOn or givenOn)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PredictionTrial {
    pub trial: usize,
    pub ownership: Metrics,
}

/// Teaches true ownership and permissions for a random half of the objects
/// and scores ownership on the other half.
pub fn prediction_trial(config: &SimConfig, trial: usize, condition: Condition) -> Result<PredictionTrial, SimError> {
    let mut rng = config.trial_rng(trial);
    let (world, truth) = generate_world(config, &mut rng)?;
    let mut sys_config = config.system;
    sys_config.percept = true;
    sys_config.induction = condition == Condition::LearnOn;
    sys_config.inference = condition != Condition::NoneOff;
    let mut system = OwnershipSystem::new(world, sys_config);
    if condition == Condition::GivenOn {
        system.pin_rules(truth.rules.iter().cloned())?;
    }
    let mut objects: Vec<ObjectId> = truth.objects().cloned().collect();
    objects.shuffle(&mut rng);
    let held_out = objects.split_off(objects.len() / 2);
    for o in &objects {
        for (i, action) in ACTIONS.iter().enumerate() {
            let mut instr = Instruction::default().permission(truth.permission(action, o));
            if i == 0 {
                instr.claims = truth.claims(o);
            }
            system.handle_instruction(&instr)?;
        }
    }
    Ok(PredictionTrial {
        trial,
        ownership: ownership_metrics(&system.world, &truth, &held_out)?,
    })
}

pub fn run_prediction_inference(config: &SimConfig, condition: Condition) -> Result<Vec<PredictionTrial>, SimError> {
    config.validate()?;
    (0..config.n_trials)
        .into_par_iter()
        .map(|t| prediction_trial(config, t, condition))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskTrial {
    pub trial: usize,
    pub mistakes: usize,
    /// Final rules for the task's action and its prerequisites, scored
    /// against the true ownership.
    pub rules: Metrics,
    /// Final ownership posteriors over every pair.
    pub ownership: Metrics,
    pub learned_rules: Vec<String>,
}

/// One task run from a fresh world and an empty learner. With `learning`
/// off the rule set stays empty.
pub fn task_trial(config: &SimConfig, trial: usize, task: Task, learning: bool) -> Result<TaskTrial, SimError> {
    let mut rng = config.trial_rng(trial);
    let (world, truth) = generate_world(config, &mut rng)?;
    let mut sys_config = config.system;
    sys_config.percept = true;
    sys_config.induction &= learning;
    sys_config.inference &= learning;
    let mut system = OwnershipSystem::new(world, sys_config);
    let mut order: Vec<ObjectId> = truth.objects().cloned().collect();
    order.shuffle(&mut rng);
    let run = run_task_with_feedback(&mut system, task, &truth, order, OBEDIENCE_THRESHOLD)?;
    let chain = system.world.actions.chain(task.action()).expect("task actions are built in");
    let chain: Vec<&str> = chain.iter().map(String::as_str).collect();
    let rules = rule_metrics(system.rules(), &truth, &chain, |o| Ok(truth.facts(o)))?;
    let ownership = ownership_metrics(&system.world, &truth, truth.objects())?;
    Ok(TaskTrial {
        trial,
        mistakes: run.mistakes,
        rules,
        ownership,
        learned_rules: system.rules().to_strings(),
    })
}

pub fn run_task_experiment(config: &SimConfig, task: Task, learning: bool) -> Result<Vec<TaskTrial>, SimError> {
    config.validate()?;
    (0..config.n_trials)
        .into_par_iter()
        .map(|t| task_trial(config, t, task, learning))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(seed: u64) -> (World, GroundTruth) {
        generate_world(&SimConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn world_shape() {
        for seed in 0..20 {
            let (w, truth) = world(seed);
            assert_eq!(w.objects().count(), 20);
            let mut counts = BTreeMap::new();
            for owner in truth.owner_of.values() {
                *counts.entry(owner.clone()).or_insert(0) += 1;
            }
            assert!(counts.values().all(|c| *c == 5));
            assert_eq!(counts.len(), 4);
            for o in w.objects() {
                assert_eq!(o.position[2], 0.0);
                assert_eq!(o.last_interaction.len(), 3);
            }
        }
    }

    #[test]
    fn clusters_respect_radius_and_sector() {
        for seed in 0..50 {
            let (w, truth) = world(seed);
            for k in 0..3 {
                let agent = agent_name(k);
                let members: Vec<_> = w.objects().filter(|o| truth.owns(&o.id, &agent)).collect();
                let cx = members.iter().map(|o| o.position[0]).sum::<f64>() / 5.0;
                let cy = members.iter().map(|o| o.position[1]).sum::<f64>() / 5.0;
                let r = cx.hypot(cy);
                assert!(r > 0.4 - 0.3 - 1e-9 && r < 0.8 + 0.3 + 1e-9);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(world(3), world(3));
        assert_ne!(world(3).0, world(4).0);
    }

    #[test]
    fn metric_definitions() {
        let keys = ["a", "b", "c", "d"];
        let pred: BTreeMap<_, _> = keys.iter().zip([1.0, 1.0, 0.0, 0.0]).map(|(k, v)| (*k, v)).collect();
        let truth: BTreeMap<_, _> = keys.iter().zip([true, false, true, false]).map(|(k, v)| (*k, v)).collect();
        let m = metrics_accuracy_f1(&pred, &truth, 0.5).unwrap();
        assert_eq!((m.accuracy, m.f1), (0.5, 0.5));
        let none: BTreeMap<_, _> = keys.iter().map(|k| (*k, 0.0)).collect();
        assert_eq!(metrics_accuracy_f1(&none, &truth, 0.5).unwrap().f1, 0.0);
        let all: BTreeMap<_, _> = keys.iter().map(|k| (*k, true)).collect();
        let perfect: BTreeMap<_, _> = keys.iter().map(|k| (*k, 1.0)).collect();
        assert_eq!(metrics_accuracy_f1(&perfect, &all, 0.5).unwrap(), Metrics { accuracy: 1.0, f1: 1.0 });
        let short: BTreeMap<_, _> = keys[..3].iter().map(|k| (*k, 0.0)).collect();
        assert!(metrics_accuracy_f1(&short, &truth, 0.5).is_err());
    }

    #[test]
    fn truth_permissions_follow_rules() {
        let (_, truth) = world(1);
        for o in truth.objects() {
            let owned = truth.owner_of[o].is_some();
            assert_eq!(truth.is_forbidden(TRASH, o), owned);
            assert_eq!(truth.is_forbidden(PICK_UP, o), truth.owns(o, &"agent2".into()));
        }
    }

    #[test]
    fn corrections_reveal_relevant_owners() {
        let (_, truth) = world(2);
        let chain = vec![COLLECT.to_owned(), PICK_UP.to_owned()];
        for o in truth.objects() {
            let p = if truth.owns(o, &"agent2".into()) { 1.0 } else { 0.0 };
            assert_eq!(truth.relevant_claims(&chain, o), vec![Claim::new(o.clone(), "agent2", p)]);
        }
        let chain = vec![TRASH.to_owned(), PICK_UP.to_owned()];
        for o in truth.objects() {
            let claims = truth.relevant_claims(&chain, o);
            assert_eq!(claims.len(), 3);
            assert_eq!(claims.iter().filter(|c| c.probability == 1.0).count(), usize::from(truth.owner_of[o].is_some()));
        }
    }

    #[test]
    fn noiseless_full_stream_learns() {
        let cfg = SimConfig::default();
        let trials: Vec<_> = (0..10).map(|i| norm_learning_trial(&cfg, i, 1.0, Noise::Noiseless).unwrap()).collect();
        let m = Metrics::mean(trials.iter().map(|t| &t.learned));
        assert!(m.accuracy > 0.95, "{m:?}");
        assert!(trials.iter().all(|t| t.baseline.f1 == 0.0));
    }
}
