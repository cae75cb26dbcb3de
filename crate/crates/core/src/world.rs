//! Tracked objects and agents, the probabilistic ownership graph, and the
//! database of object-specific permissions.

use crate::dsl::{ActionRegistry, Polarity, Rule, Sort, Vocabulary, VocabularyError};
use crate::eval::ObjectFacts;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(ObjectId);
id_newtype!(AgentId);

/// Uninformative ownership prior for pairs with neither a claim nor a
/// percept prediction.
pub const DEFAULT_PRIOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("unknown object `{0}`")]
    UnknownObject(ObjectId),
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("object `{0}` is already tracked")]
    DuplicateObject(ObjectId),
    #[error("color `{0}` is not in the palette")]
    UnknownColor(String),
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("timestamp {0} is negative")]
    NegativeTimestamp(f64),
    #[error("instruction carries no claim, permission or rule")]
    EmptyInstruction,
    #[error(transparent)]
    Vocabulary(#[from] VocabularyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum ObjectStatus {
    #[default]
    Present,
    Trashed,
    Collected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectState {
    pub id: ObjectId,
    /// Meters.
    pub position: [f64; 3],
    pub color: String,
    /// Simulation-clock seconds of each agent's most recent interaction.
    /// Absent means never.
    #[serde(default)]
    pub last_interaction: BTreeMap<AgentId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<String>,
    #[serde(default)]
    pub status: ObjectStatus,
}

impl ObjectState {
    pub fn new(id: impl Into<ObjectId>, position: [f64; 3], color: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            position,
            color: color.into(),
            last_interaction: BTreeMap::new(),
            area: None,
            status: ObjectStatus::Present,
        }
    }

    pub fn with_interaction(mut self, agent: impl Into<AgentId>, at: f64) -> Self {
        self.last_interaction.insert(agent.into(), at);
        self
    }

    pub fn with_area(mut self, area: impl Into<String>) -> Self {
        self.area = Some(area.into());
        self
    }
}

/// An ownership claim by or about an agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Claim {
    pub object: ObjectId,
    pub agent: AgentId,
    pub probability: f64,
    /// Exclusive claims zero out every other agent's claim on the object.
    #[serde(default)]
    pub exclusive: bool,
}

impl Claim {
    pub fn new(object: impl Into<ObjectId>, agent: impl Into<AgentId>, probability: f64) -> Self {
        Self {
            object: object.into(),
            agent: agent.into(),
            probability,
            exclusive: false,
        }
    }

    pub fn exclusive(mut self) -> Self {
        self.exclusive = true;
        self
    }
}

/// Per-(object, agent) ownership probabilities. Not exclusive: an object's
/// probabilities may sum past one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OwnershipGraph {
    /// Percept-predicted (or externally supplied) priors.
    pub prior: BTreeMap<ObjectId, BTreeMap<AgentId, f64>>,
    /// Explicit claims. Shadow every other entry on read.
    pub claimed: BTreeMap<ObjectId, BTreeMap<AgentId, f64>>,
    /// Rule-based inferences layered on top of the priors.
    pub posterior: BTreeMap<ObjectId, BTreeMap<AgentId, f64>>,
}

fn lookup(map: &BTreeMap<ObjectId, BTreeMap<AgentId, f64>>, o: &ObjectId, a: &AgentId) -> Option<f64> {
    map.get(o).and_then(|m| m.get(a)).copied()
}

impl OwnershipGraph {
    pub fn claim(&self, o: &ObjectId, a: &AgentId) -> Option<f64> {
        lookup(&self.claimed, o, a)
    }

    pub fn predicted(&self, o: &ObjectId, a: &AgentId) -> Option<f64> {
        lookup(&self.prior, o, a)
    }

    pub fn inferred(&self, o: &ObjectId, a: &AgentId) -> Option<f64> {
        lookup(&self.posterior, o, a)
    }

    fn all_values(&self) -> impl Iterator<Item = f64> + '_ {
        [&self.prior, &self.claimed, &self.posterior]
            .into_iter()
            .flat_map(|m| m.values().flat_map(|inner| inner.values().copied()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Permission {
    pub action: String,
    pub object: ObjectId,
    pub polarity: Polarity,
    /// Probability that the action is forbidden on the object.
    pub certainty: f64,
}

impl Permission {
    pub fn forbid(action: impl Into<String>, object: impl Into<ObjectId>) -> Self {
        Self::with_certainty(action, object, 1.0)
    }

    pub fn allow(action: impl Into<String>, object: impl Into<ObjectId>) -> Self {
        Self::with_certainty(action, object, 0.0)
    }

    /// Polarity follows the certainty at 0.5.
    pub fn with_certainty(action: impl Into<String>, object: impl Into<ObjectId>, certainty: f64) -> Self {
        Self {
            action: action.into(),
            object: object.into(),
            polarity: if certainty >= 0.5 { Polarity::Forbid } else { Polarity::Allow },
            certainty,
        }
    }

    pub fn is_forbidden(&self) -> bool {
        self.polarity == Polarity::Forbid
    }

    /// A certain entry overrides rule predictions.
    pub fn is_certain(&self) -> bool {
        self.certainty == 0.0 || self.certainty == 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PermissionEntry {
    pub permission: Permission,
    /// Instruction order; bumped on overwrite.
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<AgentId>,
}

/// At most one entry per (action, object); later writes overwrite.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PermissionDb {
    entries: BTreeMap<(String, ObjectId), PermissionEntry>,
    next_seq: u64,
}

impl PermissionDb {
    pub fn upsert(&mut self, permission: Permission, source: Option<AgentId>) {
        let key = (permission.action.clone(), permission.object.clone());
        let seq = self.next_seq;
        self.next_seq += 1;
        self.entries.insert(
            key,
            PermissionEntry {
                permission,
                seq,
                source,
            },
        );
    }

    pub fn get(&self, action: &str, object: &ObjectId) -> Option<&Permission> {
        self.entries
            .get(&(action.to_owned(), object.clone()))
            .map(|e| &e.permission)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in instruction order.
    pub fn ordered(&self) -> Vec<&PermissionEntry> {
        let mut v: Vec<_> = self.entries.values().collect();
        v.sort_by_key(|e| e.seq);
        v
    }

    pub fn permissions(&self) -> impl Iterator<Item = &Permission> {
        self.ordered().into_iter().map(|e| &e.permission)
    }

    /// Drops entries on `object` instructed by anyone other than `keep`.
    pub fn revoke_for_object(&mut self, object: &ObjectId, keep: Option<&AgentId>) -> usize {
        let before = self.entries.len();
        self.entries
            .retain(|(_, o), e| o != object || e.source.is_none() || e.source.as_ref() == keep);
        before - self.entries.len()
    }
}

/// A dual-mode teaching message: any subset of claims, one permission and
/// one rule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Instruction {
    #[serde(default)]
    pub claims: Vec<Claim>,
    #[serde(default)]
    pub permission: Option<Permission>,
    #[serde(default)]
    pub rule: Option<Rule>,
    #[serde(default)]
    pub source: Option<AgentId>,
    #[serde(default)]
    pub timestamp: f64,
}

impl Instruction {
    pub fn is_empty(&self) -> bool {
        self.claims.is_empty() && self.permission.is_none() && self.rule.is_none()
    }

    pub fn claim(mut self, claim: Claim) -> Self {
        self.claims.push(claim);
        self
    }

    pub fn permission(mut self, permission: Permission) -> Self {
        self.permission = Some(permission);
        self
    }

    pub fn rule(mut self, rule: Rule) -> Self {
        self.rule = Some(rule);
        self
    }

    pub fn from_source(mut self, agent: impl Into<AgentId>) -> Self {
        self.source = Some(agent.into());
        self
    }
}

/// Which ownership estimate to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Belief {
    /// Claims, else percept predictions, else the default. Used by induction.
    Prior,
    /// Claims, else rule-based inferences, else the prior.
    Posterior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct World {
    pub vocabulary: Vocabulary,
    pub actions: ActionRegistry,
    objects: BTreeMap<ObjectId, ObjectState>,
    agents: BTreeSet<AgentId>,
    pub ownership: OwnershipGraph,
    pub permissions: PermissionDb,
    pub default_prior: f64,
    /// Simulation clock, seconds since session start.
    pub now: f64,
    #[serde(skip)]
    retrain_queue: BTreeSet<AgentId>,
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

impl World {
    pub fn new() -> Self {
        Self {
            vocabulary: Vocabulary::builtin(),
            actions: ActionRegistry::builtin(),
            objects: BTreeMap::new(),
            agents: BTreeSet::new(),
            ownership: OwnershipGraph::default(),
            permissions: PermissionDb::default(),
            default_prior: DEFAULT_PRIOR,
            now: 0.0,
            retrain_queue: BTreeSet::new(),
        }
    }

    pub fn add_agent(&mut self, agent: impl Into<AgentId>) -> Result<(), WorldError> {
        let agent = agent.into();
        self.vocabulary.add_constant(Sort::Agent, agent.as_str())?;
        self.agents.insert(agent);
        Ok(())
    }

    pub fn add_object(&mut self, object: ObjectState) -> Result<(), WorldError> {
        if self.objects.contains_key(&object.id) {
            return Err(WorldError::DuplicateObject(object.id));
        }
        if !self.vocabulary.has_constant(Sort::Color, &object.color) {
            return Err(WorldError::UnknownColor(object.color));
        }
        for (agent, t) in &object.last_interaction {
            if !self.agents.contains(agent) {
                return Err(WorldError::UnknownAgent(agent.clone()));
            }
            if *t < 0.0 {
                return Err(WorldError::NegativeTimestamp(*t));
            }
        }
        if let Some(area) = &object.area {
            self.vocabulary.add_constant(Sort::Area, area.as_str())?;
        }
        self.objects.insert(object.id.clone(), object);
        Ok(())
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentId> {
        self.agents.iter()
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn has_agent(&self, agent: &AgentId) -> bool {
        self.agents.contains(agent)
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectState> {
        self.objects.values()
    }

    pub fn object_ids(&self) -> impl Iterator<Item = &ObjectId> {
        self.objects.keys()
    }

    pub fn object(&self, id: &ObjectId) -> Result<&ObjectState, WorldError> {
        self.objects.get(id).ok_or_else(|| WorldError::UnknownObject(id.clone()))
    }

    pub fn object_mut(&mut self, id: &ObjectId) -> Result<&mut ObjectState, WorldError> {
        self.objects.get_mut(id).ok_or_else(|| WorldError::UnknownObject(id.clone()))
    }

    fn check_pair(&self, o: &ObjectId, a: &AgentId) -> Result<(), WorldError> {
        self.object(o)?;
        if !self.agents.contains(a) {
            return Err(WorldError::UnknownAgent(a.clone()));
        }
        Ok(())
    }

    /// Records an explicit claim and queues percept retraining for the
    /// agents whose claims changed.
    pub fn record_claim(&mut self, claim: &Claim) -> Result<(), WorldError> {
        self.check_pair(&claim.object, &claim.agent)?;
        check_probability(claim.probability)?;
        let entry = self.ownership.claimed.entry(claim.object.clone()).or_default();
        entry.insert(claim.agent.clone(), claim.probability);
        self.retrain_queue.insert(claim.agent.clone());
        if claim.exclusive {
            for other in &self.agents {
                if other != &claim.agent {
                    entry.insert(other.clone(), 0.0);
                    self.retrain_queue.insert(other.clone());
                }
            }
        }
        Ok(())
    }

    pub fn record_permission(&mut self, permission: Permission, source: Option<AgentId>) -> Result<(), WorldError> {
        self.object(&permission.object)?;
        if !self.actions.contains(&permission.action) {
            return Err(WorldError::UnknownAction(permission.action));
        }
        check_probability(permission.certainty)?;
        self.permissions.upsert(permission, source);
        Ok(())
    }

    /// Sets the percept-predicted prior for a pair.
    pub fn set_predicted(&mut self, o: &ObjectId, a: &AgentId, p: f64) -> Result<(), WorldError> {
        self.check_pair(o, a)?;
        check_probability(p)?;
        self.ownership.prior.entry(o.clone()).or_default().insert(a.clone(), p);
        Ok(())
    }

    pub fn clear_predictions(&mut self, a: &AgentId) {
        for m in self.ownership.prior.values_mut() {
            m.remove(a);
        }
    }

    pub fn set_inferred(&mut self, o: &ObjectId, a: &AgentId, p: f64) -> Result<(), WorldError> {
        self.check_pair(o, a)?;
        check_probability(p)?;
        self.ownership.posterior.entry(o.clone()).or_default().insert(a.clone(), p);
        Ok(())
    }

    pub fn clear_inferences(&mut self) {
        self.ownership.posterior.clear();
    }

    /// Claimed value, else percept prediction, else the default prior.
    pub fn ownership_prior(&self, o: &ObjectId, a: &AgentId) -> Result<f64, WorldError> {
        self.check_pair(o, a)?;
        Ok(self
            .ownership
            .claim(o, a)
            .or_else(|| self.ownership.predicted(o, a))
            .unwrap_or(self.default_prior))
    }

    /// Claimed value, else the stored inference, else the prior.
    pub fn ownership_posterior(&self, o: &ObjectId, a: &AgentId) -> Result<f64, WorldError> {
        self.check_pair(o, a)?;
        match self.ownership.claim(o, a).or_else(|| self.ownership.inferred(o, a)) {
            Some(p) => Ok(p),
            None => self.ownership_prior(o, a),
        }
    }

    pub fn ownership(&self, o: &ObjectId, a: &AgentId, belief: Belief) -> Result<f64, WorldError> {
        match belief {
            Belief::Prior => self.ownership_prior(o, a),
            Belief::Posterior => self.ownership_posterior(o, a),
        }
    }

    /// Predicate truth values for one object under the chosen belief.
    pub fn facts(&self, o: &ObjectId, belief: Belief) -> Result<ObjectFacts, WorldError> {
        let obj = self.object(o)?;
        let ownership = self
            .agents
            .iter()
            .map(|a| Ok((a.clone(), self.ownership(o, a, belief)?)))
            .collect::<Result<Vec<_>, WorldError>>()?;
        Ok(ObjectFacts {
            object: o.clone(),
            color: Some(obj.color.clone()),
            area: obj.area.clone(),
            ownership,
        })
    }

    /// Agents whose claims changed since the last drain.
    pub fn drain_retrain_queue(&mut self) -> Vec<AgentId> {
        std::mem::take(&mut self.retrain_queue).into_iter().collect()
    }

    /// Every stored probability lies in [0, 1].
    pub fn probabilities_valid(&self) -> bool {
        self.ownership
            .all_values()
            .chain(self.permissions.permissions().map(|p| p.certainty))
            .all(|p| (0.0..=1.0).contains(&p))
    }
}

fn check_probability(p: f64) -> Result<(), WorldError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(WorldError::InvalidProbability(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{PICK_UP, TRASH};

    fn world() -> World {
        let mut w = World::new();
        for a in ["alexis", "blake"] {
            w.add_agent(a).unwrap();
        }
        for (i, c) in ["red", "blue", "green"].iter().enumerate() {
            w.add_object(ObjectState::new(format!("o{}", i + 1).as_str(), [i as f64, 0.0, 0.0], *c))
                .unwrap();
        }
        w
    }

    fn oid(s: &str) -> ObjectId {
        s.into()
    }

    fn aid(s: &str) -> AgentId {
        s.into()
    }

    #[test]
    fn joint_claims_are_retained() {
        let mut w = world();
        w.record_claim(&Claim::new("o1", "alexis", 1.0)).unwrap();
        w.record_claim(&Claim::new("o1", "blake", 1.0)).unwrap();
        assert_eq!(w.ownership_prior(&oid("o1"), &aid("alexis")).unwrap(), 1.0);
        assert_eq!(w.ownership_prior(&oid("o1"), &aid("blake")).unwrap(), 1.0);
        let mut queued = w.drain_retrain_queue();
        queued.sort();
        assert_eq!(queued, vec![aid("alexis"), aid("blake")]);
    }

    #[test]
    fn disclaim_and_exclusive_claims() {
        let mut w = world();
        w.record_claim(&Claim::new("o1", "alexis", 0.0)).unwrap();
        assert_eq!(w.ownership_prior(&oid("o1"), &aid("alexis")).unwrap(), 0.0);
        w.record_claim(&Claim::new("o1", "alexis", 1.0)).unwrap();
        w.record_claim(&Claim::new("o1", "blake", 1.0).exclusive()).unwrap();
        assert_eq!(w.ownership_prior(&oid("o1"), &aid("alexis")).unwrap(), 0.0);
        assert_eq!(w.ownership_prior(&oid("o1"), &aid("blake")).unwrap(), 1.0);
    }

    #[test]
    fn claims_shadow_predictions() {
        let mut w = world();
        w.set_predicted(&oid("o2"), &aid("blake"), 0.62).unwrap();
        assert_eq!(w.ownership_prior(&oid("o2"), &aid("blake")).unwrap(), 0.62);
        w.record_claim(&Claim::new("o2", "blake", 0.1)).unwrap();
        assert_eq!(w.ownership_prior(&oid("o2"), &aid("blake")).unwrap(), 0.1);
        w.set_inferred(&oid("o2"), &aid("blake"), 0.9).unwrap();
        assert_eq!(w.ownership_posterior(&oid("o2"), &aid("blake")).unwrap(), 0.1);
    }

    #[test]
    fn default_prior_without_claim_or_model() {
        let w = world();
        assert_eq!(w.ownership_prior(&oid("o3"), &aid("alexis")).unwrap(), 0.5);
        assert_eq!(w.ownership_posterior(&oid("o3"), &aid("alexis")).unwrap(), 0.5);
    }

    #[test]
    fn unknown_pairs_are_errors() {
        let mut w = world();
        assert!(matches!(
            w.record_claim(&Claim::new("o9", "alexis", 1.0)),
            Err(WorldError::UnknownObject(_))
        ));
        assert!(matches!(
            w.record_claim(&Claim::new("o1", "casey", 1.0)),
            Err(WorldError::UnknownAgent(_))
        ));
        assert!(matches!(
            w.record_claim(&Claim::new("o1", "alexis", 1.5)),
            Err(WorldError::InvalidProbability(_))
        ));
        assert!(matches!(
            w.record_permission(Permission::forbid("wave", "o1"), None),
            Err(WorldError::UnknownAction(_))
        ));
        assert!(matches!(
            w.add_object(ObjectState::new("o7", [0.0; 3], "mauve")),
            Err(WorldError::UnknownColor(_))
        ));
    }

    #[test]
    fn permissions_upsert() {
        let mut w = world();
        w.record_permission(Permission::forbid(TRASH, "o2"), None).unwrap();
        w.record_permission(Permission::allow(PICK_UP, "o3"), None).unwrap();
        assert_eq!(w.permissions.len(), 2);
        assert!(w.permissions.get(TRASH, &oid("o2")).unwrap().is_forbidden());
        assert!(!w.permissions.get(PICK_UP, &oid("o3")).unwrap().is_forbidden());
        w.record_permission(Permission::allow(TRASH, "o2"), None).unwrap();
        assert_eq!(w.permissions.len(), 2);
        assert!(!w.permissions.get(TRASH, &oid("o2")).unwrap().is_forbidden());
        let order: Vec<_> = w.permissions.permissions().map(|p| p.action.clone()).collect();
        assert_eq!(order, vec![PICK_UP.to_owned(), TRASH.to_owned()]);
    }

    #[test]
    fn revoke_keeps_own_and_unsourced_entries() {
        let mut w = world();
        w.record_permission(Permission::forbid(TRASH, "o2"), Some(aid("alexis"))).unwrap();
        w.record_permission(Permission::forbid(PICK_UP, "o2"), None).unwrap();
        assert_eq!(w.permissions.revoke_for_object(&oid("o2"), Some(&aid("blake"))), 1);
        assert_eq!(w.permissions.len(), 1);
    }
}
