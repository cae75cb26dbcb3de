use ownership_norms::dsl::Polarity;
use ownership_norms::infer::OwnershipSystem;
use ownership_norms::world::{AgentId, Belief, ObjectId, ObjectState, ObjectStatus};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OwnershipEntry {
    pub object: ObjectId,
    pub agent: AgentId,
    pub prior: f64,
    pub posterior: f64,
    pub claimed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PermissionView {
    pub action: String,
    pub object: ObjectId,
    pub polarity: Polarity,
    pub certainty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<AgentId>,
}

/// The queryable world state. Event replay reconstructs it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorldSnapshot {
    pub agents: Vec<AgentId>,
    pub objects: Vec<ObjectState>,
    /// Every (object, agent) pair, ordered by object then agent.
    pub ownership: Vec<OwnershipEntry>,
    /// Ordered by action then object.
    pub permissions: Vec<PermissionView>,
    pub rules: Vec<String>,
    pub conflict_fraction: f64,
}

impl WorldSnapshot {
    pub fn capture(system: &OwnershipSystem) -> Result<Self, ownership_norms::infer::SystemError> {
        let world = &system.world;
        let agents: Vec<AgentId> = world.agents().cloned().collect();
        let mut ownership = Vec::new();
        for o in world.object_ids() {
            for a in &agents {
                ownership.push(OwnershipEntry {
                    object: o.clone(),
                    agent: a.clone(),
                    prior: world.ownership(o, a, Belief::Prior)?,
                    posterior: world.ownership(o, a, Belief::Posterior)?,
                    claimed: world.ownership.claim(o, a).is_some(),
                });
            }
        }
        let mut permissions: Vec<PermissionView> = world
            .permissions
            .ordered()
            .into_iter()
            .map(|e| PermissionView {
                action: e.permission.action.clone(),
                object: e.permission.object.clone(),
                polarity: e.permission.polarity,
                certainty: e.permission.certainty,
                source: e.source.clone(),
            })
            .collect();
        permissions.sort_by(|a, b| (&a.action, &a.object).cmp(&(&b.action, &b.object)));
        Ok(Self {
            agents,
            objects: world.objects().cloned().collect(),
            ownership,
            permissions,
            rules: system.rules().to_strings(),
            conflict_fraction: system.conflict_fraction()?,
        })
    }

    pub fn object(&self, id: &str) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.id.as_str() == id)
    }

    pub fn entry(&self, object: &str, agent: &str) -> Option<&OwnershipEntry> {
        self.ownership
            .iter()
            .find(|e| e.object.as_str() == object && e.agent.as_str() == agent)
    }

    pub(crate) fn set_status(&mut self, object: &ObjectId, status: ObjectStatus) {
        if let Some(o) = self.objects.iter_mut().find(|o| &o.id == object) {
            o.status = status;
        }
    }

    /// Entries of `next` that differ from `self`.
    pub(crate) fn changed_entries(&self, next: &WorldSnapshot) -> Vec<OwnershipEntry> {
        next.ownership
            .iter()
            .filter(|e| self.entry(e.object.as_str(), e.agent.as_str()) != Some(*e))
            .cloned()
            .collect()
    }

    pub(crate) fn apply_entries(&mut self, entries: &[OwnershipEntry]) {
        for e in entries {
            match self
                .ownership
                .iter_mut()
                .find(|x| x.object == e.object && x.agent == e.agent)
            {
                Some(x) => *x = e.clone(),
                None => self.ownership.push(e.clone()),
            }
        }
    }
}
