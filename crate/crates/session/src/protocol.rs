//! Wire types. Every request and response carries `version`; requests with
//! another version, unknown fields or unknown kinds are rejected.

use crate::snapshot::{OwnershipEntry, PermissionView, WorldSnapshot};
use ownership_norms::agent::{ActionRisk, Task};
use ownership_norms::dsl::Polarity;
use ownership_norms::infer::SystemConfig;
use ownership_norms::world::{AgentId, Claim, ObjectId, ObjectState, ObjectStatus};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Simulated seconds between an announcement and its execution.
pub const DEFAULT_ANNOUNCE_WINDOW: f64 = 2.0;

fn default_window() -> f64 {
    DEFAULT_ANNOUNCE_WINDOW
}

fn default_threshold() -> f64 {
    ownership_norms::agent::OBEDIENCE_THRESHOLD
}

fn default_agents() -> usize {
    3
}

fn default_per_category() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "camelCase",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
pub enum WorldSpec {
    /// The clustered block world of the experiments, without ground truth.
    Simulated {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_agents")]
        agents: usize,
        #[serde(default = "default_per_category")]
        objects_per_category: usize,
    },
    /// An explicit object list.
    Custom {
        agents: Vec<AgentId>,
        objects: Vec<ObjectState>,
        /// Claims known before the session starts.
        #[serde(default)]
        claims: Vec<Claim>,
        /// Initial clock, seconds.
        #[serde(default)]
        clock: f64,
    },
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec::Simulated {
            seed: 0,
            agents: default_agents(),
            objects_per_category: default_per_category(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default)]
    pub world: WorldSpec,
    /// Zero executes immediately.
    #[serde(default = "default_window")]
    pub announce_window: f64,
    #[serde(default = "default_threshold")]
    pub obedience_threshold: f64,
    #[serde(default)]
    pub system: SystemConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            world: WorldSpec::default(),
            announce_window: DEFAULT_ANNOUNCE_WINDOW,
            obedience_threshold: default_threshold(),
            system: SystemConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PermissionMsg {
    pub action: String,
    pub object: ObjectId,
    pub polarity: Polarity,
}

/// A teaching message. `rule` is rule text such as
/// `forbid trash if ownedBy any`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InstructionMsg {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub claims: Vec<Claim>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permission: Option<PermissionMsg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    /// The speaking user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<AgentId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "type",
    rename_all = "camelCase",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
pub enum Command {
    StartTask {
        task: Task,
    },
    RequestAction {
        action: String,
        object: ObjectId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        requested_by: Option<AgentId>,
    },
    Instruct {
        instruction: InstructionMsg,
    },
    /// Cancels the announced action and applies the instruction. Only
    /// valid while a window is open.
    Interrupt {
        instruction: InstructionMsg,
    },
    /// Moves the simulated clock forward.
    Advance {
        seconds: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CreateRequest {
    pub version: u32,
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CommandRequest {
    pub version: u32,
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateResponse {
    pub version: u32,
    pub session_id: String,
    pub time: f64,
    pub snapshot: WorldSnapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Ack {
    pub version: u32,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Events the command produced.
    #[serde(default)]
    pub events: Vec<SessionEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PendingView {
    pub action: String,
    pub object: ObjectId,
    pub window_closes_at: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskView {
    pub task: Task,
    pub remaining: Vec<ObjectId>,
    pub mistakes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateResponse {
    pub version: u32,
    pub session_id: String,
    pub time: f64,
    pub last_seq: u64,
    pub snapshot: WorldSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventsResponse {
    pub version: u32,
    pub events: Vec<SessionEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorResponse {
    pub version: u32,
    pub error: ErrorBody,
}

/// One numbered event. Sequence numbers start at 0 with the initial
/// snapshot and increase by one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionEvent {
    pub seq: u64,
    /// Simulated clock, seconds.
    pub time: f64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "camelCase")]
pub enum EventBody {
    StateSnapshot(WorldSnapshot),
    ActionAnnounced(Announced),
    ActionExecuted(Executed),
    ActionRefused(Refused),
    RuleLearned(RulesChanged),
    OwnershipUpdated(KnowledgeUpdate),
    MistakeCorrected(Correction),
    TaskDone(TaskSummary),
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::StateSnapshot(_) => "stateSnapshot",
            EventBody::ActionAnnounced(_) => "actionAnnounced",
            EventBody::ActionExecuted(_) => "actionExecuted",
            EventBody::ActionRefused(_) => "actionRefused",
            EventBody::RuleLearned(_) => "ruleLearned",
            EventBody::OwnershipUpdated(_) => "ownershipUpdated",
            EventBody::MistakeCorrected(_) => "mistakeCorrected",
            EventBody::TaskDone(_) => "taskDone",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Intent {
    Execute,
    Refuse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Origin {
    Task,
    Request,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Announced {
    pub action: String,
    pub object: ObjectId,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_by: Option<AgentId>,
    pub intent: Intent,
    /// The action first, then its prerequisites.
    pub risks: Vec<ActionRisk>,
    /// Absent when the action is refused or the window is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_closes_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Executed {
    pub action: String,
    pub object: ObjectId,
    pub status: ObjectStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RefusalReason {
    Forbidden,
    Interrupted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Refused {
    pub action: String,
    pub object: ObjectId,
    pub reason: RefusalReason,
    /// Rule text, or `permission forbid <action> <object>` for a stored
    /// object-specific permission.
    pub violated: Vec<String>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RulesChanged {
    pub rules: Vec<String>,
    pub added: Vec<String>,
    pub removed: Vec<String>,
}

/// Ownership entries that changed, plus the full permission list and
/// conflict fraction after an instruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KnowledgeUpdate {
    pub changed: Vec<OwnershipEntry>,
    pub permissions: Vec<PermissionView>,
    pub conflict_fraction: f64,
    pub reinduced: bool,
    pub revoked: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CorrectionPhase {
    /// The announced action was cancelled.
    Window,
    /// The action had already run.
    AfterExecution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Correction {
    pub action: String,
    pub object: ObjectId,
    pub phase: CorrectionPhase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskSummary {
    pub task: Task,
    pub mistakes: usize,
    pub executed: Vec<ObjectId>,
    pub refused: Vec<ObjectId>,
}

/// Applies one event to a snapshot. Replaying a session's events from the
/// empty state reproduces its queried snapshot.
pub fn apply_event(state: &mut Option<WorldSnapshot>, event: &SessionEvent) {
    match &event.body {
        EventBody::StateSnapshot(s) => *state = Some(s.clone()),
        _ if state.is_none() => {}
        EventBody::ActionExecuted(e) => {
            state.as_mut().expect("checked").set_status(&e.object, e.status);
        }
        EventBody::RuleLearned(r) => state.as_mut().expect("checked").rules = r.rules.clone(),
        EventBody::OwnershipUpdated(u) => {
            let s = state.as_mut().expect("checked");
            s.apply_entries(&u.changed);
            s.permissions = u.permissions.clone();
            s.conflict_fraction = u.conflict_fraction;
        }
        EventBody::ActionAnnounced(_)
        | EventBody::ActionRefused(_)
        | EventBody::MistakeCorrected(_)
        | EventBody::TaskDone(_) => {}
    }
}
