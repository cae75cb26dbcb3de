use crate::protocol::*;
use crate::snapshot::WorldSnapshot;
use ownership_norms::agent::{decide_action, Decision, Task};
use ownership_norms::dsl::{parse_rule, Polarity};
use ownership_norms::eval::eval_rule;
use ownership_norms::infer::{OwnershipSystem, SystemError};
use ownership_norms::sim::{generate_world, SimConfig};
use ownership_norms::world::{AgentId, Belief, Instruction, ObjectId, ObjectStatus, Permission, World};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// The command is well formed but not allowed now.
    #[error("{0}")]
    Rejected(String),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Clone, Debug)]
struct Pending {
    action: String,
    object: ObjectId,
    origin: Origin,
    closes_at: f64,
}

#[derive(Clone, Debug)]
struct TaskState {
    task: Task,
    queue: VecDeque<ObjectId>,
    mistakes: usize,
    executed: Vec<ObjectId>,
    refused: Vec<ObjectId>,
}

/// One teaching session. Commands are applied one at a time; each returns
/// the events it produced, which are also kept in the session log.
#[derive(Clone, Debug)]
pub struct Session {
    system: OwnershipSystem,
    announce_window: f64,
    threshold: f64,
    clock: f64,
    events: Vec<SessionEvent>,
    task: Option<TaskState>,
    pending: Option<Pending>,
    executed: BTreeSet<(String, ObjectId)>,
    /// State as last published through events.
    published: WorldSnapshot,
}

fn build_world(spec: &WorldSpec) -> Result<World, SessionError> {
    let invalid = |m: String| SessionError::InvalidConfig(m);
    match spec {
        WorldSpec::Simulated {
            seed,
            agents,
            objects_per_category,
        } => {
            let config = SimConfig {
                n_agents: *agents,
                n_objects_per_category: *objects_per_category,
                seed: *seed,
                ..SimConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let (world, _) = generate_world(&config, &mut rng).map_err(|e| invalid(e.to_string()))?;
            Ok(world)
        }
        WorldSpec::Custom {
            agents,
            objects,
            claims,
            clock,
        } => {
            if agents.is_empty() {
                return Err(invalid("at least one agent is required".into()));
            }
            if objects.is_empty() {
                return Err(invalid("at least one object is required".into()));
            }
            if !(clock.is_finite() && *clock >= 0.0) {
                return Err(invalid("clock must be a non-negative number".into()));
            }
            let mut world = World::new();
            world.now = *clock;
            for a in agents {
                world.add_agent(a.clone()).map_err(|e| invalid(e.to_string()))?;
            }
            for o in objects {
                if let Some(a) = o.last_interaction.keys().find(|a| !world.has_agent(a)) {
                    return Err(invalid(format!("object `{}` names unknown agent `{a}`", o.id)));
                }
                world.add_object(o.clone()).map_err(|e| invalid(e.to_string()))?;
            }
            for c in claims {
                world.record_claim(c).map_err(|e| invalid(e.to_string()))?;
            }
            Ok(world)
        }
    }
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        if !(config.announce_window.is_finite() && config.announce_window >= 0.0) {
            return Err(SessionError::InvalidConfig("announce window must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&config.obedience_threshold) {
            return Err(SessionError::InvalidConfig("obedience threshold must lie in [0, 1]".into()));
        }
        let world = build_world(&config.world)?;
        let clock = world.now;
        let mut system = OwnershipSystem::new(world, config.system);
        // Initial claims train the percept models through an instruction.
        let claims: Vec<_> = match &config.world {
            WorldSpec::Custom { claims, .. } if !claims.is_empty() => claims.clone(),
            _ => Vec::new(),
        };
        if !claims.is_empty() {
            let instr = Instruction {
                claims,
                timestamp: clock,
                ..Instruction::default()
            };
            system.handle_instruction(&instr)?;
        }
        let published = WorldSnapshot::capture(&system)?;
        let mut session = Self {
            system,
            announce_window: config.announce_window,
            threshold: config.obedience_threshold,
            clock,
            events: Vec::new(),
            task: None,
            pending: None,
            executed: BTreeSet::new(),
            published: published.clone(),
        };
        session.emit(EventBody::StateSnapshot(published));
        Ok(session)
    }

    pub fn time(&self) -> f64 {
        self.clock
    }

    pub fn system(&self) -> &OwnershipSystem {
        &self.system
    }

    pub fn snapshot(&self) -> Result<WorldSnapshot, SessionError> {
        Ok(WorldSnapshot::capture(&self.system)?)
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn events_since(&self, seq: u64) -> &[SessionEvent] {
        let start = (seq as usize).min(self.events.len());
        &self.events[start..]
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn pending(&self) -> Option<PendingView> {
        self.pending.as_ref().map(|p| PendingView {
            action: p.action.clone(),
            object: p.object.clone(),
            window_closes_at: p.closes_at,
        })
    }

    pub fn task(&self) -> Option<TaskView> {
        self.task.as_ref().map(|t| TaskView {
            task: t.task,
            remaining: t.queue.iter().cloned().collect(),
            mistakes: t.mistakes,
        })
    }

    fn emit(&mut self, body: EventBody) {
        let seq = self.events.len() as u64;
        self.events.push(SessionEvent {
            seq,
            time: self.clock,
            body,
        });
    }

    /// Applies `command`, returning the events it produced. A rejected
    /// command leaves the session unchanged.
    pub fn apply(&mut self, command: &Command) -> Result<Vec<SessionEvent>, SessionError> {
        let backup = self.clone();
        let start = self.events.len();
        let result = match command {
            Command::StartTask { task } => self.start_task(*task),
            Command::RequestAction {
                action,
                object,
                requested_by,
            } => self.request_action(action, object, requested_by.clone()),
            Command::Instruct { instruction } => self.instruct(instruction),
            Command::Interrupt { instruction } => self.interrupt(instruction),
            Command::Advance { seconds } => self.advance(*seconds),
        };
        match result {
            Ok(()) => Ok(self.events[start..].to_vec()),
            Err(e) => {
                *self = backup;
                Err(e)
            }
        }
    }

    fn start_task(&mut self, task: Task) -> Result<(), SessionError> {
        if self.task.is_some() {
            return Err(SessionError::Rejected("a task is already running".into()));
        }
        if self.pending.is_some() {
            return Err(SessionError::Rejected("an announced action is pending".into()));
        }
        let queue = self
            .system
            .world
            .objects()
            .filter(|o| o.status == ObjectStatus::Present)
            .map(|o| o.id.clone())
            .collect();
        self.task = Some(TaskState {
            task,
            queue,
            mistakes: 0,
            executed: Vec::new(),
            refused: Vec::new(),
        });
        self.pump()
    }

    fn request_action(&mut self, action: &str, object: &ObjectId, by: Option<AgentId>) -> Result<(), SessionError> {
        if self.pending.is_some() {
            return Err(SessionError::Rejected("an announced action is pending".into()));
        }
        if !self.system.world.actions.contains(action) {
            return Err(SessionError::Rejected(format!("unknown action `{action}`")));
        }
        let status = self
            .system
            .world
            .object(object)
            .map_err(|e| SessionError::Rejected(e.to_string()))?
            .status;
        if status != ObjectStatus::Present {
            return Err(SessionError::Rejected(format!("object `{object}` is no longer present")));
        }
        if let Some(a) = by.as_ref().filter(|a| !self.system.world.has_agent(a)) {
            return Err(SessionError::Rejected(format!("unknown agent `{a}`")));
        }
        self.announce(action, object, Origin::Request, by)?;
        Ok(())
    }

    /// Decides, announces, and either refuses at once, executes at once
    /// (zero window) or opens a window. Returns whether the action was
    /// acted on or left pending.
    fn announce(&mut self, action: &str, object: &ObjectId, origin: Origin, by: Option<AgentId>) -> Result<bool, SessionError> {
        let decision = decide_action(&self.system.world, self.system.rules(), action, object, self.threshold)?;
        let closes_at = (decision.act && self.announce_window > 0.0).then(|| self.clock + self.announce_window);
        self.emit(EventBody::ActionAnnounced(Announced {
            action: action.to_owned(),
            object: object.clone(),
            origin,
            requested_by: by,
            intent: if decision.act { Intent::Execute } else { Intent::Refuse },
            risks: decision.risks.clone(),
            window_closes_at: closes_at,
        }));
        if !decision.act {
            let violated = self.violated(&decision, object)?;
            let message = format!(
                "Sorry, I can't {action} {object}: {}.",
                if violated.is_empty() { "it may be forbidden".to_owned() } else { violated.join("; ") }
            );
            self.emit(EventBody::ActionRefused(Refused {
                action: action.to_owned(),
                object: object.clone(),
                reason: RefusalReason::Forbidden,
                violated,
                message,
            }));
            if let Some(t) = self.task.as_mut().filter(|_| origin == Origin::Task) {
                t.refused.push(object.clone());
            }
            return Ok(false);
        }
        match closes_at {
            Some(closes_at) => {
                self.pending = Some(Pending {
                    action: action.to_owned(),
                    object: object.clone(),
                    origin,
                    closes_at,
                });
            }
            None => self.execute(action, object, origin)?,
        }
        Ok(true)
    }

    /// Rules and stored permissions behind each blocking action.
    fn violated(&self, decision: &Decision, object: &ObjectId) -> Result<Vec<String>, SessionError> {
        let facts = self.system.world.facts(object, Belief::Posterior).map_err(SystemError::from)?;
        let mut out = Vec::new();
        for risk in decision.blocking(self.threshold) {
            if let Some(p) = self.system.world.permissions.get(&risk.action, object) {
                if p.is_certain() && p.is_forbidden() {
                    out.push(format!("permission forbid {} {object}", risk.action));
                    continue;
                }
            }
            let mut fired: Vec<(f64, String)> = Vec::new();
            for r in self.system.rules().for_action(&risk.action) {
                let p = eval_rule(r, &facts).map_err(SystemError::from)?;
                if p > 0.0 {
                    fired.push((p, r.to_string()));
                }
            }
            fired.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            out.extend(fired.into_iter().map(|(_, r)| r));
        }
        Ok(out)
    }

    fn execute(&mut self, action: &str, object: &ObjectId, origin: Origin) -> Result<(), SessionError> {
        let status = match action {
            ownership_norms::dsl::TRASH => ObjectStatus::Trashed,
            ownership_norms::dsl::COLLECT => ObjectStatus::Collected,
            _ => self.system.world.object(object).map_err(SystemError::from)?.status,
        };
        self.system.world.object_mut(object).map_err(SystemError::from)?.status = status;
        self.published.set_status(object, status);
        for a in self.system.world.actions.chain(action).unwrap_or_default() {
            self.executed.insert((a, object.clone()));
        }
        self.emit(EventBody::ActionExecuted(Executed {
            action: action.to_owned(),
            object: object.clone(),
            status,
        }));
        if let Some(t) = self.task.as_mut().filter(|_| origin == Origin::Task) {
            t.executed.push(object.clone());
        }
        Ok(())
    }

    /// Runs the task until a window opens or the queue is empty.
    fn pump(&mut self) -> Result<(), SessionError> {
        while self.pending.is_none() {
            let Some(task) = self.task.as_mut() else { return Ok(()) };
            let action = task.task.action();
            let Some(object) = task.queue.pop_front() else {
                let t = self.task.take().expect("task present");
                self.emit(EventBody::TaskDone(TaskSummary {
                    task: t.task,
                    mistakes: t.mistakes,
                    executed: t.executed,
                    refused: t.refused,
                }));
                return Ok(());
            };
            if self.system.world.object(&object).map_err(SystemError::from)?.status != ObjectStatus::Present {
                continue;
            }
            self.announce(action, &object, Origin::Task, None)?;
        }
        Ok(())
    }

    fn advance(&mut self, seconds: f64) -> Result<(), SessionError> {
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(SessionError::Rejected("advance needs a non-negative number of seconds".into()));
        }
        let target = self.clock + seconds;
        while let Some(p) = self.pending.clone().filter(|p| p.closes_at <= target) {
            self.clock = p.closes_at;
            self.system.world.now = self.clock;
            self.pending = None;
            self.execute(&p.action, &p.object, p.origin)?;
            self.pump()?;
        }
        self.clock = target;
        self.system.world.now = target;
        Ok(())
    }

    fn to_instruction(&self, msg: &InstructionMsg) -> Result<Instruction, SessionError> {
        let world = &self.system.world;
        let reject = |m: String| SessionError::Rejected(m);
        for c in &msg.claims {
            world.object(&c.object).map_err(|e| reject(e.to_string()))?;
            if !world.has_agent(&c.agent) {
                return Err(reject(format!("unknown agent `{}`", c.agent)));
            }
            if !(0.0..=1.0).contains(&c.probability) {
                return Err(reject(format!("claim probability {} is outside [0, 1]", c.probability)));
            }
        }
        let permission = match &msg.permission {
            None => None,
            Some(p) => {
                world.object(&p.object).map_err(|e| reject(e.to_string()))?;
                if !world.actions.contains(&p.action) {
                    return Err(reject(format!("unknown action `{}`", p.action)));
                }
                Some(match p.polarity {
                    Polarity::Forbid => Permission::forbid(p.action.as_str(), p.object.clone()),
                    Polarity::Allow => Permission::allow(p.action.as_str(), p.object.clone()),
                })
            }
        };
        let rule = match &msg.rule {
            None => None,
            Some(text) => Some(parse_rule(text, &world.vocabulary, &world.actions).map_err(|e| reject(e.to_string()))?),
        };
        if let Some(a) = msg.source.as_ref().filter(|a| !world.has_agent(a)) {
            return Err(reject(format!("unknown agent `{a}`")));
        }
        let instr = Instruction {
            claims: msg.claims.clone(),
            permission,
            rule,
            source: msg.source.clone(),
            timestamp: self.clock,
        };
        if instr.is_empty() {
            return Err(reject("instruction carries no claim, permission or rule".into()));
        }
        Ok(instr)
    }

    /// Applies an instruction and publishes what changed.
    fn teach(&mut self, instr: &Instruction) -> Result<(), SessionError> {
        let report = self.system.handle_instruction(instr)?;
        let next = WorldSnapshot::capture(&self.system)?;
        if next.rules != self.published.rules {
            let before: BTreeSet<&String> = self.published.rules.iter().collect();
            let after: BTreeSet<&String> = next.rules.iter().collect();
            self.emit(EventBody::RuleLearned(RulesChanged {
                rules: next.rules.clone(),
                added: after.difference(&before).map(|s| (*s).clone()).collect(),
                removed: before.difference(&after).map(|s| (*s).clone()).collect(),
            }));
        }
        self.emit(EventBody::OwnershipUpdated(KnowledgeUpdate {
            changed: self.published.changed_entries(&next),
            permissions: next.permissions.clone(),
            conflict_fraction: next.conflict_fraction,
            reinduced: report.reinduced,
            revoked: report.revoked,
        }));
        self.published = next;
        Ok(())
    }

    fn instruct(&mut self, msg: &InstructionMsg) -> Result<(), SessionError> {
        let instr = self.to_instruction(msg)?;
        if let Some(p) = instr.permission.as_ref().filter(|p| p.is_forbidden()) {
            if self.executed.contains(&(p.action.clone(), p.object.clone())) {
                self.emit(EventBody::MistakeCorrected(Correction {
                    action: p.action.clone(),
                    object: p.object.clone(),
                    phase: CorrectionPhase::AfterExecution,
                }));
                if let Some(t) = self.task.as_mut() {
                    t.mistakes += 1;
                }
            }
        }
        self.teach(&instr)
    }

    fn interrupt(&mut self, msg: &InstructionMsg) -> Result<(), SessionError> {
        let Some(p) = self.pending.clone() else {
            return Err(SessionError::Rejected("no announce window is open".into()));
        };
        let instr = self.to_instruction(msg)?;
        self.pending = None;
        self.emit(EventBody::MistakeCorrected(Correction {
            action: p.action.clone(),
            object: p.object.clone(),
            phase: CorrectionPhase::Window,
        }));
        self.emit(EventBody::ActionRefused(Refused {
            action: p.action.clone(),
            object: p.object.clone(),
            reason: RefusalReason::Interrupted,
            violated: Vec::new(),
            message: format!("Stopped: I won't {} {}.", p.action, p.object),
        }));
        if let Some(t) = self.task.as_mut().filter(|_| p.origin == Origin::Task) {
            t.mistakes += 1;
            t.refused.push(p.object.clone());
        }
        self.teach(&instr)?;
        self.pump()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ownership_norms::world::{Claim, ObjectState};

    fn custom(window: f64) -> SessionConfig {
        SessionConfig {
            world: WorldSpec::Custom {
                agents: vec!["a".into(), "b".into()],
                objects: vec![
                    ObjectState::new("o1", [0.0, 0.0, 0.0], "red"),
                    ObjectState::new("o2", [1.0, 0.0, 0.0], "blue"),
                    ObjectState::new("o3", [2.0, 0.0, 0.0], "green"),
                    ObjectState::new("o4", [3.0, 0.0, 0.0], "yellow"),
                ],
                claims: Vec::new(),
                clock: 0.0,
            },
            announce_window: window,
            ..SessionConfig::default()
        }
    }

    fn kinds(events: &[SessionEvent]) -> Vec<&'static str> {
        events.iter().map(|e| e.body.kind()).collect()
    }

    #[test]
    fn default_world_has_twenty_objects() {
        let s = Session::new(SessionConfig::default()).unwrap();
        assert_eq!(s.snapshot().unwrap().objects.len(), 20);
        assert_eq!(kinds(s.events()), vec!["stateSnapshot"]);
    }

    #[test]
    fn custom_world_and_bad_configs() {
        assert_eq!(Session::new(custom(0.0)).unwrap().snapshot().unwrap().objects.len(), 4);
        let mut zero = custom(0.0);
        if let WorldSpec::Custom { agents, .. } = &mut zero.world {
            agents.clear();
        }
        assert!(matches!(Session::new(zero), Err(SessionError::InvalidConfig(_))));
        let sim_zero = SessionConfig {
            world: WorldSpec::Simulated {
                seed: 0,
                agents: 0,
                objects_per_category: 5,
            },
            ..SessionConfig::default()
        };
        assert!(matches!(Session::new(sim_zero), Err(SessionError::InvalidConfig(_))));
    }

    #[test]
    fn zero_window_runs_task_to_completion() {
        let mut s = Session::new(custom(0.0)).unwrap();
        let ev = s.apply(&Command::StartTask { task: Task::TrashAll }).unwrap();
        assert_eq!(ev.iter().filter(|e| e.body.kind() == "actionExecuted").count(), 4);
        assert_eq!(ev.last().unwrap().body.kind(), "taskDone");
        assert!(s.task().is_none());
    }

    #[test]
    fn windows_hold_execution_until_the_clock_passes() {
        let mut s = Session::new(custom(2.0)).unwrap();
        let ev = s.apply(&Command::StartTask { task: Task::CollectAll }).unwrap();
        assert_eq!(kinds(&ev), vec!["actionAnnounced"]);
        assert!(kinds(&s.apply(&Command::Advance { seconds: 1.5 }).unwrap()).is_empty());
        let ev = s.apply(&Command::Advance { seconds: 0.5 }).unwrap();
        assert_eq!(kinds(&ev), vec!["actionExecuted", "actionAnnounced"]);
        assert_eq!(ev[0].time, 2.0);
        let ev = s.apply(&Command::Advance { seconds: 100.0 }).unwrap();
        assert_eq!(ev.last().unwrap().body.kind(), "taskDone");
        assert_eq!(s.time(), 102.0);
    }

    #[test]
    fn interrupt_outside_window_is_rejected_without_side_effects() {
        let mut s = Session::new(custom(2.0)).unwrap();
        let msg = InstructionMsg {
            claims: vec![Claim::new("o1", "a", 1.0)],
            ..InstructionMsg::default()
        };
        let before = s.events().len();
        let err = s.apply(&Command::Interrupt { instruction: msg }).unwrap_err();
        assert_eq!(err, SessionError::Rejected("no announce window is open".into()));
        assert_eq!(s.events().len(), before);
    }

    #[test]
    fn bad_instructions_are_rejected_atomically() {
        let mut s = Session::new(custom(2.0)).unwrap();
        s.apply(&Command::StartTask { task: Task::TrashAll }).unwrap();
        let msg = InstructionMsg {
            claims: vec![Claim::new("o1", "a", 1.0)],
            rule: Some("forbid trash if ownedBy nobody".into()),
            ..InstructionMsg::default()
        };
        assert!(s.apply(&Command::Interrupt { instruction: msg }).is_err());
        assert!(s.pending().is_some());
        assert_eq!(s.system().world.ownership.claim(&"o1".into(), &"a".into()), None);
    }

    #[test]
    fn replay_reproduces_state() {
        let mut s = Session::new(custom(1.0)).unwrap();
        s.apply(&Command::StartTask { task: Task::TrashAll }).unwrap();
        s.apply(&Command::Advance { seconds: 1.0 }).unwrap();
        let msg = InstructionMsg {
            claims: vec![Claim::new("o2", "a", 1.0)],
            permission: Some(PermissionMsg {
                action: "trash".into(),
                object: "o2".into(),
                polarity: Polarity::Forbid,
            }),
            rule: Some("forbid trash if ownedBy a".into()),
            source: Some("a".into()),
        };
        s.apply(&Command::Interrupt { instruction: msg }).unwrap();
        s.apply(&Command::Advance { seconds: 10.0 }).unwrap();
        let mut state = None;
        for e in s.events() {
            apply_event(&mut state, e);
        }
        assert_eq!(state.unwrap(), s.snapshot().unwrap());
        for w in s.events().windows(2) {
            assert_eq!(w[1].seq, w[0].seq + 1);
        }
    }
}
