//! Norm-constrained task execution with corrective feedback.

use crate::dsl::{COLLECT, TRASH};
use crate::eval::eval_rule_set;
use crate::infer::{OwnershipSystem, SystemError};
use crate::logic::RuleSet;
use crate::world::{Belief, Claim, Instruction, ObjectId, ObjectStatus, Permission, World, WorldError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Default obedience threshold.
pub const OBEDIENCE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "collectAll")]
    CollectAll,
    #[serde(rename = "trashAll")]
    TrashAll,
}

impl Task {
    pub fn action(self) -> &'static str {
        match self {
            Task::CollectAll => COLLECT,
            Task::TrashAll => TRASH,
        }
    }

    fn done_status(self) -> ObjectStatus {
        match self {
            Task::CollectAll => ObjectStatus::Collected,
            Task::TrashAll => ObjectStatus::Trashed,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::CollectAll => "collectAll",
            Task::TrashAll => "trashAll",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "collectAll" => Ok(Task::CollectAll),
            "trashAll" => Ok(Task::TrashAll),
            other => Err(format!("unknown task `{other}` (expected collectAll or trashAll)")),
        }
    }
}

/// Predicted forbiddenness of one action in a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionRisk {
    pub action: String,
    pub forbiddenness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decision {
    pub act: bool,
    /// The action first, then its prerequisites.
    pub risks: Vec<ActionRisk>,
}

impl Decision {
    pub fn max_forbiddenness(&self) -> f64 {
        self.risks.iter().map(|r| r.forbiddenness).fold(0.0, f64::max)
    }

    /// Actions at or above the threshold.
    pub fn blocking(&self, threshold: f64) -> impl Iterator<Item = &ActionRisk> {
        self.risks.iter().filter(move |r| r.forbiddenness >= threshold)
    }
}

/// Refuses iff the action or any transitive prerequisite is forbidden with
/// probability at least `threshold`, reading ownership posteriors and
/// letting certain stored permissions override the rules.
pub fn decide_action(
    world: &World,
    rules: &RuleSet,
    action: &str,
    object: &ObjectId,
    threshold: f64,
) -> Result<Decision, SystemError> {
    let chain = world
        .actions
        .chain(action)
        .map_err(|_| WorldError::UnknownAction(action.to_owned()))?;
    let facts = world.facts(object, Belief::Posterior)?;
    let mut risks = Vec::with_capacity(chain.len());
    for a in chain {
        let forbiddenness = eval_rule_set(rules, &a, &facts, Some(&world.permissions))?;
        risks.push(ActionRisk { action: a, forbiddenness });
    }
    let act = risks.iter().all(|r| r.forbiddenness < threshold);
    Ok(Decision { act, risks })
}

/// Ground truth consulted for corrections.
pub trait Oracle {
    fn is_forbidden(&self, action: &str, object: &ObjectId) -> bool;

    /// True ownership revealed alongside a correction for these actions.
    fn relevant_claims(&self, actions: &[String], object: &ObjectId) -> Vec<Claim>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionRecord {
    pub object: ObjectId,
    pub risks: Vec<ActionRisk>,
    pub acted: bool,
    pub truly_forbidden: bool,
    pub corrected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskRun {
    pub task: Task,
    pub obedience_threshold: f64,
    pub visit_order: Vec<ObjectId>,
    pub mistakes: usize,
    pub log: Vec<DecisionRecord>,
}

/// The instructions a mistake on `object` triggers: the revealed owners
/// with the first permission, then the remaining permissions of the chain.
pub fn correction(oracle: &impl Oracle, chain: &[String], object: &ObjectId) -> Vec<Instruction> {
    let mut out: Vec<Instruction> = chain
        .iter()
        .map(|a| {
            let p = if oracle.is_forbidden(a, object) {
                Permission::forbid(a.as_str(), object.clone())
            } else {
                Permission::allow(a.as_str(), object.clone())
            };
            Instruction::default().permission(p)
        })
        .collect();
    if let Some(first) = out.first_mut() {
        first.claims = oracle.relevant_claims(chain, object);
    }
    out
}

/// Instructions recording a correct decision as the predicted permissions.
pub fn self_record(decision: &Decision, object: &ObjectId) -> Vec<Instruction> {
    decision
        .risks
        .iter()
        .map(|r| {
            Instruction::default().permission(Permission::with_certainty(
                r.action.as_str(),
                object.clone(),
                r.forbiddenness,
            ))
        })
        .collect()
}

/// Visits `order`, deciding each object, and feeds corrections (on
/// mistakes) or self-recorded predictions (otherwise) back through the
/// system.
pub fn run_task_with_feedback(
    system: &mut OwnershipSystem,
    task: Task,
    oracle: &impl Oracle,
    order: Vec<ObjectId>,
    threshold: f64,
) -> Result<TaskRun, SystemError> {
    let action = task.action();
    let mut run = TaskRun {
        task,
        obedience_threshold: threshold,
        visit_order: order.clone(),
        mistakes: 0,
        log: Vec::with_capacity(order.len()),
    };
    for object in order {
        let decision = decide_action(&system.world, system.rules(), action, &object, threshold)?;
        let chain: Vec<String> = decision.risks.iter().map(|r| r.action.clone()).collect();
        let truly_forbidden = chain.iter().any(|a| oracle.is_forbidden(a, &object));
        let mistake = decision.act == truly_forbidden;
        let instructions = if mistake {
            run.mistakes += 1;
            correction(oracle, &chain, &object)
        } else {
            self_record(&decision, &object)
        };
        for instr in &instructions {
            system.handle_instruction(instr)?;
        }
        if decision.act && !truly_forbidden {
            system.world.object_mut(&object)?.status = task.done_status();
        }
        run.log.push(DecisionRecord {
            object,
            risks: decision.risks,
            acted: decision.act,
            truly_forbidden,
            corrected: mistake,
        });
    }
    Ok(run)
}
