//! Line-oriented teaching loop over a session with no announce window.

use ownership_norms::agent::Task;
use ownership_session::{
    Command, EventBody, InstructionMsg, PermissionMsg, Session, SessionConfig, SessionEvent,
};
use ownership_norms::dsl::Polarity;
use ownership_norms::world::Claim;
use std::io::{BufRead, Write};

pub const HELP: &str = "\
commands:
  forbid|allow <action> <object>        object-specific permission
  forbid|allow <action> [if <conds>]    rule, e.g. forbid trash if ownedBy any
  claim <object> <agent> [p] [exclusive] ownership claim (p defaults to 1)
  query own <object> <agent>            ownership prior and posterior
  request <action> <object>             ask for one action
  run collectAll|trashAll               run a task
  rules                                 learned rules
  objects                               objects with color and status
  state                                 snapshot as JSON
  help, quit";

enum Step {
    Continue,
    Quit,
}

pub struct Repl {
    session: Session,
}

fn describe(e: &SessionEvent) -> Option<String> {
    Some(match &e.body {
        EventBody::ActionExecuted(x) => format!("executed {} {}", x.action, x.object),
        EventBody::ActionRefused(x) => x.message.clone(),
        EventBody::RuleLearned(x) => format!("rules: {}", x.rules.join("; ")),
        EventBody::MistakeCorrected(x) => format!("correction noted for {} {}", x.action, x.object),
        EventBody::TaskDone(x) => format!(
            "{} done: executed [{}], refused [{}]",
            x.task,
            x.executed.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(", "),
            x.refused.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(", ")
        ),
        EventBody::OwnershipUpdated(x) if x.reinduced => "rules re-induced from stored permissions".to_owned(),
        _ => return None,
    })
}

impl Repl {
    pub fn new(mut config: SessionConfig) -> Result<Self, String> {
        config.announce_window = 0.0;
        Ok(Self {
            session: Session::new(config).map_err(|e| e.to_string())?,
        })
    }

    fn apply(&mut self, command: Command) -> Result<String, String> {
        let events = self.session.apply(&command).map_err(|e| e.to_string())?;
        Ok(events.iter().filter_map(describe).collect::<Vec<_>>().join("\n"))
    }

    fn instruct(&mut self, instruction: InstructionMsg) -> Result<String, String> {
        let out = self.apply(Command::Instruct { instruction })?;
        Ok(if out.is_empty() { "ok".to_owned() } else { out })
    }

    fn line(&mut self, line: &str) -> Result<(String, Step), String> {
        let words: Vec<&str> = line.split_whitespace().collect();
        let out = match words.as_slice() {
            [] => String::new(),
            ["quit"] | ["exit"] => return Ok((String::new(), Step::Quit)),
            ["help"] => HELP.to_owned(),
            ["rules"] => {
                let rules = self.session.system().rules().to_strings();
                if rules.is_empty() {
                    "(no rules)".to_owned()
                } else {
                    rules.join("\n")
                }
            }
            ["objects"] => self
                .session
                .system()
                .world
                .objects()
                .map(|o| format!("{} {} {:?}", o.id, o.color, o.status).to_lowercase())
                .collect::<Vec<_>>()
                .join("\n"),
            ["state"] => {
                serde_json::to_string_pretty(&self.session.snapshot().map_err(|e| e.to_string())?).expect("serializable")
            }
            ["query", "own", object, agent] => {
                let snap = self.session.snapshot().map_err(|e| e.to_string())?;
                let e = snap
                    .entry(object, agent)
                    .ok_or_else(|| format!("unknown object or agent: {object} {agent}"))?;
                format!("prior {:.4} posterior {:.4}", e.prior, e.posterior)
            }
            ["claim", object, agent, rest @ ..] => {
                let mut claim = Claim::new(*object, *agent, 1.0);
                for w in rest {
                    match *w {
                        "exclusive" => claim = claim.exclusive(),
                        p => claim.probability = p.parse().map_err(|_| format!("bad probability `{p}`"))?,
                    }
                }
                self.instruct(InstructionMsg {
                    claims: vec![claim],
                    ..InstructionMsg::default()
                })?
            }
            [polarity @ ("forbid" | "allow"), action, object] if *object != "if" => self.instruct(InstructionMsg {
                permission: Some(PermissionMsg {
                    action: (*action).to_owned(),
                    object: (*object).into(),
                    polarity: if *polarity == "forbid" { Polarity::Forbid } else { Polarity::Allow },
                }),
                ..InstructionMsg::default()
            })?,
            ["forbid" | "allow", ..] => self.instruct(InstructionMsg {
                rule: Some(line.trim().to_owned()),
                ..InstructionMsg::default()
            })?,
            ["request", action, object] => self.apply(Command::RequestAction {
                action: (*action).to_owned(),
                object: (*object).into(),
                requested_by: None,
            })?,
            ["run", task] => {
                let task: Task = task.parse()?;
                self.apply(Command::StartTask { task })?
            }
            _ => return Err(format!("unrecognized command `{}` (try `help`)", line.trim())),
        };
        Ok((out, Step::Continue))
    }

    /// Reads commands until EOF or `quit`. Errors are printed and the loop
    /// continues.
    pub fn run(&mut self, input: impl BufRead, mut output: impl Write, prompt: bool) -> std::io::Result<()> {
        let mut lines = input.lines();
        loop {
            if prompt {
                write!(output, "> ")?;
                output.flush()?;
            }
            let Some(line) = lines.next() else { return Ok(()) };
            match self.line(&line?) {
                Ok((_, Step::Quit)) => return Ok(()),
                Ok((text, Step::Continue)) => {
                    if !text.is_empty() {
                        writeln!(output, "{text}")?;
                    }
                }
                Err(e) => writeln!(output, "error: {e}")?,
            }
        }
    }
}
