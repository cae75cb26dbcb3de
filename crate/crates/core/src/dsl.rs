//! Typed predicate vocabulary and the concise rule syntax:
//!
//! ```text
//! rule  := ("forbid" | "allow") ACTION ["if" atom ("and" atom)*]
//! atom  := ["not"] PREDICATE ARGUMENT
//! ```
//!
//! The target object of every predicate is implicit. `any` is an
//! existential over the agents known at evaluation time and is only legal
//! where the predicate's schema allows it.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub const OWNED_BY: &str = "ownedBy";
pub const IS_COLORED: &str = "isColored";
pub const IN_AREA: &str = "inArea";

pub const PICK_UP: &str = "pickUp";
pub const COLLECT: &str = "collect";
pub const TRASH: &str = "trash";

/// Default color palette.
pub const PALETTE: [&str; 4] = ["red", "green", "blue", "yellow"];

/// Sort of a predicate argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Sort {
    Agent,
    Color,
    Area,
}

impl Sort {
    /// Single-valued attributes: an object has exactly one color and lies in
    /// at most one area, so `isColored red` excludes `isColored blue`.
    pub fn is_functional(self) -> bool {
        matches!(self, Sort::Color | Sort::Area)
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sort::Agent => "agent",
            Sort::Color => "color",
            Sort::Area => "area",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateSchema {
    pub name: String,
    pub sort: Sort,
    pub allows_any: bool,
}

impl PredicateSchema {
    pub fn new(name: impl Into<String>, sort: Sort, allows_any: bool) -> Self {
        Self {
            name: name.into(),
            sort,
            allows_any,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabularyError {
    #[error("predicate `{0}` is already registered")]
    DuplicatePredicate(String),
    #[error("constant `{name}` is already a {existing}")]
    ConstantSortClash { name: String, existing: Sort },
    #[error("`any` is reserved")]
    ReservedName,
}

/// Predicate schemas plus the ground constants known for each sort.
///
/// Agent constants are open: an identifier that is not a known color or
/// area is accepted as an agent name when parsing. Color and area
/// constants must be registered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    schemas: Vec<PredicateSchema>,
    constants: BTreeMap<Sort, BTreeSet<String>>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Vocabulary {
    pub fn empty() -> Self {
        Self {
            schemas: Vec::new(),
            constants: BTreeMap::new(),
        }
    }

    /// `ownedBy(agent, any allowed)`, `isColored(color)`, `inArea(area)`
    /// and the four-color palette.
    pub fn builtin() -> Self {
        let mut v = Self::empty();
        for schema in [
            PredicateSchema::new(OWNED_BY, Sort::Agent, true),
            PredicateSchema::new(IS_COLORED, Sort::Color, false),
            PredicateSchema::new(IN_AREA, Sort::Area, false),
        ] {
            v.register_predicate(schema).expect("builtin predicates are distinct");
        }
        for color in PALETTE {
            v.add_constant(Sort::Color, color).expect("palette is distinct");
        }
        v
    }

    pub fn register_predicate(&mut self, schema: PredicateSchema) -> Result<(), VocabularyError> {
        if self.schemas.iter().any(|s| s.name == schema.name) {
            return Err(VocabularyError::DuplicatePredicate(schema.name));
        }
        self.schemas.push(schema);
        self.schemas.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(())
    }

    pub fn add_constant(&mut self, sort: Sort, name: impl Into<String>) -> Result<(), VocabularyError> {
        let name = name.into();
        if name == "any" {
            return Err(VocabularyError::ReservedName);
        }
        if let Some(existing) = self.sort_of_constant(&name) {
            if existing != sort {
                return Err(VocabularyError::ConstantSortClash { name, existing });
            }
        }
        self.constants.entry(sort).or_default().insert(name);
        Ok(())
    }

    pub fn remove_constant(&mut self, sort: Sort, name: &str) {
        if let Some(set) = self.constants.get_mut(&sort) {
            set.remove(name);
        }
    }

    /// Schemas in name order.
    pub fn schemas(&self) -> &[PredicateSchema] {
        &self.schemas
    }

    pub fn schema(&self, name: &str) -> Option<&PredicateSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    pub fn constants(&self, sort: Sort) -> impl Iterator<Item = &str> {
        self.constants
            .get(&sort)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn has_constant(&self, sort: Sort, name: &str) -> bool {
        self.constants.get(&sort).is_some_and(|s| s.contains(name))
    }

    pub fn sort_of_constant(&self, name: &str) -> Option<Sort> {
        self.constants
            .iter()
            .find(|(_, set)| set.contains(name))
            .map(|(sort, _)| *sort)
    }

    fn accepts_constant(&self, sort: Sort, name: &str) -> bool {
        match self.sort_of_constant(name) {
            Some(s) => s == sort,
            None => sort == Sort::Agent,
        }
    }
}

/// A predicate argument: a ground constant or the `any` quantifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Arg {
    Any,
    Const(String),
}

impl Arg {
    pub fn constant(name: impl Into<String>) -> Self {
        Arg::Const(name.into())
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Any => f.write_str("any"),
            Arg::Const(c) => f.write_str(c),
        }
    }
}

/// A possibly negated unary predicate over the implicit target object.
///
/// Field order gives the canonical ordering: predicate name, then argument.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub arg: Arg,
    pub negated: bool,
    pub sort: Sort,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, sort: Sort, arg: Arg) -> Self {
        Self {
            predicate: predicate.into(),
            arg,
            negated: false,
            sort,
        }
    }

    pub fn owned_by(agent: impl Into<String>) -> Self {
        Self::new(OWNED_BY, Sort::Agent, Arg::Const(agent.into()))
    }

    pub fn owned_by_any() -> Self {
        Self::new(OWNED_BY, Sort::Agent, Arg::Any)
    }

    pub fn colored(color: impl Into<String>) -> Self {
        Self::new(IS_COLORED, Sort::Color, Arg::Const(color.into()))
    }

    pub fn in_area(area: impl Into<String>) -> Self {
        Self::new(IN_AREA, Sort::Area, Arg::Const(area.into()))
    }

    pub fn negate(&self) -> Self {
        Self {
            negated: !self.negated,
            ..self.clone()
        }
    }

    pub fn not(self) -> Self {
        self.negate()
    }

    pub fn is_ownership(&self) -> bool {
        self.sort == Sort::Agent
    }

    /// The agent an ownership atom names; `None` for `any` and other sorts.
    pub fn agent(&self) -> Option<&str> {
        match (&self.sort, &self.arg) {
            (Sort::Agent, Arg::Const(a)) => Some(a),
            _ => None,
        }
    }

    /// Whether `self` being true forces `other` to be true.
    ///
    /// Covers identity, `ownedBy a ⇒ ownedBy any`, `not ownedBy any ⇒ not
    /// ownedBy a`, and for single-valued sorts `isColored c ⇒ not isColored d`.
    pub fn implies(&self, other: &Atom) -> bool {
        if self == other {
            return true;
        }
        if self.predicate != other.predicate {
            return false;
        }
        match (self.negated, other.negated, &self.arg, &other.arg) {
            (false, false, Arg::Const(_), Arg::Any) => true,
            (true, true, Arg::Any, Arg::Const(_)) => true,
            (false, true, Arg::Const(a), Arg::Const(b)) => self.sort.is_functional() && a != b,
            _ => false,
        }
    }

    /// Whether `self` and `other` can never hold together.
    pub fn excludes(&self, other: &Atom) -> bool {
        self.implies(&other.negate())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        write!(f, "{} {}", self.predicate, self.arg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Polarity {
    Forbid,
    Allow,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Forbid => "forbid",
            Polarity::Allow => "allow",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("conditions `{0}` and `{1}` contradict each other")]
pub struct Contradiction(pub String, pub String);

/// A deontic rule over a conjunction of atoms. Conditions are kept sorted
/// and deduplicated so structural equality is well defined.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rule {
    pub polarity: Polarity,
    pub action: String,
    conditions: BTreeSet<Atom>,
}

impl Rule {
    pub fn new(
        polarity: Polarity,
        action: impl Into<String>,
        conditions: impl IntoIterator<Item = Atom>,
    ) -> Result<Self, Contradiction> {
        let conditions: BTreeSet<Atom> = conditions.into_iter().collect();
        for a in &conditions {
            for b in &conditions {
                if a < b && a.excludes(b) {
                    return Err(Contradiction(a.to_string(), b.to_string()));
                }
            }
        }
        Ok(Self {
            polarity,
            action: action.into(),
            conditions,
        })
    }

    pub fn forbid(action: impl Into<String>, conditions: impl IntoIterator<Item = Atom>) -> Result<Self, Contradiction> {
        Self::new(Polarity::Forbid, action, conditions)
    }

    pub fn allow(action: impl Into<String>, conditions: impl IntoIterator<Item = Atom>) -> Result<Self, Contradiction> {
        Self::new(Polarity::Allow, action, conditions)
    }

    /// Unconditional rule.
    pub fn unconditional(polarity: Polarity, action: impl Into<String>) -> Self {
        Self {
            polarity,
            action: action.into(),
            conditions: BTreeSet::new(),
        }
    }

    pub fn conditions(&self) -> &BTreeSet<Atom> {
        &self.conditions
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn with_polarity(&self, polarity: Polarity) -> Self {
        Self {
            polarity,
            ..self.clone()
        }
    }

    /// Adds `atom`, failing if it contradicts an existing condition.
    pub fn with_condition(&self, atom: Atom) -> Result<Self, Contradiction> {
        if let Some(c) = self.conditions.iter().find(|c| c.excludes(&atom)) {
            return Err(Contradiction(c.to_string(), atom.to_string()));
        }
        let mut next = self.clone();
        next.conditions.insert(atom);
        Ok(next)
    }

    /// Drops conditions implied by another condition of the same rule.
    pub fn simplified(&self) -> Self {
        let conditions = self
            .conditions
            .iter()
            .filter(|c| !self.conditions.iter().any(|o| o != *c && o.implies(c)))
            .cloned()
            .collect();
        Self {
            polarity: self.polarity,
            action: self.action.clone(),
            conditions,
        }
    }

    pub fn mentions_ownership(&self) -> bool {
        self.conditions.iter().any(|a| a.sort == Sort::Agent)
    }

    /// Re-establishes canonical form. Rules are canonical by construction,
    /// so this is the identity; kept for callers that build rules by hand.
    pub fn canonicalize(&self) -> Self {
        Self {
            polarity: self.polarity,
            action: self.action.clone(),
            conditions: self.conditions.iter().cloned().collect(),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.polarity, self.action)?;
        for (i, atom) in self.conditions.iter().enumerate() {
            f.write_str(if i == 0 { " if " } else { " and " })?;
            write!(f, "{atom}")?;
        }
        Ok(())
    }
}

pub fn format_rule(rule: &Rule) -> String {
    rule.to_string()
}

/// Registered action with its direct prerequisites.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSymbol {
    pub name: String,
    pub prerequisites: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("action `{0}` is already registered")]
    Duplicate(String),
    #[error("action `{action}` has unknown prerequisite `{prerequisite}`")]
    UnknownPrerequisite { action: String, prerequisite: String },
    #[error("prerequisites of `{0}` form a cycle")]
    Cycle(String),
    #[error("unknown action `{0}`")]
    Unknown(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRegistry {
    actions: BTreeMap<String, ActionSymbol>,
}

impl Default for ActionRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ActionRegistry {
    pub fn empty() -> Self {
        Self {
            actions: BTreeMap::new(),
        }
    }

    /// `pickUp`, plus `collect` and `trash` which both require it.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(PICK_UP, &[]).expect("fresh registry");
        r.register(COLLECT, &[PICK_UP]).expect("fresh registry");
        r.register(TRASH, &[PICK_UP]).expect("fresh registry");
        r
    }

    pub fn register(&mut self, name: &str, prerequisites: &[&str]) -> Result<ActionSymbol, ActionError> {
        if self.actions.contains_key(name) {
            return Err(ActionError::Duplicate(name.to_owned()));
        }
        if prerequisites.contains(&name) {
            return Err(ActionError::Cycle(name.to_owned()));
        }
        for p in prerequisites {
            if !self.actions.contains_key(*p) {
                return Err(ActionError::UnknownPrerequisite {
                    action: name.to_owned(),
                    prerequisite: (*p).to_owned(),
                });
            }
        }
        let symbol = ActionSymbol {
            name: name.to_owned(),
            prerequisites: prerequisites.iter().map(|p| (*p).to_owned()).collect(),
        };
        self.actions.insert(name.to_owned(), symbol.clone());
        if self.has_cycle_from(name) {
            self.actions.remove(name);
            return Err(ActionError::Cycle(name.to_owned()));
        }
        Ok(symbol)
    }

    fn has_cycle_from(&self, start: &str) -> bool {
        fn visit<'a>(reg: &'a ActionRegistry, node: &'a str, stack: &mut Vec<&'a str>) -> bool {
            if stack.contains(&node) {
                return true;
            }
            stack.push(node);
            let cyclic = reg.actions.get(node).is_some_and(|a| {
                a.prerequisites.iter().any(|p| visit(reg, p, stack))
            });
            stack.pop();
            cyclic
        }
        visit(self, start, &mut Vec::new())
    }

    pub fn get(&self, name: &str) -> Option<&ActionSymbol> {
        self.actions.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.actions.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.actions.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// The action followed by its transitive prerequisites, breadth first,
    /// without repeats.
    pub fn chain(&self, action: &str) -> Result<Vec<String>, ActionError> {
        if !self.contains(action) {
            return Err(ActionError::Unknown(action.to_owned()));
        }
        let mut out = vec![action.to_owned()];
        let mut i = 0;
        while i < out.len() {
            let prereqs = self.actions[&out[i]].prerequisites.clone();
            for p in prereqs {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
            i += 1;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedEnd { expected: &'static str },
    UnexpectedToken { found: String, expected: &'static str },
    UnknownAction(String),
    UnknownPredicate(String),
    SortMismatch { predicate: String, expected: Sort, found: String },
    WildcardNotAllowed(String),
    Contradiction(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset of the offending token in the input.
    pub position: usize,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedEnd { expected } => write!(f, "unexpected end of rule, expected {expected}"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "unexpected `{found}`, expected {expected}")
            }
            ParseErrorKind::UnknownAction(a) => write!(f, "unknown action `{a}`"),
            ParseErrorKind::UnknownPredicate(p) => write!(f, "unknown predicate `{p}`"),
            ParseErrorKind::SortMismatch {
                predicate,
                expected,
                found,
            } => write!(f, "`{predicate}` takes a {expected}, `{found}` is not one"),
            ParseErrorKind::WildcardNotAllowed(p) => write!(f, "`any` is not allowed as argument of `{p}`"),
            ParseErrorKind::Contradiction(a, b) => write!(f, "`{a}` contradicts `{b}`"),
        }
    }
}

struct Tokens<'a> {
    text: &'a str,
    items: Vec<(usize, &'a str)>,
    next: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut start = None;
        for (i, ch) in text.char_indices() {
            match (ch.is_whitespace(), start) {
                (true, Some(s)) => {
                    items.push((s, &text[s..i]));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            items.push((s, &text[s..]));
        }
        Self { text, items, next: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.items.get(self.next).copied()
    }

    fn expect(&mut self, expected: &'static str) -> Result<(usize, &'a str), ParseError> {
        let tok = self.peek().ok_or(ParseError {
            kind: ParseErrorKind::UnexpectedEnd { expected },
            position: self.text.len(),
        })?;
        self.next += 1;
        Ok(tok)
    }

    fn keyword(&mut self, word: &'static str) -> Result<(), ParseError> {
        let (pos, tok) = self.expect(word)?;
        if tok != word {
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken {
                    found: tok.to_owned(),
                    expected: word,
                },
                position: pos,
            });
        }
        Ok(())
    }
}

/// Parses rule text against a vocabulary and action registry.
pub fn parse_rule(text: &str, vocab: &Vocabulary, actions: &ActionRegistry) -> Result<Rule, ParseError> {
    let mut toks = Tokens::new(text);
    let (pos, word) = toks.expect("`forbid` or `allow`")?;
    let polarity = match word {
        "forbid" => Polarity::Forbid,
        "allow" => Polarity::Allow,
        other => {
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken {
                    found: other.to_owned(),
                    expected: "`forbid` or `allow`",
                },
                position: pos,
            })
        }
    };
    let (pos, action) = toks.expect("an action")?;
    if !actions.contains(action) {
        return Err(ParseError {
            kind: ParseErrorKind::UnknownAction(action.to_owned()),
            position: pos,
        });
    }
    let mut rule = Rule::unconditional(polarity, action);
    if toks.peek().is_none() {
        return Ok(rule);
    }
    toks.keyword("if")?;
    loop {
        let (start, atom) = parse_atom(&mut toks, vocab)?;
        rule = rule.with_condition(atom).map_err(|Contradiction(a, b)| ParseError {
            kind: ParseErrorKind::Contradiction(a, b),
            position: start,
        })?;
        match toks.peek() {
            None => return Ok(rule),
            Some(_) => toks.keyword("and")?,
        }
    }
}

fn parse_atom(toks: &mut Tokens<'_>, vocab: &Vocabulary) -> Result<(usize, Atom), ParseError> {
    let (start, mut word) = toks.expect("a predicate")?;
    let mut pred_pos = start;
    let negated = word == "not";
    if negated {
        (pred_pos, word) = toks.expect("a predicate")?;
    }
    let schema = vocab.schema(word).ok_or_else(|| ParseError {
        kind: ParseErrorKind::UnknownPredicate(word.to_owned()),
        position: pred_pos,
    })?;
    let (arg_pos, arg_text) = toks.expect("a predicate argument")?;
    let arg = if arg_text == "any" {
        if !schema.allows_any {
            return Err(ParseError {
                kind: ParseErrorKind::WildcardNotAllowed(schema.name.clone()),
                position: arg_pos,
            });
        }
        Arg::Any
    } else {
        if !vocab.accepts_constant(schema.sort, arg_text) || is_keyword(arg_text) {
            return Err(ParseError {
                kind: ParseErrorKind::SortMismatch {
                    predicate: schema.name.clone(),
                    expected: schema.sort,
                    found: arg_text.to_owned(),
                },
                position: arg_pos,
            });
        }
        Arg::Const(arg_text.to_owned())
    };
    let atom = Atom {
        predicate: schema.name.clone(),
        arg,
        negated,
        sort: schema.sort,
    };
    Ok((start, atom))
}

fn is_keyword(word: &str) -> bool {
    matches!(word, "if" | "and" | "not" | "forbid" | "allow")
}
