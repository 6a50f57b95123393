//! Terms, propositions, signs, rules and the partitioned knowledge base.
//!
//! Everything here is function-free: a term is either a constant or a
//! variable, and a proposition is a predicate applied to a flat list of terms.
//! Knowledge bases are values; every update returns a new knowledge base and
//! leaves the original untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the theory that receives observations when a document does not
/// declare one.
pub const DEFAULT_OBSERVATION_THEORY: &str = "findings";

/// A constant or a variable. Variables start with an uppercase letter or `_`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    /// Classifies an identifier lexically.
    pub fn from_ident(name: &str) -> Term {
        if is_variable_name(name) {
            Term::Var(name.to_string())
        } else {
            Term::Const(name.to_string())
        }
    }

    pub fn constant(name: impl Into<String>) -> Term {
        Term::Const(name.into())
    }

    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Const(n) | Term::Var(n) => n,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn is_variable_name(name: &str) -> bool {
    name.chars()
        .next()
        .is_some_and(|c| c.is_ascii_uppercase() || c == '_')
}

pub(crate) fn is_identifier(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// An atom such as `age(elderly)` or `cause(C, O)`. Serializes as its text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Proposition {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Proposition {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Proposition {
            predicate: predicate.into(),
            args,
        }
    }

    /// Builds a proposition from identifier strings, classifying each one as
    /// a constant or variable.
    pub fn atom(predicate: &str, args: &[&str]) -> Self {
        Proposition::new(predicate, args.iter().map(|a| Term::from_ident(a)).collect())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }

    /// The `predicate/arity` key.
    pub fn signature(&self) -> (String, usize) {
        (self.predicate.clone(), self.args.len())
    }
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl From<Proposition> for String {
    fn from(p: Proposition) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Proposition {
    type Error = KbError;

    fn try_from(s: String) -> Result<Self, KbError> {
        s.parse()
    }
}

impl FromStr for Proposition {
    type Err = KbError;

    /// Reads `pred` or `pred(t1, ..., tn)`.
    fn from_str(s: &str) -> Result<Self, KbError> {
        let bad = || KbError::InvalidIdentifier(s.to_string());
        let s = s.trim();
        let (pred, args) = match s.split_once('(') {
            Some((pred, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(bad)?;
                let args = if inner.trim().is_empty() {
                    Vec::new()
                } else {
                    inner.split(',').map(str::trim).collect()
                };
                (pred.trim(), args)
            }
            None => (s, Vec::new()),
        };
        if !is_identifier(pred) || !pred.starts_with(|c: char| c.is_ascii_lowercase()) {
            return Err(bad());
        }
        if !args.iter().all(|a| is_identifier(a)) {
            return Err(bad());
        }
        Ok(Proposition::atom(pred, &args))
    }
}

/// The qualifier attached to one argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Confirmed,
    Eliminated,
    Supported,
    Opposed,
}

impl Sign {
    pub const ALL: [Sign; 4] = [Sign::Confirmed, Sign::Eliminated, Sign::Supported, Sign::Opposed];

    /// `confirmed` and `supported` argue for the proposition.
    pub fn is_pro(self) -> bool {
        matches!(self, Sign::Confirmed | Sign::Supported)
    }

    pub fn is_con(self) -> bool {
        !self.is_pro()
    }

    /// `confirmed` and `eliminated` are categorical; the other two are tentative.
    pub fn is_categorical(self) -> bool {
        matches!(self, Sign::Confirmed | Sign::Eliminated)
    }

    /// The tentative sign with the same polarity.
    pub fn weakened(self) -> Sign {
        match self {
            Sign::Confirmed | Sign::Supported => Sign::Supported,
            Sign::Eliminated | Sign::Opposed => Sign::Opposed,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Sign::Confirmed => "confirmed",
            Sign::Eliminated => "eliminated",
            Sign::Supported => "supported",
            Sign::Opposed => "opposed",
        }
    }

    /// Parses a sign keyword. `maybe` is accepted as an alias of `supported`.
    pub fn from_keyword(word: &str) -> Option<Sign> {
        match word {
            "confirmed" => Some(Sign::Confirmed),
            "eliminated" => Some(Sign::Eliminated),
            "supported" | "maybe" => Some(Sign::Supported),
            "opposed" => Some(Sign::Opposed),
            _ => None,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

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
                $name(s.to_string())
            }
        }
    };
}

id_type!(
    /// Identifies a fact within a knowledge base.
    FactId
);
id_type!(
    /// Identifies a rule within a knowledge base.
    RuleId
);
id_type!(
    /// Identifies a theory.
    TheoryId
);

/// Variable bindings to constants.
pub type Substitution = BTreeMap<String, String>;

/// Matches a pattern against a ground proposition.
///
/// Returns the unique substitution that maps `pattern` onto `ground`, binding
/// only variables of the pattern, or `None` when they do not match.
pub fn unify(pattern: &Proposition, ground: &Proposition) -> Option<Substitution> {
    let mut theta = Substitution::new();
    if match_into(pattern, ground, &mut theta) {
        Some(theta)
    } else {
        None
    }
}

/// Extends `theta` so that `pattern·theta = ground`. On failure `theta` may
/// hold partial bindings; callers clone beforehand when they need to backtrack.
pub fn match_into(pattern: &Proposition, ground: &Proposition, theta: &mut Substitution) -> bool {
    if pattern.predicate != ground.predicate || pattern.args.len() != ground.args.len() {
        return false;
    }
    for (p, g) in pattern.args.iter().zip(&ground.args) {
        let value = match g {
            Term::Const(c) => c,
            Term::Var(_) => return false,
        };
        match p {
            Term::Const(c) => {
                if c != value {
                    return false;
                }
            }
            Term::Var(v) => match theta.get(v) {
                Some(bound) if bound != value => return false,
                Some(_) => {}
                None => {
                    theta.insert(v.clone(), value.clone());
                }
            },
        }
    }
    true
}

/// Replaces every bound variable; unbound variables are kept.
pub fn apply_substitution(p: &Proposition, theta: &Substitution) -> Proposition {
    Proposition {
        predicate: p.predicate.clone(),
        args: p
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => match theta.get(v) {
                    Some(c) => Term::Const(c.clone()),
                    None => t.clone(),
                },
                Term::Const(_) => t.clone(),
            })
            .collect(),
    }
}

/// A signed implication `head <sign> if body`. An empty body makes the rule
/// a signed assertion.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rule {
    pub id: RuleId,
    pub head: Proposition,
    pub head_sign: Sign,
    pub body: Vec<Proposition>,
}

impl Rule {
    pub fn new(id: impl Into<String>, head: Proposition, head_sign: Sign, body: Vec<Proposition>) -> Self {
        Rule {
            id: RuleId::new(id),
            head,
            head_sign,
            body,
        }
    }

    /// Every head variable occurs in the body.
    pub fn is_range_restricted(&self) -> bool {
        let body_vars: BTreeSet<&str> = self.body.iter().flat_map(|b| b.variables()).collect();
        self.head.variables().all(|v| body_vars.contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoryKind {
    Domain,
    Task,
}

impl TheoryKind {
    pub fn keyword(self) -> &'static str {
        match self {
            TheoryKind::Domain => "domain",
            TheoryKind::Task => "task",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theory {
    pub id: TheoryId,
    pub kind: TheoryKind,
    pub facts: BTreeMap<FactId, Proposition>,
    pub rules: BTreeMap<RuleId, Rule>,
}

impl Theory {
    pub fn new(id: impl Into<String>, kind: TheoryKind) -> Self {
        Theory {
            id: TheoryId::new(id),
            kind,
            facts: BTreeMap::new(),
            rules: BTreeMap::new(),
        }
    }

    pub fn fact_id_of(&self, p: &Proposition) -> Option<&FactId> {
        self.facts.iter().find(|(_, q)| *q == p).map(|(id, _)| id)
    }
}

/// How an askable predicate answers questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AskableKind {
    /// Any ground instance may be asked independently.
    Open,
    /// The last argument is a value: once one value is known for the leading
    /// arguments, other values are not asked.
    Functional,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbError {
    #[error("unknown theory `{0}`")]
    UnknownTheory(String),
    #[error("proposition `{0}` is not ground")]
    NonGround(String),
    #[error("duplicate theory `{0}`")]
    DuplicateTheory(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("predicate `{predicate}` used with arity {found}, expected {expected}")]
    ArityConflict {
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("rule `{0}` is not range-restricted")]
    NotRangeRestricted(String),
    #[error("task `{task}` references unknown theory `{theory}`")]
    UnknownTaskTheory { task: String, theory: String },
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
}

/// Facts and rules partitioned into named theories, plus the askable
/// declarations and the task layer mapping decision classes to theories.
///
/// No consistency is assumed across theories.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KnowledgeBase {
    theories: BTreeMap<TheoryId, Theory>,
    askables: BTreeMap<(String, usize), AskableKind>,
    task_map: BTreeMap<String, BTreeSet<TheoryId>>,
    observation_theory: Option<TheoryId>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn theories(&self) -> impl Iterator<Item = &Theory> {
        self.theories.values()
    }

    pub fn theory(&self, id: &TheoryId) -> Option<&Theory> {
        self.theories.get(id)
    }

    pub fn theory_ids(&self) -> BTreeSet<TheoryId> {
        self.theories.keys().cloned().collect()
    }

    pub fn has_theory(&self, id: &TheoryId) -> bool {
        self.theories.contains_key(id)
    }

    pub fn askables(&self) -> &BTreeMap<(String, usize), AskableKind> {
        &self.askables
    }

    pub fn askable_kind(&self, p: &Proposition) -> Option<AskableKind> {
        self.askables.get(&(p.predicate.clone(), p.arity())).copied()
    }

    pub fn is_askable(&self, p: &Proposition) -> bool {
        self.askable_kind(p).is_some()
    }

    pub fn task_map(&self) -> &BTreeMap<String, BTreeSet<TheoryId>> {
        &self.task_map
    }

    /// The theory that receives observations and answers.
    pub fn observation_theory(&self) -> TheoryId {
        self.observation_theory
            .clone()
            .unwrap_or_else(|| TheoryId::new(DEFAULT_OBSERVATION_THEORY))
    }

    pub fn declared_observation_theory(&self) -> Option<&TheoryId> {
        self.observation_theory.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.theories.is_empty()
            && self.askables.is_empty()
            && self.task_map.is_empty()
            && self.observation_theory.is_none()
    }

    /// Which theory owns the fact or rule with this id.
    pub fn owner_of_fact(&self, id: &FactId) -> Option<&TheoryId> {
        self.theories
            .values()
            .find(|t| t.facts.contains_key(id))
            .map(|t| &t.id)
    }

    pub fn owner_of_rule(&self, id: &RuleId) -> Option<&TheoryId> {
        self.theories
            .values()
            .find(|t| t.rules.contains_key(id))
            .map(|t| &t.id)
    }

    /// Arity of each predicate as used anywhere in the knowledge base.
    pub fn arities(&self) -> Result<BTreeMap<String, usize>, KbError> {
        let mut arities = BTreeMap::new();
        for theory in self.theories.values() {
            let props = theory
                .facts
                .values()
                .chain(theory.rules.values().flat_map(|r| std::iter::once(&r.head).chain(&r.body)));
            for p in props {
                record_arity(&mut arities, &p.predicate, p.arity())?;
            }
        }
        for (pred, arity) in self.askables.keys() {
            record_arity(&mut arities, pred, *arity)?;
        }
        Ok(arities)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), KbError> {
        let mut ids = BTreeSet::new();
        for theory in self.theories.values() {
            for (fid, p) in &theory.facts {
                if !is_identifier(fid.as_str()) {
                    return Err(KbError::InvalidIdentifier(fid.0.clone()));
                }
                if !ids.insert(fid.0.clone()) {
                    return Err(KbError::DuplicateId(fid.0.clone()));
                }
                if !p.is_ground() {
                    return Err(KbError::NonGround(p.to_string()));
                }
            }
            for (rid, rule) in &theory.rules {
                if !ids.insert(rid.0.clone()) {
                    return Err(KbError::DuplicateId(rid.0.clone()));
                }
                if !rule.is_range_restricted() {
                    return Err(KbError::NotRangeRestricted(rid.0.clone()));
                }
            }
        }
        for (task, theories) in &self.task_map {
            for t in theories {
                if !self.theories.contains_key(t) {
                    return Err(KbError::UnknownTaskTheory {
                        task: task.clone(),
                        theory: t.0.clone(),
                    });
                }
            }
        }
        self.arities()?;
        Ok(())
    }

    /// Adds a theory. Fails on duplicates and on any invariant violation the
    /// new theory introduces.
    pub fn with_theory(&self, theory: Theory) -> Result<KnowledgeBase, KbError> {
        if self.theories.contains_key(&theory.id) {
            return Err(KbError::DuplicateTheory(theory.id.0));
        }
        let mut kb = self.clone();
        kb.theories.insert(theory.id.clone(), theory);
        kb.validate()?;
        Ok(kb)
    }

    pub fn with_askable(&self, predicate: &str, arity: usize, kind: AskableKind) -> Result<KnowledgeBase, KbError> {
        let mut kb = self.clone();
        kb.askables.insert((predicate.to_string(), arity), kind);
        kb.arities()?;
        Ok(kb)
    }

    pub fn with_task(&self, class: &str, theories: BTreeSet<TheoryId>) -> Result<KnowledgeBase, KbError> {
        let mut kb = self.clone();
        kb.task_map.insert(class.to_string(), theories);
        kb.validate()?;
        Ok(kb)
    }

    pub fn with_observation_theory(&self, theory: TheoryId) -> KnowledgeBase {
        let mut kb = self.clone();
        kb.observation_theory = Some(theory);
        kb
    }

    /// Returns a knowledge base that also holds `p` as a fact of `theory`.
    ///
    /// Adding a proposition the theory already holds returns an equal
    /// knowledge base. The fresh fact id is `f<n>` for the smallest unused
    /// `n` above the current fact count.
    pub fn add_fact(&self, theory: &TheoryId, p: Proposition) -> Result<KnowledgeBase, KbError> {
        self.insert_fact(theory, None, p)
    }

    /// Like [`KnowledgeBase::add_fact`] but with a caller-chosen fact id.
    pub fn add_fact_with_id(&self, theory: &TheoryId, id: FactId, p: Proposition) -> Result<KnowledgeBase, KbError> {
        if !is_identifier(id.as_str()) {
            return Err(KbError::InvalidIdentifier(id.0));
        }
        self.insert_fact(theory, Some(id), p)
    }

    fn insert_fact(&self, theory: &TheoryId, id: Option<FactId>, p: Proposition) -> Result<KnowledgeBase, KbError> {
        let target = self
            .theories
            .get(theory)
            .ok_or_else(|| KbError::UnknownTheory(theory.0.clone()))?;
        if !p.is_ground() {
            return Err(KbError::NonGround(p.to_string()));
        }
        if target.fact_id_of(&p).is_some() {
            return Ok(self.clone());
        }
        let mut arities = self.arities()?;
        record_arity(&mut arities, &p.predicate, p.arity())?;
        let id = match id {
            Some(id) if self.id_in_use(id.as_str()) => return Err(KbError::DuplicateId(id.0)),
            Some(id) => id,
            None => self.fresh_fact_id(),
        };
        let mut kb = self.clone();
        kb.theories
            .get_mut(theory)
            .expect("theory checked above")
            .facts
            .insert(id, p);
        Ok(kb)
    }

    /// Adds an observation to the observation theory, creating that theory
    /// (as a domain theory) when it does not exist yet.
    pub fn add_observation(&self, p: Proposition) -> Result<KnowledgeBase, KbError> {
        self.observe(None, p)
    }

    /// Adds an observation under a caller-chosen fact id.
    pub fn add_observation_with_id(&self, id: FactId, p: Proposition) -> Result<KnowledgeBase, KbError> {
        self.observe(Some(id), p)
    }

    fn observe(&self, id: Option<FactId>, p: Proposition) -> Result<KnowledgeBase, KbError> {
        let tid = self.observation_theory();
        let add = |kb: &KnowledgeBase| match &id {
            Some(id) => kb.add_fact_with_id(&tid, id.clone(), p.clone()),
            None => kb.add_fact(&tid, p.clone()),
        };
        if self.theories.contains_key(&tid) {
            add(self)
        } else {
            let mut kb = self.clone();
            kb.theories
                .insert(tid.clone(), Theory::new(tid.0.clone(), TheoryKind::Domain));
            add(&kb)
        }
    }

    fn id_in_use(&self, id: &str) -> bool {
        self.theories
            .values()
            .any(|t| t.facts.keys().any(|k| k.as_str() == id) || t.rules.keys().any(|k| k.as_str() == id))
    }

    fn fresh_fact_id(&self) -> FactId {
        let used: BTreeSet<&str> = self
            .theories
            .values()
            .flat_map(|t| {
                t.facts
                    .keys()
                    .map(|k| k.as_str())
                    .chain(t.rules.keys().map(|k| k.as_str()))
            })
            .collect();
        let mut n = self.theories.values().map(|t| t.facts.len()).sum::<usize>() + 1;
        loop {
            let candidate = format!("f{n}");
            if !used.contains(candidate.as_str()) {
                return FactId(candidate);
            }
            n += 1;
        }
    }

    /// Every fact proposition in the given theories.
    pub fn facts_in<'a>(&'a self, theories: &'a BTreeSet<TheoryId>) -> impl Iterator<Item = (&'a FactId, &'a TheoryId, &'a Proposition)> {
        self.theories
            .values()
            .filter(move |t| theories.contains(&t.id))
            .flat_map(|t| t.facts.iter().map(move |(id, p)| (id, &t.id, p)))
    }

    pub fn rules_in<'a>(&'a self, theories: &'a BTreeSet<TheoryId>) -> impl Iterator<Item = (&'a Rule, &'a TheoryId)> {
        self.theories
            .values()
            .filter(move |t| theories.contains(&t.id))
            .flat_map(|t| t.rules.values().map(move |r| (r, &t.id)))
    }

    /// Mutable access for the parser, which validates once at the end.
    pub(crate) fn theories_mut(&mut self) -> &mut BTreeMap<TheoryId, Theory> {
        &mut self.theories
    }

    pub(crate) fn askables_mut(&mut self) -> &mut BTreeMap<(String, usize), AskableKind> {
        &mut self.askables
    }

    pub(crate) fn task_map_mut(&mut self) -> &mut BTreeMap<String, BTreeSet<TheoryId>> {
        &mut self.task_map
    }

    pub(crate) fn set_observation_theory(&mut self, theory: Option<TheoryId>) {
        self.observation_theory = theory;
    }
}

fn record_arity(arities: &mut BTreeMap<String, usize>, predicate: &str, arity: usize) -> Result<(), KbError> {
    match arities.get(predicate) {
        Some(&expected) if expected != arity => Err(KbError::ArityConflict {
            predicate: predicate.to_string(),
            expected,
            found: arity,
        }),
        Some(_) => Ok(()),
        None => {
            arities.insert(predicate.to_string(), arity);
            Ok(())
        }
    }
}
