//! Decision classes and the lifecycle of decision instances.
//!
//! A [`DecisionClass`] carries the attribute templates of one kind of
//! decision: the prototype that raises it, the theories relevant to it, the
//! option pattern and proposal criterion, and the termination condition. A
//! [`DecisionInstance`] inherits a class, is instantiated with the context
//! that triggered it, and moves through `open -> awaiting_answer -> open ->
//! committed -> closed`. Every operation recomputes candidate statuses from
//! scratch through argument construction and aggregation.

mod pattern;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pattern::{BeliefEntry, BeliefStore, Literal, Pattern};

use crate::aggregate::{belief_status, tally_rank, AggregationMode, BeliefStatus, DisplayClass, TallyRanking};
use crate::argument::{Argument, ArgumentEngine, ArgumentError};
use crate::kb::{
    apply_substitution, match_into, AskableKind, KbError, KnowledgeBase, Proposition, RuleId, Substitution, Term,
    TheoryId,
};

/// How a decision chooses among its candidates when it terminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommitRule {
    /// Tally winner over all proposed candidates.
    #[default]
    Tally,
    /// Tally winner among the proposed candidates with the strongest display
    /// class.
    Strongest,
}

impl CommitRule {
    pub fn keyword(self) -> &'static str {
        match self {
            CommitRule::Tally => "tally",
            CommitRule::Strongest => "strongest",
        }
    }

    pub fn from_keyword(word: &str) -> Option<CommitRule> {
        match word {
            "tally" => Some(CommitRule::Tally),
            "strongest" => Some(CommitRule::Strongest),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionClass {
    pub name: String,
    /// Raises the decision when it holds in the belief store.
    pub prototype: Pattern,
    pub relevant_theories: BTreeSet<TheoryId>,
    /// Carried into reports; never used for filtering.
    pub relevant_argument_types: BTreeSet<String>,
    /// Minimum display class for an option to be proposed.
    pub option_proposal: DisplayClass,
    pub option_pattern: Proposition,
    /// Askable predicates preferred when question scores tie.
    pub askable_priority: Vec<(String, usize)>,
    pub terminate: Pattern,
    pub commit_rule: CommitRule,
}

impl DecisionClass {
    pub fn new(name: impl Into<String>, option_pattern: Proposition) -> Self {
        DecisionClass {
            name: name.into(),
            prototype: Pattern::always(),
            relevant_theories: BTreeSet::new(),
            relevant_argument_types: BTreeSet::new(),
            option_proposal: DisplayClass::Possible,
            option_pattern,
            askable_priority: Vec::new(),
            terminate: Pattern::always(),
            commit_rule: CommitRule::Tally,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionState {
    Open,
    AwaitingAnswer,
    Committed,
    Closed,
}

impl fmt::Display for DecisionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecisionState::Open => "open",
            DecisionState::AwaitingAnswer => "awaiting_answer",
            DecisionState::Committed => "committed",
            DecisionState::Closed => "closed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub option: Proposition,
    pub status: BeliefStatus,
    pub arguments: Vec<Argument>,
    /// Whether the option currently meets the proposal criterion. Options
    /// stay listed after they drop below it, so eliminations stay visible.
    pub proposed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub option: Proposition,
    pub ranking: TallyRanking,
}

/// The environment's reply to a question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reply {
    /// The asked proposition holds.
    Yes,
    /// Denied; recorded as asked without adding a fact.
    No,
    /// Another proposition holds instead (usually another value of the same
    /// attribute).
    Value(Proposition),
}

/// Outcome of a termination attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Termination {
    NotOpen,
    NotSatisfied,
    NoCandidates,
    Tie { options: Vec<Proposition>, ranking: TallyRanking },
    Committed { option: Proposition },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecisionError {
    #[error("`{0}` is not askable")]
    NotAskable(String),
    #[error("decision `{id}` is {state} and cannot change")]
    Immutable { id: String, state: DecisionState },
    #[error("decision `{id}` cannot close while {state}")]
    NotCommitted { id: String, state: DecisionState },
    #[error(transparent)]
    Argument(#[from] ArgumentError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

/// One match per distinct satisfying substitution, classes in the given
/// order and substitutions sorted within a class. Contexts only bind the
/// variables of positive prototype literals.
pub fn match_prototypes(store: &BeliefStore, classes: &[DecisionClass]) -> Vec<(String, Substitution)> {
    let mut out = Vec::new();
    for class in classes {
        let keep = class.prototype.bound_variables();
        let contexts: BTreeSet<Substitution> = class
            .prototype
            .matches(store, &Substitution::new())
            .into_iter()
            .map(|theta| theta.into_iter().filter(|(k, _)| keep.contains(k)).collect())
            .collect();
        out.extend(contexts.into_iter().map(|c| (class.name.clone(), c)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionInstance {
    pub id: String,
    pub class: DecisionClass,
    pub context: Substitution,
    pub candidates: Vec<Candidate>,
    pub asked: BTreeSet<Proposition>,
    pub denied: BTreeSet<Proposition>,
    pub pending_question: Option<Proposition>,
    pub state: DecisionState,
    pub commitment: Option<Commitment>,
    /// Top tally group from the last termination attempt that tied.
    pub tie: Option<Vec<Proposition>>,
    pub mode: AggregationMode,
}

impl DecisionInstance {
    /// Instantiates `class` in `context` and proposes its initial options.
    pub fn open(
        id: impl Into<String>,
        class: &DecisionClass,
        context: Substitution,
        kb: &KnowledgeBase,
    ) -> Result<DecisionInstance, DecisionError> {
        Self::open_with_mode(id, class, context, kb, AggregationMode::default())
    }

    pub fn open_with_mode(
        id: impl Into<String>,
        class: &DecisionClass,
        context: Substitution,
        kb: &KnowledgeBase,
        mode: AggregationMode,
    ) -> Result<DecisionInstance, DecisionError> {
        let mut inst = DecisionInstance {
            id: id.into(),
            class: class.clone(),
            context,
            candidates: Vec::new(),
            asked: BTreeSet::new(),
            denied: BTreeSet::new(),
            pending_question: None,
            state: DecisionState::Open,
            commitment: None,
            tie: None,
            mode,
        };
        inst.candidates = propose_options(&inst, kb)?;
        Ok(inst)
    }

    pub fn class_name(&self) -> &str {
        &self.class.name
    }

    /// The option pattern under the instance's context.
    pub fn option_goal(&self) -> Proposition {
        apply_substitution(&self.class.option_pattern, &self.context)
    }

    /// Relevant theories that exist in `kb`. The observation theory may be
    /// absent until the first observation arrives; any other missing theory
    /// is an error.
    pub fn active_theories(&self, kb: &KnowledgeBase) -> Result<BTreeSet<TheoryId>, DecisionError> {
        let observations = kb.observation_theory();
        let mut active = BTreeSet::new();
        for t in &self.class.relevant_theories {
            if kb.has_theory(t) {
                active.insert(t.clone());
            } else if *t != observations {
                return Err(ArgumentError::UnknownTheory(t.0.clone()).into());
            }
        }
        Ok(active)
    }

    pub fn candidate(&self, option: &Proposition) -> Option<&Candidate> {
        self.candidates.iter().find(|c| &c.option == option)
    }

    pub fn proposed(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.proposed)
    }

    /// Tally over the proposed candidates.
    pub fn ranking(&self) -> TallyRanking {
        let options: Vec<(Proposition, Vec<Argument>)> =
            self.proposed().map(|c| (c.option.clone(), c.arguments.clone())).collect();
        tally_rank(&options)
    }

    pub fn is_live(&self) -> bool {
        matches!(self.state, DecisionState::Open | DecisionState::AwaitingAnswer)
    }

    fn ensure_mutable(&self) -> Result<(), DecisionError> {
        if self.is_live() {
            Ok(())
        } else {
            Err(DecisionError::Immutable {
                id: self.id.clone(),
                state: self.state,
            })
        }
    }

    /// Marks the next question as posed and waits for its answer.
    pub fn pose_question(&self, kb: &KnowledgeBase) -> Result<(DecisionInstance, Option<Proposition>), DecisionError> {
        if self.state != DecisionState::Open {
            return Ok((self.clone(), None));
        }
        let question = next_question(self, kb)?;
        let mut inst = self.clone();
        if let Some(q) = &question {
            inst.pending_question = Some(q.clone());
            inst.state = DecisionState::AwaitingAnswer;
        }
        Ok((inst, question))
    }

    /// Committed to closed.
    pub fn close(&self) -> Result<DecisionInstance, DecisionError> {
        if self.state != DecisionState::Committed {
            return Err(DecisionError::NotCommitted {
                id: self.id.clone(),
                state: self.state,
            });
        }
        let mut inst = self.clone();
        inst.state = DecisionState::Closed;
        Ok(inst)
    }
}

/// Candidates for the instance: every ground instance of the option pattern
/// (under the context) whose display class reaches the proposal criterion,
/// plus the options listed earlier, all with fresh statuses. Arguments come
/// only from the relevant theories.
pub fn propose_options(inst: &DecisionInstance, kb: &KnowledgeBase) -> Result<Vec<Candidate>, DecisionError> {
    let active = inst.active_theories(kb)?;
    let engine = ArgumentEngine::new(kb, &active)?;
    let goal = inst.option_goal();
    let mut grouped: BTreeMap<Proposition, Vec<Argument>> = BTreeMap::new();
    for a in engine.arguments(&goal) {
        grouped.entry(a.proposition.clone()).or_default().push(a);
    }
    for c in &inst.candidates {
        grouped.entry(c.option.clone()).or_default();
    }
    let previously: BTreeSet<&Proposition> = inst.candidates.iter().map(|c| &c.option).collect();
    let mut out = Vec::new();
    for (option, arguments) in grouped {
        let status = belief_status(&option, &arguments, inst.mode).expect("grouped by proposition");
        let proposed = status.display >= inst.class.option_proposal;
        if proposed || previously.contains(&option) {
            out.push(Candidate {
                option,
                status,
                arguments,
                proposed,
            });
        }
    }
    Ok(out)
}

/// A rule instance that could still fire once its open literals are known.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PendingRule {
    pub rule: RuleId,
    pub body: Vec<Proposition>,
    /// Askable body literals that are neither known nor asked.
    pub open_askables: BTreeSet<Proposition>,
}

/// Rule instances (for the option pattern, and recursively for the
/// non-askable premises they still need) whose body literals are each
/// either established, askable and unasked, or themselves pending.
pub fn pending_rules(inst: &DecisionInstance, kb: &KnowledgeBase) -> Result<Vec<PendingRule>, DecisionError> {
    let active = inst.active_theories(kb)?;
    let engine = ArgumentEngine::new(kb, &active)?;
    let mut search = PendingSearch {
        inst,
        kb,
        engine: &engine,
        rules: kb.rules_in(&active).map(|(r, _)| r).collect(),
        found: BTreeSet::new(),
        memo: BTreeMap::new(),
    };
    search.explore(&inst.option_goal());
    Ok(search.found.into_iter().collect())
}

struct PendingSearch<'a> {
    inst: &'a DecisionInstance,
    kb: &'a KnowledgeBase,
    engine: &'a ArgumentEngine<'a>,
    rules: Vec<&'a crate::kb::Rule>,
    found: BTreeSet<PendingRule>,
    /// `None` while a goal is being explored.
    memo: BTreeMap<Proposition, Option<bool>>,
}

enum LiteralState {
    Known,
    OpenAskable,
    OpenDerived,
    Failed,
}

impl PendingSearch<'_> {
    /// Records pending instances of rules concluding `target`; true if any.
    fn explore(&mut self, target: &Proposition) -> bool {
        let mut any = false;
        let rules = self.rules.clone();
        for rule in rules {
            let Some(theta) = unify_head(&rule.head, target) else {
                continue;
            };
            let mut branches = Vec::new();
            self.body_branches(&rule.body, theta, Vec::new(), BTreeSet::new(), false, &mut branches);
            for (body, open_askables) in branches {
                self.found.insert(PendingRule {
                    rule: rule.id.clone(),
                    body,
                    open_askables,
                });
                any = true;
            }
        }
        any
    }

    #[allow(clippy::too_many_arguments)]
    fn body_branches(
        &mut self,
        body: &[Proposition],
        theta: Substitution,
        instantiated: Vec<Proposition>,
        open: BTreeSet<Proposition>,
        pending: bool,
        out: &mut Vec<(Vec<Proposition>, BTreeSet<Proposition>)>,
    ) {
        let Some((first, rest)) = body.split_first() else {
            if pending {
                out.push((instantiated, open));
            }
            return;
        };
        let lit = apply_substitution(first, &theta);
        if !lit.is_ground() {
            let matches: Vec<Proposition> = self.engine.derivable_matching(&lit).cloned().collect();
            for g in matches {
                let mut extended = theta.clone();
                if match_into(&lit, &g, &mut extended) {
                    let mut inst = instantiated.clone();
                    inst.push(g);
                    self.body_branches(rest, extended, inst, open.clone(), pending, out);
                }
            }
            return;
        }
        let mut instantiated = instantiated;
        let mut open = open;
        let pending = match self.classify(&lit) {
            LiteralState::Known => pending,
            LiteralState::OpenAskable => {
                open.insert(lit.clone());
                true
            }
            LiteralState::OpenDerived => true,
            LiteralState::Failed => return,
        };
        instantiated.push(lit);
        self.body_branches(rest, theta, instantiated, open, pending, out);
    }

    fn classify(&mut self, lit: &Proposition) -> LiteralState {
        if self.engine.is_derivable(lit) {
            return LiteralState::Known;
        }
        if self.kb.is_askable(lit) {
            return if is_settled(self.inst, self.kb, self.engine, lit) {
                LiteralState::Failed
            } else {
                LiteralState::OpenAskable
            };
        }
        let reachable = match self.memo.get(lit) {
            Some(Some(r)) => *r,
            Some(None) => false,
            None => {
                self.memo.insert(lit.clone(), None);
                let r = self.explore(lit);
                self.memo.insert(lit.clone(), Some(r));
                r
            }
        };
        if reachable {
            LiteralState::OpenDerived
        } else {
            LiteralState::Failed
        }
    }
}

/// Whether an askable literal needs no question: already asked, or a
/// functional attribute whose value is already known.
fn is_settled(inst: &DecisionInstance, kb: &KnowledgeBase, engine: &ArgumentEngine<'_>, lit: &Proposition) -> bool {
    if inst.asked.contains(lit) {
        return true;
    }
    if kb.askable_kind(lit) == Some(AskableKind::Functional) && !lit.args.is_empty() {
        let mut attribute = lit.clone();
        let last = attribute.args.len() - 1;
        attribute.args[last] = Term::Var("_Value".to_string());
        return engine.derivable_matching(&attribute).next().is_some();
    }
    false
}

/// Binds rule-head variables so the head matches the target pattern.
/// Target variables act as wildcards, consistently across positions.
fn unify_head(head: &Proposition, target: &Proposition) -> Option<Substitution> {
    if head.predicate != target.predicate || head.arity() != target.arity() {
        return None;
    }
    let mut rule_bind = Substitution::new();
    let mut target_bind: BTreeMap<&str, &Term> = BTreeMap::new();
    for (h, t) in head.args.iter().zip(&target.args) {
        match (h, t) {
            (Term::Const(a), Term::Const(b)) => {
                if a != b {
                    return None;
                }
            }
            (Term::Var(v), Term::Const(c)) => match rule_bind.get(v) {
                Some(bound) if bound != c => return None,
                Some(_) => {}
                None => {
                    rule_bind.insert(v.clone(), c.clone());
                }
            },
            (h, Term::Var(w)) => match target_bind.get(w.as_str()) {
                Some(Term::Const(prev)) => match h {
                    Term::Const(c) if c != prev => return None,
                    Term::Var(v) => match rule_bind.get(v) {
                        Some(bound) if bound != prev => return None,
                        Some(_) => {}
                        None => {
                            rule_bind.insert(v.clone(), prev.clone());
                        }
                    },
                    _ => {}
                },
                _ => {
                    target_bind.insert(w, h);
                }
            },
        }
    }
    Some(rule_bind)
}

/// Scores each unsettled askable by the number of distinct pending rule
/// instances it occurs in and returns the best; ties go to the class's
/// askable priority, then to the lexicographically smallest proposition.
pub fn next_question(inst: &DecisionInstance, kb: &KnowledgeBase) -> Result<Option<Proposition>, DecisionError> {
    let scores = question_scores(inst, kb)?;
    let priority = |q: &Proposition| {
        inst.class
            .askable_priority
            .iter()
            .position(|(p, a)| *p == q.predicate && *a == q.arity())
            .unwrap_or(usize::MAX)
    };
    Ok(scores
        .into_iter()
        .min_by(|(qa, sa), (qb, sb)| {
            sb.cmp(sa)
                .then_with(|| priority(qa).cmp(&priority(qb)))
                .then_with(|| qa.cmp(qb))
        })
        .map(|(q, _)| q))
}

/// Pending-rule counts for every candidate question.
pub fn question_scores(inst: &DecisionInstance, kb: &KnowledgeBase) -> Result<BTreeMap<Proposition, usize>, DecisionError> {
    let mut scores: BTreeMap<Proposition, usize> = BTreeMap::new();
    for pending in pending_rules(inst, kb)? {
        for q in pending.open_askables {
            *scores.entry(q).or_default() += 1;
        }
    }
    Ok(scores)
}

/// Records the reply to `question`, updates the knowledge base and
/// recomputes every candidate.
pub fn record_answer(
    inst: &DecisionInstance,
    kb: &KnowledgeBase,
    question: &Proposition,
    reply: &Reply,
) -> Result<(DecisionInstance, KnowledgeBase), DecisionError> {
    inst.ensure_mutable()?;
    if !kb.is_askable(question) {
        return Err(DecisionError::NotAskable(question.to_string()));
    }
    if !question.is_ground() {
        return Err(KbError::NonGround(question.to_string()).into());
    }
    let kb = match reply {
        Reply::Yes => kb.add_observation(question.clone())?,
        Reply::No => kb.clone(),
        Reply::Value(p) => {
            if !kb.is_askable(p) {
                return Err(DecisionError::NotAskable(p.to_string()));
            }
            kb.add_observation(p.clone())?
        }
    };
    let mut next = inst.clone();
    next.asked.insert(question.clone());
    if *reply == Reply::No {
        next.denied.insert(question.clone());
    }
    if next.pending_question.as_ref() == Some(question) {
        next.pending_question = None;
    }
    next.state = DecisionState::Open;
    next.candidates = propose_options(&next, &kb)?;
    Ok((next, kb))
}

/// Recomputes candidates after the knowledge base changed outside a
/// question (an observation or an unsolicited finding).
pub fn refresh(inst: &DecisionInstance, kb: &KnowledgeBase) -> Result<DecisionInstance, DecisionError> {
    if !inst.is_live() {
        return Ok(inst.clone());
    }
    let mut next = inst.clone();
    next.candidates = propose_options(&next, kb)?;
    Ok(next)
}

/// Commits when the termination pattern holds (under the context) in the
/// belief store of the relevant theories and the commit rule yields a
/// unique winner. A tie leaves the instance open and records the tie.
pub fn try_terminate(inst: &DecisionInstance, kb: &KnowledgeBase) -> Result<(DecisionInstance, Termination), DecisionError> {
    if inst.state != DecisionState::Open {
        return Ok((inst.clone(), Termination::NotOpen));
    }
    let active = inst.active_theories(kb)?;
    let store = BeliefStore::compute(kb, &active, inst.mode)?;
    if !inst.class.terminate.holds(&store, &inst.context) {
        return Ok((inst.clone(), Termination::NotSatisfied));
    }
    let mut live: Vec<&Candidate> = inst.proposed().collect();
    if inst.class.commit_rule == CommitRule::Strongest {
        if let Some(best) = live.iter().map(|c| c.status.display).max() {
            live.retain(|c| c.status.display == best);
        }
    }
    if live.is_empty() {
        return Ok((inst.clone(), Termination::NoCandidates));
    }
    let options: Vec<(Proposition, Vec<Argument>)> =
        live.iter().map(|c| (c.option.clone(), c.arguments.clone())).collect();
    let ranking = tally_rank(&options);
    let mut next = inst.clone();
    match ranking.winner().cloned() {
        Some(option) => {
            next.state = DecisionState::Committed;
            next.tie = None;
            next.commitment = Some(Commitment {
                option: option.clone(),
                ranking,
            });
            Ok((next, Termination::Committed { option }))
        }
        None => {
            let options = ranking.top_group().to_vec();
            next.tie = Some(options.clone());
            Ok((next, Termination::Tie { options, ranking }))
        }
    }
}
