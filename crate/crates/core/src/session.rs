//! Interactive consultations over a shared document: one private fact
//! overlay per session, decisions raised by prototype matching, and JSON
//! views of everything a client can inspect.
//!
//! Both the HTTP service and the C interface drive sessions through this
//! module, so the two expose identical semantics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{belief_status, AggregationMode, BeliefStatus, DisplayClass};
use crate::argument::{Argument, ArgumentEngine};
use crate::decision::{
    match_prototypes, next_question, record_answer, refresh, try_terminate, BeliefStore, DecisionClass,
    DecisionInstance, DecisionState, Reply, Termination,
};
use crate::kb::{FactId, KnowledgeBase, Proposition, TheoryId};
use crate::lang::parse_proposition;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown decision `{0}`")]
    UnknownDecision(String),
    #[error("malformed proposition: {0}")]
    Malformed(String),
    #[error("invalid finding: {0}")]
    InvalidFinding(String),
    #[error("not confirmed")]
    NotConfirmed,
    #[error("tie between {}", .0.join(", "))]
    Tie(Vec<String>),
    #[error("no candidates")]
    NoCandidates,
    #[error("decision `{decision}` is {state}")]
    NotOpen { decision: String, state: DecisionState },
    #[error("{0}")]
    Engine(String),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::UnknownDecision(_) => "unknown_decision",
            SessionError::Malformed(_) => "malformed_proposition",
            SessionError::InvalidFinding(_) => "invalid_finding",
            SessionError::NotConfirmed => "not_confirmed",
            SessionError::Tie(_) => "tie",
            SessionError::NoCandidates => "no_candidates",
            SessionError::NotOpen { .. } => "decision_not_open",
            SessionError::Engine(_) => "engine_error",
        }
    }
}

fn engine<E: std::fmt::Display>(e: E) -> SessionError {
    SessionError::Engine(e.to_string())
}

/// Parses a ground proposition in document syntax.
pub fn parse_ground(text: &str) -> Result<Proposition, SessionError> {
    let p = parse_proposition(text).map_err(|e| SessionError::Malformed(e.message))?;
    if !p.is_ground() {
        return Err(SessionError::Malformed(format!("`{p}` is not ground")));
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub proposition: Proposition,
    pub present: bool,
    /// Fact id for the recorded observation; generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl Finding {
    pub fn present(proposition: Proposition) -> Finding {
        Finding {
            proposition,
            present: true,
            id: None,
        }
    }

    pub fn absent(proposition: Proposition) -> Finding {
        Finding {
            proposition,
            present: false,
            id: None,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Finding {
        self.id = Some(id.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub kb: KnowledgeBase,
    pub classes: Vec<DecisionClass>,
    /// In the order they were raised: `d1`, `d2`, ...
    pub decisions: Vec<DecisionInstance>,
    pub findings: Vec<Finding>,
    /// Increases with every mutation.
    pub revision: u64,
    pub created_at: u64,
    pub updated_at: u64,
    pub mode: AggregationMode,
}

impl Session {
    /// Starts a session and raises every decision whose prototype already
    /// holds.
    pub fn new(id: impl Into<String>, kb: KnowledgeBase, classes: Vec<DecisionClass>, now: u64) -> Result<Session, SessionError> {
        let mut s = Session {
            id: id.into(),
            kb,
            classes,
            decisions: Vec::new(),
            findings: Vec::new(),
            revision: 1,
            created_at: now,
            updated_at: now,
            mode: AggregationMode::default(),
        };
        s.raise_decisions()?;
        Ok(s)
    }

    fn store(&self) -> Result<BeliefStore, SessionError> {
        BeliefStore::compute(&self.kb, &self.kb.theory_ids(), self.mode).map_err(engine)
    }

    fn raise_decisions(&mut self) -> Result<(), SessionError> {
        let store = self.store()?;
        for (class_name, context) in match_prototypes(&store, &self.classes) {
            if self.decisions.iter().any(|d| d.class.name == class_name && d.context == context) {
                continue;
            }
            let class = self.classes.iter().find(|c| c.name == class_name).expect("matched class");
            let id = format!("d{}", self.decisions.len() + 1);
            let inst = DecisionInstance::open_with_mode(id, class, context, &self.kb, self.mode).map_err(engine)?;
            self.decisions.push(inst);
        }
        Ok(())
    }

    pub fn decision(&self, id: &str) -> Result<&DecisionInstance, SessionError> {
        self.decisions
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| SessionError::UnknownDecision(id.to_string()))
    }

    fn decision_index(&self, id: &str) -> Result<usize, SessionError> {
        self.decisions
            .iter()
            .position(|d| d.id == id)
            .ok_or_else(|| SessionError::UnknownDecision(id.to_string()))
    }

    /// Records a finding. For askable propositions this answers the question
    /// in every live decision (a denial when `present` is false); other
    /// propositions can only be reported present and become observations.
    pub fn add_finding(&mut self, finding: Finding, now: u64) -> Result<(), SessionError> {
        let p = &finding.proposition;
        let present = finding.present;
        if !p.is_ground() {
            return Err(SessionError::Malformed(format!("`{p}` is not ground")));
        }
        let askable = self.kb.is_askable(p);
        if !present && !askable {
            return Err(SessionError::InvalidFinding(format!("`{p}` is not askable and cannot be denied")));
        }
        if let Some(id) = &finding.id {
            if !present {
                return Err(SessionError::InvalidFinding("a denied finding has no fact id".into()));
            }
            self.kb = self
                .kb
                .add_observation_with_id(FactId::new(id.as_str()), p.clone())
                .map_err(|e| SessionError::InvalidFinding(e.to_string()))?;
        }
        let reply = if present { Reply::Yes } else { Reply::No };
        let live: Vec<usize> = (0..self.decisions.len()).filter(|&i| self.decisions[i].is_live()).collect();
        if askable && !live.is_empty() {
            for i in live {
                let (inst, kb) = record_answer(&self.decisions[i], &self.kb, p, &reply).map_err(engine)?;
                self.decisions[i] = inst;
                self.kb = kb;
            }
        } else if present {
            self.kb = self.kb.add_observation(p.clone()).map_err(engine)?;
        }
        for i in 0..self.decisions.len() {
            let refreshed = refresh(&self.decisions[i], &self.kb).map_err(engine)?;
            self.decisions[i] = refreshed;
        }
        self.raise_decisions()?;
        self.findings.push(finding);
        self.touch(now);
        Ok(())
    }

    fn touch(&mut self, now: u64) {
        self.revision += 1;
        self.updated_at = now;
    }

    /// Arguments for a ground proposition over every theory.
    pub fn arguments(&self, p: &Proposition) -> Result<ArgumentsView, SessionError> {
        if !p.is_ground() {
            return Err(SessionError::Malformed(format!("`{p}` is not ground")));
        }
        let engine = ArgumentEngine::new(&self.kb, &self.kb.theory_ids()).map_err(engine)?;
        let args = engine.arguments(p);
        let status = belief_status(p, &args, self.mode).map_err(engine_err)?;
        Ok(ArgumentsView {
            revision: self.revision,
            proposition: p.to_string(),
            status: StatusView::from(&status),
            arguments: args.iter().map(ArgumentView::from).collect(),
        })
    }

    pub fn options(&self, decision: &str) -> Result<OptionsView, SessionError> {
        let inst = self.decision(decision)?;
        Ok(OptionsView::of(inst, self.revision))
    }

    pub fn next_question(&self, decision: &str) -> Result<QuestionView, SessionError> {
        let inst = self.decision(decision)?;
        let question = if inst.is_live() {
            next_question(inst, &self.kb).map_err(engine)?
        } else {
            None
        };
        Ok(QuestionView {
            revision: self.revision,
            decision: inst.id.clone(),
            question: question.map(|q| q.to_string()),
        })
    }

    /// Commits the decision when its termination condition holds and the
    /// commit rule picks a unique option. Committing again returns the
    /// existing commitment.
    pub fn commit(&mut self, decision: &str, now: u64) -> Result<CommitView, SessionError> {
        let i = self.decision_index(decision)?;
        let inst = &self.decisions[i];
        if let Some(c) = &inst.commitment {
            return Ok(CommitView::of(inst, c.option.to_string(), self.revision));
        }
        let (next, outcome) = try_terminate(inst, &self.kb).map_err(engine)?;
        match outcome {
            Termination::Committed { option } => {
                self.decisions[i] = next;
                self.touch(now);
                Ok(CommitView::of(&self.decisions[i], option.to_string(), self.revision))
            }
            Termination::NotSatisfied => Err(SessionError::NotConfirmed),
            Termination::NoCandidates => Err(SessionError::NoCandidates),
            Termination::Tie { options, .. } => Err(SessionError::Tie(options.iter().map(ToString::to_string).collect())),
            Termination::NotOpen => Err(SessionError::NotOpen {
                decision: decision.to_string(),
                state: inst.state,
            }),
        }
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            revision: self.revision,
            created_at: self.created_at,
            updated_at: self.updated_at,
            findings: self
                .findings
                .iter()
                .map(|f| FindingView {
                    proposition: f.proposition.to_string(),
                    present: f.present,
                    id: f.id.clone(),
                })
                .collect(),
            decisions: self.decisions.iter().map(DecisionSummary::of).collect(),
        }
    }

    pub fn decisions_view(&self) -> DecisionsView {
        DecisionsView {
            revision: self.revision,
            decisions: self.decisions.iter().map(DecisionSummary::of).collect(),
        }
    }
}

fn engine_err(e: crate::aggregate::AggregateError) -> SessionError {
    SessionError::Engine(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusView {
    pub display: DisplayClass,
    pub classes: Vec<String>,
    pub eliminated: bool,
}

impl From<&BeliefStatus> for StatusView {
    fn from(s: &BeliefStatus) -> Self {
        StatusView {
            display: s.display,
            classes: s.classes.iter().map(|c| c.keyword().to_string()).collect(),
            eliminated: s.eliminated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundsView {
    pub facts: Vec<String>,
    pub rules: Vec<String>,
    pub theories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentView {
    pub proposition: String,
    pub sign: String,
    pub grounds: GroundsView,
}

impl From<&Argument> for ArgumentView {
    fn from(a: &Argument) -> Self {
        ArgumentView {
            proposition: a.proposition.to_string(),
            sign: a.sign.keyword().to_string(),
            grounds: GroundsView {
                facts: a.grounds.facts.iter().map(|f| f.to_string()).collect(),
                rules: a.grounds.rules.iter().map(|r| r.to_string()).collect(),
                theories: a.grounds.theories.iter().map(|t| t.to_string()).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentsView {
    pub revision: u64,
    pub proposition: String,
    pub status: StatusView,
    pub arguments: Vec<ArgumentView>,
}

/// Arguments and status for every derivable instance of a goal pattern, or
/// for the goal itself when it is ground.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalReport {
    pub goal: String,
    pub results: Vec<PropositionReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub proposition: String,
    pub status: StatusView,
    pub arguments: Vec<ArgumentView>,
}

pub fn goal_report(
    kb: &KnowledgeBase,
    goal: &Proposition,
    active: &BTreeSet<TheoryId>,
    mode: AggregationMode,
) -> Result<GoalReport, SessionError> {
    let engine = ArgumentEngine::new(kb, active).map_err(engine)?;
    let instances: BTreeSet<Proposition> = if goal.is_ground() {
        BTreeSet::from([goal.clone()])
    } else {
        engine.derivable_matching(goal).cloned().collect()
    };
    let mut results = Vec::new();
    for p in instances {
        let args = engine.arguments(&p);
        let status = belief_status(&p, &args, mode).map_err(engine_err)?;
        results.push(PropositionReport {
            proposition: p.to_string(),
            status: StatusView::from(&status),
            arguments: args.iter().map(ArgumentView::from).collect(),
        });
    }
    Ok(GoalReport {
        goal: goal.to_string(),
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateOptionView {
    pub option: String,
    pub status: StatusView,
    pub proposed: bool,
    pub pros: usize,
    pub cons: usize,
    pub arguments: Vec<ArgumentView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionsView {
    pub revision: u64,
    pub decision: String,
    pub class: String,
    pub state: DecisionState,
    pub relevant_argument_types: Vec<String>,
    pub candidates: Vec<CandidateOptionView>,
    /// Proposed options, best first; options in one group are tied.
    pub ranking: Vec<Vec<String>>,
    pub tie: bool,
    pub commitment: Option<String>,
}

impl OptionsView {
    pub fn of(inst: &DecisionInstance, revision: u64) -> OptionsView {
        let ranking = inst.ranking();
        OptionsView {
            revision,
            decision: inst.id.clone(),
            class: inst.class.name.clone(),
            state: inst.state,
            relevant_argument_types: inst.class.relevant_argument_types.iter().cloned().collect(),
            candidates: inst
                .candidates
                .iter()
                .map(|c| CandidateOptionView {
                    option: c.option.to_string(),
                    status: StatusView::from(&c.status),
                    proposed: c.proposed,
                    pros: c.arguments.iter().filter(|a| a.sign.is_pro()).count(),
                    cons: c.arguments.iter().filter(|a| a.sign.is_con()).count(),
                    arguments: c.arguments.iter().map(ArgumentView::from).collect(),
                })
                .collect(),
            ranking: ranking
                .ranking
                .iter()
                .map(|g| g.iter().map(ToString::to_string).collect())
                .collect(),
            tie: ranking.is_tied_at_top(),
            commitment: inst.commitment.as_ref().map(|c| c.option.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionView {
    pub revision: u64,
    pub decision: String,
    pub question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitView {
    pub revision: u64,
    pub decision: String,
    pub option: String,
    pub ranking: Vec<Vec<String>>,
}

impl CommitView {
    fn of(inst: &DecisionInstance, option: String, revision: u64) -> CommitView {
        let ranking = inst
            .commitment
            .as_ref()
            .map(|c| {
                c.ranking
                    .ranking
                    .iter()
                    .map(|g| g.iter().map(ToString::to_string).collect())
                    .collect()
            })
            .unwrap_or_default();
        CommitView {
            revision,
            decision: inst.id.clone(),
            option,
            ranking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingView {
    pub proposition: String,
    pub present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub id: String,
    pub class: String,
    pub context: BTreeMap<String, String>,
    pub state: DecisionState,
    pub candidates: usize,
    pub commitment: Option<String>,
}

impl DecisionSummary {
    fn of(d: &DecisionInstance) -> DecisionSummary {
        DecisionSummary {
            id: d.id.clone(),
            class: d.class.name.clone(),
            context: d.context.clone(),
            state: d.state,
            candidates: d.candidates.len(),
            commitment: d.commitment.as_ref().map(|c| c.option.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub revision: u64,
    pub created_at: u64,
    pub updated_at: u64,
    pub findings: Vec<FindingView>,
    pub decisions: Vec<DecisionSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionsView {
    pub revision: u64,
    pub decisions: Vec<DecisionSummary>,
}
