//! The control layer: a discrete step loop that perceives scripted events,
//! keeps beliefs and goals, and raises, advances, commits and closes
//! decisions.
//!
//! The loop only talks to the decision module. Each step runs, in order:
//! perception of the events due, prototype matching, one termination attempt
//! or question per live decision, and closing of committed decisions whose
//! commitment achieves a goal (or every committed decision when there are no
//! goals). Everything that happens is appended to a [`Trace`].

mod scenario;
mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use scenario::{Event, EventPayload, Goal, Scenario};
pub use trace::{replay_scenario, CandidateView, DecisionEvent, Entry, Trace, TraceRecord};

use crate::aggregate::AggregationMode;
use crate::decision::{
    match_prototypes, record_answer, refresh, try_terminate, BeliefStore, DecisionClass, DecisionInstance,
    DecisionState, Reply, Termination,
};
use crate::kb::{KnowledgeBase, Proposition, Substitution};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    OpenDecision {
        decision: String,
        class: String,
        context: Substitution,
    },
    Ask {
        decision: String,
        question: Proposition,
    },
    Commit {
        decision: String,
        option: Proposition,
    },
    Close {
        decision: String,
        goal: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// The base knowledge base plus every fact perceived so far.
    pub kb: KnowledgeBase,
    pub classes: Vec<DecisionClass>,
    /// Beliefs over all theories, as of the last perception.
    pub store: BeliefStore,
    pub goals: BTreeMap<String, Goal>,
    pub decisions: Vec<DecisionInstance>,
    /// Last completed step; 0 before the first.
    pub step: u64,
    /// Index of the first scenario event not yet perceived.
    pub next_event: usize,
    pub trace: Trace,
    pub mode: AggregationMode,
}

impl AgentState {
    pub fn new(kb: KnowledgeBase, classes: Vec<DecisionClass>) -> AgentState {
        let mode = AggregationMode::default();
        let store = global_store(&kb, mode);
        AgentState {
            kb,
            classes,
            store,
            goals: BTreeMap::new(),
            decisions: Vec::new(),
            step: 0,
            next_event: 0,
            trace: Trace::default(),
            mode,
        }
    }

    pub fn live_decisions(&self) -> impl Iterator<Item = &DecisionInstance> {
        self.decisions.iter().filter(|d| d.is_live())
    }

    /// No scenario events left and no decision open or awaiting an answer.
    pub fn is_quiescent(&self, scenario: &Scenario) -> bool {
        self.next_event >= scenario.events.len() && self.live_decisions().next().is_none()
    }

    fn log(&mut self, entry: Entry) {
        self.trace.push(self.step, entry);
    }

    fn log_decision(&mut self, event: DecisionEvent) {
        self.log(Entry::Decision(event));
    }

    /// Refreshes every live decision, logging the ones whose candidates
    /// changed.
    fn refresh_all(&mut self) {
        self.store = global_store(&self.kb, self.mode);
        for i in 0..self.decisions.len() {
            if !self.decisions[i].is_live() {
                continue;
            }
            match refresh(&self.decisions[i], &self.kb) {
                Ok(next) => self.replace_decision(i, next),
                Err(e) => self.log_decision(DecisionEvent::Error {
                    decision: Some(self.decisions[i].id.clone()),
                    message: e.to_string(),
                }),
            }
        }
    }

    fn replace_decision(&mut self, i: usize, next: DecisionInstance) {
        let before = CandidateView::of(&self.decisions[i]);
        let after = CandidateView::of(&next);
        self.decisions[i] = next;
        if before != after {
            self.log_decision(DecisionEvent::Candidates {
                decision: self.decisions[i].id.clone(),
                candidates: after,
            });
        }
    }
}

fn global_store(kb: &KnowledgeBase, mode: AggregationMode) -> BeliefStore {
    BeliefStore::compute(kb, &kb.theory_ids(), mode).expect("every theory of the knowledge base exists")
}

/// Merges one event into the state and records it.
pub fn perceive(state: &AgentState, event: &Event) -> AgentState {
    let mut s = state.clone();
    let mut unsolicited = false;
    let mut error = None;
    match &event.payload {
        EventPayload::Observation { proposition } => match s.kb.add_observation(proposition.clone()) {
            Ok(kb) => s.kb = kb,
            Err(e) => error = Some(e.to_string()),
        },
        EventPayload::Answer { question, reply } => {
            let waiting: Vec<usize> = (0..s.decisions.len())
                .filter(|&i| {
                    s.decisions[i].state == DecisionState::AwaitingAnswer
                        && s.decisions[i].pending_question.as_ref() == Some(question)
                })
                .collect();
            unsolicited = waiting.is_empty();
            if unsolicited {
                let fact = match reply {
                    Reply::Yes => Some(question.clone()),
                    Reply::Value(p) => Some(p.clone()),
                    Reply::No => None,
                };
                if let Some(p) = fact {
                    match s.kb.add_observation(p) {
                        Ok(kb) => s.kb = kb,
                        Err(e) => error = Some(e.to_string()),
                    }
                }
            } else {
                s.log(Entry::Perception {
                    event: event.payload.clone(),
                    unsolicited,
                    error: None,
                });
                for i in waiting {
                    answer(&mut s, i, question, reply);
                }
                s.refresh_all();
                return s;
            }
        }
        EventPayload::GoalAdded { goal } => {
            s.goals.insert(goal.id.clone(), goal.clone());
        }
    }
    s.log(Entry::Perception {
        event: event.payload.clone(),
        unsolicited,
        error,
    });
    s.refresh_all();
    s
}

fn answer(s: &mut AgentState, i: usize, question: &Proposition, reply: &Reply) {
    match record_answer(&s.decisions[i], &s.kb, question, reply) {
        Ok((inst, kb)) => {
            s.kb = kb;
            s.log_decision(DecisionEvent::Answered {
                decision: inst.id.clone(),
                question: question.clone(),
                reply: reply.clone(),
            });
            s.replace_decision(i, inst);
        }
        Err(e) => s.log_decision(DecisionEvent::Error {
            decision: Some(s.decisions[i].id.clone()),
            message: e.to_string(),
        }),
    }
}

/// Runs one step of the control loop.
pub fn agent_step(state: &AgentState, scenario: &Scenario) -> (AgentState, Vec<Action>) {
    let mut s = state.clone();
    s.step += 1;
    let pending = scenario.events.len() - s.next_event.min(scenario.events.len());
    s.log(Entry::Step {
        live_decisions: s.live_decisions().count(),
        pending_events: pending,
    });
    let mut actions = Vec::new();

    // Perception.
    while let Some(event) = scenario.events.get(s.next_event) {
        if event.at > s.step {
            break;
        }
        s = perceive(&s, event);
        s.next_event += 1;
    }

    // Raising decisions.
    for (class_name, context) in match_prototypes(&s.store, &s.classes) {
        let exists = s
            .decisions
            .iter()
            .any(|d| d.class.name == class_name && d.context == context);
        if exists {
            continue;
        }
        let class = s.classes.iter().find(|c| c.name == class_name).expect("matched class").clone();
        let id = format!("d{}", s.decisions.len() + 1);
        match DecisionInstance::open_with_mode(id.clone(), &class, context.clone(), &s.kb, s.mode) {
            Ok(inst) => {
                let candidates = CandidateView::of(&inst);
                s.decisions.push(inst);
                let action = Action::OpenDecision {
                    decision: id.clone(),
                    class: class_name,
                    context,
                };
                s.log(Entry::Action(action.clone()));
                actions.push(action);
                if !candidates.is_empty() {
                    s.log_decision(DecisionEvent::Candidates { decision: id, candidates });
                }
            }
            Err(e) => s.log_decision(DecisionEvent::Error {
                decision: None,
                message: e.to_string(),
            }),
        }
    }

    // Advancing decisions: terminate if possible, otherwise ask one question.
    for i in 0..s.decisions.len() {
        if s.decisions[i].state != DecisionState::Open {
            continue;
        }
        let (inst, outcome) = match try_terminate(&s.decisions[i], &s.kb) {
            Ok(r) => r,
            Err(e) => {
                s.log_decision(DecisionEvent::Error {
                    decision: Some(s.decisions[i].id.clone()),
                    message: e.to_string(),
                });
                continue;
            }
        };
        s.decisions[i] = inst;
        match outcome {
            Termination::Committed { option } => {
                let action = Action::Commit {
                    decision: s.decisions[i].id.clone(),
                    option,
                };
                s.log(Entry::Action(action.clone()));
                actions.push(action);
                continue;
            }
            Termination::Tie { options, .. } => s.log_decision(DecisionEvent::Tie {
                decision: s.decisions[i].id.clone(),
                options,
            }),
            Termination::NotOpen | Termination::NotSatisfied | Termination::NoCandidates => {}
        }
        let (inst, question) = match s.decisions[i].pose_question(&s.kb) {
            Ok(r) => r,
            Err(e) => {
                s.log_decision(DecisionEvent::Error {
                    decision: Some(s.decisions[i].id.clone()),
                    message: e.to_string(),
                });
                continue;
            }
        };
        s.decisions[i] = inst;
        let Some(question) = question else { continue };
        let action = Action::Ask {
            decision: s.decisions[i].id.clone(),
            question: question.clone(),
        };
        s.log(Entry::Action(action.clone()));
        actions.push(action);
        match scenario.answers.get(&question) {
            Some(reply) => {
                answer(&mut s, i, &question, reply);
                s.store = global_store(&s.kb, s.mode);
            }
            None => s.log_decision(DecisionEvent::Awaiting {
                decision: s.decisions[i].id.clone(),
                question,
            }),
        }
    }
    // Answers may have changed the facts other decisions rest on.
    s.refresh_all();

    // Closing decisions whose commitment achieves a goal.
    for i in 0..s.decisions.len() {
        if s.decisions[i].state != DecisionState::Committed {
            continue;
        }
        let option = s.decisions[i].commitment.as_ref().expect("committed").option.clone();
        let goal = if s.goals.is_empty() {
            Some(None)
        } else {
            let hypothetical = s.store.with_confirmed(&option, s.mode);
            s.goals
                .values()
                .find(|g| g.condition.holds(&hypothetical, &Substitution::new()))
                .map(|g| Some(g.id.clone()))
        };
        let Some(goal) = goal else { continue };
        let closed = s.decisions[i].close().expect("committed instances close");
        s.decisions[i] = closed;
        let action = Action::Close {
            decision: s.decisions[i].id.clone(),
            goal,
        };
        s.log(Entry::Action(action.clone()));
        actions.push(action);
    }
    (s, actions)
}

/// Steps until quiescence or `max_steps`, returning the full trace.
pub fn run_episode(kb: &KnowledgeBase, classes: &[DecisionClass], scenario: &Scenario, max_steps: u64) -> Trace {
    run_episode_state(kb, classes, scenario, max_steps).trace
}

/// Like [`run_episode`] but returns the final state.
pub fn run_episode_state(
    kb: &KnowledgeBase,
    classes: &[DecisionClass],
    scenario: &Scenario,
    max_steps: u64,
) -> AgentState {
    let mut state = AgentState::new(kb.clone(), classes.to_vec());
    if max_steps == 0 {
        state.log(Entry::Truncated { max_steps });
        return state;
    }
    loop {
        let (next, _) = agent_step(&state, scenario);
        state = next;
        if state.is_quiescent(scenario) {
            state.log(Entry::Quiescent);
            return state;
        }
        if state.step >= max_steps {
            state.log(Entry::Truncated { max_steps });
            return state;
        }
    }
}
