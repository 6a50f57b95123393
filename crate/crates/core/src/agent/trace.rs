use serde::{Deserialize, Serialize};

use super::{Action, EventPayload, Scenario};
use crate::aggregate::DisplayClass;
use crate::decision::{DecisionInstance, Reply};
use crate::kb::Proposition;

/// Compact candidate summary used in traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateView {
    pub option: Proposition,
    pub status: DisplayClass,
    pub arguments: usize,
}

impl CandidateView {
    pub fn of(inst: &DecisionInstance) -> Vec<CandidateView> {
        inst.candidates
            .iter()
            .map(|c| CandidateView {
                option: c.option.clone(),
                status: c.status.display,
                arguments: c.arguments.len(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DecisionEvent {
    Answered {
        decision: String,
        question: Proposition,
        reply: Reply,
    },
    /// The scenario has no answer to the question yet.
    Awaiting { decision: String, question: Proposition },
    Candidates {
        decision: String,
        candidates: Vec<CandidateView>,
    },
    Tie { decision: String, options: Vec<Proposition> },
    Error { decision: Option<String>, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Entry {
    Step {
        live_decisions: usize,
        pending_events: usize,
    },
    Perception {
        event: EventPayload,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        unsolicited: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Action(Action),
    Decision(DecisionEvent),
    Quiescent,
    Truncated { max_steps: u64 },
}

impl Entry {
    pub fn kind(&self) -> &'static str {
        match self {
            Entry::Step { .. } => "step",
            Entry::Perception { .. } => "perception",
            Entry::Action(_) => "action",
            Entry::Decision(_) => "decision",
            Entry::Quiescent => "quiescent",
            Entry::Truncated { .. } => "truncated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    #[serde(flatten)]
    pub entry: Entry,
}

/// Append-only log of an episode.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, step: u64, entry: Entry) {
        self.records.push(TraceRecord { step, entry });
    }

    pub fn actions(&self) -> Vec<(u64, Action)> {
        self.records
            .iter()
            .filter_map(|r| match &r.entry {
                Entry::Action(a) => Some((r.step, a.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn perceptions(&self) -> Vec<(u64, EventPayload)> {
        self.records
            .iter()
            .filter_map(|r| match &r.entry {
                Entry::Perception { event, .. } => Some((r.step, event.clone())),
                _ => None,
            })
            .collect()
    }

    /// One JSON object per line, each terminated by a newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Trace { records })
    }
}

/// A scenario that feeds the trace's perceptions back at the steps they
/// were perceived, answering questions the way they were answered.
pub fn replay_scenario(trace: &Trace) -> Scenario {
    let mut scenario = Scenario::new();
    for (step, event) in trace.perceptions() {
        scenario = scenario.with_event(step, event);
    }
    for r in &trace.records {
        if let Entry::Decision(DecisionEvent::Answered { question, reply, .. }) = &r.entry {
            scenario.answers.insert(question.clone(), reply.clone());
        }
    }
    scenario
}
