//! Scripted environments: timed events plus a table of answers to the
//! questions the agent may pose.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decision::{Pattern, Reply};
use crate::kb::Proposition;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub id: String,
    /// Holds once the goal is achieved.
    pub condition: Pattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    Observation { proposition: Proposition },
    Answer { question: Proposition, reply: Reply },
    GoalAdded { goal: Goal },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    /// Step at which the event is perceived; steps start at 1.
    pub at: u64,
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scenario {
    pub name: Option<String>,
    /// Sorted by step; events at the same step keep their order.
    pub events: Vec<Event>,
    /// How the environment answers each question.
    pub answers: BTreeMap<Proposition, Reply>,
}

impl Scenario {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_event(mut self, at: u64, payload: EventPayload) -> Self {
        let pos = self.events.partition_point(|e| e.at <= at);
        self.events.insert(pos, Event { at, payload });
        self
    }

    pub fn with_answer(mut self, question: Proposition, reply: Reply) -> Self {
        self.answers.insert(question, reply);
        self
    }

    pub fn events_at(&self, step: u64) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.at == step)
    }

    pub fn last_event_step(&self) -> u64 {
        self.events.last().map_or(0, |e| e.at)
    }
}
