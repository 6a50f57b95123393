use std::fmt::Write;

use crate::agent::{EventPayload, Scenario};
use crate::decision::{DecisionClass, Pattern, Reply};
use crate::kb::{AskableKind, KnowledgeBase};

pub(crate) fn document(kb: &KnowledgeBase, classes: &[DecisionClass], scenario: Option<&Scenario>) -> String {
    let mut sections: Vec<String> = Vec::new();
    if let Some(obs) = kb.declared_observation_theory() {
        sections.push(format!("observations {obs}.\n"));
    }
    if !kb.askables().is_empty() {
        let mut s = String::new();
        for ((pred, arity), kind) in kb.askables() {
            match kind {
                AskableKind::Open => writeln!(s, "askable {pred}/{arity}.").unwrap(),
                AskableKind::Functional => writeln!(s, "askable {pred}/{arity} functional.").unwrap(),
            }
        }
        sections.push(s);
    }
    if !kb.task_map().is_empty() {
        let mut s = String::new();
        for (class, theories) in kb.task_map() {
            let names: Vec<&str> = theories.iter().map(|t| t.as_str()).collect();
            writeln!(s, "task {class}: {}.", names.join(", ")).unwrap();
        }
        sections.push(s);
    }
    for theory in kb.theories() {
        let mut s = format!("theory {} kind {} {{\n", theory.id, theory.kind.keyword());
        for (id, p) in &theory.facts {
            writeln!(s, "  fact {id}: {p}.").unwrap();
        }
        for rule in theory.rules.values() {
            write!(s, "  rule {}: {} {}", rule.id, rule.head, rule.head_sign.keyword()).unwrap();
            if !rule.body.is_empty() {
                let body: Vec<String> = rule.body.iter().map(ToString::to_string).collect();
                write!(s, " if {}", body.join(", ")).unwrap();
            }
            s.push_str(".\n");
        }
        s.push_str("}\n");
        sections.push(s);
    }
    for class in classes {
        sections.push(decision(class));
    }
    if let Some(sc) = scenario {
        sections.push(scenario_block(sc));
    }
    sections.join("\n")
}

fn pattern(p: &Pattern) -> String {
    p.to_string()
}

fn decision(c: &DecisionClass) -> String {
    let mut s = format!("decision {} {{\n", c.name);
    if !c.prototype.is_trivial() {
        writeln!(s, "  prototype: {};", pattern(&c.prototype)).unwrap();
    }
    let theories: Vec<&str> = c.relevant_theories.iter().map(|t| t.as_str()).collect();
    writeln!(s, "  relevant_theories: {};", theories.join(", ")).unwrap();
    if !c.relevant_argument_types.is_empty() {
        let types: Vec<&str> = c.relevant_argument_types.iter().map(String::as_str).collect();
        writeln!(s, "  relevant_argument_types: {};", types.join(", ")).unwrap();
    }
    writeln!(s, "  options: {};", c.option_pattern).unwrap();
    writeln!(s, "  option_proposal: {};", c.option_proposal).unwrap();
    if !c.askable_priority.is_empty() {
        let prio: Vec<String> = c.askable_priority.iter().map(|(p, a)| format!("{p}/{a}")).collect();
        writeln!(s, "  askable_priority: {};", prio.join(", ")).unwrap();
    }
    if !c.terminate.is_trivial() {
        writeln!(s, "  terminate: {};", pattern(&c.terminate)).unwrap();
    }
    writeln!(s, "  commit: {};", c.commit_rule.keyword()).unwrap();
    s.push_str("}\n");
    s
}

fn reply(r: &Reply) -> String {
    match r {
        Reply::Yes => "yes".into(),
        Reply::No => "no".into(),
        Reply::Value(p) => format!("with {p}"),
    }
}

fn scenario_block(sc: &Scenario) -> String {
    let mut s = match &sc.name {
        Some(n) => format!("scenario {n} {{\n"),
        None => "scenario {\n".to_string(),
    };
    for e in &sc.events {
        match &e.payload {
            EventPayload::Observation { proposition } => writeln!(s, "  at {} observe {proposition}.", e.at),
            EventPayload::Answer { question, reply: r } => writeln!(s, "  at {} answer {question} {}.", e.at, reply(r)),
            EventPayload::GoalAdded { goal } => {
                writeln!(s, "  at {} goal {}: {}.", e.at, goal.id, pattern(&goal.condition))
            }
        }
        .unwrap();
    }
    for (q, r) in &sc.answers {
        writeln!(s, "  answer {q} {}.", reply(r)).unwrap();
    }
    s.push_str("}\n");
    s
}
