//! Seeded generators and independent oracles shared by the integration
//! tests.
#![allow(dead_code)]

pub mod api;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdp::agent::{Event, EventPayload, Goal, Scenario};
use sdp::aggregate::DisplayClass;
use sdp::argument::Argument;
use sdp::decision::{CommitRule, DecisionClass, Literal, Pattern, Reply};
use sdp::kb::{
    AskableKind, FactId, KnowledgeBase, Proposition, Rule, Sign, Substitution, Term, Theory, TheoryId, TheoryKind,
};
use sdp::lang::Document;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Predicates with their fixed arities.
pub const PREDICATES: [(&str, usize); 10] = [("p", 1), ("q", 2), ("r", 1), ("s", 0), ("t", 2), ("u", 1), ("v", 1), ("w", 2), ("x", 1), ("y", 2)];
pub const CONSTANTS: [&str; 5] = ["a", "b", "c", "d", "e"];
pub const VARIABLES: [&str; 2] = ["X", "Y"];
pub const SIGNS: [Sign; 4] = [Sign::Confirmed, Sign::Eliminated, Sign::Supported, Sign::Opposed];
pub const DISPLAY: [DisplayClass; 5] = [
    DisplayClass::Eliminated,
    DisplayClass::Conceivable,
    DisplayClass::Possible,
    DisplayClass::Plausible,
    DisplayClass::Confirmed,
];

fn ground_atom(rng: &mut impl Rng, pred: (&str, usize)) -> Proposition {
    let args = (0..pred.1).map(|_| Term::constant(*CONSTANTS.choose(rng).unwrap())).collect();
    Proposition::new(pred.0, args)
}

pub fn random_ground(rng: &mut impl Rng) -> Proposition {
    let pred = *PREDICATES.choose(rng).unwrap();
    ground_atom(rng, pred)
}

/// An atom whose arguments are variables with probability `var_p`.
fn random_open(rng: &mut impl Rng, var_p: f64) -> Proposition {
    let pred = *PREDICATES.choose(rng).unwrap();
    open_atom(rng, pred, var_p)
}

fn open_atom(rng: &mut impl Rng, pred: (&str, usize), var_p: f64) -> Proposition {
    let args = (0..pred.1)
        .map(|_| {
            if rng.random_bool(var_p) {
                Term::var(*VARIABLES.choose(rng).unwrap())
            } else {
                Term::constant(*CONSTANTS.choose(rng).unwrap())
            }
        })
        .collect();
    Proposition::new(pred.0, args)
}

fn random_sign(rng: &mut impl Rng) -> Sign {
    // Pro signs dominate so that chains form.
    *[Sign::Confirmed, Sign::Confirmed, Sign::Supported, Sign::Supported, Sign::Eliminated, Sign::Opposed]
        .choose(rng)
        .unwrap()
}

/// A range-restricted rule: head variables missing from the body are
/// replaced by constants.
pub fn random_rule(rng: &mut impl Rng, id: String) -> Rule {
    let body_len = rng.random_range(0..=3);
    let body: Vec<Proposition> = (0..body_len)
        .map(|_| random_open(rng, 0.5))
        .collect();
    let body_vars: BTreeSet<String> = body.iter().flat_map(|b| b.variables().map(str::to_string)).collect();
    let mut head = random_open(rng, 0.6);
    for t in head.args.iter_mut() {
        if t.is_var() && !body_vars.contains(t.name()) {
            *t = Term::constant(*CONSTANTS.choose(rng).unwrap());
        }
    }
    Rule::new(id, head, random_sign(rng), body)
}

/// A function-free knowledge base over one to three theories with at most
/// `max_rules` rules and `max_facts` facts. Ids are `f<n>` and `r<n>`.
pub fn random_kb(rng: &mut impl Rng, max_rules: usize, max_facts: usize) -> KnowledgeBase {
    let n_theories = rng.random_range(1..=3);
    let mut theories: Vec<Theory> = (0..n_theories)
        .map(|i| Theory::new(format!("t{i}"), TheoryKind::Domain))
        .collect();
    for i in 0..rng.random_range(0..=max_facts) {
        let p = random_ground(rng);
        let t = rng.random_range(0..n_theories);
        if theories[t].fact_id_of(&p).is_none() {
            theories[t].facts.insert(FactId::new(format!("f{i}")), p);
        }
    }
    for i in 0..rng.random_range(0..=max_rules) {
        let t = rng.random_range(0..n_theories);
        let rule = random_rule(rng, format!("r{i}"));
        theories[t].rules.insert(rule.id.clone(), rule);
    }
    let mut kb = KnowledgeBase::new();
    for t in theories {
        kb = kb.with_theory(t).expect("generated theories are valid");
    }
    kb
}

/// A superset of `kb` with up to `extra_rules` rules and `extra_facts` facts
/// added under fresh ids.
pub fn extend_kb(rng: &mut impl Rng, kb: &KnowledgeBase, extra_rules: usize, extra_facts: usize) -> KnowledgeBase {
    let ids: Vec<TheoryId> = kb.theory_ids().into_iter().collect();
    let mut theories: BTreeMap<TheoryId, Theory> = kb.theories().map(|t| (t.id.clone(), t.clone())).collect();
    for i in 0..rng.random_range(0..=extra_facts) {
        let p = random_ground(rng);
        let t = theories.get_mut(ids.choose(rng).unwrap()).unwrap();
        if t.fact_id_of(&p).is_none() {
            t.facts.insert(FactId::new(format!("g{i}")), p);
        }
    }
    for i in 0..rng.random_range(0..=extra_rules) {
        let rule = random_rule(rng, format!("x{i}"));
        theories.get_mut(ids.choose(rng).unwrap()).unwrap().rules.insert(rule.id.clone(), rule);
    }
    let mut out = KnowledgeBase::new();
    for t in theories.into_values() {
        out = out.with_theory(t).expect("extension stays valid");
    }
    out
}

fn weaken(sign: Sign) -> Sign {
    match sign {
        Sign::Confirmed => Sign::Supported,
        Sign::Eliminated => Sign::Opposed,
        other => other,
    }
}

fn bind(pattern: &Proposition, ground: &Proposition, theta: &Substitution) -> Option<Substitution> {
    if pattern.predicate != ground.predicate || pattern.args.len() != ground.args.len() {
        return None;
    }
    let mut theta = theta.clone();
    for (p, g) in pattern.args.iter().zip(&ground.args) {
        if p.is_var() {
            match theta.get(p.name()) {
                Some(bound) if bound != g.name() => return None,
                Some(_) => {}
                None => {
                    theta.insert(p.name().to_string(), g.name().to_string());
                }
            }
        } else if p != g {
            return None;
        }
    }
    Some(theta)
}

fn instantiate(p: &Proposition, theta: &Substitution) -> Proposition {
    let args = p
        .args
        .iter()
        .map(|t| match theta.get(t.name()) {
            Some(value) if t.is_var() => Term::constant(value.as_str()),
            _ => t.clone(),
        })
        .collect();
    Proposition::new(p.predicate.clone(), args)
}

type Derived = BTreeSet<(Proposition, Sign, BTreeSet<String>)>;

/// Pro-signed derived atoms by predicate: (atom, weakened, ids used).
type ProIndex = BTreeMap<String, Vec<(Proposition, bool, u128)>>;

/// Bottom-up closure of the knowledge base cut down to `allowed` fact and
/// rule ids: every (atom, sign, ids used) a finite derivation reaches.
/// Facts are confirmed; bodies need pro-signed premises; a categorical head
/// drops to its tentative sign when any premise is only supported.
/// Evaluation is semi-naive: each round joins at least one premise derived
/// in the previous round.
pub fn closure(kb: &KnowledgeBase, allowed: &BTreeSet<String>) -> Derived {
    let names: Vec<&String> = allowed.iter().collect();
    assert!(names.len() <= 128, "closure supports at most 128 ids");
    let bit = |id: &str| 1u128 << names.iter().position(|n| n.as_str() == id).expect("allowed id");
    let mut seeds = Vec::new();
    let mut rules = Vec::new();
    for t in kb.theories() {
        for (id, p) in &t.facts {
            if allowed.contains(id.as_str()) {
                seeds.push((p.clone(), Sign::Confirmed, bit(id.as_str())));
            }
        }
        for r in t.rules.values() {
            if allowed.contains(r.id.as_str()) {
                if r.body.is_empty() {
                    seeds.push((r.head.clone(), r.head_sign, bit(r.id.as_str())));
                } else {
                    rules.push((r.clone(), bit(r.id.as_str())));
                }
            }
        }
    }
    let mut all: BTreeSet<(Proposition, Sign, u128)> = BTreeSet::new();
    let mut old = ProIndex::new();
    let mut delta = ProIndex::new();
    let admit = |entry: (Proposition, Sign, u128), all: &mut BTreeSet<_>, next: &mut ProIndex| {
        if all.insert(entry.clone()) && matches!(entry.1, Sign::Confirmed | Sign::Supported) {
            let (p, sign, used) = entry;
            next.entry(p.predicate.clone()).or_default().push((p, sign == Sign::Supported, used));
        }
    };
    for entry in seeds {
        admit(entry, &mut all, &mut delta);
    }
    while delta.values().any(|v| !v.is_empty()) {
        let mut next = ProIndex::new();
        for (rule, rule_bit) in &rules {
            for k in 0..rule.body.len() {
                let mut partial: Vec<(Substitution, bool, u128)> = vec![(Substitution::new(), false, *rule_bit)];
                for (i, lit) in rule.body.iter().enumerate() {
                    let empty = Vec::new();
                    let sources: Vec<&Vec<(Proposition, bool, u128)>> = match i.cmp(&k) {
                        std::cmp::Ordering::Less => vec![old.get(&lit.predicate).unwrap_or(&empty)],
                        std::cmp::Ordering::Equal => vec![delta.get(&lit.predicate).unwrap_or(&empty)],
                        std::cmp::Ordering::Greater => vec![
                            old.get(&lit.predicate).unwrap_or(&empty),
                            delta.get(&lit.predicate).unwrap_or(&empty),
                        ],
                    };
                    let mut extended = Vec::new();
                    for (theta, weak, used) in &partial {
                        for (atom, w, ids) in sources.iter().copied().flatten() {
                            if let Some(theta2) = bind(lit, atom, theta) {
                                extended.push((theta2, *weak || *w, used | ids));
                            }
                        }
                    }
                    partial = extended;
                    if partial.is_empty() {
                        break;
                    }
                }
                for (theta, weak, used) in partial {
                    let head = instantiate(&rule.head, &theta);
                    let sign = if weak { weaken(rule.head_sign) } else { rule.head_sign };
                    admit((head, sign, used), &mut all, &mut next);
                }
            }
        }
        for (pred, entries) in std::mem::take(&mut delta) {
            old.entry(pred).or_default().extend(entries);
        }
        delta = next;
    }
    all.into_iter()
        .map(|(p, sign, used)| {
            let ids = names
                .iter()
                .enumerate()
                .filter(|(i, _)| used & (1 << i) != 0)
                .map(|(_, n)| (*n).clone())
                .collect();
            (p, sign, ids)
        })
        .collect()
}

/// Whether the argument is reproduced by a derivation that uses exactly its
/// grounds, and whether those grounds name exactly the owning theories.
pub fn replays_exactly(kb: &KnowledgeBase, arg: &Argument) -> bool {
    let ids: BTreeSet<String> = arg
        .grounds
        .facts
        .iter()
        .map(|f| f.as_str().to_string())
        .chain(arg.grounds.rules.iter().map(|r| r.as_str().to_string()))
        .collect();
    let owners: BTreeSet<TheoryId> = kb
        .theories()
        .filter(|t| {
            t.facts.keys().any(|f| ids.contains(f.as_str())) || t.rules.keys().any(|r| ids.contains(r.as_str()))
        })
        .map(|t| t.id.clone())
        .collect();
    owners == arg.grounds.theories
        && closure(kb, &ids).contains(&(arg.proposition.clone(), arg.sign, ids.clone()))
}

fn random_pattern(rng: &mut impl Rng, max: usize) -> Pattern {
    let n = rng.random_range(0..=max);
    Pattern::new(
        (0..n)
            .map(|_| Literal {
                atom: random_open(rng, 0.5),
                class: *DISPLAY.choose(rng).unwrap(),
                negated: rng.random_bool(0.3),
            })
            .collect(),
    )
}

fn subset<T: Clone>(rng: &mut impl Rng, items: &[T]) -> Vec<T> {
    items.iter().filter(|_| rng.random_bool(0.5)).cloned().collect()
}

/// A well-formed document exercising every construct of the text format.
pub fn random_document(rng: &mut impl Rng) -> Document {
    let mut kb = random_kb(rng, 6, 8);
    for t in kb.theories().map(|t| t.clone()).collect::<Vec<_>>() {
        if rng.random_bool(0.3) {
            let mut task = t.clone();
            task.kind = TheoryKind::Task;
            let others: Vec<Theory> = kb.theories().filter(|x| x.id != t.id).cloned().collect();
            let mut rebuilt = KnowledgeBase::new();
            for o in others {
                rebuilt = rebuilt.with_theory(o).unwrap();
            }
            kb = rebuilt.with_theory(task).unwrap();
        }
    }
    let with_observations = rng.random_bool(0.5);
    if with_observations {
        kb = kb
            .with_theory(Theory::new("obs", TheoryKind::Domain))
            .unwrap()
            .with_observation_theory(TheoryId::new("obs"));
        if rng.random_bool(0.5) {
            kb = kb.add_observation(random_ground(rng)).unwrap();
        }
    }
    let askable_preds: Vec<(&str, usize)> = subset(rng, &PREDICATES);
    for (p, a) in &askable_preds {
        let kind = if rng.random_bool(0.5) { AskableKind::Functional } else { AskableKind::Open };
        kb = kb.with_askable(p, *a, kind).unwrap();
    }
    let theory_ids: Vec<TheoryId> = kb.theory_ids().into_iter().collect();
    let n_classes = rng.random_range(0..=2);
    let mut classes = Vec::new();
    for i in 0..n_classes {
        let name = format!("c{i}");
        let option = random_open(rng, 0.7);
        let mut class = DecisionClass::new(name.clone(), option);
        let pool: Vec<TheoryId> = if rng.random_bool(0.5) {
            let task: BTreeSet<TheoryId> = subset(rng, &theory_ids).into_iter().collect();
            kb = kb.with_task(&name, task.clone()).unwrap();
            task.into_iter().collect()
        } else {
            theory_ids.clone()
        };
        class.relevant_theories = subset(rng, &pool).into_iter().collect();
        class.prototype = random_pattern(rng, 2);
        class.terminate = random_pattern(rng, 2);
        class.option_proposal = *DISPLAY.choose(rng).unwrap();
        class.commit_rule = if rng.random_bool(0.5) { CommitRule::Tally } else { CommitRule::Strongest };
        class.relevant_argument_types = subset(rng, &["causal".to_string(), "statistical".to_string()])
            .into_iter()
            .collect();
        class.askable_priority = subset(rng, &askable_preds)
            .into_iter()
            .map(|(p, a)| (p.to_string(), a))
            .collect();
        classes.push(class);
    }
    let scenario = (with_observations && rng.random_bool(0.6)).then(|| random_scenario(rng, &askable_preds));
    Document { kb, classes, scenario }
}

fn random_reply(rng: &mut impl Rng, pred: (&str, usize)) -> Reply {
    match rng.random_range(0..3) {
        0 => Reply::Yes,
        1 => Reply::No,
        _ => Reply::Value(ground_atom(rng, pred)),
    }
}

fn random_scenario(rng: &mut impl Rng, askable: &[(&str, usize)]) -> Scenario {
    let mut events = Vec::new();
    let mut at = 1;
    let mut goals = 0;
    for _ in 0..rng.random_range(0..=5) {
        at += rng.random_range(0..=2);
        let payload = match rng.random_range(0..3) {
            1 if !askable.is_empty() => {
                let pred = *askable.choose(rng).unwrap();
                EventPayload::Answer {
                    question: ground_atom(rng, pred),
                    reply: random_reply(rng, pred),
                }
            }
            2 => {
                goals += 1;
                EventPayload::GoalAdded {
                    goal: Goal {
                        id: format!("g{goals}"),
                        condition: random_pattern(rng, 2),
                    },
                }
            }
            _ => EventPayload::Observation {
                proposition: random_ground(rng),
            },
        };
        events.push(Event { at, payload });
    }
    let mut answers = BTreeMap::new();
    for _ in 0..rng.random_range(0..=3) {
        if let Some(&pred) = askable.choose(rng) {
            answers.insert(ground_atom(rng, pred), random_reply(rng, pred));
        }
    }
    Scenario {
        name: rng.random_bool(0.5).then(|| "episode".to_string()),
        events,
        answers,
    }
}
