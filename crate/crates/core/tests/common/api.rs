//! In-process HTTP client for the service router and a mirror of session
//! semantics built from direct decision-module calls.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use sdp::aggregate::{AggregationMode, DisplayClass};
use sdp::decision::{
    match_prototypes, next_question, record_answer, refresh, try_terminate, BeliefStore, DecisionClass,
    DecisionInstance, Reply, Termination,
};
use sdp::kb::{KnowledgeBase, Proposition};
use sdp::lang::{parse, Document};
use sdp::service::{router, AppState};

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> Document {
    parse(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap()
}

pub struct Api {
    app: axum::Router,
    rt: tokio::runtime::Runtime,
}

impl Api {
    pub fn new(state: AppState) -> Api {
        Api {
            app: router(Arc::new(state)),
            rt: tokio::runtime::Builder::new_current_thread().build().unwrap(),
        }
    }

    pub fn for_fixture(name: &str) -> Api {
        let doc = fixture(name);
        Api::new(AppState::new(doc.kb, doc.classes))
    }

    pub fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (u16, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let req = req.body(body).unwrap();
        self.rt.block_on(async {
            let resp = self.app.clone().oneshot(req).await.unwrap();
            let status = resp.status().as_u16();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes();
            let value = if bytes.is_empty() {
                Value::Null
            } else {
                serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
            };
            (status, value)
        })
    }

    pub fn get(&self, uri: &str) -> (u16, Value) {
        self.call(Method::GET, uri, None)
    }

    pub fn post(&self, uri: &str, body: Value) -> (u16, Value) {
        self.call(Method::POST, uri, Some(body))
    }

    pub fn create(&self) -> String {
        let (status, v) = self.call(Method::POST, "/sessions", None);
        assert_eq!(status, 201, "{v}");
        v["id"].as_str().unwrap().to_string()
    }
}

/// Candidate summary compared across the two paths.
pub type CandidateRow = (String, DisplayClass, usize, usize);

pub fn rows_from_json(options: &Value) -> Vec<CandidateRow> {
    options["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            let display: DisplayClass = serde_json::from_value(c["status"]["display"].clone()).unwrap();
            (
                c["option"].as_str().unwrap().to_string(),
                display,
                c["pros"].as_u64().unwrap() as usize,
                c["cons"].as_u64().unwrap() as usize,
            )
        })
        .collect()
}

/// Session behaviour reimplemented on the decision module alone.
pub struct Direct {
    pub kb: KnowledgeBase,
    pub classes: Vec<DecisionClass>,
    pub decisions: Vec<DecisionInstance>,
}

/// What a mutation did, for comparison with the HTTP status.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok,
    Committed(String),
    Rejected(&'static str),
}

impl Direct {
    pub fn new(doc: &Document) -> Direct {
        let mut d = Direct {
            kb: doc.kb.clone(),
            classes: doc.classes.clone(),
            decisions: Vec::new(),
        };
        d.raise();
        d
    }

    fn raise(&mut self) {
        let store = BeliefStore::compute(&self.kb, &self.kb.theory_ids(), AggregationMode::Subsumption).unwrap();
        for (name, context) in match_prototypes(&store, &self.classes) {
            if self.decisions.iter().any(|d| d.class.name == name && d.context == context) {
                continue;
            }
            let class = self.classes.iter().find(|c| c.name == name).unwrap();
            let id = format!("d{}", self.decisions.len() + 1);
            self.decisions
                .push(DecisionInstance::open_with_mode(id, class, context, &self.kb, AggregationMode::Subsumption).unwrap());
        }
    }

    pub fn finding(&mut self, p: &Proposition, present: bool) -> Outcome {
        let askable = self.kb.is_askable(p);
        if !present && !askable {
            return Outcome::Rejected("invalid_finding");
        }
        let live: Vec<usize> = (0..self.decisions.len()).filter(|&i| self.decisions[i].is_live()).collect();
        let reply = if present { Reply::Yes } else { Reply::No };
        if askable && !live.is_empty() {
            for i in live {
                let (inst, kb) = record_answer(&self.decisions[i], &self.kb, p, &reply).unwrap();
                self.decisions[i] = inst;
                self.kb = kb;
            }
        } else if present {
            self.kb = self.kb.add_observation(p.clone()).unwrap();
        }
        for i in 0..self.decisions.len() {
            self.decisions[i] = refresh(&self.decisions[i], &self.kb).unwrap();
        }
        self.raise();
        Outcome::Ok
    }

    pub fn commit(&mut self, id: &str) -> Outcome {
        let Some(i) = self.decisions.iter().position(|d| d.id == id) else {
            return Outcome::Rejected("unknown_decision");
        };
        if let Some(c) = &self.decisions[i].commitment {
            return Outcome::Committed(c.option.to_string());
        }
        let (next, t) = try_terminate(&self.decisions[i], &self.kb).unwrap();
        match t {
            Termination::Committed { option } => {
                self.decisions[i] = next;
                Outcome::Committed(option.to_string())
            }
            Termination::NotSatisfied => Outcome::Rejected("not_confirmed"),
            Termination::NoCandidates => Outcome::Rejected("no_candidates"),
            Termination::Tie { .. } => Outcome::Rejected("tie"),
            Termination::NotOpen => Outcome::Rejected("decision_not_open"),
        }
    }

    pub fn rows(&self, id: &str) -> Vec<CandidateRow> {
        let d = self.decisions.iter().find(|d| d.id == id).unwrap();
        d.candidates
            .iter()
            .map(|c| {
                (
                    c.option.to_string(),
                    c.status.display,
                    c.arguments.iter().filter(|a| a.sign.is_pro()).count(),
                    c.arguments.iter().filter(|a| a.sign.is_con()).count(),
                )
            })
            .collect()
    }

    pub fn question(&self, id: &str) -> Option<String> {
        let d = self.decisions.iter().find(|d| d.id == id).unwrap();
        if !d.is_live() {
            return None;
        }
        next_question(d, &self.kb).unwrap().map(|q| q.to_string())
    }
}

pub fn outcome_of(status: u16, body: &Value) -> Outcome {
    match status {
        200 if body.get("option").is_some() => Outcome::Committed(body["option"].as_str().unwrap().to_string()),
        200 => Outcome::Ok,
        _ => Outcome::Rejected(match body["code"].as_str().unwrap() {
            "invalid_finding" => "invalid_finding",
            "unknown_decision" => "unknown_decision",
            "not_confirmed" => "not_confirmed",
            "no_candidates" => "no_candidates",
            "tie" => "tie",
            "decision_not_open" => "decision_not_open",
            other => panic!("unexpected error code {other}"),
        }),
    }
}

/// One step of a random API sequence.
#[derive(Debug, Clone)]
pub enum Step {
    Finding(String, bool),
    Commit(usize),
    ReadQuestion(usize),
}

/// Ground propositions a client could report for the fixture documents.
pub const FINDINGS: [&str; 14] = [
    "abnormal(haematemesis)",
    "abnormal(melaena)",
    "pain(epigastric)",
    "pain(none)",
    "endoscopy(inflamed)",
    "endoscopy(ulcer_seen)",
    "nsaid_use(yes)",
    "liver_disease(present)",
    "age(elderly)",
    "age(young)",
    "weight_loss(present)",
    "biopsy(malignant)",
    "biopsy(benign)",
    "cancer(present)",
];

/// Runs `steps` against both paths and returns the first divergence.
pub fn differential(doc_name: &str, steps: &[Step]) -> Result<usize, String> {
    let api = Api::for_fixture(doc_name);
    let mut direct = Direct::new(&fixture(doc_name));
    let sid = api.create();
    let mut checks = 0;
    let mut compare = |api: &Api, direct: &Direct, after: &str| -> Result<(), String> {
        let (_, ds) = api.get(&format!("/sessions/{sid}/decisions"));
        let ids: Vec<String> = ds["decisions"].as_array().unwrap().iter().map(|d| d["id"].as_str().unwrap().to_string()).collect();
        let direct_ids: Vec<String> = direct.decisions.iter().map(|d| d.id.clone()).collect();
        if ids != direct_ids {
            return Err(format!("after {after}: decisions {ids:?} vs {direct_ids:?}"));
        }
        for id in ids {
            let (status, options) = api.get(&format!("/sessions/{sid}/decisions/{id}/options"));
            if status != 200 {
                return Err(format!("after {after}: options {status} {options}"));
            }
            let (http, engine) = (rows_from_json(&options), direct.rows(&id));
            if http != engine {
                return Err(format!("after {after}: {id} candidates {http:?} vs {engine:?}"));
            }
            checks += 1;
        }
        Ok(())
    };
    compare(&api, &direct, "create")?;
    for (n, step) in steps.iter().enumerate() {
        let label = format!("step {n} {step:?}");
        match step {
            Step::Finding(p, present) => {
                let (status, body) = api.post(
                    &format!("/sessions/{sid}/findings"),
                    serde_json::json!({ "proposition": p, "present": present }),
                );
                let expected = direct.finding(&sdp::lang::parse_proposition(p).unwrap(), *present);
                let got = outcome_of(status, &body);
                if got != expected {
                    return Err(format!("{label}: {got:?} vs {expected:?}"));
                }
            }
            Step::Commit(k) => {
                let Some(id) = direct.decisions.get(k % direct.decisions.len().max(1)).map(|d| d.id.clone()) else {
                    continue;
                };
                let (status, body) = api.call(Method::POST, &format!("/sessions/{sid}/decisions/{id}/commit"), None);
                let expected = direct.commit(&id);
                let got = outcome_of(status, &body);
                if got != expected {
                    return Err(format!("{label}: {got:?} vs {expected:?}"));
                }
            }
            Step::ReadQuestion(k) => {
                let Some(id) = direct.decisions.get(k % direct.decisions.len().max(1)).map(|d| d.id.clone()) else {
                    continue;
                };
                let (_, body) = api.get(&format!("/sessions/{sid}/decisions/{id}/next-question"));
                let got = body["question"].as_str().map(str::to_string);
                if got != direct.question(&id) {
                    return Err(format!("{label}: question {got:?} vs {:?}", direct.question(&id)));
                }
            }
        }
        compare(&api, &direct, &label)?;
    }
    Ok(checks)
}

/// A random step sequence of the given length.
pub fn random_steps(rng: &mut impl rand::Rng, len: usize) -> Vec<Step> {
    use rand::seq::IndexedRandom;
    (0..len)
        .map(|_| match rng.random_range(0..10) {
            0..=6 => Step::Finding(FINDINGS.choose(rng).unwrap().to_string(), rng.random_bool(0.8)),
            7 | 8 => Step::Commit(rng.random_range(0..3)),
            _ => Step::ReadQuestion(rng.random_range(0..3)),
        })
        .collect()
}
