//! Synthetic comparison of the rule-based decision procedure against a
//! naive-Bayes diagnosis over the same generative model.
//!
//! The Bayes arm sees every finding of a sampled patient and picks the
//! maximum-posterior disease. The rule arm runs a decision session, asking
//! questions through [`next_question`] and answering them from the patient
//! record until the class commits.

mod model;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{naive_bayes_posterior, sample_patient, Disease, GenerativeModel, PatientRecord, Posterior, Symptom};

use crate::decision::{
    next_question, record_answer, try_terminate, DecisionClass, DecisionError, DecisionInstance, Reply, Termination,
};
use crate::kb::{KnowledgeBase, Proposition, Substitution, Term};

/// Symptom values as they appear in propositions such as `fever(present)`.
pub const PRESENT: &str = "present";
pub const ABSENT: &str = "absent";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("cannot read model: {0}")]
    Config(String),
    #[error("unknown symptom `{0}`")]
    UnknownSymptom(String),
    #[error("every disease has zero likelihood for these findings")]
    ZeroLikelihood,
    #[error("options {options:?} do not match diseases {diseases:?}")]
    OptionMismatch {
        options: BTreeSet<String>,
        diseases: BTreeSet<String>,
    },
    #[error("rule `{0}` concludes an option without naming a disease")]
    OpenOption(String),
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PriorBucket {
    #[serde(rename = "<=0.03")]
    Rare,
    #[serde(rename = "0.03-0.1")]
    Uncommon,
    #[serde(rename = ">0.1")]
    Common,
}

impl PriorBucket {
    pub const ALL: [PriorBucket; 3] = [PriorBucket::Rare, PriorBucket::Uncommon, PriorBucket::Common];

    pub fn of(prior: f64) -> PriorBucket {
        if prior <= 0.03 {
            PriorBucket::Rare
        } else if prior <= 0.1 {
            PriorBucket::Uncommon
        } else {
            PriorBucket::Common
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PriorBucket::Rare => "<=0.03",
            PriorBucket::Uncommon => "0.03-0.1",
            PriorBucket::Common => ">0.1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAgreement {
    pub bucket: PriorBucket,
    pub cases: usize,
    /// `None` when the bucket is empty.
    pub agreement: Option<f64>,
}

/// Fractions are `None` when `n` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub seed: u64,
    pub accuracy_bayes: Option<f64>,
    pub accuracy_rules: Option<f64>,
    /// Mean fraction of the model's symptoms the rule arm asked about.
    pub questions_fraction: Option<f64>,
    pub agreement_by_prior: Vec<BucketAgreement>,
    /// Patients whose maximum posterior was shared by several diseases.
    pub bayes_ties: usize,
    /// Rule sessions that ended with several options tied at the top.
    pub rule_ties: usize,
    /// Rule sessions that ended without a commitment.
    pub fallbacks: usize,
}

impl ComparisonReport {
    pub fn agreement(&self, bucket: PriorBucket) -> Option<f64> {
        self.agreement_by_prior
            .iter()
            .find(|b| b.bucket == bucket)
            .and_then(|b| b.agreement)
    }
}

fn fmt_fraction(f: Option<f64>) -> String {
    f.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "patients            {}", self.n)?;
        writeln!(f, "seed                {}", self.seed)?;
        writeln!(f, "accuracy bayes      {}", fmt_fraction(self.accuracy_bayes))?;
        writeln!(f, "accuracy rules      {}", fmt_fraction(self.accuracy_rules))?;
        writeln!(f, "questions fraction  {}", fmt_fraction(self.questions_fraction))?;
        writeln!(f, "agreement by prior of the bayes choice")?;
        for b in &self.agreement_by_prior {
            writeln!(f, "  {:<10} {:>5} cases  {}", b.bucket.label(), b.cases, fmt_fraction(b.agreement))?;
        }
        writeln!(f, "bayes ties          {}", self.bayes_ties)?;
        writeln!(f, "rule ties           {}", self.rule_ties)?;
        write!(f, "fallbacks           {}", self.fallbacks)
    }
}

/// The disease an option names: its last argument.
pub fn option_disease(option: &Proposition) -> Option<&str> {
    match option.args.last() {
        Some(Term::Const(c)) => Some(c),
        _ => None,
    }
}

/// Diseases named by rules that conclude the class's option pattern.
pub fn option_space(kb: &KnowledgeBase, class: &DecisionClass) -> Result<BTreeSet<String>, BenchError> {
    let mut out = BTreeSet::new();
    let pattern = &class.option_pattern;
    for (rule, _) in kb.rules_in(&class.relevant_theories) {
        if rule.head.predicate != pattern.predicate || rule.head.arity() != pattern.arity() {
            continue;
        }
        match option_disease(&rule.head) {
            Some(d) => {
                out.insert(d.to_string());
            }
            None => return Err(BenchError::OpenOption(rule.id.to_string())),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub disease: String,
    pub committed: bool,
    /// Several options were tied when the session had to fall back.
    pub tied: bool,
    pub asked: BTreeSet<String>,
}

fn reply_from_record(model: &GenerativeModel, record: &PatientRecord, q: &Proposition) -> Result<Reply, BenchError> {
    let name = &q.predicate;
    if model.symptom(name).is_none() || q.arity() != 1 {
        return Err(BenchError::UnknownSymptom(q.to_string()));
    }
    let actual = if record.findings[name] { PRESENT } else { ABSENT };
    if q.args[0] == Term::Const(actual.to_string()) {
        Ok(Reply::Yes)
    } else {
        Ok(Reply::Value(Proposition::atom(name, &[actual])))
    }
}

/// Runs one decision session for `record`.
pub fn diagnose_with_rules(
    model: &GenerativeModel,
    kb: &KnowledgeBase,
    class: &DecisionClass,
    record: &PatientRecord,
) -> Result<RuleOutcome, BenchError> {
    let mut kb = kb.clone();
    let mut inst = DecisionInstance::open("d1", class, Substitution::new(), &kb)?;
    let mut asked = BTreeSet::new();
    loop {
        let (next, outcome) = try_terminate(&inst, &kb)?;
        inst = next;
        if let Termination::Committed { option } = outcome {
            let disease = option_disease(&option).unwrap_or_default().to_string();
            return Ok(RuleOutcome {
                disease,
                committed: true,
                tied: false,
                asked,
            });
        }
        let Some(q) = next_question(&inst, &kb)? else {
            break;
        };
        let reply = reply_from_record(model, record, &q)?;
        asked.insert(q.predicate.clone());
        let (next, next_kb) = record_answer(&inst, &kb, &q, &reply)?;
        inst = next;
        kb = next_kb;
    }
    // No commitment: the most probable a priori among the top tally group.
    let ranking = inst.ranking();
    let top: Vec<&str> = ranking.top_group().iter().filter_map(option_disease).collect();
    let pool: Vec<&Disease> = if top.is_empty() {
        model.diseases.iter().collect()
    } else {
        model.diseases.iter().filter(|d| top.contains(&d.name.as_str())).collect()
    };
    let best = pool
        .iter()
        .fold(None::<&Disease>, |best, d| match best {
            Some(b) if b.prior >= d.prior => Some(b),
            _ => Some(d),
        })
        .expect("models have diseases");
    Ok(RuleOutcome {
        disease: best.name.clone(),
        committed: false,
        tied: top.len() > 1,
        asked,
    })
}

/// Compares both arms on `n` sampled patients.
pub fn run_comparison(
    model: &GenerativeModel,
    kb: &KnowledgeBase,
    class: &DecisionClass,
    n: usize,
    seed: u64,
) -> Result<ComparisonReport, BenchError> {
    model.validate()?;
    let options = option_space(kb, class)?;
    let diseases: BTreeSet<String> = model.diseases.iter().map(|d| d.name.clone()).collect();
    if options != diseases {
        return Err(BenchError::OptionMismatch { options, diseases });
    }
    let observations = kb.observation_theory();
    if !class.relevant_theories.contains(&observations) {
        return Err(BenchError::Config(format!(
            "decision class `{}` does not see the observation theory `{}`, so answers would be ignored",
            class.name,
            observations.as_str()
        )));
    }
    let mut correct_bayes = 0usize;
    let mut correct_rules = 0usize;
    let mut asked_fraction = 0.0;
    let mut buckets: BTreeMap<PriorBucket, (usize, usize)> = BTreeMap::new();
    let (mut bayes_ties, mut rule_ties, mut fallbacks) = (0, 0, 0);
    for index in 0..n {
        let record = sample_patient(model, seed, index as u64)?;
        let posterior = naive_bayes_posterior(model, &record.findings)?;
        let best = posterior.argmax();
        if best.len() > 1 {
            bayes_ties += 1;
        }
        let bayes = best[0].to_string();
        let rules = diagnose_with_rules(model, kb, class, &record)?;
        if !rules.committed {
            fallbacks += 1;
        }
        if rules.tied {
            rule_ties += 1;
        }
        correct_bayes += usize::from(bayes == record.disease);
        correct_rules += usize::from(rules.disease == record.disease);
        if !model.symptoms.is_empty() {
            asked_fraction += rules.asked.len() as f64 / model.symptoms.len() as f64;
        }
        let bucket = PriorBucket::of(model.prior(&bayes).expect("bayes picks a model disease"));
        let entry = buckets.entry(bucket).or_default();
        entry.0 += 1;
        entry.1 += usize::from(bayes == rules.disease);
    }
    let frac = |k: f64| (n > 0).then(|| k / n as f64);
    Ok(ComparisonReport {
        n,
        seed,
        accuracy_bayes: frac(correct_bayes as f64),
        accuracy_rules: frac(correct_rules as f64),
        questions_fraction: frac(asked_fraction),
        agreement_by_prior: PriorBucket::ALL
            .iter()
            .map(|&bucket| {
                let (cases, agree) = buckets.get(&bucket).copied().unwrap_or_default();
                BucketAgreement {
                    bucket,
                    cases,
                    agreement: (cases > 0).then(|| agree as f64 / cases as f64),
                }
            })
            .collect(),
        bayes_ties,
        rule_ties,
        fallbacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::DisplayClass;
    use crate::decision::{Literal, Pattern};
    use crate::kb::{AskableKind, Rule, Sign, Theory, TheoryId, TheoryKind};
    use proptest::prelude::*;

    fn model(priors: &[(&str, f64)], symptoms: &[(&str, &[f64])]) -> GenerativeModel {
        GenerativeModel {
            diseases: priors
                .iter()
                .map(|(n, p)| Disease {
                    name: n.to_string(),
                    prior: *p,
                })
                .collect(),
            symptoms: symptoms
                .iter()
                .map(|(n, ps)| Symptom {
                    name: n.to_string(),
                    p: priors.iter().zip(ps.iter()).map(|((d, _), p)| (d.to_string(), *p)).collect(),
                })
                .collect(),
        }
    }

    /// Posterior by summing the full joint distribution over every
    /// assignment of every symptom consistent with the findings.
    fn joint_enumeration(m: &GenerativeModel, findings: &BTreeMap<String, bool>) -> Vec<f64> {
        let k = m.symptoms.len();
        let mut mass = vec![0.0; m.diseases.len()];
        for (i, d) in m.diseases.iter().enumerate() {
            for bits in 0u32..(1 << k) {
                let mut joint = d.prior;
                let mut consistent = true;
                for (j, s) in m.symptoms.iter().enumerate() {
                    let present = bits & (1 << j) != 0;
                    if findings.get(&s.name).is_some_and(|&f| f != present) {
                        consistent = false;
                        break;
                    }
                    let p = s.p[&d.name];
                    joint *= if present { p } else { 1.0 - p };
                }
                if consistent {
                    mass[i] += joint;
                }
            }
        }
        let total: f64 = mass.iter().sum();
        mass.into_iter().map(|x| x / total).collect()
    }

    #[test]
    fn degenerate_model_samples_deterministically() {
        let m = model(&[("flu", 1.0)], &[("fever", &[1.0])]);
        let r = sample_patient(&m, 1, 0).unwrap();
        assert_eq!(r.disease, "flu");
        assert!(r.findings["fever"]);
        assert_eq!(sample_patient(&m, 9, 3).unwrap(), sample_patient(&m, 9, 3).unwrap());
    }

    #[test]
    fn sampled_priors_within_three_sigma() {
        let m = model(&[("a", 0.7), ("b", 0.3)], &[]);
        let n = 10_000u64;
        let hits = (0..n).filter(|&i| sample_patient(&m, 42, i).unwrap().disease == "a").count() as f64;
        let sigma = (n as f64 * 0.7 * 0.3).sqrt();
        assert!((hits - 0.7 * n as f64).abs() <= 3.0 * sigma, "{hits} draws of a");
    }

    #[test]
    fn posterior_cases() {
        let m = model(&[("a", 0.6), ("b", 0.4)], &[("s", &[0.9, 0.2])]);
        let none = naive_bayes_posterior(&m, &BTreeMap::new()).unwrap();
        assert_eq!(none.get("a"), Some(0.6));
        let present = BTreeMap::from([("s".to_string(), true)]);
        let post = naive_bayes_posterior(&m, &present).unwrap();
        let oracle = joint_enumeration(&m, &present);
        assert!((post.get("a").unwrap() - oracle[0]).abs() < 1e-12);
        assert!((post.get("a").unwrap() - 0.54 / 0.62).abs() < 1e-12);
        let flat = model(&[("a", 0.5), ("b", 0.5)], &[("s", &[0.3, 0.3])]);
        let post = naive_bayes_posterior(&flat, &present).unwrap();
        assert!((post.get("a").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn posterior_errors() {
        let m = model(&[("a", 0.5), ("b", 0.5)], &[("s", &[0.0, 0.0])]);
        let present = BTreeMap::from([("s".to_string(), true)]);
        assert_eq!(naive_bayes_posterior(&m, &present), Err(BenchError::ZeroLikelihood));
        let unknown = BTreeMap::from([("t".to_string(), true)]);
        assert!(matches!(naive_bayes_posterior(&m, &unknown), Err(BenchError::UnknownSymptom(_))));
        let bad = model(&[("a", 0.5), ("b", 0.6)], &[]);
        assert!(matches!(bad.validate(), Err(BenchError::InvalidModel(_))));
    }

    #[test]
    fn toml_model() {
        let text = r#"
            [[disease]]
            name = "a"
            prior = 0.25
            [[disease]]
            name = "b"
            prior = 0.75
            [[symptom]]
            name = "s"
            p = { a = 0.9, b = 0.1 }
        "#;
        let m = GenerativeModel::from_toml(text).unwrap();
        assert_eq!(m.diseases.len(), 2);
        assert_eq!(m.symptoms[0].p["b"], 0.1);
        assert!(GenerativeModel::from_toml("[[disease]]\nname = \"a\"\nprior = 0.5\n").is_err());
    }

    fn rules_fixture(with_rules: bool) -> (KnowledgeBase, DecisionClass) {
        let mut t = Theory::new("rules", TheoryKind::Domain);
        let mk = |id: &str, d: &str, sign, body: Vec<Proposition>| Rule::new(id, Proposition::atom("dx", &[d]), sign, body);
        let rules = if with_rules {
            vec![
                mk("r1", "a", Sign::Confirmed, vec![Proposition::atom("s", &[PRESENT])]),
                mk("r2", "b", Sign::Confirmed, vec![Proposition::atom("s", &[ABSENT])]),
            ]
        } else {
            vec![mk("r1", "a", Sign::Confirmed, vec![]), mk("r2", "b", Sign::Supported, vec![])]
        };
        for r in rules {
            t.rules.insert(r.id.clone(), r);
        }
        let kb = KnowledgeBase::new()
            .with_theory(t)
            .unwrap()
            .with_askable("s", 1, AskableKind::Functional)
            .unwrap();
        let mut class = DecisionClass::new("dx", Proposition::atom("dx", &["D"]));
        class.relevant_theories = [TheoryId::new("rules"), TheoryId::new("findings")].into();
        class.terminate = Pattern::new(vec![Literal::positive(Proposition::atom("dx", &["D"]), DisplayClass::Confirmed)]);
        class.commit_rule = crate::decision::CommitRule::Strongest;
        (kb, class)
    }

    #[test]
    fn empty_run_reports_undefined_fractions() {
        let m = model(&[("a", 0.5), ("b", 0.5)], &[("s", &[0.9, 0.1])]);
        let (kb, class) = rules_fixture(true);
        let r = run_comparison(&m, &kb, &class, 0, 1).unwrap();
        assert_eq!(r.n, 0);
        assert_eq!(r.accuracy_bayes, None);
        assert_eq!(r.questions_fraction, None);
        assert!(r.agreement_by_prior.iter().all(|b| b.agreement.is_none()));
    }

    #[test]
    fn immediate_commitment_asks_nothing() {
        let m = model(&[("a", 0.5), ("b", 0.5)], &[("s", &[0.9, 0.1])]);
        let (kb, class) = rules_fixture(false);
        let r = run_comparison(&m, &kb, &class, 20, 3).unwrap();
        assert_eq!(r.questions_fraction, Some(0.0));
        assert_eq!(r.fallbacks, 0);
    }

    #[test]
    fn perfect_symptom_rules_match_bayes() {
        let m = model(&[("a", 0.5), ("b", 0.5)], &[("s", &[1.0, 0.0])]);
        let (kb, class) = rules_fixture(true);
        let r = run_comparison(&m, &kb, &class, 50, 5).unwrap();
        assert_eq!(r.accuracy_rules, Some(1.0));
        assert_eq!(r.accuracy_bayes, Some(1.0));
        assert_eq!(r.questions_fraction, Some(1.0));
        assert_eq!(r, run_comparison(&m, &kb, &class, 50, 5).unwrap());
    }

    #[test]
    fn mismatched_options_are_rejected() {
        let m = model(&[("a", 0.5), ("c", 0.5)], &[("s", &[0.9, 0.1])]);
        let (kb, class) = rules_fixture(true);
        assert!(matches!(run_comparison(&m, &kb, &class, 1, 1), Err(BenchError::OptionMismatch { .. })));
    }

    #[test]
    fn class_must_see_observations() {
        let m = model(&[("a", 0.5), ("b", 0.5)], &[("s", &[0.9, 0.1])]);
        let (kb, mut class) = rules_fixture(true);
        class.relevant_theories = [TheoryId::new("rules")].into();
        assert!(matches!(run_comparison(&m, &kb, &class, 1, 1), Err(BenchError::Config(_))));
    }

    fn arb_model() -> impl Strategy<Value = GenerativeModel> {
        (1usize..=4, 0usize..=6).prop_flat_map(|(nd, ns)| {
            (
                proptest::collection::vec(0.01f64..1.0, nd),
                proptest::collection::vec(proptest::collection::vec(0.01f64..0.99, nd), ns),
            )
                .prop_map(move |(weights, table)| {
                    let total: f64 = weights.iter().sum();
                    let mut diseases: Vec<Disease> = weights
                        .iter()
                        .enumerate()
                        .map(|(i, w)| Disease {
                            name: format!("d{i}"),
                            prior: w / total,
                        })
                        .collect();
                    let rest: f64 = diseases[1..].iter().map(|d| d.prior).sum();
                    diseases[0].prior = 1.0 - rest;
                    let symptoms = table
                        .iter()
                        .enumerate()
                        .map(|(j, row)| Symptom {
                            name: format!("s{j}"),
                            p: row.iter().enumerate().map(|(i, p)| (format!("d{i}"), *p)).collect(),
                        })
                        .collect();
                    GenerativeModel { diseases, symptoms }
                })
        })
    }

    fn arb_case() -> impl Strategy<Value = (GenerativeModel, BTreeMap<String, bool>)> {
        arb_model().prop_flat_map(|m| {
            let k = m.symptoms.len();
            (Just(m), proptest::collection::vec(proptest::option::of(any::<bool>()), k)).prop_map(|(m, obs)| {
                let findings = obs
                    .iter()
                    .enumerate()
                    .filter_map(|(j, o)| o.map(|v| (format!("s{j}"), v)))
                    .collect();
                (m, findings)
            })
        })
    }

    proptest! {
        #[test]
        fn posterior_matches_joint_enumeration((m, findings) in arb_case()) {
            let post = naive_bayes_posterior(&m, &findings).unwrap();
            let oracle = joint_enumeration(&m, &findings);
            let sum: f64 = post.probabilities.iter().map(|(_, p)| p).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            for ((_, p), q) in post.probabilities.iter().zip(&oracle) {
                prop_assert!((p - q).abs() <= 1e-9);
            }
        }

        #[test]
        fn discriminating_evidence_raises_posterior((m, findings) in arb_case(), pick in 0usize..6) {
            prop_assume!(!m.symptoms.is_empty());
            let s = &m.symptoms[pick % m.symptoms.len()];
            prop_assume!(!findings.contains_key(&s.name));
            let d = &m.diseases.iter().max_by(|a, b| s.p[&a.name].total_cmp(&s.p[&b.name])).unwrap().name;
            let favours = m.diseases.iter().all(|o| o.name == *d || s.p[d] > s.p[&o.name]);
            prop_assume!(favours && m.diseases.len() > 1);
            let before = naive_bayes_posterior(&m, &findings).unwrap().get(d).unwrap();
            let mut more = findings.clone();
            more.insert(s.name.clone(), true);
            let after = naive_bayes_posterior(&m, &more).unwrap().get(d).unwrap();
            prop_assert!(after > before);
        }
    }
}
