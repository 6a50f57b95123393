use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disease {
    pub name: String,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Symptom {
    pub name: String,
    /// Probability that the symptom is present, per disease.
    pub p: BTreeMap<String, f64>,
}

/// Diseases with priors and symptoms conditionally independent given the
/// disease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    #[serde(rename = "disease")]
    pub diseases: Vec<Disease>,
    #[serde(rename = "symptom", default)]
    pub symptoms: Vec<Symptom>,
}

impl GenerativeModel {
    pub fn from_toml(text: &str) -> Result<GenerativeModel, BenchError> {
        let model: GenerativeModel = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.diseases.is_empty() {
            return Err(BenchError::InvalidModel("no diseases".into()));
        }
        let total: f64 = self.diseases.iter().map(|d| d.prior).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(BenchError::InvalidModel(format!("priors sum to {total}")));
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.diseases {
            if !(0.0..=1.0).contains(&d.prior) {
                return Err(BenchError::InvalidModel(format!("prior of `{}` is {}", d.name, d.prior)));
            }
            if !names.insert(d.name.as_str()) {
                return Err(BenchError::InvalidModel(format!("disease `{}` listed twice", d.name)));
            }
        }
        let mut symptoms = std::collections::BTreeSet::new();
        for s in &self.symptoms {
            if !symptoms.insert(s.name.as_str()) {
                return Err(BenchError::InvalidModel(format!("symptom `{}` listed twice", s.name)));
            }
            for d in &self.diseases {
                match s.p.get(&d.name) {
                    Some(p) if (0.0..=1.0).contains(p) => {}
                    Some(p) => {
                        return Err(BenchError::InvalidModel(format!(
                            "p({} | {}) = {p} is not a probability",
                            s.name, d.name
                        )))
                    }
                    None => {
                        return Err(BenchError::InvalidModel(format!(
                            "symptom `{}` has no probability for `{}`",
                            s.name, d.name
                        )))
                    }
                }
            }
            if let Some(extra) = s.p.keys().find(|k| !names.contains(k.as_str())) {
                return Err(BenchError::InvalidModel(format!(
                    "symptom `{}` mentions unknown disease `{extra}`",
                    s.name
                )));
            }
        }
        Ok(())
    }

    pub fn disease(&self, name: &str) -> Option<&Disease> {
        self.diseases.iter().find(|d| d.name == name)
    }

    pub fn symptom(&self, name: &str) -> Option<&Symptom> {
        self.symptoms.iter().find(|s| s.name == name)
    }

    pub fn prior(&self, name: &str) -> Option<f64> {
        self.disease(name).map(|d| d.prior)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub disease: String,
    /// Presence of every model symptom.
    pub findings: BTreeMap<String, bool>,
}

/// Draws patient `index` of the stream seeded by `seed`: the disease from
/// the priors, then each symptom independently given the disease.
pub fn sample_patient(model: &GenerativeModel, seed: u64, index: u64) -> Result<PatientRecord, BenchError> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut disease = &model.diseases[model.diseases.len() - 1];
    for d in &model.diseases {
        acc += d.prior;
        if u < acc {
            disease = d;
            break;
        }
    }
    // Zero-prior diseases are never drawn, even at the rounding edge.
    if disease.prior == 0.0 {
        disease = model
            .diseases
            .iter()
            .rev()
            .find(|d| d.prior > 0.0)
            .expect("priors sum to one");
    }
    let findings = model
        .symptoms
        .iter()
        .map(|s| {
            let u: f64 = rng.random();
            (s.name.clone(), u < s.p[&disease.name])
        })
        .collect();
    Ok(PatientRecord {
        disease: disease.name.clone(),
        findings,
    })
}

/// Posterior over diseases, in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub probabilities: Vec<(String, f64)>,
}

impl Posterior {
    pub fn get(&self, disease: &str) -> Option<f64> {
        self.probabilities.iter().find(|(d, _)| d == disease).map(|(_, p)| *p)
    }

    /// Every disease with the maximal posterior, in model order.
    pub fn argmax(&self) -> Vec<&str> {
        let best = self.probabilities.iter().map(|(_, p)| *p).fold(f64::NEG_INFINITY, f64::max);
        self.probabilities
            .iter()
            .filter(|(_, p)| *p == best)
            .map(|(d, _)| d.as_str())
            .collect()
    }
}

/// Prior times the likelihood of every observed finding (absent symptoms
/// contribute `1 - p`), normalized. Unobserved symptoms contribute nothing.
pub fn naive_bayes_posterior(model: &GenerativeModel, findings: &BTreeMap<String, bool>) -> Result<Posterior, BenchError> {
    for name in findings.keys() {
        if model.symptom(name).is_none() {
            return Err(BenchError::UnknownSymptom(name.clone()));
        }
    }
    let weights: Vec<(String, f64)> = model
        .diseases
        .iter()
        .map(|d| {
            let mut w = d.prior;
            for s in &model.symptoms {
                if let Some(&present) = findings.get(&s.name) {
                    let p = s.p[&d.name];
                    w *= if present { p } else { 1.0 - p };
                }
            }
            (d.name.clone(), w)
        })
        .collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(BenchError::ZeroLikelihood);
    }
    Ok(Posterior {
        probabilities: weights.into_iter().map(|(d, w)| (d, w / total)).collect(),
    })
}
