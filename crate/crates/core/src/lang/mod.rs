//! The `.sdp` text format for knowledge bases, decision classes and
//! scenarios.
//!
//! ```text
//! observations patient.
//! askable weight_loss/1 functional.
//! task diagnosis: gastro, patient.
//!
//! theory gastro kind domain {
//!   fact f_age: age(elderly).
//!   rule r1: cancer(present) maybe if age(elderly), weight_loss(present).
//! }
//!
//! decision diagnosis {
//!   prototype: abnormal(O) confirmed, not cause(C, O) confirmed;
//!   options: cause(C, O);
//!   terminate: cause(C, O) confirmed;
//!   commit: strongest;
//! }
//!
//! scenario {
//!   at 1 observe abnormal(obs1).
//!   answer weight_loss(present) yes.
//! }
//! ```
//!
//! `%` starts a comment. Fact ids are optional (`fact age(elderly).`
//! receives a fresh `f<n>` id). `maybe` is accepted for `supported`.
//! Pattern literals default to the `confirmed` class.

mod lexer;
mod parser;
mod printer;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::Scenario;
use crate::decision::{DecisionClass, Pattern};
use crate::kb::{KnowledgeBase, Proposition};

/// A parsed document.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Document {
    pub kb: KnowledgeBase,
    pub classes: Vec<DecisionClass>,
    pub scenario: Option<Scenario>,
}

impl Document {
    pub fn class(&self, name: &str) -> Option<&DecisionClass> {
        self.classes.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Parses a document, returning every error found when it is malformed.
pub fn parse(text: &str) -> Result<Document, Vec<ParseError>> {
    parser::parse_document(text)
}

/// Parses a single proposition such as `cause(C, obs1)`.
pub fn parse_proposition(text: &str) -> Result<Proposition, ParseError> {
    parser::proposition(text)
}

/// Parses a pattern such as `abnormal(O), not cause(C, O) confirmed`.
pub fn parse_pattern(text: &str) -> Result<Pattern, ParseError> {
    parser::pattern(text)
}

/// Canonical text for a model. Sections appear in a fixed order and
/// theories sort by name, so equal models print identically.
pub fn serialize(kb: &KnowledgeBase, classes: &[DecisionClass]) -> String {
    printer::document(kb, classes, None)
}

pub fn serialize_document(doc: &Document) -> String {
    printer::document(&doc.kb, &doc.classes, doc.scenario.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::DisplayClass;
    use crate::decision::{CommitRule, Reply};
    use crate::kb::{RuleId, Sign, TheoryId};

    fn errors_of(text: &str) -> Vec<ParseError> {
        parse(text).expect_err("should fail")
    }

    #[test]
    fn maybe_maps_to_supported() {
        let doc = parse("theory t kind domain { rule r1: cancer(present) maybe if age(elderly), weight_loss(present). }")
            .unwrap();
        let t = doc.kb.theory(&TheoryId::new("t")).unwrap();
        let r = &t.rules[&RuleId::new("r1")];
        assert_eq!(r.head_sign, Sign::Supported);
        assert_eq!(r.body.len(), 2);
    }

    #[test]
    fn single_ground_fact() {
        let doc = parse("theory t kind domain { fact age(elderly). }").unwrap();
        let t = doc.kb.theory(&TheoryId::new("t")).unwrap();
        assert_eq!(t.facts.len(), 1);
        assert!(t.facts.values().all(Proposition::is_ground));
    }

    #[test]
    fn range_restriction_error_points_at_rule() {
        let errs = errors_of("theory t kind domain {\n  rule bad: p(X) supported if q(Y).\n}");
        assert_eq!(errs.len(), 1);
        assert_eq!((errs[0].line, errs[0].col), (2, 8));
        assert!(errs[0].message.contains("`bad`"));
        assert!(errs[0].message.contains("range-restricted"));
    }

    #[test]
    fn other_errors() {
        let arity = errors_of("theory t kind domain {\n fact p(a).\n fact p(a, b).\n}");
        assert_eq!(arity[0].line, 3);
        assert!(arity[0].message.contains("arity"));
        let sign = errors_of("theory t kind domain { rule r: p(a) probably. }");
        assert!(sign[0].message.contains("unknown sign keyword `probably`"));
        let dup = errors_of("theory t kind domain { }\ntheory t kind task { }");
        assert_eq!(dup[0].line, 2);
        assert!(dup[0].message.contains("duplicate theory"));
        let syntax = errors_of("theory t kind domain { fact p(a) }");
        assert!(syntax[0].message.contains("expected `.`"));
    }

    #[test]
    fn recovery_reports_several_errors() {
        let errs = errors_of(
            "theory t kind domain {\n fact p(a)\n rule r1: q(a) sometimes.\n fact ok(b).\n}\naskable z/x.\n",
        );
        let lines: Vec<usize> = errs.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![3, 6]);
    }

    #[test]
    fn empty_model_is_empty_document() {
        assert_eq!(serialize(&KnowledgeBase::new(), &[]), "");
        assert_eq!(parse("").unwrap(), Document::default());
        assert_eq!(parse("% only a comment\n").unwrap(), Document::default());
    }

    #[test]
    fn theories_print_sorted() {
        let doc = parse("theory zeta kind domain { }\ntheory alpha kind task { }").unwrap();
        let out = serialize(&doc.kb, &doc.classes);
        let a = out.find("theory alpha").unwrap();
        let z = out.find("theory zeta").unwrap();
        assert!(a < z);
        assert_eq!(out, serialize(&doc.kb, &doc.classes));
    }

    const FULL: &str = "\
observations patient.
askable age/1 functional.
askable weight_loss/1.
task diagnosis: gastro, patient.

theory gastro kind domain {
  fact f_age: age(elderly).
  rule r1: cancer(present) maybe if age(elderly), weight_loss(present).
  rule r2: cancer(present) eliminated if biopsy_clear.
}

decision diagnosis {
  prototype: abnormal(O) confirmed, not cause(C, O) confirmed;
  relevant_argument_types: causal;
  options: cancer(X);
  option_proposal: plausible;
  askable_priority: weight_loss/1;
  terminate: cancer(X) confirmed;
  commit: strongest;
}

scenario demo {
  at 1 observe abnormal(obs1).
  at 2 goal g1: cancer(X).
  at 3 answer age(elderly) with age(young).
  answer weight_loss(present) yes.
}
";

    #[test]
    fn full_document() {
        let doc = parse(FULL).unwrap();
        let class = doc.class("diagnosis").unwrap();
        assert_eq!(class.relevant_theories.len(), 2);
        assert_eq!(class.option_proposal, DisplayClass::Plausible);
        assert_eq!(class.commit_rule, CommitRule::Strongest);
        assert_eq!(class.prototype.literals.len(), 2);
        assert!(class.prototype.literals[1].negated);
        assert!(doc.kb.has_theory(&TheoryId::new("patient")));
        let sc = doc.scenario.as_ref().unwrap();
        assert_eq!(sc.events.len(), 3);
        assert_eq!(sc.answers[&Proposition::atom("weight_loss", &["present"])], Reply::Yes);
        let text = serialize_document(&doc);
        assert_eq!(parse(&text).unwrap(), doc);
        assert_eq!(serialize_document(&parse(&text).unwrap()), text);
    }

    #[test]
    fn decision_semantics_are_checked() {
        let unknown = errors_of("decision d { options: p(X); relevant_theories: nowhere; }");
        assert!(unknown[0].message.contains("unknown theory `nowhere`"));
        let outside = errors_of(
            "theory a kind domain { }\ntheory b kind domain { }\ntask d: a.\ndecision d {\n options: p(X);\n relevant_theories: a, b;\n}",
        );
        assert_eq!(outside[0].line, 6);
        let no_options = errors_of("decision d { commit: tally; }");
        assert!(no_options[0].message.contains("no options"));
        let unaskable = errors_of("scenario { answer p(a) yes. }");
        assert!(unaskable[0].message.contains("not askable"));
    }

    #[test]
    fn default_relevant_theories() {
        let doc = parse("theory a kind domain { }\ntask d: a.\ndecision d { options: p(X); }").unwrap();
        assert_eq!(doc.classes[0].relevant_theories, [TheoryId::new("a")].into());
        let doc = parse("theory a kind domain { }\ndecision d { options: p(X); }").unwrap();
        assert_eq!(
            doc.classes[0].relevant_theories,
            [TheoryId::new("a"), TheoryId::new("findings")].into()
        );
    }

    #[test]
    fn single_items() {
        assert_eq!(parse_proposition("cause(C, obs1)").unwrap(), Proposition::atom("cause", &["C", "obs1"]));
        assert!(parse_proposition("cause(C").is_err());
        assert!(parse_proposition("Cause").is_err());
        assert!(parse_proposition("p(a) q").is_err());
        let p = parse_pattern("abnormal(O), not cause(C, O) plausible").unwrap();
        assert_eq!(p.literals[1].class, DisplayClass::Plausible);
        assert_eq!(parse_pattern("true").unwrap(), Pattern::always());
    }
}
