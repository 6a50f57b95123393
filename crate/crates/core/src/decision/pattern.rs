//! Conditions over the belief store: conjunctions of positive and negated
//! literals, each requiring a belief class.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aggregate::{belief_status, AggregationMode, BeliefStatus, DisplayClass};
use crate::argument::{Argument, ArgumentEngine, ArgumentError};
use crate::kb::{apply_substitution, match_into, KnowledgeBase, Proposition, Substitution, TheoryId};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub atom: Proposition,
    pub class: DisplayClass,
    pub negated: bool,
}

impl Literal {
    pub fn positive(atom: Proposition, class: DisplayClass) -> Self {
        Literal {
            atom,
            class,
            negated: false,
        }
    }

    pub fn negative(atom: Proposition, class: DisplayClass) -> Self {
        Literal {
            atom,
            class,
            negated: true,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        write!(f, "{} {}", self.atom, self.class)
    }
}

/// A conjunction of literals. The empty pattern always holds.
///
/// Positive literals bind variables against the store. A negated literal
/// holds when no store entry matches it (after applying the bindings so far)
/// with the required class; its unbound variables are local to it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Pattern {
    pub literals: Vec<Literal>,
}

impl Pattern {
    pub fn new(literals: Vec<Literal>) -> Self {
        Pattern { literals }
    }

    pub fn always() -> Self {
        Pattern::default()
    }

    pub fn is_trivial(&self) -> bool {
        self.literals.is_empty()
    }

    /// Variables bound by positive literals.
    pub fn bound_variables(&self) -> BTreeSet<String> {
        self.literals
            .iter()
            .filter(|l| !l.negated)
            .flat_map(|l| l.atom.variables().map(String::from))
            .collect()
    }

    /// Every distinct extension of `base` that satisfies the pattern,
    /// restricted to `base`'s variables plus the positive literals'
    /// variables, in sorted order.
    pub fn matches(&self, store: &BeliefStore, base: &Substitution) -> Vec<Substitution> {
        let mut out = BTreeSet::new();
        self.match_rec(0, store, base.clone(), &mut out);
        out.into_iter().collect()
    }

    pub fn holds(&self, store: &BeliefStore, base: &Substitution) -> bool {
        !self.matches(store, base).is_empty()
    }

    fn match_rec(&self, i: usize, store: &BeliefStore, theta: Substitution, out: &mut BTreeSet<Substitution>) {
        let Some(lit) = self.literals.get(i) else {
            out.insert(theta);
            return;
        };
        let atom = apply_substitution(&lit.atom, &theta);
        if lit.negated {
            let blocked = store
                .entries
                .iter()
                .any(|(p, e)| e.status.satisfies(lit.class) && crate::kb::unify(&atom, p).is_some());
            if !blocked {
                self.match_rec(i + 1, store, theta, out);
            }
            return;
        }
        for (p, e) in &store.entries {
            if !e.status.satisfies(lit.class) {
                continue;
            }
            let mut extended = theta.clone();
            if match_into(&atom, p, &mut extended) {
                self.match_rec(i + 1, store, extended, out);
            }
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.literals.is_empty() {
            return f.write_str("true");
        }
        for (i, l) in self.literals.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefEntry {
    pub status: BeliefStatus,
    pub arguments: Vec<Argument>,
}

/// The finite set of propositions that have at least one argument, with
/// their aggregated statuses.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BeliefStore {
    pub entries: BTreeMap<Proposition, BeliefEntry>,
}

impl BeliefStore {
    /// Builds the store from every argument derivable from `theories`.
    pub fn compute(
        kb: &KnowledgeBase,
        theories: &BTreeSet<TheoryId>,
        mode: AggregationMode,
    ) -> Result<BeliefStore, ArgumentError> {
        let engine = ArgumentEngine::new(kb, theories)?;
        Ok(BeliefStore::from_arguments(engine.all_arguments(), mode))
    }

    pub fn from_arguments(args: Vec<Argument>, mode: AggregationMode) -> BeliefStore {
        let mut grouped: BTreeMap<Proposition, Vec<Argument>> = BTreeMap::new();
        for a in args {
            grouped.entry(a.proposition.clone()).or_default().push(a);
        }
        let entries = grouped
            .into_iter()
            .map(|(p, arguments)| {
                let status = belief_status(&p, &arguments, mode).expect("grouped by proposition");
                (p, BeliefEntry { status, arguments })
            })
            .collect();
        BeliefStore { entries }
    }

    pub fn status(&self, p: &Proposition) -> Option<&BeliefStatus> {
        self.entries.get(p).map(|e| &e.status)
    }

    /// A copy in which `p` additionally holds a categorical confirmation.
    pub fn with_confirmed(&self, p: &Proposition, mode: AggregationMode) -> BeliefStore {
        use crate::argument::Grounds;
        use crate::kb::Sign;
        let mut store = self.clone();
        let mut arguments = store.entries.get(p).map(|e| e.arguments.clone()).unwrap_or_default();
        arguments.push(Argument {
            proposition: p.clone(),
            sign: Sign::Confirmed,
            grounds: Grounds::default(),
        });
        let status = belief_status(p, &arguments, mode).expect("same proposition");
        store.entries.insert(p.clone(), BeliefEntry { status, arguments });
        store
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
