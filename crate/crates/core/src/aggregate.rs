//! Aggregation of the distinct arguments about a proposition.
//!
//! Two operators live here: the symbolic belief classes (conceivable,
//! possible, plausible, confirmed, plus the eliminated flag) and the linear
//! pros-versus-cons ranking of options. A numeric hook folds signs through a
//! caller-supplied dictionary for experiments with quantitative qualifiers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::argument::Argument;
use crate::kb::{Proposition, Sign};

/// A belief class derived from an argument set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefClass {
    Conceivable,
    Possible,
    Plausible,
    Confirmed,
}

impl BeliefClass {
    pub const ALL: [BeliefClass; 4] = [
        BeliefClass::Conceivable,
        BeliefClass::Possible,
        BeliefClass::Plausible,
        BeliefClass::Confirmed,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            BeliefClass::Conceivable => "conceivable",
            BeliefClass::Possible => "possible",
            BeliefClass::Plausible => "plausible",
            BeliefClass::Confirmed => "confirmed",
        }
    }
}

/// What a status displays as. Ordered weakest first, so `eliminated` sorts
/// below everything and `confirmed` above everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplayClass {
    Eliminated,
    Conceivable,
    Possible,
    Plausible,
    Confirmed,
}

impl DisplayClass {
    pub fn keyword(self) -> &'static str {
        match self {
            DisplayClass::Eliminated => "eliminated",
            DisplayClass::Conceivable => "conceivable",
            DisplayClass::Possible => "possible",
            DisplayClass::Plausible => "plausible",
            DisplayClass::Confirmed => "confirmed",
        }
    }

    pub fn from_keyword(word: &str) -> Option<DisplayClass> {
        match word {
            "eliminated" => Some(DisplayClass::Eliminated),
            "conceivable" => Some(DisplayClass::Conceivable),
            "possible" | "possibility" => Some(DisplayClass::Possible),
            "plausible" => Some(DisplayClass::Plausible),
            "confirmed" => Some(DisplayClass::Confirmed),
            _ => None,
        }
    }
}

impl From<BeliefClass> for DisplayClass {
    fn from(c: BeliefClass) -> Self {
        match c {
            BeliefClass::Conceivable => DisplayClass::Conceivable,
            BeliefClass::Possible => DisplayClass::Possible,
            BeliefClass::Plausible => DisplayClass::Plausible,
            BeliefClass::Confirmed => DisplayClass::Confirmed,
        }
    }
}

impl fmt::Display for DisplayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Aggregated status of one proposition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeliefStatus {
    pub classes: BTreeSet<BeliefClass>,
    pub eliminated: bool,
    pub display: DisplayClass,
}

impl BeliefStatus {
    pub fn holds(&self, class: BeliefClass) -> bool {
        self.classes.contains(&class)
    }

    /// Whether the status satisfies a pattern requirement: membership for the
    /// four classes, the flag for `eliminated`.
    pub fn satisfies(&self, required: DisplayClass) -> bool {
        match required {
            DisplayClass::Eliminated => self.eliminated,
            DisplayClass::Conceivable => self.holds(BeliefClass::Conceivable),
            DisplayClass::Possible => self.holds(BeliefClass::Possible),
            DisplayClass::Plausible => self.holds(BeliefClass::Plausible),
            DisplayClass::Confirmed => self.holds(BeliefClass::Confirmed),
        }
    }
}

/// Whether categorical signs also count as their tentative counterparts when
/// the existential conditions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// `confirmed` satisfies "exists supported"; `eliminated` satisfies
    /// "exists opposed".
    #[default]
    Subsumption,
    /// Each existential only sees its own sign.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("argument for `{found}` passed while aggregating `{expected}`")]
    WrongProposition { expected: String, found: String },
}

/// Assigns `p` to belief classes from its arguments.
///
/// ```text
/// conceivable <- not exists eliminated
/// possible    <- conceivable and exists supported
/// plausible   <- possible and not exists opposed
/// confirmed   <- conceivable and exists confirmed
/// ```
pub fn belief_status(p: &Proposition, args: &[Argument], mode: AggregationMode) -> Result<BeliefStatus, AggregateError> {
    if let Some(stray) = args.iter().find(|a| &a.proposition != p) {
        return Err(AggregateError::WrongProposition {
            expected: p.to_string(),
            found: stray.proposition.to_string(),
        });
    }
    Ok(status_from_signs(args.iter().map(|a| a.sign), mode))
}

/// The same evaluation over bare signs.
pub fn status_from_signs(signs: impl IntoIterator<Item = Sign>, mode: AggregationMode) -> BeliefStatus {
    let present: BTreeSet<Sign> = signs.into_iter().collect();
    let subsume = mode == AggregationMode::Subsumption;
    let any = |s: Sign| present.contains(&s);
    let eliminated = any(Sign::Eliminated);
    let supported = any(Sign::Supported) || (subsume && any(Sign::Confirmed));
    let opposed = any(Sign::Opposed) || (subsume && any(Sign::Eliminated));

    let conceivable = !eliminated;
    let possible = conceivable && supported;
    let plausible = possible && !opposed;
    let confirmed = conceivable && any(Sign::Confirmed);

    let mut classes = BTreeSet::new();
    for (holds, class) in [
        (conceivable, BeliefClass::Conceivable),
        (possible, BeliefClass::Possible),
        (plausible, BeliefClass::Plausible),
        (confirmed, BeliefClass::Confirmed),
    ] {
        if holds {
            classes.insert(class);
        }
    }
    let display = if eliminated {
        DisplayClass::Eliminated
    } else {
        classes.iter().next_back().map(|c| DisplayClass::from(*c)).unwrap_or(DisplayClass::Conceivable)
    };
    BeliefStatus {
        classes,
        eliminated,
        display,
    }
}

/// Pros over cons with the edge cases fixed: no pros is the bottom ratio and
/// no cons (with at least one pro) is the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Ratio {
    Zero,
    Finite { pros: usize, cons: usize },
    Infinite,
}

impl Ratio {
    pub fn of(pros: usize, cons: usize) -> Ratio {
        match (pros, cons) {
            (0, _) => Ratio::Zero,
            (_, 0) => Ratio::Infinite,
            (p, c) => Ratio::Finite { pros: p, cons: c },
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Ratio::Zero => 0.0,
            Ratio::Finite { pros, cons } => pros as f64 / cons as f64,
            Ratio::Infinite => f64::INFINITY,
        }
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        use Ratio::*;
        match (self, other) {
            (Zero, Zero) | (Infinite, Infinite) => Ordering::Equal,
            (Zero, _) | (_, Infinite) => Ordering::Less,
            (_, Zero) | (Infinite, _) => Ordering::Greater,
            (Finite { pros: a, cons: b }, Finite { pros: c, cons: d }) => (a * d).cmp(&(c * b)),
        }
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Zero => f.write_str("0"),
            Ratio::Finite { pros, cons } => write!(f, "{pros}/{cons}"),
            Ratio::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyEntry {
    pub option: Proposition,
    pub pros: usize,
    pub cons: usize,
    pub ratio: Ratio,
}

impl TallyEntry {
    fn key(&self) -> (Ratio, usize) {
        (self.ratio, self.pros)
    }
}

/// Options ranked by (ratio, pros), best first. Options with identical keys
/// share a group; nothing breaks those ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyRanking {
    pub entries: Vec<TallyEntry>,
    pub ranking: Vec<Vec<Proposition>>,
}

impl TallyRanking {
    /// The unique best option, if the top group has exactly one member.
    pub fn winner(&self) -> Option<&Proposition> {
        match self.ranking.first() {
            Some(group) if group.len() == 1 => group.first(),
            _ => None,
        }
    }

    pub fn top_group(&self) -> &[Proposition] {
        self.ranking.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_tied_at_top(&self) -> bool {
        self.top_group().len() > 1
    }

    pub fn entry(&self, option: &Proposition) -> Option<&TallyEntry> {
        self.entries.iter().find(|e| &e.option == option)
    }
}

/// Counts distinct pro and con arguments per option and ranks the options.
pub fn tally_rank(options: &[(Proposition, Vec<Argument>)]) -> TallyRanking {
    let mut per_option: BTreeMap<&Proposition, BTreeSet<&Argument>> = BTreeMap::new();
    for (option, args) in options {
        per_option.entry(option).or_default().extend(args.iter());
    }
    let mut entries: Vec<TallyEntry> = per_option
        .into_iter()
        .map(|(option, args)| {
            let pros = args.iter().filter(|a| a.sign.is_pro()).count();
            let cons = args.len() - pros;
            TallyEntry {
                option: option.clone(),
                pros,
                cons,
                ratio: Ratio::of(pros, cons),
            }
        })
        .collect();
    entries.sort_by(|a, b| b.key().cmp(&a.key()).then_with(|| a.option.cmp(&b.option)));

    let mut ranking: Vec<Vec<Proposition>> = Vec::new();
    let mut last_key = None;
    for e in &entries {
        if last_key == Some(e.key()) {
            ranking.last_mut().expect("group opened").push(e.option.clone());
        } else {
            ranking.push(vec![e.option.clone()]);
            last_key = Some(e.key());
        }
    }
    TallyRanking { entries, ranking }
}

/// A number per sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignDictionary {
    pub confirmed: f64,
    pub eliminated: f64,
    pub supported: f64,
    pub opposed: f64,
}

impl SignDictionary {
    /// +1 for every pro sign, -1 for every con sign.
    pub const POLARITY: SignDictionary = SignDictionary {
        confirmed: 1.0,
        eliminated: -1.0,
        supported: 1.0,
        opposed: -1.0,
    };

    pub fn uniform(value: f64) -> Self {
        SignDictionary {
            confirmed: value,
            eliminated: value,
            supported: value,
            opposed: value,
        }
    }

    pub fn value(&self, sign: Sign) -> f64 {
        match sign {
            Sign::Confirmed => self.confirmed,
            Sign::Eliminated => self.eliminated,
            Sign::Supported => self.supported,
            Sign::Opposed => self.opposed,
        }
    }
}

/// An associative, commutative operation with an identity.
pub trait Combiner {
    fn identity(&self) -> f64;
    fn combine(&self, acc: f64, value: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sum;

impl Combiner for Sum {
    fn identity(&self) -> f64 {
        0.0
    }
    fn combine(&self, acc: f64, value: f64) -> f64 {
        acc + value
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Product;

impl Combiner for Product {
    fn identity(&self) -> f64 {
        1.0
    }
    fn combine(&self, acc: f64, value: f64) -> f64 {
        acc * value
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Max;

impl Combiner for Max {
    fn identity(&self) -> f64 {
        f64::NEG_INFINITY
    }
    fn combine(&self, acc: f64, value: f64) -> f64 {
        acc.max(value)
    }
}

/// Folds `combiner` over the dictionary values of the distinct arguments'
/// signs. Values are folded in sorted order so floating-point results do
/// not depend on argument order.
pub fn aggregate_numeric(args: &[Argument], dictionary: &SignDictionary, combiner: &impl Combiner) -> f64 {
    let distinct: BTreeSet<&Argument> = args.iter().collect();
    let mut values: Vec<f64> = distinct.iter().map(|a| dictionary.value(a.sign)).collect();
    values.sort_by(f64::total_cmp);
    values
        .into_iter()
        .fold(combiner.identity(), |acc, v| combiner.combine(acc, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::argument::Grounds;
    use crate::kb::FactId;
    use proptest::prelude::*;

    fn p() -> Proposition {
        Proposition::atom("cancer", &["present"])
    }

    fn arg(option: &Proposition, sign: Sign, id: &str) -> Argument {
        let mut grounds = Grounds::default();
        grounds.facts.insert(FactId::new(id));
        Argument {
            proposition: option.clone(),
            sign,
            grounds,
        }
    }

    fn classes(list: &[BeliefClass]) -> BTreeSet<BeliefClass> {
        list.iter().copied().collect()
    }

    #[test]
    fn supported_only_is_plausible() {
        let s = belief_status(&p(), &[arg(&p(), Sign::Supported, "g1")], AggregationMode::Subsumption).unwrap();
        assert_eq!(
            s.classes,
            classes(&[BeliefClass::Conceivable, BeliefClass::Possible, BeliefClass::Plausible])
        );
        assert_eq!(s.display, DisplayClass::Plausible);
    }

    #[test]
    fn empty_is_conceivable() {
        let s = belief_status(&p(), &[], AggregationMode::Subsumption).unwrap();
        assert_eq!(s.classes, classes(&[BeliefClass::Conceivable]));
        assert_eq!(s.display, DisplayClass::Conceivable);
        assert!(!s.eliminated);
    }

    #[test]
    fn elimination_dominates() {
        let args = [arg(&p(), Sign::Eliminated, "g1"), arg(&p(), Sign::Supported, "g2")];
        let s = belief_status(&p(), &args, AggregationMode::Subsumption).unwrap();
        assert!(s.classes.is_empty());
        assert!(s.eliminated);
        assert_eq!(s.display, DisplayClass::Eliminated);
    }

    #[test]
    fn confirmed_and_opposed() {
        let args = [arg(&p(), Sign::Confirmed, "g1"), arg(&p(), Sign::Opposed, "g2")];
        let s = belief_status(&p(), &args, AggregationMode::Subsumption).unwrap();
        assert_eq!(
            s.classes,
            classes(&[BeliefClass::Conceivable, BeliefClass::Possible, BeliefClass::Confirmed])
        );
        assert_eq!(s.display, DisplayClass::Confirmed);
    }

    #[test]
    fn strict_mode_confirmed_only_is_not_possible() {
        let s = belief_status(&p(), &[arg(&p(), Sign::Confirmed, "g1")], AggregationMode::Strict).unwrap();
        assert_eq!(s.classes, classes(&[BeliefClass::Conceivable, BeliefClass::Confirmed]));
        let s = belief_status(&p(), &[arg(&p(), Sign::Confirmed, "g1")], AggregationMode::Subsumption).unwrap();
        assert!(s.holds(BeliefClass::Possible) && s.holds(BeliefClass::Plausible));
    }

    #[test]
    fn wrong_proposition_is_rejected() {
        let other = Proposition::atom("ulcer", &["present"]);
        assert!(matches!(
            belief_status(&p(), &[arg(&other, Sign::Supported, "g")], AggregationMode::Subsumption),
            Err(AggregateError::WrongProposition { .. })
        ));
    }

    fn option_args(name: &str, pros: usize, cons: usize) -> (Proposition, Vec<Argument>) {
        let o = Proposition::atom(name, &[]);
        let mut args = Vec::new();
        for i in 0..pros {
            args.push(arg(&o, Sign::Supported, &format!("p{i}")));
        }
        for i in 0..cons {
            args.push(arg(&o, Sign::Opposed, &format!("c{i}")));
        }
        (o, args)
    }

    fn names(r: &TallyRanking) -> Vec<Vec<String>> {
        r.ranking.iter().map(|g| g.iter().map(|o| o.predicate.clone()).collect()).collect()
    }

    #[test]
    fn no_cons_beats_any_finite_ratio() {
        let r = tally_rank(&[option_args("a", 3, 1), option_args("b", 2, 0)]);
        assert_eq!(names(&r), vec![vec!["b"], vec!["a"]]);
    }

    #[test]
    fn equal_ratio_ordered_by_pros() {
        let r = tally_rank(&[option_args("a", 2, 1), option_args("b", 4, 2)]);
        assert_eq!(names(&r), vec![vec!["b"], vec!["a"]]);
        assert_eq!(r.entries[0].ratio.cmp(&r.entries[1].ratio), Ordering::Equal);
    }

    #[test]
    fn zero_evidence_ranks_last() {
        let r = tally_rank(&[option_args("a", 0, 0), option_args("b", 1, 5)]);
        assert_eq!(names(&r), vec![vec!["b"], vec!["a"]]);
        assert_eq!(r.entries[1].ratio, Ratio::Zero);
    }

    #[test]
    fn exact_ties_are_grouped() {
        let r = tally_rank(&[option_args("a", 2, 1), option_args("b", 2, 1), option_args("c", 1, 1)]);
        assert_eq!(names(&r), vec![vec!["a", "b"], vec!["c"]]);
        assert!(r.is_tied_at_top());
        assert_eq!(r.winner(), None);
    }

    #[test]
    fn duplicate_arguments_count_once() {
        let (o, mut args) = option_args("a", 1, 0);
        args.push(args[0].clone());
        let r = tally_rank(&[(o, args)]);
        assert_eq!(r.entries[0].pros, 1);
    }

    #[test]
    fn numeric_hook_examples() {
        let o = p();
        let args = [arg(&o, Sign::Supported, "a"), arg(&o, Sign::Opposed, "b")];
        assert_eq!(aggregate_numeric(&args, &SignDictionary::POLARITY, &Sum), 0.0);
        assert_eq!(aggregate_numeric(&[], &SignDictionary::POLARITY, &Sum), 0.0);
        let three = [
            arg(&o, Sign::Supported, "a"),
            arg(&o, Sign::Opposed, "b"),
            arg(&o, Sign::Confirmed, "c"),
        ];
        assert_eq!(aggregate_numeric(&three, &SignDictionary::uniform(1.0), &Sum), 3.0);
        assert_eq!(aggregate_numeric(&three, &SignDictionary::POLARITY, &Max), 1.0);
    }

    fn sign() -> impl Strategy<Value = Sign> {
        prop_oneof![
            Just(Sign::Confirmed),
            Just(Sign::Eliminated),
            Just(Sign::Supported),
            Just(Sign::Opposed)
        ]
    }

    proptest! {
        #[test]
        fn implication_chain_holds(signs in proptest::collection::vec(sign(), 0..8), strict in any::<bool>()) {
            let mode = if strict { AggregationMode::Strict } else { AggregationMode::Subsumption };
            let s = status_from_signs(signs, mode);
            if s.holds(BeliefClass::Plausible) { prop_assert!(s.holds(BeliefClass::Possible)); }
            if s.holds(BeliefClass::Possible) { prop_assert!(s.holds(BeliefClass::Conceivable)); }
            if s.holds(BeliefClass::Confirmed) { prop_assert!(s.holds(BeliefClass::Conceivable)); }
            if s.eliminated { prop_assert!(s.classes.is_empty()); }
        }

        #[test]
        fn adding_elimination_empties_classes(signs in proptest::collection::vec(sign(), 0..8)) {
            let mut signs = signs;
            signs.push(Sign::Eliminated);
            let s = status_from_signs(signs, AggregationMode::Subsumption);
            prop_assert!(s.classes.is_empty());
            prop_assert_eq!(s.display, DisplayClass::Eliminated);
        }

        #[test]
        fn tally_is_permutation_invariant(
            counts in proptest::collection::vec((0usize..4, 0usize..4), 1..6),
            seed in any::<u64>(),
        ) {
            let options: Vec<_> = counts
                .iter()
                .enumerate()
                .map(|(i, (p, c))| option_args(&format!("o{i}"), *p, *c))
                .collect();
            let base = tally_rank(&options);

            let mut shuffled = options.clone();
            // Deterministic permutation of options and of each argument list.
            let n = shuffled.len();
            shuffled.rotate_left((seed as usize) % n);
            for (_, args) in shuffled.iter_mut() {
                args.reverse();
            }
            prop_assert_eq!(&tally_rank(&shuffled), &base);

            // Fresh grounds never change the ranking.
            let renamed: Vec<_> = options
                .iter()
                .map(|(o, args)| {
                    let args = args
                        .iter()
                        .enumerate()
                        .map(|(j, a)| arg(o, a.sign, &format!("fresh{seed}_{j}")))
                        .collect();
                    (o.clone(), args)
                })
                .collect();
            prop_assert_eq!(tally_rank(&renamed).ranking, base.ranking);
        }

        #[test]
        fn numeric_hook_is_order_independent(signs in proptest::collection::vec(sign(), 0..8)) {
            let o = p();
            let args: Vec<_> = signs.iter().enumerate().map(|(i, s)| arg(&o, *s, &format!("g{i}"))).collect();
            let mut rev = args.clone();
            rev.reverse();
            let dict = SignDictionary { confirmed: 0.9, eliminated: -0.9, supported: 0.3, opposed: -0.1 };
            prop_assert_eq!(aggregate_numeric(&args, &dict, &Sum), aggregate_numeric(&rev, &dict, &Sum));
        }
    }
}
