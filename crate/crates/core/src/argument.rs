//! Argument construction over a knowledge base restricted to active theories.
//!
//! An argument is a triple of a ground proposition, a [`Sign`] and the
//! [`Grounds`] it rests on. Construction is backward chaining from a goal
//! pattern. A ground subgoal that already sits on the current goal stack fails
//! its branch, so every derivation is acyclic and search always terminates on
//! function-free knowledge bases.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{
    apply_substitution, match_into, FactId, KnowledgeBase, Proposition, Rule, RuleId, Sign, Substitution, TheoryId,
};

/// The facts, rules and theories a single derivation used.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Grounds {
    pub facts: BTreeSet<FactId>,
    pub rules: BTreeSet<RuleId>,
    pub theories: BTreeSet<TheoryId>,
}

impl Grounds {
    fn of_fact(id: &FactId, theory: &TheoryId) -> Grounds {
        Grounds {
            facts: BTreeSet::from([id.clone()]),
            rules: BTreeSet::new(),
            theories: BTreeSet::from([theory.clone()]),
        }
    }

    fn merge(&mut self, other: &Grounds) {
        self.facts.extend(other.facts.iter().cloned());
        self.rules.extend(other.rules.iter().cloned());
        self.theories.extend(other.theories.iter().cloned());
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty() && self.rules.is_empty()
    }

    /// All fact and rule ids, facts first.
    pub fn ids(&self) -> Vec<String> {
        self.facts
            .iter()
            .map(|f| f.0.clone())
            .chain(self.rules.iter().map(|r| r.0.clone()))
            .collect()
    }
}

impl fmt::Display for Grounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |items: Vec<&str>| items.join(", ");
        write!(
            f,
            "facts {{{}}} rules {{{}}} theories {{{}}}",
            join(self.facts.iter().map(|x| x.as_str()).collect()),
            join(self.rules.iter().map(|x| x.as_str()).collect()),
            join(self.theories.iter().map(|x| x.as_str()).collect()),
        )
    }
}

/// `(P, S, G)`: a proposition, its qualifier and its grounds.
///
/// Two arguments for the same proposition are distinct exactly when their
/// signs or grounds differ, which is what the derived equality gives.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Argument {
    pub proposition: Proposition,
    pub sign: Sign,
    pub grounds: Grounds,
}

impl fmt::Display for Argument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.proposition, self.sign, self.grounds)
    }
}

/// One node of a derivation: leaves cite facts, inner nodes cite rules whose
/// instantiated bodies equal the children's goals in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationNode {
    pub goal: Proposition,
    pub via: Via,
    pub children: Vec<DerivationNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Via {
    Fact(FactId),
    Rule(RuleId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArgumentError {
    #[error("unknown theory `{0}`")]
    UnknownTheory(String),
    #[error("body literal established by a con-signed argument ({0})")]
    ConBodySign(Sign),
}

/// Sign of a rule conclusion given the signs of the arguments for its body.
///
/// A categorical head is weakened to the tentative sign of the same polarity
/// as soon as one premise is only supported. Tentative heads pass through.
pub fn chain_sign(head_sign: Sign, body_signs: &[Sign]) -> Result<Sign, ArgumentError> {
    if let Some(&bad) = body_signs.iter().find(|s| s.is_con()) {
        return Err(ArgumentError::ConBodySign(bad));
    }
    if head_sign.is_categorical() && body_signs.contains(&Sign::Supported) {
        Ok(head_sign.weakened())
    } else {
        Ok(head_sign)
    }
}

/// Every distinct argument for ground instances of `goal` derivable from the
/// `active` theories, sorted by proposition, sign and grounds.
pub fn construct_arguments(
    kb: &KnowledgeBase,
    active: &BTreeSet<TheoryId>,
    goal: &Proposition,
) -> Result<Vec<Argument>, ArgumentError> {
    Ok(ArgumentEngine::new(kb, active)?.arguments(goal))
}

/// Every argument for every proposition derivable from the active theories.
pub fn all_arguments(kb: &KnowledgeBase, active: &BTreeSet<TheoryId>) -> Result<Vec<Argument>, ArgumentError> {
    Ok(ArgumentEngine::new(kb, active)?.all_arguments())
}

/// Argument construction bound to one knowledge base and set of active
/// theories. Building it precomputes the set of atoms with at least one
/// pro-signed derivation, which bounds every later search.
pub struct ArgumentEngine<'kb> {
    facts: Vec<(&'kb FactId, &'kb TheoryId, &'kb Proposition)>,
    rules: Vec<(&'kb Rule, &'kb TheoryId)>,
    pro: AtomIndex,
    con_heads: AtomIndex,
    /// Strongly connected component of each atom in the ground dependency
    /// graph (head to body atom).
    component: HashMap<Proposition, usize>,
    ids: IdSpace<'kb>,
    facts_by_atom: HashMap<&'kb Proposition, Vec<usize>>,
    rules_by_predicate: HashMap<&'kb str, Vec<usize>>,
}

/// Grounds as a bit set over the engine's facts, rules and theories.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn union(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a | b).collect())
    }

    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(w, word)| (0..64).filter(move |b| word & (1 << b) != 0).map(move |b| w * 64 + b))
    }
}

/// Bit positions: facts first, then rules, then theories.
struct IdSpace<'kb> {
    n_facts: usize,
    n_rules: usize,
    theories: Vec<&'kb TheoryId>,
    fact_theory: Vec<usize>,
    rule_theory: Vec<usize>,
}

impl IdSpace<'_> {
    fn empty(&self) -> Bits {
        Bits(vec![0; (self.n_facts + self.n_rules + self.theories.len()).div_ceil(64)])
    }

    fn rule(&self, j: usize) -> usize {
        self.n_facts + j
    }
}

type Alternatives = Rc<BTreeSet<(Sign, Bits)>>;

/// Results of `solve` keyed by the atom and the goal stack atoms in its
/// component. Stack atoms outside the component are unreachable from the
/// atom, so they cannot affect its result.
type Memo = HashMap<(Proposition, Vec<Proposition>), Alternatives>;

#[derive(Default)]
struct AtomIndex {
    by_predicate: HashMap<String, BTreeSet<Proposition>>,
}

impl AtomIndex {
    fn insert(&mut self, p: Proposition) -> bool {
        self.by_predicate.entry(p.predicate.clone()).or_default().insert(p)
    }

    fn contains(&self, p: &Proposition) -> bool {
        self.by_predicate.get(&p.predicate).is_some_and(|s| s.contains(p))
    }

    fn matching<'a>(&'a self, pattern: &'a Proposition) -> impl Iterator<Item = &'a Proposition> + 'a {
        self.by_predicate
            .get(&pattern.predicate)
            .into_iter()
            .flatten()
            .filter(move |g| g.arity() == pattern.arity() && crate::kb::unify(pattern, g).is_some())
    }

    fn all(&self) -> impl Iterator<Item = &Proposition> {
        self.by_predicate.values().flatten()
    }
}

impl<'kb> ArgumentEngine<'kb> {
    pub fn new(kb: &'kb KnowledgeBase, active: &BTreeSet<TheoryId>) -> Result<Self, ArgumentError> {
        if let Some(missing) = active.iter().find(|t| !kb.has_theory(t)) {
            return Err(ArgumentError::UnknownTheory(missing.0.clone()));
        }
        let facts: Vec<_> = kb
            .theories()
            .filter(|t| active.contains(&t.id))
            .flat_map(|t| t.facts.iter().map(move |(id, p)| (id, &t.id, p)))
            .collect();
        let rules: Vec<_> = kb
            .theories()
            .filter(|t| active.contains(&t.id))
            .flat_map(|t| t.rules.values().map(move |r| (r, &t.id)))
            .collect();

        let mut pro = AtomIndex::default();
        for (_, _, p) in &facts {
            pro.insert((*p).clone());
        }
        loop {
            let mut fresh = Vec::new();
            for (rule, _) in rules.iter().filter(|(r, _)| r.head_sign.is_pro()) {
                for theta in join_body(&rule.body, Substitution::new(), &pro, &[]) {
                    let head = apply_substitution(&rule.head, &theta);
                    if !pro.contains(&head) {
                        fresh.push(head);
                    }
                }
            }
            let mut changed = false;
            for p in fresh {
                changed |= pro.insert(p);
            }
            if !changed {
                break;
            }
        }
        let mut con_heads = AtomIndex::default();
        let mut edges: HashMap<Proposition, BTreeSet<Proposition>> = HashMap::new();
        for (rule, _) in &rules {
            for theta in join_body(&rule.body, Substitution::new(), &pro, &[]) {
                let head = apply_substitution(&rule.head, &theta);
                let deps = edges.entry(head.clone()).or_default();
                deps.extend(rule.body.iter().map(|b| apply_substitution(b, &theta)));
                if rule.head_sign.is_con() {
                    con_heads.insert(head);
                }
            }
        }
        let component = strongly_connected(&edges);
        let theories: Vec<&TheoryId> = facts
            .iter()
            .map(|f| f.1)
            .chain(rules.iter().map(|r| r.1))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let offset = facts.len() + rules.len();
        let theory_bit = |t: &TheoryId| offset + theories.iter().position(|x| *x == t).expect("collected above");
        let ids = IdSpace {
            n_facts: facts.len(),
            n_rules: rules.len(),
            fact_theory: facts.iter().map(|f| theory_bit(f.1)).collect(),
            rule_theory: rules.iter().map(|r| theory_bit(r.1)).collect(),
            theories,
        };
        let mut facts_by_atom: HashMap<&Proposition, Vec<usize>> = HashMap::new();
        for (i, (_, _, p)) in facts.iter().enumerate() {
            facts_by_atom.entry(*p).or_default().push(i);
        }
        let mut rules_by_predicate: HashMap<&str, Vec<usize>> = HashMap::new();
        for (j, (r, _)) in rules.iter().enumerate() {
            rules_by_predicate.entry(r.head.predicate.as_str()).or_default().push(j);
        }
        Ok(ArgumentEngine {
            facts,
            rules,
            pro,
            con_heads,
            component,
            ids,
            facts_by_atom,
            rules_by_predicate,
        })
    }

    /// Ground atoms with at least one pro-signed argument.
    pub fn derivable(&self) -> impl Iterator<Item = &Proposition> {
        self.pro.all()
    }

    pub fn is_derivable(&self, p: &Proposition) -> bool {
        self.pro.contains(p)
    }

    /// Derivable atoms matching a pattern.
    pub fn derivable_matching<'a>(&'a self, pattern: &'a Proposition) -> impl Iterator<Item = &'a Proposition> + 'a {
        self.pro.matching(pattern)
    }

    pub fn arguments(&self, goal: &Proposition) -> Vec<Argument> {
        let candidates: BTreeSet<&Proposition> = self
            .pro
            .matching(goal)
            .chain(self.con_heads.matching(goal))
            .collect();
        self.arguments_for(candidates)
    }

    pub fn all_arguments(&self) -> Vec<Argument> {
        let candidates: BTreeSet<&Proposition> = self.pro.all().chain(self.con_heads.all()).collect();
        self.arguments_for(candidates)
    }

    fn arguments_for(&self, candidates: BTreeSet<&Proposition>) -> Vec<Argument> {
        let mut out = Vec::new();
        let mut memo = Memo::new();
        for atom in candidates {
            let mut stack = Vec::new();
            for (sign, bits) in self.solve(atom, &mut stack, &mut memo).iter() {
                out.push(Argument {
                    proposition: atom.clone(),
                    sign: *sign,
                    grounds: self.grounds(bits),
                });
            }
        }
        out.sort();
        out
    }

    /// Distinct (sign, grounds) pairs for a ground atom under the current
    /// goal stack.
    fn solve(&self, atom: &Proposition, stack: &mut Vec<Proposition>, memo: &mut Memo) -> Alternatives {
        if stack.contains(atom) {
            return Rc::default();
        }
        let own = self.component.get(atom);
        let mut context: Vec<Proposition> = stack
            .iter()
            .filter(|s| own.is_some() && self.component.get(*s) == own)
            .cloned()
            .collect();
        context.sort();
        let key = (atom.clone(), context);
        if let Some(hit) = memo.get(&key) {
            return hit.clone();
        }
        let mut results = BTreeSet::new();
        stack.push(atom.clone());
        for &i in self.facts_by_atom.get(atom).into_iter().flatten() {
            let mut bits = self.ids.empty();
            bits.set(i);
            bits.set(self.ids.fact_theory[i]);
            results.insert((Sign::Confirmed, bits));
        }
        for &j in self.rules_by_predicate.get(atom.predicate.as_str()).into_iter().flatten() {
            let rule = self.rules[j].0;
            let mut theta = Substitution::new();
            if !match_into(&rule.head, atom, &mut theta) {
                continue;
            }
            for theta in join_body(&rule.body, theta, &self.pro, stack) {
                // Pro-signed alternatives for each body atom.
                let mut per_literal = Vec::with_capacity(rule.body.len());
                for b in &rule.body {
                    let b = apply_substitution(b, &theta);
                    let alts: Vec<(bool, Bits)> = self
                        .solve(&b, stack, memo)
                        .iter()
                        .filter(|(s, _)| s.is_pro())
                        .map(|(s, g)| (*s == Sign::Supported, g.clone()))
                        .collect();
                    if alts.is_empty() {
                        break;
                    }
                    per_literal.push(alts);
                }
                if per_literal.len() != rule.body.len() {
                    continue;
                }
                let mut base = self.ids.empty();
                base.set(self.ids.rule(j));
                base.set(self.ids.rule_theory[j]);
                let mut partial: HashSet<(bool, Bits)> = HashSet::from([(false, base)]);
                for alts in &per_literal {
                    let mut next = HashSet::with_capacity((partial.len() * alts.len()).min(1 << 12));
                    for (weak, grounds) in &partial {
                        for (w, g) in alts {
                            next.insert((*weak || *w, grounds.union(g)));
                        }
                    }
                    partial = next;
                }
                for (weak, grounds) in partial {
                    let sign = if weak && rule.head_sign.is_categorical() {
                        rule.head_sign.weakened()
                    } else {
                        rule.head_sign
                    };
                    results.insert((sign, grounds));
                }
            }
        }
        stack.pop();
        let results = Rc::new(results);
        memo.insert(key, results.clone());
        results
    }

    fn grounds(&self, bits: &Bits) -> Grounds {
        let mut g = Grounds::default();
        for i in bits.ones() {
            if i < self.ids.n_facts {
                g.facts.insert(self.facts[i].0.clone());
            } else if i < self.ids.n_facts + self.ids.n_rules {
                g.rules.insert(self.rules[i - self.ids.n_facts].0.id.clone());
            } else {
                g.theories.insert(self.ids.theories[i - self.ids.n_facts - self.ids.n_rules].clone());
            }
        }
        g
    }

    /// One derivation tree behind an argument, if the argument's grounds
    /// admit one for its proposition and sign.
    pub fn derivation(&self, argument: &Argument) -> Option<DerivationNode> {
        let mut stack = Vec::new();
        self.derive_within(&argument.proposition, argument.sign, &argument.grounds, &mut stack)
            .into_iter()
            .find(|(g, _)| *g == argument.grounds)
            .map(|(_, node)| node)
    }

    fn derive_within(
        &self,
        atom: &Proposition,
        sign: Sign,
        allowed: &Grounds,
        stack: &mut Vec<Proposition>,
    ) -> Vec<(Grounds, DerivationNode)> {
        let mut out = Vec::new();
        if stack.contains(atom) {
            return out;
        }
        stack.push(atom.clone());
        if sign == Sign::Confirmed {
            for (id, theory, p) in &self.facts {
                if *p == atom && allowed.facts.contains(*id) {
                    out.push((
                        Grounds::of_fact(id, theory),
                        DerivationNode {
                            goal: atom.clone(),
                            via: Via::Fact((*id).clone()),
                            children: Vec::new(),
                        },
                    ));
                }
            }
        }
        for (rule, theory) in self.rules.iter().filter(|(r, _)| allowed.rules.contains(&r.id)) {
            let mut theta = Substitution::new();
            if !match_into(&rule.head, atom, &mut theta) {
                continue;
            }
            for theta in join_body(&rule.body, theta, &self.pro, stack) {
                let body: Vec<Proposition> = rule.body.iter().map(|b| apply_substitution(b, &theta)).collect();
                let mut partial: Vec<(Vec<Sign>, Grounds, Vec<DerivationNode>)> = vec![(Vec::new(), Grounds::default(), Vec::new())];
                for b in &body {
                    let mut next = Vec::new();
                    for s in [Sign::Confirmed, Sign::Supported] {
                        for (g, node) in self.derive_within(b, s, allowed, stack) {
                            for (signs, grounds, nodes) in &partial {
                                let mut signs = signs.clone();
                                signs.push(s);
                                let mut grounds = grounds.clone();
                                grounds.merge(&g);
                                let mut nodes = nodes.clone();
                                nodes.push(node.clone());
                                next.push((signs, grounds, nodes));
                            }
                        }
                    }
                    partial = next;
                }
                for (signs, mut grounds, children) in partial {
                    if chain_sign(rule.head_sign, &signs) != Ok(sign) {
                        continue;
                    }
                    grounds.rules.insert(rule.id.clone());
                    grounds.theories.insert((*theory).clone());
                    out.push((
                        grounds,
                        DerivationNode {
                            goal: atom.clone(),
                            via: Via::Rule(rule.id.clone()),
                            children,
                        },
                    ));
                }
            }
        }
        stack.pop();
        out
    }
}

/// All extensions of `theta` that ground the body against `index`, skipping
/// atoms already on the goal stack.
fn join_body(body: &[Proposition], theta: Substitution, index: &AtomIndex, stack: &[Proposition]) -> Vec<Substitution> {
    let mut out = Vec::new();
    join_rec(body, theta, index, stack, &mut out);
    out
}

fn join_rec(body: &[Proposition], theta: Substitution, index: &AtomIndex, stack: &[Proposition], out: &mut Vec<Substitution>) {
    let Some((first, rest)) = body.split_first() else {
        out.push(theta);
        return;
    };
    let lit = apply_substitution(first, &theta);
    if lit.is_ground() {
        if index.contains(&lit) && !stack.contains(&lit) {
            join_rec(rest, theta, index, stack, out);
        }
        return;
    }
    let Some(candidates) = index.by_predicate.get(&lit.predicate) else {
        return;
    };
    for g in candidates {
        if stack.contains(g) {
            continue;
        }
        let mut extended = theta.clone();
        if match_into(&lit, g, &mut extended) {
            join_rec(rest, extended, index, stack, out);
        }
    }
}

/// Tarjan's algorithm, iteratively. Maps every node to its component index.
fn strongly_connected(edges: &HashMap<Proposition, BTreeSet<Proposition>>) -> HashMap<Proposition, usize> {
    let nodes: BTreeSet<&Proposition> = edges.iter().flat_map(|(h, b)| std::iter::once(h).chain(b)).collect();
    let mut index: HashMap<&Proposition, usize> = HashMap::new();
    let mut low: HashMap<&Proposition, usize> = HashMap::new();
    let mut on_stack: BTreeSet<&Proposition> = BTreeSet::new();
    let mut stack: Vec<&Proposition> = Vec::new();
    let mut component = HashMap::new();
    let mut next = 0;
    let mut components = 0;
    let successors = |n: &Proposition| -> Vec<&Proposition> { edges.get(n).map_or_else(Vec::new, |b| b.iter().collect()) };
    for &root in &nodes {
        if index.contains_key(root) {
            continue;
        }
        let mut work: Vec<(&Proposition, Vec<&Proposition>, usize)> = Vec::new();
        index.insert(root, next);
        low.insert(root, next);
        next += 1;
        stack.push(root);
        on_stack.insert(root);
        work.push((root, successors(root), 0));
        while let Some((node, succ, i)) = work.last_mut() {
            let node = *node;
            if let Some(&w) = succ.get(*i) {
                *i += 1;
                if !index.contains_key(w) {
                    index.insert(w, next);
                    low.insert(w, next);
                    next += 1;
                    stack.push(w);
                    on_stack.insert(w);
                    work.push((w, successors(w), 0));
                } else if on_stack.contains(w) {
                    let l = low[node].min(index[w]);
                    low.insert(node, l);
                }
                continue;
            }
            work.pop();
            if let Some((parent, _, _)) = work.last() {
                let l = low[*parent].min(low[node]);
                low.insert(*parent, l);
            }
            if low[node] == index[node] {
                while let Some(w) = stack.pop() {
                    on_stack.remove(w);
                    component.insert(w.clone(), components);
                    if w == node {
                        break;
                    }
                }
                components += 1;
            }
        }
    }
    component
}

/// Groups arguments by proposition.
pub fn group_by_proposition(args: &[Argument]) -> BTreeMap<Proposition, Vec<Argument>> {
    let mut map: BTreeMap<Proposition, Vec<Argument>> = BTreeMap::new();
    for a in args {
        map.entry(a.proposition.clone()).or_default().push(a.clone());
    }
    map
}
