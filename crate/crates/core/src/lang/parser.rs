use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{lex, Pos, Tok, Token};
use super::{Document, ParseError};
use crate::agent::{Event, EventPayload, Goal, Scenario};
use crate::aggregate::DisplayClass;
use crate::decision::{CommitRule, DecisionClass, Literal, Pattern, Reply};
use crate::kb::{
    AskableKind, FactId, KbError, KnowledgeBase, Proposition, Rule, RuleId, Sign, Term, Theory, TheoryId, TheoryKind,
};

type PResult<T> = Result<T, ParseError>;

/// Names that cannot be predicates because patterns give them meaning.
const RESERVED_PREDICATES: [&str; 2] = ["not", "true"];

#[derive(Debug, Clone)]
struct Name {
    text: String,
    pos: Pos,
}

#[derive(Debug, Clone)]
struct Atom {
    prop: Proposition,
    pos: Pos,
}

struct FactSyn {
    id: Option<Name>,
    atom: Atom,
}

struct RuleSyn {
    id: Name,
    head: Atom,
    sign: Sign,
    body: Vec<Atom>,
}

struct TheorySyn {
    id: Name,
    kind: TheoryKind,
    facts: Vec<FactSyn>,
    rules: Vec<RuleSyn>,
}

#[derive(Default)]
struct DecisionSyn {
    name: Option<Name>,
    prototype: Option<Pattern>,
    relevant_theories: Option<Vec<Name>>,
    relevant_argument_types: Vec<Name>,
    options: Option<Atom>,
    option_proposal: Option<DisplayClass>,
    askable_priority: Vec<(String, usize)>,
    terminate: Option<Pattern>,
    commit: Option<CommitRule>,
}

enum ScenarioStmt {
    Event { at: u64, pos: Pos, payload: EventPayload },
    Answer { question: Atom, reply: Reply },
}

struct ScenarioSyn {
    pos: Pos,
    name: Option<String>,
    stmts: Vec<ScenarioStmt>,
}

enum Item {
    Observations(Name),
    Askable { pred: Name, arity: usize, kind: AskableKind },
    Task { class: Name, theories: Vec<Name> },
    Theory(TheorySyn),
    Decision(DecisionSyn),
    Scenario(ScenarioSyn),
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    errors: Vec<ParseError>,
    /// Every predicate use in document order, for the arity check.
    uses: Vec<(String, usize, Pos)>,
}

fn err(pos: Pos, message: impl Into<String>) -> ParseError {
    ParseError::new(pos.line, pos.col, message)
}

impl Parser {
    fn new(text: &str) -> Self {
        let (toks, errors) = lex(text);
        Parser {
            toks,
            i: 0,
            errors,
            uses: Vec::new(),
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        err(self.pos(), format!("expected {expected}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok) -> PResult<Pos> {
        if *self.peek() == tok {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<Pos> {
        if self.at_keyword(kw) {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(text) => {
                let pos = self.bump().pos;
                Ok(Name { text, pos })
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn number(&mut self, what: &str) -> PResult<u64> {
        let n = self.ident(what)?;
        n.text
            .parse()
            .map_err(|_| err(n.pos, format!("expected {what}, found `{}`", n.text)))
    }

    /// Skips to just after the next `terminator` at the current nesting
    /// depth, or to (not past) a `}` closing the enclosing block.
    fn recover(&mut self, terminator: &Tok) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    if depth == 0 && *terminator == Tok::RBrace {
                        self.bump();
                        return;
                    }
                }
                t if t == terminator && depth == 0 => {
                    self.bump();
                    return;
                }
                _ => {}
            }
            self.bump();
        }
    }

    /// Skips a malformed top-level item: through its block if it has one,
    /// otherwise through its closing `.`.
    fn recover_top(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    self.bump();
                    if depth <= 1 {
                        return;
                    }
                    depth -= 1;
                    continue;
                }
                Tok::Dot if depth == 0 => {
                    self.bump();
                    return;
                }
                _ => {}
            }
            self.bump();
        }
    }

    fn document(&mut self) -> Vec<Item> {
        let mut items = Vec::new();
        while *self.peek() != Tok::Eof {
            let start = self.i;
            match self.item() {
                Ok(item) => items.push(item),
                Err(e) => {
                    self.errors.push(e);
                    if self.i == start {
                        self.bump();
                    }
                    self.recover_top();
                }
            }
        }
        items
    }

    fn item(&mut self) -> PResult<Item> {
        let kw = self.ident("a declaration")?;
        match kw.text.as_str() {
            "theory" => self.theory().map(Item::Theory),
            "decision" => self.decision().map(Item::Decision),
            "scenario" => self.scenario(kw.pos).map(Item::Scenario),
            "askable" => {
                let pred = self.ident("a predicate name")?;
                self.expect(Tok::Slash)?;
                let arity = self.number("an arity")? as usize;
                let kind = if self.at_keyword("functional") {
                    self.bump();
                    AskableKind::Functional
                } else if self.at_keyword("open") {
                    self.bump();
                    AskableKind::Open
                } else {
                    AskableKind::Open
                };
                self.expect(Tok::Dot)?;
                self.uses.push((pred.text.clone(), arity, pred.pos));
                Ok(Item::Askable { pred, arity, kind })
            }
            "task" => {
                let class = self.ident("a decision class name")?;
                self.expect(Tok::Colon)?;
                let theories = self.name_list("a theory name", &Tok::Dot)?;
                self.expect(Tok::Dot)?;
                Ok(Item::Task { class, theories })
            }
            "observations" => {
                let id = self.ident("a theory name")?;
                self.expect(Tok::Dot)?;
                Ok(Item::Observations(id))
            }
            other => Err(err(
                kw.pos,
                format!("expected `theory`, `decision`, `scenario`, `askable`, `task` or `observations`, found `{other}`"),
            )),
        }
    }

    /// Zero or more comma-separated identifiers, stopping before `end`.
    fn name_list(&mut self, what: &str, end: &Tok) -> PResult<Vec<Name>> {
        let mut out = Vec::new();
        if self.peek() == end {
            return Ok(out);
        }
        out.push(self.ident(what)?);
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(self.ident(what)?);
        }
        Ok(out)
    }

    fn atom(&mut self) -> PResult<Atom> {
        let pred = self.ident("a proposition")?;
        if !pred.text.starts_with(|c: char| c.is_ascii_lowercase()) {
            return Err(err(
                pred.pos,
                format!("predicate `{}` must start with a lowercase letter", pred.text),
            ));
        }
        if RESERVED_PREDICATES.contains(&pred.text.as_str()) {
            return Err(err(pred.pos, format!("`{}` is reserved and cannot be a predicate", pred.text)));
        }
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            if *self.peek() != Tok::RParen {
                args.push(Term::from_ident(&self.ident("a term")?.text));
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(Term::from_ident(&self.ident("a term")?.text));
                }
            }
            self.expect(Tok::RParen)?;
        }
        self.uses.push((pred.text.clone(), args.len(), pred.pos));
        Ok(Atom {
            prop: Proposition::new(pred.text, args),
            pos: pred.pos,
        })
    }

    fn theory(&mut self) -> PResult<TheorySyn> {
        let id = self.ident("a theory name")?;
        self.expect_keyword("kind")?;
        let kind_name = self.ident("`domain` or `task`")?;
        let kind = match kind_name.text.as_str() {
            "domain" => TheoryKind::Domain,
            "task" => TheoryKind::Task,
            other => return Err(err(kind_name.pos, format!("unknown theory kind `{other}`"))),
        };
        self.expect(Tok::LBrace)?;
        let mut theory = TheorySyn {
            id,
            kind,
            facts: Vec::new(),
            rules: Vec::new(),
        };
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(theory);
                }
                Tok::Eof => return Err(self.unexpected("`}`")),
                _ => {}
            }
            let start = self.i;
            if let Err(e) = self.theory_statement(&mut theory) {
                self.errors.push(e);
                if self.i == start {
                    self.bump();
                }
                self.recover(&Tok::Dot);
            }
        }
    }

    fn theory_statement(&mut self, theory: &mut TheorySyn) -> PResult<()> {
        let kw = self.ident("`fact` or `rule`")?;
        match kw.text.as_str() {
            "fact" => {
                let id = if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Colon {
                    let id = self.ident("a fact id")?;
                    self.bump();
                    Some(id)
                } else {
                    None
                };
                let atom = self.atom()?;
                self.expect(Tok::Dot)?;
                theory.facts.push(FactSyn { id, atom });
            }
            "rule" => {
                let id = self.ident("a rule id")?;
                self.expect(Tok::Colon)?;
                let head = self.atom()?;
                let sign_name = self.ident("a sign")?;
                let sign = Sign::from_keyword(&sign_name.text)
                    .ok_or_else(|| err(sign_name.pos, format!("unknown sign keyword `{}`", sign_name.text)))?;
                let mut body = Vec::new();
                if self.at_keyword("if") {
                    self.bump();
                    body.push(self.atom()?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        body.push(self.atom()?);
                    }
                }
                self.expect(Tok::Dot)?;
                theory.rules.push(RuleSyn { id, head, sign, body });
            }
            other => return Err(err(kw.pos, format!("expected `fact` or `rule`, found `{other}`"))),
        }
        Ok(())
    }

    fn display_class(&mut self) -> PResult<DisplayClass> {
        let n = self.ident("a belief class")?;
        DisplayClass::from_keyword(&n.text).ok_or_else(|| err(n.pos, format!("unknown belief class `{}`", n.text)))
    }

    /// `true`, or literals `[not] atom [class]` separated by commas.
    fn pattern(&mut self) -> PResult<Pattern> {
        if self.at_keyword("true") && !matches!(self.peek_at(1), Tok::LParen) {
            self.bump();
            return Ok(Pattern::always());
        }
        let mut literals = vec![self.literal()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            literals.push(self.literal()?);
        }
        Ok(Pattern::new(literals))
    }

    fn literal(&mut self) -> PResult<Literal> {
        let negated = self.at_keyword("not") && matches!(self.peek_at(1), Tok::Ident(_));
        if negated {
            self.bump();
        }
        let atom = self.atom()?;
        let class = if matches!(self.peek(), Tok::Ident(_)) {
            self.display_class()?
        } else {
            DisplayClass::Confirmed
        };
        Ok(Literal {
            atom: atom.prop,
            class,
            negated,
        })
    }

    fn decision(&mut self) -> PResult<DecisionSyn> {
        let name = self.ident("a decision class name")?;
        self.expect(Tok::LBrace)?;
        let mut d = DecisionSyn {
            name: Some(name),
            ..DecisionSyn::default()
        };
        let mut seen = BTreeSet::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(d);
                }
                Tok::Eof => return Err(self.unexpected("`}`")),
                _ => {}
            }
            let start = self.i;
            if let Err(e) = self.decision_entry(&mut d, &mut seen) {
                self.errors.push(e);
                if self.i == start {
                    self.bump();
                }
                self.recover(&Tok::Semi);
            }
        }
    }

    fn decision_entry(&mut self, d: &mut DecisionSyn, seen: &mut BTreeSet<String>) -> PResult<()> {
        let key = self.ident("a decision attribute")?;
        self.expect(Tok::Colon)?;
        let canonical = if key.text == "option_pattern" { "options" } else { key.text.as_str() };
        if !seen.insert(canonical.to_string()) {
            return Err(err(key.pos, format!("duplicate attribute `{}`", key.text)));
        }
        match canonical {
            "prototype" => d.prototype = Some(self.pattern()?),
            "terminate" => d.terminate = Some(self.pattern()?),
            "relevant_theories" => d.relevant_theories = Some(self.name_list("a theory name", &Tok::Semi)?),
            "relevant_argument_types" => d.relevant_argument_types = self.name_list("an identifier", &Tok::Semi)?,
            "options" => d.options = Some(self.atom()?),
            "option_proposal" => d.option_proposal = Some(self.display_class()?),
            "askable_priority" => {
                if *self.peek() != Tok::Semi {
                    loop {
                        let pred = self.ident("a predicate name")?;
                        self.expect(Tok::Slash)?;
                        let arity = self.number("an arity")? as usize;
                        d.askable_priority.push((pred.text, arity));
                        if *self.peek() != Tok::Comma {
                            break;
                        }
                        self.bump();
                    }
                }
            }
            "commit" => {
                let n = self.ident("`tally` or `strongest`")?;
                d.commit = Some(
                    CommitRule::from_keyword(&n.text)
                        .ok_or_else(|| err(n.pos, format!("unknown commit rule `{}`", n.text)))?,
                );
            }
            other => return Err(err(key.pos, format!("unknown decision attribute `{other}`"))),
        }
        self.expect(Tok::Semi)?;
        Ok(())
    }

    fn reply(&mut self) -> PResult<Reply> {
        let n = self.ident("`yes`, `no` or `with`")?;
        let reply = match n.text.as_str() {
            "yes" => Reply::Yes,
            "no" => Reply::No,
            "with" => Reply::Value(self.atom()?.prop),
            other => return Err(err(n.pos, format!("expected `yes`, `no` or `with`, found `{other}`"))),
        };
        Ok(reply)
    }

    fn scenario(&mut self, pos: Pos) -> PResult<ScenarioSyn> {
        let name = match self.peek() {
            Tok::Ident(_) => Some(self.ident("a scenario name")?.text),
            _ => None,
        };
        self.expect(Tok::LBrace)?;
        let mut s = ScenarioSyn {
            pos,
            name,
            stmts: Vec::new(),
        };
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(s);
                }
                Tok::Eof => return Err(self.unexpected("`}`")),
                _ => {}
            }
            let start = self.i;
            match self.scenario_statement() {
                Ok(stmt) => s.stmts.push(stmt),
                Err(e) => {
                    self.errors.push(e);
                    if self.i == start {
                        self.bump();
                    }
                    self.recover(&Tok::Dot);
                }
            }
        }
    }

    fn scenario_statement(&mut self) -> PResult<ScenarioStmt> {
        let kw = self.ident("`at` or `answer`")?;
        let stmt = match kw.text.as_str() {
            "answer" => {
                let question = self.atom()?;
                let reply = self.reply()?;
                ScenarioStmt::Answer { question, reply }
            }
            "at" => {
                let at = self.number("a step number")?;
                let what = self.ident("`observe`, `answer` or `goal`")?;
                let payload = match what.text.as_str() {
                    "observe" => EventPayload::Observation {
                        proposition: self.atom()?.prop,
                    },
                    "answer" => {
                        let question = self.atom()?.prop;
                        let reply = self.reply()?;
                        EventPayload::Answer { question, reply }
                    }
                    "goal" => {
                        let id = self.ident("a goal id")?.text;
                        self.expect(Tok::Colon)?;
                        let condition = self.pattern()?;
                        EventPayload::GoalAdded {
                            goal: Goal { id, condition },
                        }
                    }
                    other => {
                        return Err(err(
                            what.pos,
                            format!("expected `observe`, `answer` or `goal`, found `{other}`"),
                        ))
                    }
                };
                ScenarioStmt::Event {
                    at,
                    pos: kw.pos,
                    payload,
                }
            }
            other => return Err(err(kw.pos, format!("expected `at` or `answer`, found `{other}`"))),
        };
        self.expect(Tok::Dot)?;
        Ok(stmt)
    }
}

/// Parses a complete document. Either every error (sorted by position) or a
/// well-formed model, never both.
pub(crate) fn parse_document(text: &str) -> Result<Document, Vec<ParseError>> {
    let mut p = Parser::new(text);
    let items = p.document();
    let mut errors = std::mem::take(&mut p.errors);
    // Semantic checks on a recovered parse only produce follow-on noise.
    let syntax_failed = !errors.is_empty();
    check_arities(&p.uses, &mut errors);
    let before_build = errors.len();
    let doc = build(items, &mut errors);
    if syntax_failed {
        errors.truncate(before_build);
    }
    if errors.is_empty() {
        Ok(doc)
    } else {
        errors.sort_by_key(|e| (e.line, e.col));
        errors.dedup();
        Err(errors)
    }
}

fn check_arities(uses: &[(String, usize, Pos)], errors: &mut Vec<ParseError>) {
    let mut first: BTreeMap<&str, usize> = BTreeMap::new();
    for (pred, arity, pos) in uses {
        match first.get(pred.as_str()) {
            Some(&expected) if expected != *arity => errors.push(err(
                *pos,
                format!("predicate `{pred}` used with arity {arity}, expected {expected}"),
            )),
            Some(_) => {}
            None => {
                first.insert(pred, *arity);
            }
        }
    }
}

fn build(items: Vec<Item>, errors: &mut Vec<ParseError>) -> Document {
    let mut kb = KnowledgeBase::new();
    let mut observations: Option<Name> = None;
    let mut theories: Vec<TheorySyn> = Vec::new();
    let mut tasks: Vec<(Name, Vec<Name>)> = Vec::new();
    let mut decisions: Vec<DecisionSyn> = Vec::new();
    let mut scenario: Option<ScenarioSyn> = None;

    for item in items {
        match item {
            Item::Observations(n) => {
                if observations.is_some() {
                    errors.push(err(n.pos, "observation theory declared twice"));
                } else {
                    observations = Some(n);
                }
            }
            Item::Askable { pred, arity, kind } => {
                let key = (pred.text.clone(), arity);
                match kb.askables().get(&key) {
                    Some(k) if *k != kind => {
                        errors.push(err(pred.pos, format!("askable `{}/{arity}` declared twice", pred.text)));
                    }
                    _ => {
                        kb.askables_mut().insert(key, kind);
                    }
                }
            }
            Item::Task { class, theories } => tasks.push((class, theories)),
            Item::Theory(t) => theories.push(t),
            Item::Decision(d) => decisions.push(d),
            Item::Scenario(s) => {
                if scenario.is_some() {
                    errors.push(err(s.pos, "only one scenario block is allowed"));
                } else {
                    scenario = Some(s);
                }
            }
        }
    }

    // Theories, with explicit ids first so generated fact ids never collide.
    let mut ids: BTreeSet<String> = BTreeSet::new();
    for t in &theories {
        for f in &t.facts {
            if let Some(id) = &f.id {
                if !ids.insert(id.text.clone()) {
                    errors.push(err(id.pos, format!("duplicate id `{}`", id.text)));
                }
            }
        }
        for r in &t.rules {
            if !ids.insert(r.id.text.clone()) {
                errors.push(err(r.id.pos, format!("duplicate id `{}`", r.id.text)));
            }
        }
    }
    let mut pending_facts: Vec<(TheoryId, Atom)> = Vec::new();
    for t in theories {
        let tid = TheoryId::new(&t.id.text);
        if kb.has_theory(&tid) {
            errors.push(err(t.id.pos, format!("duplicate theory `{}`", t.id.text)));
            continue;
        }
        let mut theory = Theory::new(&t.id.text, t.kind);
        for f in t.facts {
            if !f.atom.prop.is_ground() {
                errors.push(err(f.atom.pos, format!("fact `{}` is not ground", f.atom.prop)));
                continue;
            }
            match f.id {
                Some(id) => {
                    theory.facts.insert(FactId::new(id.text), f.atom.prop);
                }
                None => pending_facts.push((tid.clone(), f.atom)),
            }
        }
        for r in t.rules {
            let rule = Rule {
                id: RuleId::new(&r.id.text),
                head: r.head.prop,
                head_sign: r.sign,
                body: r.body.into_iter().map(|a| a.prop).collect(),
            };
            if !rule.is_range_restricted() {
                errors.push(err(r.id.pos, format!("rule `{}` is not range-restricted", r.id.text)));
            }
            theory.rules.insert(rule.id.clone(), rule);
        }
        kb.theories_mut().insert(tid, theory);
    }

    if let Some(n) = &observations {
        kb.set_observation_theory(Some(TheoryId::new(&n.text)));
    }
    let obs = kb.observation_theory();
    let ensure_observations = |kb: &mut KnowledgeBase| {
        if !kb.has_theory(&obs) {
            kb.theories_mut()
                .insert(obs.clone(), Theory::new(obs.0.clone(), TheoryKind::Domain));
        }
    };
    if observations.is_some() {
        ensure_observations(&mut kb);
    }
    let resolve_theory = |kb: &mut KnowledgeBase, n: &Name, errors: &mut Vec<ParseError>| -> bool {
        let tid = TheoryId::new(&n.text);
        if kb.has_theory(&tid) {
            true
        } else if tid == obs {
            ensure_observations(kb);
            true
        } else {
            errors.push(err(n.pos, format!("unknown theory `{}`", n.text)));
            false
        }
    };

    for (class, names) in tasks {
        if kb.task_map().contains_key(&class.text) {
            errors.push(err(class.pos, format!("task `{}` declared twice", class.text)));
            continue;
        }
        let mut set = BTreeSet::new();
        for n in &names {
            if resolve_theory(&mut kb, n, errors) {
                set.insert(TheoryId::new(&n.text));
            }
        }
        kb.task_map_mut().insert(class.text, set);
    }

    let mut classes: Vec<DecisionClass> = Vec::new();
    for d in decisions {
        let name = d.name.expect("decision blocks are always named");
        if classes.iter().any(|c| c.name == name.text) {
            errors.push(err(name.pos, format!("decision `{}` declared twice", name.text)));
            continue;
        }
        let Some(options) = d.options else {
            errors.push(err(name.pos, format!("decision `{}` has no options", name.text)));
            continue;
        };
        let relevant: BTreeSet<TheoryId> = match &d.relevant_theories {
            Some(names) => {
                let mut set = BTreeSet::new();
                for n in names {
                    if resolve_theory(&mut kb, n, errors) {
                        set.insert(TheoryId::new(&n.text));
                    }
                }
                if let Some(allowed) = kb.task_map().get(&name.text) {
                    for n in names {
                        let tid = TheoryId::new(&n.text);
                        if !allowed.contains(&tid) {
                            errors.push(err(
                                n.pos,
                                format!("theory `{}` is not relevant to `{}` in the task map", n.text, name.text),
                            ));
                        }
                    }
                }
                set
            }
            None => match kb.task_map().get(&name.text) {
                Some(set) => set.clone(),
                None => {
                    ensure_observations(&mut kb);
                    kb.theory_ids()
                }
            },
        };
        classes.push(DecisionClass {
            name: name.text,
            prototype: d.prototype.unwrap_or_default(),
            relevant_theories: relevant,
            relevant_argument_types: d.relevant_argument_types.into_iter().map(|n| n.text).collect(),
            option_proposal: d.option_proposal.unwrap_or(DisplayClass::Possible),
            option_pattern: options.prop,
            askable_priority: d.askable_priority,
            terminate: d.terminate.unwrap_or_default(),
            commit_rule: d.commit.unwrap_or_default(),
        });
    }

    for (tid, atom) in pending_facts {
        match kb.add_fact(&tid, atom.prop) {
            Ok(next) => kb = next,
            // Already reported where the predicate was used.
            Err(KbError::ArityConflict { .. }) => {}
            Err(e) => errors.push(err(atom.pos, e.to_string())),
        }
    }

    let scenario = scenario.map(|s| build_scenario(s, &kb, errors));

    if errors.is_empty() {
        if let Err(e) = kb.validate() {
            errors.push(ParseError::new(1, 1, e.to_string()));
        }
    }
    Document { kb, classes, scenario }
}

fn build_scenario(s: ScenarioSyn, kb: &KnowledgeBase, errors: &mut Vec<ParseError>) -> Scenario {
    let mut scenario = Scenario {
        name: s.name,
        ..Scenario::default()
    };
    let mut last_at = 0;
    let mut goal_ids = BTreeSet::new();
    for stmt in s.stmts {
        match stmt {
            ScenarioStmt::Event { at, pos, payload } => {
                if at == 0 {
                    errors.push(err(pos, "steps start at 1"));
                } else if at < last_at {
                    errors.push(err(pos, format!("event at step {at} follows an event at step {last_at}")));
                }
                last_at = last_at.max(at);
                match &payload {
                    EventPayload::Observation { proposition } if !proposition.is_ground() => {
                        errors.push(err(pos, format!("observation `{proposition}` is not ground")));
                    }
                    EventPayload::Answer { question, reply } => {
                        check_answer(kb, question, reply, pos, errors);
                    }
                    EventPayload::GoalAdded { goal } => {
                        if !goal_ids.insert(goal.id.clone()) {
                            errors.push(err(pos, format!("goal `{}` declared twice", goal.id)));
                        }
                    }
                    _ => {}
                }
                scenario.events.push(Event { at, payload });
            }
            ScenarioStmt::Answer { question, reply } => {
                check_answer(kb, &question.prop, &reply, question.pos, errors);
                if scenario.answers.contains_key(&question.prop) {
                    errors.push(err(question.pos, format!("answer to `{}` given twice", question.prop)));
                }
                scenario.answers.insert(question.prop, reply);
            }
        }
    }
    scenario
}

fn check_answer(kb: &KnowledgeBase, question: &Proposition, reply: &Reply, pos: Pos, errors: &mut Vec<ParseError>) {
    for p in std::iter::once(question).chain(match reply {
        Reply::Value(v) => Some(v),
        _ => None,
    }) {
        if !p.is_ground() {
            errors.push(err(pos, format!("answer `{p}` is not ground")));
        } else if !kb.is_askable(p) {
            errors.push(err(pos, format!("`{}/{}` is not askable", p.predicate, p.arity())));
        }
    }
}

fn parse_single<T>(text: &str, f: impl FnOnce(&mut Parser) -> PResult<T>) -> Result<T, ParseError> {
    let mut p = Parser::new(text);
    if let Some(e) = p.errors.first() {
        return Err(e.clone());
    }
    let out = f(&mut p)?;
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected("end of input"));
    }
    Ok(out)
}

pub(crate) fn proposition(text: &str) -> Result<Proposition, ParseError> {
    parse_single(text, |p| p.atom().map(|a| a.prop))
}

pub(crate) fn pattern(text: &str) -> Result<Pattern, ParseError> {
    parse_single(text, |p| p.pattern())
}
