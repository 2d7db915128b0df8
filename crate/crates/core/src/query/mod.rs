//! Conjunctive queries, their evaluation, and resolved answers.
//!
//! Query syntax:
//!
//! ```text
//! Q(x,y) :- R(x,y,'c1'), S(y,z), x = a1 or x = a2
//! ```
//!
//! Atom arguments are variables, quoted constants or integer literals.
//! Equality items after the atoms form a conjunction of disjunctions; their
//! right-hand side is a variable of the query or a constant.

mod eval;
mod rewrite;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use log::debug;

pub use eval::{eval_rewritten, eval_rewritten_with_stats, EvalStats};
pub use rewrite::{rewrite, Block, CountTerm, Expansion, RewrittenQuery, ValueCheck};

use crate::error::{Error, Result};
use crate::instance::{AttrRef, Instance, Schema, Value, ValueTag};
use crate::mdspec::MdSet;
use crate::resolve::{compute_mris, oracle_explore, DEFAULT_LIMIT, MAX_ARITY, MAX_TUPLES};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(Value::Int(i)) => write!(f, "{i}"),
            Term::Const(Value::Text(s)) => write!(f, "'{s}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub rel: usize,
    pub terms: Vec<Term>,
}

/// `var = term`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equality {
    pub var: String,
    pub rhs: Term,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjunctiveQuery {
    pub name: String,
    pub head: Vec<String>,
    pub atoms: Vec<Atom>,
    /// Conjunction of disjunctions of equalities.
    pub conditions: Vec<Vec<Equality>>,
    schema: Arc<Schema>,
}

pub type AnswerSet = BTreeSet<Vec<Value>>;

impl ConjunctiveQuery {
    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// Variables of the atoms that are not in the head, in order of first
    /// occurrence.
    pub fn bound_vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for a in &self.atoms {
            for t in &a.terms {
                if let Term::Var(v) = t {
                    if !self.head.contains(v) && !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            }
        }
        out
    }

    /// Every variable in order of first occurrence in the atoms.
    pub fn vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for a in &self.atoms {
            for t in &a.terms {
                if let Term::Var(v) = t {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            }
        }
        out
    }

    pub fn is_free(&self, var: &str) -> bool {
        self.head.iter().any(|h| h == var)
    }

    /// Attribute positions at which `var` occurs.
    pub fn occurrences(&self, var: &str) -> Vec<AttrRef> {
        let mut out = Vec::new();
        for a in &self.atoms {
            for (i, t) in a.terms.iter().enumerate() {
                if matches!(t, Term::Var(v) if v == var) {
                    out.push(AttrRef { rel: a.rel, attr: i });
                }
            }
        }
        out
    }

    /// Ordinary answers of the query on `d`.
    pub fn evaluate(&self, d: &Instance) -> AnswerSet {
        let mut out = AnswerSet::new();
        let mut env: BTreeMap<String, Value> = BTreeMap::new();
        self.join(d, 0, &mut env, &mut out);
        out
    }

    fn join(&self, d: &Instance, i: usize, env: &mut BTreeMap<String, Value>, out: &mut AnswerSet) {
        if i == self.atoms.len() {
            if self.conditions.iter().all(|disj| disj.iter().any(|e| e.holds(env))) {
                out.insert(self.head.iter().map(|h| env[h].clone()).collect());
            }
            return;
        }
        let atom = &self.atoms[i];
        for (_, vals) in d.tuples(atom.rel) {
            let mut bound = Vec::new();
            if unify(&atom.terms, vals, env, &mut bound) {
                self.join(d, i + 1, env, out);
            }
            for v in bound {
                env.remove(&v);
            }
        }
    }
}

impl Equality {
    fn holds(&self, env: &BTreeMap<String, Value>) -> bool {
        let l = &env[&self.var];
        match &self.rhs {
            Term::Var(v) => &env[v] == l,
            Term::Const(c) => c == l,
        }
    }
}

/// Matches `terms` against `vals`, extending `env`. Newly bound variables
/// are appended to `bound` so the caller can undo them; on failure they are
/// undone here.
pub(crate) fn unify(
    terms: &[Term],
    vals: &[Value],
    env: &mut BTreeMap<String, Value>,
    bound: &mut Vec<String>,
) -> bool {
    let start = bound.len();
    for (t, v) in terms.iter().zip(vals) {
        let ok = match t {
            Term::Const(c) => c == v,
            Term::Var(x) => match env.get(x) {
                Some(w) => w == v,
                None => {
                    env.insert(x.clone(), v.clone());
                    bound.push(x.clone());
                    true
                }
            },
        };
        if !ok {
            for x in bound.drain(start..) {
                env.remove(&x);
            }
            return false;
        }
    }
    true
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) :- ", self.name, self.head.join(","))?;
        let mut items: Vec<String> = self
            .atoms
            .iter()
            .map(|a| {
                let args: Vec<String> = a.terms.iter().map(Term::to_string).collect();
                format!("{}({})", self.schema.relation(a.rel).name, args.join(","))
            })
            .collect();
        for disj in &self.conditions {
            items.push(disj.iter().map(|e| format!("{} = {}", e.var, e.rhs)).collect::<Vec<_>>().join(" or "));
        }
        f.write_str(&items.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum QTok {
    Ident(String),
    Str(String),
    Int(i64),
    Sym(&'static str),
}

fn qtokenize(s: &str) -> Result<Vec<QTok>> {
    let err = |m: String| Error::QueryParse(m);
    let mut out = Vec::new();
    let mut rest = s;
    'outer: while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
            continue;
        }
        for sym in [":-", "(", ")", ",", "="] {
            if let Some(r) = rest.strip_prefix(sym) {
                out.push(QTok::Sym(sym));
                rest = r;
                continue 'outer;
            }
        }
        if c == '\'' || c == '"' {
            let body = &rest[1..];
            let end = body.find(c).ok_or_else(|| err("unterminated quote".into()))?;
            out.push(QTok::Str(body[..end].to_string()));
            rest = &body[end + 1..];
            continue;
        }
        let len = rest
            .char_indices()
            .find(|(_, ch)| !(ch.is_alphanumeric() || *ch == '_' || *ch == '-' || *ch == '\''))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return Err(err(format!("unexpected character `{c}`")));
        }
        let w = &rest[..len];
        match w.parse::<i64>() {
            Ok(i) => out.push(QTok::Int(i)),
            Err(_) => out.push(QTok::Ident(w.to_string())),
        }
        rest = &rest[len..];
    }
    Ok(out)
}

/// Raw right-hand sides before variables are known.
enum RawRhs {
    Word(String),
    Quoted(String),
    Int(i64),
}

/// Parses a query against `schema`. `#` starts a comment; the query may
/// span several lines.
pub fn parse_query(source: &str, schema: &Arc<Schema>) -> Result<ConjunctiveQuery> {
    let text: String = source.lines().map(crate::instance::strip_comment).collect::<Vec<_>>().join(" ");
    let toks = qtokenize(&text)?;
    let mut p = 0usize;
    let err = |m: String| Error::QueryParse(m);
    let next = |p: &mut usize| -> Option<QTok> {
        let t = toks.get(*p).cloned();
        *p += 1;
        t
    };
    let expect = |p: &mut usize, s: &'static str| -> Result<()> {
        match toks.get(*p) {
            Some(QTok::Sym(x)) if *x == s => {
                *p += 1;
                Ok(())
            }
            other => Err(Error::QueryParse(format!("expected `{s}`, found {other:?}"))),
        }
    };

    let name = match next(&mut p) {
        Some(QTok::Ident(n)) => n,
        other => return Err(err(format!("expected query name, found {other:?}"))),
    };
    expect(&mut p, "(")?;
    let mut head = Vec::new();
    if !matches!(toks.get(p), Some(QTok::Sym(")"))) {
        loop {
            match next(&mut p) {
                Some(QTok::Ident(v)) => head.push(v),
                other => return Err(err(format!("expected head variable, found {other:?}"))),
            }
            if matches!(toks.get(p), Some(QTok::Sym(","))) {
                p += 1;
            } else {
                break;
            }
        }
    }
    expect(&mut p, ")")?;
    expect(&mut p, ":-")?;

    let mut atoms = Vec::new();
    let mut raw_conds: Vec<Vec<(String, RawRhs)>> = Vec::new();
    loop {
        let word = match next(&mut p) {
            Some(QTok::Ident(w)) => w,
            other => return Err(err(format!("expected an atom or condition, found {other:?}"))),
        };
        match toks.get(p) {
            Some(QTok::Sym("(")) => {
                p += 1;
                let rel = schema.relation_index(&word).ok_or_else(|| Error::UnknownRelation(word.clone()))?;
                let rs = schema.relation(rel);
                let mut terms = Vec::new();
                loop {
                    let i = terms.len();
                    let tag = rs.attrs.get(i).map(|a| a.tag);
                    let term = match next(&mut p) {
                        Some(QTok::Ident(v)) => Term::Var(v),
                        Some(QTok::Str(s)) => Term::Const(typed_const(&s, tag)?),
                        Some(QTok::Int(n)) => Term::Const(typed_const(&n.to_string(), tag)?),
                        other => return Err(err(format!("expected a term, found {other:?}"))),
                    };
                    terms.push(term);
                    match next(&mut p) {
                        Some(QTok::Sym(",")) => {}
                        Some(QTok::Sym(")")) => break,
                        other => return Err(err(format!("expected `,` or `)`, found {other:?}"))),
                    }
                }
                if terms.len() != rs.arity() {
                    return Err(err(format!(
                        "{} has arity {}, atom has {} arguments",
                        rs.name,
                        rs.arity(),
                        terms.len()
                    )));
                }
                atoms.push(Atom { rel, terms });
            }
            Some(QTok::Sym("=")) => {
                let mut disj = Vec::new();
                let mut var = word;
                loop {
                    expect(&mut p, "=")?;
                    let rhs = match next(&mut p) {
                        Some(QTok::Ident(w)) => RawRhs::Word(w),
                        Some(QTok::Str(s)) => RawRhs::Quoted(s),
                        Some(QTok::Int(n)) => RawRhs::Int(n),
                        other => return Err(err(format!("expected a value, found {other:?}"))),
                    };
                    disj.push((var, rhs));
                    match toks.get(p) {
                        Some(QTok::Ident(w)) if w == "or" => {
                            p += 1;
                            var = match next(&mut p) {
                                Some(QTok::Ident(v)) => v,
                                other => return Err(err(format!("expected a variable, found {other:?}"))),
                            };
                        }
                        _ => break,
                    }
                }
                raw_conds.push(disj);
            }
            other => return Err(err(format!("expected `(` or `=` after `{word}`, found {other:?}"))),
        }
        match next(&mut p) {
            Some(QTok::Sym(",")) => {}
            None => break,
            other => return Err(err(format!("expected `,`, found {other:?}"))),
        }
    }
    if atoms.is_empty() {
        return Err(err("a query needs at least one atom".into()));
    }

    // variable tags must agree across occurrences
    let mut tags: BTreeMap<String, ValueTag> = BTreeMap::new();
    for a in &atoms {
        for (i, t) in a.terms.iter().enumerate() {
            if let Term::Var(v) = t {
                let tag = schema.tag(AttrRef { rel: a.rel, attr: i });
                if let Some(prev) = tags.insert(v.clone(), tag) {
                    if prev != tag {
                        return Err(Error::TagMismatch(format!("variable `{v}` used as {prev} and {tag}")));
                    }
                }
            }
        }
    }
    for h in &head {
        if !tags.contains_key(h) {
            return Err(err(format!("head variable `{h}` does not occur in any atom")));
        }
    }
    let mut conditions = Vec::new();
    for disj in raw_conds {
        let mut out = Vec::new();
        for (var, rhs) in disj {
            let tag =
                *tags.get(&var).ok_or_else(|| err(format!("condition variable `{var}` does not occur in any atom")))?;
            let rhs = match rhs {
                RawRhs::Word(w) if tags.contains_key(&w) => {
                    if tags[&w] != tag {
                        return Err(Error::TagMismatch(format!("`{var} = {w}` compares {tag} with {}", tags[&w])));
                    }
                    Term::Var(w)
                }
                RawRhs::Word(w) | RawRhs::Quoted(w) => Term::Const(Value::parse(&w, tag)?),
                RawRhs::Int(n) => Term::Const(Value::parse(&n.to_string(), tag)?),
            };
            out.push(Equality { var, rhs });
        }
        conditions.push(out);
    }
    Ok(ConjunctiveQuery { name, head, atoms, conditions, schema: schema.clone() })
}

fn typed_const(raw: &str, tag: Option<ValueTag>) -> Result<Value> {
    match tag {
        Some(t) => Value::parse(raw, t),
        None => Err(Error::QueryParse("too many arguments".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UcajVerdict {
    pub ok: bool,
    /// A bound, repeated variable at a changeable attribute.
    pub witness: Option<String>,
}

/// Whether no bound variable that occurs more than once sits at a changeable
/// attribute.
pub fn is_ucaj(q: &ConjunctiveQuery, mds: &MdSet) -> UcajVerdict {
    let changeable = mds.changeable_attrs();
    for v in q.bound_vars() {
        let occ = q.occurrences(&v);
        if occ.len() >= 2 && occ.iter().any(|a| changeable.contains(a)) {
            return UcajVerdict { ok: false, witness: Some(v) };
        }
    }
    UcajVerdict { ok: true, witness: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Enumerate,
    Rewrite,
    Auto,
}

/// BFS depth used when enumeration falls back to the oracle.
pub const ORACLE_DEPTH: usize = 64;

/// Why the rewrite strategy cannot be used, if it cannot.
pub fn rewrite_obstacle(q: &ConjunctiveQuery, mds: &MdSet) -> Option<Error> {
    let class = mds.classify();
    if !class.is_hsc_family() {
        return Some(Error::UnsupportedClass(class));
    }
    if !q.conditions.is_empty() {
        return Some(Error::ConditionsNotRewritable);
    }
    let u = is_ucaj(q, mds);
    if !u.ok {
        return Some(Error::NotUcaj(u.witness.unwrap_or_default()));
    }
    None
}

/// Answers of `q` true in every MRI of `d`.
pub fn resolved_answers(q: &ConjunctiveQuery, d: &Instance, mds: &MdSet, strategy: Strategy) -> Result<AnswerSet> {
    match strategy {
        Strategy::Rewrite => {
            let rq = rewrite(q, mds)?;
            Ok(eval_rewritten(&rq, d, mds))
        }
        Strategy::Enumerate => answers_by_enumeration(q, d, mds),
        Strategy::Auto => match rewrite_obstacle(q, mds) {
            None => resolved_answers(q, d, mds, Strategy::Rewrite),
            Some(why) => {
                debug!("rewrite not applicable ({why}); enumerating");
                answers_by_enumeration(q, d, mds).map_err(|e| match e {
                    Error::UnsupportedClass(_) | Error::GuardExceeded(_) => {
                        Error::NoStrategy(format!("rewrite: {why}; enumerate: {e}"))
                    }
                    other => other,
                })
            }
        },
    }
}

fn within_guard(d: &Instance) -> bool {
    d.total_tuples() <= MAX_TUPLES && d.schema().relations().iter().all(|r| r.arity() <= MAX_ARITY)
}

/// The MRIs used by the enumerate strategy.
pub fn mris_for_answering(d: &Instance, mds: &MdSet) -> Result<Vec<Instance>> {
    let class = mds.classify();
    if class.is_hsc_family() {
        let r = compute_mris(d, mds, DEFAULT_LIMIT)?;
        if r.truncated {
            return Err(Error::Truncated(DEFAULT_LIMIT));
        }
        return Ok(r.mris);
    }
    if !within_guard(d) {
        return Err(Error::UnsupportedClass(class));
    }
    let rep = oracle_explore(d, mds, ORACLE_DEPTH)?;
    if !rep.exhausted {
        return Err(Error::GuardExceeded(format!("oracle search deeper than {ORACLE_DEPTH} steps")));
    }
    Ok(rep.result.mris)
}

fn answers_by_enumeration(q: &ConjunctiveQuery, d: &Instance, mds: &MdSet) -> Result<AnswerSet> {
    let mris = mris_for_answering(d, mds)?;
    let mut iter = mris.iter();
    let mut acc = match iter.next() {
        Some(first) => q.evaluate(first),
        None => return Ok(AnswerSet::new()),
    };
    for m in iter {
        if acc.is_empty() {
            break;
        }
        let here = q.evaluate(m);
        acc.retain(|a| here.contains(a));
    }
    Ok(acc)
}
