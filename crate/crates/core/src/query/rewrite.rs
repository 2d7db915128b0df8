//! The Count-based rewriting of ucaj conjunctive queries.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use super::{is_ucaj, Atom, ConjunctiveQuery, Term};
use crate::closure::attribute_closure;
use crate::error::{Error, Result};
use crate::instance::{AttrRef, Schema};
use crate::mdspec::{MdClass, MdSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewrittenQuery {
    pub name: String,
    pub head: Vec<String>,
    pub bound: Vec<String>,
    pub blocks: Vec<Block>,
    /// Whether TS is read as the closure built from whole MD components.
    pub hsc_mode: bool,
    /// Attribute-closure classes used by the rewriting that hold two or more
    /// attributes of one relation.
    pub self_join_classes: Vec<Vec<AttrRef>>,
    schema: Arc<Schema>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Block {
    Plain(Atom),
    Expanded(Expansion),
}

/// An atom with its changeable answer positions replaced by fresh variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expansion {
    pub original: Atom,
    pub renamed: Atom,
    pub fresh: Vec<String>,
    pub checks: Vec<ValueCheck>,
}

/// `forall challenger [Σ C1 > Σ C2]` for one replaced position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueCheck {
    pub attr: AttrRef,
    pub target: Term,
    pub challenger: String,
    pub sums: Vec<CountTerm>,
}

/// One member `R_j[B_k]` of the attribute class, with the argument vectors
/// of its two Count expressions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTerm {
    pub member: AttrRef,
    pub locals: Vec<Term>,
    pub challenger_locals: Vec<Term>,
}

impl RewrittenQuery {
    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// Number of Count expressions on each side of every comparison.
    pub fn count_terms(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                Block::Expanded(e) => Some(e.checks.iter().map(|c| c.sums.len())),
                Block::Plain(_) => None,
            })
            .flatten()
            .collect()
    }
}

struct Names(BTreeSet<String>);

impl Names {
    /// `base` followed by `suffix`, numbered when taken.
    fn fresh(&mut self, base: &str, suffix: &str) -> String {
        let mut name = format!("{base}{suffix}");
        let mut n = 2;
        while self.0.contains(&name) {
            name = format!("{base}{suffix}{n}");
            n += 1;
        }
        self.0.insert(name.clone());
        name
    }
}

/// Rewrites `q` so that its ordinary answers on an instance are the resolved
/// answers of `q` on it. The result depends only on `q` and `mds`.
pub fn rewrite(q: &ConjunctiveQuery, mds: &MdSet) -> Result<RewrittenQuery> {
    let class = mds.classify();
    if !class.is_hsc_family() {
        return Err(Error::UnsupportedClass(class));
    }
    if !q.conditions.is_empty() {
        return Err(Error::ConditionsNotRewritable);
    }
    let u = is_ucaj(q, mds);
    if !u.ok {
        return Err(Error::NotUcaj(u.witness.unwrap_or_default()));
    }
    let schema = q.schema().clone();
    let changeable = mds.changeable_attrs();
    let closure = attribute_closure(mds);
    let mut names = Names(q.vars().into_iter().collect());
    let mut self_join_classes: Vec<Vec<AttrRef>> = Vec::new();

    // fresh and challenger names first, so locals avoid all of them
    struct Slot {
        col: usize,
        target: Term,
        fresh: String,
        challenger: String,
    }
    let mut plans: Vec<Vec<Slot>> = Vec::new();
    for atom in &q.atoms {
        let mut slots = Vec::new();
        for (col, t) in atom.terms.iter().enumerate() {
            let attr = AttrRef { rel: atom.rel, attr: col };
            if !changeable.contains(&attr) {
                continue;
            }
            let base = match t {
                Term::Var(v) if q.is_free(v) => v.clone(),
                Term::Var(_) => continue,
                Term::Const(_) => schema.relation(atom.rel).attrs[col].name.to_lowercase(),
            };
            let fresh = names.fresh(&base, "'");
            let challenger = names.fresh(&base, "''");
            slots.push(Slot { col, target: t.clone(), fresh, challenger });
        }
        plans.push(slots);
    }

    let mut blocks = Vec::new();
    for (atom, slots) in q.atoms.iter().zip(plans) {
        if slots.is_empty() {
            blocks.push(Block::Plain(atom.clone()));
            continue;
        }
        let mut renamed = atom.clone();
        for s in &slots {
            renamed.terms[s.col] = Term::Var(s.fresh.clone());
        }
        let mut checks = Vec::new();
        for s in &slots {
            let attr = AttrRef { rel: atom.rel, attr: s.col };
            let members: Vec<AttrRef> = match closure.class_of(&attr) {
                Some(i) => closure.classes()[i].clone(),
                None => vec![attr],
            };
            let mut rels: Vec<usize> = members.iter().map(|m| m.rel).collect();
            rels.sort_unstable();
            if rels.windows(2).any(|w| w[0] == w[1]) && !self_join_classes.contains(&members) {
                self_join_classes.push(members.clone());
            }
            let sums = members
                .iter()
                .map(|&member| count_term(q, &schema, &names, member, &s.target, &s.challenger))
                .collect();
            checks.push(ValueCheck { attr, target: s.target.clone(), challenger: s.challenger.clone(), sums });
        }
        blocks.push(Block::Expanded(Expansion {
            original: atom.clone(),
            renamed,
            fresh: slots.into_iter().map(|s| s.fresh).collect(),
            checks,
        }));
    }
    Ok(RewrittenQuery {
        name: q.name.clone(),
        head: q.head.clone(),
        bound: q.bound_vars(),
        blocks,
        hsc_mode: class != MdClass::NonInteracting,
        self_join_classes,
        schema,
    })
}

/// Local variables are primes of the variables found at the same columns of
/// the query's first atom over the member's relation, or of the lowercased
/// attribute names. They avoid every outer name and each other.
fn count_term(
    q: &ConjunctiveQuery,
    schema: &Schema,
    outer: &Names,
    member: AttrRef,
    target: &Term,
    challenger: &str,
) -> CountTerm {
    let first = q.atoms.iter().find(|a| a.rel == member.rel);
    let rs = schema.relation(member.rel);
    let mut taken = Names(outer.0.clone());
    let mut locals = Vec::new();
    let mut challenger_locals = Vec::new();
    for col in 0..rs.arity() {
        if col == member.attr {
            locals.push(target.clone());
            challenger_locals.push(Term::Var(challenger.to_string()));
            continue;
        }
        let base = match first.map(|a| &a.terms[col]) {
            Some(Term::Var(v)) => v.clone(),
            _ => rs.attrs[col].name.to_lowercase(),
        };
        let name = Term::Var(taken.fresh(&base, "'"));
        locals.push(name.clone());
        challenger_locals.push(name);
    }
    CountTerm { member, locals, challenger_locals }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn atom_text(schema: &Schema, rel: usize, terms: &[Term]) -> String {
    format!("{}({})", schema.relation(rel).name, join(terms))
}

/// The formula in the layout of the rewriting algorithm, using `exists`,
/// `forall`, `and`, `!=`, `Count{.. | ..}` and `TS(v, R[A], u, S[B])`.
impl fmt::Display for RewrittenQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &*self.schema;
        let body: Vec<String> = self
            .blocks
            .iter()
            .map(|b| match b {
                Block::Plain(a) => atom_text(s, a.rel, &a.terms),
                Block::Expanded(e) => {
                    let renamed = join(&e.renamed.terms);
                    let mut parts = vec![atom_text(s, e.renamed.rel, &e.renamed.terms)];
                    for c in &e.checks {
                        let side = |challenged: bool| {
                            c.sums
                                .iter()
                                .map(|t| {
                                    let args = if challenged { &t.challenger_locals } else { &t.locals };
                                    let mut text = format!(
                                        "Count{{({}) | TS({renamed},{},{},{}) and {}",
                                        join(args),
                                        s.attr_name(c.attr),
                                        join(args),
                                        s.attr_name(t.member),
                                        atom_text(s, t.member.rel, args)
                                    );
                                    if challenged {
                                        text.push_str(&format!(" and {} != {}", c.challenger, c.target));
                                    }
                                    text.push('}');
                                    text
                                })
                                .collect::<Vec<_>>()
                                .join(" + ")
                        };
                        parts.push(format!("forall {} [{} > {}]", c.challenger, side(false), side(true)));
                    }
                    format!("exists {} ({})", e.fresh.join(","), parts.join(" and "))
                }
            })
            .collect();
        write!(f, "{}'({}) :- ", self.name, self.head.join(","))?;
        if self.bound.is_empty() {
            f.write_str(&body.join(" and "))
        } else {
            write!(f, "exists {} ({})", self.bound.join(","), body.join(" and "))
        }
    }
}
