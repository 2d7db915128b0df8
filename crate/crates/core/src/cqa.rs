//! Resolved answers as consistent answers under a key constraint.
//!
//! For a single MD `R[Ā]=R[Ā] → R[B̄]⇌R[B̄]` whose sides partition the
//! attributes of `R`, the MRIs of an instance are, as tuple sets, the repairs
//! of a reduced instance under the key `Ā → B̄`.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::instance::{Instance, InstanceBuilder, Position, TupleRef, Value};
use crate::mdspec::{MatchingDependency, MdSet};
use crate::query::{AnswerSet, ConjunctiveQuery, ORACLE_DEPTH};
use crate::resolve::{most_frequent, oracle_explore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyConstraint {
    pub rel: usize,
    pub key: Vec<usize>,
    pub dependent: Vec<usize>,
}

impl KeyConstraint {
    /// The key `Ā → B̄` read off an MD of the reduction shape.
    pub fn from_md(md: &MatchingDependency, arity: usize) -> Result<KeyConstraint> {
        let bad = |m: &str| Err(Error::ReductionShape(m.to_string()));
        if md.left_rel != md.right_rel {
            return bad("the MD relates two relations");
        }
        let mut key = Vec::new();
        for p in &md.lhs {
            if p.left != p.right {
                return bad("a condition pair relates different attributes");
            }
            if !p.sim.is_equality() {
                return bad("a condition uses a similarity other than equality");
            }
            key.push(p.left.attr);
        }
        let mut dependent = Vec::new();
        for p in &md.rhs {
            if p.left != p.right {
                return bad("a matched pair relates different attributes");
            }
            dependent.push(p.left.attr);
        }
        key.sort_unstable();
        dependent.sort_unstable();
        let all: BTreeSet<usize> = key.iter().chain(&dependent).copied().collect();
        if all.len() != key.len() + dependent.len() {
            return bad("key and dependent attributes overlap");
        }
        if all.len() != arity {
            return bad("key and dependent attributes do not cover the relation");
        }
        Ok(KeyConstraint { rel: md.left_rel, key, dependent })
    }

    fn key_of(&self, vals: &[Value]) -> Vec<Value> {
        self.key.iter().map(|&a| vals[a].clone()).collect()
    }

    /// Tuple ids of `d` grouped by key value.
    pub fn groups(&self, d: &Instance) -> BTreeMap<Vec<Value>, Vec<u64>> {
        let mut g: BTreeMap<Vec<Value>, Vec<u64>> = BTreeMap::new();
        for (id, vals) in d.tuples(self.rel) {
            g.entry(self.key_of(vals)).or_default().push(id);
        }
        g
    }

    pub fn is_satisfied(&self, d: &Instance) -> bool {
        self.groups(d).values().all(|ids| {
            let first = d.tuple(TupleRef { rel: self.rel, id: ids[0] }).expect("id from d");
            ids.iter().all(|&id| d.tuple(TupleRef { rel: self.rel, id }) == Some(first))
        })
    }
}

/// `R' = ⋃_k π_Ā R^k × B_1^k × ⋯ × B_n^k` where `B_i^k` holds the maximally
/// frequent `B_i` values of key group `k`. Other relations are copied.
pub fn reduce_instance(d: &Instance, md: &MatchingDependency) -> Result<Instance> {
    let schema = d.schema().clone();
    let kc = KeyConstraint::from_md(md, schema.relation(md.left_rel).arity())?;
    let mut b = InstanceBuilder::new(schema.clone());
    for rel in 0..schema.relations().len() {
        if rel == kc.rel {
            continue;
        }
        for (id, vals) in d.tuples(rel) {
            b.insert(rel, id, vals.to_vec())?;
        }
    }
    let mut next = 0u64;
    for (key, ids) in kc.groups(d) {
        let choices: Vec<Vec<Value>> = kc
            .dependent
            .iter()
            .map(|&a| {
                let ps: Vec<Position> = ids.iter().map(|&id| Position::new(kc.rel, id, a)).collect();
                most_frequent(d, &ps)
            })
            .collect();
        let mut rows: BTreeSet<Vec<Value>> = BTreeSet::new();
        for combo in product(&choices) {
            let mut row = vec![Value::Int(0); kc.key.len() + kc.dependent.len()];
            for (&a, v) in kc.key.iter().zip(&key) {
                row[a] = v.clone();
            }
            for (&a, v) in kc.dependent.iter().zip(combo) {
                row[a] = v;
            }
            rows.insert(row);
        }
        for row in rows {
            b.insert(kc.rel, next, row)?;
            next += 1;
        }
    }
    Ok(b.finish())
}

/// Cartesian product of the lists, first list slowest.
fn product(lists: &[Vec<Value>]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for l in lists {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                l.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone)]
pub struct RepairSet {
    pub repairs: Vec<Instance>,
    pub truncated: bool,
}

/// Every maximal subset of `d` satisfying `keys`: one tuple kept from each
/// key group of every keyed relation, combined in all ways.
pub fn enumerate_repairs(d: &Instance, keys: &[KeyConstraint], limit: usize) -> RepairSet {
    // one choice list per key group; a choice is the tuple to keep
    let mut groups: Vec<(usize, Vec<u64>)> = Vec::new();
    for kc in keys {
        for ids in kc.groups(d).into_values() {
            groups.push((kc.rel, ids));
        }
    }
    let total: u128 = groups.iter().map(|(_, ids)| ids.len() as u128).product();
    let mut repairs = Vec::new();
    let mut idx = vec![0usize; groups.len()];
    loop {
        if repairs.len() == limit {
            break;
        }
        let mut drop: BTreeSet<TupleRef> = BTreeSet::new();
        for ((rel, ids), &k) in groups.iter().zip(&idx) {
            for (j, &id) in ids.iter().enumerate() {
                if j != k {
                    drop.insert(TupleRef { rel: *rel, id });
                }
            }
        }
        repairs.push(d.filter_tuples(|t| !drop.contains(&t)));
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < groups[pos].1.len() {
                break;
            }
            idx[pos] = 0;
        }
        if idx.iter().all(|&k| k == 0) {
            break;
        }
    }
    let truncated = (repairs.len() as u128) < total;
    RepairSet { repairs, truncated }
}

/// Answers of `q` true in every instance of `states`.
pub fn certain_answers<'a>(q: &ConjunctiveQuery, states: impl IntoIterator<Item = &'a Instance>) -> AnswerSet {
    let mut acc: Option<AnswerSet> = None;
    for s in states {
        let here = q.evaluate(s);
        acc = Some(match acc {
            None => here,
            Some(a) => a.intersection(&here).cloned().collect(),
        });
    }
    acc.unwrap_or_default()
}

/// Computes consistent answers under key constraints. Implementations may
/// evaluate a first-order rewriting instead of enumerating repairs.
pub trait ConsistentAnswerer {
    fn consistent_answers(&self, q: &ConjunctiveQuery, d: &Instance, keys: &[KeyConstraint]) -> Result<AnswerSet>;
}

/// Consistent answers by enumerating every repair.
#[derive(Debug, Clone, Copy)]
pub struct RepairEnumeration {
    pub limit: usize,
}

impl ConsistentAnswerer for RepairEnumeration {
    fn consistent_answers(&self, q: &ConjunctiveQuery, d: &Instance, keys: &[KeyConstraint]) -> Result<AnswerSet> {
        let rs = enumerate_repairs(d, keys, self.limit);
        if rs.truncated {
            return Err(Error::Truncated(self.limit));
        }
        Ok(certain_answers(q, &rs.repairs))
    }
}

/// Resolved answers of `q` under `md`, computed as consistent answers on the
/// reduced instance.
pub fn resolved_via_cqa(
    answerer: &dyn ConsistentAnswerer,
    q: &ConjunctiveQuery,
    d: &Instance,
    md: &MatchingDependency,
) -> Result<AnswerSet> {
    let kc = KeyConstraint::from_md(md, d.schema().relation(md.left_rel).arity())?;
    answerer.consistent_answers(q, &reduce_instance(d, md)?, &[kc])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionReport {
    pub mris: usize,
    pub repairs: usize,
    pub sets_equal: bool,
    pub resolved: AnswerSet,
    pub consistent: AnswerSet,
}

impl ReductionReport {
    pub fn holds(&self) -> bool {
        self.sets_equal && self.resolved == self.consistent
    }
}

/// Compares the MRIs of `d`, found by exhaustive search, with the repairs of
/// the reduced instance, as sets of tuple sets, and compares resolved with
/// consistent answers of `q`.
pub fn reduction_report(d: &Instance, md: &MatchingDependency, q: &ConjunctiveQuery) -> Result<ReductionReport> {
    let schema = d.schema().clone();
    let kc = KeyConstraint::from_md(md, schema.relation(md.left_rel).arity())?;
    let mds = MdSet::new(schema, vec![md.clone()])?;
    let rep = oracle_explore(d, &mds, ORACLE_DEPTH)?;
    if !rep.exhausted {
        return Err(Error::GuardExceeded(format!("oracle search deeper than {ORACLE_DEPTH} steps")));
    }
    let mris = rep.result.mris;
    let reduced = reduce_instance(d, md)?;
    let repairs = enumerate_repairs(&reduced, &[kc], usize::MAX).repairs;
    let m_sets: BTreeSet<_> = mris.iter().map(Instance::tuple_set).collect();
    let r_sets: BTreeSet<_> = repairs.iter().map(Instance::tuple_set).collect();
    Ok(ReductionReport {
        mris: mris.len(),
        repairs: repairs.len(),
        sets_equal: m_sets == r_sets,
        resolved: certain_answers(q, &mris),
        consistent: certain_answers(q, &repairs),
    })
}

pub fn check_reduction(d: &Instance, md: &MatchingDependency, q: &ConjunctiveQuery) -> Result<bool> {
    Ok(reduction_report(d, md, q)?.holds())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::instance::Schema;
    use crate::mdspec::parse_mds;
    use crate::query::parse_query;

    fn setup(rows: &[[&str; 2]]) -> (Instance, MatchingDependency) {
        let s = Arc::new(Schema::parse("R(A:text,B:text)").unwrap());
        let mut b = InstanceBuilder::new(s.clone());
        for r in rows {
            b.push("R", r).unwrap();
        }
        let m = parse_mds("R[A]=R[A] -> R[B]<=>R[B]", &s).unwrap();
        (b.finish(), m.mds()[0].clone())
    }

    fn rows_of(d: &Instance) -> Vec<Vec<String>> {
        d.tuples(0).map(|(_, v)| v.iter().map(|x| x.to_string()).collect()).collect()
    }

    #[test]
    fn majority_value_kept() {
        let (d, md) = setup(&[["a", "b"], ["a", "b"], ["a", "c"]]);
        assert_eq!(rows_of(&reduce_instance(&d, &md).unwrap()), vec![vec!["a", "b"]]);
    }

    #[test]
    fn tie_keeps_both_and_gives_two_repairs() {
        let (d, md) = setup(&[["a", "b"], ["a", "c"]]);
        let r = reduce_instance(&d, &md).unwrap();
        assert_eq!(rows_of(&r), vec![vec!["a", "b"], vec!["a", "c"]]);
        let kc = KeyConstraint::from_md(&md, 2).unwrap();
        let rs = enumerate_repairs(&r, std::slice::from_ref(&kc), 100);
        assert_eq!(rs.repairs.len(), 2);
        assert!(!rs.truncated);
        assert!(rs.repairs.iter().all(|x| kc.is_satisfied(x)));
        assert!(enumerate_repairs(&r, &[kc], 1).truncated);
    }

    #[test]
    fn singleton_groups_unchanged() {
        let (d, md) = setup(&[["a", "b"], ["c", "d"]]);
        let r = reduce_instance(&d, &md).unwrap();
        assert_eq!(r.tuple_set(), d.tuple_set());
        let kc = KeyConstraint::from_md(&md, 2).unwrap();
        let rs = enumerate_repairs(&d, &[kc], 10);
        assert_eq!(rs.repairs, vec![d]);
    }

    #[test]
    fn two_tie_groups_give_four_repairs() {
        let (d, md) = setup(&[["a", "b"], ["a", "c"], ["e", "f"], ["e", "g"]]);
        let r = reduce_instance(&d, &md).unwrap();
        let kc = KeyConstraint::from_md(&md, 2).unwrap();
        assert_eq!(enumerate_repairs(&r, &[kc], 100).repairs.len(), 4);
    }

    #[test]
    fn shape_rejected() {
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        let m = parse_mds("R[A]=R[A] -> R[B]<=>R[B]", &s).unwrap();
        let md = &m.mds()[0];
        assert!(matches!(KeyConstraint::from_md(md, 3), Err(Error::ReductionShape(_))));
        let m = parse_mds("R[A]~R[A] -> R[B,C]<=>R[B,C] sim edit(1)", &s).unwrap();
        assert!(matches!(KeyConstraint::from_md(&m.mds()[0], 3), Err(Error::ReductionShape(_))));
    }

    #[test]
    fn reduction_holds_on_small_cases() {
        let (d, md) = setup(&[["a", "b"], ["a", "c"], ["a", "c"], ["e", "f"], ["e", "g"]]);
        let q = parse_query("Q(x,y) :- R(x,y)", d.schema()).unwrap();
        let r = reduction_report(&d, &md, &q).unwrap();
        assert!(r.holds(), "{r:?}");
        assert_eq!(r.mris, 2);
        let via = resolved_via_cqa(&RepairEnumeration { limit: 100 }, &q, &d, &md).unwrap();
        assert_eq!(via, r.resolved);
    }

    #[test]
    fn hardness_shape_query() {
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        let m = parse_mds("R[A]=R[A] -> R[B,C]<=>R[B,C]", &s).unwrap();
        let q = parse_query("Q() :- R(x,y,'c'), R(z,y,'d')", &s).unwrap();
        let mut b = InstanceBuilder::new(s.clone());
        for r in [["1", "u", "c"], ["1", "v", "d"], ["2", "u", "d"], ["2", "v", "c"]] {
            b.push("R", &r).unwrap();
        }
        let d = b.finish();
        let r = reduction_report(&d, &m.mds()[0], &q).unwrap();
        assert!(r.holds(), "{r:?}");
    }
}
