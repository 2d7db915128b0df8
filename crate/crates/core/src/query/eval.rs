//! Interpreter for rewritten queries.
//!
//! `TS` atoms are read against the tuple-attribute closure of the instance.
//! A Count expression counts distinct bindings of its tuple, where a binding
//! includes the hidden tuple id, so duplicate rows count once each.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::rewrite::{Block, CountTerm, Expansion, RewrittenQuery, ValueCheck};
use super::{unify, AnswerSet, Term};
use crate::closure::{tuple_attribute_closure_unchecked, TaPartition};
use crate::instance::{Instance, Position, Value};
use crate::mdspec::MdSet;

/// Work done by one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub count_evaluations: u64,
    pub tuple_visits: u64,
}

pub fn eval_rewritten(rq: &RewrittenQuery, d: &Instance, mds: &MdSet) -> AnswerSet {
    eval_rewritten_with_stats(rq, d, mds).0
}

pub fn eval_rewritten_with_stats(rq: &RewrittenQuery, d: &Instance, mds: &MdSet) -> (AnswerSet, EvalStats) {
    let ts = tuple_attribute_closure_unchecked(d, mds, rq.hsc_mode);
    let mut ev = Evaluator { rq, d, ts, stats: EvalStats::default(), memo: HashMap::new() };
    let mut out = AnswerSet::new();
    let mut env = BTreeMap::new();
    ev.blocks(0, &mut env, &mut out);
    (out, ev.stats)
}

struct Evaluator<'a> {
    rq: &'a RewrittenQuery,
    d: &'a Instance,
    ts: TaPartition,
    stats: EvalStats,
    memo: HashMap<(Position, Value), bool>,
}

type Env = BTreeMap<String, Value>;

impl Evaluator<'_> {
    fn blocks(&mut self, i: usize, env: &mut Env, out: &mut AnswerSet) {
        if i == self.rq.blocks.len() {
            out.insert(self.rq.head.iter().map(|h| env[h].clone()).collect());
            return;
        }
        let d = self.d;
        match &self.rq.blocks[i] {
            Block::Plain(atom) => {
                for (_, vals) in d.tuples(atom.rel) {
                    self.stats.tuple_visits += 1;
                    let mut bound = Vec::new();
                    if unify(&atom.terms, vals, env, &mut bound) {
                        self.blocks(i + 1, env, out);
                    }
                    for v in bound {
                        env.remove(&v);
                    }
                }
            }
            Block::Expanded(e) => {
                for (id, vals) in d.tuples(e.renamed.rel) {
                    self.stats.tuple_visits += 1;
                    let mut bound = Vec::new();
                    if unify(&e.renamed.terms, vals, env, &mut bound) {
                        self.checks(i, e, id, 0, env, out);
                    }
                    for v in bound {
                        env.remove(&v);
                    }
                }
            }
        }
    }

    fn checks(&mut self, i: usize, e: &Expansion, id: u64, k: usize, env: &mut Env, out: &mut AnswerSet) {
        let Some(c) = e.checks.get(k) else {
            self.blocks(i + 1, env, out);
            return;
        };
        let p = Position::new(c.attr.rel, id, c.attr.attr);
        match &c.target {
            Term::Const(v) => {
                if self.holds(p, c, v) {
                    self.checks(i, e, id, k + 1, env, out);
                }
            }
            Term::Var(y) => match env.get(y).cloned() {
                Some(v) => {
                    if self.holds(p, c, &v) {
                        self.checks(i, e, id, k + 1, env, out);
                    }
                }
                None => {
                    // only values in the class can have a positive count
                    let cands: BTreeSet<Value> = match self.ts.class_of(&p) {
                        Some(ci) => self.ts.classes()[ci].iter().map(|q| self.d.value(*q).clone()).collect(),
                        None => [self.d.value(p).clone()].into_iter().collect(),
                    };
                    for v in cands {
                        if self.holds(p, c, &v) {
                            env.insert(y.clone(), v);
                            self.checks(i, e, id, k + 1, env, out);
                            env.remove(y);
                        }
                    }
                }
            },
        }
    }

    /// `forall w [Σ C1(v) > Σ C2(v, w)]` for the tuple owning `p`. Values
    /// outside the member attributes give `C2 = 0`, so they need `C1 > 0`.
    fn holds(&mut self, p: Position, c: &ValueCheck, v: &Value) -> bool {
        if let Some(&r) = self.memo.get(&(p, v.clone())) {
            return r;
        }
        let c1: usize = c.sums.iter().map(|t| self.count(p, c, t, v, None)).sum();
        let mut ok = c1 > 0;
        if ok {
            let adom: BTreeSet<Value> =
                c.sums.iter().flat_map(|t| self.d.attr_positions(t.member)).map(|q| self.d.value(q).clone()).collect();
            for w in adom.iter().filter(|w| *w != v) {
                let c2: usize = c.sums.iter().map(|t| self.count(p, c, t, v, Some(w))).sum();
                if c1 <= c2 {
                    ok = false;
                    break;
                }
            }
        }
        self.memo.insert((p, v.clone()), ok);
        ok
    }

    /// `Count{ū | TS(v̄', R_i[A], ū, R_j[B_k]) ∧ R_j(ū) [∧ w ≠ v]}` with the
    /// tuple of `v̄'` fixed by `p`.
    fn count(&mut self, p: Position, c: &ValueCheck, t: &CountTerm, v: &Value, w: Option<&Value>) -> usize {
        self.stats.count_evaluations += 1;
        let mut env = Env::new();
        if let Term::Var(y) = &c.target {
            env.insert(y.clone(), v.clone());
        }
        let args = match w {
            Some(w) => {
                if w == v {
                    return 0;
                }
                env.insert(c.challenger.clone(), w.clone());
                &t.challenger_locals
            }
            None => &t.locals,
        };
        let mut n = 0;
        for (uid, vals) in self.d.tuples(t.member.rel) {
            self.stats.tuple_visits += 1;
            let mut bound = Vec::new();
            if unify(args, vals, &mut env, &mut bound) {
                if self.ts.same(&p, &Position::new(t.member.rel, uid, t.member.attr)) {
                    n += 1;
                }
                for b in bound {
                    env.remove(&b);
                }
            }
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::instance::{InstanceBuilder, Schema};
    use crate::mdspec::parse_mds;
    use crate::query::{parse_query, rewrite};

    fn count_example() -> (Instance, MdSet, RewrittenQuery) {
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        let mut b = InstanceBuilder::new(s.clone());
        for r in [["a1", "b1", "c1"], ["a1", "b2", "c2"], ["a1", "b2", "c3"]] {
            b.push("R", &r).unwrap();
        }
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]", &s).unwrap();
        let q = parse_query("Q(x,y,z) :- R(x,y,z)", &s).unwrap();
        let rq = rewrite(&q, &m).unwrap();
        (b.finish(), m, rq)
    }

    fn row(v: &[&str]) -> Vec<Value> {
        v.iter().map(|s| Value::text(*s)).collect()
    }

    #[test]
    fn count_example_answers() {
        let (d, m, rq) = count_example();
        let got = eval_rewritten(&rq, &d, &m);
        let want: AnswerSet =
            [row(&["a1", "b2", "c1"]), row(&["a1", "b2", "c2"]), row(&["a1", "b2", "c3"])].into_iter().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn empty_instance() {
        let (d, m, rq) = count_example();
        let e = Instance::empty(d.schema().clone());
        assert!(eval_rewritten(&rq, &e, &m).is_empty());
    }

    #[test]
    fn tie_gives_no_answer_and_duplicates_count() {
        let s = Arc::new(Schema::parse("R(A:text,B:text)").unwrap());
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]", &s).unwrap();
        let q = parse_query("Q(x,y) :- R(x,y)", &s).unwrap();
        let rq = rewrite(&q, &m).unwrap();
        let mut b = InstanceBuilder::new(s.clone());
        b.push("R", &["a", "b"]).unwrap();
        b.push("R", &["a", "c"]).unwrap();
        assert!(eval_rewritten(&rq, &b.finish(), &m).is_empty());
        let mut b = InstanceBuilder::new(s.clone());
        b.push("R", &["a", "b"]).unwrap();
        b.push("R", &["a", "b"]).unwrap();
        b.push("R", &["a", "c"]).unwrap();
        let got = eval_rewritten(&rq, &b.finish(), &m);
        assert_eq!(got, [row(&["a", "b"])].into_iter().collect());
    }

    #[test]
    fn stats_are_counted() {
        let (d, m, rq) = count_example();
        let (_, st) = eval_rewritten_with_stats(&rq, &d, &m);
        assert!(st.count_evaluations > 0);
        assert!(st.tuple_visits >= 3);
    }
}
