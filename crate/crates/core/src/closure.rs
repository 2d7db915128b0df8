//! Equivalence closures over tuples, attributes and (tuple, attribute)
//! positions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::instance::{AttrRef, Instance, Position, TupleRef};
use crate::mdspec::{MatchingDependency, MdClass, MdSet, RhsPair};
use crate::unionfind::UnionFind;

/// Accumulates elements and merges before freezing into a [`Partition`].
#[derive(Debug, Clone)]
pub struct PartitionBuilder<T> {
    index: BTreeMap<T, usize>,
    elems: Vec<T>,
    uf: UnionFind,
}

impl<T: Ord + Clone> Default for PartitionBuilder<T> {
    fn default() -> Self {
        PartitionBuilder { index: BTreeMap::new(), elems: Vec::new(), uf: UnionFind::new(0) }
    }
}

impl<T: Ord + Clone> PartitionBuilder<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: T) -> usize {
        if let Some(&i) = self.index.get(&x) {
            return i;
        }
        let i = self.uf.push();
        self.index.insert(x.clone(), i);
        self.elems.push(x);
        i
    }

    pub fn union(&mut self, a: T, b: T) {
        let (i, j) = (self.add(a), self.add(b));
        self.uf.union(i, j);
    }

    pub fn finish(mut self) -> Partition<T> {
        let roots: Vec<usize> = (0..self.elems.len()).map(|i| self.uf.find(i)).collect();
        let mut by_root: BTreeMap<usize, Vec<T>> = BTreeMap::new();
        for (e, r) in self.elems.into_iter().zip(roots) {
            by_root.entry(r).or_default().push(e);
        }
        let mut classes: Vec<Vec<T>> = by_root
            .into_values()
            .map(|mut c| {
                c.sort();
                c
            })
            .collect();
        classes.sort();
        let class_of = classes.iter().enumerate().flat_map(|(k, c)| c.iter().map(move |x| (x.clone(), k))).collect();
        Partition { class_of, classes }
    }
}

/// A finished partition. Classes are sorted internally and ordered by their
/// smallest member, so two partitions are equal iff they group the same
/// elements the same way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition<T: Ord> {
    class_of: BTreeMap<T, usize>,
    classes: Vec<Vec<T>>,
}

pub type EquivPartition = Partition<TupleRef>;
pub type AttrPartition = Partition<AttrRef>;
pub type TaPartition = Partition<Position>;

impl<T: Ord + Clone> Partition<T> {
    pub fn classes(&self) -> &[Vec<T>] {
        &self.classes
    }

    pub fn class_of(&self, x: &T) -> Option<usize> {
        self.class_of.get(x).copied()
    }

    /// Whether `a` and `b` are in one class. Reflexive even for elements
    /// outside the universe.
    pub fn same(&self, a: &T, b: &T) -> bool {
        a == b || matches!((self.class_of(a), self.class_of(b)), (Some(x), Some(y)) if x == y)
    }

    pub fn elements(&self) -> impl Iterator<Item = &T> {
        self.class_of.keys()
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Ordered pairs `(t1, t2)` with `t1` in the MD's left relation, `t2` in its
/// right relation and `t1[Ā] ≈ t2[B̄]`. When both relations coincide, the
/// pair of a tuple with itself is included.
pub fn similar_pairs(d: &Instance, md: &MatchingDependency) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for (i1, v1) in d.tuples(md.left_rel) {
        for (i2, v2) in d.tuples(md.right_rel) {
            if md.lhs_holds(v1, v2) {
                out.push((i1, i2));
            }
        }
    }
    out
}

/// Tuples of both relations of `md`, grouped under the transitive closure of
/// the LHS similarity.
pub fn tuple_closure(d: &Instance, md: &MatchingDependency) -> EquivPartition {
    let mut b = PartitionBuilder::new();
    for rel in [md.left_rel, md.right_rel] {
        for (id, _) in d.tuples(rel) {
            b.add(TupleRef { rel, id });
        }
    }
    for (i1, i2) in similar_pairs(d, md) {
        b.union(TupleRef { rel: md.left_rel, id: i1 }, TupleRef { rel: md.right_rel, id: i2 });
    }
    b.finish()
}

/// Join of several partitions: the finest partition coarser than each input.
/// Elements missing from some inputs are singletons there.
pub fn closure_of_set<T: Ord + Clone>(parts: &[Partition<T>]) -> Partition<T> {
    let mut b = PartitionBuilder::new();
    for p in parts {
        for class in p.classes() {
            let first = class[0].clone();
            b.add(first.clone());
            for x in &class[1..] {
                b.union(first.clone(), x.clone());
            }
        }
    }
    b.finish()
}

/// Changeable attributes, grouped by the RHS match pairs of `mds`.
pub fn attribute_closure(mds: &MdSet) -> AttrPartition {
    let mut b = PartitionBuilder::new();
    for md in mds.mds() {
        for p in &md.rhs {
            b.union(p.left, p.right);
        }
    }
    b.finish()
}

/// RHS pairs that link positions for MD `i`: its own, or in HSC mode those
/// of every MD in the same connected component over the same two relations.
fn linked_pairs(mds: &MdSet, i: usize, hsc_mode: bool) -> Vec<RhsPair> {
    let md = &mds.mds()[i];
    if !hsc_mode {
        return md.rhs.clone();
    }
    let comp = mds.components();
    let mut out: Vec<RhsPair> = Vec::new();
    for (j, other) in mds.mds().iter().enumerate() {
        if comp[j] != comp[i] {
            continue;
        }
        let oriented: Vec<RhsPair> = if (other.left_rel, other.right_rel) == (md.left_rel, md.right_rel) {
            other.rhs.clone()
        } else if (other.right_rel, other.left_rel) == (md.left_rel, md.right_rel) {
            other.rhs.iter().map(|p| RhsPair { left: p.right, right: p.left }).collect()
        } else {
            continue;
        };
        for p in oriented {
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// TA of MD `i`: the closure of `(t1,C) ≈' (t2,E)` over the positions of
/// changeable attributes.
pub fn md_tuple_attribute_closure(d: &Instance, mds: &MdSet, i: usize, hsc_mode: bool) -> TaPartition {
    let md = &mds.mds()[i];
    let mut b = PartitionBuilder::new();
    for a in mds.changeable_attrs() {
        for p in d.attr_positions(a) {
            b.add(p);
        }
    }
    let pairs = linked_pairs(mds, i, hsc_mode);
    for (i1, i2) in similar_pairs(d, md) {
        for p in &pairs {
            b.union(Position::new(md.left_rel, i1, p.left.attr), Position::new(md.right_rel, i2, p.right.attr));
        }
    }
    b.finish()
}

/// TS: the join of the per-MD tuple-attribute closures. Without `hsc_mode`
/// the MD set must be non-interacting; with it, HSC or a simple cycle.
pub fn tuple_attribute_closure(d: &Instance, mds: &MdSet, hsc_mode: bool) -> Result<TaPartition> {
    let class = mds.classify();
    let ok = match class {
        MdClass::NonInteracting => true,
        MdClass::SimpleCycle | MdClass::Hsc => hsc_mode,
        MdClass::Dag | MdClass::GeneralInteracting => false,
    };
    if !ok {
        return Err(Error::UnsupportedClass(class));
    }
    Ok(tuple_attribute_closure_unchecked(d, mds, hsc_mode))
}

pub(crate) fn tuple_attribute_closure_unchecked(d: &Instance, mds: &MdSet, hsc_mode: bool) -> TaPartition {
    let mut parts: Vec<TaPartition> = (0..mds.len()).map(|i| md_tuple_attribute_closure(d, mds, i, hsc_mode)).collect();
    if parts.is_empty() {
        return PartitionBuilder::new().finish();
    }
    if parts.len() == 1 {
        return parts.pop().unwrap();
    }
    closure_of_set(&parts)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::instance::{InstanceBuilder, Schema};
    use crate::mdspec::parse_mds;

    fn t(rel: usize, id: u64) -> TupleRef {
        TupleRef { rel, id }
    }

    fn inst(schema: &Arc<Schema>, rel: &str, rows: &[&[&str]]) -> Instance {
        let mut b = InstanceBuilder::new(schema.clone());
        for r in rows {
            b.push(rel, r).unwrap();
        }
        b.finish()
    }

    #[test]
    fn tuple_closure_pair_example() {
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        let d = inst(&s, "R", &[&["a", "b", "d"], &["a", "c", "e"], &["a", "b", "e"]]);
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]", &s).unwrap();
        let p = tuple_closure(&d, &m.mds()[0]);
        assert_eq!(p.classes(), &[vec![t(0, 0), t(0, 1), t(0, 2)]]);
    }

    #[test]
    fn tuple_closure_no_similar_pairs() {
        let s = Arc::new(Schema::parse("R(A:text,B:text)").unwrap());
        let d = inst(&s, "R", &[&["a", "x"], &["b", "x"], &["c", "x"]]);
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]", &s).unwrap();
        let p = tuple_closure(&d, &m.mds()[0]);
        assert_eq!(p.num_classes(), 3);
    }

    #[test]
    fn tuple_closure_exponential_example() {
        let s = Arc::new(Schema::parse("R(A:text,B:text)").unwrap());
        let d = inst(&s, "R", &[&["a1", "b1"], &["a2", "b2"], &["a3", "b3"], &["a4", "b4"]]);
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B] sim pairs{a1~a2, a3~a4}", &s).unwrap();
        let p = tuple_closure(&d, &m.mds()[0]);
        assert_eq!(p.classes(), &[vec![t(0, 0), t(0, 1)], vec![t(0, 2), t(0, 3)]]);
    }

    #[test]
    fn closure_of_set_cycle_example() {
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        let d = inst(&s, "R", &[&["a1", "d1", "f"], &["a2", "e2", "g"], &["b1", "e1", "h"], &["b2", "d2", "i"]]);
        let m = parse_mds(
            "R[A]~R[A] -> R[B]<=>R[B] sim pairs{a1~a2, b1~b2}\nR[B]~R[B] -> R[A]<=>R[A] sim pairs{d1~d2, e1~e2}",
            &s,
        )
        .unwrap();
        let t1 = tuple_closure(&d, &m.mds()[0]);
        let t2 = tuple_closure(&d, &m.mds()[1]);
        assert_eq!(t1.classes(), &[vec![t(0, 0), t(0, 1)], vec![t(0, 2), t(0, 3)]]);
        assert_eq!(t2.classes(), &[vec![t(0, 0), t(0, 3)], vec![t(0, 1), t(0, 2)]]);
        let j = closure_of_set(&[t1.clone(), t2]);
        assert_eq!(j.classes(), &[vec![t(0, 0), t(0, 1), t(0, 2), t(0, 3)]]);
        assert_eq!(closure_of_set(std::slice::from_ref(&t1)), t1);
    }

    #[test]
    fn closure_of_disjoint_partitions() {
        let mut a = PartitionBuilder::new();
        a.union(1, 2);
        let mut b = PartitionBuilder::new();
        b.union(3, 4);
        let j = closure_of_set(&[a.finish(), b.finish()]);
        assert_eq!(j.classes(), &[vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn attribute_closure_three_md_example() {
        let s = Arc::new(
            Schema::parse(
                "R(A:text,C:text)\nS(B:text,D:text,E:text,G:text,K:text)\nT(F:text,H:text,J:text,L:text,M:text,N:text,P:text)",
            )
            .unwrap(),
        );
        let m = parse_mds(
            "R[A]~S[B] -> R[C]<=>S[D]\nS[E]~T[F], S[G]~T[H] -> S[D,K]<=>T[J,L]\nT[F]~T[H] -> T[L,N]<=>T[M,P]",
            &s,
        )
        .unwrap();
        let p = attribute_closure(&m);
        let names: Vec<Vec<String>> = p.classes().iter().map(|c| c.iter().map(|a| s.attr_name(*a)).collect()).collect();
        assert_eq!(
            names,
            vec![
                vec!["R[C]".to_string(), "S[D]".into(), "T[J]".into()],
                vec!["S[K]".into(), "T[L]".into(), "T[M]".into()],
                vec!["T[N]".into(), "T[P]".into()],
            ]
        );
    }

    #[test]
    fn attribute_closure_single_and_chain() {
        let s = Arc::new(Schema::parse("R(A:text,B:text)").unwrap());
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]", &s).unwrap();
        assert_eq!(attribute_closure(&m).classes(), &[vec![AttrRef { rel: 0, attr: 1 }]]);

        let s = Arc::new(Schema::parse("R(A:text,B:text)\nS(E:text,F:text)\nU(H:text,I:text)").unwrap());
        let m = parse_mds("R[A]~S[E] -> R[B]<=>S[F]\nS[E]~U[H] -> S[F]<=>U[I]", &s).unwrap();
        let p = attribute_closure(&m);
        assert_eq!(p.num_classes(), 1);
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn ta_closure_count_example() {
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        let d = inst(&s, "R", &[&["a1", "b1", "c1"], &["a1", "b2", "c2"], &["a1", "b2", "c3"]]);
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]", &s).unwrap();
        let p = tuple_attribute_closure(&d, &m, false).unwrap();
        assert_eq!(p.classes(), &[vec![Position::new(0, 0, 1), Position::new(0, 1, 1), Position::new(0, 2, 1)]]);
        let empty = Instance::empty(s.clone());
        assert!(tuple_attribute_closure(&empty, &m, false).unwrap().is_empty());
    }

    #[test]
    fn ta_closure_cycle_example_hsc_mode() {
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        let d = inst(&s, "R", &[&["a1", "d1", "f"], &["a2", "e2", "g"], &["b1", "e1", "h"], &["b2", "d2", "i"]]);
        let m = parse_mds(
            "R[A]~R[A] -> R[B]<=>R[B] sim pairs{a1~a2, b1~b2}\nR[B]~R[B] -> R[A]<=>R[A] sim pairs{d1~d2, e1~e2}",
            &s,
        )
        .unwrap();
        assert!(matches!(tuple_attribute_closure(&d, &m, false), Err(Error::UnsupportedClass(_))));
        let p = tuple_attribute_closure(&d, &m, true).unwrap();
        // all A positions form one class and all B positions another
        assert_eq!(p.num_classes(), 2);
        let a: Vec<Position> = (0..4).map(|i| Position::new(0, i, 0)).collect();
        let b: Vec<Position> = (0..4).map(|i| Position::new(0, i, 1)).collect();
        assert_eq!(p.classes(), &[a, b]);
    }
}
