//! The enforcement graph, modifiability and satisfaction of instance pairs.

use std::collections::BTreeSet;

use crate::closure::{similar_pairs, Partition, PartitionBuilder};
use crate::error::Result;
use crate::instance::{diff, Instance, Position, TupleRef};
use crate::mdspec::{MdSet, RhsPair};

/// Vertices are positions; `(t1,C)` and `(t2,E)` are adjacent when `t1` and
/// `t2` satisfy the LHS of an MD that matches `C` with `E`.
#[derive(Debug, Clone)]
pub struct EnforcementGraph {
    edges: Vec<Edge>,
    components: Partition<Position>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub md: usize,
    pub left: Position,
    pub right: Position,
}

impl EnforcementGraph {
    pub fn build(d: &Instance, mds: &MdSet) -> EnforcementGraph {
        let mut edges = Vec::new();
        let mut b = PartitionBuilder::new();
        for (i, md) in mds.mds().iter().enumerate() {
            for (i1, i2) in similar_pairs(d, md) {
                for p in &md.rhs {
                    let left = Position::new(md.left_rel, i1, p.left.attr);
                    let right = Position::new(md.right_rel, i2, p.right.attr);
                    b.union(left, right);
                    if left != right {
                        edges.push(Edge { md: i, left, right });
                    }
                }
            }
        }
        EnforcementGraph { edges, components: b.finish() }
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Connected components over positions that occur in some edge.
    pub fn components(&self) -> &[Vec<Position>] {
        self.components.classes()
    }

    /// Components whose positions do not all hold one value in `d`.
    pub fn dirty_components<'a>(&'a self, d: &'a Instance) -> impl Iterator<Item = &'a Vec<Position>> + 'a {
        self.components().iter().filter(move |c| {
            let first = d.value(c[0]);
            c[1..].iter().any(|p| d.value(*p) != first)
        })
    }
}

/// Positions that the MDs allow to change in `d`: the least fixed point of
/// the direct rule (an LHS-similar pair disagrees on a matched pair) and the
/// propagation rule (an LHS-similar partner's matched position is
/// modifiable). This is exactly the union of the dirty components.
pub fn modifiable_positions(d: &Instance, mds: &MdSet) -> BTreeSet<Position> {
    let g = EnforcementGraph::build(d, mds);
    g.dirty_components(d).flatten().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// `left` and `right` are LHS-similar in the first instance but differ on
    /// `pair` in the second.
    UnequalMatch { md: usize, left: TupleRef, right: TupleRef, pair: RhsPair },
    /// A non-modifiable position changed.
    IllegalChange { position: Position },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatisfactionReport {
    pub violations: Vec<Violation>,
}

impl SatisfactionReport {
    pub fn verdict(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Whether `(d, d2)` satisfies every MD of `mds`.
pub fn check_pair(d: &Instance, d2: &Instance, mds: &MdSet) -> Result<SatisfactionReport> {
    let changed = diff(d, d2)?;
    let mut violations = Vec::new();
    for (i, md) in mds.mds().iter().enumerate() {
        for (i1, i2) in similar_pairs(d, md) {
            let left = TupleRef { rel: md.left_rel, id: i1 };
            let right = TupleRef { rel: md.right_rel, id: i2 };
            let (v1, v2) = (d2.tuple(left).expect("same ids"), d2.tuple(right).expect("same ids"));
            for p in &md.rhs {
                if v1[p.left.attr] != v2[p.right.attr] {
                    violations.push(Violation::UnequalMatch { md: i, left, right, pair: *p });
                }
            }
        }
    }
    if !changed.is_empty() {
        let modifiable = modifiable_positions(d, mds);
        for p in changed.iter() {
            if !modifiable.contains(p) {
                violations.push(Violation::IllegalChange { position: *p });
            }
        }
    }
    Ok(SatisfactionReport { violations })
}

/// `(d, d) ⊨ M`.
pub fn is_stable(d: &Instance, mds: &MdSet) -> bool {
    check_pair(d, d, mds).expect("an instance is comparable with itself").verdict()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FanCondition {
    /// Matched attributes are equal after the update.
    Match,
    /// The original similarity still holds after the update.
    SimilarityPreserved,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FanViolation {
    pub md: usize,
    pub left: TupleRef,
    pub right: TupleRef,
    pub condition: FanCondition,
}

/// Evaluates the older satisfaction notion, in which every pair similar in
/// `d` must be matched in `d2` and stay similar there. Diagnostic only.
pub fn check_fan_semantics(d: &Instance, d2: &Instance, mds: &MdSet) -> Result<Vec<FanViolation>> {
    diff(d, d2)?;
    let mut out = Vec::new();
    for (i, md) in mds.mds().iter().enumerate() {
        for (i1, i2) in similar_pairs(d, md) {
            let left = TupleRef { rel: md.left_rel, id: i1 };
            let right = TupleRef { rel: md.right_rel, id: i2 };
            let (v1, v2) = (d2.tuple(left).expect("same ids"), d2.tuple(right).expect("same ids"));
            if md.rhs.iter().any(|p| v1[p.left.attr] != v2[p.right.attr]) {
                out.push(FanViolation { md: i, left, right, condition: FanCondition::Match });
            }
            if !md.lhs_holds(v1, v2) {
                out.push(FanViolation { md: i, left, right, condition: FanCondition::SimilarityPreserved });
            }
        }
    }
    Ok(out)
}
