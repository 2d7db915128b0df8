//! Closed-form MRI computation for non-interacting, simple-cycle and HSC sets.

use std::collections::{BTreeMap, HashSet};

use log::debug;

use super::enforcement::is_stable;
use crate::closure::{closure_of_set, tuple_attribute_closure, tuple_closure, Partition, PartitionBuilder};
use crate::error::{Error, Result};
use crate::instance::{diff, ChangeSet, Instance, Position, Value};
use crate::mdspec::{MdClass, MdSet};

pub const DEFAULT_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
pub struct ResolutionResult {
    pub mris: Vec<Instance>,
    pub changes: Vec<ChangeSet>,
    pub min_changes: usize,
    pub truncated: bool,
}

impl ResolutionResult {
    pub(crate) fn from_candidates(d: &Instance, cands: Vec<Instance>, truncated: bool) -> Result<ResolutionResult> {
        let mut seen = HashSet::new();
        let mut mris = Vec::new();
        let mut changes = Vec::new();
        for c in cands {
            if seen.insert(c.clone()) {
                changes.push(diff(d, &c)?);
                mris.push(c);
            }
        }
        let min_changes = changes.iter().map(ChangeSet::len).min().unwrap_or(0);
        Ok(ResolutionResult { mris, changes, min_changes, truncated })
    }
}

/// Groups of positions that an MRI sets to one common value, in canonical
/// order. Singletons are dropped.
pub fn value_groups(d: &Instance, mds: &MdSet) -> Result<Vec<Vec<Position>>> {
    let class = mds.classify();
    let part: Partition<Position> = match class {
        MdClass::SimpleCycle => simple_cycle_groups(d, mds),
        MdClass::NonInteracting => tuple_attribute_closure(d, mds, false)?,
        MdClass::Hsc => tuple_attribute_closure(d, mds, true)?,
        other => return Err(Error::UnsupportedClass(other)),
    };
    Ok(part.classes().iter().filter(|c| c.len() > 1).cloned().collect())
}

/// For each class `E` of the join of the per-MD tuple closures and each
/// corresponding pair `(A, B)`: the `A` positions of `E`'s left-relation
/// tuples together with the `B` positions of its right-relation tuples.
fn simple_cycle_groups(d: &Instance, mds: &MdSet) -> Partition<Position> {
    let parts: Vec<_> = mds.mds().iter().map(|m| tuple_closure(d, m)).collect();
    let t = closure_of_set(&parts);
    let mut b = PartitionBuilder::new();
    for md in mds.mds() {
        let pairs = md.lhs.iter().map(|p| (p.left, p.right)).chain(md.rhs.iter().map(|p| (p.left, p.right)));
        for (a, bb) in pairs {
            for class in t.classes() {
                let mut members = class
                    .iter()
                    .filter(|tr| tr.rel == md.left_rel)
                    .map(|tr| Position::new(tr.rel, tr.id, a.attr))
                    .chain(
                        class
                            .iter()
                            .filter(|tr| tr.rel == md.right_rel)
                            .map(|tr| Position::new(tr.rel, tr.id, bb.attr)),
                    );
                if let Some(first) = members.next() {
                    b.add(first);
                    for p in members {
                        b.union(first, p);
                    }
                }
            }
        }
    }
    b.finish()
}

/// The values of maximal frequency among `positions`, in storage order.
pub fn most_frequent(d: &Instance, positions: &[Position]) -> Vec<Value> {
    let mut counts: BTreeMap<&Value, usize> = BTreeMap::new();
    for p in positions {
        *counts.entry(d.value(*p)).or_insert(0) += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    counts.into_iter().filter(|(_, c)| *c == max).map(|(v, _)| v.clone()).collect()
}

/// All MRIs of `d`, by choosing a most frequent value for every group.
/// Every candidate is checked for stability; a failure means the closed form
/// does not describe this input and is reported rather than dropped.
pub fn compute_mris(d: &Instance, mds: &MdSet, limit: usize) -> Result<ResolutionResult> {
    let groups = value_groups(d, mds)?;
    let choices: Vec<Vec<Value>> = groups.iter().map(|g| most_frequent(d, g)).collect();
    let total: u128 = choices.iter().map(|c| c.len() as u128).product();
    debug!("{} value groups, {total} combinations", groups.len());

    let mut cands = Vec::new();
    let mut idx = vec![0usize; choices.len()];
    loop {
        if cands.len() == limit {
            break;
        }
        let updates =
            groups.iter().zip(&choices).zip(&idx).flat_map(|((g, c), &k)| g.iter().map(move |p| (*p, c[k].clone())));
        cands.push(d.with_updates(updates));
        // odometer over the choice lists, last group fastest
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
        if idx.iter().all(|&k| k == 0) {
            break;
        }
    }
    let truncated = (cands.len() as u128) < total;
    let unstable = cands.iter().filter(|c| !is_stable(c, mds)).count();
    if unstable > 0 {
        return Err(Error::ClosedFormViolated { unstable, candidates: cands.len() });
    }
    ResolutionResult::from_candidates(d, cands, truncated)
}

/// Polynomial check that `candidate` has the closed MRI form for `d`: it is
/// stable, differs from `d` only inside value groups, and gives each group a
/// single value that is maximally frequent there in `d`.
pub fn is_closed_form_mri(d: &Instance, candidate: &Instance, mds: &MdSet) -> Result<bool> {
    let groups = value_groups(d, mds)?;
    let changed = diff(d, candidate)?;
    let mut covered = HashSet::new();
    for g in &groups {
        let v = candidate.value(g[0]);
        if g.iter().any(|p| candidate.value(*p) != v) || !most_frequent(d, g).contains(v) {
            return Ok(false);
        }
        covered.extend(g.iter().copied());
    }
    if changed.iter().any(|p| !covered.contains(p)) {
        return Ok(false);
    }
    Ok(is_stable(candidate, mds))
}
