//! The level-monotone chase that produces one resolved instance.

use std::cmp::Ordering;
use std::collections::HashMap;

use log::{debug, trace};

use super::enforcement::EnforcementGraph;
use crate::error::{Error, Result};
use crate::instance::{Instance, Position, Value};
use crate::mdspec::{DomainGroups, MdSet};

/// Value counts per domain group. The level of a position is the count of its
/// value within its group.
#[derive(Debug, Clone)]
pub struct Levels {
    counts: HashMap<(usize, Value), usize>,
}

impl Levels {
    pub fn of(d: &Instance, groups: &DomainGroups) -> Levels {
        let mut counts = HashMap::new();
        for p in d.positions() {
            *counts.entry((groups.group_of(p.attr_ref()), d.value(p).clone())).or_insert(0) += 1;
        }
        Levels { counts }
    }

    pub fn level(&self, group: usize, v: &Value) -> usize {
        self.counts.get(&(group, v.clone())).copied().unwrap_or(0)
    }

    /// Sum of the levels of all positions: Σ count².
    pub fn sum(&self) -> u64 {
        self.counts.values().map(|&c| (c * c) as u64).sum()
    }

    fn replace(&mut self, group: usize, old: &Value, new: &Value) {
        if let Some(c) = self.counts.get_mut(&(group, old.clone())) {
            *c -= 1;
        }
        *self.counts.entry((group, new.clone())).or_insert(0) += 1;
    }
}

/// Level sum of `d` under the domain groups of `mds`.
pub fn level_sum(d: &Instance, mds: &MdSet) -> u64 {
    Levels::of(d, &mds.domain_groups()).sum()
}

/// Upper bound on the number of non-identity chase steps from `d`: each step
/// raises the level sum by at least two, and the sum never exceeds Σ n_g²
/// over groups of n_g positions.
pub fn step_bound(d: &Instance, mds: &MdSet) -> u64 {
    let groups = mds.domain_groups();
    let mut sizes: HashMap<usize, u64> = HashMap::new();
    for p in d.positions() {
        *sizes.entry(groups.group_of(p.attr_ref())).or_insert(0) += 1;
    }
    let max: u64 = sizes.values().map(|n| n * n).sum();
    (max - level_sum(d, mds)) / 2 + 1
}

/// Chooses the common value of a dirty component.
pub trait ValuePolicy {
    fn choose(&self, d: &Instance, component: &[Position], group: usize, levels: &Levels) -> Value;
}

/// The value of highest level, ties going to the largest value.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighestLevel;

impl ValuePolicy for HighestLevel {
    fn choose(&self, d: &Instance, component: &[Position], group: usize, levels: &Levels) -> Value {
        let mut best: Option<(&Value, usize)> = None;
        for p in component {
            let v = d.value(*p);
            let l = levels.level(group, v);
            let better = match best {
                None => true,
                Some((bv, bl)) => {
                    l > bl || (l == bl && v.try_cmp(bv).unwrap_or_else(|_| v.cmp(bv)) == Ordering::Greater)
                }
            };
            if better {
                best = Some((v, l));
            }
        }
        best.expect("components are non-empty").0.clone()
    }
}

/// One chase step: every dirty component of the enforcement graph of `d` is
/// set to a common value. Components are processed in canonical order and
/// levels are refreshed after each one, so every component sees the counts
/// left by its predecessors.
pub fn chase_step(d: &Instance, mds: &MdSet, policy: &dyn ValuePolicy) -> Instance {
    let groups = mds.domain_groups();
    let graph = EnforcementGraph::build(d, mds);
    let mut levels = Levels::of(d, &groups);
    let mut current = d.clone();
    for comp in graph.dirty_components(d) {
        let group = groups.group_of(comp[0].attr_ref());
        let v = policy.choose(&current, comp, group, &levels);
        let mut updates = Vec::new();
        for p in comp {
            let old = current.value(*p);
            if *old != v {
                levels.replace(group, old, &v);
                updates.push((*p, v.clone()));
            }
        }
        trace!("component of {} positions set to {v}", comp.len());
        current = current.with_updates(updates);
    }
    current
}

#[derive(Debug, Clone)]
pub struct ChaseTrace {
    /// `states[0]` is the input; the last state is stable.
    pub states: Vec<Instance>,
    pub level_sums: Vec<u64>,
}

impl ChaseTrace {
    pub fn result(&self) -> &Instance {
        self.states.last().expect("trace holds the input")
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Runs the chase to a stable instance, keeping every intermediate state.
pub fn chase(d: &Instance, mds: &MdSet, policy: &dyn ValuePolicy, max_steps: usize) -> Result<ChaseTrace> {
    let mut states = vec![d.clone()];
    let mut level_sums = vec![level_sum(d, mds)];
    loop {
        let cur = states.last().expect("non-empty");
        let graph = EnforcementGraph::build(cur, mds);
        if graph.dirty_components(cur).next().is_none() {
            debug!("chase stable after {} steps", states.len() - 1);
            return Ok(ChaseTrace { states, level_sums });
        }
        if states.len() > max_steps {
            return Err(Error::MaxStepsExceeded(max_steps));
        }
        let next = chase_step(cur, mds, policy);
        level_sums.push(level_sum(&next, mds));
        states.push(next);
    }
}

/// A resolved instance of `d` reached by the default policy.
pub fn resolve(d: &Instance, mds: &MdSet, max_steps: usize) -> Result<Instance> {
    Ok(chase(d, mds, &HighestLevel, max_steps)?.result().clone())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::instance::{diff, InstanceBuilder, Schema};
    use crate::mdspec::parse_mds;
    use crate::resolve::enforcement::{check_pair, is_stable, modifiable_positions};

    fn rows(s: &Arc<Schema>, rel: &str, rows: &[&[&str]]) -> Instance {
        let mut b = InstanceBuilder::new(s.clone());
        for r in rows {
            b.push(rel, r).unwrap();
        }
        b.finish()
    }

    fn cycle_example() -> (Instance, MdSet) {
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        let mut b = InstanceBuilder::new(s.clone());
        for (id, r) in [(1, ["a1", "d1", "f"]), (2, ["a2", "e2", "g"]), (3, ["b1", "e1", "h"]), (4, ["b2", "d2", "i"])]
        {
            b.push_with_id("R", id, &r).unwrap();
        }
        let m = parse_mds(
            "R[A]~R[A] -> R[B]<=>R[B] sim pairs{a1~a2, b1~b2}\nR[B]~R[B] -> R[A]<=>R[A] sim pairs{d1~d2, e1~e2}",
            &s,
        )
        .unwrap();
        (b.finish(), m)
    }

    #[test]
    fn stable_input_unchanged() {
        let s = Arc::new(Schema::parse("R(A:text,B:text)").unwrap());
        let d = rows(&s, "R", &[&["a", "c"], &["a", "c"]]);
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]", &s).unwrap();
        assert_eq!(chase_step(&d, &m, &HighestLevel), d);
        let t = chase(&d, &m, &HighestLevel, 10).unwrap();
        assert_eq!(t.steps(), 0);
    }

    #[test]
    fn pair_example_first_step_and_result() {
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        let d = rows(&s, "R", &[&["a", "b", "d"], &["a", "c", "e"], &["a", "b", "e"]]);
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]\nR[B]~R[B] -> R[C]<=>R[C]", &s).unwrap();
        let d1 = chase_step(&d, &m, &HighestLevel);
        for id in 0..3 {
            assert_eq!(d1.value(Position::new(0, id, 1)), &Value::text("b"));
        }
        assert!(check_pair(&d, &d1, &m).unwrap().verdict());
        let r = resolve(&d, &m, 10).unwrap();
        assert!(is_stable(&r, &m));
        let c0 = r.value(Position::new(0, 0, 2)).clone();
        assert!((0..3).all(|id| r.value(Position::new(0, id, 2)) == &c0));
    }

    #[test]
    fn cycle_example_step_matches_odd_table() {
        let (d, m) = cycle_example();
        let d1 = chase_step(&d, &m, &HighestLevel);
        let a = |id| d1.value(Position::new(0, id, 0)).clone();
        let b = |id| d1.value(Position::new(0, id, 1)).clone();
        assert_eq!(a(1), a(4));
        assert_eq!(a(2), a(3));
        assert_eq!(b(1), b(2));
        assert_eq!(b(3), b(4));
        let r = resolve(&d, &m, 20).unwrap();
        assert!(is_stable(&r, &m));
        assert!((2..=4).all(|id| r.value(Position::new(0, id, 0)) == r.value(Position::new(0, 1, 0))));
        assert!((2..=4).all(|id| r.value(Position::new(0, id, 1)) == r.value(Position::new(0, 1, 1))));
    }

    #[test]
    fn every_step_satisfies_and_level_sum_rises() {
        let (d, m) = cycle_example();
        let t = chase(&d, &m, &HighestLevel, 50).unwrap();
        assert!(t.steps() as u64 <= step_bound(&d, &m));
        for w in t.states.windows(2) {
            assert!(check_pair(&w[0], &w[1], &m).unwrap().verdict());
            let modifiable = modifiable_positions(&w[0], &m);
            assert!(diff(&w[0], &w[1]).unwrap().iter().all(|p| modifiable.contains(p)));
        }
        for w in t.level_sums.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn max_steps_reported() {
        let (d, m) = cycle_example();
        assert!(matches!(chase(&d, &m, &HighestLevel, 0), Err(Error::MaxStepsExceeded(0))));
    }
}
