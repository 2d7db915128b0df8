//! Exhaustive search for resolved instances and MRIs on tiny inputs.
//!
//! The search shares nothing with the closed-form computation: it works on
//! interned value vectors, evaluates similarities from precomputed tables and
//! explores every sequence of enforcement steps, where each step gives every
//! dirty component any common value from the active domain of its domain
//! group.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::debug;

use super::mri::ResolutionResult;
use crate::error::{Error, Result};
use crate::instance::{Instance, Position, Value};
use crate::mdspec::MdSet;
use crate::unionfind::UnionFind;

pub const MAX_TUPLES: usize = 8;
pub const MAX_ARITY: usize = 4;
const MAX_STATES: usize = 2_000_000;
const MAX_BRANCHING: u128 = 1_000_000;

#[derive(Debug, Clone)]
pub struct OracleReport {
    /// MRIs among the resolved instances found.
    pub result: ResolutionResult,
    /// Every stable state reached, with its change count, ordered by count.
    pub resolved: Vec<(Instance, usize)>,
    pub states_explored: usize,
    /// False when the depth bound cut off unexplored states.
    pub exhausted: bool,
    /// Candidate values were restricted to the active domain. For classes
    /// outside the closed-form family this may miss cheaper resolutions.
    pub active_domain_relative: bool,
}

struct Compiled {
    positions: Vec<Position>,
    values: Vec<Value>,
    /// Per relation: base index of each tuple's first position.
    tuples: Vec<Vec<usize>>,
    mds: Vec<CompiledMd>,
    /// Candidate value ids per position.
    candidates: Vec<std::rc::Rc<Vec<u16>>>,
}

struct CompiledMd {
    left_rel: usize,
    right_rel: usize,
    /// (left attr, right attr, similar[a * n + b])
    lhs: Vec<(usize, usize, Vec<bool>)>,
    rhs: Vec<(usize, usize)>,
}

impl Compiled {
    fn new(d: &Instance, mds: &MdSet) -> Result<Compiled> {
        let schema = d.schema();
        if d.total_tuples() > MAX_TUPLES {
            return Err(Error::GuardExceeded(format!("{} tuples, at most {MAX_TUPLES}", d.total_tuples())));
        }
        if let Some(r) = schema.relations().iter().find(|r| r.arity() > MAX_ARITY) {
            return Err(Error::GuardExceeded(format!(
                "relation {} has {} attributes, at most {MAX_ARITY}",
                r.name,
                r.arity()
            )));
        }
        let positions: Vec<Position> = d.positions().collect();
        let mut values: Vec<Value> = Vec::new();
        let mut ids: HashMap<Value, u16> = HashMap::new();
        for p in &positions {
            let v = d.value(*p);
            if !ids.contains_key(v) {
                ids.insert(v.clone(), values.len() as u16);
                values.push(v.clone());
            }
        }
        let n = values.len();
        let mut tuples = vec![Vec::new(); schema.relations().len()];
        let mut i = 0;
        for (rel, list) in tuples.iter_mut().enumerate() {
            for _ in d.tuples(rel) {
                list.push(i);
                i += schema.relation(rel).arity();
            }
        }
        let cmds = mds
            .mds()
            .iter()
            .map(|m| CompiledMd {
                left_rel: m.left_rel,
                right_rel: m.right_rel,
                lhs: m
                    .lhs
                    .iter()
                    .map(|p| {
                        let mut table = vec![false; n * n];
                        for (a, va) in values.iter().enumerate() {
                            for (b, vb) in values.iter().enumerate() {
                                table[a * n + b] = va.tag() == vb.tag() && p.sim.holds(va, vb);
                            }
                        }
                        (p.left.attr, p.right.attr, table)
                    })
                    .collect(),
                rhs: m.rhs.iter().map(|p| (p.left.attr, p.right.attr)).collect(),
            })
            .collect();
        let groups = mds.domain_groups();
        let mut by_group: BTreeMap<usize, Vec<u16>> = BTreeMap::new();
        for p in &positions {
            let list = by_group.entry(groups.group_of(p.attr_ref())).or_default();
            let id = ids[d.value(*p)];
            if !list.contains(&id) {
                list.push(id);
            }
        }
        let shared: BTreeMap<usize, std::rc::Rc<Vec<u16>>> = by_group
            .into_iter()
            .map(|(g, mut v)| {
                v.sort_unstable();
                (g, std::rc::Rc::new(v))
            })
            .collect();
        let candidates = positions.iter().map(|p| shared[&groups.group_of(p.attr_ref())].clone()).collect();
        Ok(Compiled { positions, values, tuples, mds: cmds, candidates })
    }

    fn encode(&self, d: &Instance) -> Vec<u16> {
        self.positions
            .iter()
            .map(|p| self.values.iter().position(|v| v == d.value(*p)).expect("interned") as u16)
            .collect()
    }

    fn decode(&self, base: &Instance, s: &[u16]) -> Instance {
        let updates = self
            .positions
            .iter()
            .zip(s)
            .filter(|(p, &v)| base.value(**p) != &self.values[v as usize])
            .map(|(p, &v)| (*p, self.values[v as usize].clone()));
        base.with_updates(updates)
    }

    /// Dirty components of the enforcement graph of state `s`.
    fn dirty(&self, s: &[u16]) -> Vec<Vec<usize>> {
        let n = self.values.len();
        let mut uf = UnionFind::new(s.len());
        let mut touched = vec![false; s.len()];
        for m in &self.mds {
            for &b1 in &self.tuples[m.left_rel] {
                for &b2 in &self.tuples[m.right_rel] {
                    let similar = m.lhs.iter().all(|(a, b, t)| t[s[b1 + a] as usize * n + s[b2 + b] as usize]);
                    if similar {
                        for (c, e) in &m.rhs {
                            uf.union(b1 + c, b2 + e);
                            touched[b1 + c] = true;
                            touched[b2 + e] = true;
                        }
                    }
                }
            }
        }
        let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in (0..s.len()).filter(|&i| touched[i]) {
            comps.entry(uf.find(i)).or_default().push(i);
        }
        comps.into_values().filter(|c| c.iter().any(|&i| s[i] != s[c[0]])).collect()
    }
}

/// Breadth-first exploration of all enforcement sequences of at most `depth`
/// steps from `d`.
pub fn oracle_explore(d: &Instance, mds: &MdSet, depth: usize) -> Result<OracleReport> {
    let c = Compiled::new(d, mds)?;
    let start = c.encode(d);
    let mut visited: HashSet<Vec<u16>> = HashSet::new();
    visited.insert(start.clone());
    let mut frontier = vec![start.clone()];
    let mut stable: Vec<Vec<u16>> = Vec::new();
    let mut level = 0;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for s in &frontier {
            let dirty = c.dirty(s);
            if dirty.is_empty() {
                stable.push(s.clone());
                continue;
            }
            if level == depth {
                // successors lie beyond the bound
                next.push(s.clone());
                continue;
            }
            let opts: Vec<&[u16]> = dirty.iter().map(|comp| c.candidates[comp[0]].as_slice()).collect();
            let branching: u128 = opts.iter().map(|o| o.len() as u128).product();
            if branching > MAX_BRANCHING {
                return Err(Error::GuardExceeded(format!("{branching} successors of one state")));
            }
            let mut idx = vec![0usize; opts.len()];
            loop {
                let mut succ = s.clone();
                for (comp, (o, &k)) in dirty.iter().zip(opts.iter().zip(&idx)) {
                    for &i in comp {
                        succ[i] = o[k];
                    }
                }
                if visited.insert(succ.clone()) {
                    if visited.len() > MAX_STATES {
                        return Err(Error::GuardExceeded(format!("more than {MAX_STATES} states")));
                    }
                    next.push(succ);
                }
                let mut pos = idx.len();
                let mut done = true;
                while pos > 0 {
                    pos -= 1;
                    idx[pos] += 1;
                    if idx[pos] < opts[pos].len() {
                        done = false;
                        break;
                    }
                    idx[pos] = 0;
                }
                if done {
                    break;
                }
            }
        }
        if level == depth {
            frontier = next;
            break;
        }
        frontier = next;
        level += 1;
    }
    let exhausted = frontier.is_empty() || frontier.iter().all(|s| c.dirty(s).is_empty());
    debug!("oracle explored {} states, {} stable", visited.len(), stable.len());

    let changes = |s: &[u16]| s.iter().zip(&start).filter(|(a, b)| a != b).count();
    let mut resolved: Vec<(Vec<u16>, usize)> = stable
        .into_iter()
        .map(|s| {
            let k = changes(&s);
            (s, k)
        })
        .collect();
    resolved.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let min = resolved.first().map(|r| r.1);
    let mris: Vec<Instance> = resolved.iter().filter(|r| Some(r.1) == min).map(|r| c.decode(d, &r.0)).collect();
    let result = ResolutionResult::from_candidates(d, mris, false)?;
    Ok(OracleReport {
        result,
        resolved: resolved.iter().map(|(s, k)| (c.decode(d, s), *k)).collect(),
        states_explored: visited.len(),
        exhausted,
        active_domain_relative: !mds.classify().is_hsc_family(),
    })
}

/// MRIs found by exhaustive search.
pub fn oracle_mris(d: &Instance, mds: &MdSet, depth: usize) -> Result<ResolutionResult> {
    Ok(oracle_explore(d, mds, depth)?.result)
}
