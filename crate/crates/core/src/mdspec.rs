//! Matching dependencies: parsing, standard form, the MD-graph and its
//! classification.
//!
//! Source syntax, one MD per line:
//!
//! ```text
//! m1: R[A]~S[B], R[F]~S[G] -> R[C]<=>S[E], R[K]<=>S[L] sim eq, edit(1)
//! R[C,F]~S[E,G] -> R[A]<=>S[B] sim pairs{a1~a2, b1~b2}
//! ```
//!
//! The label is optional. `R[C,F]~S[E,G]` abbreviates `R[C]~S[E], R[F]~S[G]`.
//! Similarities after `sim` are positional over the LHS pairs; missing
//! entries default to `eq`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{strip_comment, AttrRef, Schema, Value};
use crate::similarity::SimilaritySpec;
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LhsPair {
    pub left: AttrRef,
    pub right: AttrRef,
    pub sim: SimilaritySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RhsPair {
    pub left: AttrRef,
    pub right: AttrRef,
}

/// `R[Ā] ≈ S[B̄] → R[C̄] ⇌ S[Ē]`. Every pair's left attribute belongs to
/// `left_rel` and its right attribute to `right_rel`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingDependency {
    pub name: Option<String>,
    pub left_rel: usize,
    pub right_rel: usize,
    pub lhs: Vec<LhsPair>,
    pub rhs: Vec<RhsPair>,
}

fn unordered(a: AttrRef, b: AttrRef) -> (AttrRef, AttrRef) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl MatchingDependency {
    pub fn lhs_attrs(&self) -> BTreeSet<AttrRef> {
        self.lhs.iter().flat_map(|p| [p.left, p.right]).collect()
    }

    pub fn rhs_attrs(&self) -> BTreeSet<AttrRef> {
        self.rhs.iter().flat_map(|p| [p.left, p.right]).collect()
    }

    /// `t1[Ā] ≈ t2[B̄]` for a tuple of the left and one of the right relation.
    pub fn lhs_holds(&self, t1: &[Value], t2: &[Value]) -> bool {
        self.lhs.iter().all(|p| p.sim.holds(&t1[p.left.attr], &t2[p.right.attr]))
    }

    fn lhs_pairs_unordered(&self) -> BTreeSet<(AttrRef, AttrRef)> {
        self.lhs.iter().map(|p| unordered(p.left, p.right)).collect()
    }

    fn rhs_pairs_unordered(&self) -> BTreeSet<(AttrRef, AttrRef)> {
        self.rhs.iter().map(|p| unordered(p.left, p.right)).collect()
    }

    /// The same dependency read with its two sides exchanged.
    pub fn flipped(&self) -> MatchingDependency {
        MatchingDependency {
            name: self.name.clone(),
            left_rel: self.right_rel,
            right_rel: self.left_rel,
            lhs: self.lhs.iter().map(|p| LhsPair { left: p.right, right: p.left, sim: p.sim.clone() }).collect(),
            rhs: self.rhs.iter().map(|p| RhsPair { left: p.right, right: p.left }).collect(),
        }
    }

    fn sorted_lhs(&self) -> Vec<LhsPair> {
        let mut v = self.lhs.clone();
        v.sort();
        v
    }

    /// Orientation-independent identity of the LHS, plus whether this MD
    /// has to be flipped to reach that orientation.
    fn lhs_key(&self) -> ((usize, usize, Vec<LhsPair>), bool) {
        let own = (self.left_rel, self.right_rel, self.sorted_lhs());
        let f = self.flipped();
        let other = (f.left_rel, f.right_rel, f.sorted_lhs());
        if other < own {
            (other, true)
        } else {
            (own, false)
        }
    }

    pub fn display<'a>(&'a self, schema: &'a Schema) -> MdDisplay<'a> {
        MdDisplay { md: self, schema }
    }

    fn validate(&self, schema: &Schema) -> Result<()> {
        let err = |m: String| Error::MdParse { line: 0, message: m };
        if self.lhs.is_empty() || self.rhs.is_empty() {
            return Err(err("both sides of an MD must be non-empty".into()));
        }
        let pairs = self.lhs.iter().map(|p| (p.left, p.right)).chain(self.rhs.iter().map(|p| (p.left, p.right)));
        for (l, r) in pairs {
            if l.rel != self.left_rel || r.rel != self.right_rel {
                return Err(err("pair does not span the MD's two relations".into()));
            }
            if schema.tag(l) != schema.tag(r) {
                return Err(Error::TagMismatch(format!(
                    "{} and {} have different tags",
                    schema.attr_name(l),
                    schema.attr_name(r)
                )));
            }
        }
        for p in &self.lhs {
            p.sim.check_tag(schema.tag(p.left))?;
        }
        let mut seen = BTreeSet::new();
        for p in &self.lhs {
            if !seen.insert((p.left, p.right)) {
                return Err(err(format!(
                    "duplicate pair {}~{} on the left",
                    schema.attr_name(p.left),
                    schema.attr_name(p.right)
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.rhs {
            if !seen.insert((p.left, p.right)) {
                return Err(err(format!(
                    "duplicate pair {}<=>{} on the right",
                    schema.attr_name(p.left),
                    schema.attr_name(p.right)
                )));
            }
        }
        Ok(())
    }
}

pub struct MdDisplay<'a> {
    md: &'a MatchingDependency,
    schema: &'a Schema,
}

impl fmt::Display for MdDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.schema;
        if let Some(n) = &self.md.name {
            write!(f, "{n}: ")?;
        }
        for (i, p) in self.md.lhs.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}~{}", s.attr_name(p.left), s.attr_name(p.right))?;
        }
        f.write_str(" -> ")?;
        for (i, p) in self.md.rhs.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}<=>{}", s.attr_name(p.left), s.attr_name(p.right))?;
        }
        if self.md.lhs.iter().any(|p| !p.sim.is_equality()) {
            f.write_str(" sim ")?;
            for (i, p) in self.md.lhs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", p.sim)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MdClass {
    NonInteracting,
    SimpleCycle,
    #[serde(rename = "HSC")]
    Hsc,
    #[serde(rename = "DAG")]
    Dag,
    GeneralInteracting,
}

impl MdClass {
    /// Classes whose MRIs have the closed frequency form.
    pub fn is_hsc_family(self) -> bool {
        matches!(self, MdClass::NonInteracting | MdClass::SimpleCycle | MdClass::Hsc)
    }
}

impl fmt::Display for MdClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MdClass::NonInteracting => "NonInteracting",
            MdClass::SimpleCycle => "SimpleCycle",
            MdClass::Hsc => "HSC",
            MdClass::Dag => "DAG",
            MdClass::GeneralInteracting => "GeneralInteracting",
        })
    }
}

/// A set of MDs in standard form together with its MD-graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdSet {
    schema: Arc<Schema>,
    mds: Vec<MatchingDependency>,
    succ: Vec<BTreeSet<usize>>,
}

impl MdSet {
    /// Validates the MDs and brings them into standard form: MDs with the
    /// same LHS are merged by taking the union of their RHS pairs.
    pub fn new(schema: Arc<Schema>, mds: Vec<MatchingDependency>) -> Result<MdSet> {
        let mut merged: Vec<MatchingDependency> = Vec::new();
        let mut by_key: BTreeMap<(usize, usize, Vec<LhsPair>), (usize, bool)> = BTreeMap::new();
        for md in mds {
            md.validate(&schema)?;
            let (key, flipped) = md.lhs_key();
            match by_key.get(&key) {
                Some(&(idx, first_flipped)) => {
                    let md = if flipped != first_flipped { md.flipped() } else { md };
                    let target = &mut merged[idx];
                    for p in md.rhs {
                        if !target.rhs.contains(&p) {
                            target.rhs.push(p);
                        }
                    }
                }
                None => {
                    by_key.insert(key, (merged.len(), flipped));
                    merged.push(md);
                }
            }
        }
        let n = merged.len();
        let rhs: Vec<_> = merged.iter().map(MatchingDependency::rhs_attrs).collect();
        let lhs: Vec<_> = merged.iter().map(MatchingDependency::lhs_attrs).collect();
        let succ = (0..n).map(|i| (0..n).filter(|&j| !rhs[i].is_disjoint(&lhs[j])).collect()).collect();
        Ok(MdSet { schema, mds: merged, succ })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn mds(&self) -> &[MatchingDependency] {
        &self.mds
    }

    pub fn len(&self) -> usize {
        self.mds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mds.is_empty()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.succ[from].contains(&to)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.succ.iter().enumerate().flat_map(|(i, s)| s.iter().map(move |&j| (i, j))).collect()
    }

    /// Attributes appearing to the right of some arrow.
    pub fn changeable_attrs(&self) -> BTreeSet<AttrRef> {
        self.mds.iter().flat_map(MatchingDependency::rhs_attrs).collect()
    }

    /// Weakly connected component id of every MD, numbered from 0 in MD order.
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.mds.len());
        for (i, j) in self.edges() {
            uf.union(i, j);
        }
        uf.labels()
    }

    /// Whether `to` may follow `from` on a simple cycle: the LHS pairs of
    /// `to` are RHS pairs of `from` and are absent from the LHS of `from`.
    fn simple_successor(&self, from: usize, to: usize) -> bool {
        if !self.has_edge(from, to) {
            return false;
        }
        let need = self.mds[to].lhs_pairs_unordered();
        let rhs = self.mds[from].rhs_pairs_unordered();
        let own_lhs = self.mds[from].lhs_pairs_unordered();
        need.is_subset(&rhs) && need.is_disjoint(&own_lhs)
    }

    /// All simple cycles, each listed from its smallest vertex.
    pub fn simple_cycles(&self) -> Vec<Vec<usize>> {
        let n = self.mds.len();
        let succ: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| self.simple_successor(i, j)).collect()).collect();
        let mut cycles = Vec::new();
        for start in 0..n {
            let mut path = vec![start];
            let mut on_path = vec![false; n];
            on_path[start] = true;
            cycle_dfs(start, start, &succ, &mut path, &mut on_path, &mut cycles);
        }
        cycles
    }

    pub fn classify(&self) -> MdClass {
        let n = self.mds.len();
        let edges = self.edges();
        if edges.is_empty() {
            return MdClass::NonInteracting;
        }
        let cycles = self.simple_cycles();
        if cycles.iter().any(|c| c.len() == n) && edges.len() == n {
            // n edges and a Hamiltonian cycle among them: the graph is that cycle.
            return MdClass::SimpleCycle;
        }
        let mut covered = vec![false; n];
        for c in &cycles {
            for &v in c {
                covered[v] = true;
            }
        }
        let mut touched = vec![false; n];
        for &(i, j) in &edges {
            touched[i] = true;
            touched[j] = true;
        }
        if (0..n).all(|v| covered[v] || !touched[v]) {
            return MdClass::Hsc;
        }
        if self.is_acyclic() {
            return MdClass::Dag;
        }
        MdClass::GeneralInteracting
    }

    fn is_acyclic(&self) -> bool {
        let n = self.mds.len();
        let mut indeg = vec![0usize; n];
        for (_, j) in self.edges() {
            indeg[j] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &w in &self.succ[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    stack.push(w);
                }
            }
        }
        seen == n
    }

    /// Groups of attributes that share a value domain: attributes are joined
    /// whenever they form a corresponding pair on either side of some MD.
    pub fn domain_groups(&self) -> DomainGroups {
        let attrs: Vec<AttrRef> = self.schema.all_attrs().collect();
        let index: BTreeMap<AttrRef, usize> = attrs.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let mut uf = UnionFind::new(attrs.len());
        for md in &self.mds {
            for (l, r) in md.lhs.iter().map(|p| (p.left, p.right)).chain(md.rhs.iter().map(|p| (p.left, p.right))) {
                uf.union(index[&l], index[&r]);
            }
        }
        let labels = uf.labels();
        DomainGroups { group: attrs.into_iter().zip(labels).collect() }
    }

    pub fn display(&self) -> String {
        self.mds.iter().map(|m| m.display(&self.schema).to_string()).collect::<Vec<_>>().join("\n")
    }
}

fn cycle_dfs(
    start: usize,
    v: usize,
    succ: &[Vec<usize>],
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    for &w in &succ[v] {
        if w == start {
            out.push(path.clone());
        } else if w > start && !on_path[w] {
            on_path[w] = true;
            path.push(w);
            cycle_dfs(start, w, succ, path, on_path, out);
            path.pop();
            on_path[w] = false;
        }
    }
}

/// Partition of the schema's attributes into value domains.
#[derive(Debug, Clone)]
pub struct DomainGroups {
    group: BTreeMap<AttrRef, usize>,
}

impl DomainGroups {
    pub fn group_of(&self, a: AttrRef) -> usize {
        self.group[&a]
    }

    pub fn members(&self, group: usize) -> impl Iterator<Item = AttrRef> + '_ {
        self.group.iter().filter(move |(_, g)| **g == group).map(|(a, _)| *a)
    }

    pub fn count(&self) -> usize {
        self.group.values().max().map_or(0, |m| m + 1)
    }
}

/// Parses MD source text against `schema` and normalizes to standard form.
pub fn parse_mds(source: &str, schema: &Arc<Schema>) -> Result<MdSet> {
    let mut mds = Vec::new();
    for (lineno, raw) in source.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let md = Parser::new(line, lineno + 1, schema).md()?;
        md.validate(schema).map_err(|e| match e {
            Error::MdParse { message, .. } => Error::MdParse { line: lineno + 1, message },
            other => other,
        })?;
        mds.push(md);
    }
    MdSet::new(schema.clone(), mds)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
}

fn tokenize(s: &str, line: usize) -> Result<Vec<Tok>> {
    const SYMS: [&str; 15] = ["<=>", "->", "⇌", "→", "≈", "[", "]", ",", "~", "{", "}", "(", ")", ":", "="];
    let mut out = Vec::new();
    let mut rest = s;
    'outer: while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
            continue;
        }
        for sym in SYMS {
            if let Some(r) = rest.strip_prefix(sym) {
                let canon = match sym {
                    "⇌" => "<=>",
                    "→" => "->",
                    "≈" => "~",
                    other => other,
                };
                out.push(Tok::Sym(canon));
                rest = r;
                continue 'outer;
            }
        }
        if c == '"' || c == '\'' {
            let body = &rest[1..];
            let end = body.find(c).ok_or_else(|| Error::MdParse { line, message: "unterminated quote".into() })?;
            out.push(Tok::Str(body[..end].to_string()));
            rest = &body[end + 1..];
            continue;
        }
        let len = rest
            .char_indices()
            .find(|(_, ch)| !(ch.is_alphanumeric() || *ch == '_' || *ch == '-' || *ch == '.'))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return Err(Error::MdParse { line, message: format!("unexpected character `{c}`") });
        }
        let word = &rest[..len];
        match word.parse::<i64>() {
            Ok(i) => out.push(Tok::Int(i)),
            Err(_) => out.push(Tok::Ident(word.to_string())),
        }
        rest = &rest[len..];
    }
    Ok(out)
}

enum SimSyntax {
    Eq,
    Edit(u32),
    Pairs(Vec<(String, String)>),
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    line: usize,
    schema: &'a Schema,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, line: usize, schema: &'a Schema) -> Parser<'a> {
        Parser { toks: Vec::new(), pos: 0, line, schema, src }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::MdParse { line: self.line, message: message.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, sym: &'static str) -> Result<()> {
        match self.next() {
            Some(Tok::Sym(s)) if s == sym => Ok(()),
            other => Err(self.err(format!("expected `{sym}`, found {other:?}"))),
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => Err(self.err(format!("expected a name, found {other:?}"))),
        }
    }

    fn eat(&mut self, sym: &'static str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn md(mut self) -> Result<MatchingDependency> {
        self.toks = tokenize(self.src, self.line)?;
        let mut name = None;
        if matches!(self.toks.get(1), Some(Tok::Sym(":"))) {
            name = Some(self.ident()?);
            self.expect(":")?;
        }
        let mut lhs_raw = Vec::new();
        // pairs written with `=` are equality conditions
        let mut forced_eq = Vec::new();
        loop {
            let (items, op) = self.side_item(&["~", "="])?;
            let eq = op == "=";
            forced_eq.extend(std::iter::repeat_n(eq, items.len()));
            lhs_raw.extend(items);
            if !self.eat(",") {
                break;
            }
        }
        self.expect("->")?;
        let mut rhs_raw = Vec::new();
        loop {
            rhs_raw.extend(self.side_item(&["<=>"])?.0);
            if !self.eat(",") {
                break;
            }
        }
        let mut sims = Vec::new();
        if let Some(Tok::Ident(w)) = self.peek() {
            if w == "sim" {
                self.pos += 1;
                loop {
                    sims.push(self.sim()?);
                    if !self.eat(",") {
                        break;
                    }
                }
            }
        }
        if let Some(t) = self.peek() {
            return Err(self.err(format!("unexpected trailing {t:?}")));
        }
        if sims.len() > lhs_raw.len() {
            return Err(self.err(format!("{} similarities given for {} LHS pairs", sims.len(), lhs_raw.len())));
        }

        let (left_rel, right_rel) = match lhs_raw.first() {
            Some((l, r)) => (l.rel, r.rel),
            None => return Err(self.err("empty LHS")),
        };
        let orient = |(l, r): (AttrRef, AttrRef)| -> Result<(AttrRef, AttrRef)> {
            if l.rel == left_rel && r.rel == right_rel {
                Ok((l, r))
            } else if l.rel == right_rel && r.rel == left_rel {
                Ok((r, l))
            } else {
                Err(self.err("an MD must relate exactly two relations"))
            }
        };
        let mut lhs = Vec::new();
        for (i, pair) in lhs_raw.into_iter().enumerate() {
            let raw = pair;
            let (l, r) = orient(pair)?;
            let tag = self.schema.tag(l);
            if forced_eq[i] && !matches!(sims.get(i), None | Some(SimSyntax::Eq)) {
                return Err(self.err(format!("pair {} is written with `=` but given another similarity", i + 1)));
            }
            let sim = match sims.get(i) {
                None | Some(SimSyntax::Eq) => SimilaritySpec::equality(tag),
                Some(SimSyntax::Edit(d)) => {
                    if tag != crate::instance::ValueTag::Text {
                        return Err(Error::TagMismatch(format!(
                            "edit distance on non-text attribute {}",
                            self.schema.attr_name(raw.0)
                        )));
                    }
                    SimilaritySpec::edit_distance(*d)
                }
                Some(SimSyntax::Pairs(ps)) => {
                    let vals = ps
                        .iter()
                        .map(|(a, b)| Ok((Value::parse(a, tag)?, Value::parse(b, tag)?)))
                        .collect::<Result<Vec<_>>>()?;
                    SimilaritySpec::pairs(tag, vals)?
                }
            };
            lhs.push(LhsPair { left: l, right: r, sim });
        }
        let rhs = rhs_raw
            .into_iter()
            .map(|p| orient(p).map(|(left, right)| RhsPair { left, right }))
            .collect::<Result<Vec<_>>>()?;
        Ok(MatchingDependency { name, left_rel, right_rel, lhs, rhs })
    }

    /// `R[A,B] op S[C,D]` → pairs (R[A],S[C]), (R[B],S[D]).
    fn side_item(&mut self, ops: &[&'static str]) -> Result<(Vec<(AttrRef, AttrRef)>, &'static str)> {
        let (lrel, lattrs) = self.attr_list()?;
        let op = match ops.iter().find(|op| self.eat(op)) {
            Some(op) => *op,
            None => return Err(self.err(format!("expected `{}`, found {:?}", ops.join("` or `"), self.peek()))),
        };
        let (rrel, rattrs) = self.attr_list()?;
        if lattrs.len() != rattrs.len() {
            return Err(self.err("attribute lists of a pair have different lengths"));
        }
        let pairs = lattrs
            .iter()
            .zip(&rattrs)
            .map(|(a, b)| Ok((self.schema.attr_ref(&lrel, a)?, self.schema.attr_ref(&rrel, b)?)))
            .collect::<Result<_>>()?;
        Ok((pairs, op))
    }

    fn attr_list(&mut self) -> Result<(String, Vec<String>)> {
        let rel = self.ident()?;
        self.expect("[")?;
        let mut attrs = vec![self.ident()?];
        while self.eat(",") {
            attrs.push(self.ident()?);
        }
        self.expect("]")?;
        Ok((rel, attrs))
    }

    fn value_token(&mut self) -> Result<String> {
        match self.next() {
            Some(Tok::Ident(s)) | Some(Tok::Str(s)) => Ok(s),
            Some(Tok::Int(i)) => Ok(i.to_string()),
            other => Err(self.err(format!("expected a value, found {other:?}"))),
        }
    }

    fn sim(&mut self) -> Result<SimSyntax> {
        let word = self.ident()?;
        match word.as_str() {
            "eq" => Ok(SimSyntax::Eq),
            "edit" => {
                self.expect("(")?;
                let d = match self.next() {
                    Some(Tok::Int(d)) if d >= 0 => d as u32,
                    other => return Err(self.err(format!("expected a distance, found {other:?}"))),
                };
                self.expect(")")?;
                Ok(SimSyntax::Edit(d))
            }
            "pairs" => {
                self.expect("{")?;
                let mut pairs = Vec::new();
                if !self.eat("}") {
                    loop {
                        let a = self.value_token()?;
                        self.expect("~")?;
                        let b = self.value_token()?;
                        pairs.push((a, b));
                        if self.eat("}") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(SimSyntax::Pairs(pairs))
            }
            other => Err(self.err(format!("unknown similarity `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(src: &str) -> Arc<Schema> {
        Arc::new(Schema::parse(src).unwrap())
    }

    #[test]
    fn single_md_no_edges() {
        let s = schema("R(A:text,B:text)");
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B] sim eq", &s).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m.edges().is_empty());
        assert_eq!(m.classify(), MdClass::NonInteracting);
    }

    #[test]
    fn two_cycle_and_isolated_vertex() {
        let s = schema("R(A:text,C:text)\nS(B:text,D:text,E:text)\nT(F:text)");
        let m =
            parse_mds("m1: R[A]~S[B] -> R[C]<=>S[D]\nm2: R[C]~S[D] -> R[A]<=>S[B]\nm3: S[E]~S[B] -> T[F]<=>T[F]", &s);
        // m3 relates S and T on its two sides, which the form does not allow
        assert!(m.is_err());
        let m = parse_mds("m1: R[A]~S[B] -> R[C]<=>S[D]\nm2: R[C]~S[D] -> R[A]<=>S[B]", &s).unwrap();
        assert_eq!(m.edges(), vec![(0, 1), (1, 0)]);
        assert_eq!(m.classify(), MdClass::SimpleCycle);
    }

    #[test]
    fn figure_one_graph() {
        // m3 rewritten within one relation so that it is well-formed
        let s = schema("R(A:text,C:text)\nS(B:text,D:text,E:text,F:text)");
        let m = parse_mds("R[A]~S[B] -> R[C]<=>S[D]\nR[C]~S[D] -> R[A]<=>S[B]\nS[E]~S[B] -> S[F]<=>S[F]", &s).unwrap();
        assert_eq!(m.edges(), vec![(0, 1), (1, 0), (1, 2)]);
        assert_eq!(m.classify(), MdClass::GeneralInteracting);
    }

    #[test]
    fn same_lhs_merged() {
        let s = schema("R(A:text,C1:text,Cn:text)\nS(B:text,E1:text,En:text)");
        let m = parse_mds("R[A]~S[B] -> R[C1]<=>S[E1]\nR[A]~S[B] -> R[Cn]<=>S[En]", &s).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.mds()[0].rhs.len(), 2);
        // the flipped spelling of the same LHS merges too
        let m = parse_mds("R[A]~S[B] -> R[C1]<=>S[E1]\nS[B]~R[A] -> S[En]<=>R[Cn]", &s).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(
            m.mds()[0].rhs[1],
            RhsPair { left: s.attr_ref("R", "Cn").unwrap(), right: s.attr_ref("S", "En").unwrap() }
        );
    }

    #[test]
    fn different_similarity_not_merged() {
        let s = schema("R(A:text,B:text,C:text)");
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]\nR[A]~R[A] -> R[C]<=>R[C] sim edit(1)", &s).unwrap();
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn simple_cycle_example() {
        let s = schema("R(A:text,C:text,F:text)\nS(B:text,E:text,G:text)");
        let m = parse_mds("R[A]~S[B] -> R[C,F]<=>S[E,G]\nR[C]~S[E], R[F]~S[G] -> R[A]<=>S[B]", &s).unwrap();
        assert_eq!(m.mds()[0].rhs.len(), 2);
        assert_eq!(m.mds()[1].lhs.len(), 2);
        assert_eq!(m.classify(), MdClass::SimpleCycle);
    }

    #[test]
    fn chained_pair_is_dag() {
        let s = schema("R(A:text,B:text,C:text)");
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]\nR[B]~R[B] -> R[C]<=>R[C]", &s).unwrap();
        assert_eq!(m.edges(), vec![(0, 1)]);
        assert_eq!(m.classify(), MdClass::Dag);
    }

    #[test]
    fn cycle_not_simple_when_pairs_misalign() {
        // m2's LHS pair (B,B) is on m1's right but also on m1's left
        let s = schema("R(A:text,B:text)");
        let m = parse_mds("R[A]~R[A], R[B]~R[B] -> R[B]<=>R[B]", &s).unwrap();
        assert_eq!(m.edges(), vec![(0, 0)]);
        assert_eq!(m.classify(), MdClass::GeneralInteracting);
    }

    #[test]
    fn hsc_two_cycles_sharing_a_vertex() {
        let s = schema("R(A:text,B:text,C:text)");
        let m =
            parse_mds("R[A]~R[A] -> R[B]<=>R[B], R[C]<=>R[C]\nR[B]~R[B] -> R[A]<=>R[A]\nR[C]~R[C] -> R[A]<=>R[A]", &s)
                .unwrap();
        assert_eq!(m.simple_cycles(), vec![vec![0, 1], vec![0, 2]]);
        assert_eq!(m.classify(), MdClass::Hsc);
    }

    #[test]
    fn equals_sign_means_equality() {
        let s = schema("R(A:text,B:text,C:text)");
        let m = parse_mds("R[A]=R[A], R[B]~R[B] -> R[C]<=>R[C] sim eq, edit(1)", &s).unwrap();
        assert!(m.mds()[0].lhs[0].sim.is_equality());
        assert!(!m.mds()[0].lhs[1].sim.is_equality());
        assert!(matches!(parse_mds("R[A]=R[A] -> R[C]<=>R[C] sim edit(1)", &s), Err(Error::MdParse { line: 1, .. })));
    }

    #[test]
    fn hsc_with_isolated_component() {
        let s = schema("R(A:text,B:text)\nS(X:text,Y:text)");
        let m = parse_mds("R[A]~R[A] -> R[B]<=>R[B]\nR[B]~R[B] -> R[A]<=>R[A]\nS[X]~S[X] -> S[Y]<=>S[Y]", &s).unwrap();
        assert_eq!(m.classify(), MdClass::Hsc);
        assert_eq!(m.components(), vec![0, 0, 1]);
    }

    #[test]
    fn parse_errors() {
        let s = schema("R(A:text,B:text,N:int)");
        assert!(matches!(parse_mds("R[Z]~R[A] -> R[B]<=>R[B]", &s), Err(Error::UnknownAttribute { .. })));
        assert!(matches!(parse_mds("R[A]~R[N] -> R[B]<=>R[B]", &s), Err(Error::TagMismatch(_))));
        assert!(matches!(parse_mds("R[A]~R[A], R[A]~R[A] -> R[B]<=>R[B]", &s), Err(Error::MdParse { line: 1, .. })));
        assert!(matches!(parse_mds("R[N]~R[N] -> R[B]<=>R[B] sim edit(1)", &s), Err(Error::TagMismatch(_))));
        assert!(parse_mds("R[A]~R[A] -> ", &s).is_err());
    }

    #[test]
    fn similarity_lists_are_positional() {
        let s = schema("R(A:text,B:text,C:text)");
        let m = parse_mds("R[A]~R[A], R[B]~R[B] -> R[C]<=>R[C] sim pairs{a1~a2, 'x y'~z}", &s).unwrap();
        let lhs = &m.mds()[0].lhs;
        assert!(lhs[0].sim.holds(&Value::text("x y"), &Value::text("z")));
        assert!(lhs[1].sim.is_equality());
        assert_eq!(parse_mds(&m.display(), &s).unwrap(), m);
    }

    #[test]
    fn normalization_idempotent_and_display_reparses() {
        let s = schema("R(A:text,B:text,C:text)\nS(E:text,F:text)");
        let src = "R[A]~S[E] -> R[B]<=>S[F]\nR[A]~S[E] -> R[C]<=>S[F]\nR[B]~R[B] -> R[C]<=>R[C] sim edit(2)";
        let m = parse_mds(src, &s).unwrap();
        let again = MdSet::new(s.clone(), m.mds().to_vec()).unwrap();
        assert_eq!(m, again);
        let reparsed = parse_mds(&m.display(), &s).unwrap();
        assert_eq!(m, reparsed);
    }

    #[test]
    fn classification_ignores_order() {
        let s = schema("R(A:text,B:text,C:text)");
        let lines = ["R[A]~R[A] -> R[B]<=>R[B], R[C]<=>R[C]", "R[B]~R[B] -> R[A]<=>R[A]", "R[C]~R[C] -> R[A]<=>R[A]"];
        let a = parse_mds(&lines.join("\n"), &s).unwrap().classify();
        let b = parse_mds(&[lines[2], lines[0], lines[1]].join("\n"), &s).unwrap().classify();
        assert_eq!(a, b);
    }
}
