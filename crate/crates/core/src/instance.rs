//! Typed relational instances with stable tuple identifiers.
//!
//! An [`Instance`] is immutable once built. Every update goes through
//! [`Instance::with_updates`], which returns a fresh instance, so the many
//! coexisting versions produced while chasing or enumerating resolutions never
//! alias each other.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Column name that carries explicit tuple ids in CSV files.
pub const ID_COLUMN: &str = "_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueTag {
    Text,
    Int,
}

impl ValueTag {
    fn parse(s: &str) -> Option<ValueTag> {
        match s {
            "text" | "string" | "str" => Some(ValueTag::Text),
            "int" | "integer" | "i64" => Some(ValueTag::Int),
            _ => None,
        }
    }
}

impl fmt::Display for ValueTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueTag::Text => f.write_str("text"),
            ValueTag::Int => f.write_str("int"),
        }
    }
}

/// A scalar drawn from the underlying domain.
///
/// The derived `Ord` is a storage order (all text values sort before all
/// integers) used for canonical output only. Semantic comparisons go through
/// [`Value::try_cmp`], which refuses to compare across tags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Text(String),
    Int(i64),
}

impl Value {
    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn tag(&self) -> ValueTag {
        match self {
            Value::Text(_) => ValueTag::Text,
            Value::Int(_) => ValueTag::Int,
        }
    }

    /// Parses a raw field according to `tag`.
    pub fn parse(raw: &str, tag: ValueTag) -> Result<Value> {
        match tag {
            ValueTag::Text => Ok(Value::Text(raw.to_string())),
            ValueTag::Int => raw
                .trim()
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| Error::TagMismatch(format!("`{raw}` is not an integer"))),
        }
    }

    pub fn try_cmp(&self, other: &Value) -> Result<Ordering> {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => Ok(a.as_bytes().cmp(b.as_bytes())),
            (Value::Int(a), Value::Int(b)) => Ok(a.cmp(b)),
            _ => Err(Error::TagMismatch(format!(
                "cannot compare {} value {self} with {} value {other}",
                self.tag(),
                other.tag()
            ))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Int(i) => write!(f, "{i}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Text(t) => s.serialize_str(t),
            Value::Int(i) => s.serialize_i64(*i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrDecl {
    pub name: String,
    pub tag: ValueTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    pub name: String,
    pub attrs: Vec<AttrDecl>,
}

impl RelationSchema {
    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }

    pub fn arity(&self) -> usize {
        self.attrs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    relations: Vec<RelationSchema>,
}

/// An attribute `R[A]`, addressed by schema indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttrRef {
    pub rel: usize,
    pub attr: usize,
}

impl Schema {
    /// Parses declarations of the form `R(A:text, B:int)`, one per line.
    /// `#` starts a comment.
    pub fn parse(source: &str) -> Result<Schema> {
        let mut relations: Vec<RelationSchema> = Vec::new();
        for (lineno, raw) in source.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Schema { line: lineno + 1, message };
            let open = line.find('(').ok_or_else(|| err("expected `(`".into()))?;
            if !line.ends_with(')') {
                return Err(err("expected `)` at end of line".into()));
            }
            let name = line[..open].trim();
            if !is_ident(name) {
                return Err(err(format!("bad relation name `{name}`")));
            }
            if relations.iter().any(|r| r.name == name) {
                return Err(err(format!("relation `{name}` declared twice")));
            }
            let body = &line[open + 1..line.len() - 1];
            let mut attrs: Vec<AttrDecl> = Vec::new();
            for part in body.split(',') {
                let part = part.trim();
                let (aname, tag) =
                    part.split_once(':').ok_or_else(|| err(format!("expected `attr:tag`, got `{part}`")))?;
                let (aname, tag) = (aname.trim(), tag.trim());
                if !is_ident(aname) || aname == ID_COLUMN {
                    return Err(err(format!("bad attribute name `{aname}`")));
                }
                let tag = ValueTag::parse(tag).ok_or_else(|| err(format!("unknown tag `{tag}`")))?;
                if attrs.iter().any(|a| a.name == aname) {
                    return Err(err(format!("attribute `{aname}` declared twice in `{name}`")));
                }
                attrs.push(AttrDecl { name: aname.to_string(), tag });
            }
            relations.push(RelationSchema { name: name.to_string(), attrs });
        }
        Ok(Schema { relations })
    }

    pub fn from_relations(relations: Vec<RelationSchema>) -> Schema {
        Schema { relations }
    }

    pub fn relations(&self) -> &[RelationSchema] {
        &self.relations
    }

    pub fn relation(&self, rel: usize) -> &RelationSchema {
        &self.relations[rel]
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn attr_ref(&self, relation: &str, attribute: &str) -> Result<AttrRef> {
        let rel = self.relation_index(relation).ok_or_else(|| Error::UnknownRelation(relation.to_string()))?;
        let attr = self.relations[rel].attr_index(attribute).ok_or_else(|| Error::UnknownAttribute {
            relation: relation.to_string(),
            attribute: attribute.to_string(),
        })?;
        Ok(AttrRef { rel, attr })
    }

    pub fn tag(&self, a: AttrRef) -> ValueTag {
        self.relations[a.rel].attrs[a.attr].tag
    }

    pub fn attr_name(&self, a: AttrRef) -> String {
        let r = &self.relations[a.rel];
        format!("{}[{}]", r.name, r.attrs[a.attr].name)
    }

    pub fn all_attrs(&self) -> impl Iterator<Item = AttrRef> + '_ {
        self.relations.iter().enumerate().flat_map(|(rel, r)| (0..r.attrs.len()).map(move |attr| AttrRef { rel, attr }))
    }
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// A tuple identifier within one relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TupleRef {
    pub rel: usize,
    pub id: u64,
}

/// A `(tuple, attribute)` cell. Orders as `(relation, tuple id, attribute)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    pub tuple: TupleRef,
    pub attr: usize,
}

impl Position {
    pub fn new(rel: usize, id: u64, attr: usize) -> Position {
        Position { tuple: TupleRef { rel, id }, attr }
    }

    pub fn attr_ref(&self) -> AttrRef {
        AttrRef { rel: self.tuple.rel, attr: self.attr }
    }
}

/// The set of positions whose values differ between two instances.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChangeSet(BTreeSet<Position>);

impl ChangeSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: &Position) -> bool {
        self.0.contains(p)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Position> {
        self.0.iter()
    }
}

impl FromIterator<Position> for ChangeSet {
    fn from_iter<I: IntoIterator<Item = Position>>(iter: I) -> Self {
        ChangeSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    schema: Arc<Schema>,
    relations: Vec<BTreeMap<u64, Vec<Value>>>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.schema, &other.schema) || self.schema == other.schema) && self.relations == other.relations
    }
}

impl Eq for Instance {}

impl Hash for Instance {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.relations.hash(state);
    }
}

impl Instance {
    pub fn empty(schema: Arc<Schema>) -> Instance {
        let relations = vec![BTreeMap::new(); schema.relations().len()];
        Instance { schema, relations }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn value(&self, p: Position) -> &Value {
        &self.relations[p.tuple.rel][&p.tuple.id][p.attr]
    }

    pub fn tuple(&self, t: TupleRef) -> Option<&[Value]> {
        self.relations.get(t.rel)?.get(&t.id).map(Vec::as_slice)
    }

    /// Tuples of relation `rel` in id order.
    pub fn tuples(&self, rel: usize) -> impl Iterator<Item = (u64, &[Value])> + '_ {
        self.relations[rel].iter().map(|(id, v)| (*id, v.as_slice()))
    }

    pub fn len(&self, rel: usize) -> usize {
        self.relations[rel].len()
    }

    pub fn total_tuples(&self) -> usize {
        self.relations.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_tuples() == 0
    }

    pub fn tuple_refs(&self) -> impl Iterator<Item = TupleRef> + '_ {
        self.relations.iter().enumerate().flat_map(|(rel, m)| m.keys().map(move |&id| TupleRef { rel, id }))
    }

    /// Every `(tuple, attribute)` position, in canonical order.
    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        self.relations.iter().enumerate().flat_map(move |(rel, m)| {
            let arity = self.schema.relation(rel).arity();
            m.keys().flat_map(move |&id| (0..arity).map(move |attr| Position::new(rel, id, attr)))
        })
    }

    /// Positions of a single attribute.
    pub fn attr_positions(&self, a: AttrRef) -> impl Iterator<Item = Position> + '_ {
        self.relations[a.rel].keys().map(move |&id| Position::new(a.rel, id, a.attr))
    }

    /// Returns a new instance with the given cells overwritten. Panics on a
    /// position absent from the instance or on a value of the wrong tag.
    pub fn with_updates<I>(&self, updates: I) -> Instance
    where
        I: IntoIterator<Item = (Position, Value)>,
    {
        let mut next = self.clone();
        for (p, v) in updates {
            assert_eq!(v.tag(), self.schema.tag(p.attr_ref()), "update writes a value of the wrong tag");
            let row = next.relations[p.tuple.rel].get_mut(&p.tuple.id).expect("update names an existing tuple");
            row[p.attr] = v;
        }
        next
    }

    /// Keeps only the tuples for which `keep` holds.
    pub fn filter_tuples(&self, mut keep: impl FnMut(TupleRef) -> bool) -> Instance {
        let relations = self
            .relations
            .iter()
            .enumerate()
            .map(|(rel, m)| {
                m.iter().filter(|(id, _)| keep(TupleRef { rel, id: **id })).map(|(id, v)| (*id, v.clone())).collect()
            })
            .collect();
        Instance { schema: self.schema.clone(), relations }
    }

    /// The instance viewed as a set of ground atoms, ids dropped.
    pub fn tuple_set(&self) -> BTreeSet<(usize, Vec<Value>)> {
        self.relations.iter().enumerate().flat_map(|(rel, m)| m.values().map(move |v| (rel, v.clone()))).collect()
    }

    fn same_shape(&self, other: &Instance) -> Result<()> {
        if !(Arc::ptr_eq(&self.schema, &other.schema) || self.schema == other.schema) {
            return Err(Error::Incomparable("schemas differ".into()));
        }
        for (rel, (a, b)) in self.relations.iter().zip(&other.relations).enumerate() {
            if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
                return Err(Error::Incomparable(format!(
                    "tuple ids of relation {} differ",
                    self.schema.relation(rel).name
                )));
            }
        }
        Ok(())
    }

    /// Writes one relation as CSV with a leading `_id` column, rows in id order.
    pub fn write_csv<W: Write>(&self, rel: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let rs = self.schema.relation(rel);
        let mut header = vec![ID_COLUMN.to_string()];
        header.extend(rs.attrs.iter().map(|a| a.name.clone()));
        let csv_err = |e: csv::Error| Error::Csv { relation: rs.name.clone(), message: e.to_string() };
        w.write_record(&header).map_err(csv_err)?;
        for (id, vals) in self.tuples(rel) {
            let mut rec = vec![id.to_string()];
            rec.extend(vals.iter().map(Value::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, rel: usize) -> String {
        let mut buf = Vec::new();
        self.write_csv(rel, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Positions where `d1` and `d2` hold different values.
pub fn diff(d1: &Instance, d2: &Instance) -> Result<ChangeSet> {
    d1.same_shape(d2)?;
    Ok(d1.positions().filter(|&p| d1.value(p) != d2.value(p)).collect())
}

/// Incremental construction of an [`Instance`].
pub struct InstanceBuilder {
    inst: Instance,
    next_id: Vec<u64>,
}

impl InstanceBuilder {
    pub fn new(schema: Arc<Schema>) -> InstanceBuilder {
        let n = schema.relations().len();
        InstanceBuilder { inst: Instance::empty(schema), next_id: vec![0; n] }
    }

    /// Appends a tuple with the next sequential id.
    pub fn push(&mut self, relation: &str, fields: &[&str]) -> Result<&mut Self> {
        let rel = self.rel(relation)?;
        let id = self.next_id[rel];
        self.insert_raw(rel, id, fields)?;
        Ok(self)
    }

    pub fn push_with_id(&mut self, relation: &str, id: u64, fields: &[&str]) -> Result<&mut Self> {
        let rel = self.rel(relation)?;
        self.insert_raw(rel, id, fields)?;
        Ok(self)
    }

    /// Inserts already-typed values.
    pub fn insert(&mut self, rel: usize, id: u64, values: Vec<Value>) -> Result<&mut Self> {
        let rs = self.inst.schema.relation(rel);
        if values.len() != rs.arity() {
            return Err(Error::Csv {
                relation: rs.name.clone(),
                message: format!("expected {} values, got {}", rs.arity(), values.len()),
            });
        }
        for (v, a) in values.iter().zip(&rs.attrs) {
            if v.tag() != a.tag {
                return Err(Error::TagMismatch(format!("{}[{}] expects {}, got `{v}`", rs.name, a.name, a.tag)));
            }
        }
        if self.inst.relations[rel].insert(id, values).is_some() {
            return Err(Error::DuplicateId { relation: rs.name.clone(), id });
        }
        self.next_id[rel] = self.next_id[rel].max(id + 1);
        Ok(self)
    }

    /// The id `push` would assign next in `rel`.
    pub fn next_id(&self, rel: usize) -> u64 {
        self.next_id[rel]
    }

    pub fn finish(self) -> Instance {
        self.inst
    }

    fn rel(&self, relation: &str) -> Result<usize> {
        self.inst.schema.relation_index(relation).ok_or_else(|| Error::UnknownRelation(relation.to_string()))
    }

    fn insert_raw(&mut self, rel: usize, id: u64, fields: &[&str]) -> Result<()> {
        let rs = self.inst.schema.relation(rel);
        if fields.len() != rs.arity() {
            return Err(Error::Csv {
                relation: rs.name.clone(),
                message: format!("expected {} fields, got {}", rs.arity(), fields.len()),
            });
        }
        let values = fields.iter().zip(&rs.attrs).map(|(f, a)| Value::parse(f, a.tag)).collect::<Result<Vec<_>>>()?;
        self.insert(rel, id, values)?;
        Ok(())
    }
}

/// Loads an instance from a schema declaration and one CSV stream per
/// relation. Relations without a stream are empty.
pub fn load_csv<R: Read>(schema_decl: &str, sources: BTreeMap<String, R>) -> Result<Instance> {
    let schema = Arc::new(Schema::parse(schema_decl)?);
    load_csv_with_schema(schema, sources)
}

pub fn load_csv_with_schema<R: Read>(schema: Arc<Schema>, sources: BTreeMap<String, R>) -> Result<Instance> {
    let mut b = InstanceBuilder::new(schema.clone());
    for (name, src) in sources {
        let rel = schema.relation_index(&name).ok_or_else(|| Error::UnknownRelation(name.clone()))?;
        let rs = schema.relation(rel);
        let csv_err = |message: String| Error::Csv { relation: name.clone(), message };
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(src);
        let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
        let has_id = headers.get(0) == Some(ID_COLUMN);
        let offset = usize::from(has_id);
        if headers.len() - offset != rs.arity() {
            return Err(csv_err(format!(
                "header has {} attribute columns, schema declares {}",
                headers.len() - offset,
                rs.arity()
            )));
        }
        // column index in the file for each declared attribute
        let mut column = Vec::with_capacity(rs.arity());
        for a in &rs.attrs {
            let c = headers
                .iter()
                .skip(offset)
                .position(|h| h.trim() == a.name)
                .ok_or_else(|| csv_err(format!("missing column `{}`", a.name)))?;
            column.push(c + offset);
        }
        let mut seq = 0u64;
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(format!("row {}: {e}", row + 1)))?;
            let id = if has_id {
                let raw = rec.get(0).unwrap_or_default();
                raw.trim().parse::<u64>().map_err(|_| csv_err(format!("row {}: bad `_id` value `{raw}`", row + 1)))?
            } else {
                let id = seq;
                seq += 1;
                id
            };
            let values =
                rs.attrs.iter().zip(&column).map(|(a, &c)| Value::parse(&rec[c], a.tag)).collect::<Result<Vec<_>>>()?;
            b.insert(rel, id, values)?;
        }
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(schema: &str, rel: &str, csv: &str) -> Result<Instance> {
        let mut m = BTreeMap::new();
        m.insert(rel.to_string(), csv.as_bytes());
        load_csv(schema, m)
    }

    #[test]
    fn sequential_ids() {
        let d = load("R(A:text,B:text)", "R", "A,B\na,c\na,c\n").unwrap();
        let ids: Vec<u64> = d.tuples(0).map(|(id, _)| id).collect();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn explicit_ids_preserved() {
        let d = load("R(A:text)", "R", "_id,A\n1,x\n4,y\n2,z\n").unwrap();
        let ids: Vec<u64> = d.tuples(0).map(|(id, _)| id).collect();
        assert_eq!(ids, vec![1, 2, 4]);
        assert_eq!(d.value(Position::new(0, 4, 0)), &Value::text("y"));
    }

    #[test]
    fn pair_example_loads() {
        let d = load("R(A:text,B:text,C:text)", "R", "A,B,C\na,b,d\na,c,e\na,b,e\n").unwrap();
        assert_eq!(d.total_tuples(), 3);
        assert_eq!(d.tuple(TupleRef { rel: 0, id: 1 }).unwrap()[1], Value::text("c"));
    }

    #[test]
    fn load_errors() {
        assert!(matches!(load("R(A:int)", "R", "A\nx\n"), Err(Error::TagMismatch(_))));
        assert!(matches!(load("R(A:text)", "R", "_id,A\n1,x\n1,y\n"), Err(Error::DuplicateId { id: 1, .. })));
        assert!(matches!(load("R(A:text,B:text)", "R", "A,B\na\n"), Err(Error::Csv { .. })));
        assert!(matches!(load("R(A:text)", "R", "A,B\na,b\n"), Err(Error::Csv { .. })));
        assert!(matches!(load("R(A:text", "R", "A\n"), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn schema_comments_and_tags() {
        let s = Schema::parse("# people\nP(Name:text, Age:int) # trailing\n\nQ(X:text)\n").unwrap();
        assert_eq!(s.relations().len(), 2);
        assert_eq!(s.tag(s.attr_ref("P", "Age").unwrap()), ValueTag::Int);
    }

    #[test]
    fn cross_tag_comparison_is_an_error() {
        assert!(Value::Int(1).try_cmp(&Value::text("1")).is_err());
        assert_eq!(Value::Int(2).try_cmp(&Value::Int(10)).unwrap(), Ordering::Less);
        assert_eq!(Value::text("b").try_cmp(&Value::text("ab")).unwrap(), Ordering::Greater);
    }

    #[test]
    fn diff_counts_changed_cells() {
        let schema = "R(A:text,B:text,C:text)";
        let d = load(schema, "R", "A,B,C\na,b,d\na,c,e\na,b,e\n").unwrap();
        let d1 = load(schema, "R", "A,B,C\na,b,d\na,b,d\na,b,d\n").unwrap();
        let d2 = load(schema, "R", "A,B,C\na,b,e\na,b,e\na,b,e\n").unwrap();
        assert!(diff(&d, &d).unwrap().is_empty());
        let c2 = diff(&d, &d2).unwrap();
        assert_eq!(c2.iter().copied().collect::<Vec<_>>(), vec![Position::new(0, 0, 2), Position::new(0, 1, 1)]);
        assert_eq!(diff(&d, &d1).unwrap().len(), 3);
    }

    #[test]
    fn diff_rejects_mismatched_ids() {
        let d = load("R(A:text)", "R", "A\nx\ny\n").unwrap();
        let e = load("R(A:text)", "R", "A\nx\n").unwrap();
        assert!(matches!(diff(&d, &e), Err(Error::Incomparable(_))));
    }

    #[test]
    fn csv_round_trip() {
        let src = "_id,A,B\n0,a,1\n3,\"x,y\",-2\n7,b,5\n";
        let d = load("R(A:text,B:int)", "R", src).unwrap();
        assert_eq!(d.to_csv_string(0), src);
    }
}
