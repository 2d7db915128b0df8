//! JSON shapes and CSV writing shared by the subcommands.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Map, Value as Json};

use mdresolve::instance::{AttrRef, Instance, Position, Schema, TupleRef, ID_COLUMN};
use mdresolve::query::{Block, ConjunctiveQuery, RewrittenQuery, Term};
use mdresolve::resolve::Violation;

pub fn tuple(schema: &Schema, t: TupleRef) -> String {
    format!("{}#{}", schema.relation(t.rel).name, t.id)
}

pub fn position(schema: &Schema, p: Position) -> String {
    format!("{}#{}", schema.attr_name(p.attr_ref()), p.tuple.id)
}

pub fn attr_list(schema: &Schema, attrs: impl IntoIterator<Item = AttrRef>) -> Vec<String> {
    attrs.into_iter().map(|a| schema.attr_name(a)).collect()
}

/// `{relation: {"columns": ["_id", ...], "rows": [[id, ...], ...]}}`
pub fn instance_json(d: &Instance) -> Json {
    let schema = d.schema();
    let mut out = Map::new();
    for (rel, rs) in schema.relations().iter().enumerate() {
        let mut columns = vec![ID_COLUMN.to_string()];
        columns.extend(rs.attrs.iter().map(|a| a.name.clone()));
        let rows: Vec<Json> = d
            .tuples(rel)
            .map(|(id, vals)| {
                let mut row = vec![json!(id)];
                row.extend(vals.iter().map(|v| json!(v)));
                Json::Array(row)
            })
            .collect();
        out.insert(rs.name.clone(), json!({ "columns": columns, "rows": rows }));
    }
    Json::Object(out)
}

pub fn write_instance_csv(d: &Instance, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (rel, rs) in d.schema().relations().iter().enumerate() {
        fs::write(dir.join(format!("{}.csv", rs.name)), d.to_csv_string(rel))?;
    }
    Ok(())
}

fn terms(ts: &[Term]) -> Vec<String> {
    ts.iter().map(Term::to_string).collect()
}

pub fn rewritten_json(q: &ConjunctiveQuery, rq: &RewrittenQuery) -> Json {
    let schema = rq.schema();
    let blocks: Vec<Json> = rq
        .blocks
        .iter()
        .map(|b| match b {
            Block::Plain(a) => json!({
                "kind": "plain",
                "atom": format!("{}({})", schema.relation(a.rel).name, terms(&a.terms).join(",")),
            }),
            Block::Expanded(e) => {
                let checks: Vec<Json> = e
                    .checks
                    .iter()
                    .map(|c| {
                        json!({
                            "attribute": schema.attr_name(c.attr),
                            "target": c.target.to_string(),
                            "challenger": c.challenger,
                            "members": c.sums.iter().map(|t| schema.attr_name(t.member)).collect::<Vec<_>>(),
                        })
                    })
                    .collect();
                json!({
                    "kind": "expanded",
                    "atom": format!("{}({})", schema.relation(e.renamed.rel).name, terms(&e.renamed.terms).join(",")),
                    "fresh": e.fresh,
                    "checks": checks,
                })
            }
        })
        .collect();
    let classes: Vec<Vec<String>> = rq.self_join_classes.iter().map(|c| attr_list(schema, c.iter().copied())).collect();
    json!({
        "query": q.to_string(),
        "rewritten": rq.to_string(),
        "head": rq.head,
        "bound": rq.bound,
        "hsc_mode": rq.hsc_mode,
        "count_terms": rq.count_terms(),
        "self_join_classes": classes,
        "blocks": blocks,
    })
}

pub fn violation_json(schema: &Schema, v: &Violation) -> Json {
    match v {
        Violation::UnequalMatch { md, left, right, pair } => json!({
            "kind": "unequal_match",
            "md": md,
            "left": tuple(schema, *left),
            "right": tuple(schema, *right),
            "attributes": [schema.attr_name(pair.left), schema.attr_name(pair.right)],
        }),
        Violation::IllegalChange { position: p } => json!({
            "kind": "illegal_change",
            "position": position(schema, *p),
        }),
    }
}
