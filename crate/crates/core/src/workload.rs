//! Seeded random instances, MD sets and queries for property checks and
//! benchmarks. All attributes draw from one small pool of values
//! (`v0`, `v1`, ...), so cross-attribute similarities can fire.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::instance::{Instance, InstanceBuilder, Schema, Value};
use crate::mdspec::{parse_mds, MatchingDependency, MdClass, MdSet};
use crate::query::{is_ucaj, parse_query, ConjunctiveQuery};

pub type WorkloadRng = ChaCha8Rng;

pub fn rng(seed: u64) -> WorkloadRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    NonInteracting,
    SimpleCycle,
    Hsc,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::NonInteracting, Template::SimpleCycle, Template::Hsc];

    pub fn class(self) -> MdClass {
        match self {
            Template::NonInteracting => MdClass::NonInteracting,
            Template::SimpleCycle => MdClass::SimpleCycle,
            Template::Hsc => MdClass::Hsc,
        }
    }
}

/// A schema with MD lines; each line carries its number of LHS pairs.
struct Shape {
    schema: &'static str,
    mds: &'static [(&'static str, usize)],
}

const NON_INTERACTING: &[Shape] = &[
    Shape { schema: "R(A:text,B:text,C:text)", mds: &[("R[A]~R[A] -> R[B]<=>R[B]", 1)] },
    Shape { schema: "R(A:text,B:text,C:text)", mds: &[("R[A]~R[A] -> R[B,C]<=>R[B,C]", 1)] },
    Shape { schema: "R(A:text,B:text,C:text)", mds: &[("R[A,B]~R[A,B] -> R[C]<=>R[C]", 2)] },
    Shape {
        schema: "R(A:text,B:text,C:text)",
        mds: &[("R[A]~R[A] -> R[C]<=>R[C]", 1), ("R[B]~R[B] -> R[C]<=>R[C]", 1)],
    },
    Shape { schema: "R(A:text,B:text)\nS(C:text,D:text)", mds: &[("R[A]~S[C] -> R[B]<=>S[D]", 1)] },
    Shape {
        schema: "R(A:text,B:text)\nS(C:text,D:text)",
        mds: &[("R[A]~S[C] -> R[B]<=>S[D]", 1), ("S[C]~S[C] -> S[D]<=>S[D]", 1)],
    },
];

const SIMPLE_CYCLE: &[Shape] = &[
    Shape {
        schema: "R(A:text,B:text,C:text)",
        mds: &[("R[A]~R[A] -> R[B]<=>R[B]", 1), ("R[B]~R[B] -> R[A]<=>R[A]", 1)],
    },
    Shape {
        schema: "R(A:text,B:text)\nS(C:text,D:text)",
        mds: &[("R[A]~S[C] -> R[B]<=>S[D]", 1), ("R[B]~S[D] -> R[A]<=>S[C]", 1)],
    },
    Shape {
        schema: "R(A:text,B:text,C:text)",
        mds: &[("R[A]~R[A] -> R[B,C]<=>R[B,C]", 1), ("R[B,C]~R[B,C] -> R[A]<=>R[A]", 2)],
    },
];

const HSC: &[Shape] = &[
    Shape {
        schema: "R(A:text,B:text,C:text)",
        mds: &[("R[A]~R[A] -> R[B,C]<=>R[B,C]", 1), ("R[B]~R[B] -> R[A]<=>R[A]", 1), ("R[C]~R[C] -> R[A]<=>R[A]", 1)],
    },
    Shape {
        schema: "R(A:text,B:text)\nS(C:text,D:text)",
        mds: &[("R[A]~R[A] -> R[B]<=>R[B]", 1), ("R[B]~R[B] -> R[A]<=>R[A]", 1), ("S[C]~S[C] -> S[D]<=>S[D]", 1)],
    },
];

/// Reduction-shaped MDs: equality LHS, both sides partitioning the attributes.
const KEYED: &[(&str, &str)] = &[
    ("R(A:text,B:text)", "R[A]=R[A] -> R[B]<=>R[B]"),
    ("R(A:text,B:text,C:text)", "R[A]=R[A] -> R[B,C]<=>R[B,C]"),
    ("R(A:text,B:text,C:text)", "R[A,B]=R[A,B] -> R[C]<=>R[C]"),
];

fn value(i: usize) -> String {
    format!("v{i}")
}

/// Equality or a single stipulated pair over the value pool.
fn random_sim(rng: &mut WorkloadRng, pool: usize) -> String {
    if rng.gen_bool(0.5) {
        "eq".to_string()
    } else {
        let a = rng.gen_range(0..pool);
        let mut b = rng.gen_range(0..pool - 1);
        if b >= a {
            b += 1;
        }
        format!("pairs{{{}~{}}}", value(a), value(b))
    }
}

/// A random MD set of `template`'s class over one of its schemas.
pub fn random_md_set(template: Template, rng: &mut WorkloadRng, pool: usize) -> Result<MdSet> {
    let shapes = match template {
        Template::NonInteracting => NON_INTERACTING,
        Template::SimpleCycle => SIMPLE_CYCLE,
        Template::Hsc => HSC,
    };
    let shape = shapes.choose(rng).expect("non-empty");
    let schema = Arc::new(Schema::parse(shape.schema)?);
    let lines: Vec<String> = shape
        .mds
        .iter()
        .map(|(line, n)| {
            let sims: Vec<String> = (0..*n).map(|_| random_sim(rng, pool)).collect();
            format!("{line} sim {}", sims.join(", "))
        })
        .collect();
    parse_mds(&lines.join("\n"), &schema)
}

/// Between one and `max_tuples` tuples spread over the relations; each
/// attribute draws from its own 2- or 3-value slice of the pool.
pub fn random_instance(schema: &Arc<Schema>, rng: &mut WorkloadRng, max_tuples: usize, pool: usize) -> Instance {
    let domains: Vec<Vec<Vec<Value>>> = schema
        .relations()
        .iter()
        .map(|r| {
            (0..r.arity())
                .map(|_| {
                    let k = rng.gen_range(2..=3.min(pool));
                    let mut all: Vec<usize> = (0..pool).collect();
                    all.shuffle(rng);
                    all.into_iter().take(k).map(|i| Value::text(value(i))).collect()
                })
                .collect()
        })
        .collect();
    random_instance_over(schema, rng, max_tuples, &domains)
}

/// Between one and `max_tuples` tuples, attribute values drawn from
/// `domains[rel][attr]`. Relations with an empty domain get no tuples.
pub fn random_instance_over(
    schema: &Arc<Schema>,
    rng: &mut WorkloadRng,
    max_tuples: usize,
    domains: &[Vec<Vec<Value>>],
) -> Instance {
    let usable: Vec<usize> =
        (0..schema.relations().len()).filter(|&r| domains[r].iter().all(|d| !d.is_empty())).collect();
    let mut b = InstanceBuilder::new(schema.clone());
    if usable.is_empty() {
        return b.finish();
    }
    let n = rng.gen_range(1..=max_tuples.max(1));
    for _ in 0..n {
        let rel = *usable.choose(rng).expect("non-empty");
        let row: Vec<Value> = domains[rel].iter().map(|dom| dom.choose(rng).expect("non-empty").clone()).collect();
        let id = b.next_id(rel);
        b.insert(rel, id, row).expect("row fits its schema");
    }
    b.finish()
}

/// An instance of one relation with `n` tuples whose attribute values come
/// from `domain` distinct values each; used for scaling measurements.
pub fn scaled_instance(schema: &Arc<Schema>, rel: usize, n: usize, domain: usize, rng: &mut WorkloadRng) -> Instance {
    let arity = schema.relation(rel).arity();
    let mut b = InstanceBuilder::new(schema.clone());
    for id in 0..n as u64 {
        let row = (0..arity).map(|_| Value::text(value(rng.gen_range(0..domain)))).collect();
        b.insert(rel, id, row).expect("row fits its schema");
    }
    b.finish()
}

/// A random query on the MD set's schema that is ucaj for it: one or two
/// atoms, shared variables, occasional constants, random head.
pub fn random_ucaj_query(mds: &MdSet, rng: &mut WorkloadRng, pool: usize) -> ConjunctiveQuery {
    let schema = mds.schema();
    loop {
        let atoms = rng.gen_range(1..=2);
        let mut vars: Vec<String> = Vec::new();
        let mut parts = Vec::new();
        for _ in 0..atoms {
            let rel = rng.gen_range(0..schema.relations().len());
            let rs = schema.relation(rel);
            let args: Vec<String> = (0..rs.arity())
                .map(|_| {
                    let roll = rng.gen_range(0..10);
                    if roll == 0 {
                        format!("'{}'", value(rng.gen_range(0..pool)))
                    } else if roll <= 2 && !vars.is_empty() {
                        vars.choose(rng).expect("non-empty").clone()
                    } else {
                        let v = format!("x{}", vars.len());
                        vars.push(v.clone());
                        v
                    }
                })
                .collect();
            parts.push(format!("{}({})", rs.name, args.join(",")));
        }
        let head: Vec<&String> = vars.iter().filter(|_| rng.gen_bool(0.6)).collect();
        let head: Vec<&str> = head.iter().map(|s| s.as_str()).collect();
        let text = format!("Q({}) :- {}", head.join(","), parts.join(", "));
        let q = parse_query(&text, schema).expect("generated query parses");
        if is_ucaj(&q, mds).ok {
            return q;
        }
    }
}

/// An MD of the key-reduction shape and a random instance for it.
pub fn random_keyed_case(
    rng: &mut WorkloadRng,
    max_tuples: usize,
    pool: usize,
) -> Result<(Instance, MatchingDependency)> {
    let (schema, md) = KEYED.choose(rng).expect("non-empty");
    let schema = Arc::new(Schema::parse(schema)?);
    let mds = parse_mds(md, &schema)?;
    let d = random_instance(&schema, rng, max_tuples, pool);
    Ok((d, mds.mds()[0].clone()))
}

/// The reduction-shape MD set over `d`'s schema, for query generation.
pub fn keyed_md_set(d: &Instance, md: &MatchingDependency) -> Result<MdSet> {
    MdSet::new(d.schema().clone(), vec![md.clone()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_have_their_class() {
        let mut r = rng(7);
        for t in Template::ALL {
            for _ in 0..20 {
                let m = random_md_set(t, &mut r, 3).unwrap();
                assert_eq!(m.classify(), t.class(), "{}", m.display());
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let gen = |seed| {
            let mut r = rng(seed);
            let m = random_md_set(Template::NonInteracting, &mut r, 3).unwrap();
            let d = random_instance(m.schema(), &mut r, 6, 3);
            let q = random_ucaj_query(&m, &mut r, 3);
            (m.display(), d, q.to_string())
        };
        assert_eq!(gen(42), gen(42));
    }

    #[test]
    fn instances_respect_bounds() {
        let mut r = rng(1);
        let s = Arc::new(Schema::parse("R(A:text,B:text,C:text)").unwrap());
        for _ in 0..50 {
            let d = random_instance(&s, &mut r, 6, 3);
            assert!((1..=6).contains(&d.total_tuples()));
            for a in s.all_attrs() {
                let vals: std::collections::BTreeSet<_> = d.attr_positions(a).map(|p| d.value(p).clone()).collect();
                assert!(vals.len() <= 3);
            }
        }
    }

    #[test]
    fn keyed_cases_are_in_shape() {
        let mut r = rng(3);
        for _ in 0..10 {
            let (d, md) = random_keyed_case(&mut r, 6, 3).unwrap();
            let arity = d.schema().relation(md.left_rel).arity();
            assert!(crate::cqa::KeyConstraint::from_md(&md, arity).is_ok());
        }
    }
}
