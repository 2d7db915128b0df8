//! `mdresolve`: classify MD sets, resolve instances, enumerate MRIs and
//! answer queries from the command line. Results go to stdout as JSON;
//! errors go to stderr as `{"error": kind, "message": text}`.

mod output;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Value as Json};

use mdresolve::closure::{attribute_closure, tuple_attribute_closure, tuple_closure};
use mdresolve::cqa::{reduction_report, KeyConstraint};
use mdresolve::instance::{load_csv_with_schema, Instance, Schema, Value};
use mdresolve::mdspec::{parse_mds, MdClass, MdSet};
use mdresolve::query::{parse_query, resolved_answers, rewrite, rewrite_obstacle, ConjunctiveQuery, Strategy};
use mdresolve::resolve::{
    chase, check_fan_semantics, check_pair, compute_mris, oracle_explore, step_bound, HighestLevel, ResolutionResult,
};
use mdresolve::workload::{self, Template};
use mdresolve::Error;

use output::{attr_list, instance_json, position, tuple, write_instance_csv};

#[derive(Parser)]
#[command(name = "mdresolve", version, about = "Matching-dependency resolution and resolved query answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// Schema declaration, one `R(A:text, B:int)` per line
    #[arg(long)]
    schema: PathBuf,
    /// Directory holding one `<relation>.csv` per relation
    #[arg(long)]
    data: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Auto,
    Enumerate,
    Rewrite,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    ClosedForm,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateArg {
    NonInteracting,
    SimpleCycle,
    Hsc,
}

#[derive(Subcommand)]
enum Command {
    /// Classify an MD set by the shape of its MD graph
    Classify {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        mds: PathBuf,
        /// Also print edges, simple cycles and changeable attributes
        #[arg(long)]
        detail: bool,
    },
    /// Print the attribute, tuple and tuple-attribute closures
    Closure {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        mds: PathBuf,
    },
    /// Chase the instance to one resolved instance
    Resolve {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        mds: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
        /// Include every intermediate instance
        #[arg(long)]
        trace: bool,
        /// Write the result as CSV files into this directory
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Enumerate the minimally resolved instances
    Mris {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        mds: PathBuf,
        #[arg(long, default_value_t = mdresolve::resolve::DEFAULT_LIMIT)]
        limit: usize,
        /// Search depth when the exhaustive search is used
        #[arg(long, default_value_t = mdresolve::query::ORACLE_DEPTH)]
        depth: usize,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Write each MRI as CSV files into `<out>/mri_<k>/`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resolved answers of a conjunctive query
    Answer {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        mds: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
        strategy: StrategyArg,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Rewrite a query so that it returns resolved answers
    Rewrite {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        mds: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// Print the rewritten formula as text only
        #[arg(long)]
        emit_text: bool,
    },
    /// Exhaustive search for resolved instances, compared with the closed form.
    /// With `--template`, runs seeded random trials instead.
    OracleCheck {
        #[arg(long, requires_all = ["data", "mds"], conflicts_with = "template")]
        schema: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        mds: Option<PathBuf>,
        #[arg(long, default_value_t = mdresolve::query::ORACLE_DEPTH)]
        depth: usize,
        #[arg(long, value_enum, required_unless_present = "schema")]
        template: Option<TemplateArg>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Random trials of the reduction to consistent answers under a key
    CqaCheck {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        mds: PathBuf,
        /// Query to compare; random ucaj queries when absent
        #[arg(long)]
        query: Option<PathBuf>,
        /// Draw values from the active domain of this instance
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        max_tuples: usize,
    },
    /// Compare two instances under both MD satisfaction notions
    CheckFanSemantics {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Directory with the second instance
        #[arg(long)]
        data2: PathBuf,
        #[arg(long)]
        mds: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Domain(e)
    }
}

type Outcome = Result<Output, Failure>;

enum Output {
    Json(Json),
    Text(String),
    /// Printed, then the process exits with status 1.
    FailedCheck(Json),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MDRESOLVE_LOG", "off")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Output::Json(j)) => {
            emit(&pretty(&j));
            ExitCode::SUCCESS
        }
        Ok(Output::Text(t)) => {
            emit(&t);
            ExitCode::SUCCESS
        }
        Ok(Output::FailedCheck(j)) => {
            emit(&pretty(&j));
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("{}", json!({ "error": "usage", "message": m }));
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn pretty(j: &Json) -> String {
    serde_json::to_string_pretty(j).expect("json values serialize") + "\n"
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(s: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(s.as_bytes()).and_then(|_| out.flush());
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_schema(path: &Path) -> Result<Arc<Schema>, Failure> {
    Ok(Arc::new(Schema::parse(&read(path)?)?))
}

fn load_instance(schema: &Arc<Schema>, dir: &Path) -> Result<Instance, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Usage(format!("{}: not a directory", dir.display())));
    }
    let mut sources = BTreeMap::new();
    for r in schema.relations() {
        let p = dir.join(format!("{}.csv", r.name));
        if p.exists() {
            sources.insert(r.name.clone(), File::open(&p).map_err(Error::Io)?);
        }
    }
    Ok(load_csv_with_schema(schema.clone(), sources)?)
}

fn load_all(inst: &InstanceArgs, mds: &Path) -> Result<(Instance, MdSet), Failure> {
    let schema = load_schema(&inst.schema)?;
    let m = parse_mds(&read(mds)?, &schema)?;
    let d = load_instance(&schema, &inst.data)?;
    info!("loaded {} tuples, {} MDs ({})", d.total_tuples(), m.len(), m.classify());
    Ok((d, m))
}

fn load_query(path: &Path, schema: &Arc<Schema>) -> Result<ConjunctiveQuery, Failure> {
    Ok(parse_query(&read(path)?, schema)?)
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Classify { schema, mds, detail } => {
            let schema = load_schema(&schema)?;
            let m = parse_mds(&read(&mds)?, &schema)?;
            let mut out = json!({ "class": m.classify() });
            if detail {
                out["mds"] = json!(m.display().lines().collect::<Vec<_>>());
                out["edges"] = json!(m.edges());
                out["simple_cycles"] = json!(m.simple_cycles());
                out["changeable"] = json!(attr_list(&schema, m.changeable_attrs()));
            }
            Ok(Output::Json(out))
        }
        Command::Closure { inst, mds } => {
            let (d, m) = load_all(&inst, &mds)?;
            let schema = d.schema();
            let at: Vec<Json> =
                attribute_closure(&m).classes().iter().map(|c| json!(attr_list(schema, c.iter().copied()))).collect();
            let tc: Vec<Json> = m
                .mds()
                .iter()
                .enumerate()
                .map(|(i, md)| {
                    let classes: Vec<Vec<String>> = tuple_closure(&d, md)
                        .classes()
                        .iter()
                        .filter(|c| c.len() > 1)
                        .map(|c| c.iter().map(|t| tuple(schema, *t)).collect())
                        .collect();
                    json!({ "md": i, "classes": classes })
                })
                .collect();
            let hsc_mode = m.classify() != MdClass::NonInteracting;
            let ta = match tuple_attribute_closure(&d, &m, hsc_mode) {
                Ok(p) => {
                    let classes: Vec<Vec<String>> = p
                        .classes()
                        .iter()
                        .filter(|c| c.len() > 1)
                        .map(|c| c.iter().map(|q| position(schema, *q)).collect())
                        .collect();
                    json!({ "hsc_mode": hsc_mode, "classes": classes })
                }
                Err(e) => json!({ "unavailable": e.to_string() }),
            };
            Ok(Output::Json(json!({
                "attribute_closure": at,
                "tuple_closures": tc,
                "tuple_attribute_closure": ta,
            })))
        }
        Command::Resolve { inst, mds, max_steps, trace, out, format } => {
            let (d, m) = load_all(&inst, &mds)?;
            let t = chase(&d, &m, &HighestLevel, max_steps)?;
            let result = t.result();
            if let Some(dir) = &out {
                write_instance_csv(result, dir).map_err(Error::Io)?;
            }
            if let Format::Csv = format {
                let mut s = String::new();
                for rel in 0..result.schema().relations().len() {
                    s.push_str(&format!("# {}\n", result.schema().relation(rel).name));
                    s.push_str(&result.to_csv_string(rel));
                }
                return Ok(Output::Text(s));
            }
            let changes = mdresolve::instance::diff(&d, result)?;
            let mut j = json!({
                "steps": t.steps(),
                "step_bound": step_bound(&d, &m),
                "level_sums": t.level_sums,
                "changes": changes.iter().map(|p| position(d.schema(), *p)).collect::<Vec<_>>(),
                "instance": instance_json(result),
            });
            if trace {
                j["trace"] = json!(t
                    .states
                    .iter()
                    .zip(&t.level_sums)
                    .enumerate()
                    .map(|(i, (s, l))| json!({ "step": i, "level_sum": l, "instance": instance_json(s) }))
                    .collect::<Vec<_>>());
            }
            Ok(Output::Json(j))
        }
        Command::Mris { inst, mds, limit, depth, method, out } => {
            if limit == 0 || depth == 0 {
                return Err(Failure::Usage("--limit and --depth must be positive".into()));
            }
            let (d, m) = load_all(&inst, &mds)?;
            let class = m.classify();
            let use_oracle = match method {
                Method::ClosedForm => false,
                Method::Oracle => true,
                Method::Auto => !class.is_hsc_family(),
            };
            let (r, method_name, exhausted) = if use_oracle {
                let rep = oracle_explore(&d, &m, depth)?;
                (rep.result, "oracle", Some(rep.exhausted))
            } else {
                (compute_mris(&d, &m, limit)?, "closed_form", None)
            };
            if let Some(dir) = &out {
                for (k, mri) in r.mris.iter().enumerate() {
                    write_instance_csv(mri, &dir.join(format!("mri_{k}"))).map_err(Error::Io)?;
                }
            }
            let mut j = mris_json(&d, &r);
            j["class"] = json!(class);
            j["method"] = json!(method_name);
            if let Some(e) = exhausted {
                j["exhausted"] = json!(e);
            }
            Ok(Output::Json(j))
        }
        Command::Answer { inst, mds, query, strategy, format } => {
            let (d, m) = load_all(&inst, &mds)?;
            let q = load_query(&query, d.schema())?;
            let st = match strategy {
                StrategyArg::Enumerate => Strategy::Enumerate,
                StrategyArg::Rewrite => Strategy::Rewrite,
                StrategyArg::Auto => {
                    if rewrite_obstacle(&q, &m).is_none() {
                        Strategy::Rewrite
                    } else {
                        Strategy::Enumerate
                    }
                }
            };
            let answers = match resolved_answers(&q, &d, &m, st) {
                Err(e) if matches!(strategy, StrategyArg::Auto) => {
                    return Err(Error::NoStrategy(e.to_string()).into());
                }
                r => r?,
            };
            if let Format::Csv = format {
                let mut s = q.head.join(",") + "\n";
                for a in &answers {
                    s.push_str(&a.iter().map(Value::to_string).collect::<Vec<_>>().join(","));
                    s.push('\n');
                }
                return Ok(Output::Text(s));
            }
            Ok(Output::Json(json!({
                "strategy": match st { Strategy::Rewrite => "rewrite", _ => "enumerate" },
                "head": q.head,
                "count": answers.len(),
                "answers": answers,
            })))
        }
        Command::Rewrite { schema, mds, query, emit_text } => {
            let schema = load_schema(&schema)?;
            let m = parse_mds(&read(&mds)?, &schema)?;
            let q = load_query(&query, &schema)?;
            let rq = rewrite(&q, &m)?;
            if emit_text {
                return Ok(Output::Text(format!("{rq}\n")));
            }
            Ok(Output::Json(output::rewritten_json(&q, &rq)))
        }
        Command::OracleCheck { schema, data, mds, depth, template, trials, seed } => match template {
            Some(t) => Ok(random_oracle_trials(t, trials, seed, depth)),
            None => {
                let inst = InstanceArgs { schema: schema.expect("clap"), data: data.expect("clap") };
                let (d, m) = load_all(&inst, &mds.expect("clap"))?;
                oracle_check(&d, &m, depth)
            }
        },
        Command::CqaCheck { schema, mds, query, data, trials, seed, max_tuples } => {
            let schema = load_schema(&schema)?;
            let m = parse_mds(&read(&mds)?, &schema)?;
            if m.len() != 1 {
                return Err(Error::ReductionShape(format!("expected one MD, found {}", m.len())).into());
            }
            let md = m.mds()[0].clone();
            KeyConstraint::from_md(&md, schema.relation(md.left_rel).arity())?;
            let fixed = query.map(|p| load_query(&p, &schema)).transpose()?;
            let domains = match data {
                Some(dir) => {
                    let d = load_instance(&schema, &dir)?;
                    Some(active_domains(&d))
                }
                None => None,
            };
            let mut r = workload::rng(seed);
            let mut rows = Vec::new();
            let mut failed = 0;
            for trial in 0..trials {
                let d = match &domains {
                    Some(dom) => workload::random_instance_over(&schema, &mut r, max_tuples, dom),
                    None => workload::random_instance(&schema, &mut r, max_tuples, 3),
                };
                let q = match &fixed {
                    Some(q) => q.clone(),
                    None => workload::random_ucaj_query(&m, &mut r, 3),
                };
                let rep = reduction_report(&d, &md, &q)?;
                if !rep.holds() {
                    failed += 1;
                }
                rows.push(json!({
                    "trial": trial,
                    "pass": rep.holds(),
                    "tuples": d.total_tuples(),
                    "query": q.to_string(),
                    "mris": rep.mris,
                    "repairs": rep.repairs,
                    "same_instances": rep.sets_equal,
                    "resolved_answers": rep.resolved.len(),
                    "consistent_answers": rep.consistent.len(),
                }));
            }
            let j = json!({ "trials": rows, "passed": trials - failed, "failed": failed });
            Ok(if failed == 0 { Output::Json(j) } else { Output::FailedCheck(j) })
        }
        Command::CheckFanSemantics { inst, data2, mds } => {
            let (d, m) = load_all(&inst, &mds)?;
            let d2 = load_instance(d.schema(), &data2)?;
            let schema = d.schema();
            let fan: Vec<Json> = check_fan_semantics(&d, &d2, &m)?
                .iter()
                .map(|v| {
                    json!({
                        "md": v.md,
                        "left": tuple(schema, v.left),
                        "right": tuple(schema, v.right),
                        "condition": format!("{:?}", v.condition),
                    })
                })
                .collect();
            let ours = check_pair(&d, &d2, &m)?;
            Ok(Output::Json(json!({
                "fan_satisfied": fan.is_empty(),
                "fan_violations": fan,
                "satisfied": ours.verdict(),
                "violations": ours.violations.iter().map(|v| output::violation_json(schema, v)).collect::<Vec<_>>(),
            })))
        }
    }
}

fn mris_json(d: &Instance, r: &ResolutionResult) -> Json {
    let list: Vec<Json> = r
        .mris
        .iter()
        .zip(&r.changes)
        .map(|(mri, ch)| {
            json!({
                "changes": ch.iter().map(|p| position(d.schema(), *p)).collect::<Vec<_>>(),
                "instance": instance_json(mri),
            })
        })
        .collect();
    json!({
        "count": r.mris.len(),
        "min_changes": r.min_changes,
        "truncated": r.truncated,
        "mris": list,
    })
}

fn oracle_check(d: &Instance, m: &MdSet, depth: usize) -> Outcome {
    let rep = oracle_explore(d, m, depth)?;
    let mri_set: std::collections::HashSet<&Instance> = rep.result.mris.iter().collect();
    let resolved: Vec<Json> = rep
        .resolved
        .iter()
        .map(|(s, k)| json!({ "changes": k, "is_mri": mri_set.contains(s), "instance": instance_json(s) }))
        .collect();
    let closed = closed_form_status(d, m, &rep.result);
    let mut j = mris_json(d, &rep.result);
    j["class"] = json!(m.classify());
    j["resolved"] = json!(resolved);
    j["states_explored"] = json!(rep.states_explored);
    j["exhausted"] = json!(rep.exhausted);
    j["active_domain_relative"] = json!(rep.active_domain_relative);
    j["closed_form"] = json!(closed);
    Ok(Output::Json(j))
}

/// `agrees`, `disagrees`, `violated` or `unsupported`.
fn closed_form_status(d: &Instance, m: &MdSet, oracle: &ResolutionResult) -> &'static str {
    match compute_mris(d, m, mdresolve::resolve::DEFAULT_LIMIT) {
        Ok(r) => {
            let a: std::collections::HashSet<&Instance> = r.mris.iter().collect();
            let b: std::collections::HashSet<&Instance> = oracle.mris.iter().collect();
            if a == b {
                "agrees"
            } else {
                "disagrees"
            }
        }
        Err(Error::ClosedFormViolated { .. }) => "violated",
        Err(_) => "unsupported",
    }
}

fn random_oracle_trials(t: TemplateArg, trials: usize, seed: u64, depth: usize) -> Output {
    let template = match t {
        TemplateArg::NonInteracting => Template::NonInteracting,
        TemplateArg::SimpleCycle => Template::SimpleCycle,
        TemplateArg::Hsc => Template::Hsc,
    };
    let mut r = workload::rng(seed);
    let mut rows = Vec::new();
    let mut failed = 0;
    for trial in 0..trials {
        let m = workload::random_md_set(template, &mut r, 3).expect("templates parse");
        let d = workload::random_instance(m.schema(), &mut r, 6, 3);
        let status = match oracle_explore(&d, &m, depth) {
            Ok(rep) => closed_form_status(&d, &m, &rep.result),
            Err(_) => "guard_exceeded",
        };
        if status != "agrees" {
            failed += 1;
        }
        rows.push(json!({
            "trial": trial,
            "pass": status == "agrees",
            "status": status,
            "mds": m.display().lines().collect::<Vec<_>>(),
            "tuples": d.total_tuples(),
        }));
    }
    let j = json!({ "trials": rows, "passed": trials - failed, "failed": failed });
    if failed == 0 {
        Output::Json(j)
    } else {
        Output::FailedCheck(j)
    }
}

/// Distinct values of every attribute, per relation.
fn active_domains(d: &Instance) -> Vec<Vec<Vec<Value>>> {
    let schema = d.schema();
    (0..schema.relations().len())
        .map(|rel| {
            (0..schema.relation(rel).arity())
                .map(|attr| {
                    let a = mdresolve::instance::AttrRef { rel, attr };
                    let mut vals: Vec<Value> = d.attr_positions(a).map(|p| d.value(p).clone()).collect();
                    vals.sort();
                    vals.dedup();
                    vals
                })
                .collect()
        })
        .collect()
}
